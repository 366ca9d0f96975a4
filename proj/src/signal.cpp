#include "fcd/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fcd {

double population_std(std::span<const double> values) {
    if (values.empty()) return 0.0;
    double mean = std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
    double acc = 0.0;
    for (double v : values) acc += (v - mean) * (v - mean);
    return std::sqrt(acc / double(values.size()));
}

Signal prepare_signal(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw Error(ErrorCode::InvalidSignal, "x and y lengths differ");
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
            throw Error(ErrorCode::InvalidSignal, "non-finite value at index " + std::to_string(i),
                        static_cast<long>(i));

    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

    Signal out;
    out.x.reserve(x.size());
    out.y.reserve(x.size());
    std::size_t i = 0;
    while (i < order.size()) {
        double xv = x[order[i]];
        double sum = 0.0;
        std::size_t count = 0;
        while (i < order.size() && x[order[i]] == xv) {
            sum += y[order[i]];
            ++count;
            ++i;
        }
        out.x.push_back(xv);
        out.y.push_back(sum / double(count));
    }

    if (out.size() < 2)
        throw Error(ErrorCode::TooFewPoints, "need at least 2 distinct x values, got " +
                                                 std::to_string(out.size()));
    return out;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

namespace {

constexpr double kDegenerateFraction = 1e-12;

// scale factor for one axis; sets the degenerate flag
double axis_scale(std::span<const double> values, double mean, double n_sf, bool& degenerate) {
    double sigma = population_std(values);
    if (sigma < kDegenerateFraction * std::max(1.0, std::fabs(mean))) {
        degenerate = true;
        return 1.0;
    }
    degenerate = false;
    return sigma / n_sf;
}

}  // namespace

std::pair<Signal, NormalizationState> normalize(const Signal& signal, double s_f) {
    if (signal.size() < 2) throw Error(ErrorCode::TooFewPoints, "signal shorter than 2 points");
    if (!(s_f > 0.0)) throw Error(ErrorCode::InvalidSignal, "s_f must be positive");
    for (std::size_t i = 0; i < signal.size(); ++i)
        if (!std::isfinite(signal.x[i]) || !std::isfinite(signal.y[i]))
            throw Error(ErrorCode::InvalidSignal, "non-finite value at index " + std::to_string(i),
                        static_cast<long>(i));

    NormalizationState state;
    state.s_f = s_f;
    double n_sf = double(signal.size()) * s_f;
    state.mu_x = std::accumulate(signal.x.begin(), signal.x.end(), 0.0) / double(signal.size());
    state.mu_y = std::accumulate(signal.y.begin(), signal.y.end(), 0.0) / double(signal.size());
    state.sigma_x = axis_scale(signal.x, state.mu_x, n_sf, state.degenerate_x);
    state.sigma_y = axis_scale(signal.y, state.mu_y, n_sf, state.degenerate_y);

    Signal out;
    out.x.resize(signal.size());
    out.y.resize(signal.size());
    for (std::size_t i = 0; i < signal.size(); ++i) {
        out.x[i] = (signal.x[i] - state.mu_x) / state.sigma_x;
        out.y[i] = (signal.y[i] - state.mu_y) / state.sigma_y;
    }
    return {std::move(out), state};
}

double denormalize_value(double z, const NormalizationState& state, Axis axis) {
    return axis == Axis::X ? z * state.sigma_x + state.mu_x : z * state.sigma_y + state.mu_y;
}

std::vector<double> denormalize(std::span<const double> z, const NormalizationState& state,
                                Axis axis) {
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = denormalize_value(z[i], state, axis);
    return out;
}

double normalize_value(double v, const NormalizationState& state, Axis axis) {
    return axis == Axis::X ? (v - state.mu_x) / state.sigma_x : (v - state.mu_y) / state.sigma_y;
}

// ---------------------------------------------------------------------------
// Mode layout
// ---------------------------------------------------------------------------

int mode_count(std::size_t n, int alpha_seg, int beta_min) {
    if (n < 2) throw Error(ErrorCode::TooFewPoints, "mode_count requires N >= 2");
    if (alpha_seg < 1 || beta_min < 1)
        throw Error(ErrorCode::InvalidSignal, "alpha_seg and beta_min must be >= 1");
    if (n / static_cast<std::size_t>(alpha_seg) < 1) return 1;
    // ceil(log2(target)) computed by exact doubling to avoid log2 rounding
    long double target = static_cast<long double>(n) /
                         (static_cast<long double>(alpha_seg) * static_cast<long double>(beta_min));
    int m = 0;
    long double pow2 = 1.0L;
    while (pow2 < target && m < 64) {
        pow2 *= 2.0L;
        ++m;
    }
    return m + 1;
}

std::vector<int> segment_counts(std::size_t n, int alpha_seg, int beta_min) {
    int k1 = static_cast<int>(n / static_cast<std::size_t>(alpha_seg));
    if (k1 < 1) return {1};
    int modes = mode_count(n, alpha_seg, beta_min);
    std::vector<int> counts;
    counts.reserve(static_cast<std::size_t>(modes));
    int k = k1;
    for (int m = 0; m < modes - 1; ++m) {
        counts.push_back(k);
        k = std::max(k / 2, beta_min);
    }
    counts.push_back(1);
    return counts;
}

std::vector<std::size_t> segment_boundaries(std::size_t n, int k) {
    if (k < 1) throw Error(ErrorCode::SegmentTooSmall, "segment count must be >= 1");
    if (n < static_cast<std::size_t>(k) + 1)
        throw Error(ErrorCode::SegmentTooSmall,
                    "N=" + std::to_string(n) + " too small for k=" + std::to_string(k));
    std::vector<std::size_t> bounds(static_cast<std::size_t>(k) + 1);
    for (int i = 0; i <= k; ++i)
        bounds[static_cast<std::size_t>(i)] =
            static_cast<std::size_t>(std::floor(double(i) * double(n) / double(k) + 0.5));
    bounds[0] = 0;
    bounds[static_cast<std::size_t>(k)] = n;
    for (std::size_t i = 1; i < bounds.size(); ++i)
        if (bounds[i] <= bounds[i - 1]) bounds[i] = bounds[i - 1] + 1;
    return bounds;
}

ModeLayout build_layout(std::size_t n, int alpha_seg, int beta_min,
                        std::size_t min_points_first, std::size_t min_points_rest) {
    if (n < std::max<std::size_t>(2, min_points_first))
        throw Error(ErrorCode::SegmentTooSmall,
                    "signal of " + std::to_string(n) + " points cannot fit the model");

    ModeLayout layout;
    layout.alpha_seg = alpha_seg;
    layout.beta_min = beta_min;
    std::vector<int> counts = segment_counts(n, alpha_seg, beta_min);

    for (int k : counts) {
        // never schedule more segments than the point budget allows
        int k_max = static_cast<int>(n / std::max<std::size_t>(1, min_points_rest));
        k = std::max(1, std::min(k, k_max));
        std::vector<std::size_t> bounds = segment_boundaries(n, k);

        // merge undersized segments (first absorbs right, others merge left)
        bool changed = true;
        while (changed && bounds.size() > 2) {
            changed = false;
            for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
                std::size_t len = bounds[i + 1] - bounds[i];
                std::size_t need = (i == 0) ? min_points_first : min_points_rest;
                if (len < std::max<std::size_t>(2, need)) {
                    bounds.erase(bounds.begin() + static_cast<std::ptrdiff_t>(i == 0 ? 1 : i));
                    changed = true;
                    break;
                }
            }
        }
        layout.boundaries.push_back(std::move(bounds));
        layout.seg_counts.push_back(static_cast<int>(layout.boundaries.back().size()) - 1);
    }
    layout.modes = static_cast<int>(layout.seg_counts.size());
    return layout;
}

std::vector<double> localize(std::span<const double> x, double x_anchor) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - x_anchor;
    return out;
}

}  // namespace fcd
