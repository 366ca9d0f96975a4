#include "fcd/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <limits>
#include <numeric>

namespace fcd {

namespace {

ModelSpec apply_continuity_override(const ModelSpec& model,
                                    const std::optional<ContinuityOrder>& override_order) {
    if (!override_order || *override_order == model.continuity) return model;
    ModelSpec m = model;
    switch (*override_order) {
        case ContinuityOrder::None:
            m.continuity = ContinuityOrder::None;
            break;
        case ContinuityOrder::C0:
            if (m.value_param < 0)
                throw Error(ErrorCode::ConfigError,
                            "model '" + m.name + "' defines no value parameter for C0 continuity");
            m.continuity = ContinuityOrder::C0;
            break;
        case ContinuityOrder::C1:
            if (m.value_param < 0 || m.slope_param < 0)
                throw Error(ErrorCode::ConfigError,
                            "model '" + m.name + "' defines no slope parameter for C1 continuity");
            m.continuity = ContinuityOrder::C1;
            break;
    }
    return m;
}

}  // namespace

Decomposition decompose(std::span<const double> x, std::span<const double> y,
                        const ModelSpec& model_in, const DecomposeOptions& options) {
    options.lm.validate();
    if (!(options.s_f > 0.0)) throw Error(ErrorCode::ConfigError, "s_f must be positive");
    if (options.alpha_seg < 1 || options.beta_min < 1)
        throw Error(ErrorCode::ConfigError, "alpha_seg and beta_min must be >= 1");

    Decomposition d;
    d.model = apply_continuity_override(model_in, options.continuity_override);
    d.options = options;
    d.raw = prepare_signal(x, y);
    std::tie(d.normalized, d.norm) = normalize(d.raw, options.s_f);
    d.sigma_y_raw = population_std(d.raw.y);

    const std::size_t np = d.model.param_count();
    const std::size_t n_fixed = static_cast<std::size_t>(d.model.fixed_param_count());
    d.layout = build_layout(d.raw.size(), options.alpha_seg, options.beta_min,
                            std::max<std::size_t>(2, np), std::max<std::size_t>(2, np - n_fixed));

    ReducedForm unconstrained = reduce_model(d.model, false);
    ReducedForm constrained = reduce_model(d.model, d.model.continuity != ContinuityOrder::None);
    Bounds bounds = options.bounds.empty() ? Bounds::from_model(d.model) : options.bounds;
    if (!bounds.empty() && bounds.lower.size() != np)
        throw Error(ErrorCode::ConfigError, "bounds are misaligned with the model parameters");

    const int m = d.layout.modes;
    d.modes.resize(static_cast<std::size_t>(m));

    auto fit_one = [&](int mode_idx) {
        if (mode_idx == m - 1) {
            ModeFit trend;
            trend.mode_index = mode_idx;
            trend.is_trend = true;
            SegmentFit fit =
                fit_trend(d.normalized, d.model, unconstrained, bounds, options.lm);
            fit.mode_index = mode_idx;
            trend.segments.push_back(std::move(fit));
            return trend;
        }
        return fit_mode(d.normalized, d.layout.boundaries[static_cast<std::size_t>(mode_idx)],
                        mode_idx, d.model, unconstrained, constrained, bounds, options.lm);
    };

    if (options.parallel && m > 1) {
        std::vector<std::future<ModeFit>> futures;
        futures.reserve(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i)
            futures.push_back(std::async(std::launch::async, fit_one, i));
        for (int i = 0; i < m; ++i) d.modes[static_cast<std::size_t>(i)] = futures[static_cast<std::size_t>(i)].get();
    } else {
        for (int i = 0; i < m; ++i) d.modes[static_cast<std::size_t>(i)] = fit_one(i);
    }

    // physical parameters and per-segment metrics
    d.unscaled_output = !d.model.has_unscale();
    for (auto& mode : d.modes) {
        for (auto& seg : mode.segments) {
            seg.anchor_raw = d.raw.x[seg.begin];
            if (!d.unscaled_output) seg.physical = unscale_params(d.model, seg.params, d.norm);

            auto y_seg = std::span<const double>(d.raw.y).subspan(seg.begin, seg.end - seg.begin);
            std::vector<double> y_hat(seg.end - seg.begin);
            for (std::size_t i = 0; i < y_hat.size(); ++i) {
                double xh = d.normalized.x[seg.begin + i] - seg.anchor_norm;
                y_hat[i] = denormalize_value(eval(d.model.expr, xh, seg.params), d.norm, Axis::Y);
            }
            SegmentMetrics metrics = segment_srmse(y_seg, y_hat, d.sigma_y_raw);
            seg.srmse = metrics.srmse;
            seg.flat = metrics.flat;
        }
    }
    return d;
}

// ---------------------------------------------------------------------------
// Reconstruction
// ---------------------------------------------------------------------------

namespace {

const ModeFit& mode_at(const Decomposition& d, int mode_index) {
    if (mode_index < 0 || mode_index >= d.mode_count())
        throw Error(ErrorCode::ConfigError, "mode index out of range");
    return d.modes[static_cast<std::size_t>(mode_index)];
}

void check_range(const Decomposition& d, double x_raw) {
    double lo = d.raw.x.front(), hi = d.raw.x.back();
    double tol = 1e-12 * std::max({1.0, std::fabs(lo), std::fabs(hi)});
    if (x_raw < lo - tol || x_raw > hi + tol)
        throw Error(ErrorCode::ExtrapolationError,
                    "query x=" + std::to_string(x_raw) + " outside [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + "]");
}

}  // namespace

std::size_t find_segment(const Decomposition& d, int mode_index, double x_raw) {
    check_range(d, x_raw);
    const ModeFit& mode = mode_at(d, mode_index);
    // half-open [anchor_i, anchor_{i+1}), last interval closed
    std::size_t k = mode.segments.size();
    for (std::size_t i = 0; i + 1 < k; ++i)
        if (x_raw < d.raw.x[mode.segments[i + 1].begin]) return i;
    return k - 1;
}

double reconstruct_at(const Decomposition& d, int mode_index, double x_raw) {
    const ModeFit& mode = mode_at(d, mode_index);
    const SegmentFit& seg = mode.segments[find_segment(d, mode_index, x_raw)];
    double xh = (x_raw - seg.anchor_raw) / d.norm.sigma_x;
    return denormalize_value(eval(d.model.expr, xh, seg.params), d.norm, Axis::Y);
}

std::vector<double> reconstruct(const Decomposition& d, int mode_index,
                                std::span<const double> x_raw) {
    std::vector<double> out(x_raw.size());
    for (std::size_t i = 0; i < x_raw.size(); ++i) out[i] = reconstruct_at(d, mode_index, x_raw[i]);
    return out;
}

std::vector<double> reconstruct_physical(const Decomposition& d, int mode_index,
                                         std::span<const double> x_raw) {
    if (d.unscaled_output)
        throw Error(ErrorCode::ConfigError,
                    "physical reconstruction requires unscale rules for model '" + d.model.name +
                        "'");
    const ModeFit& mode = mode_at(d, mode_index);
    std::vector<double> out(x_raw.size());
    for (std::size_t i = 0; i < x_raw.size(); ++i) {
        const SegmentFit& seg = mode.segments[find_segment(d, mode_index, x_raw[i])];
        out[i] = eval(d.model.expr, x_raw[i] - seg.anchor_raw, seg.physical);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

SegmentMetrics segment_srmse(std::span<const double> y, std::span<const double> y_hat,
                             double sigma_y_global) {
    if (y.empty()) throw Error(ErrorCode::EmptySegment, "segment has no points");
    if (y.size() != y_hat.size())
        throw Error(ErrorCode::InvalidSignal, "prediction length mismatch");

    double mse = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        double e = y[i] - y_hat[i];
        mse += e * e;
    }
    double rmse = std::sqrt(mse / double(y.size()));
    double sigma_seg = population_std(y);

    SegmentMetrics m;
    m.n_points = y.size();
    m.flat = sigma_seg < 0.01 * sigma_y_global;
    if (m.flat) {
        double ratio = rmse / sigma_seg;  // may be inf/nan on exactly flat data
        m.srmse = std::isfinite(ratio) ? std::min(ratio, 1.0) : 1.0;
    } else {
        m.srmse = rmse / sigma_seg;
    }
    return m;
}

SrmseAggregate aggregate_srmse(const Decomposition& d) {
    SrmseAggregate agg;
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& mode : d.modes) {
        double mode_sum = 0.0;
        for (const auto& seg : mode.segments) mode_sum += seg.srmse;
        agg.per_mode.push_back(mode.segments.empty() ? 0.0
                                                     : mode_sum / double(mode.segments.size()));
        total += mode_sum;
        count += mode.segments.size();
    }
    agg.overall = count == 0 ? 0.0 : total / double(count);
    return agg;
}

// ---------------------------------------------------------------------------
// Piecewise report
// ---------------------------------------------------------------------------

namespace {

std::string format_sig(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
    return buf;
}

}  // namespace

std::string piecewise_report(const Decomposition& d, int mode_index, ReportSpace space) {
    const ModeFit& mode = mode_at(d, mode_index);
    const bool physical = !d.unscaled_output;

    std::string out;
    out += "mode " + std::to_string(mode_index + 1) + " of " + std::to_string(d.mode_count()) +
           (mode.is_trend ? " (trend)" : "") + ", model " + d.model.name + ", " +
           std::to_string(mode.segments.size()) + " segment" +
           (mode.segments.size() == 1 ? "" : "s") + "\n";
    if (space == ReportSpace::Local)
        out += "local coordinates: t = x - x_k, anchors x_k listed per segment\n";
    else
        out += "absolute coordinates: expressions substitute t = x - x_k per segment\n";
    if (!physical)
        out += "note: model has no unscale rules; parameters are in normalized space\n";

    for (std::size_t i = 0; i < mode.segments.size(); ++i) {
        const SegmentFit& seg = mode.segments[i];
        double x_lo = d.raw.x[seg.begin];
        double x_hi = (i + 1 < mode.segments.size()) ? d.raw.x[mode.segments[i + 1].begin]
                                                     : d.raw.x.back();
        bool last = i + 1 == mode.segments.size();

        PrintOptions popt;
        popt.significant_digits = 4;
        std::span<const double> values = physical ? seg.physical : seg.params;
        popt.param_values = values;

        std::string expr_text;
        if (space == ReportSpace::Local) {
            popt.variable = "t";
            expr_text = to_string(d.model.expr, popt);
        } else {
            popt.variable = "x";
            ExprPtr shifted = substitute_var(
                d.model.expr, make_sub(make_variable(), make_constant(seg.anchor_raw)));
            expr_text = to_string(shifted, popt);
        }

        out += "  " + format_sig(x_lo) + " <= x " + (last ? "<=" : "<") + " " + format_sig(x_hi) +
               ":  f = " + expr_text;
        if (space == ReportSpace::Local) out += "   [x_k = " + format_sig(seg.anchor_raw) + "]";
        out += "   srmse=" + format_sig(seg.srmse);
        if (seg.flat) out += " flat";
        if (seg.forced) out += " forced";
        out += "\n";
    }
    return out;
}

}  // namespace fcd
