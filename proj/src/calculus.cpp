#include "fcd/calculus.hpp"

#include <algorithm>
#include <cmath>

namespace fcd {

ExprPtr physical_local_expr(const Decomposition& d) {
    if (!d.unscaled_output) return d.model.expr;
    // y_phys(t) = sigma_y * f(t / sigma_x) + mu_y with normalized parameters
    ExprPtr scaled_t = make_mul(make_constant(1.0 / d.norm.sigma_x), make_variable());
    ExprPtr f = substitute_var(d.model.expr, scaled_t);
    return make_add(make_mul(make_constant(d.norm.sigma_y), f), make_constant(d.norm.mu_y));
}

std::span<const double> physical_segment_params(const Decomposition& d, const SegmentFit& seg) {
    return d.unscaled_output ? std::span<const double>(seg.params)
                             : std::span<const double>(seg.physical);
}

namespace {

const ModeFit& mode_at(const Decomposition& d, int mode_index) {
    if (mode_index < 0 || mode_index >= d.mode_count())
        throw Error(ErrorCode::ConfigError, "mode index out of range");
    return d.modes[static_cast<std::size_t>(mode_index)];
}

// derivative of f at grid point i on a possibly non-uniform grid
double grid_derivative(std::span<const double> x, std::span<const double> f, std::size_t i) {
    std::size_t n = x.size();
    if (i == 0) return (f[1] - f[0]) / (x[1] - x[0]);
    if (i + 1 == n) return (f[n - 1] - f[n - 2]) / (x[n - 1] - x[n - 2]);
    // three-point Lagrange derivative; reduces to central on uniform grids
    double h1 = x[i] - x[i - 1], h2 = x[i + 1] - x[i];
    double a = -h2 / (h1 * (h1 + h2));
    double b = (h2 - h1) / (h1 * h2);
    double c = h1 / (h2 * (h1 + h2));
    return a * f[i - 1] + b * f[i] + c * f[i + 1];
}

}  // namespace

DerivativeSeries derivative_series(const Decomposition& d, int mode_index, int order) {
    if (order < 1) throw Error(ErrorCode::ConfigError, "derivative order must be >= 1");
    const ModeFit& mode = mode_at(d, mode_index);

    DerivativeSeries series;
    series.mode_index = mode_index;
    series.order = order;
    series.analytic = true;

    ExprPtr expr = physical_local_expr(d);
    for (int i = 0; i < order; ++i) expr = diff_var(expr);
    series.expression = expr;
    CompiledExpr compiled(expr);

    series.values.resize(d.raw.size());
    series.segment_params.reserve(mode.segments.size());
    for (const auto& seg : mode.segments) {
        auto params = physical_segment_params(d, seg);
        series.segment_params.push_back(params);
        for (std::size_t i = seg.begin; i < seg.end; ++i)
            series.values[i] = compiled(d.raw.x[i] - seg.anchor_raw, params);
    }
    return series;
}

IntegralSeries integral_series(const Decomposition& d, int mode_index) {
    const ModeFit& mode = mode_at(d, mode_index);

    IntegralSeries series;
    series.mode_index = mode_index;

    ExprPtr base = physical_local_expr(d);
    ExprPtr anti;
    try {
        anti = antiderivative(base);
    } catch (const Error& err) {
        if (err.code() != ErrorCode::NoClosedFormIntegral) throw;
        anti = nullptr;
    }

    if (!anti) {
        // composite trapezoid over the reconstruction on the sample grid
        series.analytic = false;
        std::vector<double> y = reconstruct(d, mode_index, d.raw.x);
        series.values.resize(d.raw.size(), 0.0);
        double acc = 0.0;
        for (std::size_t i = 1; i < d.raw.size(); ++i) {
            acc += 0.5 * (y[i] + y[i - 1]) * (d.raw.x[i] - d.raw.x[i - 1]);
            series.values[i] = acc;
        }
        return series;
    }

    series.analytic = true;
    series.antiderivative_expr = anti;
    CompiledExpr compiled(anti);
    series.values.resize(d.raw.size());
    series.cumulative_constants.resize(mode.segments.size());
    series.segment_params.reserve(mode.segments.size());

    double running_at_left = 0.0;  // running integral at the current segment's anchor
    for (std::size_t s = 0; s < mode.segments.size(); ++s) {
        const SegmentFit& seg = mode.segments[s];
        auto params = physical_segment_params(d, seg);
        series.segment_params.push_back(params);

        double c_t = running_at_left - compiled(0.0, params);
        series.cumulative_constants[s] = c_t;
        for (std::size_t i = seg.begin; i < seg.end; ++i)
            series.values[i] = compiled(d.raw.x[i] - seg.anchor_raw, params) + c_t;

        if (s + 1 < mode.segments.size()) {
            double boundary_t = d.raw.x[mode.segments[s + 1].begin] - seg.anchor_raw;
            running_at_left = compiled(boundary_t, params) + c_t;
        }
    }
    return series;
}

DerivativeSeries numeric_fallback_derivative(const Decomposition& d, int mode_index, int order) {
    if (order < 1) throw Error(ErrorCode::ConfigError, "derivative order must be >= 1");
    const std::size_t n = d.raw.size();
    if (n < 2 * static_cast<std::size_t>(order) + 1)
        throw Error(ErrorCode::TooFewPoints,
                    "grid of " + std::to_string(n) + " points cannot support order " +
                        std::to_string(order));

    DerivativeSeries series;
    series.mode_index = mode_index;
    series.order = order;
    series.analytic = false;

    std::vector<double> current = reconstruct(d, mode_index, d.raw.x);
    for (int o = 0; o < order; ++o) {
        std::vector<double> next(n);
        for (std::size_t i = 0; i < n; ++i) next[i] = grid_derivative(d.raw.x, current, i);
        current = std::move(next);
    }
    series.values = std::move(current);
    return series;
}

std::vector<double> minmax_normalize(std::span<const double> values) {
    std::vector<double> out(values.size(), 0.0);
    if (values.empty()) return out;
    auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    double lo = *lo_it, hi = *hi_it;
    if (hi == lo) return out;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - lo) / (hi - lo);
    return out;
}

}  // namespace fcd
