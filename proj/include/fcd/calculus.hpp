#pragma once

#include "fcd/decompose.hpp"

namespace fcd {

struct DerivativeSeries {
    int mode_index = 0;
    int order = 1;
    bool analytic = true;
    ExprPtr expression;                            // d^order of the physical local expression
    std::vector<std::span<const double>> segment_params;  // views into the decomposition
    std::vector<double> values;                    // sampled on the signal's x grid
};

struct IntegralSeries {
    int mode_index = 0;
    bool analytic = true;
    ExprPtr antiderivative_expr;                   // physical local antiderivative F
    std::vector<std::span<const double>> segment_params;
    std::vector<double> cumulative_constants;      // C_t per segment
    std::vector<double> values;                    // running integral on the x grid
};

/// Physical-space local expression of one decomposition's model: the model
/// expression itself when unscale rules exist, otherwise
/// sigma_y * f(t / sigma_x) + mu_y over the normalized parameters.
ExprPtr physical_local_expr(const Decomposition& d);

/// Parameter vector matching physical_local_expr for one segment.
std::span<const double> physical_segment_params(const Decomposition& d, const SegmentFit& seg);

/// Analytic derivative series of the given order, sampled on the signal grid.
DerivativeSeries derivative_series(const Decomposition& d, int mode_index, int order);

/// Running integral with per-segment cumulative constants, anchored so that
/// the integral is zero at the signal's first x. Falls back to composite
/// trapezoid integration of the reconstruction when the model has no
/// closed-form antiderivative.
IntegralSeries integral_series(const Decomposition& d, int mode_index);

/// Finite-difference derivative of the reconstruction (central differences on
/// the interior, one-sided at the ends); grid must have >= 2*order+1 points.
DerivativeSeries numeric_fallback_derivative(const Decomposition& d, int mode_index, int order);

/// Min-max normalization onto [0, 1]; an all-equal input maps to zeros.
std::vector<double> minmax_normalize(std::span<const double> values);

}  // namespace fcd
