#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "fcd/errors.hpp"

namespace fcd {

struct Signal {
    std::vector<double> x;
    std::vector<double> y;

    std::size_t size() const { return x.size(); }
};

/// Validates, sorts by x (stable), and collapses duplicate x values to the
/// mean of their y values. Throws InvalidSignal / TooFewPoints.
Signal prepare_signal(std::span<const double> x, std::span<const double> y);

enum class Axis { X, Y };

/// Adaptive standard scaling record. sigma_x/sigma_y are the length-dependent
/// scale factors sigma/(N*s_f); degenerate axes carry scale 1.0 instead.
struct NormalizationState {
    double mu_x = 0.0;
    double mu_y = 0.0;
    double sigma_x = 1.0;
    double sigma_y = 1.0;
    double s_f = 0.01;
    bool degenerate_x = false;
    bool degenerate_y = false;
};

std::pair<Signal, NormalizationState> normalize(const Signal& signal, double s_f = 0.01);

double denormalize_value(double z, const NormalizationState& state, Axis axis);
std::vector<double> denormalize(std::span<const double> z, const NormalizationState& state, Axis axis);
double normalize_value(double v, const NormalizationState& state, Axis axis);

/// M = ceil(log2((N/alpha)/beta)) + 1, clamped to >= 1.
int mode_count(std::size_t n, int alpha_seg = 5, int beta_min = 4);

/// [k_1 .. k_M]: k_1 = floor(N/alpha); halved (clamped at beta) per mode;
/// trailing trend mode k_M = 1. k_1 < 1 falls back to {1}.
std::vector<int> segment_counts(std::size_t n, int alpha_seg = 5, int beta_min = 4);

/// k+1 boundary indices into [0, n]: round-half-up of i*n/k, repaired to be
/// strictly increasing. Segment i covers data indices [b[i], b[i+1]), the
/// last segment inclusive of n-1.
std::vector<std::size_t> segment_boundaries(std::size_t n, int k);

struct ModeLayout {
    int modes = 0;
    std::vector<int> seg_counts;
    std::vector<std::vector<std::size_t>> boundaries;  // one row per mode
    int alpha_seg = 5;
    int beta_min = 4;
};

/// Full layout for all modes. Segments with fewer points than the model
/// needs are merged into their left neighbour (the first segment absorbs its
/// right neighbour instead). min_points_first applies to each mode's first
/// segment (all parameters free there), min_points_rest to the others.
ModeLayout build_layout(std::size_t n, int alpha_seg, int beta_min,
                        std::size_t min_points_first, std::size_t min_points_rest);

/// Local translation x_hat = x - x_anchor.
std::vector<double> localize(std::span<const double> x, double x_anchor);

double population_std(std::span<const double> values);

}  // namespace fcd
