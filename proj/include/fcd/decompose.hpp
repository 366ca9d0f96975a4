#pragma once

#include <optional>
#include <string>

#include "fcd/optimizer.hpp"

namespace fcd {

struct DecomposeOptions {
    double s_f = 0.01;
    int alpha_seg = 5;
    int beta_min = 4;
    LMConfig lm;
    std::optional<ContinuityOrder> continuity_override;
    Bounds bounds;       // empty -> model defaults
    bool parallel = true;
};

struct SegmentMetrics {
    double srmse = 0.0;
    bool flat = false;
    std::size_t n_points = 0;
};

struct Decomposition {
    Signal raw;          // cleaned input (sorted, duplicates collapsed)
    Signal normalized;
    NormalizationState norm;
    ModeLayout layout;
    ModelSpec model;     // continuity possibly overridden
    DecomposeOptions options;
    std::vector<ModeFit> modes;  // last entry is the trend mode
    double sigma_y_raw = 0.0;    // population std of raw y
    bool unscaled_output = false;  // no unscale rules; params stay normalized

    int mode_count() const { return static_cast<int>(modes.size()); }
};

/// Full pipeline: prepare -> normalize -> layout -> parallel mode fits ->
/// trend fit -> unscale -> per-segment metrics.
Decomposition decompose(std::span<const double> x, std::span<const double> y,
                        const ModelSpec& model, const DecomposeOptions& options = {});

/// Piecewise evaluation of one mode at raw-x query points (normalized-space
/// evaluation, denormalized). Out-of-range queries throw ExtrapolationError.
std::vector<double> reconstruct(const Decomposition& d, int mode_index,
                                std::span<const double> x_raw);
double reconstruct_at(const Decomposition& d, int mode_index, double x_raw);

/// Same evaluation through the physical (unscaled) parameter route; requires
/// unscale rules.
std::vector<double> reconstruct_physical(const Decomposition& d, int mode_index,
                                         std::span<const double> x_raw);

/// Index of the segment owning x_raw in the given mode (half-open intervals,
/// last interval closed).
std::size_t find_segment(const Decomposition& d, int mode_index, double x_raw);

/// Segment-wise SRMSE = RMSE / segment population std, with the flat-segment
/// policy: segments with std below 1% of the global y std are flat and capped
/// at 1.0.
SegmentMetrics segment_srmse(std::span<const double> y, std::span<const double> y_hat,
                             double sigma_y_global);

struct SrmseAggregate {
    std::vector<double> per_mode;  // unweighted mean per mode
    double overall = 0.0;          // unweighted mean over all segments
};

SrmseAggregate aggregate_srmse(const Decomposition& d);

enum class ReportSpace { Local, Absolute };

/// Case-by-case text rendering of a mode's piecewise fit (4 significant
/// digits). Local space prints f(t) with the anchor alongside; absolute space
/// substitutes t -> (x - x_k) into the expression.
std::string piecewise_report(const Decomposition& d, int mode_index, ReportSpace space);

}  // namespace fcd
