#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fcd/model.hpp"
#include "fcd/signal.hpp"

namespace fcd {

struct LMConfig {
    double lambda0 = 1e-3;
    double lambda_up = 10.0;
    double lambda_down = 10.0;
    double ridge_alpha = 1e-8;
    int max_iters = 100;
    double loss_tol = 1e-10;
    double step_tol = 1e-10;
    int batch_size = 8;

    // loop guards (design-fixed, not exposed as config-file keys)
    double lambda_ceiling = 1e12;
    int max_rejections = 20;

    void validate() const;
};

enum class Termination {
    LossTol,
    StepTol,
    MaxIters,
    LambdaOverflow,
    RejectionCap,
    AllParamsFixed,
};

const char* termination_name(Termination reason);

struct LMIterationRecord {
    double loss;       // candidate loss
    double lambda;     // damping used for the step
    double step_norm;
    bool accepted;
};

struct LMTrace {
    std::vector<LMIterationRecord> iterations;
    Termination reason = Termination::MaxIters;

    std::size_t accepted_count() const;
};

struct ContinuityTargets {
    double value = 0.0;
    double slope = 0.0;  // ignored for C0-only models
};

/// Per-parameter box bounds aligned with the model's parameter vector.
struct Bounds {
    std::vector<double> lower;
    std::vector<double> upper;

    bool empty() const { return lower.empty(); }
    static Bounds from_model(const ModelSpec& model);
};

/// Hook for linear-solve fidelity checks: receives the damped normal matrix,
/// the solved step, and J^T r (residual convention r = y - f).
struct StepObservation {
    const Eigen::MatrixXd& jtj_damped;
    const Eigen::VectorXd& step;
    const Eigen::VectorXd& jtr;
    double lambda;
    bool accepted;
};
using StepObserver = std::function<void(const StepObservation&)>;

struct SegmentFit {
    int mode_index = 0;
    int segment_index = 0;
    std::size_t begin = 0, end = 0;      // data index range [begin, end)
    double anchor_norm = 0.0;
    double anchor_raw = 0.0;

    std::vector<double> params;          // full normalized parameter vector
    std::vector<double> physical;        // unscaled params (empty without rules)
    std::vector<int> free_indices;
    double loss = 0.0;

    double srmse = 0.0;                  // filled by decompose
    bool flat = false;

    double exit_local_x = 0.0;           // local x of the right boundary
    double exit_value = 0.0;
    double exit_slope = 0.0;

    bool has_continuity = false;
    double entry_value = 0.0, entry_slope = 0.0;

    bool converged = false;
    bool forced = false;                 // fell back to the initial guess
    bool guess_clamped = false;          // p0 was outside the bounds
};

/// Levenberg-Marquardt fit of one segment in local coordinates. When
/// `targets` is set the model's continuity-fixed parameters are recomputed
/// from the targets at every parameter update. When `bounds` is non-empty,
/// every accepted iterate is projected onto the box (p0 clamped, flagged).
std::pair<SegmentFit, LMTrace> lm_fit(const ModelSpec& model, const ReducedForm& form,
                                      std::span<const double> xhat, std::span<const double> y,
                                      std::span<const double> p0_free,
                                      const std::optional<ContinuityTargets>& targets,
                                      const Bounds& bounds, const LMConfig& config,
                                      const StepObserver& observer = {});

struct SegmentView {
    int segment_index = 0;
    std::size_t begin = 0, end = 0;
    std::span<const double> xhat;
    std::span<const double> y;
    double anchor_norm = 0.0;
    double exit_local_x = 0.0;  // local x at which the exit state is taken
};

struct BatchResult {
    std::vector<SegmentFit> kept;
    std::optional<std::vector<double>> carry_guess;       // overlap fit's free params
    std::optional<ContinuityTargets> exit_targets;        // after the last kept segment
};

/// Overlapping Forward Fit over one window of kept_count segments plus an
/// optional overlap segment (views.size() == kept_count or kept_count + 1).
/// The overlap segment is fitted and discarded; its free parameters come back
/// as the carry guess for the next batch's first segment.
BatchResult fit_batch(const ModelSpec& model, const ReducedForm& unconstrained,
                      const ReducedForm& constrained, std::span<const SegmentView> views,
                      std::size_t kept_count,
                      const std::optional<ContinuityTargets>& entry_targets,
                      const std::optional<std::vector<double>>& carry_guess,
                      const Bounds& bounds, const LMConfig& config);

struct ModeFit {
    int mode_index = 0;
    bool is_trend = false;
    std::vector<SegmentFit> segments;
};

/// Fits all segments of one mode with the forward-fit batch loop. The mode's
/// first segment is unconstrained; later segments take continuity targets
/// from their predecessor's exit state.
ModeFit fit_mode(const Signal& normalized, std::span<const std::size_t> boundaries,
                 int mode_index, const ModelSpec& model, const ReducedForm& unconstrained,
                 const ReducedForm& constrained, const Bounds& bounds, const LMConfig& config);

/// Whole-range unconstrained fit for the final trend mode (same LM engine).
SegmentFit fit_trend(const Signal& normalized, const ModelSpec& model,
                     const ReducedForm& unconstrained, const Bounds& bounds,
                     const LMConfig& config);

}  // namespace fcd
