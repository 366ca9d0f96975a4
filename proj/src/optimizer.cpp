#include "fcd/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fcd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sum_squares(const Eigen::VectorXd& v) { return v.squaredNorm(); }

}  // namespace

void LMConfig::validate() const {
    if (!(lambda0 > 0.0) || !(ridge_alpha > 0.0) || !(loss_tol > 0.0) || !(step_tol > 0.0))
        throw Error(ErrorCode::ConfigError, "LM tolerances and damping must be positive");
    if (!(lambda_up > 1.0) || !(lambda_down > 1.0))
        throw Error(ErrorCode::ConfigError, "lambda_up and lambda_down must exceed 1");
    if (max_iters < 1 || batch_size < 1)
        throw Error(ErrorCode::ConfigError, "max_iters and batch_size must be >= 1");
}

const char* termination_name(Termination reason) {
    switch (reason) {
        case Termination::LossTol: return "loss_tol";
        case Termination::StepTol: return "step_tol";
        case Termination::MaxIters: return "max_iters";
        case Termination::LambdaOverflow: return "lambda_overflow";
        case Termination::RejectionCap: return "rejection_cap";
        case Termination::AllParamsFixed: return "all_params_fixed";
    }
    return "unknown";
}

std::size_t LMTrace::accepted_count() const {
    std::size_t n = 0;
    for (const auto& it : iterations) n += it.accepted ? 1 : 0;
    return n;
}

Bounds Bounds::from_model(const ModelSpec& model) {
    Bounds b;
    if (!model.has_bounds()) return b;
    b.lower.reserve(model.param_count());
    b.upper.reserve(model.param_count());
    for (const auto& [lo, hi] : model.bounds) {
        b.lower.push_back(lo);
        b.upper.push_back(hi);
    }
    return b;
}

// ---------------------------------------------------------------------------
// lm_fit
// ---------------------------------------------------------------------------

namespace {

struct Workspace {
    const ModelSpec& model;
    const ReducedForm& form;
    std::span<const double> xhat;
    std::span<const double> y;

    // evaluates residuals r = y - f; returns the loss (Eq. 6), +inf on overflow
    double residuals(std::span<const double> ext, Eigen::VectorXd& r) const {
        double loss = 0.0;
        for (std::size_t i = 0; i < xhat.size(); ++i) {
            double f = form.c_expr(xhat[i], ext);
            double ri = y[i] - f;
            if (!std::isfinite(ri)) return kInf;
            r[static_cast<Eigen::Index>(i)] = ri;
            loss += ri * ri;
        }
        return loss;
    }

    void model_gradients(std::span<const double> ext, Eigen::MatrixXd& g) const {
        for (std::size_t i = 0; i < xhat.size(); ++i)
            for (std::size_t j = 0; j < form.c_grads.size(); ++j)
                g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    form.c_grads[j](xhat[i], ext);
    }
};

void apply_free(std::span<double> ext, const ReducedForm& form, const Eigen::VectorXd& free) {
    for (std::size_t j = 0; j < form.free_indices.size(); ++j)
        ext[static_cast<std::size_t>(form.free_indices[j])] = free(static_cast<Eigen::Index>(j));
}

// clamps a free-parameter vector onto the box; returns true when anything moved
bool project_free(Eigen::VectorXd& free, const ReducedForm& form, const Bounds& bounds) {
    if (bounds.empty()) return false;
    bool moved = false;
    for (std::size_t j = 0; j < form.free_indices.size(); ++j) {
        auto idx = static_cast<std::size_t>(form.free_indices[j]);
        double lo = bounds.lower[idx], hi = bounds.upper[idx];
        double v = free(static_cast<Eigen::Index>(j));
        double c = std::clamp(v, lo, hi);
        if (c != v) {
            free(static_cast<Eigen::Index>(j)) = c;
            moved = true;
        }
    }
    return moved;
}

}  // namespace

std::pair<SegmentFit, LMTrace> lm_fit(const ModelSpec& model, const ReducedForm& form,
                                      std::span<const double> xhat, std::span<const double> y,
                                      std::span<const double> p0_free,
                                      const std::optional<ContinuityTargets>& targets,
                                      const Bounds& bounds, const LMConfig& config,
                                      const StepObserver& observer) {
    config.validate();
    if (xhat.size() != y.size())
        throw Error(ErrorCode::InvalidSignal, "segment x/y length mismatch");
    const std::size_t n_free = form.free_indices.size();
    if (n_free > 0 && xhat.size() < n_free)
        throw Error(ErrorCode::SegmentTooSmall,
                    "segment of " + std::to_string(xhat.size()) + " points cannot determine " +
                        std::to_string(n_free) + " free parameters");
    if (p0_free.size() != n_free)
        throw Error(ErrorCode::BadInitialGuess, "initial guess length mismatch");
    if (form.with_continuity && !targets)
        throw Error(ErrorCode::ConfigError, "continuity-reduced fit requires targets");

    SegmentFit fit;
    LMTrace trace;
    fit.free_indices = form.free_indices;
    fit.has_continuity = form.with_continuity && targets.has_value();
    if (targets) {
        fit.entry_value = targets->value;
        fit.entry_slope = targets->slope;
    }

    std::vector<double> ext(form.extended_size(), 0.0);
    if (targets) {
        ext[static_cast<std::size_t>(form.target_value_slot())] = targets->value;
        ext[static_cast<std::size_t>(form.target_slope_slot())] = targets->slope;
    }

    Eigen::VectorXd free(static_cast<Eigen::Index>(n_free));
    for (std::size_t j = 0; j < n_free; ++j) {
        if (!std::isfinite(p0_free[j]))
            throw Error(ErrorCode::BadInitialGuess, "non-finite initial guess");
        free(static_cast<Eigen::Index>(j)) = p0_free[j];
    }
    fit.guess_clamped = project_free(free, form, bounds);
    apply_free(ext, form, free);
    if (form.with_continuity) solve_continuity(model, form, ext);

    Workspace ws{model, form, xhat, y};
    const auto n_points = static_cast<Eigen::Index>(xhat.size());
    Eigen::VectorXd r(n_points);
    double loss = ws.residuals(ext, r);
    if (!std::isfinite(loss))
        throw Error(ErrorCode::BadInitialGuess, "non-finite residuals at the initial guess");

    if (n_free == 0) {
        trace.reason = Termination::AllParamsFixed;
        fit.converged = true;
    } else {
        Eigen::MatrixXd g(n_points, static_cast<Eigen::Index>(n_free));
        Eigen::VectorXd cand_r(n_points);
        std::vector<double> cand_ext(ext.size());
        double lambda = config.lambda0;
        bool done = false;

        for (int iter = 0; iter < config.max_iters && !done; ++iter) {
            ws.model_gradients(ext, g);
            // r = y - f, J = dr/dp = -g; normal equations (J^T J + (l+a)I) dp = -J^T r
            Eigen::MatrixXd jtj = g.transpose() * g;
            Eigen::VectorXd neg_jtr = g.transpose() * r;  // -J^T r = g^T r
            if (!jtj.allFinite() || !neg_jtr.allFinite())
                throw Error(ErrorCode::SolveFailed, "non-finite normal equations");

            int rejections = 0;
            while (true) {
                Eigen::MatrixXd damped = jtj;
                damped.diagonal().array() += lambda + config.ridge_alpha;
                Eigen::VectorXd step = damped.ldlt().solve(neg_jtr);
                bool solvable = step.allFinite();

                Eigen::VectorXd cand_free = free + step;
                project_free(cand_free, form, bounds);
                Eigen::VectorXd actual_step = cand_free - free;
                double step_norm = actual_step.norm();

                double cand_loss = kInf;
                if (solvable) {
                    std::copy(ext.begin(), ext.end(), cand_ext.begin());
                    apply_free(cand_ext, form, cand_free);
                    bool feasible = true;
                    if (form.with_continuity) {
                        try {
                            solve_continuity(model, form, cand_ext);
                        } catch (const Error&) {
                            feasible = false;  // degenerate candidate; treat as a rejection
                        }
                    }
                    if (feasible) cand_loss = ws.residuals(cand_ext, cand_r);
                }

                double delta_r = loss - cand_loss;
                bool accept = solvable && std::isfinite(cand_loss) && delta_r > 0.0;
                trace.iterations.push_back({cand_loss, lambda, step_norm, accept});
                if (observer) {
                    Eigen::VectorXd jtr = -neg_jtr;
                    observer(StepObservation{damped, step, jtr, lambda, accept});
                }

                if (accept) {
                    free = cand_free;
                    std::swap(ext, cand_ext);
                    std::swap(r, cand_r);
                    loss = cand_loss;
                    lambda /= config.lambda_down;
                    if (delta_r < config.loss_tol * (1.0 + loss)) {
                        trace.reason = Termination::LossTol;
                        done = true;
                    } else if (step_norm < config.step_tol * (1.0 + free.norm())) {
                        trace.reason = Termination::StepTol;
                        done = true;
                    }
                    break;
                }

                // rejected: maybe we are simply converged
                if (std::isfinite(cand_loss) && delta_r >= 0.0 &&
                    delta_r < config.loss_tol * (1.0 + loss)) {
                    trace.reason = Termination::LossTol;
                    done = true;
                    break;
                }
                if (solvable && step_norm < config.step_tol * (1.0 + free.norm())) {
                    trace.reason = Termination::StepTol;
                    done = true;
                    break;
                }

                lambda *= config.lambda_up;
                ++rejections;
                if (lambda > config.lambda_ceiling) {
                    trace.reason = Termination::LambdaOverflow;
                    done = true;
                    break;
                }
                if (rejections >= config.max_rejections) {
                    if (!solvable)
                        throw Error(ErrorCode::SolveFailed,
                                    "normal-equation solve kept failing under damping");
                    trace.reason = Termination::RejectionCap;
                    done = true;
                    break;
                }
            }
        }
        fit.converged =
            trace.reason == Termination::LossTol || trace.reason == Termination::StepTol;
    }

    fit.params.assign(ext.begin(), ext.begin() + static_cast<std::ptrdiff_t>(model.param_count()));
    fit.loss = loss;
    return {fit, trace};
}

// ---------------------------------------------------------------------------
// Forward fit batching
// ---------------------------------------------------------------------------

namespace {

// exit state evaluated with the full (unreduced) model
void fill_exit_state(SegmentFit& fit, const ModelSpec& model, double exit_local_x) {
    fit.exit_local_x = exit_local_x;
    fit.exit_value = eval(model.expr, exit_local_x, fit.params);
    fit.exit_slope = eval(model.d_expr, exit_local_x, fit.params);
}

std::vector<double> free_subset(const ReducedForm& form, std::span<const double> full) {
    std::vector<double> out;
    out.reserve(form.free_indices.size());
    for (int idx : form.free_indices) out.push_back(full[static_cast<std::size_t>(idx)]);
    return out;
}

// one segment fit with the forced-fallback policy for solver failures
SegmentFit fit_segment(const ModelSpec& model, const ReducedForm& form, const SegmentView& view,
                       std::span<const double> p0_free,
                       const std::optional<ContinuityTargets>& targets, const Bounds& bounds,
                       const LMConfig& config) {
    SegmentFit fit;
    try {
        fit = lm_fit(model, form, view.xhat, view.y, p0_free, targets, bounds, config).first;
    } catch (const Error& err) {
        if (err.code() != ErrorCode::SolveFailed && err.code() != ErrorCode::BadInitialGuess &&
            err.code() != ErrorCode::ContinuitySingular)
            throw;
        // keep the guess so the mode chain stays defined
        fit = SegmentFit{};
        fit.forced = true;
        fit.free_indices = form.free_indices;
        std::vector<double> ext(form.extended_size(), 0.0);
        if (targets) {
            ext[static_cast<std::size_t>(form.target_value_slot())] = targets->value;
            ext[static_cast<std::size_t>(form.target_slope_slot())] = targets->slope;
            fit.entry_value = targets->value;
            fit.entry_slope = targets->slope;
            fit.has_continuity = form.with_continuity;
        }
        for (std::size_t j = 0; j < form.free_indices.size(); ++j)
            ext[static_cast<std::size_t>(form.free_indices[j])] =
                std::isfinite(p0_free[j]) ? p0_free[j] : 0.0;
        if (form.with_continuity) {
            try {
                solve_continuity(model, form, ext);
            } catch (const Error&) {
                ext[static_cast<std::size_t>(model.value_param)] = targets ? targets->value : 0.0;
                if (model.slope_param >= 0)
                    ext[static_cast<std::size_t>(model.slope_param)] = targets ? targets->slope : 0.0;
            }
        }
        fit.params.assign(ext.begin(),
                          ext.begin() + static_cast<std::ptrdiff_t>(model.param_count()));
        double loss = 0.0;
        for (std::size_t i = 0; i < view.xhat.size(); ++i) {
            double ri = view.y[i] - eval(model.expr, view.xhat[i], fit.params);
            loss += ri * ri;
        }
        fit.loss = std::isfinite(loss) ? loss : kInf;
    }
    fit.segment_index = view.segment_index;
    fit.begin = view.begin;
    fit.end = view.end;
    fit.anchor_norm = view.anchor_norm;
    fill_exit_state(fit, model, view.exit_local_x);
    return fit;
}

}  // namespace

BatchResult fit_batch(const ModelSpec& model, const ReducedForm& unconstrained,
                      const ReducedForm& constrained, std::span<const SegmentView> views,
                      std::size_t kept_count,
                      const std::optional<ContinuityTargets>& entry_targets,
                      const std::optional<std::vector<double>>& carry_guess,
                      const Bounds& bounds, const LMConfig& config) {
    if (views.empty() || kept_count == 0 || kept_count > views.size() ||
        views.size() > kept_count + 1)
        throw Error(ErrorCode::ConfigError, "malformed batch window");

    BatchResult result;
    std::optional<ContinuityTargets> targets = entry_targets;

    for (std::size_t i = 0; i < views.size(); ++i) {
        const SegmentView& view = views[i];
        const bool constrain = targets.has_value() && constrained.with_continuity;
        const ReducedForm& form = constrain ? constrained : unconstrained;

        std::vector<double> guess;
        if (i == 0 && carry_guess && carry_guess->size() == form.free_indices.size()) {
            guess = *carry_guess;
        } else {
            std::vector<double> full = initial_guess(model, view.xhat, view.y);
            guess = free_subset(form, full);
        }

        SegmentFit fit = fit_segment(model, form, view, guess,
                                     constrain ? targets : std::nullopt, bounds, config);
        targets = ContinuityTargets{fit.exit_value, fit.exit_slope};

        if (i < kept_count) {
            result.kept.push_back(std::move(fit));
            result.exit_targets = targets;
        } else {
            // overlap segment: discarded from the fit, kept as the next guess
            result.carry_guess = free_subset(constrained.with_continuity ? constrained : unconstrained,
                                             fit.params);
        }
    }
    return result;
}

ModeFit fit_mode(const Signal& normalized, std::span<const std::size_t> boundaries,
                 int mode_index, const ModelSpec& model, const ReducedForm& unconstrained,
                 const ReducedForm& constrained, const Bounds& bounds, const LMConfig& config) {
    if (boundaries.size() < 2) throw Error(ErrorCode::SegmentTooSmall, "mode has no segments");
    const std::size_t k = boundaries.size() - 1;
    const std::size_t n = normalized.size();

    ModeFit mode;
    mode.mode_index = mode_index;
    mode.is_trend = (k == 1);

    std::vector<std::vector<double>> local_x(k);
    std::vector<SegmentView> views(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t begin = boundaries[i], end = boundaries[i + 1];
        double anchor = normalized.x[begin];
        local_x[i] = localize(std::span<const double>(normalized.x).subspan(begin, end - begin),
                              anchor);
        views[i].segment_index = static_cast<int>(i);
        views[i].begin = begin;
        views[i].end = end;
        views[i].xhat = local_x[i];
        views[i].y = std::span<const double>(normalized.y).subspan(begin, end - begin);
        views[i].anchor_norm = anchor;
        // exit state lives at the shared boundary point (the next anchor);
        // the last segment reports its final sample instead
        views[i].exit_local_x =
            (i + 1 < k) ? normalized.x[boundaries[i + 1]] - anchor : normalized.x[n - 1] - anchor;
    }

    const auto s = static_cast<std::size_t>(config.batch_size);
    std::size_t b = 0;
    std::optional<ContinuityTargets> entry;
    std::optional<std::vector<double>> carry;
    while (b < k) {
        std::size_t kept = std::min(s, k - b);
        bool overlap = (b + kept) < k;
        auto window = std::span<const SegmentView>(views).subspan(b, kept + (overlap ? 1 : 0));
        BatchResult res =
            fit_batch(model, unconstrained, constrained, window, kept, entry, carry, bounds, config);
        for (auto& fit : res.kept) {
            fit.mode_index = mode_index;
            mode.segments.push_back(std::move(fit));
        }
        entry = res.exit_targets;
        carry = res.carry_guess;
        b += kept;
    }
    return mode;
}

SegmentFit fit_trend(const Signal& normalized, const ModelSpec& model,
                     const ReducedForm& unconstrained, const Bounds& bounds,
                     const LMConfig& config) {
    const std::size_t n = normalized.size();
    SegmentView view;
    view.segment_index = 0;
    view.begin = 0;
    view.end = n;
    view.anchor_norm = normalized.x[0];
    std::vector<double> local = localize(normalized.x, view.anchor_norm);
    view.xhat = local;
    view.y = normalized.y;
    view.exit_local_x = normalized.x[n - 1] - view.anchor_norm;

    std::vector<double> full = initial_guess(model, view.xhat, view.y);
    std::vector<double> guess = free_subset(unconstrained, full);
    return fit_segment(model, unconstrained, view, guess, std::nullopt, bounds, config);
}

}  // namespace fcd
