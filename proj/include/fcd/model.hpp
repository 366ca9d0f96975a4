#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fcd/expr.hpp"
#include "fcd/signal.hpp"

namespace fcd {

enum class ContinuityOrder { None, C0, C1 };

/// physical = normalized * sigma_y^pow_y * sigma_x^pow_x + (add_mu_y ? mu_y : 0)
struct UnscaleRule {
    int pow_y = 0;
    int pow_x = 0;
    bool add_mu_y = false;
};

enum class GuessKind { Custom, Polynomial, Sinusoid, Decay, Gaussian, Logistic, Fourier };

struct ModelSpec {
    std::string name;
    std::vector<std::string> param_names;
    ExprPtr expr;                     // f(x_hat, p)
    ExprPtr d_expr;                   // df/dx_hat
    std::vector<ExprPtr> param_grads; // df/dp_j, unreduced
    ExprPtr antideriv_expr;           // null when no closed form

    ContinuityOrder continuity = ContinuityOrder::None;
    int value_param = -1;  // C0 fixed parameter
    int slope_param = -1;  // C1 fixed parameter

    std::vector<UnscaleRule> unscale;  // empty -> parameters stay normalized
    std::vector<double> default_guess;
    std::vector<std::pair<double, double>> bounds;  // per param, +-inf when free
    GuessKind guess_kind = GuessKind::Custom;

    std::size_t param_count() const { return param_names.size(); }
    bool has_unscale() const { return !unscale.empty(); }
    bool has_bounds() const;
    int fixed_param_count() const;
};

ModelSpec preset(const std::string& name);
const std::vector<std::string>& preset_names();

struct CustomModelOptions {
    ContinuityOrder continuity = ContinuityOrder::None;
    std::string value_param;  // required for C0/C1
    std::string slope_param;  // required for C1
    std::vector<double> initial_guess;                // zeros when empty
    std::vector<std::pair<double, double>> bounds;    // aligned with params, or empty
};

/// Builds a ModelSpec from an expression string: symbolic derivative and
/// per-parameter gradients, antiderivative when the expression is in the
/// closed-form family, and the continuity solver when the designated fixed
/// parameters enter f(0,.) and f'(0,.) affinely.
ModelSpec parse_model(const std::string& expression,
                      const std::vector<std::string>& param_names,
                      const CustomModelOptions& options = {});

// Continuity-reduced form of a model. Works on an extended parameter vector
// [p_0 .. p_{np-1}, target_value, target_slope]; the two target slots are
// constants during optimization and the fixed parameter slots are overwritten
// by solve_continuity.
struct ReducedForm {
    int n_params = 0;
    bool with_continuity = false;
    ContinuityOrder order = ContinuityOrder::None;
    std::vector<int> free_indices;

    ExprPtr expr;    // fixed params substituted by their closed-form solutions
    ExprPtr d_expr;
    std::vector<ExprPtr> grads;  // d expr / d p_j per free index (chain rule included)
    ExprPtr value_solution;      // null when not applicable
    ExprPtr slope_solution;
    ExprPtr det;                 // C1 2x2 determinant (x-free)

    CompiledExpr c_expr, c_d_expr, c_value, c_slope, c_det;
    std::vector<CompiledExpr> c_grads;

    std::size_t extended_size() const { return static_cast<std::size_t>(n_params) + 2; }
    int target_value_slot() const { return n_params; }
    int target_slope_slot() const { return n_params + 1; }
};

ReducedForm reduce_model(const ModelSpec& model, bool with_continuity);

/// Solves the fixed continuity parameters from the targets stored in the
/// extended vector and writes them into their slots in place.
/// Throws ContinuitySingular when the 2x2 system degenerates.
void solve_continuity(const ModelSpec& model, const ReducedForm& form, std::span<double> ext);

/// Elementwise model evaluation; throws EvalDomainError on non-finite output.
std::vector<double> evaluate(const ModelSpec& model, std::span<const double> params,
                             std::span<const double> xhat);
double evaluate_at(const ModelSpec& model, std::span<const double> params, double xhat);

/// Residual Jacobian J_ij = -df/dp_j over the free parameters of `form`
/// (row-major, points x free); fixed parameters are substituted before
/// differentiation so the continuity chain rule is included.
std::vector<std::vector<double>> jacobian(const ReducedForm& form,
                                          std::span<const double> ext,
                                          std::span<const double> xhat);

/// Data-driven initial guess (moment based for presets).
std::vector<double> initial_guess(const ModelSpec& model, std::span<const double> xhat,
                                  std::span<const double> y);

/// Applies the per-parameter unscale rules; requires model.has_unscale().
std::vector<double> unscale_params(const ModelSpec& model, std::span<const double> normalized,
                                   const NormalizationState& state);

/// Expression-level derivative/antiderivative models sharing the parameter
/// vector. Continuity and unscale metadata do not carry over.
ModelSpec differentiate_fit(const ModelSpec& model);
ModelSpec antidifferentiate_fit(const ModelSpec& model);  // throws NoClosedFormIntegral

}  // namespace fcd
