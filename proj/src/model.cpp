#include "fcd/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace fcd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<ExprPtr> make_param_grads(const ExprPtr& expr, std::size_t n) {
    std::vector<ExprPtr> grads(n);
    for (std::size_t j = 0; j < n; ++j) grads[j] = diff_param(expr, static_cast<int>(j));
    return grads;
}

ExprPtr try_antiderivative(const ExprPtr& expr) {
    try {
        return antiderivative(expr);
    } catch (const Error&) {
        return nullptr;
    }
}

int find_param(const std::vector<std::string>& names, const std::string& wanted) {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == wanted) return static_cast<int>(i);
    return -1;
}

void validate_model(const ModelSpec& m) {
    if (m.continuity != ContinuityOrder::None) {
        if (m.value_param < 0)
            throw Error(ErrorCode::ContinuityUnsolvable, "continuity requires a value parameter");
        if (m.continuity == ContinuityOrder::C1 && m.slope_param < 0)
            throw Error(ErrorCode::ContinuityUnsolvable, "C1 continuity requires a slope parameter");
        // algebraically derived parameters cannot be constrained by bounds
        auto bounded = [&](int idx) {
            if (idx < 0 || m.bounds.empty()) return false;
            auto [lo, hi] = m.bounds[static_cast<std::size_t>(idx)];
            return lo != -kInf || hi != kInf;
        };
        if (bounded(m.value_param) || bounded(m.slope_param))
            throw Error(ErrorCode::ConfigError,
                        "bounds may not cover continuity-fixed parameters ('" +
                            m.param_names[static_cast<std::size_t>(m.value_param)] + "'" +
                            (m.continuity == ContinuityOrder::C1
                                 ? ", '" + m.param_names[static_cast<std::size_t>(m.slope_param)] + "'"
                                 : "") +
                            ")");
    }
    if (!m.unscale.empty() && m.unscale.size() != m.param_count())
        throw Error(ErrorCode::ConfigError, "unscale rules misaligned with parameters");
    if (!m.bounds.empty() && m.bounds.size() != m.param_count())
        throw Error(ErrorCode::ConfigError, "bounds misaligned with parameters");
}

}  // namespace

bool ModelSpec::has_bounds() const {
    for (const auto& [lo, hi] : bounds)
        if (lo != -kInf || hi != kInf) return true;
    return false;
}

int ModelSpec::fixed_param_count() const {
    switch (continuity) {
        case ContinuityOrder::None: return 0;
        case ContinuityOrder::C0: return 1;
        case ContinuityOrder::C1: return 2;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

namespace {

struct PresetDef {
    const char* name;
    const char* expression;
    std::vector<std::string> params;
    ContinuityOrder continuity;
    const char* value_param;
    const char* slope_param;
    std::vector<UnscaleRule> unscale;
    GuessKind guess;
};

// unscale shorthands
constexpr UnscaleRule Y{1, 0, false};         // amplitude-like: * sigma_y
constexpr UnscaleRule YoX{1, -1, false};      // slope-like: * sigma_y / sigma_x
constexpr UnscaleRule YoX2{1, -2, false};     // * sigma_y / sigma_x^2
constexpr UnscaleRule YoX3{1, -3, false};     // * sigma_y / sigma_x^3
constexpr UnscaleRule InvX{0, -1, false};     // frequency/rate-like: / sigma_x
constexpr UnscaleRule X{0, 1, false};         // position/width-like: * sigma_x
constexpr UnscaleRule Plain{0, 0, false};     // dimensionless (phase)
constexpr UnscaleRule Offset{1, 0, true};     // * sigma_y + mu_y

const std::vector<PresetDef>& preset_table() {
    static const std::vector<PresetDef> defs = {
        {"linear", "a*x + b", {"a", "b"},
         ContinuityOrder::C1, "b", "a",
         {YoX, Offset}, GuessKind::Polynomial},
        {"quadratic", "a*x^2 + b*x + c", {"a", "b", "c"},
         ContinuityOrder::C1, "c", "b",
         {YoX2, YoX, Offset}, GuessKind::Polynomial},
        {"cubic", "a*x^3 + b*x^2 + c*x + d", {"a", "b", "c", "d"},
         ContinuityOrder::C1, "d", "c",
         {YoX3, YoX2, YoX, Offset}, GuessKind::Polynomial},
        {"sin4", "A0*sin(B0*x + D) + C0", {"A0", "B0", "D", "C0"},
         ContinuityOrder::C0, "C0", "",
         {Y, InvX, Plain, Offset}, GuessKind::Sinusoid},
        {"sin5", "A0*sin(B0*x + D) + C1*x + C0", {"A0", "B0", "D", "C1", "C0"},
         ContinuityOrder::C1, "C0", "C1",
         {Y, InvX, Plain, YoX, Offset}, GuessKind::Sinusoid},
        {"sin6", "(A1*x + A0)*sin(B0*x + D) + C1*x + C0",
         {"A1", "A0", "B0", "D", "C1", "C0"},
         ContinuityOrder::C1, "C0", "C1",
         {YoX, Y, InvX, Plain, YoX, Offset}, GuessKind::Sinusoid},
        {"sin7", "(A1*x + A0)*sin(B0*x + D) + C2*x^2 + C1*x + C0",
         {"A1", "A0", "B0", "D", "C2", "C1", "C0"},
         ContinuityOrder::C1, "C0", "C1",
         {YoX, Y, InvX, Plain, YoX2, YoX, Offset}, GuessKind::Sinusoid},
        {"decay", "A*exp(-k*x) + a*x + b", {"A", "k", "a", "b"},
         ContinuityOrder::C1, "b", "a",
         {Y, InvX, YoX, Offset}, GuessKind::Decay},
        {"fourier",
         "Af1*sin(w*x + ph1) + Af2*sin(2*w*x + ph2) + Af3*sin(3*w*x + ph3) + a*x + b",
         {"Af1", "Af2", "Af3", "w", "ph1", "ph2", "ph3", "a", "b"},
         ContinuityOrder::C1, "b", "a",
         {Y, Y, Y, InvX, Plain, Plain, Plain, YoX, Offset}, GuessKind::Fourier},
        {"gaussian", "A*exp(-((x - m)/w)^2) + b", {"A", "m", "w", "b"},
         ContinuityOrder::C0, "b", "",
         {Y, X, X, Offset}, GuessKind::Gaussian},
        {"logistic", "L/(1 + exp(-k*(x - x0))) + b", {"L", "k", "x0", "b"},
         ContinuityOrder::C0, "b", "",
         {Y, InvX, X, Offset}, GuessKind::Logistic},
    };
    return defs;
}

}  // namespace

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& def : preset_table()) out.emplace_back(def.name);
        return out;
    }();
    return names;
}

ModelSpec preset(const std::string& name) {
    for (const auto& def : preset_table()) {
        if (name != def.name) continue;
        ModelSpec m;
        m.name = def.name;
        m.param_names = def.params;
        m.expr = parse_expression(def.expression, m.param_names);
        m.d_expr = diff_var(m.expr);
        m.param_grads = make_param_grads(m.expr, m.param_count());
        m.antideriv_expr = try_antiderivative(m.expr);
        m.continuity = def.continuity;
        m.value_param = def.value_param[0] ? find_param(m.param_names, def.value_param) : -1;
        m.slope_param = def.slope_param[0] ? find_param(m.param_names, def.slope_param) : -1;
        m.unscale = def.unscale;
        m.default_guess.assign(m.param_count(), 0.0);
        m.bounds.assign(m.param_count(), {-kInf, kInf});
        m.guess_kind = def.guess;
        validate_model(m);
        return m;
    }
    throw Error(ErrorCode::UnknownModel, "unknown model '" + name + "'");
}

// ---------------------------------------------------------------------------
// Custom models
// ---------------------------------------------------------------------------

ModelSpec parse_model(const std::string& expression, const std::vector<std::string>& param_names,
                      const CustomModelOptions& options) {
    for (const auto& n : param_names) {
        static const std::vector<std::string> reserved = {"x",   "sin",  "cos", "tan",
                                                          "exp", "log",  "sqrt", "abs"};
        if (std::find(reserved.begin(), reserved.end(), n) != reserved.end())
            throw Error(ErrorCode::ConfigError, "parameter name '" + n + "' is reserved");
    }
    ModelSpec m;
    m.name = "custom";
    m.param_names = param_names;
    m.expr = parse_expression(expression, param_names);
    m.d_expr = diff_var(m.expr);
    m.param_grads = make_param_grads(m.expr, m.param_count());
    m.antideriv_expr = try_antiderivative(m.expr);
    m.continuity = options.continuity;
    if (options.continuity != ContinuityOrder::None) {
        m.value_param = find_param(param_names, options.value_param);
        if (m.value_param < 0)
            throw Error(ErrorCode::ConfigError,
                        "fixed value parameter '" + options.value_param + "' not in parameter list");
        if (options.continuity == ContinuityOrder::C1) {
            m.slope_param = find_param(param_names, options.slope_param);
            if (m.slope_param < 0)
                throw Error(ErrorCode::ConfigError, "fixed slope parameter '" +
                                                        options.slope_param +
                                                        "' not in parameter list");
        }
    }
    if (!options.initial_guess.empty()) {
        if (options.initial_guess.size() != m.param_count())
            throw Error(ErrorCode::ConfigError, "initial guess length does not match parameters");
        m.default_guess = options.initial_guess;
    } else {
        m.default_guess.assign(m.param_count(), 0.0);
    }
    if (!options.bounds.empty()) {
        if (options.bounds.size() != m.param_count())
            throw Error(ErrorCode::ConfigError, "bounds length does not match parameters");
        m.bounds = options.bounds;
    } else {
        m.bounds.assign(m.param_count(), {-kInf, kInf});
    }
    m.guess_kind = GuessKind::Custom;
    validate_model(m);
    if (m.continuity != ContinuityOrder::None)
        reduce_model(m, true);  // fail fast on non-affine fixed parameters
    return m;
}

// ---------------------------------------------------------------------------
// Continuity reduction
// ---------------------------------------------------------------------------

ReducedForm reduce_model(const ModelSpec& model, bool with_continuity) {
    ReducedForm form;
    form.n_params = static_cast<int>(model.param_count());
    form.order = with_continuity ? model.continuity : ContinuityOrder::None;
    form.with_continuity = form.order != ContinuityOrder::None;

    if (!form.with_continuity) {
        form.free_indices.resize(model.param_count());
        std::iota(form.free_indices.begin(), form.free_indices.end(), 0);
        form.expr = model.expr;
        form.d_expr = model.d_expr;
        form.grads = model.param_grads;
    } else {
        const int iv = model.value_param;
        const int is = form.order == ContinuityOrder::C1 ? model.slope_param : -1;
        const ExprPtr zero = make_constant(0.0);
        const ExprPtr v = make_parameter(form.target_value_slot());
        const ExprPtr s = make_parameter(form.target_slope_slot());

        // f(0, p) and f'(0, p) as expressions in the parameters alone
        ExprPtr f0 = substitute_var(model.expr, zero);
        ExprPtr fp0 = substitute_var(model.d_expr, zero);

        auto affine_parts = [&](const ExprPtr& g, const char* what) {
            ExprPtr cv = diff_param(g, iv);
            ExprPtr cs = is >= 0 ? diff_param(g, is) : make_constant(0.0);
            for (const ExprPtr& c : {cv, cs}) {
                if (contains_parameter(c, iv) || (is >= 0 && contains_parameter(c, is)))
                    throw Error(ErrorCode::ContinuityUnsolvable,
                                std::string("fixed parameter appears non-affinely in ") + what);
            }
            std::vector<ExprPtr> to_zero(model.param_count(), nullptr);
            to_zero[static_cast<std::size_t>(iv)] = zero;
            if (is >= 0) to_zero[static_cast<std::size_t>(is)] = zero;
            ExprPtr rest = substitute_params(g, to_zero);
            return std::tuple<ExprPtr, ExprPtr, ExprPtr>{cv, cs, rest};
        };

        auto [a_v, a_s, e_v] = affine_parts(f0, "f(0)");
        ExprPtr rv = make_sub(v, e_v);

        ExprPtr value_solution, slope_solution;
        if (form.order == ContinuityOrder::C0) {
            form.det = a_v;
            value_solution = make_div(rv, a_v);
        } else {
            auto [b_v, b_s, e_s] = affine_parts(fp0, "f'(0)");
            ExprPtr rs = make_sub(s, e_s);
            // [a_v a_s; b_v b_s] [pv; ps] = [rv; rs]
            form.det = make_sub(make_mul(a_v, b_s), make_mul(a_s, b_v));
            value_solution = make_div(make_sub(make_mul(rv, b_s), make_mul(a_s, rs)), form.det);
            slope_solution = make_div(make_sub(make_mul(a_v, rs), make_mul(b_v, rv)), form.det);
        }

        std::vector<ExprPtr> repl(model.param_count(), nullptr);
        repl[static_cast<std::size_t>(iv)] = value_solution;
        if (is >= 0) repl[static_cast<std::size_t>(is)] = slope_solution;

        form.expr = substitute_params(model.expr, repl);
        form.d_expr = substitute_params(model.d_expr, repl);
        form.value_solution = value_solution;
        form.slope_solution = slope_solution;

        for (std::size_t j = 0; j < model.param_count(); ++j) {
            if (static_cast<int>(j) == iv || static_cast<int>(j) == is) continue;
            form.free_indices.push_back(static_cast<int>(j));
        }
        form.grads.reserve(form.free_indices.size());
        for (int j : form.free_indices) form.grads.push_back(diff_param(form.expr, j));
    }

    form.c_expr = CompiledExpr(form.expr);
    form.c_d_expr = CompiledExpr(form.d_expr);
    form.c_grads.reserve(form.grads.size());
    for (const auto& g : form.grads) form.c_grads.emplace_back(g);
    if (form.value_solution) form.c_value = CompiledExpr(form.value_solution);
    if (form.slope_solution) form.c_slope = CompiledExpr(form.slope_solution);
    if (form.det) form.c_det = CompiledExpr(form.det);
    return form;
}

void solve_continuity(const ModelSpec& model, const ReducedForm& form, std::span<double> ext) {
    if (!form.with_continuity) return;
    if (ext.size() != form.extended_size())
        throw Error(ErrorCode::ConfigError, "extended parameter vector has wrong size");
    if (form.det && !form.c_det.empty()) {
        double det = form.c_det(0.0, ext);
        if (!std::isfinite(det) || std::fabs(det) < 1e-14)
            throw Error(ErrorCode::ContinuitySingular,
                        "degenerate free-parameter configuration (det=" + std::to_string(det) + ")");
    }
    double pv = form.c_value(0.0, ext);
    double ps = form.slope_solution ? form.c_slope(0.0, ext) : 0.0;
    if (!std::isfinite(pv) || (form.slope_solution && !std::isfinite(ps)))
        throw Error(ErrorCode::ContinuitySingular, "continuity solution is non-finite");
    ext[static_cast<std::size_t>(model.value_param)] = pv;
    if (form.order == ContinuityOrder::C1) ext[static_cast<std::size_t>(model.slope_param)] = ps;
}

// ---------------------------------------------------------------------------
// Evaluation helpers
// ---------------------------------------------------------------------------

std::vector<double> evaluate(const ModelSpec& model, std::span<const double> params,
                             std::span<const double> xhat) {
    CompiledExpr c(model.expr);
    std::vector<double> out(xhat.size());
    for (std::size_t i = 0; i < xhat.size(); ++i) {
        out[i] = c(xhat[i], params);
        if (!std::isfinite(out[i]))
            throw Error(ErrorCode::EvalDomainError,
                        "non-finite model value at point " + std::to_string(i),
                        static_cast<long>(i));
    }
    return out;
}

double evaluate_at(const ModelSpec& model, std::span<const double> params, double xhat) {
    return eval(model.expr, xhat, params);
}

std::vector<std::vector<double>> jacobian(const ReducedForm& form, std::span<const double> ext,
                                          std::span<const double> xhat) {
    std::vector<std::vector<double>> out(xhat.size(),
                                         std::vector<double>(form.free_indices.size(), 0.0));
    for (std::size_t i = 0; i < xhat.size(); ++i)
        for (std::size_t j = 0; j < form.c_grads.size(); ++j)
            out[i][j] = -form.c_grads[j](xhat[i], ext);
    return out;
}

// ---------------------------------------------------------------------------
// Initial guesses
// ---------------------------------------------------------------------------

namespace {

double span_of(std::span<const double> xhat) {
    if (xhat.size() < 2) return 1.0;
    double s = xhat.back() - xhat.front();
    return s > 0.0 ? s : 1.0;
}

double mean_of(std::span<const double> v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

void set_param(std::vector<double>& g, const ModelSpec& m, const char* name, double value) {
    int idx = find_param(m.param_names, name);
    if (idx >= 0) g[static_cast<std::size_t>(idx)] = value;
}

}  // namespace

std::vector<double> initial_guess(const ModelSpec& model, std::span<const double> xhat,
                                  std::span<const double> y) {
    std::vector<double> g = model.default_guess;
    g.resize(model.param_count(), 0.0);
    if (y.empty()) return g;

    const double span = span_of(xhat);
    const double mean = mean_of(y);
    const double sd = population_std(y);
    const double first = y.front(), last = y.back();
    const double slope = (last - first) / span;
    const double two_pi = 6.283185307179586;

    switch (model.guess_kind) {
        case GuessKind::Polynomial:
            std::fill(g.begin(), g.end(), 0.0);
            if (model.value_param >= 0) g[static_cast<std::size_t>(model.value_param)] = first;
            break;
        case GuessKind::Sinusoid:
            set_param(g, model, "A1", 0.0);
            set_param(g, model, "A0", sd * std::sqrt(2.0));
            set_param(g, model, "B0", two_pi / span);
            set_param(g, model, "D", 0.0);
            set_param(g, model, "C2", 0.0);
            if (find_param(model.param_names, "C1") >= 0) {
                set_param(g, model, "C1", slope);
                set_param(g, model, "C0", first);
            } else {
                set_param(g, model, "C0", mean);
            }
            break;
        case GuessKind::Decay:
            set_param(g, model, "A", first - last);
            set_param(g, model, "k", 2.0 / span);
            set_param(g, model, "a", 0.0);
            set_param(g, model, "b", last);
            break;
        case GuessKind::Gaussian: {
            std::size_t peak = 0;
            for (std::size_t i = 1; i < y.size(); ++i)
                if (std::fabs(y[i] - mean) > std::fabs(y[peak] - mean)) peak = i;
            set_param(g, model, "A", y[peak] - mean);
            set_param(g, model, "m", xhat[peak]);
            set_param(g, model, "w", span / 4.0);
            set_param(g, model, "b", mean);
            break;
        }
        case GuessKind::Logistic:
            set_param(g, model, "L", last - first);
            set_param(g, model, "k", 4.0 / span);
            set_param(g, model, "x0", xhat.front() + span / 2.0);
            set_param(g, model, "b", first);
            break;
        case GuessKind::Fourier:
            set_param(g, model, "Af1", sd * std::sqrt(2.0));
            set_param(g, model, "Af2", sd * std::sqrt(2.0) * 0.3);
            set_param(g, model, "Af3", sd * std::sqrt(2.0) * 0.15);
            set_param(g, model, "w", two_pi / span);
            set_param(g, model, "ph1", 0.0);
            set_param(g, model, "ph2", 0.0);
            set_param(g, model, "ph3", 0.0);
            set_param(g, model, "a", slope);
            set_param(g, model, "b", first);
            break;
        case GuessKind::Custom:
            break;
    }

    // respect declared bounds
    for (std::size_t j = 0; j < g.size() && j < model.bounds.size(); ++j)
        g[j] = std::clamp(g[j], model.bounds[j].first, model.bounds[j].second);
    return g;
}

// ---------------------------------------------------------------------------
// Unscaling
// ---------------------------------------------------------------------------

std::vector<double> unscale_params(const ModelSpec& model, std::span<const double> normalized,
                                   const NormalizationState& state) {
    if (!model.has_unscale())
        throw Error(ErrorCode::ConfigError, "model '" + model.name + "' has no unscale rules");
    if (normalized.size() != model.param_count())
        throw Error(ErrorCode::ConfigError, "parameter vector length mismatch");
    std::vector<double> out(normalized.size());
    for (std::size_t j = 0; j < normalized.size(); ++j) {
        const UnscaleRule& rule = model.unscale[j];
        double factor = std::pow(state.sigma_y, rule.pow_y) * std::pow(state.sigma_x, rule.pow_x);
        out[j] = normalized[j] * factor + (rule.add_mu_y ? state.mu_y : 0.0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Derivative / antiderivative models
// ---------------------------------------------------------------------------

ModelSpec differentiate_fit(const ModelSpec& model) {
    ModelSpec out;
    out.name = model.name + "'";
    out.param_names = model.param_names;
    out.expr = model.d_expr;
    out.d_expr = diff_var(out.expr);
    out.param_grads = make_param_grads(out.expr, out.param_count());
    out.antideriv_expr = model.expr;  // d/dx inverts trivially
    out.default_guess = model.default_guess;
    out.bounds.assign(out.param_count(), {-kInf, kInf});
    out.guess_kind = GuessKind::Custom;
    return out;
}

ModelSpec antidifferentiate_fit(const ModelSpec& model) {
    ExprPtr anti = model.antideriv_expr ? model.antideriv_expr : antiderivative(model.expr);
    ModelSpec out;
    out.name = "int(" + model.name + ")";
    out.param_names = model.param_names;
    out.expr = anti;
    out.d_expr = model.expr;
    out.param_grads = make_param_grads(out.expr, out.param_count());
    out.default_guess = model.default_guess;
    out.bounds.assign(out.param_count(), {-kInf, kInf});
    out.guess_kind = GuessKind::Custom;
    return out;
}

}  // namespace fcd
