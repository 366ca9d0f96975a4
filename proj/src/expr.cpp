#include "fcd/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>

namespace fcd {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidSignal: return "InvalidSignal";
        case ErrorCode::TooFewPoints: return "TooFewPoints";
        case ErrorCode::SegmentTooSmall: return "SegmentTooSmall";
        case ErrorCode::UnknownModel: return "UnknownModel";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::UnknownIdentifier: return "UnknownIdentifier";
        case ErrorCode::ContinuityUnsolvable: return "ContinuityUnsolvable";
        case ErrorCode::ContinuitySingular: return "ContinuitySingular";
        case ErrorCode::EvalDomainError: return "EvalDomainError";
        case ErrorCode::SolveFailed: return "SolveFailed";
        case ErrorCode::BadInitialGuess: return "BadInitialGuess";
        case ErrorCode::NoClosedFormIntegral: return "NoClosedFormIntegral";
        case ErrorCode::EmptySegment: return "EmptySegment";
        case ErrorCode::ExtrapolationError: return "ExtrapolationError";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::DataError: return "DataError";
    }
    return "Error";
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

namespace {

ExprPtr node(ExprOp op, ExprPtr lhs = nullptr, ExprPtr rhs = nullptr) {
    auto e = std::make_shared<Expr>();
    e->op = op;
    e->lhs = std::move(lhs);
    e->rhs = std::move(rhs);
    return e;
}

bool is_const(const ExprPtr& e) { return e->op == ExprOp::Constant; }

}  // namespace

ExprPtr make_constant(double v) {
    auto e = std::make_shared<Expr>();
    e->op = ExprOp::Constant;
    e->value = v;
    return e;
}

ExprPtr make_variable() { return node(ExprOp::Variable); }

ExprPtr make_parameter(int index) {
    auto e = std::make_shared<Expr>();
    e->op = ExprOp::Parameter;
    e->index = index;
    return e;
}

bool is_constant(const ExprPtr& e, double v) {
    return e && e->op == ExprOp::Constant && e->value == v;
}

ExprPtr make_add(ExprPtr a, ExprPtr b) {
    if (is_const(a) && is_const(b)) return make_constant(a->value + b->value);
    if (is_constant(a, 0.0)) return b;
    if (is_constant(b, 0.0)) return a;
    if (b->op == ExprOp::Negate) return make_sub(std::move(a), b->lhs);
    if (is_const(b) && b->value < 0.0) return make_sub(std::move(a), make_constant(-b->value));
    return node(ExprOp::Add, std::move(a), std::move(b));
}

ExprPtr make_sub(ExprPtr a, ExprPtr b) {
    if (is_const(a) && is_const(b)) return make_constant(a->value - b->value);
    if (is_constant(b, 0.0)) return a;
    if (is_constant(a, 0.0)) return make_neg(std::move(b));
    if (b->op == ExprOp::Negate) return make_add(std::move(a), b->lhs);
    return node(ExprOp::Subtract, std::move(a), std::move(b));
}

ExprPtr make_mul(ExprPtr a, ExprPtr b) {
    if (is_const(a) && is_const(b)) return make_constant(a->value * b->value);
    if (is_constant(a, 0.0) || is_constant(b, 0.0)) return make_constant(0.0);
    if (is_constant(a, 1.0)) return b;
    if (is_constant(b, 1.0)) return a;
    if (is_constant(a, -1.0)) return make_neg(std::move(b));
    if (is_constant(b, -1.0)) return make_neg(std::move(a));
    // keep constants on the left for readable output
    if (is_const(b) && !is_const(a)) return node(ExprOp::Multiply, std::move(b), std::move(a));
    return node(ExprOp::Multiply, std::move(a), std::move(b));
}

ExprPtr make_div(ExprPtr a, ExprPtr b) {
    if (is_const(a) && is_const(b) && b->value != 0.0) return make_constant(a->value / b->value);
    if (is_constant(a, 0.0)) return make_constant(0.0);
    if (is_constant(b, 1.0)) return a;
    return node(ExprOp::Divide, std::move(a), std::move(b));
}

ExprPtr make_pow(ExprPtr base, ExprPtr exponent) {
    if (is_constant(exponent, 0.0)) return make_constant(1.0);
    if (is_constant(exponent, 1.0)) return base;
    if (is_const(base) && is_const(exponent)) return make_constant(std::pow(base->value, exponent->value));
    return node(ExprOp::Power, std::move(base), std::move(exponent));
}

ExprPtr make_neg(ExprPtr a) {
    if (is_const(a)) return make_constant(-a->value);
    if (a->op == ExprOp::Negate) return a->lhs;
    return node(ExprOp::Negate, std::move(a));
}

ExprPtr make_call(ExprOp func, ExprPtr arg) {
    if (is_const(arg)) {
        double v = arg->value;
        switch (func) {
            case ExprOp::Sin: return make_constant(std::sin(v));
            case ExprOp::Cos: return make_constant(std::cos(v));
            case ExprOp::Tan: return make_constant(std::tan(v));
            case ExprOp::Exp: return make_constant(std::exp(v));
            case ExprOp::Log: return make_constant(std::log(v));
            case ExprOp::Sqrt: return make_constant(std::sqrt(v));
            case ExprOp::Abs: return make_constant(std::fabs(v));
            default: break;
        }
    }
    return node(func, std::move(arg));
}

// ---------------------------------------------------------------------------
// Queries and evaluation
// ---------------------------------------------------------------------------

bool contains_variable(const ExprPtr& e) {
    if (!e) return false;
    if (e->op == ExprOp::Variable) return true;
    return contains_variable(e->lhs) || contains_variable(e->rhs);
}

bool contains_parameter(const ExprPtr& e, int index) {
    if (!e) return false;
    if (e->op == ExprOp::Parameter) return e->index == index;
    return contains_parameter(e->lhs, index) || contains_parameter(e->rhs, index);
}

int max_parameter_index(const ExprPtr& e) {
    if (!e) return -1;
    int m = (e->op == ExprOp::Parameter) ? e->index : -1;
    return std::max({m, max_parameter_index(e->lhs), max_parameter_index(e->rhs)});
}

double eval(const ExprPtr& e, double x, std::span<const double> params) {
    switch (e->op) {
        case ExprOp::Constant: return e->value;
        case ExprOp::Variable: return x;
        case ExprOp::Parameter: return params[static_cast<std::size_t>(e->index)];
        case ExprOp::Add: return eval(e->lhs, x, params) + eval(e->rhs, x, params);
        case ExprOp::Subtract: return eval(e->lhs, x, params) - eval(e->rhs, x, params);
        case ExprOp::Multiply: return eval(e->lhs, x, params) * eval(e->rhs, x, params);
        case ExprOp::Divide: return eval(e->lhs, x, params) / eval(e->rhs, x, params);
        case ExprOp::Power: return std::pow(eval(e->lhs, x, params), eval(e->rhs, x, params));
        case ExprOp::Negate: return -eval(e->lhs, x, params);
        case ExprOp::Sin: return std::sin(eval(e->lhs, x, params));
        case ExprOp::Cos: return std::cos(eval(e->lhs, x, params));
        case ExprOp::Tan: return std::tan(eval(e->lhs, x, params));
        case ExprOp::Exp: return std::exp(eval(e->lhs, x, params));
        case ExprOp::Log: return std::log(eval(e->lhs, x, params));
        case ExprOp::Sqrt: return std::sqrt(eval(e->lhs, x, params));
        case ExprOp::Abs: return std::fabs(eval(e->lhs, x, params));
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Differentiation
// ---------------------------------------------------------------------------

namespace {

// d/dw where w is either the variable (index < 0) or parameter `index`.
ExprPtr diff_impl(const ExprPtr& e, int index) {
    switch (e->op) {
        case ExprOp::Constant: return make_constant(0.0);
        case ExprOp::Variable: return make_constant(index < 0 ? 1.0 : 0.0);
        case ExprOp::Parameter:
            return make_constant(index >= 0 && e->index == index ? 1.0 : 0.0);
        case ExprOp::Add:
            return make_add(diff_impl(e->lhs, index), diff_impl(e->rhs, index));
        case ExprOp::Subtract:
            return make_sub(diff_impl(e->lhs, index), diff_impl(e->rhs, index));
        case ExprOp::Multiply:
            return make_add(make_mul(diff_impl(e->lhs, index), e->rhs),
                            make_mul(e->lhs, diff_impl(e->rhs, index)));
        case ExprOp::Divide:
            // (u/v)' = (u'v - uv') / v^2
            return make_div(make_sub(make_mul(diff_impl(e->lhs, index), e->rhs),
                                     make_mul(e->lhs, diff_impl(e->rhs, index))),
                            make_pow(e->rhs, make_constant(2.0)));
        case ExprOp::Power: {
            const ExprPtr& u = e->lhs;
            const ExprPtr& v = e->rhs;
            ExprPtr du = diff_impl(u, index);
            if (is_const(v)) {
                // n * u^(n-1) * u'
                return make_mul(make_mul(v, make_pow(u, make_constant(v->value - 1.0))), du);
            }
            // u^v * (v' log u + v u'/u)
            ExprPtr dv = diff_impl(v, index);
            ExprPtr t1 = make_mul(dv, make_call(ExprOp::Log, u));
            ExprPtr t2 = make_div(make_mul(v, du), u);
            return make_mul(e, make_add(t1, t2));
        }
        case ExprOp::Negate: return make_neg(diff_impl(e->lhs, index));
        case ExprOp::Sin:
            return make_mul(make_call(ExprOp::Cos, e->lhs), diff_impl(e->lhs, index));
        case ExprOp::Cos:
            return make_neg(make_mul(make_call(ExprOp::Sin, e->lhs), diff_impl(e->lhs, index)));
        case ExprOp::Tan:
            return make_div(diff_impl(e->lhs, index),
                            make_pow(make_call(ExprOp::Cos, e->lhs), make_constant(2.0)));
        case ExprOp::Exp: return make_mul(e, diff_impl(e->lhs, index));
        case ExprOp::Log: return make_div(diff_impl(e->lhs, index), e->lhs);
        case ExprOp::Sqrt:
            return make_div(diff_impl(e->lhs, index), make_mul(make_constant(2.0), e));
        case ExprOp::Abs:
            // |u|' = u/|u| * u'
            return make_mul(make_div(e->lhs, e), diff_impl(e->lhs, index));
    }
    return make_constant(0.0);
}

}  // namespace

ExprPtr diff_var(const ExprPtr& e) { return diff_impl(e, -1); }
ExprPtr diff_param(const ExprPtr& e, int index) { return diff_impl(e, index); }

// ---------------------------------------------------------------------------
// Substitution
// ---------------------------------------------------------------------------

ExprPtr substitute_params(const ExprPtr& e, std::span<const ExprPtr> replacements) {
    switch (e->op) {
        case ExprOp::Constant:
        case ExprOp::Variable:
            return e;
        case ExprOp::Parameter: {
            auto i = static_cast<std::size_t>(e->index);
            if (i < replacements.size() && replacements[i]) return replacements[i];
            return e;
        }
        default: {
            ExprPtr l = e->lhs ? substitute_params(e->lhs, replacements) : nullptr;
            ExprPtr r = e->rhs ? substitute_params(e->rhs, replacements) : nullptr;
            switch (e->op) {
                case ExprOp::Add: return make_add(l, r);
                case ExprOp::Subtract: return make_sub(l, r);
                case ExprOp::Multiply: return make_mul(l, r);
                case ExprOp::Divide: return make_div(l, r);
                case ExprOp::Power: return make_pow(l, r);
                case ExprOp::Negate: return make_neg(l);
                default: return make_call(e->op, l);
            }
        }
    }
}

ExprPtr substitute_var(const ExprPtr& e, const ExprPtr& replacement) {
    switch (e->op) {
        case ExprOp::Constant:
        case ExprOp::Parameter:
            return e;
        case ExprOp::Variable:
            return replacement;
        default: {
            ExprPtr l = e->lhs ? substitute_var(e->lhs, replacement) : nullptr;
            ExprPtr r = e->rhs ? substitute_var(e->rhs, replacement) : nullptr;
            switch (e->op) {
                case ExprOp::Add: return make_add(l, r);
                case ExprOp::Subtract: return make_sub(l, r);
                case ExprOp::Multiply: return make_mul(l, r);
                case ExprOp::Divide: return make_div(l, r);
                case ExprOp::Power: return make_pow(l, r);
                case ExprOp::Negate: return make_neg(l);
                default: return make_call(e->op, l);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Antidifferentiation (polynomial x {1, sin, cos, exp} family)
// ---------------------------------------------------------------------------

namespace {

// Polynomial in the variable with x-free expression coefficients, low to high.
using Poly = std::vector<ExprPtr>;

Poly poly_zero() { return {}; }

Poly poly_add(const Poly& a, const Poly& b) {
    Poly out(std::max(a.size(), b.size()), nullptr);
    for (std::size_t i = 0; i < out.size(); ++i) {
        ExprPtr ai = i < a.size() ? a[i] : make_constant(0.0);
        ExprPtr bi = i < b.size() ? b[i] : make_constant(0.0);
        out[i] = make_add(ai, bi);
    }
    return out;
}

Poly poly_neg(const Poly& a) {
    Poly out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = make_neg(a[i]);
    return out;
}

Poly poly_mul(const Poly& a, const Poly& b) {
    if (a.empty() || b.empty()) return poly_zero();
    Poly out(a.size() + b.size() - 1, nullptr);
    for (auto& c : out) c = make_constant(0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            out[i + j] = make_add(out[i + j], make_mul(a[i], b[j]));
    return out;
}

Poly poly_scale(const Poly& a, const ExprPtr& s) {
    Poly out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = make_mul(a[i], s);
    return out;
}

Poly poly_derivative(const Poly& a) {
    if (a.size() <= 1) return poly_zero();
    Poly out(a.size() - 1);
    for (std::size_t i = 1; i < a.size(); ++i)
        out[i - 1] = make_mul(make_constant(static_cast<double>(i)), a[i]);
    return out;
}

bool poly_is_zero(const Poly& a) {
    for (const auto& c : a)
        if (!is_constant(c, 0.0)) return false;
    return true;
}

ExprPtr poly_to_expr(const Poly& a) {
    ExprPtr sum = make_constant(0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        ExprPtr term = a[i];
        if (i == 1) term = make_mul(term, make_variable());
        if (i >= 2) term = make_mul(term, make_pow(make_variable(), make_constant(static_cast<double>(i))));
        sum = make_add(sum, term);
    }
    return sum;
}

// Extracts polynomial coefficients in x; nullopt when not polynomial in x.
std::optional<Poly> as_poly(const ExprPtr& e) {
    switch (e->op) {
        case ExprOp::Constant:
            return Poly{e};
        case ExprOp::Parameter:
            return Poly{e};
        case ExprOp::Variable:
            return Poly{make_constant(0.0), make_constant(1.0)};
        case ExprOp::Add: {
            auto a = as_poly(e->lhs), b = as_poly(e->rhs);
            if (!a || !b) return std::nullopt;
            return poly_add(*a, *b);
        }
        case ExprOp::Subtract: {
            auto a = as_poly(e->lhs), b = as_poly(e->rhs);
            if (!a || !b) return std::nullopt;
            return poly_add(*a, poly_neg(*b));
        }
        case ExprOp::Multiply: {
            auto a = as_poly(e->lhs), b = as_poly(e->rhs);
            if (!a || !b) return std::nullopt;
            return poly_mul(*a, *b);
        }
        case ExprOp::Divide: {
            if (contains_variable(e->rhs)) return std::nullopt;
            auto a = as_poly(e->lhs);
            if (!a) return std::nullopt;
            return poly_scale(*a, make_div(make_constant(1.0), e->rhs));
        }
        case ExprOp::Negate: {
            auto a = as_poly(e->lhs);
            if (!a) return std::nullopt;
            return poly_neg(*a);
        }
        case ExprOp::Power: {
            if (e->rhs->op != ExprOp::Constant) break;
            double n = e->rhs->value;
            if (n < 0.0 || n != std::floor(n) || n > 32.0) break;
            auto base = as_poly(e->lhs);
            if (!base) return std::nullopt;
            Poly out{make_constant(1.0)};
            for (int i = 0; i < static_cast<int>(n); ++i) out = poly_mul(out, *base);
            return out;
        }
        default:
            break;
    }
    if (!contains_variable(e)) return Poly{e};
    return std::nullopt;
}

struct Oscillator {
    ExprOp kind;      // Sin, Cos, or Exp
    ExprPtr slope;    // x-free
    ExprPtr argument; // full argument (slope*x + intercept)
};

struct TermShape {
    Poly poly;
    std::optional<Oscillator> osc;
};

// Matches a product term against polynomial * {sin,cos,exp}(linear-in-x).
std::optional<TermShape> match_term(const ExprPtr& e) {
    if (auto p = as_poly(e)) return TermShape{*p, std::nullopt};

    switch (e->op) {
        case ExprOp::Sin:
        case ExprOp::Cos:
        case ExprOp::Exp: {
            auto arg = as_poly(e->lhs);
            if (!arg || arg->size() > 2) return std::nullopt;
            if (arg->size() < 2) return std::nullopt;  // x-free args handled by as_poly above
            return TermShape{Poly{make_constant(1.0)},
                             Oscillator{e->op, (*arg)[1], e->lhs}};
        }
        case ExprOp::Multiply: {
            auto a = match_term(e->lhs);
            auto b = match_term(e->rhs);
            if (!a || !b) return std::nullopt;
            if (a->osc && b->osc) return std::nullopt;
            return TermShape{poly_mul(a->poly, b->poly), a->osc ? a->osc : b->osc};
        }
        case ExprOp::Divide: {
            if (contains_variable(e->rhs)) return std::nullopt;
            auto a = match_term(e->lhs);
            if (!a) return std::nullopt;
            return TermShape{poly_scale(a->poly, make_div(make_constant(1.0), e->rhs)), a->osc};
        }
        case ExprOp::Negate: {
            auto a = match_term(e->lhs);
            if (!a) return std::nullopt;
            return TermShape{poly_neg(a->poly), a->osc};
        }
        default:
            return std::nullopt;
    }
}

// Integration by parts, recursing on the polynomial derivative:
//   I(P, sin(g)) = -P cos(g)/a + (1/a) I(P', cos(g))
//   I(P, cos(g)) =  P sin(g)/a - (1/a) I(P', sin(g))
//   I(P, exp(g)) =  P exp(g)/a - (1/a) I(P', exp(g))
ExprPtr integrate_osc(const Poly& p, ExprOp kind, const ExprPtr& slope, const ExprPtr& arg) {
    if (poly_is_zero(p) || p.empty()) return make_constant(0.0);
    ExprPtr px = poly_to_expr(p);
    Poly dp = poly_derivative(p);
    switch (kind) {
        case ExprOp::Sin: {
            ExprPtr head = make_neg(make_div(make_mul(px, make_call(ExprOp::Cos, arg)), slope));
            return make_add(head, make_div(integrate_osc(dp, ExprOp::Cos, slope, arg), slope));
        }
        case ExprOp::Cos: {
            ExprPtr head = make_div(make_mul(px, make_call(ExprOp::Sin, arg)), slope);
            return make_sub(head, make_div(integrate_osc(dp, ExprOp::Sin, slope, arg), slope));
        }
        case ExprOp::Exp: {
            ExprPtr head = make_div(make_mul(px, make_call(ExprOp::Exp, arg)), slope);
            return make_sub(head, make_div(integrate_osc(dp, ExprOp::Exp, slope, arg), slope));
        }
        default:
            throw Error(ErrorCode::NoClosedFormIntegral, "unsupported oscillator");
    }
}

ExprPtr integrate_poly(const Poly& p) {
    Poly out(p.size() + 1, nullptr);
    out[0] = make_constant(0.0);
    for (std::size_t i = 0; i < p.size(); ++i)
        out[i + 1] = make_div(p[i], make_constant(static_cast<double>(i + 1)));
    return poly_to_expr(out);
}

void collect_terms(const ExprPtr& e, bool negate, std::vector<std::pair<ExprPtr, bool>>& out) {
    if (e->op == ExprOp::Add) {
        collect_terms(e->lhs, negate, out);
        collect_terms(e->rhs, negate, out);
    } else if (e->op == ExprOp::Subtract) {
        collect_terms(e->lhs, negate, out);
        collect_terms(e->rhs, !negate, out);
    } else if (e->op == ExprOp::Negate) {
        collect_terms(e->lhs, !negate, out);
    } else {
        out.emplace_back(e, negate);
    }
}

}  // namespace

ExprPtr antiderivative(const ExprPtr& e) {
    std::vector<std::pair<ExprPtr, bool>> terms;
    collect_terms(e, false, terms);

    ExprPtr sum = make_constant(0.0);
    for (const auto& [term, negated] : terms) {
        auto shape = match_term(term);
        if (!shape)
            throw Error(ErrorCode::NoClosedFormIntegral,
                        "term outside the polynomial x {sin,cos,exp}(linear) family: " +
                            to_string(term));
        ExprPtr anti;
        if (!shape->osc) {
            anti = integrate_poly(shape->poly);
        } else {
            anti = integrate_osc(shape->poly, shape->osc->kind, shape->osc->slope,
                                 shape->osc->argument);
        }
        sum = negated ? make_sub(sum, anti) : make_add(sum, anti);
    }
    return sum;
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

namespace {

int precedence(ExprOp op) {
    switch (op) {
        case ExprOp::Add:
        case ExprOp::Subtract: return 1;
        case ExprOp::Multiply:
        case ExprOp::Divide: return 2;
        case ExprOp::Negate: return 3;
        case ExprOp::Power: return 4;
        default: return 5;
    }
}

std::string format_number(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
    return buf;
}

const char* func_name(ExprOp op) {
    switch (op) {
        case ExprOp::Sin: return "sin";
        case ExprOp::Cos: return "cos";
        case ExprOp::Tan: return "tan";
        case ExprOp::Exp: return "exp";
        case ExprOp::Log: return "log";
        case ExprOp::Sqrt: return "sqrt";
        case ExprOp::Abs: return "abs";
        default: return "?";
    }
}

void print_rec(const ExprPtr& e, const PrintOptions& opt, int parent_prec, bool rhs_side,
               std::string& out) {
    int prec = precedence(e->op);
    bool need_paren = prec < parent_prec || (prec == parent_prec && rhs_side && parent_prec != 4);
    switch (e->op) {
        case ExprOp::Constant: {
            std::string s = format_number(e->value, opt.significant_digits);
            bool neg = !s.empty() && s[0] == '-';
            if (neg && parent_prec > 0) out += "(" + s + ")";
            else out += s;
            return;
        }
        case ExprOp::Variable:
            out += opt.variable;
            return;
        case ExprOp::Parameter: {
            auto i = static_cast<std::size_t>(e->index);
            if (i < opt.param_values.size()) {
                std::string s = format_number(opt.param_values[i], opt.significant_digits);
                if (!s.empty() && s[0] == '-' && parent_prec > 0) out += "(" + s + ")";
                else out += s;
            } else if (i < opt.param_names.size()) {
                out += opt.param_names[i];
            } else {
                out += "p" + std::to_string(e->index);
            }
            return;
        }
        default: break;
    }
    if (need_paren) out += "(";
    switch (e->op) {
        case ExprOp::Add:
            print_rec(e->lhs, opt, prec, false, out);
            out += " + ";
            print_rec(e->rhs, opt, prec, true, out);
            break;
        case ExprOp::Subtract:
            print_rec(e->lhs, opt, prec, false, out);
            out += " - ";
            print_rec(e->rhs, opt, prec, true, out);
            break;
        case ExprOp::Multiply:
            print_rec(e->lhs, opt, prec, false, out);
            out += "*";
            print_rec(e->rhs, opt, prec, true, out);
            break;
        case ExprOp::Divide:
            print_rec(e->lhs, opt, prec, false, out);
            out += "/";
            print_rec(e->rhs, opt, prec, true, out);
            break;
        case ExprOp::Power:
            print_rec(e->lhs, opt, prec + 1, false, out);
            out += "^";
            print_rec(e->rhs, opt, prec, true, out);
            break;
        case ExprOp::Negate:
            out += "-";
            print_rec(e->lhs, opt, prec, true, out);
            break;
        default:
            out += func_name(e->op);
            out += "(";
            print_rec(e->lhs, opt, 0, false, out);
            out += ")";
            break;
    }
    if (need_paren) out += ")";
}

}  // namespace

std::string to_string(const ExprPtr& e, const PrintOptions& options) {
    std::string out;
    print_rec(e, options, 0, false, out);
    return out;
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

namespace {

struct Token {
    enum Kind { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, End } kind;
    double number = 0.0;
    std::string text;
    std::size_t pos = 0;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) { advance(); }

    const Token& peek() const { return current_; }

    Token take() {
        Token t = current_;
        advance();
        return t;
    }

private:
    void advance() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        current_.pos = pos_;
        if (pos_ >= src_.size()) {
            current_.kind = Token::End;
            return;
        }
        char c = src_[pos_];
        switch (c) {
            case '+': current_.kind = Token::Plus; ++pos_; return;
            case '-': current_.kind = Token::Minus; ++pos_; return;
            case '*': current_.kind = Token::Star; ++pos_; return;
            case '/': current_.kind = Token::Slash; ++pos_; return;
            case '^': current_.kind = Token::Caret; ++pos_; return;
            case '(': current_.kind = Token::LParen; ++pos_; return;
            case ')': current_.kind = Token::RParen; ++pos_; return;
            default: break;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t end = pos_;
            while (end < src_.size() &&
                   (std::isdigit(static_cast<unsigned char>(src_[end])) || src_[end] == '.'))
                ++end;
            if (end < src_.size() && (src_[end] == 'e' || src_[end] == 'E')) {
                std::size_t expo = end + 1;
                if (expo < src_.size() && (src_[expo] == '+' || src_[expo] == '-')) ++expo;
                if (expo < src_.size() && std::isdigit(static_cast<unsigned char>(src_[expo]))) {
                    end = expo;
                    while (end < src_.size() && std::isdigit(static_cast<unsigned char>(src_[end])))
                        ++end;
                }
            }
            double value = 0.0;
            auto result = std::from_chars(src_.data() + pos_, src_.data() + end, value);
            if (result.ec != std::errc() || result.ptr != src_.data() + end)
                throw Error(ErrorCode::ParseError, "malformed number", static_cast<long>(pos_));
            current_.kind = Token::Number;
            current_.number = value;
            pos_ = end;
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t end = pos_;
            while (end < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[end])) ||
                                         src_[end] == '_'))
                ++end;
            current_.kind = Token::Ident;
            current_.text = std::string(src_.substr(pos_, end - pos_));
            pos_ = end;
            return;
        }
        throw Error(ErrorCode::ParseError, std::string("unexpected character '") + c + "'",
                    static_cast<long>(pos_));
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    Token current_;
};

class Parser {
public:
    Parser(std::string_view src, std::span<const std::string> params)
        : lexer_(src), params_(params) {}

    ExprPtr parse() {
        ExprPtr e = expression();
        const Token& t = lexer_.peek();
        if (t.kind != Token::End)
            throw Error(ErrorCode::ParseError, "unexpected token (implicit multiplication is not supported)",
                        static_cast<long>(t.pos));
        return e;
    }

private:
    ExprPtr expression() {
        ExprPtr e = term();
        while (true) {
            Token::Kind k = lexer_.peek().kind;
            if (k == Token::Plus) {
                lexer_.take();
                e = make_add(e, term());
            } else if (k == Token::Minus) {
                lexer_.take();
                e = make_sub(e, term());
            } else {
                return e;
            }
        }
    }

    ExprPtr term() {
        ExprPtr e = unary();
        while (true) {
            Token::Kind k = lexer_.peek().kind;
            if (k == Token::Star) {
                lexer_.take();
                e = make_mul(e, unary());
            } else if (k == Token::Slash) {
                lexer_.take();
                e = make_div(e, unary());
            } else {
                return e;
            }
        }
    }

    ExprPtr unary() {
        if (lexer_.peek().kind == Token::Minus) {
            lexer_.take();
            return make_neg(unary());
        }
        return power();
    }

    // right-associative: a^b^c == a^(b^c); exponent may carry unary minus
    ExprPtr power() {
        ExprPtr base = atom();
        if (lexer_.peek().kind == Token::Caret) {
            lexer_.take();
            return make_pow(base, unary());
        }
        return base;
    }

    ExprPtr atom() {
        Token t = lexer_.take();
        switch (t.kind) {
            case Token::Number:
                return make_constant(t.number);
            case Token::LParen: {
                ExprPtr e = expression();
                Token close = lexer_.take();
                if (close.kind != Token::RParen)
                    throw Error(ErrorCode::ParseError, "expected ')'", static_cast<long>(close.pos));
                return e;
            }
            case Token::Ident: {
                static const std::map<std::string, ExprOp> kFunctions = {
                    {"sin", ExprOp::Sin}, {"cos", ExprOp::Cos},   {"tan", ExprOp::Tan},
                    {"exp", ExprOp::Exp}, {"log", ExprOp::Log},   {"sqrt", ExprOp::Sqrt},
                    {"abs", ExprOp::Abs},
                };
                auto fn = kFunctions.find(t.text);
                if (fn != kFunctions.end()) {
                    Token open = lexer_.take();
                    if (open.kind != Token::LParen)
                        throw Error(ErrorCode::ParseError, "expected '(' after function name",
                                    static_cast<long>(open.pos));
                    ExprPtr arg = expression();
                    Token close = lexer_.take();
                    if (close.kind != Token::RParen)
                        throw Error(ErrorCode::ParseError, "expected ')'",
                                    static_cast<long>(close.pos));
                    return make_call(fn->second, arg);
                }
                if (t.text == "x") return make_variable();
                for (std::size_t i = 0; i < params_.size(); ++i)
                    if (params_[i] == t.text) return make_parameter(static_cast<int>(i));
                throw Error(ErrorCode::UnknownIdentifier, "unknown identifier '" + t.text + "'",
                            static_cast<long>(t.pos));
            }
            case Token::End:
                throw Error(ErrorCode::ParseError, "unexpected end of expression",
                            static_cast<long>(t.pos));
            default:
                throw Error(ErrorCode::ParseError, "unexpected token", static_cast<long>(t.pos));
        }
    }

    Lexer lexer_;
    std::span<const std::string> params_;
};

}  // namespace

ExprPtr parse_expression(std::string_view text, std::span<const std::string> param_names) {
    Parser parser(text, param_names);
    return parser.parse();
}

// ---------------------------------------------------------------------------
// Compiled evaluation
// ---------------------------------------------------------------------------

CompiledExpr::CompiledExpr(const ExprPtr& e) {
    // post-order flatten; track stack depth
    struct Walk {
        std::vector<Op>& ops;
        int depth = 0;
        int peak = 0;

        void push(ExprOp op, double value = 0.0, int index = 0, int arity = 0) {
            depth += 1 - arity;
            peak = std::max(peak, depth);
            ops.push_back({op, value, index});
        }

        void visit(const ExprPtr& n) {
            switch (n->op) {
                case ExprOp::Constant: push(ExprOp::Constant, n->value); return;
                case ExprOp::Variable: push(ExprOp::Variable); return;
                case ExprOp::Parameter: push(ExprOp::Parameter, 0.0, n->index); return;
                case ExprOp::Power: {
                    visit(n->lhs);
                    if (n->rhs->op == ExprOp::Constant) {
                        double ev = n->rhs->value;
                        if (ev == std::floor(ev) && std::fabs(ev) <= 16.0) {
                            push(kPowInt, 0.0, static_cast<int>(ev), 1);
                            return;
                        }
                    }
                    visit(n->rhs);
                    push(ExprOp::Power, 0.0, 0, 2);
                    return;
                }
                case ExprOp::Add:
                case ExprOp::Subtract:
                case ExprOp::Multiply:
                case ExprOp::Divide:
                    visit(n->lhs);
                    visit(n->rhs);
                    push(n->op, 0.0, 0, 2);
                    return;
                default:
                    visit(n->lhs);
                    push(n->op, 0.0, 0, 1);
                    return;
            }
        }
    };
    Walk walk{ops_};
    walk.visit(e);
    stack_need_ = walk.peak;
}

double CompiledExpr::operator()(double x, std::span<const double> params) const {
    double fixed[32];
    std::vector<double> heap;
    double* stack = fixed;
    if (stack_need_ > 32) {
        heap.resize(static_cast<std::size_t>(stack_need_));
        stack = heap.data();
    }
    int top = -1;
    for (const Op& op : ops_) {
        switch (op.op) {
            case ExprOp::Constant: stack[++top] = op.value; break;
            case ExprOp::Variable: stack[++top] = x; break;
            case ExprOp::Parameter: stack[++top] = params[static_cast<std::size_t>(op.index)]; break;
            case ExprOp::Add: --top; stack[top] += stack[top + 1]; break;
            case ExprOp::Subtract: --top; stack[top] -= stack[top + 1]; break;
            case ExprOp::Multiply: --top; stack[top] *= stack[top + 1]; break;
            case ExprOp::Divide: --top; stack[top] /= stack[top + 1]; break;
            case ExprOp::Power: --top; stack[top] = std::pow(stack[top], stack[top + 1]); break;
            case ExprOp::Negate: stack[top] = -stack[top]; break;
            case ExprOp::Sin: stack[top] = std::sin(stack[top]); break;
            case ExprOp::Cos: stack[top] = std::cos(stack[top]); break;
            case ExprOp::Tan: stack[top] = std::tan(stack[top]); break;
            case ExprOp::Exp: stack[top] = std::exp(stack[top]); break;
            case ExprOp::Log: stack[top] = std::log(stack[top]); break;
            case ExprOp::Sqrt: stack[top] = std::sqrt(stack[top]); break;
            case ExprOp::Abs: stack[top] = std::fabs(stack[top]); break;
            default: {  // kPowInt
                int n = op.index;
                double b = stack[top];
                double r = 1.0;
                int a = n < 0 ? -n : n;
                while (a-- > 0) r *= b;
                stack[top] = n < 0 ? 1.0 / r : r;
                break;
            }
        }
    }
    return stack[0];
}

}  // namespace fcd
