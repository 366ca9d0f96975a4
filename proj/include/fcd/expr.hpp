#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fcd/errors.hpp"

namespace fcd {

// Immutable expression tree in one variable plus an indexed parameter vector.
// Shared subtrees are allowed; nodes are never mutated after construction.

enum class ExprOp : std::uint8_t {
    Constant,
    Variable,
    Parameter,
    Add,
    Subtract,
    Multiply,
    Divide,
    Power,
    Negate,
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
    ExprOp op;
    double value = 0.0;  // Constant payload
    int index = 0;       // Parameter payload
    ExprPtr lhs;         // unary operand / left operand
    ExprPtr rhs;
};

// Node builders. Binary/unary builders fold constants and trivial identities
// (x+0, 1*x, x^1, ...) so derived expressions stay readable.
ExprPtr make_constant(double v);
ExprPtr make_variable();
ExprPtr make_parameter(int index);
ExprPtr make_add(ExprPtr a, ExprPtr b);
ExprPtr make_sub(ExprPtr a, ExprPtr b);
ExprPtr make_mul(ExprPtr a, ExprPtr b);
ExprPtr make_div(ExprPtr a, ExprPtr b);
ExprPtr make_pow(ExprPtr base, ExprPtr exponent);
ExprPtr make_neg(ExprPtr a);
ExprPtr make_call(ExprOp func, ExprPtr arg);

bool is_constant(const ExprPtr& e, double v);
bool contains_variable(const ExprPtr& e);
bool contains_parameter(const ExprPtr& e, int index);
int max_parameter_index(const ExprPtr& e);  // -1 when parameter-free

double eval(const ExprPtr& e, double x, std::span<const double> params);

/// Derivative with respect to the variable.
ExprPtr diff_var(const ExprPtr& e);
/// Derivative with respect to parameter `index`.
ExprPtr diff_param(const ExprPtr& e, int index);

/// Replaces parameter i by replacements[i] (null entries keep the parameter).
/// Substitution is simultaneous: replacement trees are not re-substituted.
ExprPtr substitute_params(const ExprPtr& e, std::span<const ExprPtr> replacements);
/// Replaces the variable by an expression.
ExprPtr substitute_var(const ExprPtr& e, const ExprPtr& replacement);

/// Closed-form antiderivative with respect to the variable. Supported family:
/// sums of terms, each a polynomial in x, polynomial*sin(linear),
/// polynomial*cos(linear), or polynomial*exp(linear), with coefficients free
/// of x. Throws Error(NoClosedFormIntegral) outside that family.
ExprPtr antiderivative(const ExprPtr& e);

struct PrintOptions {
    std::string variable = "x";
    std::span<const std::string> param_names = {};   // used when no values given
    std::span<const double> param_values = {};       // when set, parameters print as numbers
    int significant_digits = 6;
};

std::string to_string(const ExprPtr& e, const PrintOptions& options = {});

/// Parses an expression over variable `x` and the given parameter names.
/// Grammar: + - * / ^ (right-associative), unary minus, parentheses, and the
/// functions sin, cos, tan, exp, log, sqrt, abs. Implicit multiplication is
/// rejected. Errors carry the byte offset of the offending token.
ExprPtr parse_expression(std::string_view text, std::span<const std::string> param_names);

/// Flat postfix form for fast repeated evaluation.
class CompiledExpr {
public:
    CompiledExpr() = default;
    explicit CompiledExpr(const ExprPtr& e);

    double operator()(double x, std::span<const double> params) const;
    bool empty() const { return ops_.empty(); }

private:
    struct Op {
        ExprOp op;
        double value;  // Constant payload / float exponent
        int index;     // Parameter payload / integer exponent
    };
    static constexpr ExprOp kPowInt = static_cast<ExprOp>(0xFF);

    std::vector<Op> ops_;
    int stack_need_ = 0;
};

}  // namespace fcd
