#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chillerlab/errors.hpp"

namespace chillerlab {

// Arithmetic expression over sensor and action identifiers. This is the
// language constraint bounds and inequalities are written in: constants,
// named references, + - * /, and binary min/max.
enum class ExprOp {
    Constant,
    SensorRef,
    ActionRef,
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
};

struct Expression;
using ExprPtr = std::shared_ptr<const Expression>;

struct Expression {
    ExprOp op = ExprOp::Constant;
    double value = 0.0;   // Constant
    std::string name;     // SensorRef / ActionRef
    int index = -1;       // resolved position in the config's sensor/action list
    ExprPtr lhs, rhs;     // binary nodes
};

// Identifier resolution scope. Names are classified as sensors or actions at
// parse time so evaluation is index-based.
struct IdentifierScope {
    std::span<const std::string> sensors;
    std::span<const std::string> actions;

    // -1 if not found
    int sensor_index(std::string_view name) const;
    int action_index(std::string_view name) const;
};

// Grammar (documented in the README):
//   expr   := term (('+'|'-') term)*
//   term   := unary (('*'|'/') unary)*
//   unary  := '-' unary | primary
//   primary:= NUMBER | IDENT | 'min' '(' expr ',' expr ')'
//           | 'max' '(' expr ',' expr ')' | '(' expr ')'
// Unary minus parses as (0 - x). Throws ConfigError with the column of the
// offending token.
ExprPtr parse_expression(std::string_view text, const IdentifierScope& scope);

// Infix rendering with minimal parentheses; parse(to_text(e)) reproduces the
// same tree (see structurally_equal).
std::string to_text(const Expression& e);

// Evaluates against sensor/action value vectors in config order. Division by
// zero raises EvalError naming the dividing subexpression.
double evaluate(const Expression& e, std::span<const double> sensors, std::span<const double> actions);

bool contains_action_ref(const Expression& e);
bool contains_sensor_ref(const Expression& e);
void collect_refs(const Expression& e, std::vector<std::string>* sensor_names, std::vector<std::string>* action_names);
bool structurally_equal(const Expression& a, const Expression& b);

// Convenience node constructors (used by tests and generators).
ExprPtr expr_const(double v);
ExprPtr expr_ref(ExprOp kind, std::string name, int index);
ExprPtr expr_node(ExprOp op, ExprPtr lhs, ExprPtr rhs);

} // namespace chillerlab
