#include "chillerlab/expression.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

namespace chillerlab {

int IdentifierScope::sensor_index(std::string_view name) const {
    auto it = std::find(sensors.begin(), sensors.end(), name);
    return it == sensors.end() ? -1 : static_cast<int>(it - sensors.begin());
}

int IdentifierScope::action_index(std::string_view name) const {
    auto it = std::find(actions.begin(), actions.end(), name);
    return it == actions.end() ? -1 : static_cast<int>(it - actions.begin());
}

ExprPtr expr_const(double v) {
    auto e = std::make_shared<Expression>();
    e->op = ExprOp::Constant;
    e->value = v;
    return e;
}

ExprPtr expr_ref(ExprOp kind, std::string name, int index) {
    auto e = std::make_shared<Expression>();
    e->op = kind;
    e->name = std::move(name);
    e->index = index;
    return e;
}

ExprPtr expr_node(ExprOp op, ExprPtr lhs, ExprPtr rhs) {
    auto e = std::make_shared<Expression>();
    e->op = op;
    e->lhs = std::move(lhs);
    e->rhs = std::move(rhs);
    return e;
}

namespace {

struct Token {
    enum Kind { Number, Ident, Plus, Minus, Star, Slash, LParen, RParen, Comma, End } kind;
    double number = 0.0;
    std::string text;
    size_t pos = 0;
};

class Lexer {
public:
    explicit Lexer(std::string_view s) : s_(s) {}

    Token next() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        Token t;
        t.pos = pos_;
        if (pos_ >= s_.size()) {
            t.kind = Token::End;
            return t;
        }
        char c = s_[pos_];
        switch (c) {
        case '+': ++pos_; t.kind = Token::Plus; return t;
        case '-': ++pos_; t.kind = Token::Minus; return t;
        case '*': ++pos_; t.kind = Token::Star; return t;
        case '/': ++pos_; t.kind = Token::Slash; return t;
        case '(': ++pos_; t.kind = Token::LParen; return t;
        case ')': ++pos_; t.kind = Token::RParen; return t;
        case ',': ++pos_; t.kind = Token::Comma; return t;
        default: break;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            size_t end = pos_;
            while (end < s_.size() &&
                   (std::isdigit(static_cast<unsigned char>(s_[end])) || s_[end] == '.' || s_[end] == 'e' ||
                    s_[end] == 'E' || ((s_[end] == '+' || s_[end] == '-') && (s_[end - 1] == 'e' || s_[end - 1] == 'E'))))
                ++end;
            const std::string num(s_.substr(pos_, end - pos_));
            try {
                t.number = std::stod(num);
            } catch (const std::exception&) {
                throw ConfigError("expression: bad numeric literal '" + num + "' at column " + std::to_string(pos_ + 1));
            }
            t.kind = Token::Number;
            pos_ = end;
            return t;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t end = pos_;
            while (end < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '_')) ++end;
            t.kind = Token::Ident;
            t.text = std::string(s_.substr(pos_, end - pos_));
            pos_ = end;
            return t;
        }
        throw ConfigError(std::string("expression: unexpected character '") + c + "' at column " + std::to_string(pos_ + 1));
    }

private:
    std::string_view s_;
    size_t pos_ = 0;
};

class Parser {
public:
    Parser(std::string_view text, const IdentifierScope& scope) : lex_(text), scope_(scope) { advance(); }

    ExprPtr parse() {
        ExprPtr e = expr();
        if (cur_.kind != Token::End)
            throw ConfigError("expression: trailing input at column " + std::to_string(cur_.pos + 1));
        return e;
    }

private:
    void advance() { cur_ = lex_.next(); }

    void expect(Token::Kind k, const char* what) {
        if (cur_.kind != k)
            throw ConfigError(std::string("expression: expected ") + what + " at column " + std::to_string(cur_.pos + 1));
        advance();
    }

    ExprPtr expr() {
        ExprPtr e = term();
        while (cur_.kind == Token::Plus || cur_.kind == Token::Minus) {
            ExprOp op = cur_.kind == Token::Plus ? ExprOp::Add : ExprOp::Sub;
            advance();
            e = expr_node(op, e, term());
        }
        return e;
    }

    ExprPtr term() {
        ExprPtr e = unary();
        while (cur_.kind == Token::Star || cur_.kind == Token::Slash) {
            ExprOp op = cur_.kind == Token::Star ? ExprOp::Mul : ExprOp::Div;
            advance();
            e = expr_node(op, e, unary());
        }
        return e;
    }

    ExprPtr unary() {
        if (cur_.kind == Token::Minus) {
            advance();
            return expr_node(ExprOp::Sub, expr_const(0.0), unary());
        }
        return primary();
    }

    ExprPtr primary() {
        if (cur_.kind == Token::Number) {
            double v = cur_.number;
            advance();
            return expr_const(v);
        }
        if (cur_.kind == Token::LParen) {
            advance();
            ExprPtr e = expr();
            expect(Token::RParen, "')'");
            return e;
        }
        if (cur_.kind == Token::Ident) {
            std::string name = cur_.text;
            size_t pos = cur_.pos;
            advance();
            if (name == "min" || name == "max") {
                expect(Token::LParen, "'(' after min/max");
                ExprPtr a = expr();
                expect(Token::Comma, "','");
                ExprPtr b = expr();
                expect(Token::RParen, "')'");
                return expr_node(name == "min" ? ExprOp::Min : ExprOp::Max, a, b);
            }
            int si = scope_.sensor_index(name);
            if (si >= 0) return expr_ref(ExprOp::SensorRef, name, si);
            int ai = scope_.action_index(name);
            if (ai >= 0) return expr_ref(ExprOp::ActionRef, name, ai);
            throw ConfigError("expression: unresolved reference '" + name + "' at column " + std::to_string(pos + 1));
        }
        throw ConfigError("expression: expected value at column " + std::to_string(cur_.pos + 1));
    }

    Lexer lex_;
    const IdentifierScope& scope_;
    Token cur_;
};

int precedence(ExprOp op) {
    switch (op) {
    case ExprOp::Add:
    case ExprOp::Sub: return 1;
    case ExprOp::Mul:
    case ExprOp::Div: return 2;
    default: return 3; // leaves and min/max render atomically
    }
}

void print(const Expression& e, std::ostringstream& out) {
    switch (e.op) {
    case ExprOp::Constant: {
        std::ostringstream num;
        num.precision(17);
        num << e.value;
        out << num.str();
        return;
    }
    case ExprOp::SensorRef:
    case ExprOp::ActionRef:
        out << e.name;
        return;
    case ExprOp::Min:
    case ExprOp::Max:
        out << (e.op == ExprOp::Min ? "min(" : "max(");
        print(*e.lhs, out);
        out << ", ";
        print(*e.rhs, out);
        out << ")";
        return;
    default: break;
    }
    const int p = precedence(e.op);
    auto child = [&](const Expression& c, bool right_side) {
        // Parenthesize when the child binds looser, or equally on the right of
        // a non-associative operator (a - (b - c), a / (b * c), ...).
        const int cp = precedence(c.op);
        bool parens = cp < p || (cp == p && right_side);
        if (parens) out << "(";
        print(c, out);
        if (parens) out << ")";
    };
    child(*e.lhs, false);
    switch (e.op) {
    case ExprOp::Add: out << " + "; break;
    case ExprOp::Sub: out << " - "; break;
    case ExprOp::Mul: out << " * "; break;
    case ExprOp::Div: out << " / "; break;
    default: break;
    }
    child(*e.rhs, true);
}

} // namespace

ExprPtr parse_expression(std::string_view text, const IdentifierScope& scope) {
    Parser p(text, scope);
    return p.parse();
}

std::string to_text(const Expression& e) {
    std::ostringstream out;
    print(e, out);
    return out.str();
}

double evaluate(const Expression& e, std::span<const double> sensors, std::span<const double> actions) {
    switch (e.op) {
    case ExprOp::Constant: return e.value;
    case ExprOp::SensorRef:
        if (e.index < 0 || static_cast<size_t>(e.index) >= sensors.size())
            throw EvalError("unbound sensor '" + e.name + "'");
        return sensors[static_cast<size_t>(e.index)];
    case ExprOp::ActionRef:
        if (e.index < 0 || static_cast<size_t>(e.index) >= actions.size())
            throw EvalError("unbound action '" + e.name + "'");
        return actions[static_cast<size_t>(e.index)];
    default: break;
    }
    const double a = evaluate(*e.lhs, sensors, actions);
    const double b = evaluate(*e.rhs, sensors, actions);
    switch (e.op) {
    case ExprOp::Add: return a + b;
    case ExprOp::Sub: return a - b;
    case ExprOp::Mul: return a * b;
    case ExprOp::Div:
        if (b == 0.0) throw EvalError("division by zero in '" + to_text(e) + "'");
        return a / b;
    case ExprOp::Min: return std::min(a, b);
    case ExprOp::Max: return std::max(a, b);
    default: throw EvalError("malformed expression node");
    }
}

bool contains_action_ref(const Expression& e) {
    if (e.op == ExprOp::ActionRef) return true;
    if (e.lhs && contains_action_ref(*e.lhs)) return true;
    return e.rhs && contains_action_ref(*e.rhs);
}

bool contains_sensor_ref(const Expression& e) {
    if (e.op == ExprOp::SensorRef) return true;
    if (e.lhs && contains_sensor_ref(*e.lhs)) return true;
    return e.rhs && contains_sensor_ref(*e.rhs);
}

void collect_refs(const Expression& e, std::vector<std::string>* sensor_names, std::vector<std::string>* action_names) {
    if (e.op == ExprOp::SensorRef && sensor_names) sensor_names->push_back(e.name);
    if (e.op == ExprOp::ActionRef && action_names) action_names->push_back(e.name);
    if (e.lhs) collect_refs(*e.lhs, sensor_names, action_names);
    if (e.rhs) collect_refs(*e.rhs, sensor_names, action_names);
}

bool structurally_equal(const Expression& a, const Expression& b) {
    if (a.op != b.op) return false;
    switch (a.op) {
    case ExprOp::Constant: return a.value == b.value;
    case ExprOp::SensorRef:
    case ExprOp::ActionRef: return a.name == b.name && a.index == b.index;
    default: return structurally_equal(*a.lhs, *b.lhs) && structurally_equal(*a.rhs, *b.rhs);
    }
}

} // namespace chillerlab
