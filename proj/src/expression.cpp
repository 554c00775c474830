#include "cmlab/expression.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>

#include "cmlab/error.hpp"

namespace cmlab {

enum class Op {
    number, var_x, var_y, var_z,
    add, sub, mul, div, pow, neg,
    exp, log, sqrt, abs, sin, cos, tan, sinh, cosh, tanh, atan, min, max,
};

struct Expression::Node {
    Op op;
    double value = 0.0;
};

namespace {

struct Dual {
    double v = 0.0;
    Vec3 g{};
};

Dual operator+(const Dual& a, const Dual& b) { return {a.v + b.v, a.g + b.g}; }
Dual operator-(const Dual& a, const Dual& b) { return {a.v - b.v, a.g - b.g}; }
Dual operator*(const Dual& a, const Dual& b) { return {a.v * b.v, a.g * b.v + b.g * a.v}; }
Dual operator/(const Dual& a, const Dual& b) {
    return {a.v / b.v, (a.g * b.v - b.g * a.v) / (b.v * b.v)};
}
Dual chain(const Dual& a, double value, double derivative) { return {value, a.g * derivative}; }

double value_of(double d) { return d; }
double value_of(const Dual& d) { return d.v; }

double apply_pow(double a, double b) { return std::pow(a, b); }
Dual apply_pow(const Dual& a, const Dual& b) {
    const double v = std::pow(a.v, b.v);
    Vec3 g = a.g * (b.v * std::pow(a.v, b.v - 1.0));
    if (norm2(b.g) != 0.0) g += b.g * (v * std::log(a.v));
    return {v, g};
}

template <class T>
T apply_unary(Op op, const T& a) {
    if constexpr (std::is_same_v<T, double>) {
        switch (op) {
            case Op::neg: return -a;
            case Op::exp: return std::exp(a);
            case Op::log: return std::log(a);
            case Op::sqrt: return std::sqrt(a);
            case Op::abs: return std::abs(a);
            case Op::sin: return std::sin(a);
            case Op::cos: return std::cos(a);
            case Op::tan: return std::tan(a);
            case Op::sinh: return std::sinh(a);
            case Op::cosh: return std::cosh(a);
            case Op::tanh: return std::tanh(a);
            case Op::atan: return std::atan(a);
            default: return a;
        }
    } else {
        switch (op) {
            case Op::neg: return {-a.v, -a.g};
            case Op::exp: { const double e = std::exp(a.v); return chain(a, e, e); }
            case Op::log: return chain(a, std::log(a.v), 1.0 / a.v);
            case Op::sqrt: { const double s = std::sqrt(a.v); return chain(a, s, 0.5 / s); }
            case Op::abs: return chain(a, std::abs(a.v), a.v < 0 ? -1.0 : 1.0);
            case Op::sin: return chain(a, std::sin(a.v), std::cos(a.v));
            case Op::cos: return chain(a, std::cos(a.v), -std::sin(a.v));
            case Op::tan: { const double t = std::tan(a.v); return chain(a, t, 1.0 + t * t); }
            case Op::sinh: return chain(a, std::sinh(a.v), std::cosh(a.v));
            case Op::cosh: return chain(a, std::cosh(a.v), std::sinh(a.v));
            case Op::tanh: { const double t = std::tanh(a.v); return chain(a, t, 1.0 - t * t); }
            case Op::atan: return chain(a, std::atan(a.v), 1.0 / (1.0 + a.v * a.v));
            default: return a;
        }
    }
}

template <class T>
T apply_binary(Op op, const T& a, const T& b) {
    switch (op) {
        case Op::add: return a + b;
        case Op::sub: return a - b;
        case Op::mul: return a * b;
        case Op::div: return a / b;
        case Op::pow: return apply_pow(a, b);
        case Op::min: return value_of(a) <= value_of(b) ? a : b;
        case Op::max: return value_of(a) >= value_of(b) ? a : b;
        default: return a;
    }
}

bool is_binary(Op op) {
    return op == Op::add || op == Op::sub || op == Op::mul || op == Op::div || op == Op::pow ||
           op == Op::min || op == Op::max;
}

template <class T>
T run(const std::vector<Expression::Node>& prog, const T& x, const T& y, const T& z) {
    std::vector<T> stack;
    stack.reserve(prog.size());
    for (const auto& n : prog) {
        switch (n.op) {
            case Op::number:
                if constexpr (std::is_same_v<T, double>) stack.push_back(n.value);
                else stack.push_back(T{n.value, {}});
                break;
            case Op::var_x: stack.push_back(x); break;
            case Op::var_y: stack.push_back(y); break;
            case Op::var_z: stack.push_back(z); break;
            default:
                if (is_binary(n.op)) {
                    T b = stack.back();
                    stack.pop_back();
                    T a = stack.back();
                    stack.back() = apply_binary(n.op, a, b);
                } else {
                    stack.back() = apply_unary(n.op, stack.back());
                }
        }
    }
    return stack.back();
}

// Recursive-descent parser emitting postfix code.
class Parser {
public:
    explicit Parser(std::string_view s) : s_(s) {}

    std::vector<Expression::Node> parse() {
        expr();
        skip();
        if (pos_ != s_.size()) fail("unexpected character '" + std::string(1, s_[pos_]) + "'");
        return std::move(out_);
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw Error(ErrorCode::invalid_argument,
                    "expression \"" + std::string(s_) + "\" at offset " + std::to_string(pos_) + ": " + msg);
    }
    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool accept(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    void emit(Op op, double v = 0.0) { out_.push_back({op, v}); }

    void expr() {
        term();
        for (;;) {
            if (accept('+')) { term(); emit(Op::add); }
            else if (accept('-')) { term(); emit(Op::sub); }
            else return;
        }
    }
    void term() {
        unary();
        for (;;) {
            if (accept('*')) { unary(); emit(Op::mul); }
            else if (accept('/')) { unary(); emit(Op::div); }
            else return;
        }
    }
    void unary() {
        if (accept('-')) { unary(); emit(Op::neg); return; }
        if (accept('+')) { unary(); return; }
        power();
    }
    void power() {
        primary();
        if (accept('^')) {
            unary();
            emit(Op::pow);
        }
    }
    void primary() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of input");
        const char c = s_[pos_];
        if (accept('(')) {
            expr();
            if (!accept(')')) fail("expected ')'");
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
            if (ec != std::errc()) fail("bad number");
            pos_ = static_cast<std::size_t>(ptr - s_.data());
            emit(Op::number, v);
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < s_.size() &&
                   (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
                ++pos_;
            const std::string_view id = s_.substr(start, pos_ - start);
            skip();
            if (pos_ < s_.size() && s_[pos_] == '(') {
                call(id);
                return;
            }
            if (id == "x" || id == "x1") emit(Op::var_x);
            else if (id == "y" || id == "x2") emit(Op::var_y);
            else if (id == "z" || id == "x3") emit(Op::var_z);
            else if (id == "pi") emit(Op::number, std::numbers::pi);
            else if (id == "e") emit(Op::number, std::numbers::e);
            else fail("unknown identifier '" + std::string(id) + "'");
            return;
        }
        fail("unexpected character '" + std::string(1, c) + "'");
    }
    void call(std::string_view id) {
        static const std::pair<std::string_view, Op> unary_fns[] = {
            {"exp", Op::exp}, {"log", Op::log}, {"sqrt", Op::sqrt}, {"abs", Op::abs},
            {"sin", Op::sin}, {"cos", Op::cos}, {"tan", Op::tan}, {"sinh", Op::sinh},
            {"cosh", Op::cosh}, {"tanh", Op::tanh}, {"atan", Op::atan}};
        static const std::pair<std::string_view, Op> binary_fns[] = {
            {"pow", Op::pow}, {"min", Op::min}, {"max", Op::max}};
        accept('(');
        for (const auto& [name, op] : unary_fns) {
            if (id == name) {
                expr();
                if (!accept(')')) fail("expected ')' after argument of " + std::string(id));
                emit(op);
                return;
            }
        }
        for (const auto& [name, op] : binary_fns) {
            if (id == name) {
                expr();
                if (!accept(',')) fail("expected ',' in " + std::string(id));
                expr();
                if (!accept(')')) fail("expected ')' after arguments of " + std::string(id));
                emit(op);
                return;
            }
        }
        fail("unknown function '" + std::string(id) + "'");
    }

    std::string_view s_;
    std::size_t pos_ = 0;
    std::vector<Expression::Node> out_;
};

}  // namespace

Expression::Expression(std::string source, std::shared_ptr<const std::vector<Node>> nodes)
    : source_(std::move(source)), nodes_(std::move(nodes)) {}

Expression::Expression() : Expression(constant(0.0)) {}

Expression Expression::parse(std::string_view source) {
    return Expression(std::string(source), std::make_shared<const std::vector<Node>>(Parser(source).parse()));
}

Expression Expression::constant(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return Expression(std::string(buf, ptr),
                      std::make_shared<const std::vector<Node>>(std::vector<Node>{{Op::number, value}}));
}

double Expression::eval(const Vec3& p) const { return run<double>(*nodes_, p.x, p.y, p.z); }

Vec3 Expression::gradient(const Vec3& p) const {
    const Dual x{p.x, {1, 0, 0}};
    const Dual y{p.y, {0, 1, 0}};
    const Dual z{p.z, {0, 0, 1}};
    return run<Dual>(*nodes_, x, y, z).g;
}

bool Expression::is_constant() const {
    for (const auto& n : *nodes_)
        if (n.op == Op::var_x || n.op == Op::var_y || n.op == Op::var_z) return false;
    return true;
}

}  // namespace cmlab
