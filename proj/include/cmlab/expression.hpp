#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "cmlab/vec3.hpp"

namespace cmlab {

/// A scalar expression in the coordinates x, y, z (aliases x1, x2, x3).
///
/// Supports + - * / ^, unary minus, the constants pi and e, and the functions
/// exp, log, sqrt, abs, sin, cos, tan, sinh, cosh, tanh, atan, pow, min, max.
/// Gradients are exact (forward-mode dual numbers), not finite differences.
class Expression {
public:
    Expression();  // the constant 0
    static Expression parse(std::string_view source);
    static Expression constant(double value);

    double operator()(const Vec3& p) const { return eval(p); }
    double eval(const Vec3& p) const;
    Vec3 gradient(const Vec3& p) const;

    /// True when the expression references no coordinate.
    bool is_constant() const;
    const std::string& source() const { return source_; }

    struct Node;

private:
    Expression(std::string source, std::shared_ptr<const std::vector<Node>> nodes);

    std::string source_;
    std::shared_ptr<const std::vector<Node>> nodes_;  // postfix program, immutable
};

}  // namespace cmlab
