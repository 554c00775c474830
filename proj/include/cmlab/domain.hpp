#pragma once

#include <random>
#include <string>

#include "cmlab/expression.hpp"
#include "cmlab/vec3.hpp"

namespace cmlab {

/// The region Omega, the Dirichlet data f on its boundary and the host conductivity a(x).
struct DomainSpec {
    enum class Shape { ball, box };

    Shape shape = Shape::ball;
    Vec3 center{};           // ball center; box center
    double radius = 1.0;     // ball only
    Vec3 extents{1, 1, 1};   // box side lengths
    Expression boundary_data;
    Expression conductivity = Expression::constant(1.0);
    double lambda_bound = 1.0;
    double Lambda_bound = 1.0;

    static DomainSpec ball(double radius, Vec3 center, Expression f, Expression a, double lambda, double Lambda);
    static DomainSpec box(Vec3 lo, Vec3 hi, Expression f, Expression a, double lambda, double Lambda);
    /// Unit ball at the origin (or the box [0,1]^3) with a == 1.
    static DomainSpec unit_ball(const std::string& f);
    static DomainSpec unit_box(const std::string& f);

    Vec3 lower() const;
    Vec3 upper() const;
    double volume() const;
    /// |Omega_eps| = |{x : d(x, boundary) > eps}|.
    double shrunk_volume(double eps) const;

    /// d(x, boundary) for x inside, negative outside.
    double distance_to_boundary(const Vec3& x) const;
    bool contains(const Vec3& x) const { return distance_to_boundary(x) > 0.0; }

    /// Fraction t in (0, 1] such that p + t*step*e_axis lies on the boundary, for p inside and
    /// p + step*e_axis outside.
    double boundary_crossing(const Vec3& p, int axis, double step) const;

    /// Uniform point in Omega_eps.
    Vec3 sample_shrunk(double eps, std::mt19937_64& rng) const;

    /// Throws on non-positive sizes or inconsistent ellipticity bounds.
    void validate() const;
};

}  // namespace cmlab
