#pragma once

#include <vector>

#include "cmlab/vec3.hpp"

namespace cmlab {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [a, b].
QuadratureRule gauss_legendre(int n, double a = -1.0, double b = 1.0);

/// Product rule on the unit sphere: Gauss-Legendre in cos(theta) times a uniform rule in the
/// azimuth. Weights sum to 4*pi; exact for spherical polynomials of degree < 2 * n_polar.
struct SphereRule {
    std::vector<Vec3> directions;
    std::vector<double> weights;
};

SphereRule sphere_rule(int n_polar);

/// Smallest product rule with at least `min_points` nodes (and at least 50).
SphereRule sphere_rule_with_points(int min_points);

}  // namespace cmlab
