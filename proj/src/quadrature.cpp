#include "cmlab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cmlab/error.hpp"

namespace cmlab {

QuadratureRule gauss_legendre(int n, double a, double b) {
    if (n < 1) throw Error(ErrorCode::invalid_argument, "Gauss-Legendre rule needs n >= 1");
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double pp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = 1.0, p2 = 0.0;
            for (int j = 1; j <= n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
            }
            pp = n * (z * p1 - p2) / (z * z - 1.0);
            const double dz = p1 / pp;
            z -= dz;
            if (std::abs(dz) <= 1e-15) break;
        }
        rule.nodes[i] = mid - half * z;
        rule.nodes[n - 1 - i] = mid + half * z;
        rule.weights[i] = rule.weights[n - 1 - i] = 2.0 * half / ((1.0 - z * z) * pp * pp);
    }
    return rule;
}

SphereRule sphere_rule(int n_polar) {
    n_polar = std::max(n_polar, 1);
    const auto mu = gauss_legendre(n_polar);
    const int n_azimuth = 2 * n_polar;
    SphereRule rule;
    rule.directions.reserve(static_cast<std::size_t>(n_polar) * n_azimuth);
    rule.weights.reserve(rule.directions.capacity());
    for (int i = 0; i < n_polar; ++i) {
        const double c = mu.nodes[i];
        const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
        for (int j = 0; j < n_azimuth; ++j) {
            const double phi = 2.0 * std::numbers::pi * (j + 0.5) / n_azimuth;
            rule.directions.push_back({s * std::cos(phi), s * std::sin(phi), c});
            rule.weights.push_back(mu.weights[i] * 2.0 * std::numbers::pi / n_azimuth);
        }
    }
    return rule;
}

SphereRule sphere_rule_with_points(int min_points) {
    min_points = std::max(min_points, 50);
    const int n = static_cast<int>(std::ceil(std::sqrt(min_points / 2.0)));
    return sphere_rule(n);
}

}  // namespace cmlab
