#include "cmlab/domain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "cmlab/error.hpp"

namespace cmlab {

DomainSpec DomainSpec::ball(double radius, Vec3 center, Expression f, Expression a, double lambda, double Lambda) {
    DomainSpec d;
    d.shape = Shape::ball;
    d.radius = radius;
    d.center = center;
    d.boundary_data = std::move(f);
    d.conductivity = std::move(a);
    d.lambda_bound = lambda;
    d.Lambda_bound = Lambda;
    d.validate();
    return d;
}

DomainSpec DomainSpec::box(Vec3 lo, Vec3 hi, Expression f, Expression a, double lambda, double Lambda) {
    DomainSpec d;
    d.shape = Shape::box;
    d.center = (lo + hi) * 0.5;
    d.extents = hi - lo;
    d.boundary_data = std::move(f);
    d.conductivity = std::move(a);
    d.lambda_bound = lambda;
    d.Lambda_bound = Lambda;
    d.validate();
    return d;
}

DomainSpec DomainSpec::unit_ball(const std::string& f) {
    return ball(1.0, {}, Expression::parse(f), Expression::constant(1.0), 1.0, 1.0);
}

DomainSpec DomainSpec::unit_box(const std::string& f) {
    return box({0, 0, 0}, {1, 1, 1}, Expression::parse(f), Expression::constant(1.0), 1.0, 1.0);
}

void DomainSpec::validate() const {
    if (shape == Shape::ball && !(radius > 0.0))
        throw Error(ErrorCode::invalid_argument, "ball radius must be positive");
    if (shape == Shape::box && !(extents.x > 0.0 && extents.y > 0.0 && extents.z > 0.0))
        throw Error(ErrorCode::invalid_argument, "box extents must be positive");
    if (!(lambda_bound > 0.0) || !(Lambda_bound >= lambda_bound))
        throw Error(ErrorCode::invalid_argument, "ellipticity bounds must satisfy 0 < lambda <= Lambda");
}

Vec3 DomainSpec::lower() const {
    if (shape == Shape::ball) return center - Vec3{radius, radius, radius};
    return center - extents * 0.5;
}

Vec3 DomainSpec::upper() const {
    if (shape == Shape::ball) return center + Vec3{radius, radius, radius};
    return center + extents * 0.5;
}

double DomainSpec::volume() const {
    if (shape == Shape::ball) return 4.0 / 3.0 * std::numbers::pi * radius * radius * radius;
    return extents.x * extents.y * extents.z;
}

double DomainSpec::shrunk_volume(double eps) const {
    if (shape == Shape::ball) {
        const double r = std::max(0.0, radius - eps);
        return 4.0 / 3.0 * std::numbers::pi * r * r * r;
    }
    double v = 1.0;
    for (int d = 0; d < 3; ++d) v *= std::max(0.0, extents[d] - 2.0 * eps);
    return v;
}

double DomainSpec::distance_to_boundary(const Vec3& x) const {
    if (shape == Shape::ball) return radius - distance(x, center);
    const Vec3 lo = lower();
    const Vec3 hi = upper();
    double d = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) d = std::min({d, x[a] - lo[a], hi[a] - x[a]});
    return d;
}

double DomainSpec::boundary_crossing(const Vec3& p, int axis, double step) const {
    double t = 1.0;
    if (shape == Shape::ball) {
        const Vec3 q = p - center;
        double rest = norm2(q) - q[axis] * q[axis];
        const double root = std::sqrt(std::max(0.0, radius * radius - rest));
        t = step > 0 ? (-q[axis] + root) / step : (-q[axis] - root) / step;
    } else {
        const double face = step > 0 ? upper()[axis] : lower()[axis];
        t = (face - p[axis]) / step;
    }
    return std::clamp(t, 0.0, 1.0);
}

Vec3 DomainSpec::sample_shrunk(double eps, std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    if (shape == Shape::ball) {
        const double r = radius - eps;
        for (;;) {
            const Vec3 q{u(rng), u(rng), u(rng)};
            if (norm2(q) <= 1.0) return center + q * r;
        }
    }
    const Vec3 half = extents * 0.5 - Vec3{eps, eps, eps};
    return center + Vec3{u(rng) * half.x, u(rng) * half.y, u(rng) * half.z};
}

const char* to_string(ErrorCode c) {
    switch (c) {
        case ErrorCode::invalid_argument: return "invalid-argument";
        case ErrorCode::placement_failure: return "placement-failure";
        case ErrorCode::empty_ensemble: return "empty-ensemble";
        case ErrorCode::degenerate_grid: return "degenerate-grid";
        case ErrorCode::empty_region: return "empty-region";
        case ErrorCode::sphere_outside_domain: return "sphere-outside-domain";
        case ErrorCode::grid_mismatch: return "grid-mismatch";
        case ErrorCode::nonconvergence: return "nonconvergence";
        case ErrorCode::conductivity_bound: return "conductivity-bound";
        case ErrorCode::under_resolved_inclusion: return "under-resolved-inclusion";
        case ErrorCode::inclusion_outside_domain: return "inclusion-outside-domain";
        case ErrorCode::singular_evaluation: return "singular-evaluation";
        case ErrorCode::coincident_points: return "coincident-points";
        case ErrorCode::unsupported_domain: return "unsupported-domain";
        case ErrorCode::divergence: return "divergence";
        case ErrorCode::insufficient_levels: return "insufficient-levels";
        case ErrorCode::pair_budget_exceeded: return "pair-budget-exceeded";
        case ErrorCode::under_resolved_gap: return "under-resolved-gap";
        case ErrorCode::config_parse: return "config-parse";
        case ErrorCode::unknown_subcommand: return "unknown-subcommand";
    }
    return "error";
}

}  // namespace cmlab
