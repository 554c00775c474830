#include "cmlab/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "cmlab/error.hpp"
#include "cmlab/quadrature.hpp"

namespace cmlab {

namespace {

constexpr double inv4pi = 0.25 / std::numbers::pi;

Vec3 exterior_gradient(const DipoleParams& d, const Vec3& x) {
    const Vec3 r = x - d.center;
    const double r2 = norm2(r), rn = std::sqrt(r2);
    if (rn == 0.0) throw Error(ErrorCode::singular_evaluation, "dipole field evaluated at its center");
    const double e3 = d.epsilon * d.epsilon * d.epsilon;
    const double r3 = r2 * rn, r5 = r3 * r2;
    const Vec3& g = d.background_gradient;
    // grad of -(r.g)/r^3 is -g/r^3 + 3 (r.g) r / r^5; grad of 1/r is -r/r^3.
    return e3 * (-1.0 / r3 * g + 3.0 * dot(r, g) / r5 * r) - d.Ca * e3 / r3 * r;
}

}  // namespace

double dipole_constant(const DomainSpec& domain, const Vec3& eta, double epsilon, const Vec3& background_gradient) {
    if (!(epsilon > 0.0)) throw Error(ErrorCode::invalid_argument, "inclusion radius must be positive");
    if (domain.distance_to_boundary(eta) < epsilon * (1.0 - 1e-12))
        throw Error(ErrorCode::inclusion_outside_domain, "ball B(eta, eps) is not contained in the domain");
    const Expression& a = domain.conductivity;
    if (a.is_constant()) return 0.0;
    static const QuadratureRule radial = gauss_legendre(16, 0.0, 1.0);
    static const SphereRule sphere = sphere_rule(16);
    double volume = 0.0;
    for (std::size_t i = 0; i < radial.nodes.size(); ++i) {
        const double r = epsilon * radial.nodes[i];
        const double wr = epsilon * radial.weights[i] * r * r;
        for (std::size_t q = 0; q < sphere.directions.size(); ++q)
            volume += wr * sphere.weights[q] * dot(a.gradient(eta + r * sphere.directions[q]), background_gradient);
    }
    double surface = 0.0;
    for (std::size_t q = 0; q < sphere.directions.size(); ++q)
        surface += sphere.weights[q] * a.eval(eta + epsilon * sphere.directions[q]);
    surface *= epsilon * epsilon;
    return 2.0 / epsilon * volume / surface;
}

DipoleParams make_dipole(const DomainSpec& domain, const Vec3& eta, double epsilon, const Vec3& background_gradient) {
    return {eta, epsilon, background_gradient, dipole_constant(domain, eta, epsilon, background_gradient)};
}

double dipole_field(const DipoleParams& d, const Vec3& x) {
    const Vec3 r = x - d.center;
    const double r2 = norm2(r);
    const double e = d.epsilon;
    if (r2 <= e * e) return -dot(r, d.background_gradient) + d.Ca * e * e;
    const double rn = std::sqrt(r2);
    const double e3 = e * e * e;
    return -dot(r, d.background_gradient) * e3 / (r2 * rn) + d.Ca * e3 / rn;
}

Vec3 dipole_gradient(const DipoleParams& d, const Vec3& x) {
    if (norm2(x - d.center) <= d.epsilon * d.epsilon) return -d.background_gradient;
    return exterior_gradient(d, x);
}

double dipole_flux(const DomainSpec& domain, const DipoleParams& d, int min_points) {
    const Expression& a = domain.conductivity;
    return surface_flux([&](const Vec3& x) { return exterior_gradient(d, x); },
                        [&](const Vec3& x) { return a.eval(x); }, d.center, d.epsilon, min_points);
}

double BallGreen::operator()(const Vec3& x, const Vec3& xi) const {
    const Vec3 u = x - center, v = xi - center;
    const double dist = distance(u, v);
    if (dist == 0.0) throw Error(ErrorCode::coincident_points, "Green's function evaluated at coincident points");
    const double R2 = radius * radius;
    const double D = norm2(u) * norm2(v) - 2.0 * R2 * dot(u, v) + R2 * R2;
    return inv4pi * (1.0 / dist - radius / std::sqrt(std::max(D, 0.0)));
}

Vec3 BallGreen::gradient(const Vec3& x, const Vec3& xi) const {
    const Vec3 u = x - center, v = xi - center;
    const Vec3 r = u - v;
    const double dist = norm(r);
    if (dist == 0.0) throw Error(ErrorCode::coincident_points, "Green's function evaluated at coincident points");
    const double R2 = radius * radius;
    const double D = norm2(u) * norm2(v) - 2.0 * R2 * dot(u, v) + R2 * R2;
    const Vec3 dD = 2.0 * norm2(v) * u - 2.0 * R2 * v;
    return inv4pi * (-1.0 / (dist * dist * dist) * r + 0.5 * radius * std::pow(D, -1.5) * dD);
}

double greens_function_ball(const BallGreen& green, const Vec3& x, const Vec3& xi) { return green(x, xi); }

namespace {

double size_scale(const DomainSpec& d) {
    if (d.shape == DomainSpec::Shape::ball) return d.radius;
    return 0.5 * std::min({d.extents.x, d.extents.y, d.extents.z});
}

Vec3 uniform_in(const DomainSpec& d, double clearance, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Vec3 lo = d.lower(), hi = d.upper();
    for (int attempt = 0; attempt < 1000000; ++attempt) {
        const Vec3 p{lo.x + (hi.x - lo.x) * u(rng), lo.y + (hi.y - lo.y) * u(rng), lo.z + (hi.z - lo.z) * u(rng)};
        if (d.distance_to_boundary(p) > clearance) return p;
    }
    throw Error(ErrorCode::invalid_argument, "sampling region is empty");
}

std::size_t nearest_node(const Grid& g, const Vec3& p) {
    std::array<int, 3> c{};
    for (int a = 0; a < 3; ++a)
        c[a] = std::clamp(static_cast<int>(std::lround((p[a] - g.origin[a]) / g.h)), 1, g.n[a] - 2);
    return g.index(c[0], c[1], c[2]);
}

}  // namespace

std::vector<BoundRow> greens_bound_check(const DomainSpec& domain, double h, std::size_t sample_pairs, int max_order,
                                         const BoundCheckOptions& options) {
    if (max_order < 0 || max_order > 2) throw Error(ErrorCode::invalid_argument, "derivative order must be 0, 1 or 2");
    if (sample_pairs == 0 || options.sources == 0) throw Error(ErrorCode::invalid_argument, "no pairs requested");
    const auto geo = GridGeometry::build(domain, h);
    const Grid& g = geo->grid();
    const double scale = size_scale(domain);
    const double min_sep = options.min_separation > 0.0 ? options.min_separation : 4.0 * h;
    const double x_clearance = std::max(3.0 * h, 0.05 * scale);
    std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32)};
    std::mt19937_64 rng(seq);

    std::vector<BoundRow> rows(max_order + 1);
    for (int o = 0; o <= max_order; ++o) rows[o] = {o, 0.0, 0, h};
    const std::size_t per_source = (sample_pairs + options.sources - 1) / options.sources;
    std::size_t remaining = sample_pairs;
    for (std::size_t s = 0; s < options.sources && remaining > 0; ++s) {
        const Vec3 xi_raw = uniform_in(domain, options.source_clearance * scale, rng);
        const std::size_t src = nearest_node(g, xi_raw);
        const Vec3 xi = g.point(src);
        const GridField G = green_column(geo, xi, options.solver);
        const auto& v = G.values();
        const std::size_t take = std::min(per_source, remaining);
        for (std::size_t k = 0; k < take;) {
            const Vec3 xr = uniform_in(domain, x_clearance, rng);
            if (distance(xr, xi) < min_sep + std::sqrt(3.0) * h) continue;
            const std::size_t node = nearest_node(g, xr);
            const Vec3 x = g.point(node);
            const double r = distance(x, xi);
            if (r < min_sep) continue;
            ++k;
            --remaining;
            rows[0].sup = std::max(rows[0].sup, std::abs(v[node]) * r);
            ++rows[0].pair_count;
            if (max_order >= 1) {
                Vec3 grad{};
                for (int a = 0; a < 3; ++a) {
                    const std::size_t st = g.stride(a);
                    grad[a] = (v[node + st] - v[node - st]) / (2.0 * h);
                }
                rows[1].sup = std::max(rows[1].sup, norm(grad) * r * r);
                ++rows[1].pair_count;
            }
            if (max_order >= 2) {
                double hmax = 0.0;
                for (int a = 0; a < 3; ++a)
                    for (int b = a; b < 3; ++b) {
                        const std::size_t sa = g.stride(a), sb = g.stride(b);
                        double d2;
                        if (a == b) d2 = (v[node + sa] - 2.0 * v[node] + v[node - sa]) / (h * h);
                        else
                            d2 = (v[node + sa + sb] - v[node + sa - sb] - v[node - sa + sb] + v[node - sa - sb]) /
                                 (4.0 * h * h);
                        hmax = std::max(hmax, std::abs(d2));
                    }
                rows[2].sup = std::max(rows[2].sup, hmax * r * r * r);
                ++rows[2].pair_count;
            }
        }
    }
    return rows;
}

double integral_representation(const DomainSpec& domain, const SolveOutput& solve, const GridField& background,
                               const InclusionConfiguration& config, const BallGreen& green, const Vec3& x) {
    if (domain.shape != DomainSpec::Shape::ball || !domain.conductivity.is_constant())
        throw Error(ErrorCode::unsupported_domain, "integral representation needs a ball with constant conductivity");
    const double a = domain.conductivity.eval({});
    double value = interpolate(background, x);
    if (config.size() == 0) return value;
    const GridField& phi = solve.field;
    const double h = phi.grid().h;
    for (const auto& eta : config.centers) {
        const double rho = config.epsilon + 3.0 * h;
        if (distance(x, eta) <= rho)
            throw Error(ErrorCode::invalid_argument, "probe point lies inside a standoff sphere");
        // Node spacing at most a quarter of the probe's distance to the sphere keeps the kernel resolved.
        const double gap = distance(x, eta) - rho;
        const double by_gap = std::min(2e5, 200.0 * (rho / gap) * (rho / gap));
        const int points = static_cast<int>(std::ceil(std::max({50.0, 6.0 * (rho / h) * (rho / h), by_gap})));
        const SphereRule rule = sphere_rule_with_points(points);
        double sum = 0.0;
        for (std::size_t q = 0; q < rule.directions.size(); ++q) {
            const Vec3 n = rule.directions[q];
            const Vec3 xi = eta + rho * n;
            const double dphi = -dot(interpolate_gradient(phi, xi), n);
            const double dG = -dot(green.gradient(xi, x), n);
            sum += rule.weights[q] * (green(x, xi) * a * dphi - interpolate(phi, xi) * a * dG);
        }
        value += sum * rho * rho;
    }
    return value;
}

Background harmonic_background(const Expression& f) {
    return {[f](const Vec3& p) { return f.eval(p); }, [f](const Vec3& p) { return f.gradient(p); }};
}

namespace {

Vec3 direct_dipole_gradient(const Vec3& p, const Vec3& y, const Vec3& x) {
    const Vec3 r = x - y;
    const double r2 = norm2(r), rn = std::sqrt(r2);
    return (1.0 / (r2 * rn)) * p - (3.0 * dot(p, r) / (r2 * r2 * rn)) * r;
}

double direct_dipole_potential(const Vec3& p, const Vec3& y, const Vec3& x) {
    const Vec3 r = x - y;
    const double rn = norm(r);
    return dot(p, r) / (rn * rn * rn);
}

// Kelvin image of the dipole p at y (coordinates relative to the ball center).
double image_potential(double R, const Vec3& p, const Vec3& y, const Vec3& x) {
    const double R2 = R * R;
    const double D = norm2(x) * norm2(y) - 2.0 * R2 * dot(x, y) + R2 * R2;
    return R * std::pow(D, -1.5) * (norm2(x) * dot(p, y) - R2 * dot(p, x));
}

Vec3 image_gradient(double R, const Vec3& p, const Vec3& y, const Vec3& x) {
    const double R2 = R * R;
    const double D = norm2(x) * norm2(y) - 2.0 * R2 * dot(x, y) + R2 * R2;
    const double s = norm2(x) * dot(p, y) - R2 * dot(p, x);
    const Vec3 dD = 2.0 * norm2(y) * x - 2.0 * R2 * y;
    return R * (-1.5 * std::pow(D, -2.5) * s * dD + std::pow(D, -1.5) * (2.0 * dot(p, y) * x - R2 * p));
}

}  // namespace

ReflectionResult reflection_solve(const BallGreen& green, const InclusionConfiguration& config,
                                  const Background& background, std::size_t max_sweeps, double clearance) {
    const double eps = config.epsilon;
    const double R = green.radius;
    const std::size_t n = config.size();
    std::vector<Vec3> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = config.centers[i] - green.center;
        if (R - norm(y[i]) < clearance * eps * (1.0 - 1e-12)) {
            std::ostringstream os;
            os << "reflection iteration needs clearance d(eta, boundary) >= " << clearance << " eps";
            throw Error(ErrorCode::divergence, os.str());
        }
        for (std::size_t j = 0; j < i; ++j)
            if (distance(y[i], y[j]) < 4.0 * eps * (1.0 - 1e-12))
                throw Error(ErrorCode::divergence, "reflection iteration needs separations >= 4 eps");
    }
    const double e3 = eps * eps * eps;
    ReflectionResult res;
    std::vector<Vec3> g0(n);
    for (std::size_t i = 0; i < n; ++i) g0[i] = background.gradient(config.centers[i]);
    res.moments.resize(n);
    for (std::size_t i = 0; i < n; ++i) res.moments[i] = -e3 * g0[i];

    std::vector<Vec3> next(n);
    double first_increment = -1.0;
    while (n > 0) {
        double pmax = 0.0, dmax = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            Vec3 field = g0[i];
            for (std::size_t m = 0; m < n; ++m) {
                if (m != i) field += direct_dipole_gradient(res.moments[m], y[m], y[i]);
                field += image_gradient(R, res.moments[m], y[m], y[i]);
            }
            next[i] = -e3 * field;
            pmax = std::max(pmax, norm(next[i]));
            dmax = std::max(dmax, norm(next[i] - res.moments[i]));
        }
        res.moments.swap(next);
        ++res.sweeps;
        res.last_increment = pmax > 0.0 ? dmax / pmax : 0.0;
        if (!std::isfinite(res.last_increment))
            throw Error(ErrorCode::divergence, "reflection iteration produced non-finite moments");
        if (res.last_increment < 1e-12) break;
        if (first_increment < 0.0) first_increment = res.last_increment;
        if (res.sweeps >= max_sweeps || res.last_increment > 1e3 * std::max(first_increment, 1e-300)) {
            std::ostringstream os;
            os << "reflection iteration did not contract (increment " << res.last_increment << " after "
               << res.sweeps << " sweeps)";
            throw Error(ErrorCode::divergence, os.str());
        }
    }
    const auto moments = res.moments;
    const Vec3 c = green.center;
    res.potential = [moments, y, R, c, bg = background.value](const Vec3& x) {
        const Vec3 u = x - c;
        double v = bg(x);
        for (std::size_t m = 0; m < moments.size(); ++m)
            v += direct_dipole_potential(moments[m], y[m], u) + image_potential(R, moments[m], y[m], u);
        return v;
    };
    res.gradient = [moments, y, R, c, bg = background.gradient](const Vec3& x) {
        const Vec3 u = x - c;
        Vec3 v = bg(x);
        for (std::size_t m = 0; m < moments.size(); ++m)
            v += direct_dipole_gradient(moments[m], y[m], u) + image_gradient(R, moments[m], y[m], u);
        return v;
    };
    return res;
}

}  // namespace cmlab
