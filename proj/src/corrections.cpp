#include "cmlab/corrections.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "cmlab/error.hpp"
#include "cmlab/parallel.hpp"

namespace cmlab {

namespace {

double domain_scale(const DomainSpec& d) {
    if (d.shape == DomainSpec::Shape::ball) return d.radius;
    return 0.5 * std::min({d.extents.x, d.extents.y, d.extents.z});
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

GridField difference(const GridField& a, const GridField& b) { return combine({&a, &b}, {1.0, -1.0}); }

void fill_slopes(SlopeReport& report, const std::string& quantity, double expected, double tolerance) {
    std::vector<double> x, y;
    for (const auto& r : report.rows)
        if (r.quantity == quantity) {
            x.push_back(r.level);
            y.push_back(r.measured);
        }
    const double slope = loglog_slope(x, y);
    report.slopes[quantity] = slope;
    for (auto& r : report.rows)
        if (r.quantity == quantity) {
            r.fitted_slope = slope;
            r.expected_slope = expected;
            r.tolerance = tolerance;
        }
}

}  // namespace

CorrectionBundle single_inclusion(const GridField& phibar, const Vec3& eta, double epsilon,
                                  const SolverOptions& options) {
    const GeometryPtr& geo = phibar.geometry_ptr();
    const DomainSpec& domain = geo->domain();
    InclusionConfiguration config;
    config.epsilon = epsilon;
    config.centers = {eta};
    CorrectionBundle b;
    b.phibar = phibar;
    b.solve = solve_with_inclusions(geo, config, options);
    b.C1 = b.solve.inclusion_constants.at(0);
    b.phi1 = difference(b.solve.field, phibar);
    b.dipole = make_dipole(domain, eta, epsilon, interpolate_gradient(phibar, eta));
    const Grid& g = geo->grid();
    std::vector<double> v(g.size());
    for (std::size_t idx = 0; idx < v.size(); ++idx) v[idx] = b.phi1[idx] - dipole_field(b.dipole, g.point(idx));
    b.v1 = GridField(geo, std::move(v));
    b.phi1_norms = norms(b.phi1);
    b.v1_norms = norms(b.v1);
    double best = -1.0;
    for (std::size_t idx = 0; idx < g.size(); ++idx)
        if (geo->inside(idx) && std::abs(b.phi1[idx]) > best) {
            best = std::abs(b.phi1[idx]);
            b.phi1_argmax = g.point(idx);
        }
    return b;
}

CorrectionBundle single_inclusion(const DomainSpec& domain, const Vec3& eta, double epsilon, double h,
                                  const SolverOptions& options) {
    const auto geo = GridGeometry::build(domain, h);
    const SolveOutput bg = solve_background(geo, options);
    return single_inclusion(bg.field, eta, epsilon, options);
}

std::vector<std::pair<double, double>> far_field_profile(const CorrectionBundle& bundle, const Vec3& direction,
                                                         double r_min, double r_max, int samples) {
    if (samples < 2 || !(r_max > r_min) || !(r_min > 0.0))
        throw Error(ErrorCode::invalid_argument, "far-field probe needs 0 < r_min < r_max and 2+ samples");
    const Vec3 e = direction / norm(direction);
    const double eps3 = std::pow(bundle.dipole.epsilon, 3);
    std::vector<std::pair<double, double>> out;
    for (int k = 0; k < samples; ++k) {
        const double r = r_min * std::pow(r_max / r_min, double(k) / (samples - 1));
        const Vec3 grad = interpolate_gradient(bundle.phi1, bundle.dipole.center + r * e);
        out.emplace_back(r, norm(grad) * r * r * r / eps3);
    }
    return out;
}

bool SlopeReport::within(const std::string& quantity) const {
    auto it = slopes.find(quantity);
    if (it == slopes.end()) return false;
    for (const auto& r : rows)
        if (r.quantity == quantity) return std::abs(it->second - r.expected_slope) <= r.tolerance;
    return false;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::insufficient_levels, "slope fit needs 2+ points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) return std::numeric_limits<double>::quiet_NaN();
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

void write_slope_csv(std::ostream& os, const SlopeReport& report) {
    os << "quantity,level,measured,fitted_slope,expected_slope,tolerance\n";
    for (const auto& r : report.rows)
        os << r.quantity << ',' << fmt(r.level) << ',' << fmt(r.measured) << ',' << fmt(r.fitted_slope) << ','
           << fmt(r.expected_slope) << ',' << fmt(r.tolerance) << '\n';
}

SlopeReport remainder_scaling_study(const DomainSpec& domain, const Vec3& eta, const std::vector<double>& epsilons,
                                    const RemainderStudyOptions& options) {
    if (epsilons.size() < 3) throw Error(ErrorCode::insufficient_levels, "remainder study needs at least 3 levels");
    SlopeReport report;
    const double r_max = 0.5 * domain_scale(domain);
    for (double eps : epsilons) {
        const double h = eps / options.h_ratio;
        CorrectionBundle b = single_inclusion(domain, eta, eps, h, options.solver);
        report.rows.push_back({"grad_phi1_l2", eps, b.phi1_norms.h1_seminorm});
        report.rows.push_back({"phi1_linf", eps, b.phi1_norms.linf});
        report.rows.push_back({"grad_v1_l2", eps, b.v1_norms.h1_seminorm});
        if (r_max > 4.0 * eps) {
            const auto profile = far_field_profile(b, {1, 0, 0}, 4.0 * eps, r_max, options.far_field_samples);
            const std::string q = "far_field_compensated@eps=" + fmt(eps);
            for (const auto& [r, v] : profile) report.rows.push_back({q, r, v});
        }
    }
    fill_slopes(report, "grad_phi1_l2", 1.5, 0.2);
    fill_slopes(report, "phi1_linf", 1.0, 0.15);
    fill_slopes(report, "grad_v1_l2", 2.5, 0.3);
    for (double eps : epsilons) {
        const std::string q = "far_field_compensated@eps=" + fmt(eps);
        if (std::any_of(report.rows.begin(), report.rows.end(), [&](const SlopeRow& r) { return r.quantity == q; }))
            fill_slopes(report, q, 0.0, std::numeric_limits<double>::quiet_NaN());
    }
    return report;
}

namespace {

PairBundle pair_on(const GridField& phibar, Vec3 eta1, Vec3 eta2, double epsilon, const SolverOptions& options) {
    const GeometryPtr& geo = phibar.geometry_ptr();
    const bool swapped = std::tie(eta2.x, eta2.y, eta2.z) < std::tie(eta1.x, eta1.y, eta1.z);
    if (swapped) std::swap(eta1, eta2);
    InclusionConfiguration one{epsilon, {eta1}, 0}, two{epsilon, {eta2}, 0}, both{epsilon, {eta1, eta2}, 0};
    const SolveOutput s1 = solve_with_inclusions(geo, one, options);
    const SolveOutput s2 = solve_with_inclusions(geo, two, options);
    SolveOutput s12 = solve_with_inclusions(geo, both, options);
    const GridField phi1a = difference(s1.field, phibar);
    const GridField phi1b = difference(s2.field, phibar);
    std::vector<double> v(phibar.values().size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = s12.field[i] - phibar[i] - (phi1a[i] + phi1b[i]);
    PairBundle out;
    out.v2 = GridField(geo, std::move(v));
    out.psi2 = std::move(s12.field);
    out.C_pair = {s12.inclusion_constants[0], s12.inclusion_constants[1]};
    if (swapped) std::swap(out.C_pair[0], out.C_pair[1]);
    out.v2_norms = norms(out.v2);
    out.phi1_norms = norms(swapped ? phi1b : phi1a);
    return out;
}

}  // namespace

PairBundle pair_inclusion(const DomainSpec& domain, const Vec3& eta1, const Vec3& eta2, double epsilon, double h,
                          const SolverOptions& options) {
    const auto geo = GridGeometry::build(domain, h);
    const SolveOutput bg = solve_background(geo, options);
    return pair_on(bg.field, eta1, eta2, epsilon, options);
}

SlopeReport pair_scaling_study(const DomainSpec& domain, double epsilon, const std::vector<double>& separations,
                               double h, const Vec3& center, const Vec3& axis, const SolverOptions& options) {
    if (separations.size() < 3) throw Error(ErrorCode::insufficient_levels, "pair study needs at least 3 separations");
    const auto geo = GridGeometry::build(domain, h);
    const SolveOutput bg = solve_background(geo, options);
    const Vec3 e = axis / norm(axis);
    SlopeReport report;
    for (double d : separations) {
        if (d < 4.0 * epsilon) throw Error(ErrorCode::invalid_argument, "pair separation below 4 eps");
        const PairBundle p = pair_on(bg.field, center - 0.5 * d * e, center + 0.5 * d * e, epsilon, options);
        report.rows.push_back({"grad_v2_l2", d, p.v2_norms.h1_seminorm});
        report.rows.push_back({"v2_linf", d, p.v2_norms.linf});
    }
    fill_slopes(report, "grad_v2_l2", -3.0, 0.4);
    fill_slopes(report, "v2_linf", -3.0, 0.4);
    return report;
}

std::vector<SuperpositionLevel> superposition_levels(const DomainSpec& domain, const InclusionConfiguration& config,
                                                     double h, int max_order, const SuperpositionOptions& options) {
    if (max_order < 0 || max_order > 2) throw Error(ErrorCode::invalid_argument, "superposition order must be 0, 1 or 2");
    const std::size_t n = config.size();
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (max_order >= 2) {
        const double cutoff = options.pair_cutoff * config.epsilon;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (distance(config.centers[i], config.centers[j]) <= cutoff) pairs.emplace_back(i, j);
        if (pairs.size() > options.pair_budget) {
            std::ostringstream os;
            os << pairs.size() << " pair solves exceed the budget of " << options.pair_budget;
            throw Error(ErrorCode::pair_budget_exceeded, os.str());
        }
    }
    const auto geo = GridGeometry::build(domain, h);
    const SolveOutput bg = solve_background(geo, options.solver);
    const GridField& phibar = bg.field;
    const SolveOutput full = solve_with_inclusions(geo, config, options.solver);

    std::vector<SuperpositionLevel> levels;
    auto push = [&](int order, GridField approx, std::size_t pairs_used) {
        SuperpositionLevel l;
        l.order = order;
        l.residual = norms(difference(full.field, approx));
        l.approximation = std::move(approx);
        l.pairs_used = pairs_used;
        levels.push_back(std::move(l));
    };
    push(0, phibar, 0);
    if (max_order == 0) return levels;

    std::vector<GridField> phi1(n);
    parallel_for(n, options.workers, [&](std::size_t i) {
        InclusionConfiguration one{config.epsilon, {config.centers[i]}, config.seed};
        phi1[i] = difference(solve_with_inclusions(geo, one, options.solver).field, phibar);
    });
    std::vector<double> acc = phibar.values();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += phi1[i][k];
    push(1, GridField(geo, acc), 0);
    if (max_order == 1) return levels;

    std::vector<GridField> v2(pairs.size());
    parallel_for(pairs.size(), options.workers, [&](std::size_t p) {
        const auto [i, j] = pairs[p];
        InclusionConfiguration two{config.epsilon, {config.centers[i], config.centers[j]}, config.seed};
        const SolveOutput s = solve_with_inclusions(geo, two, options.solver);
        std::vector<double> v(s.field.values().size());
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = s.field[k] - phibar[k] - (phi1[i][k] + phi1[j][k]);
        v2[p] = GridField(geo, std::move(v));
    });
    for (const auto& v : v2)
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += v[k];
    push(2, GridField(geo, std::move(acc)), pairs.size());
    return levels;
}

SuperpositionLevel superposition(const DomainSpec& domain, const InclusionConfiguration& config, double h, int order,
                                 const SuperpositionOptions& options) {
    auto levels = superposition_levels(domain, config, h, order, options);
    return std::move(levels.back());
}

std::vector<double> boundary_deltas(const DomainSpec& domain, const InclusionConfiguration& config) {
    std::vector<double> d;
    for (const auto& c : config.centers)
        d.push_back(std::min(1.0, domain.distance_to_boundary(c) / config.epsilon - 1.0));
    return d;
}

CapacityResult capacity(const GeometryPtr& geometry, const InclusionConfiguration& config,
                        const SolverOptions& options) {
    if (config.size() > 0 && config.epsilon < 4.0 * geometry->h() * (1.0 - 1e-12))
        throw Error(ErrorCode::under_resolved_inclusion, "capacity needs eps >= 4h");
    validate_configuration(config, geometry->domain());
    SolveOutput s = solve_fixed_inclusions(geometry, spheres_of(config), 1.0, options);
    CapacityResult r;
    r.value = s.dirichlet_energy;
    r.minimizer = std::move(s.field);
    r.delta_list = boundary_deltas(geometry->domain(), config);
    return r;
}

CapacityResult capacity(const DomainSpec& domain, const InclusionConfiguration& config, double h,
                        const SolverOptions& options) {
    return capacity(GridGeometry::build(domain, h), config, options);
}

CapacityBoundaryReport capacity_boundary_study(const DomainSpec& domain, double epsilon,
                                               const std::vector<double>& deltas, double h,
                                               const SolverOptions& options) {
    if (deltas.empty()) throw Error(ErrorCode::insufficient_levels, "no delta values given");
    for (double d : deltas) {
        if (!(d > 0.0 && d <= 1.0)) throw Error(ErrorCode::invalid_argument, "delta must lie in (0, 1]");
        if (d * epsilon < 4.0 * h * (1.0 - 1e-12)) {
            std::ostringstream os;
            os << "gap " << d * epsilon << " to the boundary is below 4h = " << 4.0 * h;
            throw Error(ErrorCode::under_resolved_gap, os.str());
        }
    }
    const auto geo = GridGeometry::build(domain, h);
    CapacityBoundaryReport rep;
    for (double d : deltas) {
        Vec3 eta = domain.center;
        if (domain.shape == DomainSpec::Shape::ball) eta.x += domain.radius - (1.0 + d) * epsilon;
        else eta.x = domain.lower().x + (1.0 + d) * epsilon;
        const InclusionConfiguration config{epsilon, {eta}, 0};
        const double c = capacity(geo, config, options).value;
        rep.rows.push_back({d, c, c / (epsilon * (1.0 + std::log(1.0 / d)))});
    }
    double lo = rep.rows[0].compensated, hi = lo;
    for (const auto& r : rep.rows) {
        lo = std::min(lo, r.compensated);
        hi = std::max(hi, r.compensated);
    }
    rep.band = hi / lo;
    return rep;
}

}  // namespace cmlab
