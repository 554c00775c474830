#include "cmlab/elliptic.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <tuple>

#include "cmlab/error.hpp"
#include "cmlab/sparse.hpp"

namespace cmlab {

namespace {

constexpr std::int32_t kOutside = -1;
// Codes <= -2 mark a node inside ball k = -2 - code.
constexpr std::int32_t member_code(std::size_t k) { return -2 - static_cast<std::int32_t>(k); }
constexpr std::size_t member_of(std::int32_t code) { return static_cast<std::size_t>(-2 - code); }

enum class SphereMode { merged, fixed, penalty };

struct Problem {
    GeometryPtr geometry;
    bool unit_conductivity = false;
    const std::vector<double>* multiplier = nullptr;
    std::function<double(const Vec3&)> boundary;
    std::vector<Sphere> spheres;
    SphereMode mode = SphereMode::merged;
    double fixed_value = 0.0;
    const VectorField* divergence = nullptr;
    std::optional<std::size_t> point_source;
};

double harmonic(double a, double b) { return a == b ? a : 2.0 * a * b / (a + b); }

// Fraction t in (0, 1] at which p + t d enters the ball, for p outside and p + d inside.
double sphere_entry(const Vec3& p, const Vec3& d, const Sphere& s) {
    const Vec3 q = p - s.center;
    const double a = norm2(d), b = dot(q, d), c = norm2(q) - s.radius * s.radius;
    const double disc = std::max(0.0, b * b - a * c);
    return std::clamp((-b - std::sqrt(disc)) / a, 0.0, 1.0);
}

class System {
public:
    System(const Problem& pb, const SolverOptions& opt) : pb_(pb), opt_(opt), geo_(*pb.geometry), g_(geo_.grid()) {
        classify();
    }

    SolveOutput solve();
    /// The quadratic form evaluated on nodal values; ball nodes must carry one value per ball.
    double field_energy(const std::vector<double>& values) const;

private:
    struct Face {
        enum Kind { boundary, node, sphere } kind;
        std::size_t other;  // neighbour node for `node`, ball index for `sphere`
        double w;
        double value;  // boundary value for `boundary`
    };

    void classify();
    double node_a(std::size_t idx) const;
    template <class F>
    void visit_faces(std::size_t idx, F&& f) const;
    void assemble();
    double energy(const std::vector<double>& u) const;

    const Problem& pb_;
    const SolverOptions& opt_;
    const GridGeometry& geo_;
    const Grid& g_;
    std::vector<std::int32_t> code_;
    std::vector<std::uint8_t> penalty_member_;
    std::size_t n_free_ = 0;
    std::size_t n_merged_ = 0;
    CsrMatrix a_;
    std::vector<double> b_;
    std::vector<AggregationKey> keys_;
};

void System::classify() {
    code_.assign(g_.size(), kOutside);
    for (std::size_t idx = 0; idx < g_.size(); ++idx)
        if (geo_.inside(idx)) code_[idx] = 0;
    if (pb_.mode == SphereMode::penalty) penalty_member_.assign(g_.size(), 0);
    for (std::size_t k = 0; k < pb_.spheres.size(); ++k) {
        const Sphere& s = pb_.spheres[k];
        std::array<int, 3> lo{}, hi{};
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::max(0, static_cast<int>(std::floor((s.center[a] - s.radius - g_.origin[a]) / g_.h)));
            hi[a] = std::min(g_.n[a] - 1, static_cast<int>(std::ceil((s.center[a] + s.radius - g_.origin[a]) / g_.h)));
        }
        const double r2 = s.radius * s.radius;
        for (int k3 = lo[2]; k3 <= hi[2]; ++k3)
            for (int j = lo[1]; j <= hi[1]; ++j)
                for (int i = lo[0]; i <= hi[0]; ++i) {
                    const std::size_t idx = g_.index(i, j, k3);
                    if (code_[idx] == kOutside || norm2(g_.point(i, j, k3) - s.center) > r2) continue;
                    if (pb_.mode == SphereMode::penalty) penalty_member_[idx] = 1;
                    else code_[idx] = member_code(k);
                }
    }
    for (std::size_t idx = 0; idx < g_.size(); ++idx)
        if (code_[idx] == 0) code_[idx] = static_cast<std::int32_t>(n_free_++);
    n_merged_ = pb_.mode == SphereMode::merged ? pb_.spheres.size() : 0;
    if (n_free_ + n_merged_ > static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max()))
        throw Error(ErrorCode::invalid_argument, "grid too large for 32-bit unknown indices");
}

double System::node_a(std::size_t idx) const {
    if (!penalty_member_.empty() && penalty_member_[idx]) return opt_.penalty_conductivity;
    double a = pb_.unit_conductivity ? 1.0 : geo_.conductivity(idx);
    if (pb_.multiplier) a *= (*pb_.multiplier)[idx];
    return a;
}

template <class F>
void System::visit_faces(std::size_t idx, F&& f) const {
    const auto c = g_.coords(idx);
    const Vec3 p = g_.point(c[0], c[1], c[2]);
    const double ai = node_a(idx);
    const double h = g_.h;
    for (int axis = 0; axis < 3; ++axis) {
        for (int sign : {-1, 1}) {
            const int q = c[axis] + sign;
            const std::size_t j = idx + sign * static_cast<std::ptrdiff_t>(g_.stride(axis));
            if (q < 0 || q >= g_.n[axis] || code_[j] == kOutside) {
                const double step = sign * h;
                const double t = std::max(opt_.min_fraction, geo_.domain().boundary_crossing(p, axis, step));
                Vec3 x = p;
                x[axis] += t * step;
                f(Face{Face::boundary, 0, h * ai / t, pb_.boundary ? pb_.boundary(x) : 0.0});
                continue;
            }
            const std::int32_t cj = code_[j];
            const std::int32_t ci = code_[idx];
            if (cj >= 0 || (ci < 0 && member_of(ci) != member_of(cj))) {
                f(Face{Face::node, j, h * harmonic(ai, node_a(j)), 0.0});
            } else if (ci >= 0) {
                const std::size_t k = member_of(cj);
                Vec3 d{};
                d[axis] = sign * h;
                const double t = std::max(opt_.min_fraction, sphere_entry(p, d, pb_.spheres[k]));
                f(Face{Face::sphere, k, h * ai / t, 0.0});
            }
        }
    }
}

void System::assemble() {
    const std::size_t n = n_free_ + n_merged_;
    a_.rows = n;
    a_.row_ptr.assign(1, 0);
    a_.row_ptr.reserve(n + 1);
    a_.col.reserve(7 * n_free_ + 64);
    a_.val.reserve(7 * n_free_ + 64);
    b_.assign(n, 0.0);
    keys_.assign(n, AggregationKey{});

    // Rows of the merged unknowns, gathered while sweeping the free rows.
    std::vector<std::vector<std::pair<std::int32_t, double>>> ball_rows(n_merged_);
    std::vector<double> ball_diag(n_merged_, 0.0);

    std::vector<std::pair<std::int32_t, double>> row;
    for (std::size_t idx = 0; idx < g_.size(); ++idx) {
        const std::int32_t ci = code_[idx];
        if (ci == kOutside) continue;
        if (ci < 0) {
            if (pb_.mode != SphereMode::merged) continue;
            const std::size_t k = member_of(ci);
            visit_faces(idx, [&](const Face& f) {
                if (f.kind == Face::boundary) {
                    ball_diag[k] += f.w;
                    b_[n_free_ + k] += f.w * f.value;
                } else if (f.kind == Face::node && code_[f.other] < 0) {
                    ball_diag[k] += f.w;
                    ball_rows[k].emplace_back(static_cast<std::int32_t>(n_free_ + member_of(code_[f.other])), -f.w);
                }
            });
            continue;
        }
        row.clear();
        double diag = 0.0;
        double rhs = 0.0;
        visit_faces(idx, [&](const Face& f) {
            diag += f.w;
            switch (f.kind) {
                case Face::boundary: rhs += f.w * f.value; break;
                case Face::node: row.emplace_back(code_[f.other], -f.w); break;
                case Face::sphere:
                    if (pb_.mode == SphereMode::fixed) {
                        rhs += f.w * pb_.fixed_value;
                    } else {
                        const auto col = static_cast<std::int32_t>(n_free_ + f.other);
                        row.emplace_back(col, -f.w);
                        ball_rows[f.other].emplace_back(ci, -f.w);
                        ball_diag[f.other] += f.w;
                    }
                    break;
            }
        });
        row.emplace_back(ci, diag);
        std::sort(row.begin(), row.end());
        for (std::size_t e = 0; e < row.size(); ++e) {
            if (e > 0 && row[e].first == row[e - 1].first) {
                a_.val.back() += row[e].second;
                continue;
            }
            a_.col.push_back(row[e].first);
            a_.val.push_back(row[e].second);
        }
        a_.row_ptr.push_back(a_.col.size());
        b_[ci] = rhs;
        const auto c = g_.coords(idx);
        keys_[ci] = AggregationKey{{c[0], c[1], c[2]}};
    }
    for (std::size_t k = 0; k < n_merged_; ++k) {
        auto& r = ball_rows[k];
        r.emplace_back(static_cast<std::int32_t>(n_free_ + k), ball_diag[k]);
        std::sort(r.begin(), r.end());
        for (std::size_t e = 0; e < r.size(); ++e) {
            if (e > 0 && r[e].first == r[e - 1].first) {
                a_.val.back() += r[e].second;
                continue;
            }
            a_.col.push_back(r[e].first);
            a_.val.push_back(r[e].second);
        }
        a_.row_ptr.push_back(a_.col.size());
        std::vector<std::pair<std::int32_t, double>>().swap(r);
    }

    // Source terms.
    if (pb_.point_source) {
        const std::int32_t c = code_[*pb_.point_source];
        if (c < 0) throw Error(ErrorCode::invalid_argument, "point source must sit at a free interior node");
        b_[c] += 1.0;
    }
    if (pb_.divergence) {
        const auto& F = pb_.divergence->components;
        const double h2 = g_.h * g_.h;
        for (std::size_t idx = 0; idx < g_.size(); ++idx) {
            const std::int32_t ci = code_[idx];
            if (ci < 0) continue;
            const auto c = g_.coords(idx);
            double s = 0.0;
            for (int axis = 0; axis < 3; ++axis)
                for (int sign : {-1, 1}) {
                    const int q = c[axis] + sign;
                    const std::size_t j = idx + sign * static_cast<std::ptrdiff_t>(g_.stride(axis));
                    const bool inner = q >= 0 && q < g_.n[axis] && code_[j] != kOutside;
                    const double face = inner ? 0.5 * (F[axis][idx] + F[axis][j]) : F[axis][idx];
                    s += sign * face;
                }
            b_[ci] += s * h2;
        }
    }
}

double System::energy(const std::vector<double>& x) const {
    const auto value = [&](std::size_t node) {
        const std::int32_t c = code_[node];
        if (c >= 0) return x[c];
        if (pb_.mode == SphereMode::fixed) return pb_.fixed_value;
        return x[n_free_ + member_of(c)];
    };
    double e = 0.0;
    for (std::size_t idx = 0; idx < g_.size(); ++idx) {
        const std::int32_t ci = code_[idx];
        if (ci == kOutside) continue;
        if (ci < 0 && pb_.mode == SphereMode::fixed) continue;
        const double ui = value(idx);
        visit_faces(idx, [&](const Face& f) {
            switch (f.kind) {
                case Face::boundary: e += f.w * (ui - f.value) * (ui - f.value); break;
                case Face::node:
                    // Faces from a ball node to a free node are counted as sphere faces from the free side.
                    if (ci < 0 && code_[f.other] >= 0) break;
                    e += 0.5 * f.w * (ui - value(f.other)) * (ui - value(f.other));
                    break;
                case Face::sphere: {
                    const double us = pb_.mode == SphereMode::fixed ? pb_.fixed_value : x[n_free_ + f.other];
                    e += f.w * (ui - us) * (ui - us);
                    break;
                }
            }
        });
    }
    return e;
}

double System::field_energy(const std::vector<double>& values) const {
    std::vector<double> x(n_free_ + n_merged_, 0.0);
    std::vector<std::uint8_t> seen(n_merged_, 0);
    for (std::size_t idx = 0; idx < g_.size(); ++idx) {
        const std::int32_t c = code_[idx];
        if (c >= 0) {
            x[c] = values[idx];
        } else if (c != kOutside && pb_.mode == SphereMode::merged) {
            const std::size_t k = member_of(c);
            if (!seen[k]) {
                x[n_free_ + k] = values[idx];
                seen[k] = 1;
            } else if (x[n_free_ + k] != values[idx]) {
                throw Error(ErrorCode::invalid_argument, "competitor is not constant on an inclusion");
            }
        }
    }
    return energy(x);
}

SolveOutput System::solve() {
    assemble();
    const std::size_t n = a_.rows;
    std::vector<double> x(n, 0.0);
    std::size_t max_it = opt_.max_iterations;
    if (max_it == 0) max_it = static_cast<std::size_t>(50.0 * std::cbrt(static_cast<double>(g_.size())));
    CgResult cg;
    if (n > 0) {
        std::unique_ptr<Preconditioner> m;
        if (opt_.preconditioner == SolverOptions::Preconditioner::jacobi) m = std::make_unique<JacobiPreconditioner>(a_);
        else m = std::make_unique<AggregationAmg>(a_, std::move(keys_));
        cg = pcg(a_, b_, x, *m, opt_.tolerance, max_it);
        if (!cg.converged) {
            std::ostringstream os;
            os << "conjugate gradients stalled at relative residual " << cg.relative_residual << " after "
               << cg.iterations << " iterations";
            throw Error(ErrorCode::nonconvergence, os.str());
        }
    } else {
        cg.converged = true;
    }

    SolveOutput out;
    out.stats.unknown_count = n;
    out.stats.nonzeros = a_.nonzeros();
    out.stats.cg_iterations = cg.iterations;
    out.stats.final_relative_residual = cg.relative_residual;
    out.iterations = cg.iterations;
    out.residual = cg.relative_residual;
    out.dirichlet_energy = energy(x);

    std::vector<double> values(g_.size(), 0.0);
    for (std::size_t idx = 0; idx < g_.size(); ++idx) {
        const std::int32_t c = code_[idx];
        if (c >= 0) values[idx] = x[c];
        else if (c == kOutside) {
            const double v = pb_.boundary ? pb_.boundary(g_.point(idx)) : 0.0;
            values[idx] = std::isfinite(v) ? v : 0.0;
        } else if (pb_.mode == SphereMode::fixed) values[idx] = pb_.fixed_value;
        else values[idx] = x[n_free_ + member_of(c)];
    }
    if (pb_.mode == SphereMode::merged)
        for (std::size_t k = 0; k < n_merged_; ++k) out.inclusion_constants.push_back(x[n_free_ + k]);
    out.field = GridField(pb_.geometry, std::move(values));
    return out;
}

SolveOutput run(const Problem& pb, const SolverOptions& opt) {
    System s(pb, opt);
    return s.solve();
}

std::function<double(const Vec3&)> boundary_of(const DomainSpec& d) {
    Expression f = d.boundary_data;
    return [f](const Vec3& p) { return f.eval(p); };
}

}  // namespace

std::vector<Sphere> spheres_of(const InclusionConfiguration& config) {
    std::vector<Sphere> s;
    s.reserve(config.size());
    for (const auto& c : config.centers) s.push_back({c, config.epsilon});
    return s;
}

SolveOutput solve_background(const GeometryPtr& geometry, const SolverOptions& options) {
    Problem pb;
    pb.geometry = geometry;
    pb.boundary = boundary_of(geometry->domain());
    return run(pb, options);
}

SolveOutput solve_background(const DomainSpec& domain, double h, const SolverOptions& options) {
    return solve_background(GridGeometry::build(domain, h), options);
}

SolveOutput solve_with_inclusions(const GeometryPtr& geometry, const InclusionConfiguration& config,
                                  const SolverOptions& options) {
    const DomainSpec& domain = geometry->domain();
    if (config.size() == 0) return solve_background(geometry, options);
    if (config.epsilon < 4.0 * geometry->h() * (1.0 - 1e-12)) {
        std::ostringstream os;
        os << "inclusion radius " << config.epsilon << " is below 4h = " << 4.0 * geometry->h();
        throw Error(ErrorCode::under_resolved_inclusion, os.str());
    }
    validate_configuration(config, domain);
    // Solve in a canonical (lexicographic) order so that relabelling the inclusions cannot change
    // a single bit of the field; per-inclusion outputs are mapped back to the caller's order.
    std::vector<std::size_t> order(config.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        const Vec3 &p = config.centers[i], &q = config.centers[j];
        return std::tie(p.x, p.y, p.z) < std::tie(q.x, q.y, q.z);
    });
    Problem pb;
    pb.geometry = geometry;
    pb.boundary = boundary_of(domain);
    for (auto i : order) pb.spheres.push_back({config.centers[i], config.epsilon});
    pb.mode = options.inclusion_mode == SolverOptions::InclusionMode::penalty ? SphereMode::penalty : SphereMode::merged;
    SolveOutput out = run(pb, options);
    if (pb.mode == SphereMode::penalty) {
        for (const auto& s : pb.spheres) out.inclusion_constants.push_back(interpolate(out.field, s.center));
    }
    if (options.compute_flux_residuals) {
        const double h = geometry->h();
        std::function<double(const Vec3&)> a;
        if (domain.conductivity.is_constant()) {
            const double a0 = domain.conductivity.eval({});
            a = [a0](const Vec3&) { return a0; };
        } else {
            Expression ae = domain.conductivity;
            a = [ae](const Vec3& p) { return ae.eval(p); };
        }
        for (const auto& s : pb.spheres) {
            double flux = std::numeric_limits<double>::quiet_NaN();
            try {
                flux = surface_flux(out.field, a, s.center, s.radius + 2.0 * h);
            } catch (const Error&) {
                // Standoff sphere leaves the grid: the residual is reported as NaN.
            }
            out.flux_residuals.push_back(flux);
        }
    }
    std::vector<double> constants(order.size()), fluxes(out.flux_residuals.empty() ? 0 : order.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        constants[order[k]] = out.inclusion_constants[k];
        if (!fluxes.empty()) fluxes[order[k]] = out.flux_residuals[k];
    }
    out.inclusion_constants = std::move(constants);
    out.flux_residuals = std::move(fluxes);
    return out;
}

double discrete_energy(const GridField& w, const InclusionConfiguration& config, const SolverOptions& options) {
    const GeometryPtr& geometry = w.geometry_ptr();
    Problem pb;
    pb.geometry = geometry;
    pb.boundary = boundary_of(geometry->domain());
    pb.spheres = spheres_of(config);
    System s(pb, options);
    return s.field_energy(w.values());
}

SolveOutput solve_with_inclusions(const DomainSpec& domain, const InclusionConfiguration& config, double h,
                                  const SolverOptions& options) {
    return solve_with_inclusions(GridGeometry::build(domain, h), config, options);
}

SolveOutput solve_effective(const GridField& beta, const SolverOptions& options) {
    const GridGeometry& geo = beta.geometry();
    std::optional<double> common;
    bool constant = true;
    for (std::size_t idx = 0; idx < beta.values().size(); ++idx) {
        if (!geo.inside(idx)) continue;
        const double b = beta[idx];
        if (!(b >= 0.0) || b > 1.0 / 3.0)
            throw Error(ErrorCode::invalid_argument, "volume fraction field must lie in [0, 1/3]");
        if (!common) common = b;
        else if (b != *common) constant = false;
    }
    if (constant) return solve_background(beta.geometry_ptr(), options);
    std::vector<double> multiplier(beta.values().size(), 1.0);
    for (std::size_t idx = 0; idx < multiplier.size(); ++idx)
        if (geo.inside(idx)) multiplier[idx] = 1.0 + 3.0 * beta[idx];
    Problem pb;
    pb.geometry = beta.geometry_ptr();
    pb.boundary = boundary_of(geo.domain());
    pb.multiplier = &multiplier;
    return run(pb, options);
}

SolveOutput solve_effective(const DomainSpec& domain, const GridField& beta, double h, const SolverOptions& options) {
    const Grid expected = Grid::covering(domain, h);
    if (!(beta.grid() == expected)) throw Error(ErrorCode::grid_mismatch, "beta field is not on the requested grid");
    return solve_effective(beta, options);
}

GridField apply_inverse_L(const VectorField& F, const SolverOptions& options) {
    if (!F.geometry) throw Error(ErrorCode::invalid_argument, "vector field without geometry");
    for (const auto& c : F.components)
        if (c.size() != F.geometry->grid().size()) throw Error(ErrorCode::grid_mismatch, "vector field size mismatch");
    Problem pb;
    pb.geometry = F.geometry;
    pb.divergence = &F;
    return run(pb, options).field;
}

GridField apply_inverse_L(const DomainSpec& domain, const VectorField& F, double h, const SolverOptions& options) {
    if (!(F.geometry->grid() == Grid::covering(domain, h)))
        throw Error(ErrorCode::grid_mismatch, "vector field is not on the requested grid");
    return apply_inverse_L(F, options);
}

GridField green_column(const GeometryPtr& geometry, const Vec3& xi, const SolverOptions& options) {
    const Grid& g = geometry->grid();
    std::array<int, 3> c{};
    for (int a = 0; a < 3; ++a)
        c[a] = std::clamp(static_cast<int>(std::lround((xi[a] - g.origin[a]) / g.h)), 0, g.n[a] - 1);
    Problem pb;
    pb.geometry = geometry;
    pb.point_source = g.index(c[0], c[1], c[2]);
    return run(pb, options).field;
}

SolveOutput solve_fixed_inclusions(const GeometryPtr& geometry, const std::vector<Sphere>& spheres, double value,
                                   const SolverOptions& options) {
    Problem pb;
    pb.geometry = geometry;
    pb.unit_conductivity = true;
    pb.spheres = spheres;
    pb.mode = SphereMode::fixed;
    pb.fixed_value = value;
    SolveOutput out = run(pb, options);
    out.inclusion_constants.assign(spheres.size(), value);
    return out;
}

double dirichlet_energy(const GridField& field, const GridField& conductivity, const std::vector<Sphere>& exclusion) {
    if (!field.geometry().same_grid(conductivity.geometry()))
        throw Error(ErrorCode::grid_mismatch, "dirichlet_energy: conductivity lives on a different grid");
    const GridGeometry& geo = field.geometry();
    const Grid& g = field.grid();
    const double cell = g.h * g.h * g.h;
    double e = 0.0;
    for (std::size_t idx = 0; idx < g.size(); ++idx) {
        if (!geo.inside(idx)) continue;
        const Vec3 p = g.point(idx);
        bool excluded = false;
        for (const auto& s : exclusion)
            if (norm2(p - s.center) <= s.radius * s.radius) {
                excluded = true;
                break;
            }
        if (excluded) continue;
        e += geo.volume_weight(idx) * cell * conductivity[idx] * norm2(node_gradient(field, idx));
    }
    return e;
}

GridField conductivity_field(const GeometryPtr& geometry) {
    const GridGeometry& geo = *geometry;
    std::vector<double> v(geo.grid().size(), 0.0);
    for (std::size_t idx = 0; idx < v.size(); ++idx)
        if (geo.inside(idx)) v[idx] = geo.conductivity(idx);
    return GridField(geometry, std::move(v));
}

}  // namespace cmlab
