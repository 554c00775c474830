#include "cmlab/field.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "cmlab/error.hpp"
#include "cmlab/quadrature.hpp"

namespace cmlab {

namespace {

std::string shortest(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

constexpr int subsamples = 4;

}  // namespace

std::array<int, 3> Grid::coords(std::size_t idx) const {
    const int i = static_cast<int>(idx % n[0]);
    idx /= n[0];
    const int j = static_cast<int>(idx % n[1]);
    return {i, j, static_cast<int>(idx / n[1])};
}

Vec3 Grid::point(std::size_t idx) const {
    const auto c = coords(idx);
    return point(c[0], c[1], c[2]);
}

std::size_t Grid::stride(int axis) const {
    return axis == 0 ? 1 : axis == 1 ? std::size_t(n[0]) : std::size_t(n[0]) * n[1];
}

Grid Grid::covering(const DomainSpec& domain, double h) {
    if (!(h > 0.0) || !std::isfinite(h)) throw Error(ErrorCode::invalid_argument, "grid spacing must be positive");
    const Vec3 lo = domain.lower(), hi = domain.upper();
    Grid g;
    g.h = h;
    for (int a = 0; a < 3; ++a) {
        const double extent = hi[a] - lo[a];
        const double cells = std::ceil(extent / h - 1e-9);
        if (cells > 4096) throw Error(ErrorCode::invalid_argument, "grid too fine: more than 4096 nodes per axis");
        g.n[a] = static_cast<int>(cells);
        if (g.n[a] < 3) {
            std::ostringstream os;
            os << "grid has " << g.n[a] << " nodes along axis " << a << " (need at least 3)";
            throw Error(ErrorCode::degenerate_grid, os.str());
        }
        const double mid = 0.5 * (lo[a] + hi[a]);
        g.origin[a] = mid - 0.5 * (g.n[a] - 1) * h;
    }
    return g;
}

GridGeometry::GridGeometry(DomainSpec domain, Grid grid) : domain_(std::move(domain)), grid_(grid) {}

std::shared_ptr<const GridGeometry> GridGeometry::build(const DomainSpec& domain, double h) {
    domain.validate();
    std::shared_ptr<GridGeometry> g(new GridGeometry(domain, Grid::covering(domain, h)));
    const Grid& grid = g->grid_;
    g->mask_.assign(grid.size(), 0);
    const double band = 0.5 * std::sqrt(3.0) * h;
    for (int k = 0; k < grid.n[2]; ++k)
        for (int j = 0; j < grid.n[1]; ++j)
            for (int i = 0; i < grid.n[0]; ++i) {
                const std::size_t idx = grid.index(i, j, k);
                const Vec3 p = grid.point(i, j, k);
                const double d = domain.distance_to_boundary(p);
                if (!(d > 0.0)) continue;
                if (d >= band) {
                    g->mask_[idx] = 1;
                    continue;
                }
                int hits = 0;
                for (int c = 0; c < subsamples; ++c)
                    for (int b = 0; b < subsamples; ++b)
                        for (int a = 0; a < subsamples; ++a) {
                            const Vec3 q = p + Vec3{(a + 0.5) / subsamples - 0.5, (b + 0.5) / subsamples - 0.5,
                                                    (c + 0.5) / subsamples - 0.5} * h;
                            hits += domain.distance_to_boundary(q) > 0.0;
                        }
                g->mask_[idx] = 2;
                g->partial_.emplace_back(idx, double(hits) / (subsamples * subsamples * subsamples));
            }
    g->interior_count_ = static_cast<std::size_t>(std::count_if(g->mask_.begin(), g->mask_.end(),
                                                                [](std::uint8_t m) { return m != 0; }));
    if (g->interior_count_ == 0) throw Error(ErrorCode::degenerate_grid, "no grid node lies inside the domain");

    const auto& a = domain.conductivity;
    const double lo = domain.lambda_bound, hi = domain.Lambda_bound;
    const double slack = 1e-12 * std::max(1.0, hi);
    const auto check = [&](double v, const Vec3& p) {
        if (!std::isfinite(v) || v < lo - slack || v > hi + slack) {
            std::ostringstream os;
            os << "conductivity a = " << v << " at (" << p.x << ", " << p.y << ", " << p.z
               << ") violates " << lo << " <= a <= " << hi;
            throw Error(ErrorCode::conductivity_bound, os.str());
        }
    };
    if (a.is_constant()) {
        g->a_constant_ = a.eval({});
        check(g->a_constant_, {});
    } else {
        g->a_values_.assign(grid.size(), 0.0);
        for (std::size_t idx = 0; idx < grid.size(); ++idx) {
            if (!g->mask_[idx]) continue;
            const Vec3 p = grid.point(idx);
            const double v = a.eval(p);
            check(v, p);
            g->a_values_[idx] = v;
        }
    }
    return g;
}

double GridGeometry::volume_weight(std::size_t idx) const {
    if (mask_[idx] == 0) return 0.0;
    if (mask_[idx] == 1) return 1.0;
    auto it = std::lower_bound(partial_.begin(), partial_.end(), idx,
                               [](const auto& e, std::size_t v) { return e.first < v; });
    return it->second;
}

GridField::GridField(GeometryPtr geometry, std::vector<double> values)
    : geometry_(std::move(geometry)), values_(std::move(values)) {
    if (!geometry_) throw Error(ErrorCode::invalid_argument, "field without geometry");
    if (values_.size() != geometry_->grid().size())
        throw Error(ErrorCode::grid_mismatch, "value count does not match the grid");
}

GridField GridField::zeros(GeometryPtr geometry) {
    const std::size_t n = geometry->grid().size();
    return GridField(std::move(geometry), std::vector<double>(n, 0.0));
}

GridField GridField::sample(GeometryPtr geometry, const std::function<double(const Vec3&)>& f) {
    const Grid& g = geometry->grid();
    std::vector<double> v(g.size());
    for (std::size_t idx = 0; idx < v.size(); ++idx) v[idx] = f(g.point(idx));
    return GridField(std::move(geometry), std::move(v));
}

Vec3 node_gradient(const GridField& field, std::size_t idx) {
    const Grid& g = field.grid();
    const auto& mask = field.geometry().inside_mask();
    const auto& u = field.values();
    const auto c = g.coords(idx);
    const auto ok = [&](int axis, int offset) {
        const int q = c[axis] + offset;
        return q >= 0 && q < g.n[axis] && mask[idx + std::ptrdiff_t(offset) * std::ptrdiff_t(g.stride(axis))];
    };
    Vec3 grad{};
    for (int axis = 0; axis < 3; ++axis) {
        const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(g.stride(axis));
        const double u0 = u[idx];
        const bool fw = ok(axis, 1), bw = ok(axis, -1);
        double d = 0.0;
        if (fw && bw) d = (u[idx + s] - u[idx - s]) / (2.0 * g.h);
        else if (fw && ok(axis, 2)) d = (-3.0 * u0 + 4.0 * u[idx + s] - u[idx + 2 * s]) / (2.0 * g.h);
        else if (bw && ok(axis, -2)) d = (3.0 * u0 - 4.0 * u[idx - s] + u[idx - 2 * s]) / (2.0 * g.h);
        else if (fw) d = (u[idx + s] - u0) / g.h;
        else if (bw) d = (u0 - u[idx - s]) / g.h;
        grad[axis] = d;
    }
    return grad;
}

VectorField gradient(const GridField& field) {
    const std::size_t n = field.grid().size();
    VectorField out{field.geometry_ptr(), {}};
    for (auto& c : out.components) c.assign(n, 0.0);
    for (std::size_t idx = 0; idx < n; ++idx) {
        if (!field.geometry().inside(idx)) continue;
        const Vec3 gr = node_gradient(field, idx);
        for (int a = 0; a < 3; ++a) out.components[a][idx] = gr[a];
    }
    return out;
}

NormReport norms(const GridField& field, const Mask* region) {
    const GridGeometry& geo = field.geometry();
    const std::size_t n = field.grid().size();
    if (region && region->size() != n) throw Error(ErrorCode::grid_mismatch, "region mask size differs from grid");
    const double cell = std::pow(field.grid().h, 3);
    double l2 = 0.0, semi = 0.0, linf = 0.0;
    std::size_t count = 0;
    for (std::size_t idx = 0; idx < n; ++idx) {
        if (!geo.inside(idx) || (region && !(*region)[idx])) continue;
        ++count;
        const double u = field[idx];
        const double w = geo.volume_weight(idx) * cell;
        l2 += w * u * u;
        semi += w * norm2(node_gradient(field, idx));
        linf = std::max(linf, std::abs(u));
    }
    if (count == 0) throw Error(ErrorCode::empty_region, "norm requested over an empty region");
    NormReport r;
    r.l2 = std::sqrt(l2);
    r.h1_seminorm = std::sqrt(semi);
    r.h1 = std::sqrt(l2 + semi);
    r.linf = linf;
    return r;
}

Mask region_where(const GridGeometry& geometry, const std::function<bool(const Vec3&)>& pred) {
    const Grid& g = geometry.grid();
    Mask m(g.size(), 0);
    for (std::size_t idx = 0; idx < m.size(); ++idx)
        m[idx] = geometry.inside(idx) && pred(g.point(idx));
    return m;
}

GridField combine(std::span<const GridField* const> fields, std::span<const double> weights) {
    if (fields.empty() || fields.size() != weights.size())
        throw Error(ErrorCode::invalid_argument, "combine needs one weight per field");
    const GridField& first = *fields[0];
    for (const auto* f : fields)
        if (!f->geometry().same_grid(first.geometry()))
            throw Error(ErrorCode::grid_mismatch, "combine: fields live on different grids");
    std::vector<double> out(first.values().size(), 0.0);
    for (std::size_t k = 0; k < fields.size(); ++k) {
        const auto& v = fields[k]->values();
        const double w = weights[k];
        for (std::size_t idx = 0; idx < out.size(); ++idx) out[idx] += w * v[idx];
    }
    return GridField(first.geometry_ptr(), std::move(out));
}

GridField combine(std::initializer_list<const GridField*> fields, std::initializer_list<double> weights) {
    return combine(std::span<const GridField* const>(fields.begin(), fields.size()),
                   std::span<const double>(weights.begin(), weights.size()));
}

namespace {

struct Stencil {
    std::size_t base;
    std::array<double, 3> t;
};

Stencil locate(const Grid& g, const Vec3& p) {
    std::array<int, 3> c{};
    std::array<double, 3> t{};
    for (int a = 0; a < 3; ++a) {
        const double s = (p[a] - g.origin[a]) / g.h;
        if (!(s >= -1e-9 && s <= g.n[a] - 1 + 1e-9))
            throw Error(ErrorCode::sphere_outside_domain, "interpolation point outside the grid");
        c[a] = std::clamp(static_cast<int>(std::floor(s)), 0, g.n[a] - 2);
        t[a] = s - c[a];
    }
    return {g.index(c[0], c[1], c[2]), t};
}

template <class F>
auto trilinear(const Grid& g, const Stencil& st, F&& value) {
    const std::size_t sx = 1, sy = g.stride(1), sz = g.stride(2);
    const auto [tx, ty, tz] = st.t;
    const auto lerp = [](auto a, auto b, double t) { return a * (1.0 - t) + b * t; };
    const std::size_t b = st.base;
    auto c00 = lerp(value(b), value(b + sx), tx);
    auto c10 = lerp(value(b + sy), value(b + sy + sx), tx);
    auto c01 = lerp(value(b + sz), value(b + sz + sx), tx);
    auto c11 = lerp(value(b + sz + sy), value(b + sz + sy + sx), tx);
    return lerp(lerp(c00, c10, ty), lerp(c01, c11, ty), tz);
}

}  // namespace

double interpolate(const GridField& field, const Vec3& p) {
    const auto st = locate(field.grid(), p);
    return trilinear(field.grid(), st, [&](std::size_t idx) { return field[idx]; });
}

Vec3 interpolate_gradient(const GridField& field, const Vec3& p) {
    const auto st = locate(field.grid(), p);
    return trilinear(field.grid(), st, [&](std::size_t idx) { return node_gradient(field, idx); });
}

double surface_flux(const GridField& field, const GridField& conductivity, const Vec3& center, double radius,
                    int min_points) {
    if (!field.geometry().same_grid(conductivity.geometry()))
        throw Error(ErrorCode::grid_mismatch, "surface_flux: conductivity lives on a different grid");
    return surface_flux(
        field, [&](const Vec3& p) { return interpolate(conductivity, p); }, center, radius, min_points);
}

double surface_flux(const GridField& field, const std::function<double(const Vec3&)>& conductivity,
                    const Vec3& center, double radius, int min_points) {
    const Grid& g = field.grid();
    const double h = g.h;
    const double reach = radius + 3.0 * h;
    for (int a = 0; a < 3; ++a)
        if (center[a] - reach < g.origin[a] || center[a] + reach > g.origin[a] + (g.n[a] - 1) * h)
            throw Error(ErrorCode::sphere_outside_domain, "surface_flux: sphere not inside the grid");
    if (field.geometry().domain().distance_to_boundary(center) < radius)
        throw Error(ErrorCode::sphere_outside_domain, "surface_flux: sphere crosses the domain boundary");
    const int wanted = std::max({50, min_points, static_cast<int>(std::ceil(6.0 * (radius / h) * (radius / h)))});
    const SphereRule rule = sphere_rule_with_points(wanted);
    double flux = 0.0;
    for (std::size_t q = 0; q < rule.directions.size(); ++q) {
        const Vec3 nu = rule.directions[q];
        const Vec3 p = center + radius * nu;
        const double u1 = interpolate(field, p + h * nu);
        const double u2 = interpolate(field, p + 2.0 * h * nu);
        const double u3 = interpolate(field, p + 3.0 * h * nu);
        const double dnu = (-2.5 * u1 + 4.0 * u2 - 1.5 * u3) / h;
        flux += rule.weights[q] * conductivity(p) * dnu;
    }
    return flux * radius * radius;
}

double surface_flux(const std::function<Vec3(const Vec3&)>& grad, const std::function<double(const Vec3&)>& a,
                    const Vec3& center, double radius, int min_points) {
    const SphereRule rule = sphere_rule_with_points(std::max(50, min_points));
    double flux = 0.0;
    for (std::size_t q = 0; q < rule.directions.size(); ++q) {
        const Vec3 nu = rule.directions[q];
        const Vec3 p = center + radius * nu;
        flux += rule.weights[q] * a(p) * dot(grad(p), nu);
    }
    return flux * radius * radius;
}

void write_field(std::ostream& os, const GridField& field) {
    const Grid& g = field.grid();
    os << "dims " << g.n[0] << ' ' << g.n[1] << ' ' << g.n[2] << ' ' << shortest(g.h) << ' '
       << shortest(g.origin.x) << ' ' << shortest(g.origin.y) << ' ' << shortest(g.origin.z) << '\n';
    for (double v : field.values()) os << shortest(v) << '\n';
}

FieldDump read_field(std::istream& is) {
    std::string tag;
    FieldDump d;
    if (!(is >> tag) || tag != "dims") throw Error(ErrorCode::invalid_argument, "field dump: missing dims header");
    if (!(is >> d.grid.n[0] >> d.grid.n[1] >> d.grid.n[2] >> d.grid.h >> d.grid.origin.x >> d.grid.origin.y >>
          d.grid.origin.z))
        throw Error(ErrorCode::invalid_argument, "field dump: malformed header");
    d.values.resize(d.grid.size());
    for (auto& v : d.values)
        if (!(is >> v)) throw Error(ErrorCode::invalid_argument, "field dump: truncated value list");
    return d;
}

void write_probe_csv(std::ostream& os, const GridField& field, const Vec3& origin, const Vec3& direction,
                     double length, int samples) {
    if (samples < 2) throw Error(ErrorCode::invalid_argument, "probe needs at least 2 samples");
    const Vec3 dir = direction / norm(direction);
    os << "s,x,y,z,value\n";
    for (int k = 0; k < samples; ++k) {
        const double s = length * k / (samples - 1);
        const Vec3 p = origin + s * dir;
        os << shortest(s) << ',' << shortest(p.x) << ',' << shortest(p.y) << ',' << shortest(p.z) << ','
           << shortest(interpolate(field, p)) << '\n';
    }
}

}  // namespace cmlab
