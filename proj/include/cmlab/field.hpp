#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "cmlab/domain.hpp"

namespace cmlab {

/// Uniform cell-centered lattice: node (i, j, k) sits at origin + h * (i, j, k).
struct Grid {
    std::array<int, 3> n{0, 0, 0};
    double h = 0.0;
    Vec3 origin{};

    std::size_t size() const { return std::size_t(n[0]) * n[1] * n[2]; }
    std::size_t index(int i, int j, int k) const { return (std::size_t(k) * n[1] + j) * n[0] + i; }
    std::array<int, 3> coords(std::size_t idx) const;
    Vec3 point(int i, int j, int k) const { return origin + Vec3{i * h, j * h, k * h}; }
    Vec3 point(std::size_t idx) const;
    std::size_t stride(int axis) const;

    bool operator==(const Grid&) const = default;

    /// Cells of width h covering the bounding box of the domain, centered on it.
    static Grid covering(const DomainSpec& domain, double h);
};

using Mask = std::vector<std::uint8_t>;

/// A grid laid over a domain together with its interior mask and the interior volume fraction of
/// every cell (sub-sampled 4^3 near the boundary). Shared immutably by all fields on it.
class GridGeometry {
public:
    static std::shared_ptr<const GridGeometry> build(const DomainSpec& domain, double h);

    const DomainSpec& domain() const { return domain_; }
    const Grid& grid() const { return grid_; }
    double h() const { return grid_.h; }

    bool inside(std::size_t idx) const { return mask_[idx] != 0; }
    const Mask& inside_mask() const { return mask_; }
    std::size_t interior_count() const { return interior_count_; }

    /// Interior volume fraction of the cell around node idx; zero for masked-out nodes.
    double volume_weight(std::size_t idx) const;

    /// Host conductivity a(x) at a node; the bounds lambda <= a <= Lambda are checked at build.
    double conductivity(std::size_t idx) const { return a_values_.empty() ? a_constant_ : a_values_[idx]; }
    bool constant_conductivity() const { return a_values_.empty(); }

    bool same_grid(const GridGeometry& other) const { return this == &other || grid_ == other.grid_; }

private:
    GridGeometry(DomainSpec domain, Grid grid);

    DomainSpec domain_;
    Grid grid_;
    Mask mask_;  // 0 outside, 1 full cell, 2 partial cell
    std::vector<std::pair<std::size_t, double>> partial_;  // sorted by node index
    std::size_t interior_count_ = 0;
    double a_constant_ = 1.0;
    std::vector<double> a_values_;  // empty when a is constant
};

using GeometryPtr = std::shared_ptr<const GridGeometry>;

/// Scalar field sampled at the nodes of a GridGeometry.
class GridField {
public:
    GridField() = default;
    GridField(GeometryPtr geometry, std::vector<double> values);

    static GridField zeros(GeometryPtr geometry);
    static GridField sample(GeometryPtr geometry, const std::function<double(const Vec3&)>& f);

    const GeometryPtr& geometry_ptr() const { return geometry_; }
    const GridGeometry& geometry() const { return *geometry_; }
    const Grid& grid() const { return geometry_->grid(); }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& mutable_values() { return values_; }
    double operator[](std::size_t idx) const { return values_[idx]; }
    double at(int i, int j, int k) const { return values_[grid().index(i, j, k)]; }
    bool empty() const { return !geometry_; }

private:
    GeometryPtr geometry_;
    std::vector<double> values_;
};

struct VectorField {
    GeometryPtr geometry;
    std::array<std::vector<double>, 3> components;
};

struct NormReport {
    double l2 = 0.0;
    double h1_seminorm = 0.0;
    double h1 = 0.0;
    double linf = 0.0;
};

/// Central differences where both neighbours are inside the mask, second-order one-sided
/// differences otherwise (first order when only one neighbour is available).
Vec3 node_gradient(const GridField& field, std::size_t idx);
VectorField gradient(const GridField& field);

/// Midpoint-rule norms over the interior mask, optionally restricted to a region mask.
NormReport norms(const GridField& field, const Mask* region = nullptr);

/// Nodes of the interior mask where pred(x) holds.
Mask region_where(const GridGeometry& geometry, const std::function<bool(const Vec3&)>& pred);

/// Pointwise weighted sum, accumulated in list order.
GridField combine(std::span<const GridField* const> fields, std::span<const double> weights);
GridField combine(std::initializer_list<const GridField*> fields, std::initializer_list<double> weights);

/// Trilinear interpolation of nodal values and of nodal central-difference gradients.
double interpolate(const GridField& field, const Vec3& p);
Vec3 interpolate_gradient(const GridField& field, const Vec3& p);

/// Quadrature of a * d(phi)/d(nu) over the sphere, nu the outward normal of the sphere. The normal
/// derivative is a one-sided quadratic difference from the three points at distances h, 2h, 3h
/// outside the sphere. Point count max(50, 6 (r/h)^2) unless given.
double surface_flux(const GridField& field, const GridField& conductivity, const Vec3& center, double radius,
                    int min_points = 0);

double surface_flux(const GridField& field, const std::function<double(const Vec3&)>& conductivity,
                    const Vec3& center, double radius, int min_points = 0);

/// Same quadrature with an exact gradient and conductivity.
double surface_flux(const std::function<Vec3(const Vec3&)>& grad, const std::function<double(const Vec3&)>& a,
                    const Vec3& center, double radius, int min_points = 50);

/// "dims nx ny nz h x0 y0 z0" followed by one value per line, x fastest.
void write_field(std::ostream& os, const GridField& field);

struct FieldDump {
    Grid grid;
    std::vector<double> values;
};
FieldDump read_field(std::istream& is);

/// CSV "s,x,y,z,value" along origin + s * direction for s in [0, length].
void write_probe_csv(std::ostream& os, const GridField& field, const Vec3& origin, const Vec3& direction,
                     double length, int samples);

}  // namespace cmlab
