#pragma once

#include <functional>
#include <vector>

#include "cmlab/configuration.hpp"
#include "cmlab/elliptic.hpp"
#include "cmlab/field.hpp"

namespace cmlab {

/// Leading-order response of one perfectly conducting ball to a locally uniform field.
struct DipoleParams {
    Vec3 center{};
    double epsilon = 0.0;
    Vec3 background_gradient{};
    double Ca = 0.0;
};

/// C_a = (2/eps) * int_B grad(a).g dV / int_dB a ds, both integrals by tensor Gauss quadrature.
/// The normal derivative 2 g.n - C_a eps of the exterior branch then has zero a-weighted flux.
double dipole_constant(const DomainSpec& domain, const Vec3& eta, double epsilon, const Vec3& background_gradient);

DipoleParams make_dipole(const DomainSpec& domain, const Vec3& eta, double epsilon, const Vec3& background_gradient);

/// Exterior branch -(x-eta).g eps^3/r^3 + C_a eps^3/r, interior branch -(x-eta).g + C_a eps^2.
double dipole_field(const DipoleParams& params, const Vec3& x);
Vec3 dipole_gradient(const DipoleParams& params, const Vec3& x);

/// Int over the sphere of a * d(phi0)/dn with the exact exterior gradient.
double dipole_flux(const DomainSpec& domain, const DipoleParams& params, int min_points = 800);

/// Dirichlet Green's function of -Laplace in the ball |x - center| < R.
struct BallGreen {
    double radius = 1.0;
    Vec3 center{};

    double operator()(const Vec3& x, const Vec3& xi) const;
    /// Gradient in the first argument.
    Vec3 gradient(const Vec3& x, const Vec3& xi) const;
};

double greens_function_ball(const BallGreen& green, const Vec3& x, const Vec3& xi);

struct BoundRow {
    int order = 0;
    double sup = 0.0;
    std::size_t pair_count = 0;
    double h = 0.0;
};

struct BoundCheckOptions {
    std::size_t sources = 10;
    std::uint64_t seed = 1;
    /// Pairs closer than this are skipped; 0 means 4h.
    double min_separation = 0.0;
    /// Sources are drawn from {d(xi, boundary) > source_clearance * size}, size = R or half the box.
    double source_clearance = 0.5;
    SolverOptions solver{};
};

/// Sup over sampled pairs of |D^beta G(x, xi)| |x - xi|^{1 + |beta|} using discrete Green columns.
/// D^beta is the value, the gradient norm, or the largest Hessian entry for orders 0, 1, 2.
std::vector<BoundRow> greens_bound_check(const DomainSpec& domain, double h, std::size_t sample_pairs,
                                         int max_order, const BoundCheckOptions& options = {});

/// Green's formula on the standoff spheres |x - eta_n| = rho_n with rho_n = eps + 3h:
/// phi(x) = phibar(x) + sum_n int [G a d(phi)/d(nu) - phi a d(G)/d(nu)] ds, nu pointing into the ball.
/// When rho_n = eps the second term vanishes and the formula is the single-layer form.
double integral_representation(const DomainSpec& domain, const SolveOutput& solve, const GridField& background,
                               const InclusionConfiguration& config, const BallGreen& green, const Vec3& x);

/// A harmonic background field phibar together with its gradient.
struct Background {
    std::function<double(const Vec3&)> value;
    std::function<Vec3(const Vec3&)> gradient;
};

/// phibar = f, valid when f is harmonic (e.g. affine).
Background harmonic_background(const Expression& f);

struct ReflectionResult {
    std::vector<Vec3> moments;
    std::size_t sweeps = 0;
    double last_increment = 0.0;
    std::function<double(const Vec3&)> potential;
    std::function<Vec3(const Vec3&)> gradient;
};

/// Self-consistent induced dipoles p_n = -eps^3 (grad phibar + fields of the other dipoles + the Kelvin
/// images of all dipoles) at eta_n. Requires separations >= 4 eps and d(eta, boundary) >= clearance * eps.
ReflectionResult reflection_solve(const BallGreen& green, const InclusionConfiguration& config,
                                  const Background& background, std::size_t max_sweeps = 200,
                                  double clearance = 2.0);

}  // namespace cmlab
