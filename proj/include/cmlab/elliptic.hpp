#pragma once

#include <cstddef>
#include <vector>

#include "cmlab/configuration.hpp"
#include "cmlab/field.hpp"

namespace cmlab {

struct Sphere {
    Vec3 center{};
    double radius = 0.0;
};

struct SolverOptions {
    enum class Preconditioner { amg, jacobi };
    enum class InclusionMode { merge, penalty };

    double tolerance = 1e-10;
    Preconditioner preconditioner = Preconditioner::amg;
    InclusionMode inclusion_mode = InclusionMode::merge;
    double penalty_conductivity = 1e8;
    /// 0 means 50 * (grid nodes)^{1/3}.
    std::size_t max_iterations = 0;
    /// Lower clamp on the fractional distance to a cut boundary.
    double min_fraction = 1e-2;
    /// Evaluate a-posteriori fluxes through each inclusion (sphere of radius eps + 2h).
    bool compute_flux_residuals = true;
};

struct LinearSystemStats {
    std::size_t unknown_count = 0;
    std::size_t nonzeros = 0;
    std::size_t cg_iterations = 0;
    double final_relative_residual = 0.0;
};

struct SolveOutput {
    GridField field;  // exterior ghost nodes hold the boundary data
    std::vector<double> inclusion_constants;
    double dirichlet_energy = 0.0;  // discrete quadratic form minimized by the solve
    std::vector<double> flux_residuals;
    std::size_t iterations = 0;
    double residual = 0.0;
    LinearSystemStats stats;
};

/// -div(a grad phi) = 0 in Omega, phi = f on the boundary.
SolveOutput solve_background(const DomainSpec& domain, double h, const SolverOptions& options = {});
SolveOutput solve_background(const GeometryPtr& geometry, const SolverOptions& options = {});

/// Perfect conductors: the nodes of each ball are one unknown whose row is the summed flux.
SolveOutput solve_with_inclusions(const DomainSpec& domain, const InclusionConfiguration& config, double h,
                                  const SolverOptions& options = {});
SolveOutput solve_with_inclusions(const GeometryPtr& geometry, const InclusionConfiguration& config,
                                  const SolverOptions& options = {});

/// The discrete energy I_N minimized by solve_with_inclusions, evaluated on any field that is constant
/// on each inclusion; boundary faces use the Dirichlet data, so every such field is an admissible competitor.
double discrete_energy(const GridField& w, const InclusionConfiguration& config, const SolverOptions& options = {});

/// Same stencil with conductivity a (1 + 3 beta). A constant beta returns the background solve.
SolveOutput solve_effective(const DomainSpec& domain, const GridField& beta, double h,
                            const SolverOptions& options = {});
SolveOutput solve_effective(const GridField& beta, const SolverOptions& options = {});

/// w with -div(a grad w) = div F in Omega, w = 0 on the boundary.
GridField apply_inverse_L(const DomainSpec& domain, const VectorField& F, double h, const SolverOptions& options = {});
GridField apply_inverse_L(const VectorField& F, const SolverOptions& options = {});

/// Discrete Green column: -div(a grad G) = delta at the node nearest xi, G = 0 on the boundary.
GridField green_column(const GeometryPtr& geometry, const Vec3& xi, const SolverOptions& options = {});

/// Unit-conductivity potential equal to `value` on the given balls and 0 on the boundary.
SolveOutput solve_fixed_inclusions(const GeometryPtr& geometry, const std::vector<Sphere>& spheres, double value,
                                   const SolverOptions& options = {});

/// Midpoint-rule integral of a |grad w|^2 over the interior mask minus the given balls.
double dirichlet_energy(const GridField& field, const GridField& conductivity, const std::vector<Sphere>& exclusion);

/// Host conductivity sampled on the grid.
GridField conductivity_field(const GeometryPtr& geometry);

std::vector<Sphere> spheres_of(const InclusionConfiguration& config);

}  // namespace cmlab
