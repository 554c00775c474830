#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cmlab/analytic.hpp"
#include "cmlab/elliptic.hpp"

namespace cmlab {

/// phi1 = psi1 - phibar and v1 = phi1 - phi0 for one inclusion, all on one grid.
struct CorrectionBundle {
    GridField phibar;
    GridField phi1;
    GridField v1;
    double C1 = 0.0;
    DipoleParams dipole;
    NormReport phi1_norms;
    NormReport v1_norms;
    Vec3 phi1_argmax{};  // node where |phi1| is largest
    SolveOutput solve;
};

CorrectionBundle single_inclusion(const DomainSpec& domain, const Vec3& eta, double epsilon, double h,
                                  const SolverOptions& options = {});
/// Reuses a background solve on the same geometry.
CorrectionBundle single_inclusion(const GridField& phibar, const Vec3& eta, double epsilon,
                                  const SolverOptions& options = {});

/// |grad phi1(eta + r e)| r^3 / eps^3 at log-spaced r in [r_min, r_max].
std::vector<std::pair<double, double>> far_field_profile(const CorrectionBundle& bundle, const Vec3& direction,
                                                         double r_min, double r_max, int samples);

struct SlopeRow {
    std::string quantity;
    double level = 0.0;
    double measured = 0.0;
    double fitted_slope = 0.0;
    double expected_slope = 0.0;
    double tolerance = 0.0;
};

struct SlopeReport {
    std::vector<SlopeRow> rows;
    std::map<std::string, double> slopes;  // quantity -> fitted slope

    /// |slope - expected| <= tolerance for the named quantity.
    bool within(const std::string& quantity) const;
};

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

void write_slope_csv(std::ostream& os, const SlopeReport& report);

struct RemainderStudyOptions {
    double h_ratio = 4.0;  // h = eps / h_ratio
    int far_field_samples = 16;
    SolverOptions solver{};
};

/// Slopes of ||grad phi1||_2, ||phi1||_inf and ||grad v1||_2 against eps, plus the compensated far
/// field |grad phi1| r^3 / eps^3 along the +x1 ray from 4 eps to half the domain size.
SlopeReport remainder_scaling_study(const DomainSpec& domain, const Vec3& eta, const std::vector<double>& epsilons,
                                    const RemainderStudyOptions& options = {});

/// v2 = psi2 - phibar - phi1(eta1) - phi1(eta2) on a common grid.
struct PairBundle {
    GridField psi2;
    GridField v2;
    std::array<double, 2> C_pair{};
    NormReport v2_norms;
    NormReport phi1_norms;  // of phi1(eta1)
};

PairBundle pair_inclusion(const DomainSpec& domain, const Vec3& eta1, const Vec3& eta2, double epsilon, double h,
                          const SolverOptions& options = {});

/// Slopes of ||grad v2||_2 and ||v2||_inf against the separation d. The pair sits symmetrically about
/// `center` along `axis`.
SlopeReport pair_scaling_study(const DomainSpec& domain, double epsilon, const std::vector<double>& separations,
                               double h, const Vec3& center, const Vec3& axis, const SolverOptions& options = {});

struct SuperpositionOptions {
    double pair_cutoff = 20.0;        // in units of eps
    std::size_t pair_budget = 5000;   // maximal number of pair solves
    std::size_t workers = 1;
    SolverOptions solver{};
};

struct SuperpositionLevel {
    int order = 0;
    GridField approximation;
    NormReport residual;  // of u = phi - approximation
    std::size_t pairs_used = 0;
};

/// phibar, then + sum phi1, then + the pair corrections v2 for pairs within the cutoff.
std::vector<SuperpositionLevel> superposition_levels(const DomainSpec& domain, const InclusionConfiguration& config,
                                                     double h, int max_order, const SuperpositionOptions& options = {});
SuperpositionLevel superposition(const DomainSpec& domain, const InclusionConfiguration& config, double h, int order,
                                 const SuperpositionOptions& options = {});

struct CapacityResult {
    double value = 0.0;
    GridField minimizer;
    std::vector<double> delta_list;
};

/// delta_k = min(1, d(eta_k, boundary)/eps - 1).
std::vector<double> boundary_deltas(const DomainSpec& domain, const InclusionConfiguration& config);

CapacityResult capacity(const DomainSpec& domain, const InclusionConfiguration& config, double h,
                        const SolverOptions& options = {});
CapacityResult capacity(const GeometryPtr& geometry, const InclusionConfiguration& config,
                        const SolverOptions& options = {});

struct CapacityBoundaryRow {
    double delta = 0.0;
    double capacity = 0.0;
    double compensated = 0.0;  // C1 / (eps (1 + ln(1/delta)))
};

struct CapacityBoundaryReport {
    std::vector<CapacityBoundaryRow> rows;
    double band = 0.0;  // max / min of the compensated ratio
};

/// Centers at distance (1 + delta) eps from the boundary: on the +x1 axis of a ball, or opposite the
/// middle of the lower x1 face of a box.
CapacityBoundaryReport capacity_boundary_study(const DomainSpec& domain, double epsilon,
                                               const std::vector<double>& deltas, double h,
                                               const SolverOptions& options = {});

}  // namespace cmlab
