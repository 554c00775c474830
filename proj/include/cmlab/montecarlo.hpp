#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cmlab/configuration.hpp"
#include "cmlab/elliptic.hpp"
#include "cmlab/error.hpp"
#include "cmlab/field.hpp"

namespace cmlab {

struct EnsembleOptions {
    std::size_t workers = 1;
    /// Contiguous sample groups for the jackknife; capped by the sample count.
    std::size_t groups = 16;
    /// Reuse seed_base for every sample (degenerate ensemble, used for checks).
    bool fixed_seed = false;
    SolverOptions solver{};
};

/// Pointwise first and second moments of phi over sampled configurations, plus the per-group sums
/// and per-sample H1 energies needed for the jackknife and the bias diagnostic.
struct EnsembleEstimate {
    GridField mean_field;
    GridField second_moment_field;
    std::size_t sample_count = 0;
    std::uint64_t seed_base = 0;
    double epsilon = 0.0;
    std::size_t n_inclusions = 0;

    GridField background;
    std::vector<GridField> group_sums;
    std::vector<std::size_t> group_counts;
    /// ||phi_s - phibar||_{H1}^2 for each sample, in sample order.
    std::vector<double> sample_h1_sq;

    GridField variance() const;
};

/// Sample s uses seed seed_base + s; accumulation runs in sample order whatever the worker count.
EnsembleEstimate expectation_field(const DomainSpec& domain, double epsilon, std::size_t n, std::size_t samples,
                                   double h, std::uint64_t seed_base, const EnsembleOptions& options = {});
EnsembleEstimate expectation_field(const GeometryPtr& geometry, double epsilon, std::size_t n, std::size_t samples,
                                   std::uint64_t seed_base, const EnsembleOptions& options = {});

/// beta(x) on the nodes of the interior mask under the uniform one-point density, zero elsewhere.
GridField beta_field(const GeometryPtr& geometry, double epsilon, std::size_t n);

struct TheoremError {
    double err_effective = 0.0;
    double err_background = 0.0;
    double ratio = 0.0;
    double stderr_effective = 0.0;
    double stderr_background = 0.0;
    double stderr_ratio = 0.0;
    /// sqrt(max(0, ||mean - ref||^2 - tr(Cov)/S)): the squared norms with the sampling bias removed.
    double debiased_effective = 0.0;
    double debiased_background = 0.0;
    GridField effective;
};

TheoremError theorem_error(const EnsembleEstimate& estimate, const GridField& beta, const DomainSpec& domain, double h,
                           const SolverOptions& options = {});

struct LinearizedOptions {
    std::uint64_t seed_base = 1;
    std::size_t workers = 1;
    std::size_t groups = 16;
    /// Closed-form phi_1 (single sphere with its Kelvin image) when the domain is a ball with constant
    /// conductivity and affine data; otherwise each sample is a grid solve.
    bool analytic_phi1 = true;
    SolverOptions solver{};
};

struct LinearizedReport {
    double epsilon = 0.0;
    std::size_t n_inclusions = 0;
    std::size_t samples = 0;
    double h = 0.0;
    bool analytic = false;
    double deviation = 0.0;  // ||N mean(phi_1) - w||_{H1}
    double reference = 0.0;  // ||w||_{H1}, w = L^{-1} div(3 a beta grad phibar)
    double ratio = 0.0;
    double stderr_ratio = 0.0;
};

LinearizedReport linearized_check(const DomainSpec& domain, double epsilon, std::size_t n, std::size_t samples,
                                  double h, const LinearizedOptions& options = {});

struct StudyOptions {
    /// eps = coefficient * beta_bar^exponent.
    double epsilon_coefficient = 0.3;
    double epsilon_exponent = 0.5;
    /// h = eps / h_ratio unless fixed_h > 0.
    double h_ratio = 4.0;
    double fixed_h = 0.0;
    std::size_t samples = 200;
    std::size_t min_samples = 200;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    std::size_t groups = 16;
    double C_regime = 10.0;
    SolverOptions solver{};
};

struct StudyRow {
    double beta_bar = 0.0;
    double epsilon = 0.0;
    double h = 0.0;
    std::size_t n_inclusions = 0;
    std::size_t samples = 0;
    std::uint64_t seed_base = 0;
    double err_effective = 0.0;
    double err_background = 0.0;
    double ratio = 0.0;
    double stderr_effective = 0.0;
    double stderr_background = 0.0;
    double stderr_ratio = 0.0;
    double debiased_effective = 0.0;
    double debiased_background = 0.0;
};

struct StudyReport {
    std::vector<StudyRow> rows;
    double fitted_exponent = 0.0;  // err_effective vs beta_bar
    double fit_residual = 0.0;     // rms of the log residuals
    double background_exponent = 0.0;
    bool complete = true;
    std::string failure;
    ErrorCode failure_code = ErrorCode::invalid_argument;
};

/// Row seeds come from seed_seq{seed, bits of beta_bar}, so equal beta_bar entries repeat exactly.
std::uint64_t row_seed(std::uint64_t seed, double beta_bar);

StudyReport run_study(const DomainSpec& domain, const std::vector<double>& beta_bars, const StudyOptions& options);

/// Least-squares slope and rms residual of log y against log x.
std::pair<double, double> loglog_fit(const std::vector<double>& x, const std::vector<double>& y);

void write_study_csv(std::ostream& os, const StudyReport& report);
std::string study_summary_json(const StudyReport& report);

}  // namespace cmlab
