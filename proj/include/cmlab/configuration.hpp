#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cmlab/domain.hpp"
#include "json.hpp"

namespace cmlab {

/// N spheres of common radius epsilon.
///
/// Admissible when |eta_i - eta_j| >= 2 eps for i != j and d(eta_i, boundary) >= eps; the
/// equality cases are accepted.
struct InclusionConfiguration {
    double epsilon = 0.0;
    std::vector<Vec3> centers;
    std::uint64_t seed = 0;

    std::size_t size() const { return centers.size(); }
};

/// Throws invalid_argument naming the first violated constraint.
void validate_configuration(const InclusionConfiguration& config, const DomainSpec& domain);
bool is_admissible(const InclusionConfiguration& config, const DomainSpec& domain);

inline constexpr std::size_t default_max_attempts = 1'000'000;

/// Random sequential addition: each center is drawn uniformly from Omega_eps and rejected if it
/// violates the hard-core constraint with an earlier center. Deterministic in (domain, eps, n, seed).
InclusionConfiguration sample_configuration(const DomainSpec& domain, double epsilon, std::size_t n,
                                            std::uint64_t seed,
                                            std::size_t max_attempts = default_max_attempts);

/// N such that (4 pi / 3) N eps^3 / |Omega| is closest to beta_bar.
std::size_t count_for_volume_fraction(const DomainSpec& domain, double beta_bar, double epsilon);

double global_volume_fraction(const InclusionConfiguration& config, const DomainSpec& domain);
double global_volume_fraction(const DomainSpec& domain, double epsilon, std::size_t n);

struct DiluteRegime {
    double epsilon = 0.0;
    std::size_t n_inclusions = 0;
    double beta_bar = 0.0;
    double C_regime = 1.0;

    /// eps / C < beta_bar <= C / ln^4(1/eps).
    bool within_window() const;
    std::string diagnostic() const;
};

DiluteRegime make_dilute_regime(const DomainSpec& domain, double epsilon, std::size_t n, double C_regime);

/// Volume of B(x, eps) intersected with Omega_eps.
double shrunk_overlap_volume(const DomainSpec& domain, double epsilon, const Vec3& x);

enum class DensityModel { uniform, empirical };

/// beta(x) = N * |B(x, eps) cap Omega_eps| / |Omega_eps| under the uniform one-point density.
double local_volume_fraction_uniform(const DomainSpec& domain, double epsilon, std::size_t n, const Vec3& x);

/// Fraction of the given configurations in which x is covered by some inclusion.
double local_volume_fraction_empirical(std::span<const InclusionConfiguration> configs, const Vec3& x);

double local_volume_fraction(const DomainSpec& domain, double epsilon, std::size_t n, const Vec3& x,
                             DensityModel model, std::span<const InclusionConfiguration> configs = {});

/// Connected components of the proximity graph with edges |eta_i - eta_j| <= 4 eps.
struct ClusterDecomposition {
    std::vector<std::vector<std::size_t>> clusters;  // each sorted; ordered by smallest member
    std::map<std::size_t, std::size_t> size_histogram;  // cardinality -> count
};

ClusterDecomposition cluster_decomposition(const InclusionConfiguration& config);

void to_json(nlohmann::json& j, const InclusionConfiguration& c);
void from_json(const nlohmann::json& j, InclusionConfiguration& c);

}  // namespace cmlab
