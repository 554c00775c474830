#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cmlab/domain.hpp"
#include "cmlab/elliptic.hpp"
#include "json.hpp"

namespace cmlab {

struct DiscretizationBlock {
    double h = 0.025;
    double tolerance = 1e-10;
    std::string preconditioner = "amg";  // amg | jacobi
    std::string inclusion_mode = "merge";  // merge | penalty
    double min_fraction = 1e-2;
    std::size_t max_iterations = 0;

    SolverOptions solver() const;
};

/// Either explicit centers, or N (directly or from beta_bar) sampled with seed.
struct ConfigurationBlock {
    double epsilon = 0.05;
    std::optional<std::size_t> n;
    std::optional<double> beta_bar;
    std::optional<std::vector<Vec3>> centers;
    std::uint64_t seed = 1;
};

struct SingleBlock {
    Vec3 eta{};
    std::vector<double> epsilons{0.1, 0.05, 0.025};
    double h_ratio = 4.0;
    int far_field_samples = 16;
};

struct PairBlock {
    double epsilon = 0.05;
    std::vector<double> separations{0.3, 0.6, 1.2};
    Vec3 center{};
    Vec3 axis{1, 0, 0};
};

struct SuperposeBlock {
    int order = 2;
    double pair_cutoff = 20.0;
    std::size_t pair_budget = 5000;
};

struct CapacityBlock {
    /// Optional boundary study: one inclusion of radius epsilon at gap delta * epsilon.
    std::vector<double> deltas;
    double epsilon = 0.0;
};

struct GreenCheckBlock {
    std::size_t sample_pairs = 500;
    int max_order = 0;
    std::size_t sources = 10;
    std::uint64_t seed = 1;
    double min_separation = 0.0;
    double source_clearance = 0.5;
};

struct LinearizedBlock {
    double epsilon = 0.025;
    std::optional<double> beta_bar;
    std::optional<std::size_t> n;
    std::size_t samples = 500;
    std::uint64_t seed = 1;
    std::size_t groups = 16;
    bool analytic = true;
};

struct StudyBlock {
    std::vector<double> beta_bars{0.02, 0.01, 0.005, 0.0025};
    double epsilon_coefficient = 0.3;
    double epsilon_exponent = 0.5;
    double h_ratio = 4.0;
    double fixed_h = 0.0;
    std::size_t samples = 200;
    std::size_t min_samples = 200;
    std::uint64_t seed = 1;
    std::size_t groups = 16;
    double C_regime = 10.0;
};

struct OutputBlock {
    std::string directory = "out";
    bool dump_field = false;
};

struct RunConfig {
    DomainSpec domain = DomainSpec::unit_ball("x");
    DiscretizationBlock discretization;
    std::optional<ConfigurationBlock> configuration;
    std::optional<SingleBlock> single;
    std::optional<PairBlock> pair;
    std::optional<SuperposeBlock> superpose;
    std::optional<CapacityBlock> capacity;
    std::optional<GreenCheckBlock> green_check;
    std::optional<LinearizedBlock> linearized;
    std::optional<StudyBlock> study;
    OutputBlock output;
};

/// Strict parse: unknown keys, wrong types and bad values throw config_parse naming the field,
/// and syntax errors name the line and column.
RunConfig parse_run_config(const std::string& text);
nlohmann::ordered_json serialize_run_config(const RunConfig& config);

nlohmann::ordered_json domain_to_json(const DomainSpec& domain);
DomainSpec domain_from_json(const nlohmann::json& j);

}  // namespace cmlab
