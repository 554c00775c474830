#pragma once

#include <stdexcept>
#include <string>

namespace cmlab {

enum class ErrorCode {
    invalid_argument,
    placement_failure,
    empty_ensemble,
    degenerate_grid,
    empty_region,
    sphere_outside_domain,
    grid_mismatch,
    nonconvergence,
    conductivity_bound,
    under_resolved_inclusion,
    inclusion_outside_domain,
    singular_evaluation,
    coincident_points,
    unsupported_domain,
    divergence,
    insufficient_levels,
    pair_budget_exceeded,
    under_resolved_gap,
    config_parse,
    unknown_subcommand,
};

/// Numerical failures (exit code 2) versus input/precondition failures (exit code 1).
constexpr bool is_numerical(ErrorCode c) {
    switch (c) {
        case ErrorCode::placement_failure:
        case ErrorCode::nonconvergence:
        case ErrorCode::divergence:
            return true;
        default:
            return false;
    }
}

const char* to_string(ErrorCode c);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace cmlab
