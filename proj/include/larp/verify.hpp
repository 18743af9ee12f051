#pragma once

// Self-checks run by `larp verify`: every fast operator is compared against an
// independent slow route on random instances.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "larp/lrpe.hpp"

namespace larp {

struct OracleReport {
    std::string name;
    double max_error = 0.0;
    double tolerance = 0.0;
    std::size_t checks = 0;
    std::size_t skipped = 0;
    bool passed = true;
};

using AdjointFn =
    std::function<ProjectGradients(const FeatureMap&, const ProjectionKernel&, const FeatureMap&)>;

struct VerifyOptions {
    std::size_t trials = 100;
    std::uint64_t seed = 1;
    /// Replaces project_backward in the adjoint check (fault injection).
    AdjointFn adjoint;
};

/// Median of the clamped window at (row, col), by sorting the whole window.
double median_by_sorting(const FeatureMap& input, std::size_t row, std::size_t col,
                         std::size_t window);

/// |a − b| / max(|a|, |b|), with 0/0 taken as 0.
double relative_error(double a, double b);

/// Relative error used for gradient comparisons: the denominator is floored at
/// `floor` so that near-zero gradients are compared in absolute terms.
double gradient_error(double analytic, double numeric, double floor = 1e-4);

std::vector<OracleReport> run_verification(const VerifyOptions& options);

}  // namespace larp
