#pragma once

// Localized random projections: a kernel of n_s random taps applied as a
// same-size, zero-padded sliding window. Written as a matrix, the operator is
// banded Toeplitz (block Toeplitz with Toeplitz blocks) over the flattened map.

#include <cstddef>
#include <span>
#include <vector>

#include "larp/core.hpp"

namespace larp {

class OracleTooLargeError : public Error {
public:
    using Error::Error;
};

struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> entries;

    double at(std::size_t r, std::size_t c) const { return entries[r * cols + c]; }

    /// Plain left-to-right dot products, one per row.
    std::vector<double> multiply(std::span<const double> x) const;
};

/// Draws `support` noise values from `rng` and maps them through `dist`.
ProjectionKernel sample_kernel(const KernelDistribution& dist, std::size_t support, Rng& rng);

/// Same as sample_kernel with caller-provided noise (each value in [0, 1)).
ProjectionKernel kernel_from_noise(const KernelDistribution& dist, std::vector<double> noise);

/// Recomputes coefficients for the current distribution; the noise is untouched.
ProjectionKernel refresh_coefficients(ProjectionKernel kernel, const KernelDistribution& dist);

/// out(y, x) = Σ k[dy·s + dx] · in(y + dy − s/2, x + dx − s/2), zero outside the map.
FeatureMap project(const FeatureMap& input, const ProjectionKernel& kernel);

struct ProjectGradients {
    FeatureMap input;
    std::vector<double> coefficients;
};

/// Adjoint of project. Pass `want_input_grad = false` to skip the input term
/// (first layer); `input` in the result is then empty.
ProjectGradients project_backward(const FeatureMap& input, const ProjectionKernel& kernel,
                                  const FeatureMap& upstream, bool want_input_grad = true);

/// Default upper bound on the number of entries dense_oracle will allocate.
inline constexpr std::size_t kDefaultOracleEntryCap = std::size_t{1} << 24;

/// Explicit (H·W)×(H·W) matrix of the projection. Verification only.
DenseMatrix dense_oracle(const ProjectionKernel& kernel, std::size_t height, std::size_t width,
                         std::size_t entry_cap = kDefaultOracleEntryCap);

}  // namespace larp
