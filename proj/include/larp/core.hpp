#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace larp {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent architecture or operator settings (even kernel side, bad wiring, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Operand dimensions that do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Non-finite or otherwise unusable numeric parameters.
class InvalidParameterError : public Error {
public:
    using Error::Error;
};

/// Bad caller input: out-of-range labels, stale traces, empty datasets.
class InputError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated file contents.
class FormatError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// FeatureMap
// ---------------------------------------------------------------------------

/// Row-major 2D grid of reals. Every map flowing between layers is one of these.
class FeatureMap {
public:
    FeatureMap() = default;
    FeatureMap(std::size_t height, std::size_t width, double fill = 0.0);
    FeatureMap(std::size_t height, std::size_t width, std::vector<double> values);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double& at(std::size_t row, std::size_t col) noexcept { return values_[row * width_ + col]; }
    double at(std::size_t row, std::size_t col) const noexcept { return values_[row * width_ + col]; }

    double* row(std::size_t r) noexcept { return values_.data() + r * width_; }
    const double* row(std::size_t r) const noexcept { return values_.data() + r * width_; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    bool same_shape(const FeatureMap& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    bool all_finite() const noexcept;

    friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> values_;
};

/// Throws ShapeError naming `what` unless the two maps agree in shape.
void require_same_shape(const FeatureMap& a, const FeatureMap& b, const char* what);

// ---------------------------------------------------------------------------
// Kernel distributions
// ---------------------------------------------------------------------------

/// Uniform distribution over [m - exp(rho), m + exp(rho)).
///
/// Learning the midpoint and the log of the half-width keeps a < b for every
/// finite parameter pair, so the optimizer never needs a constraint.
struct KernelDistribution {
    double midpoint = 0.0;
    double log_halfwidth = 0.0;

    friend bool operator==(const KernelDistribution&, const KernelDistribution&) = default;
};

struct Bounds {
    double lower;
    double upper;
};

Bounds derive_bounds(const KernelDistribution& dist);

/// Frozen sampling noise plus the coefficients it currently maps to.
///
/// coefficients[t] = a + (b - a) * noise[t] for the owning distribution's (a, b).
/// Taps are laid out as a side x side square, row-major.
struct ProjectionKernel {
    std::size_t support = 0;
    std::vector<double> noise;
    std::vector<double> coefficients;

    std::size_t side() const noexcept;

    friend bool operator==(const ProjectionKernel&, const ProjectionKernel&) = default;
};

/// Integer square root when `n` is a perfect square, 0 otherwise.
std::size_t exact_sqrt(std::size_t n) noexcept;

// ---------------------------------------------------------------------------
// Architecture description
// ---------------------------------------------------------------------------

struct LayerSpec {
    std::size_t num_projections = 0;
    std::size_t support = 0;
    /// Input map index for every projection. Empty means "draw at build time".
    std::vector<std::size_t> wiring;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelConfig {
    std::vector<LayerSpec> layers;
    std::size_t num_classes = 0;
    std::uint64_t seed = 0;
    std::size_t input_height = 0;
    std::size_t input_width = 0;
    std::size_t median_window = 3;

    /// Σ 2·N_i over all layers.
    std::size_t projection_parameter_count() const noexcept;
    /// Number of maps produced by the last layer.
    std::size_t feature_dim() const noexcept;

    /// Checks everything except wiring presence; wiring, when given, must be in range.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Three stacked layers of 512, 512 and 1024 projections with 25-tap kernels.
ModelConfig paper_default_config(std::size_t num_classes = 10, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Randomness
// ---------------------------------------------------------------------------

/// Independent stream families carved out of one master seed.
enum class Stream : std::uint64_t {
    kKernelNoise = 0,
    kWiring = 1,
};

/// Portable deterministic generator.
///
/// std::mt19937_64 output is fully specified by the standard; the
/// distributions below are written out by hand because the standard library
/// distributions are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    /// Uniform in [0, n). `n` must be positive.
    std::size_t uniform_index(std::size_t n);

private:
    std::mt19937_64 engine_;
};

/// splitmix64 finalizer; used to derive child seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Stream for projection `projection` of layer `layer` under `seed`.
Rng child_rng(std::uint64_t seed, std::size_t layer, std::size_t projection,
              Stream stream = Stream::kKernelNoise);

}  // namespace larp
