#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "larp/data_io.hpp"
#include "larp/network.hpp"

namespace larp {

// ---------------------------------------------------------------------------
// Parameter packing
// ---------------------------------------------------------------------------

/// Layout: (midpoint, log_halfwidth) per projection in layer-then-projection
/// order, then classifier weights row-major, then classifier bias.
using ParameterVector = std::vector<double>;

ParameterVector to_vector(const Model& model);
/// Writes `params` into `model` and refreshes its kernels.
void assign_vector(Model& model, std::span<const double> params);
Model from_vector(Model model, std::span<const double> params);

// ---------------------------------------------------------------------------
// Objective and gradients
// ---------------------------------------------------------------------------

/// −ln p[label].
double cross_entropy(std::span<const double> probabilities, std::size_t label);

/// Gradient of cross_entropy(trace.probabilities, label) over the full
/// ParameterVector. `trace` must come from forward() on this same model.
ParameterVector backward(const Model& model, const ForwardTrace& trace, std::size_t label);

/// Central differences (f(p + h·e_i) − f(p − h·e_i)) / 2h, one coordinate at a time.
std::vector<double> finite_diff_gradient(const std::function<double(std::span<const double>)>& f,
                                         std::span<const double> params, double step);

/// A deterministic, differentiable function of a flat parameter vector.
class Objective {
public:
    virtual ~Objective() = default;
    virtual double value(std::span<const double> params) = 0;
    virtual double value_and_gradient(std::span<const double> params, std::span<double> grad) = 0;
};

/// Mean cross-entropy of a model over a dataset, as a function of the model's
/// ParameterVector. Samples are processed in fixed-size chunks whose partial
/// sums are reduced in chunk order, so the result does not depend on the
/// number of worker threads.
class DatasetObjective final : public Objective {
public:
    /// `threads == 0` picks the hardware concurrency.
    DatasetObjective(Model model, const LabeledDataset& data, std::size_t threads = 0);

    double value(std::span<const double> params) override;
    double value_and_gradient(std::span<const double> params, std::span<double> grad) override;

    static constexpr std::size_t kChunkSize = 16;

private:
    double evaluate(std::span<const double> params, std::span<double> grad);

    Model model_;
    const LabeledDataset& data_;
    std::size_t threads_;
};

// ---------------------------------------------------------------------------
// Scaled conjugate gradient
// ---------------------------------------------------------------------------

struct ScgConfig {
    std::size_t max_iters = 200;
    double initial_lambda = 1e-6;
    double lambda_max = 1e20;
    double tol = 1e-5;             // stop when the gradient norm drops below this
    double sigma0 = 1e-4;          // finite-difference scale of the curvature probe
    double delta_low = 0.25;
    double delta_high = 0.75;
    double lambda_increase = 4.0;  // applied when the comparison ratio < delta_low
    double lambda_decrease = 0.5;  // applied when the comparison ratio > delta_high
    std::size_t restart_interval = 0;  // 0 means the parameter count
    /// scg_train only: optimize the classifier in coordinates where the
    /// initial pooled features are centered and decorrelated with unit
    /// variance. The model's function class is unchanged; only the
    /// optimizer's view is transformed.
    bool whiten_features = true;
    /// scg_train only: kernel bounds move this many model units per unit of
    /// optimizer coordinate. Small values keep the head's conjugate directions
    /// from being swamped by the far more sensitive kernel bounds.
    double kernel_scale = 0.003;
    std::ostream* log = nullptr;       // receives "iter\tloss\tgrad_norm" lines
};

enum class ScgStop {
    kMaxIterations,
    kGradientTolerance,
    kLambdaStall,
};

const char* to_string(ScgStop stop);

struct ScgRecord {
    std::size_t iteration;
    double loss;       // objective at the current (best) point after this iteration
    double grad_norm;  // gradient norm at the current point
    bool accepted;     // whether this iteration's trial step was taken
};

struct ScgResult {
    std::vector<double> params;
    double loss = 0.0;
    double grad_norm = 0.0;
    std::size_t iterations = 0;
    ScgStop stop = ScgStop::kMaxIterations;
    std::vector<ScgRecord> history;  // entry 0 is the starting point
};

/// Minimizes `objective` from `initial`. Steps are taken only when they lower
/// the objective, so the returned parameters are the best seen.
ScgResult scg_minimize(Objective& objective, std::vector<double> initial,
                       const ScgConfig& config = {});

/// Mean and lower Cholesky factor of the pooled-feature covariance.
struct FeatureFrame {
    std::vector<double> mean;
    std::vector<double> factor;  // dim x dim, row-major, lower triangular
};

FeatureFrame identity_frame(std::size_t dim);

/// Frame of the model's pooled features over `data`. A tiny ridge keeps the
/// factor invertible when features are constant or collinear.
FeatureFrame feature_frame(const Model& model, const LabeledDataset& data,
                           std::size_t threads = 0);

/// The coordinates scg_train hands to SCG. Kernel bounds are divided by a
/// fixed step scale. With frame mean mu and factor L, the head becomes
/// V = W·L and c = b + W·mu, so W·x + b = V·L⁻¹(x − mu) + c.
/// The model itself is unchanged; only the optimizer's view is.
class OptimizerCoordinates final : public Objective {
public:
    OptimizerCoordinates(Objective& inner, const Model& model, double kernel_scale,
                         FeatureFrame frame);

    std::vector<double> to_model(std::span<const double> q) const;
    std::vector<double> from_model(std::span<const double> p) const;

    double value(std::span<const double> q) override;
    double value_and_gradient(std::span<const double> q, std::span<double> grad) override;

private:
    Objective& inner_;
    std::size_t weights_;
    std::size_t classes_;
    std::size_t dim_;
    double kernel_scale_;
    FeatureFrame frame_;
    std::vector<double> buffer_;
};

struct TrainResult {
    Model model;
    ScgResult scg;
};

/// Trains every parameter of `model` on the mean cross-entropy over `dataset`.
/// The history's grad_norm is measured in the optimizer's coordinates.
TrainResult scg_train(const Model& model, const LabeledDataset& dataset,
                      const ScgConfig& config = {}, std::size_t threads = 0);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct Evaluation {
    double error_rate = 0.0;  // percent
    std::size_t misclassified = 0;
    std::size_t total = 0;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

/// 100·misclassified/total in percent.
double error_rate_percent(std::size_t misclassified, std::size_t total);

Evaluation evaluate(const Model& model, const LabeledDataset& dataset, std::size_t threads = 0);

/// Runs `fn(chunk)` for chunk = 0..count-1 across up to `threads` workers.
void parallel_for_chunks(std::size_t count, std::size_t threads,
                         const std::function<void(std::size_t)>& fn);

std::size_t resolve_threads(std::size_t requested);

}  // namespace larp
