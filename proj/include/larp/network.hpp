#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "larp/core.hpp"

namespace larp {

/// Complete trainable state of a layered random projection classifier.
///
/// `distributions[i][j]` and `kernels[i][j]` belong to projection j of layer
/// i. Kernel coefficients always reflect the current distributions; call
/// refresh_kernels() after editing distributions directly.
struct Model {
    ModelConfig config;  // wiring always populated
    std::vector<std::vector<KernelDistribution>> distributions;
    std::vector<std::vector<ProjectionKernel>> kernels;
    std::vector<double> classifier_weights;  // num_classes x feature_dim, row-major
    std::vector<double> classifier_bias;     // num_classes

    std::size_t num_classes() const noexcept { return config.num_classes; }
    std::size_t feature_dim() const noexcept { return config.feature_dim(); }
    std::size_t projection_parameter_count() const noexcept {
        return config.projection_parameter_count();
    }
    std::size_t classifier_parameter_count() const noexcept {
        return num_classes() * (feature_dim() + 1);
    }
    std::size_t trainable_parameter_count() const noexcept {
        return projection_parameter_count() + classifier_parameter_count();
    }

    void refresh_kernels();

    friend bool operator==(const Model&, const Model&) = default;
};

/// Initial distribution for a kernel with `support` taps: m = 0, halfwidth 1/sqrt(n_s).
KernelDistribution default_distribution(std::size_t support);

/// Fills in missing wiring, initializes distributions and samples kernels.
Model build_model(ModelConfig config);

struct LayerTrace {
    std::vector<FeatureMap> projected;  // Y
    std::vector<FeatureMap> rectified;  // |Y|
    std::vector<FeatureMap> output;     // median of |Y|
};

/// Every intermediate of one forward pass, kept for backpropagation.
struct ForwardTrace {
    FeatureMap input;
    std::vector<LayerTrace> layers;
    std::vector<double> features;
    std::vector<double> logits;
    std::vector<double> probabilities;

    /// The map projection `projection` of `layer` read from.
    const FeatureMap& layer_input(const Model& model, std::size_t layer,
                                  std::size_t projection) const;
};

ForwardTrace forward(const Model& model, const FeatureMap& image);

/// Global mean of each last-layer map.
std::vector<double> extract_features(const Model& model, const FeatureMap& image);

/// Max-subtracted softmax.
std::vector<double> softmax(std::span<const double> logits);

/// weights · features + bias.
std::vector<double> classifier_logits(std::span<const double> features,
                                      std::span<const double> weights,
                                      std::span<const double> bias);

std::vector<double> softmax_classify(std::span<const double> features,
                                     std::span<const double> weights,
                                     std::span<const double> bias);

/// Index of the largest probability, lowest index on ties.
std::size_t argmax(std::span<const double> values);

std::size_t predict(const Model& model, const FeatureMap& image);

/// Discrete state of every non-smooth operation in a trace: the sign of each
/// projected value and the source pixel of each median. Two parameter
/// settings with equal patterns lie on the same smooth piece of the loss.
std::vector<std::uint32_t> activation_pattern(const Model& model, const ForwardTrace& trace);

}  // namespace larp
