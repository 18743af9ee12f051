#include "larp/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "larp/lrpe.hpp"
#include "larp/nonl.hpp"

namespace larp {

void Model::refresh_kernels() {
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        for (std::size_t j = 0; j < kernels[i].size(); ++j) {
            kernels[i][j] = refresh_coefficients(std::move(kernels[i][j]), distributions[i][j]);
        }
    }
}

KernelDistribution default_distribution(std::size_t support) {
    return {0.0, -0.5 * std::log(static_cast<double>(support))};
}

Model build_model(ModelConfig config) {
    config.validate();
    Model model;
    std::size_t previous_maps = 1;
    for (std::size_t i = 0; i < config.layers.size(); ++i) {
        LayerSpec& layer = config.layers[i];
        if (layer.wiring.empty()) {
            layer.wiring.resize(layer.num_projections);
            for (std::size_t j = 0; j < layer.num_projections; ++j) {
                Rng rng = child_rng(config.seed, i, j, Stream::kWiring);
                layer.wiring[j] = rng.uniform_index(previous_maps);
            }
        }
        const KernelDistribution init = default_distribution(layer.support);
        model.distributions.emplace_back(layer.num_projections, init);
        auto& kernels = model.kernels.emplace_back();
        kernels.reserve(layer.num_projections);
        for (std::size_t j = 0; j < layer.num_projections; ++j) {
            Rng rng = child_rng(config.seed, i, j, Stream::kKernelNoise);
            kernels.push_back(sample_kernel(init, layer.support, rng));
        }
        previous_maps = layer.num_projections;
    }
    model.classifier_weights.assign(config.num_classes * config.feature_dim(), 0.0);
    model.classifier_bias.assign(config.num_classes, 0.0);
    model.config = std::move(config);
    return model;
}

const FeatureMap& ForwardTrace::layer_input(const Model& model, std::size_t layer,
                                            std::size_t projection) const {
    if (layer == 0) return input;
    return layers[layer - 1].output[model.config.layers[layer].wiring[projection]];
}

ForwardTrace forward(const Model& model, const FeatureMap& image) {
    const ModelConfig& config = model.config;
    if (image.height() != config.input_height || image.width() != config.input_width) {
        throw ShapeError("forward: image is " + std::to_string(image.height()) + "x" +
                         std::to_string(image.width()) + ", model expects " +
                         std::to_string(config.input_height) + "x" +
                         std::to_string(config.input_width));
    }
    ForwardTrace trace;
    trace.input = image;
    trace.layers.resize(config.layers.size());
    for (std::size_t i = 0; i < config.layers.size(); ++i) {
        const std::size_t n = config.layers[i].num_projections;
        LayerTrace& layer = trace.layers[i];
        layer.projected.reserve(n);
        layer.rectified.reserve(n);
        layer.output.reserve(n);
        for (std::size_t j = 0; j < n; ++j) {
            layer.projected.push_back(project(trace.layer_input(model, i, j), model.kernels[i][j]));
            layer.rectified.push_back(avr(layer.projected.back()));
            layer.output.push_back(smr(layer.rectified.back(), config.median_window));
        }
    }

    const auto& last = trace.layers.back().output;
    trace.features.resize(last.size());
    for (std::size_t j = 0; j < last.size(); ++j) {
        double sum = 0.0;
        for (double v : last[j].values()) sum += v;
        trace.features[j] = sum / static_cast<double>(last[j].size());
    }
    trace.logits =
        classifier_logits(trace.features, model.classifier_weights, model.classifier_bias);
    trace.probabilities = softmax(trace.logits);
    return trace;
}

std::vector<double> extract_features(const Model& model, const FeatureMap& image) {
    return forward(model, image).features;
}

std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) throw ShapeError("softmax: no logits");
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        out[c] = std::exp(logits[c] - peak);
        total += out[c];
    }
    for (double& p : out) p /= total;
    return out;
}

std::vector<double> classifier_logits(std::span<const double> features,
                                      std::span<const double> weights,
                                      std::span<const double> bias) {
    const std::size_t classes = bias.size();
    const std::size_t dim = features.size();
    if (weights.size() != classes * dim) {
        throw ShapeError("classifier: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(classes) + " classes x " + std::to_string(dim) +
                         " features");
    }
    std::vector<double> logits(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        double sum = bias[c];
        const double* w = weights.data() + c * dim;
        for (std::size_t f = 0; f < dim; ++f) sum += w[f] * features[f];
        logits[c] = sum;
    }
    return logits;
}

std::vector<double> softmax_classify(std::span<const double> features,
                                     std::span<const double> weights,
                                     std::span<const double> bias) {
    return softmax(classifier_logits(features, weights, bias));
}

std::size_t argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

std::size_t predict(const Model& model, const FeatureMap& image) {
    return argmax(forward(model, image).probabilities);
}

std::vector<std::uint32_t> activation_pattern(const Model& model, const ForwardTrace& trace) {
    std::vector<std::uint32_t> pattern;
    for (const LayerTrace& layer : trace.layers) {
        for (std::size_t j = 0; j < layer.projected.size(); ++j) {
            for (double y : layer.projected[j].values()) {
                pattern.push_back(y > 0.0 ? 1u : (y < 0.0 ? 2u : 0u));
            }
            const auto sources = smr_sources(layer.rectified[j], model.config.median_window);
            pattern.insert(pattern.end(), sources.begin(), sources.end());
        }
    }
    return pattern;
}

}  // namespace larp
