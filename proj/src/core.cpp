#include "larp/core.hpp"

#include <cmath>
#include <string>

namespace larp {

FeatureMap::FeatureMap(std::size_t height, std::size_t width, double fill)
    : height_(height), width_(width), values_(height * width, fill) {}

FeatureMap::FeatureMap(std::size_t height, std::size_t width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
    if (values_.size() != height_ * width_) {
        throw ShapeError("feature map: " + std::to_string(values_.size()) +
                         " values do not fill a " + std::to_string(height_) + "x" +
                         std::to_string(width_) + " grid");
    }
}

bool FeatureMap::all_finite() const noexcept {
    for (double v : values_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void require_same_shape(const FeatureMap& a, const FeatureMap& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.height()) +
                         "x" + std::to_string(a.width()) + " vs " + std::to_string(b.height()) +
                         "x" + std::to_string(b.width()));
    }
}

Bounds derive_bounds(const KernelDistribution& dist) {
    if (!std::isfinite(dist.midpoint) || !std::isfinite(dist.log_halfwidth)) {
        throw InvalidParameterError("kernel distribution has non-finite parameters");
    }
    const double halfwidth = std::exp(dist.log_halfwidth);
    return {dist.midpoint - halfwidth, dist.midpoint + halfwidth};
}

std::size_t exact_sqrt(std::size_t n) noexcept {
    if (n == 0) return 0;
    auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    while (r * r > n) --r;
    while ((r + 1) * (r + 1) <= n) ++r;
    return r * r == n ? r : 0;
}

std::size_t ProjectionKernel::side() const noexcept { return exact_sqrt(support); }

std::size_t ModelConfig::projection_parameter_count() const noexcept {
    std::size_t total = 0;
    for (const auto& layer : layers) total += 2 * layer.num_projections;
    return total;
}

std::size_t ModelConfig::feature_dim() const noexcept {
    return layers.empty() ? 0 : layers.back().num_projections;
}

void ModelConfig::validate() const {
    if (layers.empty()) throw ConfigError("config: at least one layer is required");
    if (num_classes == 0) throw ConfigError("config: num_classes must be positive");
    if (input_height == 0 || input_width == 0) {
        throw ConfigError("config: input dimensions must be positive");
    }
    if (median_window == 0 || median_window % 2 == 0) {
        throw ConfigError("config: median window must be odd");
    }
    std::size_t previous_maps = 1;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& layer = layers[i];
        const std::string where = "config: layer " + std::to_string(i + 1);
        if (layer.num_projections == 0) throw ConfigError(where + " has no projections");
        const std::size_t side = exact_sqrt(layer.support);
        if (side == 0) throw ConfigError(where + " support is not a perfect square");
        if (side % 2 == 0) throw ConfigError(where + " kernel side must be odd");
        if (side > input_height || side > input_width) {
            throw ConfigError(where + " kernel is larger than the input");
        }
        if (!layer.wiring.empty()) {
            if (layer.wiring.size() != layer.num_projections) {
                throw ConfigError(where + " wiring length differs from num_projections");
            }
            for (std::size_t source : layer.wiring) {
                if (source >= previous_maps) {
                    throw ConfigError(where + " wiring entry " + std::to_string(source) +
                                      " out of range (previous layer has " +
                                      std::to_string(previous_maps) + " maps)");
                }
            }
        }
        previous_maps = layer.num_projections;
    }
}

ModelConfig paper_default_config(std::size_t num_classes, std::uint64_t seed) {
    ModelConfig config;
    config.layers = {{512, 25, {}}, {512, 25, {}}, {1024, 25, {}}};
    config.num_classes = num_classes;
    config.seed = seed;
    config.input_height = 28;
    config.input_width = 28;
    return config;
}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t Rng::uniform_index(std::size_t n) {
    // Rejection sampling keeps the draw exactly uniform.
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<std::size_t>(x % bound);
}

std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng child_rng(std::uint64_t seed, std::size_t layer, std::size_t projection, Stream stream) {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ static_cast<std::uint64_t>(stream));
    h = mix64(h ^ static_cast<std::uint64_t>(layer));
    h = mix64(h ^ static_cast<std::uint64_t>(projection));
    return Rng(h);
}

}  // namespace larp
