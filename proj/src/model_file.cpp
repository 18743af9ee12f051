#include "larp/model_file.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace larp {
namespace {

using nlohmann::json;

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write file: " + path.string());
    out << text;
    if (!out) throw InputError("failed writing " + path.string());
}

json parse_json(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string(what) + ": " + e.what());
    }
}

template <typename T>
T field(const json& object, const char* key, const char* what) {
    if (!object.is_object() || !object.contains(key)) {
        throw FormatError(std::string(what) + ": missing field \"" + key + "\"");
    }
    try {
        return object.at(key).get<T>();
    } catch (const json::exception& e) {
        throw FormatError(std::string(what) + ": field \"" + key + "\": " + e.what());
    }
}

ModelConfig config_from_json(const json& j) {
    const char* what = "config";
    ModelConfig config;
    config.input_height = field<std::size_t>(j, "input_height", what);
    config.input_width = field<std::size_t>(j, "input_width", what);
    config.num_classes = field<std::size_t>(j, "num_classes", what);
    config.seed = j.contains("seed") ? field<std::uint64_t>(j, "seed", what) : 0;
    config.median_window = j.contains("median_window") ? field<std::size_t>(j, "median_window", what) : 3;
    const json layers = field<json>(j, "layers", what);
    if (!layers.is_array()) throw FormatError("config: \"layers\" must be an array");
    for (const json& l : layers) {
        LayerSpec spec;
        spec.num_projections = field<std::size_t>(l, "num_projections", "layer");
        spec.support = field<std::size_t>(l, "support", "layer");
        if (l.contains("wiring")) spec.wiring = field<std::vector<std::size_t>>(l, "wiring", "layer");
        config.layers.push_back(std::move(spec));
    }
    config.validate();
    return config;
}

void append_config(std::string& out, const ModelConfig& config, const std::string& indent) {
    out += "{\n";
    out += indent + "  \"input_height\": " + std::to_string(config.input_height) + ",\n";
    out += indent + "  \"input_width\": " + std::to_string(config.input_width) + ",\n";
    out += indent + "  \"num_classes\": " + std::to_string(config.num_classes) + ",\n";
    out += indent + "  \"seed\": " + std::to_string(config.seed) + ",\n";
    out += indent + "  \"median_window\": " + std::to_string(config.median_window) + ",\n";
    out += indent + "  \"layers\": [\n";
    for (std::size_t i = 0; i < config.layers.size(); ++i) {
        const LayerSpec& layer = config.layers[i];
        out += indent + "    {\"num_projections\": " + std::to_string(layer.num_projections) +
               ", \"support\": " + std::to_string(layer.support);
        if (!layer.wiring.empty()) {
            out += ", \"wiring\": [";
            for (std::size_t j = 0; j < layer.wiring.size(); ++j) {
                if (j != 0) out += ", ";
                out += std::to_string(layer.wiring[j]);
            }
            out += "]";
        }
        out += i + 1 < config.layers.size() ? "},\n" : "}\n";
    }
    out += indent + "  ]\n";
    out += indent + "}";
}

void append_reals(std::string& out, const double* values, std::size_t count) {
    out += "[";
    for (std::size_t k = 0; k < count; ++k) {
        if (k != 0) out += ", ";
        out += format_real(values[k]);
    }
    out += "]";
}

}  // namespace

std::string format_real(double value) {
    if (!std::isfinite(value)) throw InvalidParameterError("cannot serialize a non-finite value");
    char buffer[40];
    std::snprintf(buffer, sizeof buffer, "%.17g", value);
    return buffer;
}

std::string serialize_config(const ModelConfig& config) {
    std::string out;
    append_config(out, config, "");
    out += "\n";
    return out;
}

ModelConfig parse_config(const std::string& text) {
    return config_from_json(parse_json(text, "config"));
}

ModelConfig load_config(const std::filesystem::path& path) {
    try {
        return parse_config(read_text(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::string serialize_model(const Model& model) {
    std::string out = "{\n  \"format_version\": " + std::to_string(kModelFormatVersion) + ",\n";
    out += "  \"config\": ";
    append_config(out, model.config, "  ");
    out += ",\n  \"distributions\": [\n";
    for (std::size_t i = 0; i < model.distributions.size(); ++i) {
        out += "    [";
        const auto& layer = model.distributions[i];
        for (std::size_t j = 0; j < layer.size(); ++j) {
            if (j != 0) out += ", ";
            out += "[" + format_real(layer[j].midpoint) + ", " + format_real(layer[j].log_halfwidth) + "]";
        }
        out += i + 1 < model.distributions.size() ? "],\n" : "]\n";
    }
    out += "  ],\n  \"classifier\": {\n    \"weights\": [\n";
    const std::size_t dim = model.feature_dim();
    for (std::size_t c = 0; c < model.num_classes(); ++c) {
        out += "      ";
        append_reals(out, model.classifier_weights.data() + c * dim, dim);
        out += c + 1 < model.num_classes() ? ",\n" : "\n";
    }
    out += "    ],\n    \"bias\": ";
    append_reals(out, model.classifier_bias.data(), model.classifier_bias.size());
    out += "\n  }\n}\n";
    return out;
}

Model parse_model(const std::string& text) {
    const json j = parse_json(text, "model");
    const int version = field<int>(j, "format_version", "model");
    if (version != kModelFormatVersion) {
        throw FormatError("model: unsupported format_version " + std::to_string(version));
    }
    ModelConfig config = config_from_json(field<json>(j, "config", "model"));
    for (const LayerSpec& layer : config.layers) {
        if (layer.wiring.empty()) throw FormatError("model: layer wiring missing");
    }
    Model model = build_model(std::move(config));

    const auto dists =
        field<std::vector<std::vector<std::vector<double>>>>(j, "distributions", "model");
    if (dists.size() != model.distributions.size()) {
        throw FormatError("model: distribution layer count mismatch");
    }
    for (std::size_t i = 0; i < dists.size(); ++i) {
        if (dists[i].size() != model.distributions[i].size()) {
            throw FormatError("model: distribution count mismatch in layer " + std::to_string(i + 1));
        }
        for (std::size_t k = 0; k < dists[i].size(); ++k) {
            if (dists[i][k].size() != 2) throw FormatError("model: distributions are [midpoint, log_halfwidth] pairs");
            model.distributions[i][k] = {dists[i][k][0], dists[i][k][1]};
        }
    }

    const json classifier = field<json>(j, "classifier", "model");
    const auto weights = field<std::vector<std::vector<double>>>(classifier, "weights", "classifier");
    const auto bias = field<std::vector<double>>(classifier, "bias", "classifier");
    const std::size_t dim = model.feature_dim();
    if (weights.size() != model.num_classes() || bias.size() != model.num_classes()) {
        throw FormatError("model: classifier does not match num_classes");
    }
    for (std::size_t c = 0; c < weights.size(); ++c) {
        if (weights[c].size() != dim) throw FormatError("model: classifier row length mismatch");
        std::copy(weights[c].begin(), weights[c].end(), model.classifier_weights.begin() + static_cast<std::ptrdiff_t>(c * dim));
    }
    model.classifier_bias = bias;
    model.refresh_kernels();
    return model;
}

void save_model(const std::filesystem::path& path, const Model& model) {
    write_text(path, serialize_model(model));
}

Model load_model(const std::filesystem::path& path) {
    try {
        return parse_model(read_text(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace larp
