#include "larp/verify.hpp"

#include <algorithm>
#include <cmath>

#include "larp/network.hpp"
#include "larp/nonl.hpp"
#include "larp/training.hpp"

namespace larp {
namespace {

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

FeatureMap random_map(Rng& rng, std::size_t h, std::size_t w, double lo, double hi) {
    FeatureMap map(h, w);
    for (double& v : map.values()) v = uniform(rng, lo, hi);
    return map;
}

ProjectionKernel random_kernel(Rng& rng, std::size_t support) {
    const KernelDistribution dist{uniform(rng, -1.0, 1.0), std::log(uniform(rng, 0.1, 2.0))};
    return sample_kernel(dist, support, rng);
}

double inner(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double abs_inner(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] * b[i]);
    return s;
}

void dense_toeplitz_trial(Rng& rng, OracleReport& report) {
    const std::size_t support = rng.uniform_index(2) == 0 ? 9 : 25;
    const std::size_t side = exact_sqrt(support);
    const std::size_t h = side + rng.uniform_index(16 - side + 1);
    const std::size_t w = side + rng.uniform_index(16 - side + 1);
    const ProjectionKernel kernel = random_kernel(rng, support);
    const FeatureMap x = random_map(rng, h, w, -1.0, 1.0);
    const FeatureMap fast = project(x, kernel);
    const std::vector<double> slow = dense_oracle(kernel, h, w).multiply(x.values());
    for (std::size_t i = 0; i < slow.size(); ++i) {
        report.max_error = std::max(report.max_error, relative_error(fast.values()[i], slow[i]));
    }
    ++report.checks;
}

void median_trial(Rng& rng, OracleReport& report) {
    const std::size_t window = rng.uniform_index(4) == 0 ? 5 : 3;
    const std::size_t h = 1 + rng.uniform_index(32);
    const std::size_t w = 1 + rng.uniform_index(32);
    FeatureMap x = random_map(rng, h, w, -1.0, 1.0);
    // Quantize some maps so that ties are exercised.
    if (rng.uniform_index(2) == 0) {
        for (double& v : x.values()) v = std::round(v * 4.0);
    }
    const FeatureMap fast = smr(x, window);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            report.max_error = std::max(
                report.max_error, std::fabs(fast.at(r, c) - median_by_sorting(x, r, c, window)));
        }
    }
    ++report.checks;
}

void adjoint_trial(Rng& rng, const AdjointFn& adjoint, OracleReport& report) {
    const std::size_t support = rng.uniform_index(2) == 0 ? 9 : 25;
    const std::size_t side = exact_sqrt(support);
    const std::size_t h = side + rng.uniform_index(20);
    const std::size_t w = side + rng.uniform_index(20);
    const ProjectionKernel kernel = random_kernel(rng, support);
    const FeatureMap x = random_map(rng, h, w, -1.0, 1.0);
    const FeatureMap g = random_map(rng, h, w, -1.0, 1.0);
    const FeatureMap px = project(x, kernel);
    const ProjectGradients grads = adjoint(x, kernel, g);

    // <P x, g> = <x, P* g> = Σ_t k_t · dk_t (the form is bilinear in x and k).
    const double lhs = inner(px.values(), g.values());
    const double scale = std::max(abs_inner(px.values(), g.values()), 1e-300);
    double err = std::fabs(lhs - inner(x.values(), grads.input.values())) / scale;
    err = std::max(err, std::fabs(lhs - inner(kernel.coefficients, grads.coefficients)) / scale);
    report.max_error = std::max(report.max_error, err);
    ++report.checks;
}

Model random_toy_model(Rng& rng) {
    ModelConfig config;
    config.num_classes = 3;
    config.input_height = 8;
    config.input_width = 8;
    config.seed = rng.next_u64();
    const std::size_t layers = 1 + rng.uniform_index(2);
    for (std::size_t i = 0; i < layers; ++i) {
        config.layers.push_back({1 + rng.uniform_index(3), 9, {}});
    }
    Model model = build_model(config);
    ParameterVector params = to_vector(model);
    const std::size_t projection_params = model.projection_parameter_count();
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (k < projection_params) {
            params[k] = k % 2 == 0 ? uniform(rng, -0.5, 0.5) : std::log(uniform(rng, 0.2, 1.0));
        } else {
            params[k] = uniform(rng, -1.0, 1.0);
        }
    }
    assign_vector(model, params);
    return model;
}

void gradient_trial(Rng& rng, OracleReport& report) {
    Model model = random_toy_model(rng);
    const FeatureMap image = random_map(rng, 8, 8, 0.0, 1.0);
    const std::size_t label = rng.uniform_index(3);
    const ParameterVector base = to_vector(model);

    const ForwardTrace trace = forward(model, image);
    const ParameterVector analytic = backward(model, trace, label);
    const auto pattern = activation_pattern(model, trace);

    constexpr double kStep = 1e-6;
    Model probe = model;
    auto loss_at = [&](std::span<const double> p) {
        assign_vector(probe, p);
        return cross_entropy(forward(probe, image).probabilities, label);
    };
    auto stable_at = [&](std::span<const double> p) {
        assign_vector(probe, p);
        return activation_pattern(probe, forward(probe, image)) == pattern;
    };

    std::vector<double> p = base;
    for (std::size_t k = 0; k < base.size(); ++k) {
        p[k] = base[k] + kStep;
        const bool up_stable = stable_at(p);
        const double up = loss_at(p);
        p[k] = base[k] - kStep;
        const bool down_stable = stable_at(p);
        const double down = loss_at(p);
        p[k] = base[k];
        if (!up_stable || !down_stable) {
            ++report.skipped;
            continue;
        }
        const double numeric = (up - down) / (2.0 * kStep);
        report.max_error = std::max(report.max_error, gradient_error(analytic[k], numeric));
        ++report.checks;
    }
}

}  // namespace

double median_by_sorting(const FeatureMap& input, std::size_t row, std::size_t col,
                         std::size_t window) {
    const auto radius = static_cast<std::ptrdiff_t>(window / 2);
    const auto h = static_cast<std::ptrdiff_t>(input.height());
    const auto w = static_cast<std::ptrdiff_t>(input.width());
    std::vector<double> values;
    for (std::ptrdiff_t dy = -radius; dy <= radius; ++dy) {
        for (std::ptrdiff_t dx = -radius; dx <= radius; ++dx) {
            const std::ptrdiff_t y = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(row) + dy, 0, h - 1);
            const std::ptrdiff_t x = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(col) + dx, 0, w - 1);
            values.push_back(input.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)));
        }
    }
    std::sort(values.begin(), values.end());
    return values[values.size() / 2];
}

double relative_error(double a, double b) {
    const double scale = std::max(std::fabs(a), std::fabs(b));
    return scale == 0.0 ? 0.0 : std::fabs(a - b) / scale;
}

double gradient_error(double analytic, double numeric, double floor) {
    const double scale = std::max({std::fabs(analytic), std::fabs(numeric), floor});
    return std::fabs(analytic - numeric) / scale;
}

std::vector<OracleReport> run_verification(const VerifyOptions& options) {
    OracleReport dense{"dense_toeplitz", 0.0, 1e-12};
    OracleReport median{"median_sort", 0.0, 0.0};
    OracleReport adjoint{"adjoint_identity", 0.0, 1e-10};
    OracleReport gradient{"gradient_finite_diff", 0.0, 1e-4};

    const AdjointFn adjoint_fn =
        options.adjoint ? options.adjoint
                        : AdjointFn([](const FeatureMap& x, const ProjectionKernel& k,
                                       const FeatureMap& g) { return project_backward(x, k, g); });

    for (std::size_t t = 0; t < options.trials; ++t) {
        Rng rng = child_rng(options.seed, 0, t);
        dense_toeplitz_trial(rng, dense);
        rng = child_rng(options.seed, 1, t);
        median_trial(rng, median);
        rng = child_rng(options.seed, 2, t);
        adjoint_trial(rng, adjoint_fn, adjoint);
        rng = child_rng(options.seed, 3, t);
        gradient_trial(rng, gradient);
    }

    dense.passed = dense.max_error <= dense.tolerance;
    median.passed = median.max_error <= median.tolerance;
    adjoint.passed = adjoint.max_error <= adjoint.tolerance;
    const std::size_t total = gradient.checks + gradient.skipped;
    const bool enough_stable =
        total == 0 || static_cast<double>(gradient.checks) >= 0.95 * static_cast<double>(total);
    gradient.passed = gradient.max_error < gradient.tolerance && enough_stable;
    return {dense, median, adjoint, gradient};
}

}  // namespace larp
