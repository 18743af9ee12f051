#include "larp/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <utility>

#include "larp/lrpe.hpp"
#include "larp/nonl.hpp"

namespace larp {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
    return sum;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void check_length(const Model& model, std::size_t length) {
    if (length != model.trainable_parameter_count()) {
        throw InputError("parameter vector has " + std::to_string(length) + " entries, model has " +
                         std::to_string(model.trainable_parameter_count()));
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameter packing
// ---------------------------------------------------------------------------

ParameterVector to_vector(const Model& model) {
    ParameterVector v;
    v.reserve(model.trainable_parameter_count());
    for (const auto& layer : model.distributions) {
        for (const auto& dist : layer) {
            v.push_back(dist.midpoint);
            v.push_back(dist.log_halfwidth);
        }
    }
    v.insert(v.end(), model.classifier_weights.begin(), model.classifier_weights.end());
    v.insert(v.end(), model.classifier_bias.begin(), model.classifier_bias.end());
    return v;
}

void assign_vector(Model& model, std::span<const double> params) {
    check_length(model, params.size());
    std::size_t k = 0;
    for (auto& layer : model.distributions) {
        for (auto& dist : layer) {
            dist.midpoint = params[k++];
            dist.log_halfwidth = params[k++];
        }
    }
    for (double& w : model.classifier_weights) w = params[k++];
    for (double& b : model.classifier_bias) b = params[k++];
    model.refresh_kernels();
}

Model from_vector(Model model, std::span<const double> params) {
    assign_vector(model, params);
    return model;
}

// ---------------------------------------------------------------------------
// Objective and gradients
// ---------------------------------------------------------------------------

double cross_entropy(std::span<const double> probabilities, std::size_t label) {
    if (label >= probabilities.size()) {
        throw InputError("label " + std::to_string(label) + " out of range for " +
                         std::to_string(probabilities.size()) + " classes");
    }
    return -std::log(probabilities[label]);
}

ParameterVector backward(const Model& model, const ForwardTrace& trace, std::size_t label) {
    const ModelConfig& config = model.config;
    const std::size_t classes = model.num_classes();
    const std::size_t dim = model.feature_dim();
    if (label >= classes) {
        throw InputError("label " + std::to_string(label) + " out of range for " +
                         std::to_string(classes) + " classes");
    }
    bool stale = trace.layers.size() != config.layers.size() ||
                 trace.probabilities.size() != classes || trace.features.size() != dim ||
                 trace.input.height() != config.input_height ||
                 trace.input.width() != config.input_width;
    for (std::size_t i = 0; !stale && i < config.layers.size(); ++i) {
        stale = trace.layers[i].output.size() != config.layers[i].num_projections;
    }
    if (stale) throw InputError("backward: trace does not match the model");

    ParameterVector grad(model.trainable_parameter_count(), 0.0);
    const std::size_t weight_offset = model.projection_parameter_count();
    const std::size_t bias_offset = weight_offset + classes * dim;

    // Softmax + cross-entropy: d loss / d logits = p - onehot(label).
    std::vector<double> dlogits = trace.probabilities;
    dlogits[label] -= 1.0;
    std::vector<double> dfeatures(dim, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
        const double* w = model.classifier_weights.data() + c * dim;
        double* gw = grad.data() + weight_offset + c * dim;
        for (std::size_t f = 0; f < dim; ++f) {
            gw[f] = dlogits[c] * trace.features[f];
            dfeatures[f] += w[f] * dlogits[c];
        }
        grad[bias_offset + c] = dlogits[c];
    }

    // Mean pooling spreads each feature gradient evenly over its map.
    const std::size_t pixels = config.input_height * config.input_width;
    std::vector<FeatureMap> upstream(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        upstream[j] = FeatureMap(config.input_height, config.input_width,
                                 dfeatures[j] / static_cast<double>(pixels));
    }

    std::size_t layer_offset = weight_offset;
    for (std::size_t i = config.layers.size(); i-- > 0;) {
        const LayerSpec& spec = config.layers[i];
        const LayerTrace& layer = trace.layers[i];
        layer_offset -= 2 * spec.num_projections;
        std::vector<FeatureMap> next_upstream(i == 0 ? 0 : config.layers[i - 1].num_projections);

        for (std::size_t j = 0; j < spec.num_projections; ++j) {
            if (upstream[j].empty()) continue;  // map feeds nothing downstream
            const FeatureMap drect = smr_backward(layer.rectified[j], layer.output[j], upstream[j],
                                                  config.median_window);
            const FeatureMap dproj = avr_backward(layer.projected[j], drect);
            const ProjectionKernel& kernel = model.kernels[i][j];
            ProjectGradients pg =
                project_backward(trace.layer_input(model, i, j), kernel, dproj, i > 0);

            const double halfwidth = std::exp(model.distributions[i][j].log_halfwidth);
            double dmid = 0.0;
            double dlog = 0.0;
            for (std::size_t t = 0; t < kernel.support; ++t) {
                dmid += pg.coefficients[t];
                dlog += pg.coefficients[t] * halfwidth * (2.0 * kernel.noise[t] - 1.0);
            }
            grad[layer_offset + 2 * j] = dmid;
            grad[layer_offset + 2 * j + 1] = dlog;

            if (i > 0) {
                FeatureMap& target = next_upstream[spec.wiring[j]];
                if (target.empty()) {
                    target = std::move(pg.input);
                } else {
                    auto dst = target.values();
                    auto src = pg.input.values();
                    for (std::size_t p = 0; p < dst.size(); ++p) dst[p] += src[p];
                }
            }
        }
        upstream = std::move(next_upstream);
    }
    return grad;
}

std::vector<double> finite_diff_gradient(const std::function<double(std::span<const double>)>& f,
                                         std::span<const double> params, double step) {
    if (!(step > 0.0)) throw InvalidParameterError("finite differences need a positive step");
    std::vector<double> probe(params.begin(), params.end());
    std::vector<double> grad(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        probe[i] = params[i] + step;
        const double up = f(probe);
        probe[i] = params[i] - step;
        const double down = f(probe);
        probe[i] = params[i];
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

std::size_t resolve_threads(std::size_t requested) {
    if (requested != 0) return requested;
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for_chunks(std::size_t count, std::size_t threads,
                         const std::function<void(std::size_t)>& fn) {
    threads = std::min(resolve_threads(threads), count);
    if (threads <= 1) {
        for (std::size_t c = 0; c < count; ++c) fn(c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t c = next++; c < count; c = next++) {
            try {
                fn(c);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = count;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads - 1);
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

DatasetObjective::DatasetObjective(Model model, const LabeledDataset& data, std::size_t threads)
    : model_(std::move(model)), data_(data), threads_(resolve_threads(threads)) {
    if (data_.empty()) throw EmptyDatasetError("training set is empty");
    data_.validate(model_.num_classes());
}

double DatasetObjective::value(std::span<const double> params) { return evaluate(params, {}); }

double DatasetObjective::value_and_gradient(std::span<const double> params,
                                            std::span<double> grad) {
    check_length(model_, grad.size());
    return evaluate(params, grad);
}

double DatasetObjective::evaluate(std::span<const double> params, std::span<double> grad) {
    assign_vector(model_, params);
    const bool want_grad = !grad.empty();
    const std::size_t n = data_.size();
    const std::size_t chunks = (n + kChunkSize - 1) / kChunkSize;
    std::vector<double> chunk_loss(chunks, 0.0);
    std::vector<std::vector<double>> chunk_grad(want_grad ? chunks : 0);

    parallel_for_chunks(chunks, threads_, [&](std::size_t c) {
        const std::size_t begin = c * kChunkSize;
        const std::size_t end = std::min(n, begin + kChunkSize);
        double loss = 0.0;
        std::vector<double> acc;
        if (want_grad) acc.assign(grad.size(), 0.0);
        for (std::size_t s = begin; s < end; ++s) {
            const ForwardTrace trace = forward(model_, data_.images[s]);
            loss += cross_entropy(trace.probabilities, data_.labels[s]);
            if (want_grad) {
                const ParameterVector g = backward(model_, trace, data_.labels[s]);
                for (std::size_t k = 0; k < g.size(); ++k) acc[k] += g[k];
            }
        }
        chunk_loss[c] = loss;
        if (want_grad) chunk_grad[c] = std::move(acc);
    });

    double total = 0.0;
    for (double l : chunk_loss) total += l;
    const double scale = 1.0 / static_cast<double>(n);
    if (want_grad) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (const auto& g : chunk_grad) {
            for (std::size_t k = 0; k < g.size(); ++k) grad[k] += g[k];
        }
        for (double& g : grad) g *= scale;
    }
    return total * scale;
}

// ---------------------------------------------------------------------------
// Scaled conjugate gradient
// ---------------------------------------------------------------------------

const char* to_string(ScgStop stop) {
    switch (stop) {
        case ScgStop::kMaxIterations: return "max_iterations";
        case ScgStop::kGradientTolerance: return "gradient_tolerance";
        case ScgStop::kLambdaStall: return "lambda_stall";
    }
    return "unknown";
}

ScgResult scg_minimize(Objective& objective, std::vector<double> initial, const ScgConfig& config) {
    const std::size_t n = initial.size();
    const std::size_t restart = config.restart_interval == 0 ? n : config.restart_interval;

    ScgResult result;
    std::vector<double>& w = result.params;
    w = std::move(initial);
    std::vector<double> grad(n);
    double loss = objective.value_and_gradient(w, grad);
    if (!std::isfinite(loss)) throw InputError("objective is not finite at the starting point");

    auto record = [&](std::size_t iteration, bool accepted) {
        const double gnorm = norm(grad);
        result.history.push_back({iteration, loss, gnorm, accepted});
        if (config.log != nullptr) {
            *config.log << iteration << '\t' << loss << '\t' << gnorm << '\n';
        }
    };
    record(0, true);

    std::vector<double> r(n);         // steepest descent direction, -grad
    std::vector<double> p(n);         // search direction
    std::vector<double> probe(n);
    std::vector<double> probe_grad(n);
    std::vector<double> trial(n);
    std::vector<double> trial_grad(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = p[i] = -grad[i];

    double lambda = config.initial_lambda;
    double curvature = 0.0;  // p' H p from the last probe
    double mu = 0.0;
    double p2 = 0.0;
    bool success = true;
    std::size_t accepted_since_restart = 0;

    result.stop = ScgStop::kMaxIterations;
    if (norm(r) < config.tol) {
        result.stop = ScgStop::kGradientTolerance;
    } else {
        for (std::size_t iter = 1; iter <= config.max_iters; ++iter) {
            result.iterations = iter;
            if (success) {
                mu = dot(p, r);
                if (mu <= 0.0) {
                    p = r;
                    mu = dot(p, r);
                }
                p2 = dot(p, p);
                const double sigma = config.sigma0 / std::sqrt(p2);
                for (std::size_t i = 0; i < n; ++i) probe[i] = w[i] + sigma * p[i];
                objective.value_and_gradient(probe, probe_grad);
                curvature = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    curvature += p[i] * (probe_grad[i] - grad[i]);
                }
                curvature /= sigma;
            }

            // Regularize the curvature estimate; force it positive if needed.
            double delta = curvature + lambda * p2;
            if (delta <= 0.0) {
                delta = lambda * p2;
                lambda -= curvature / p2;
            }
            const double alpha = mu / delta;

            for (std::size_t i = 0; i < n; ++i) trial[i] = w[i] + alpha * p[i];
            const double trial_loss = objective.value_and_gradient(trial, trial_grad);
            const double comparison = std::isfinite(trial_loss)
                                          ? 2.0 * delta * (loss - trial_loss) / (mu * mu)
                                          : -std::numeric_limits<double>::infinity();

            success = std::isfinite(trial_loss) && trial_loss < loss;
            if (success) {
                std::vector<double> r_old = r;
                w.swap(trial);
                grad.swap(trial_grad);
                loss = trial_loss;
                for (std::size_t i = 0; i < n; ++i) r[i] = -grad[i];
                ++accepted_since_restart;
                if (accepted_since_restart >= restart) {
                    p = r;
                    accepted_since_restart = 0;
                } else {
                    const double beta = (dot(r, r) - dot(r, r_old)) / mu;
                    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
                }
            }

            if (comparison < config.delta_low) lambda *= config.lambda_increase;
            if (comparison > config.delta_high) lambda *= config.lambda_decrease;

            record(iter, success);

            if (success && norm(r) < config.tol) {
                result.stop = ScgStop::kGradientTolerance;
                break;
            }
            if (lambda > config.lambda_max) {
                result.stop = ScgStop::kLambdaStall;
                break;
            }
        }
    }
    result.loss = loss;
    result.grad_norm = norm(grad);
    return result;
}

// ---------------------------------------------------------------------------
// Optimizer coordinates
// ---------------------------------------------------------------------------

FeatureFrame identity_frame(std::size_t dim) {
    FeatureFrame frame{std::vector<double>(dim, 0.0), std::vector<double>(dim * dim, 0.0)};
    for (std::size_t f = 0; f < dim; ++f) frame.factor[f * dim + f] = 1.0;
    return frame;
}

FeatureFrame feature_frame(const Model& model, const LabeledDataset& data, std::size_t threads) {
    if (data.empty()) throw EmptyDatasetError("feature frame: dataset is empty");
    const std::size_t dim = model.feature_dim();
    const std::size_t n = data.size();
    const std::size_t chunk = DatasetObjective::kChunkSize;
    const std::size_t chunks = (n + chunk - 1) / chunk;
    std::vector<std::vector<double>> features(n);
    parallel_for_chunks(chunks, threads, [&](std::size_t c) {
        const std::size_t end = std::min(n, (c + 1) * chunk);
        for (std::size_t s = c * chunk; s < end; ++s) {
            features[s] = extract_features(model, data.images[s]);
        }
    });

    FeatureFrame frame{std::vector<double>(dim, 0.0), std::vector<double>(dim * dim, 0.0)};
    std::vector<double>& mean = frame.mean;
    for (const auto& x : features) {
        for (std::size_t f = 0; f < dim; ++f) mean[f] += x[f];
    }
    for (double& m : mean) m /= static_cast<double>(n);

    // Lower triangle of the covariance, accumulated in sample order.
    std::vector<double> cov(dim * dim, 0.0);
    std::vector<double> centered(dim);
    for (const auto& x : features) {
        for (std::size_t f = 0; f < dim; ++f) centered[f] = x[f] - mean[f];
        for (std::size_t i = 0; i < dim; ++i) {
            double* row = cov.data() + i * dim;
            for (std::size_t j = 0; j <= i; ++j) row[j] += centered[i] * centered[j];
        }
    }
    double trace = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j <= i; ++j) cov[i * dim + j] /= static_cast<double>(n);
        trace += cov[i * dim + i];
    }
    const double ridge = trace > 0.0 ? 1e-10 * trace / static_cast<double>(dim) : 1.0;

    std::vector<double>& l = frame.factor;
    for (std::size_t j = 0; j < dim; ++j) {
        double d = cov[j * dim + j] + ridge;
        for (std::size_t k = 0; k < j; ++k) d -= l[j * dim + k] * l[j * dim + k];
        l[j * dim + j] = std::sqrt(std::max(d, ridge));
        for (std::size_t i = j + 1; i < dim; ++i) {
            double v = cov[i * dim + j];
            for (std::size_t k = 0; k < j; ++k) v -= l[i * dim + k] * l[j * dim + k];
            l[i * dim + j] = v / l[j * dim + j];
        }
    }
    return frame;
}

OptimizerCoordinates::OptimizerCoordinates(Objective& inner, const Model& model,
                                           double kernel_scale, FeatureFrame frame)
    : inner_(inner),
      weights_(model.projection_parameter_count()),
      classes_(model.num_classes()),
      dim_(model.feature_dim()),
      kernel_scale_(kernel_scale),
      frame_(std::move(frame)),
      buffer_(model.trainable_parameter_count()) {
    if (frame_.mean.size() != dim_ || frame_.factor.size() != dim_ * dim_) {
        throw ShapeError("feature frame does not match the model's feature dimension");
    }
}

std::vector<double> OptimizerCoordinates::to_model(std::span<const double> q) const {
    std::vector<double> p(q.begin(), q.end());
    for (std::size_t k = 0; k < weights_; ++k) p[k] = q[k] * kernel_scale_;
    const double* l = frame_.factor.data();
    const std::size_t bias = weights_ + classes_ * dim_;
    for (std::size_t c = 0; c < classes_; ++c) {
        // Row w of W solves w·L = v, i.e. L'·w' = v'; back substitution.
        const double* v = q.data() + weights_ + c * dim_;
        double* w = p.data() + weights_ + c * dim_;
        for (std::size_t f = dim_; f-- > 0;) {
            double sum = v[f];
            for (std::size_t g = f + 1; g < dim_; ++g) sum -= l[g * dim_ + f] * w[g];
            w[f] = sum / l[f * dim_ + f];
        }
        double shift = 0.0;
        for (std::size_t f = 0; f < dim_; ++f) shift += w[f] * frame_.mean[f];
        p[bias + c] = q[bias + c] - shift;
    }
    return p;
}

std::vector<double> OptimizerCoordinates::from_model(std::span<const double> p) const {
    std::vector<double> q(p.begin(), p.end());
    for (std::size_t k = 0; k < weights_; ++k) q[k] = p[k] / kernel_scale_;
    const double* l = frame_.factor.data();
    const std::size_t bias = weights_ + classes_ * dim_;
    for (std::size_t c = 0; c < classes_; ++c) {
        const double* w = p.data() + weights_ + c * dim_;
        double* v = q.data() + weights_ + c * dim_;
        double shift = 0.0;
        for (std::size_t g = 0; g < dim_; ++g) {
            double sum = 0.0;
            for (std::size_t f = g; f < dim_; ++f) sum += w[f] * l[f * dim_ + g];
            v[g] = sum;
            shift += w[g] * frame_.mean[g];
        }
        q[bias + c] = p[bias + c] + shift;
    }
    return q;
}

double OptimizerCoordinates::value(std::span<const double> q) { return inner_.value(to_model(q)); }

double OptimizerCoordinates::value_and_gradient(std::span<const double> q, std::span<double> grad) {
    const double loss = inner_.value_and_gradient(to_model(q), buffer_);
    std::copy(buffer_.begin(), buffer_.end(), grad.begin());
    for (std::size_t k = 0; k < weights_; ++k) grad[k] = buffer_[k] * kernel_scale_;
    const double* l = frame_.factor.data();
    const std::size_t bias = weights_ + classes_ * dim_;
    std::vector<double> r(dim_);
    for (std::size_t c = 0; c < classes_; ++c) {
        // d/dV = (dW − db·mu')·L⁻ᵀ: forward substitution with L per row.
        const double gb = buffer_[bias + c];
        for (std::size_t f = 0; f < dim_; ++f) {
            r[f] = buffer_[weights_ + c * dim_ + f] - gb * frame_.mean[f];
        }
        double* gv = grad.data() + weights_ + c * dim_;
        for (std::size_t f = 0; f < dim_; ++f) {
            double sum = r[f];
            for (std::size_t g = 0; g < f; ++g) sum -= l[f * dim_ + g] * gv[g];
            gv[f] = sum / l[f * dim_ + f];
        }
    }
    return loss;
}

TrainResult scg_train(const Model& model, const LabeledDataset& dataset, const ScgConfig& config,
                      std::size_t threads) {
    if (!(config.kernel_scale > 0.0) || !std::isfinite(config.kernel_scale)) {
        throw InvalidParameterError("kernel_scale must be positive and finite");
    }
    DatasetObjective objective(model, dataset, threads);
    OptimizerCoordinates coords(objective, model, config.kernel_scale,
                                config.whiten_features ? feature_frame(model, dataset, threads)
                                                       : identity_frame(model.feature_dim()));
    ScgResult scg = scg_minimize(coords, coords.from_model(to_vector(model)), config);
    scg.params = coords.to_model(scg.params);
    Model trained = from_vector(model, scg.params);
    return {std::move(trained), std::move(scg)};
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

double error_rate_percent(std::size_t misclassified, std::size_t total) {
    if (total == 0) throw EmptyDatasetError("cannot compute an error rate over zero samples");
    return 100.0 * static_cast<double>(misclassified) / static_cast<double>(total);
}

Evaluation evaluate(const Model& model, const LabeledDataset& dataset, std::size_t threads) {
    if (dataset.empty()) throw EmptyDatasetError("evaluation set is empty");
    dataset.validate(model.num_classes());
    std::vector<std::size_t> predictions(dataset.size());
    const std::size_t chunk = DatasetObjective::kChunkSize;
    const std::size_t chunks = (dataset.size() + chunk - 1) / chunk;
    parallel_for_chunks(chunks, threads, [&](std::size_t c) {
        const std::size_t end = std::min(dataset.size(), (c + 1) * chunk);
        for (std::size_t s = c * chunk; s < end; ++s) {
            predictions[s] = predict(model, dataset.images[s]);
        }
    });

    Evaluation eval;
    eval.total = dataset.size();
    eval.confusion.assign(model.num_classes(), std::vector<std::size_t>(model.num_classes(), 0));
    for (std::size_t s = 0; s < dataset.size(); ++s) {
        ++eval.confusion[dataset.labels[s]][predictions[s]];
        if (predictions[s] != dataset.labels[s]) ++eval.misclassified;
    }
    eval.error_rate = error_rate_percent(eval.misclassified, eval.total);
    return eval;
}

}  // namespace larp
