#include "larp/lrpe.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace larp {
namespace {

std::size_t checked_side(const ProjectionKernel& kernel) {
    const std::size_t side = exact_sqrt(kernel.support);
    if (side == 0) {
        throw ConfigError("kernel support " + std::to_string(kernel.support) +
                          " is not a perfect square");
    }
    if (side % 2 == 0) {
        throw ConfigError("kernel side " + std::to_string(side) + " is even");
    }
    if (kernel.coefficients.size() != kernel.support) {
        throw ConfigError("kernel has " + std::to_string(kernel.coefficients.size()) +
                          " coefficients for support " + std::to_string(kernel.support));
    }
    return side;
}

void check_fits(const FeatureMap& input, std::size_t side) {
    if (input.height() < side || input.width() < side) {
        throw ShapeError("projection: " + std::to_string(input.height()) + "x" +
                         std::to_string(input.width()) + " map is smaller than the " +
                         std::to_string(side) + "x" + std::to_string(side) + " kernel");
    }
}

}  // namespace

std::vector<double> DenseMatrix::multiply(std::span<const double> x) const {
    if (x.size() != cols) throw ShapeError("dense matrix: vector length mismatch");
    std::vector<double> y(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = entries.data() + r * cols;
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) sum += row[c] * x[c];
        y[r] = sum;
    }
    return y;
}

ProjectionKernel kernel_from_noise(const KernelDistribution& dist, std::vector<double> noise) {
    ProjectionKernel kernel;
    kernel.support = noise.size();
    if (exact_sqrt(kernel.support) == 0) {
        throw ConfigError("kernel support " + std::to_string(kernel.support) +
                          " is not a perfect square");
    }
    kernel.noise = std::move(noise);
    return refresh_coefficients(std::move(kernel), dist);
}

ProjectionKernel sample_kernel(const KernelDistribution& dist, std::size_t support, Rng& rng) {
    if (exact_sqrt(support) == 0) {
        throw ConfigError("kernel support " + std::to_string(support) +
                          " is not a perfect square");
    }
    std::vector<double> noise(support);
    for (double& u : noise) u = rng.uniform();
    return kernel_from_noise(dist, std::move(noise));
}

ProjectionKernel refresh_coefficients(ProjectionKernel kernel, const KernelDistribution& dist) {
    derive_bounds(dist);  // rejects non-finite parameters
    const double halfwidth = std::exp(dist.log_halfwidth);
    kernel.coefficients.resize(kernel.noise.size());
    for (std::size_t t = 0; t < kernel.noise.size(); ++t) {
        // Same value as a + (b - a)·u, written around the midpoint so that a
        // collapsed half-width returns the midpoint exactly.
        kernel.coefficients[t] = dist.midpoint + halfwidth * (2.0 * kernel.noise[t] - 1.0);
    }
    return kernel;
}

// The input is copied into a zero-bordered buffer of stride width + 2·radius.
// Output row y, column x then lives at flat index y·stride + x and tap (dy, dx)
// reads the buffer at that index plus dy·stride + dx, so every tap is a single
// long loop. Columns x >= width of the flat output are scratch.
struct PaddedMap {
    std::size_t stride;
    std::vector<double> values;
};

PaddedMap pad(const FeatureMap& input, std::size_t radius) {
    const std::size_t stride = input.width() + 2 * radius;
    PaddedMap padded{stride, std::vector<double>((input.height() + 2 * radius) * stride, 0.0)};
    for (std::size_t y = 0; y < input.height(); ++y) {
        const double* src = input.row(y);
        std::copy(src, src + input.width(),
                  padded.values.data() + (y + radius) * stride + radius);
    }
    return padded;
}

// out[j] = Σ_t k[t]·base[j + offset(t)], taps summed in row-major order.
template <std::size_t Side>
void accumulate_taps(const double* k, const double* base, std::size_t stride, std::size_t span,
                     double* out) {
    std::size_t offsets[Side * Side];
    for (std::size_t dy = 0; dy < Side; ++dy) {
        for (std::size_t dx = 0; dx < Side; ++dx) offsets[dy * Side + dx] = dy * stride + dx;
    }
    for (std::size_t j = 0; j < span; ++j) {
        double acc = 0.0;
#pragma GCC unroll 25
        for (std::size_t t = 0; t < Side * Side; ++t) acc += k[t] * base[j + offsets[t]];
        out[j] = acc;
    }
}

// out[j] += Σ_dx k[dx]·src[j + dx], one kernel row at a time.
template <std::size_t Side>
void accumulate_row(const double* k, const double* src, std::size_t span, double* out) {
    for (std::size_t j = 0; j < span; ++j) {
        double acc = out[j];
#pragma GCC unroll 5
        for (std::size_t dx = 0; dx < Side; ++dx) acc += k[dx] * src[j + dx];
        out[j] = acc;
    }
}

FeatureMap project(const FeatureMap& input, const ProjectionKernel& kernel) {
    const std::size_t side = checked_side(kernel);
    check_fits(input, side);
    const std::size_t height = input.height();
    const std::size_t width = input.width();
    const PaddedMap padded = pad(input, side / 2);
    const std::size_t stride = padded.stride;
    // Last flat index whose taps stay inside the buffer, plus one.
    const std::size_t span = (height - 1) * stride + width;

    std::vector<double> flat(span, 0.0);
    double* out = flat.data();
    const double* base = padded.values.data();
    if (side == 3) {
        accumulate_taps<3>(kernel.coefficients.data(), base, stride, span, out);
    } else {
        // One pass per kernel row keeps the output in registers across that row's taps.
        for (std::size_t dy = 0; dy < side; ++dy) {
            const double* k = kernel.coefficients.data() + dy * side;
            const double* src = base + dy * stride;
            if (side == 5) {
                accumulate_row<5>(k, src, span, out);
            } else {
                for (std::size_t j = 0; j < span; ++j) {
                    double acc = out[j];
                    for (std::size_t dx = 0; dx < side; ++dx) acc += k[dx] * src[j + dx];
                    out[j] = acc;
                }
            }
        }
    }

    FeatureMap output(height, width);
    for (std::size_t y = 0; y < height; ++y) {
        std::copy(out + y * stride, out + y * stride + width, output.row(y));
    }
    return output;
}

ProjectGradients project_backward(const FeatureMap& input, const ProjectionKernel& kernel,
                                  const FeatureMap& upstream, bool want_input_grad) {
    const std::size_t side = checked_side(kernel);
    check_fits(input, side);
    require_same_shape(input, upstream, "projection backward");
    const std::size_t height = input.height();
    const std::size_t width = input.width();
    const std::size_t radius = side / 2;
    const PaddedMap padded = pad(input, radius);
    const std::size_t stride = padded.stride;
    const std::size_t span = (height - 1) * stride + width;

    // Upstream gradient in the flat output layout, zero in the scratch columns.
    std::vector<double> g(span, 0.0);
    for (std::size_t y = 0; y < height; ++y) {
        const double* src = upstream.row(y);
        std::copy(src, src + width, g.data() + y * stride);
    }

    ProjectGradients grads;
    grads.coefficients.assign(kernel.support, 0.0);
    std::vector<double> gin_padded(want_input_grad ? padded.values.size() : 0, 0.0);

    constexpr std::size_t kLanes = 8;
    const std::size_t body = span - span % kLanes;
    for (std::size_t dy = 0; dy < side; ++dy) {
        for (std::size_t dx = 0; dx < side; ++dx) {
            const std::size_t tap = dy * side + dx;
            const std::size_t offset = dy * stride + dx;
            const double* src = padded.values.data() + offset;

            // Fixed lane split keeps the reduction order independent of the
            // vector width the compiler picks.
            double lanes[kLanes] = {};
            for (std::size_t j = 0; j < body; j += kLanes) {
                for (std::size_t l = 0; l < kLanes; ++l) lanes[l] += g[j + l] * src[j + l];
            }
            double sum = 0.0;
            for (double lane : lanes) sum += lane;
            for (std::size_t j = body; j < span; ++j) sum += g[j] * src[j];
            grads.coefficients[tap] = sum;

            if (want_input_grad) {
                const double k = kernel.coefficients[tap];
                double* dst = gin_padded.data() + offset;
                for (std::size_t j = 0; j < span; ++j) dst[j] += k * g[j];
            }
        }
    }

    if (want_input_grad) {
        grads.input = FeatureMap(height, width);
        for (std::size_t y = 0; y < height; ++y) {
            const double* src = gin_padded.data() + (y + radius) * stride + radius;
            std::copy(src, src + width, grads.input.row(y));
        }
    }
    return grads;
}

DenseMatrix dense_oracle(const ProjectionKernel& kernel, std::size_t height, std::size_t width,
                         std::size_t entry_cap) {
    const std::size_t side = checked_side(kernel);
    if (height < side || width < side) {
        throw ShapeError("dense oracle: map is smaller than the kernel");
    }
    const std::size_t n = height * width;
    if (n != 0 && n > entry_cap / n) {
        throw OracleTooLargeError("dense oracle: " + std::to_string(n) + "x" + std::to_string(n) +
                                  " matrix exceeds the cap of " + std::to_string(entry_cap) +
                                  " entries");
    }
    const auto radius = static_cast<std::ptrdiff_t>(side / 2);
    const auto h = static_cast<std::ptrdiff_t>(height);
    const auto w = static_cast<std::ptrdiff_t>(width);

    DenseMatrix m{n, n, std::vector<double>(n * n, 0.0)};
    for (std::ptrdiff_t y = 0; y < h; ++y) {
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            const auto row = static_cast<std::size_t>(y * w + x);
            for (std::ptrdiff_t dy = 0; dy < static_cast<std::ptrdiff_t>(side); ++dy) {
                for (std::ptrdiff_t dx = 0; dx < static_cast<std::ptrdiff_t>(side); ++dx) {
                    const std::ptrdiff_t iy = y + dy - radius;
                    const std::ptrdiff_t ix = x + dx - radius;
                    if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                    const auto col = static_cast<std::size_t>(iy * w + ix);
                    m.entries[row * n + col] = kernel.coefficients[static_cast<std::size_t>(dy) * side +
                                                                   static_cast<std::size_t>(dx)];
                }
            }
        }
    }
    return m;
}

}  // namespace larp
