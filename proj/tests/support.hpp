#pragma once

// Slow reference implementations used only by the tests. They are written
// from the operator definitions directly and share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "larp/core.hpp"

namespace larp::test {

inline FeatureMap random_map(std::mt19937_64& gen, std::size_t h, std::size_t w, double lo = -1.0,
                             double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    FeatureMap map(h, w);
    for (double& v : map.values()) v = dist(gen);
    return map;
}

inline ProjectionKernel kernel_with(std::vector<double> coefficients) {
    ProjectionKernel k;
    k.support = coefficients.size();
    k.noise.assign(coefficients.size(), 0.5);
    k.coefficients = std::move(coefficients);
    return k;
}

inline ProjectionKernel delta_kernel(std::size_t support) {
    std::vector<double> c(support, 0.0);
    c[support / 2] = 1.0;
    return kernel_with(std::move(c));
}

// Direct zero-padded sliding window: out(y,x) = Σ k(dy,dx)·in(y+dy−r, x+dx−r).
inline FeatureMap naive_project(const FeatureMap& in, const std::vector<double>& k) {
    const auto side = static_cast<long>(std::lround(std::sqrt(static_cast<double>(k.size()))));
    const long r = side / 2;
    const long h = static_cast<long>(in.height());
    const long w = static_cast<long>(in.width());
    FeatureMap out(in.height(), in.width());
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            double acc = 0.0;
            for (long dy = 0; dy < side; ++dy) {
                for (long dx = 0; dx < side; ++dx) {
                    const long sy = y + dy - r;
                    const long sx = x + dx - r;
                    if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                    acc += k[static_cast<std::size_t>(dy * side + dx)] *
                           in.at(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
                }
            }
            out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = acc;
        }
    }
    return out;
}

// Clamped window values at (y, x) in row-major scan order.
inline std::vector<double> window_values(const FeatureMap& in, std::size_t y, std::size_t x,
                                         std::size_t window) {
    const long r = static_cast<long>(window / 2);
    std::vector<double> values;
    for (long dy = -r; dy <= r; ++dy) {
        for (long dx = -r; dx <= r; ++dx) {
            const long sy = std::clamp<long>(static_cast<long>(y) + dy, 0, static_cast<long>(in.height()) - 1);
            const long sx = std::clamp<long>(static_cast<long>(x) + dx, 0, static_cast<long>(in.width()) - 1);
            values.push_back(in.at(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)));
        }
    }
    return values;
}

inline FeatureMap sorted_median(const FeatureMap& in, std::size_t window) {
    FeatureMap out(in.height(), in.width());
    for (std::size_t y = 0; y < in.height(); ++y) {
        for (std::size_t x = 0; x < in.width(); ++x) {
            auto v = window_values(in, y, x, window);
            std::sort(v.begin(), v.end());
            out.at(y, x) = v[v.size() / 2];
        }
    }
    return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double max_abs(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::fabs(v));
    return m;
}

inline double rel_err(double a, double b, double floor = 0.0) {
    const double scale = std::max({std::fabs(a), std::fabs(b), floor});
    return scale == 0.0 ? 0.0 : std::fabs(a - b) / scale;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Per-test scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("larp_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace larp::test
