#include "larp/nonl.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace larp {
namespace {

void check_window(std::size_t window) {
    if (window == 0 || window % 2 == 0) {
        throw ConfigError("median window " + std::to_string(window) + " must be odd and positive");
    }
}

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
    if (i < 0) return 0;
    if (static_cast<std::size_t>(i) >= n) return n - 1;
    return static_cast<std::size_t>(i);
}

inline void sort2(double& a, double& b) {
    const double lo = std::min(a, b);
    const double hi = std::max(a, b);
    a = lo;
    b = hi;
}

// 19-exchange median-of-9 network.
inline double median9(double p0, double p1, double p2, double p3, double p4, double p5,
                      double p6, double p7, double p8) {
    sort2(p1, p2); sort2(p4, p5); sort2(p7, p8);
    sort2(p0, p1); sort2(p3, p4); sort2(p6, p7);
    sort2(p1, p2); sort2(p4, p5); sort2(p7, p8);
    sort2(p0, p3); sort2(p5, p8); sort2(p4, p7);
    sort2(p3, p6); sort2(p1, p4); sort2(p2, p5);
    sort2(p4, p7); sort2(p4, p2); sort2(p6, p4);
    sort2(p4, p2);
    return p4;
}

FeatureMap smr3(const FeatureMap& input) {
    const std::size_t h = input.height();
    const std::size_t w = input.width();
    FeatureMap out(h, w);
    for (std::size_t y = 0; y < h; ++y) {
        const double* a = input.row(y == 0 ? 0 : y - 1);
        const double* b = input.row(y);
        const double* c = input.row(y + 1 < h ? y + 1 : h - 1);
        double* o = out.row(y);
        auto at = [&](std::size_t x, std::size_t l, std::size_t r) {
            o[x] = median9(a[l], a[x], a[r], b[l], b[x], b[r], c[l], c[x], c[r]);
        };
        if (w == 1) {
            at(0, 0, 0);
            continue;
        }
        at(0, 0, 1);
        for (std::size_t x = 1; x + 1 < w; ++x) {
            o[x] = median9(a[x - 1], a[x], a[x + 1], b[x - 1], b[x], b[x + 1], c[x - 1], c[x],
                           c[x + 1]);
        }
        at(w - 1, w - 2, w - 1);
    }
    return out;
}

FeatureMap smr_general(const FeatureMap& input, std::size_t window) {
    const std::size_t h = input.height();
    const std::size_t w = input.width();
    const auto radius = static_cast<std::ptrdiff_t>(window / 2);
    const std::size_t mid = window * window / 2;
    std::vector<double> buffer(window * window);
    FeatureMap out(h, w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            std::size_t n = 0;
            for (std::ptrdiff_t dy = -radius; dy <= radius; ++dy) {
                const double* r = input.row(clamp_index(static_cast<std::ptrdiff_t>(y) + dy, h));
                for (std::ptrdiff_t dx = -radius; dx <= radius; ++dx) {
                    buffer[n++] = r[clamp_index(static_cast<std::ptrdiff_t>(x) + dx, w)];
                }
            }
            std::nth_element(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(mid),
                             buffer.end());
            out.at(y, x) = buffer[mid];
        }
    }
    return out;
}

// Window 3: the first of the nine clamped candidates, in scan order, that
// equals the median. Candidates are tested last-to-first so that each test is
// a select and the loop over x vectorizes.
void sources3(const FeatureMap& input, const FeatureMap& median, std::vector<std::uint32_t>& out) {
    const std::size_t h = input.height();
    const std::size_t w = input.width();
    for (std::size_t y = 0; y < h; ++y) {
        const std::size_t rows[3] = {y == 0 ? 0 : y - 1, y, y + 1 < h ? y + 1 : h - 1};
        const double* m = median.row(y);
        std::uint32_t* dst = out.data() + y * w;
        auto scalar = [&](std::size_t x) {
            const std::size_t cols[3] = {x == 0 ? 0 : x - 1, x, x + 1 < w ? x + 1 : w - 1};
            std::size_t found = y * w + x;  // only kept for NaN input
            for (std::size_t k = 9; k-- > 0;) {
                const std::size_t r = rows[k / 3];
                const std::size_t c = cols[k % 3];
                if (input.at(r, c) == m[x]) found = r * w + c;
            }
            dst[x] = static_cast<std::uint32_t>(found);
        };
        scalar(0);
        if (w == 1) continue;
        const double* a = input.row(rows[0]);
        const double* b = input.row(rows[1]);
        const double* c = input.row(rows[2]);
        const std::uint64_t ra = rows[0] * w;
        const std::uint64_t rb = rows[1] * w;
        const std::uint64_t rc = rows[2] * w;
        for (std::size_t x = 1; x + 1 < w; ++x) {
            const double t = m[x];
            std::uint64_t f = y * w + x;
            f = c[x + 1] == t ? rc + x + 1 : f;
            f = c[x] == t ? rc + x : f;
            f = c[x - 1] == t ? rc + x - 1 : f;
            f = b[x + 1] == t ? rb + x + 1 : f;
            f = b[x] == t ? rb + x : f;
            f = b[x - 1] == t ? rb + x - 1 : f;
            f = a[x + 1] == t ? ra + x + 1 : f;
            f = a[x] == t ? ra + x : f;
            f = a[x - 1] == t ? ra + x - 1 : f;
            dst[x] = static_cast<std::uint32_t>(f);
        }
        scalar(w - 1);
    }
}

std::vector<std::uint32_t> sources_for(const FeatureMap& input, const FeatureMap& median,
                                       std::size_t window) {
    const std::size_t h = input.height();
    const std::size_t w = input.width();
    std::vector<std::uint32_t> sources(h * w);
    if (window == 3) {
        sources3(input, median, sources);
        return sources;
    }
    const auto radius = static_cast<std::ptrdiff_t>(window / 2);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double target = median.at(y, x);
            std::size_t found = h * w;
            for (std::ptrdiff_t dy = -radius; dy <= radius && found == h * w; ++dy) {
                const std::size_t sy = clamp_index(static_cast<std::ptrdiff_t>(y) + dy, h);
                for (std::ptrdiff_t dx = -radius; dx <= radius; ++dx) {
                    const std::size_t sx = clamp_index(static_cast<std::ptrdiff_t>(x) + dx, w);
                    if (input.at(sy, sx) == target) {
                        found = sy * w + sx;
                        break;
                    }
                }
            }
            sources[y * w + x] = static_cast<std::uint32_t>(found == h * w ? y * w + x : found);
        }
    }
    return sources;
}

}  // namespace

FeatureMap avr(const FeatureMap& input) {
    FeatureMap out(input.height(), input.width());
    auto src = input.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::fabs(src[i]);
    return out;
}

FeatureMap avr_backward(const FeatureMap& input, const FeatureMap& upstream) {
    require_same_shape(input, upstream, "avr backward");
    FeatureMap out(input.height(), input.width());
    auto x = input.values();
    auto g = upstream.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < x.size(); ++i) {
        dst[i] = x[i] > 0.0 ? g[i] : (x[i] < 0.0 ? -g[i] : 0.0);
    }
    return out;
}

FeatureMap smr(const FeatureMap& input, std::size_t window) {
    check_window(window);
    if (input.empty()) throw ShapeError("median: empty map");
    if (window == 3) return smr3(input);
    return smr_general(input, window);
}

std::vector<std::uint32_t> smr_sources(const FeatureMap& input, std::size_t window) {
    return sources_for(input, smr(input, window), window);
}

FeatureMap smr_backward(const FeatureMap& input, const FeatureMap& upstream, std::size_t window) {
    return smr_backward(input, smr(input, window), upstream, window);
}

FeatureMap smr_backward(const FeatureMap& input, const FeatureMap& median,
                        const FeatureMap& upstream, std::size_t window) {
    check_window(window);
    require_same_shape(input, upstream, "median backward");
    require_same_shape(input, median, "median backward");
    const auto sources = sources_for(input, median, window);
    FeatureMap grad(input.height(), input.width());
    auto g = upstream.values();
    auto dst = grad.values();
    for (std::size_t i = 0; i < sources.size(); ++i) dst[sources[i]] += g[i];
    return grad;
}

}  // namespace larp
