#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "larp/core.hpp"

namespace larp {

/// Absolute-value rectification.
FeatureMap avr(const FeatureMap& input);

/// upstream · sign(input), with sign(0) = 0.
FeatureMap avr_backward(const FeatureMap& input, const FeatureMap& upstream);

/// Sliding-window median. Positions outside the map take the value of the
/// nearest edge pixel, so the output has the input's shape.
FeatureMap smr(const FeatureMap& input, std::size_t window = 3);

/// For every output position, the flat index of the input pixel that supplied
/// its median: the first window position in row-major scan order whose value
/// equals the median.
std::vector<std::uint32_t> smr_sources(const FeatureMap& input, std::size_t window = 3);

/// Routes each upstream value to the pixel named by smr_sources.
FeatureMap smr_backward(const FeatureMap& input, const FeatureMap& upstream,
                        std::size_t window = 3);

/// Same as smr_backward, reusing the output of an earlier smr() call.
FeatureMap smr_backward(const FeatureMap& input, const FeatureMap& median,
                        const FeatureMap& upstream, std::size_t window);

}  // namespace larp
