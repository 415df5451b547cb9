#pragma once

#include <compare>
#include <cstdint>

namespace fluoro {

// Patch position on the slide's patch grid (units of patches, not pixels).
struct GridCoord {
    std::uint32_t row = 0;
    std::uint32_t col = 0;

    friend auto operator<=>(const GridCoord&, const GridCoord&) = default;
};

}  // namespace fluoro
