#pragma once

#include "maskforge/raster.hpp"

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace maskforge {

/// Uncompressed COCO-style run lengths: column-major, first run is background.
struct RleMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint32_t> counts;

    friend bool operator==(const RleMask&, const RleMask&) = default;
};

RleMask rle_encode(const BinaryMask& mask);

/// Throws FormatError when counts do not sum to width*height.
BinaryMask rle_decode(const RleMask& rle);

/// {"size": [height, width], "counts": [...]}
nlohmann::json rle_to_json(const RleMask& rle);
RleMask rle_from_json(const nlohmann::json& j);

} // namespace maskforge
