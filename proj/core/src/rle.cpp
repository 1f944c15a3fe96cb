#include "maskforge/rle.hpp"

#include <nlohmann/json.hpp>

namespace maskforge {

RleMask rle_encode(const BinaryMask& mask) {
    RleMask rle{mask.width(), mask.height(), {}};
    std::uint8_t current = 0;
    std::uint32_t run = 0;
    for (int x = 0; x < mask.width(); ++x) {
        for (int y = 0; y < mask.height(); ++y) {
            const std::uint8_t v = mask(x, y) != 0 ? 1 : 0;
            if (v != current) {
                rle.counts.push_back(run);
                run = 0;
                current = v;
            }
            ++run;
        }
    }
    rle.counts.push_back(run);
    return rle;
}

BinaryMask rle_decode(const RleMask& rle) {
    if (rle.width < 0 || rle.height < 0) {
        throw FormatError("rle: negative size");
    }
    const std::uint64_t total = static_cast<std::uint64_t>(rle.width) * static_cast<std::uint64_t>(rle.height);
    std::uint64_t sum = 0;
    for (std::uint32_t c : rle.counts) {
        sum += c;
    }
    if (sum != total) {
        throw FormatError("rle: counts sum to " + std::to_string(sum) + ", expected " + std::to_string(total));
    }
    BinaryMask mask(rle.width, rle.height);
    std::uint64_t pos = 0;
    std::uint8_t value = 0;
    for (std::uint32_t c : rle.counts) {
        for (std::uint32_t k = 0; k < c; ++k, ++pos) {
            if (value != 0) {
                const int x = static_cast<int>(pos / static_cast<std::uint64_t>(rle.height));
                const int y = static_cast<int>(pos % static_cast<std::uint64_t>(rle.height));
                mask(x, y) = 1;
            }
        }
        value ^= 1;
    }
    return mask;
}

nlohmann::json rle_to_json(const RleMask& rle) {
    return {{"size", {rle.height, rle.width}}, {"counts", rle.counts}};
}

RleMask rle_from_json(const nlohmann::json& j) {
    try {
        const auto& size = j.at("size");
        if (!size.is_array() || size.size() != 2) {
            throw FormatError("rle: 'size' must be [height, width]");
        }
        if (!j.at("counts").is_array()) {
            throw FormatError("rle: only uncompressed integer 'counts' are supported");
        }
        RleMask rle;
        rle.height = size[0].get<int>();
        rle.width = size[1].get<int>();
        rle.counts = j.at("counts").get<std::vector<std::uint32_t>>();
        return rle;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("rle: malformed json: ") + e.what());
    }
}

} // namespace maskforge
