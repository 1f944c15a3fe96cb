#include "maskforge/raster.hpp"

namespace maskforge {

namespace {

template <typename Op>
BinaryMask combine(const BinaryMask& a, const BinaryMask& b, Op op) {
    require_same_dims(a, b, "mask combine");
    BinaryMask out(a.width(), a.height());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = op(a[i] != 0, b[i] != 0) ? 1 : 0;
    }
    return out;
}

} // namespace

BinaryMask complement(const BinaryMask& mask) {
    BinaryMask out(mask.width(), mask.height());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        out[i] = mask[i] != 0 ? 0 : 1;
    }
    return out;
}

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
    return combine(a, b, [](bool x, bool y) { return x && y; });
}

BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b) {
    return combine(a, b, [](bool x, bool y) { return x || y; });
}

BinaryMask mask_and_not(const BinaryMask& a, const BinaryMask& b) {
    return combine(a, b, [](bool x, bool y) { return x && !y; });
}

BinaryMask box_mask(const Box& box, int width, int height) {
    BinaryMask out(width, height);
    for (int y = std::max(0, box.y0); y < std::min(height, box.y1); ++y) {
        for (int x = std::max(0, box.x0); x < std::min(width, box.x1); ++x) {
            out(x, y) = 1;
        }
    }
    return out;
}

void require_same_dims(const BinaryMask& a, const BinaryMask& b, const char* what) {
    if (!a.same_dims(b)) {
        throw DimensionError(std::string(what) + ": dimension mismatch " + std::to_string(a.width()) + "x" +
                             std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                             std::to_string(b.height()));
    }
}

} // namespace maskforge
