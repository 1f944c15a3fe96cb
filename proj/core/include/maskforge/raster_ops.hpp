#pragma once

#include "maskforge/raster.hpp"

#include <cstdint>
#include <utility>

namespace maskforge {

enum class BorderMode {
    /// Pixels outside the image count as background (distance to them is finite).
    background,
    /// Only in-image background pixels count.
    ignore,
};

/// Exact Euclidean distance from each foreground pixel to the nearest
/// background pixel; background pixels map to 0. Linear-time separable
/// squared-distance transform. Pixels with no reachable background hold
/// +infinity (only possible with BorderMode::ignore).
DistanceMap distance_transform(const BinaryMask& mask, BorderMode border = BorderMode::background);

/// Squared distances as exact integers stored in doubles.
RealRaster squared_distance_transform(const BinaryMask& mask, BorderMode border = BorderMode::background);

enum class Connectivity { four = 4, eight = 8 };

struct Components {
    LabelMask labels;
    int count = 0;
};

/// Labels 1..count in raster-scan first-touch order.
Components connected_components(const BinaryMask& mask, Connectivity connectivity = Connectivity::eight);

/// Smallest box containing all foreground. Throws EmptyMaskError on an empty mask.
Box tight_box(const BinaryMask& mask);

enum class MorphOp { erode, dilate };

/// Euclidean-disk structuring element of the given radius (inclusive).
/// erode(m, r) = {p : dt(m)[p] > r} with the image border acting as background.
BinaryMask morphology(const BinaryMask& mask, MorphOp op, double radius);

inline BinaryMask erode(const BinaryMask& mask, double radius) {
    return morphology(mask, MorphOp::erode, radius);
}
inline BinaryMask dilate(const BinaryMask& mask, double radius) {
    return morphology(mask, MorphOp::dilate, radius);
}

enum class ResizeMode { bilinear, nearest };

/// Resizes a real raster.
///
/// Bilinear samples at half-pixel centres (align_corners = false):
/// src = (dst + 0.5) * in / out - 0.5, clamped to the edge.
/// Nearest takes src = floor(dst * in / out).
RealRaster resize(const RealRaster& src, int out_width, int out_height, ResizeMode mode);

/// Nearest resize of a binary mask using the same index rule as `resize`.
BinaryMask resize_nearest(const BinaryMask& src, int out_width, int out_height);

RealRaster to_real(const BinaryMask& mask);
/// value > threshold -> 1.
BinaryMask threshold_above(const RealRaster& raster, double threshold);

} // namespace maskforge
