#pragma once

#include "maskforge/raster.hpp"

#include <cstdint>
#include <string_view>

namespace maskforge {

/// Inclusive integer range.
struct IntRange {
    int lo = 0;
    int hi = 0;
};

struct BlobSpec {
    IntRange count;
    IntRange radius;
};

/// Seeded recipe for turning a ground-truth mask into a plausible coarse one:
/// boundary errors, external false positives and internal holes.
struct DefectSpec {
    std::uint64_t seed = 0;
    /// Per-sector dilate/erode radius.
    IntRange boundary_noise{1, 4};
    /// Angular sectors around the centroid, each perturbed independently.
    int boundary_segments = 8;
    BlobSpec fp_blobs{{0, 2}, {2, 5}};
    BlobSpec fn_holes{{0, 2}, {2, 4}};
    /// Chance that a whole instance is missing from the coarse annotation.
    double drop_prob = 0.0;
    double min_iou = 0.4;
    double max_iou = 0.98;
    int max_retries = 64;

    void validate() const;
    /// True when every range is zero, in which case simulate_defects is the identity.
    bool is_identity() const;
};

/// Stream id for one instance so results do not depend on processing order.
std::uint64_t defect_stream(std::string_view image, long long instance);

/// Applies the defects of `spec` to a non-empty mask, resampling until the
/// result is non-empty with IoU against `gt` inside [min_iou, max_iou].
/// Throws SimulationError when retries run out.
BinaryMask simulate_defects(const BinaryMask& gt, const DefectSpec& spec, std::uint64_t stream = 0);

/// Seeded drop decision for one instance.
bool drop_instance(const DefectSpec& spec, std::uint64_t stream);

} // namespace maskforge
