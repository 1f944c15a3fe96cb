#pragma once

#include "maskforge/raster.hpp"

#include <map>
#include <vector>

namespace maskforge {

struct Region {
    int id = 0;
    BinaryMask mask;
    Box box;
    long long box_area = 0;
    long long mask_area = 0;
    /// Below the noise floor; still takes part in merging.
    bool trivial = false;
};

struct RegionSet {
    LabelMask labels;
    std::vector<Region> regions;
};

struct MergeConfig {
    /// Occupancy threshold.
    double mu = 0.5;
    /// Regions smaller than this many pixels are flagged trivial.
    long long min_region_px = 4;

    void validate() const;
};

/// 8-connected split of one class mask into regions with boxes and areas.
RegionSet split(const BinaryMask& class_mask, long long min_region_px = 4);

/// Region merging in one pass over region pairs (i < j). Each pair is tested
/// on the original regions' boxes and areas; a passing pair joins the two
/// regions' groups, so merging is transitive. Returns groups as sorted lists
/// of indices into rs.regions, ordered by smallest member.
std::vector<std::vector<int>> merge_groups(const RegionSet& rs, const MergeConfig& cfg);

/// One mask per merged group, in merge_groups order.
std::vector<BinaryMask> merge(const RegionSet& rs, const MergeConfig& cfg);

struct StmTargets {
    /// Merged regions to prompt.
    std::vector<BinaryMask> targets;
    /// Isolated trivial regions, kept as-is.
    std::vector<BinaryMask> passthrough;
};

/// Split-then-merge per class label (labels >= 1). Classes with no pixels are omitted.
std::map<int, StmTargets> stm_refine_inputs(const LabelMask& semantic, const MergeConfig& cfg);

} // namespace maskforge
