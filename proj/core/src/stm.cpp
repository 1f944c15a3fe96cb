#include "maskforge/stm.hpp"

#include "maskforge/raster_ops.hpp"

#include <numeric>
#include <set>

namespace maskforge {

void MergeConfig::validate() const {
    if (!(mu > 0.0 && mu <= 1.0)) {
        throw ConfigError("merge: mu must lie in (0, 1]");
    }
    if (min_region_px < 0) {
        throw ConfigError("merge: min_region_px must be non-negative");
    }
}

RegionSet split(const BinaryMask& class_mask, long long min_region_px) {
    Components cc = connected_components(class_mask, Connectivity::eight);
    RegionSet rs;
    rs.regions.resize(static_cast<std::size_t>(cc.count));
    const int w = class_mask.width();
    const int h = class_mask.height();
    for (int i = 0; i < cc.count; ++i) {
        Region& r = rs.regions[static_cast<std::size_t>(i)];
        r.id = i + 1;
        r.mask = BinaryMask(w, h);
        r.box = {w, h, -1, -1};
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int label = cc.labels(x, y);
            if (label == 0) {
                continue;
            }
            Region& r = rs.regions[static_cast<std::size_t>(label - 1)];
            r.mask(x, y) = 1;
            ++r.mask_area;
            r.box.x0 = std::min(r.box.x0, x);
            r.box.y0 = std::min(r.box.y0, y);
            r.box.x1 = std::max(r.box.x1, x + 1);
            r.box.y1 = std::max(r.box.y1, y + 1);
        }
    }
    for (Region& r : rs.regions) {
        r.box_area = r.box.area();
        r.trivial = r.mask_area < min_region_px;
    }
    rs.labels = std::move(cc.labels);
    return rs;
}

std::vector<std::vector<int>> merge_groups(const RegionSet& rs, const MergeConfig& cfg) {
    cfg.validate();
    const int n = static_cast<int>(rs.regions.size());
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int i) {
        while (parent[static_cast<std::size_t>(i)] != i) {
            i = parent[static_cast<std::size_t>(i)];
        }
        return i;
    };

    // Every pair is judged on the original regions; merges only relabel.
    for (int i = 0; i < n; ++i) {
        const Region& ri = rs.regions[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < n; ++j) {
            const Region& rj = rs.regions[static_cast<std::size_t>(j)];
            const double merged_area = double(union_box(ri.box, rj.box).area());
            const double box_sum = double(ri.box_area + rj.box_area);
            const double mask_sum = double(ri.mask_area + rj.mask_area);
            if (box_sum > cfg.mu * merged_area && mask_sum > cfg.mu * merged_area) {
                const int gi = find(i);
                const int gj = find(j);
                parent[static_cast<std::size_t>(std::max(gi, gj))] = std::min(gi, gj);
            }
        }
    }

    std::vector<std::vector<int>> groups;
    std::vector<int> slot(static_cast<std::size_t>(n), -1);
    for (int i = 0; i < n; ++i) {
        const int root = find(i);
        if (slot[static_cast<std::size_t>(root)] < 0) {
            slot[static_cast<std::size_t>(root)] = static_cast<int>(groups.size());
            groups.emplace_back();
        }
        groups[static_cast<std::size_t>(slot[static_cast<std::size_t>(root)])].push_back(i);
    }
    return groups;
}

std::vector<BinaryMask> merge(const RegionSet& rs, const MergeConfig& cfg) {
    std::vector<BinaryMask> out;
    for (const auto& group : merge_groups(rs, cfg)) {
        BinaryMask mask = rs.regions[static_cast<std::size_t>(group.front())].mask;
        for (std::size_t k = 1; k < group.size(); ++k) {
            const BinaryMask& part = rs.regions[static_cast<std::size_t>(group[k])].mask;
            for (std::size_t p = 0; p < mask.size(); ++p) {
                mask[p] = static_cast<std::uint8_t>(mask[p] | part[p]);
            }
        }
        out.push_back(std::move(mask));
    }
    return out;
}

std::map<int, StmTargets> stm_refine_inputs(const LabelMask& semantic, const MergeConfig& cfg) {
    cfg.validate();
    std::set<int> classes;
    for (std::int32_t label : semantic.pixels()) {
        if (label < 0) {
            throw FormatError("stm: negative class label");
        }
        if (label > 0) {
            classes.insert(label);
        }
    }
    std::map<int, StmTargets> out;
    for (int cls : classes) {
        BinaryMask class_mask(semantic.width(), semantic.height());
        for (std::size_t i = 0; i < semantic.size(); ++i) {
            class_mask[i] = semantic[i] == cls ? 1 : 0;
        }
        const RegionSet rs = split(class_mask, cfg.min_region_px);
        const auto groups = merge_groups(rs, cfg);
        const auto masks = merge(rs, cfg);
        StmTargets targets;
        for (std::size_t g = 0; g < groups.size(); ++g) {
            const bool isolated_trivial =
                groups[g].size() == 1 && rs.regions[static_cast<std::size_t>(groups[g].front())].trivial;
            (isolated_trivial ? targets.passthrough : targets.targets).push_back(masks[g]);
        }
        out.emplace(cls, std::move(targets));
    }
    return out;
}

} // namespace maskforge
