#include "maskforge/harness/defects.hpp"

#include "maskforge/error.hpp"
#include "maskforge/metrics.hpp"
#include "maskforge/random.hpp"
#include "maskforge/raster_ops.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <vector>

namespace maskforge {

namespace {

void check_range(const IntRange& r, const char* name) {
    if (r.lo < 0 || r.hi < r.lo) {
        throw ConfigError(std::string("defects: ") + name + " must satisfy 0 <= lo <= hi");
    }
}

void perturb_boundary(BinaryMask& m, const BinaryMask& gt, const DefectSpec& spec, Rng& rng) {
    double sx = 0.0;
    double sy = 0.0;
    long long n = 0;
    for (int y = 0; y < gt.height(); ++y) {
        for (int x = 0; x < gt.width(); ++x) {
            if (gt(x, y) != 0) {
                sx += x;
                sy += y;
                ++n;
            }
        }
    }
    const double cx = sx / double(n);
    const double cy = sy / double(n);
    const int segments = spec.boundary_segments;
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    std::vector<int> radius(static_cast<std::size_t>(segments));
    std::vector<bool> grow(static_cast<std::size_t>(segments));
    for (int s = 0; s < segments; ++s) {
        radius[static_cast<std::size_t>(s)] = rng.uniform_int(spec.boundary_noise.lo, spec.boundary_noise.hi);
        grow[static_cast<std::size_t>(s)] = rng.bernoulli(0.5);
    }
    std::map<int, BinaryMask> dilated;
    std::map<int, BinaryMask> eroded;
    for (int s = 0; s < segments; ++s) {
        const int r = radius[static_cast<std::size_t>(s)];
        if (r == 0) {
            continue;
        }
        if (grow[static_cast<std::size_t>(s)] && !dilated.contains(r)) {
            dilated.emplace(r, dilate(gt, r));
        } else if (!grow[static_cast<std::size_t>(s)] && !eroded.contains(r)) {
            eroded.emplace(r, erode(gt, r));
        }
    }
    const double sector = 2.0 * std::numbers::pi / segments;
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            double angle = std::atan2(y - cy, x - cx) - phase;
            angle -= 2.0 * std::numbers::pi * std::floor(angle / (2.0 * std::numbers::pi));
            const int s = std::min(segments - 1, static_cast<int>(angle / sector));
            const int r = radius[static_cast<std::size_t>(s)];
            if (r == 0) {
                continue;
            }
            m(x, y) = grow[static_cast<std::size_t>(s)] ? dilated.at(r)(x, y) : eroded.at(r)(x, y);
        }
    }
}

void stamp(BinaryMask& m, const BinaryMask& gt, int cx, int cy, int r, bool add) {
    for (int y = std::max(0, cy - r); y <= std::min(m.height() - 1, cy + r); ++y) {
        for (int x = std::max(0, cx - r); x <= std::min(m.width() - 1, cx + r); ++x) {
            const int dx = x - cx;
            const int dy = y - cy;
            if (dx * dx + dy * dy > r * r) {
                continue;
            }
            if (add && gt(x, y) == 0) {
                m(x, y) = 1;
            } else if (!add && gt(x, y) != 0) {
                m(x, y) = 0;
            }
        }
    }
}

void add_blobs(BinaryMask& m, const BinaryMask& gt, const BlobSpec& spec, bool false_positive, Rng& rng) {
    const int count = rng.uniform_int(spec.count.lo, spec.count.hi);
    const Box box = tight_box(gt);
    for (int i = 0; i < count; ++i) {
        const int r = rng.uniform_int(spec.radius.lo, spec.radius.hi);
        if (r == 0) {
            continue;
        }
        // False positives land near the object, holes inside it.
        const int margin = false_positive ? 2 * r + 2 : 0;
        std::vector<std::pair<int, int>> sites;
        for (int y = std::max(0, box.y0 - margin); y < std::min(gt.height(), box.y1 + margin); ++y) {
            for (int x = std::max(0, box.x0 - margin); x < std::min(gt.width(), box.x1 + margin); ++x) {
                if ((gt(x, y) != 0) != false_positive) {
                    sites.emplace_back(x, y);
                }
            }
        }
        if (sites.empty()) {
            continue;
        }
        const auto [cx, cy] = sites[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(sites.size()) - 1))];
        stamp(m, gt, cx, cy, r, false_positive);
    }
}

} // namespace

void DefectSpec::validate() const {
    check_range(boundary_noise, "boundary_noise");
    check_range(fp_blobs.count, "fp_blobs.count");
    check_range(fp_blobs.radius, "fp_blobs.radius");
    check_range(fn_holes.count, "fn_holes.count");
    check_range(fn_holes.radius, "fn_holes.radius");
    if (boundary_segments < 1) {
        throw ConfigError("defects: boundary_segments must be >= 1");
    }
    if (!(drop_prob >= 0.0 && drop_prob <= 1.0)) {
        throw ConfigError("defects: drop_prob must lie in [0, 1]");
    }
    if (!(min_iou >= 0.0 && min_iou <= max_iou && max_iou <= 1.0)) {
        throw ConfigError("defects: need 0 <= min_iou <= max_iou <= 1");
    }
    if (max_retries < 1) {
        throw ConfigError("defects: max_retries must be >= 1");
    }
}

bool DefectSpec::is_identity() const {
    return boundary_noise.hi == 0 && fp_blobs.count.hi == 0 && fp_blobs.radius.hi == 0 && fn_holes.count.hi == 0 &&
           fn_holes.radius.hi == 0;
}

std::uint64_t defect_stream(std::string_view image, long long instance) {
    return mix64(hash_string(0x6465666563747321ULL, image), static_cast<std::uint64_t>(instance));
}

BinaryMask simulate_defects(const BinaryMask& gt, const DefectSpec& spec, std::uint64_t stream) {
    spec.validate();
    if (is_empty(gt)) {
        throw EmptyMaskError("simulate_defects: ground-truth mask is empty");
    }
    if (spec.is_identity()) {
        return gt;
    }
    Rng rng(mix64(spec.seed, stream));
    double last = 0.0;
    for (int attempt = 0; attempt < spec.max_retries; ++attempt) {
        BinaryMask m = gt;
        if (spec.boundary_noise.hi > 0) {
            perturb_boundary(m, gt, spec, rng);
        }
        add_blobs(m, gt, spec.fp_blobs, true, rng);
        add_blobs(m, gt, spec.fn_holes, false, rng);
        if (is_empty(m)) {
            continue;
        }
        last = iou(m, gt);
        if (last >= spec.min_iou && last <= spec.max_iou) {
            return m;
        }
    }
    throw SimulationError("simulate_defects: no sample inside IoU window [" + std::to_string(spec.min_iou) + ", " +
                          std::to_string(spec.max_iou) + "] after " + std::to_string(spec.max_retries) +
                          " attempts (last " + std::to_string(last) + ")");
}

bool drop_instance(const DefectSpec& spec, std::uint64_t stream) {
    if (spec.drop_prob <= 0.0) {
        return false;
    }
    Rng rng(mix64(spec.seed ^ 0x64726f70ULL, stream));
    return rng.bernoulli(spec.drop_prob);
}

} // namespace maskforge
