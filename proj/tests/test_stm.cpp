#include "support.hpp"

#include "maskforge/error.hpp"
#include "maskforge/stm.hpp"

#include <doctest.h>

using namespace maskforge;
using maskforge::testing::rect_mask;

namespace {

using Groups = std::vector<std::vector<int>>;

BinaryMask diagonal(int w, int h, int x0, int len) {
    BinaryMask m(w, h);
    for (int k = 0; k < len; ++k) {
        m(x0 + k, k) = 1;
    }
    return m;
}

} // namespace

TEST_CASE("split yields 8-connected regions with boxes and areas") {
    BinaryMask m = mask_or(rect_mask(20, 10, 0, 0, 4, 3), rect_mask(20, 10, 10, 5, 12, 6));
    m(4, 3) = 1; // diagonal neighbour of the first rectangle
    const RegionSet rs = split(m, 4);
    REQUIRE(rs.regions.size() == 2);
    CHECK(rs.regions[0].id == 1);
    CHECK(rs.regions[0].box == Box{0, 0, 5, 4});
    CHECK(rs.regions[0].mask_area == 13);
    CHECK(rs.regions[0].box_area == 20);
    CHECK_FALSE(rs.regions[0].trivial);
    CHECK(rs.regions[1].box == Box{10, 5, 12, 6});
    CHECK(rs.regions[1].mask_area == 2);
    CHECK(rs.regions[1].trivial);
    CHECK(rs.labels(4, 3) == 1);
    CHECK(rs.labels(11, 5) == 2);
    CHECK(split(BinaryMask(5, 5), 4).regions.empty());
}

TEST_CASE("merge: a single region stays alone") {
    const RegionSet rs = split(rect_mask(10, 10, 2, 2, 6, 6), 4);
    CHECK(merge_groups(rs, MergeConfig{}) == Groups{{0}});
    CHECK(merge(rs, MergeConfig{}).front() == rect_mask(10, 10, 2, 2, 6, 6));
}

TEST_CASE("merge: neighbouring halves join, far corners do not") {
    const BinaryMask halves = mask_or(rect_mask(30, 20, 0, 0, 10, 10), rect_mask(30, 20, 11, 0, 21, 10));
    // 200 > 0.5 * 210 on both boxes and masks.
    CHECK(merge_groups(split(halves, 4), MergeConfig{}) == Groups{{0, 1}});
    CHECK(merge(split(halves, 4), MergeConfig{}).front() == halves);

    const BinaryMask corners = mask_or(rect_mask(30, 20, 0, 0, 3, 3), rect_mask(30, 20, 27, 17, 30, 20));
    // 18 < 0.5 * 600.
    CHECK(merge_groups(split(corners, 4), MergeConfig{}) == Groups{{0}, {1}});

    MergeConfig strict;
    strict.mu = 1.0;
    // 200 < 210.
    CHECK(merge_groups(split(halves, 4), strict) == Groups{{0}, {1}});
}

TEST_CASE("merge: both the box and the mask condition must hold") {
    // Boxes cover the union box (181 > 100) but the masks do not (19 < 100).
    const BinaryMask lines = mask_or(diagonal(20, 10, 0, 10), diagonal(20, 10, 11, 9));
    const RegionSet rs = split(lines, 4);
    REQUIRE(rs.regions.size() == 2);
    CHECK(merge_groups(rs, MergeConfig{}) == Groups{{0}, {1}});
}

TEST_CASE("merge: passing pairs chain transitively") {
    // A-B and B-C pass (32 > 24); A-C alone would fail (32 < 40).
    BinaryMask m = rect_mask(20, 4, 0, 0, 4, 4);
    m = mask_or(m, rect_mask(20, 4, 8, 0, 12, 4));
    m = mask_or(m, rect_mask(20, 4, 16, 0, 20, 4));
    const RegionSet rs = split(m, 4);
    CHECK(merge_groups(rs, MergeConfig{}) == Groups{{0, 1, 2}});

    const RegionSet ac = split(mask_or(rect_mask(20, 4, 0, 0, 4, 4), rect_mask(20, 4, 16, 0, 20, 4)), 4);
    CHECK(merge_groups(ac, MergeConfig{}) == Groups{{0}, {1}});
}

TEST_CASE("merge: tests use original areas, not merged groups") {
    // Regions 0 and 1 merge. Their group against region 2 would pass (boxes
    // 88 + 16 = 104 > 88, masks 80 + 16 = 96 > 88) but each original pair fails.
    BinaryMask m = rect_mask(30, 8, 0, 0, 8, 8);
    m = mask_or(m, rect_mask(30, 8, 9, 0, 11, 8));
    m = mask_or(m, rect_mask(30, 8, 20, 0, 22, 8));
    const RegionSet rs = split(m, 4);
    REQUIRE(rs.regions.size() == 3);
    CHECK(rs.regions[2].mask_area == 16);
    // 0-2: 80 vs 0.5 * 176 = 88. 1-2: 32 vs 0.5 * 104 = 52.
    CHECK(merge_groups(rs, MergeConfig{}) == Groups{{0, 1}, {2}});
}

TEST_CASE("stm_refine_inputs splits per class and keeps isolated trivial regions aside") {
    LabelMask labels(40, 20, 0);
    for (int y = 0; y < 10; ++y) {
        for (int x = 0; x < 10; ++x) {
            labels(x, y) = 1;
            labels(x + 11, y) = 1;
        }
    }
    labels(38, 18) = 2;
    labels(38, 19) = 2;
    for (int y = 12; y < 20; ++y) {
        for (int x = 0; x < 8; ++x) {
            labels(x, y) = 3;
        }
    }
    const auto out = stm_refine_inputs(labels, MergeConfig{});
    REQUIRE(out.size() == 3);
    CHECK(out.at(1).targets.size() == 1);
    CHECK(foreground_area(out.at(1).targets.front()) == 200);
    CHECK(out.at(2).targets.empty());
    CHECK(out.at(2).passthrough.size() == 1);
    CHECK(out.at(3).targets.size() == 1);
    CHECK(out.count(4) == 0);

    LabelMask bad(2, 2, 0);
    bad(0, 0) = -1;
    CHECK_THROWS_AS(stm_refine_inputs(bad, MergeConfig{}), FormatError);
    MergeConfig zero;
    zero.mu = 0.0;
    CHECK_THROWS_AS(stm_refine_inputs(labels, zero), ConfigError);
}
