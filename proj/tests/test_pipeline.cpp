#include "support.hpp"

#include "maskforge/error.hpp"
#include "maskforge/metrics.hpp"
#include "maskforge/mock_segmenter.hpp"
#include "maskforge/pipeline.hpp"
#include "maskforge/raster_ops.hpp"

#include <doctest.h>

using namespace maskforge;
using maskforge::testing::rect_mask;

namespace {

OracleScene quiet_scene(std::uint64_t seed) {
    SceneGenConfig gen;
    gen.noise = 0.0;
    return generate_scene(seed, "p" + std::to_string(seed), gen);
}

// Coarse mask with a bite taken out and a spur added.
BinaryMask damage(const BinaryMask& gt) {
    const Box b = tight_box(gt);
    BinaryMask out = erode(gt, 1.0);
    out = mask_and_not(out, rect_mask(gt.width(), gt.height(), b.x0, b.y0, (b.x0 + b.x1) / 2, (b.y0 + b.y1) / 2 - 2));
    const int y = (b.y0 + b.y1) / 2;
    for (int x = b.x1; x < std::min(gt.width(), b.x1 + 3); ++x) {
        out(x, y) = 1;
    }
    return out;
}

} // namespace

TEST_CASE("selector names round trip") {
    for (Selector s : {Selector::predicted, Selector::adapted, Selector::coarse_iou, Selector::gt_iou}) {
        CHECK(selector_from_string(to_string(s)) == s);
    }
    CHECK_THROWS_AS(selector_from_string("best"), ConfigError);
}

TEST_CASE("a damaged coarse mask is restored exactly by the noiseless mock") {
    const OracleScene sc = quiet_scene(11);
    const MockSegmenter mock({sc});
    const ImageEmbedding emb = mock.embed(render_scene(sc));
    for (const auto& shape : sc.shapes) {
        const BinaryMask coarse = damage(shape.mask);
        REQUIRE(iou(coarse, shape.mask) < 1.0);
        const RefineResult r = refine_instance(emb, coarse, RefineConfig{}, mock, {&shape.mask, nullptr});
        CHECK(r.refined == shape.mask);
        CHECK(r.chosen_index == 0);
        CHECK(r.chosen_score == 1.0);
        CHECK(r.iterations.size() == 1);
        CHECK(*r.refined_iou_vs_gt == 1.0);
        CHECK(*r.coarse_iou_vs_gt < 1.0);
        CHECK(r.warnings.empty());
    }
}

TEST_CASE("cascade runs one round per iteration") {
    const OracleScene sc = quiet_scene(12);
    const MockSegmenter mock({sc});
    const ImageEmbedding emb = mock.embed(render_scene(sc));
    RefineConfig cfg;
    cfg.iterations = 3;
    const RefineResult r = refine_instance(emb, damage(sc.shapes[0].mask), cfg, mock);
    CHECK(r.iterations.size() == 3);
    CHECK(r.refined == sc.shapes[0].mask);
    // Later rounds start from the previous choice.
    CHECK(r.iterations[1].prompts.positive == positive_point(sc.shapes[0].mask));
    cfg.iterations = 0;
    CHECK_THROWS_AS(refine_instance(emb, sc.shapes[0].mask, cfg, mock), ConfigError);
}

TEST_CASE("selectors pick the expected candidate") {
    const OracleScene sc = quiet_scene(13);
    const MockSegmenter mock({sc});
    const ImageEmbedding emb = mock.embed(render_scene(sc));
    const BinaryMask& gt = sc.shapes[0].mask;
    const BinaryMask coarse = dilate(gt, 2.0);
    RefineConfig cfg;
    cfg.selector = Selector::coarse_iou;
    // The dilated candidate equals the coarse input.
    CHECK(refine_instance(emb, coarse, cfg, mock).chosen_index == 1);

    cfg.selector = Selector::gt_iou;
    CHECK(refine_instance(emb, coarse, cfg, mock, {&gt, nullptr}).refined == gt);
    CHECK_THROWS_AS(refine_instance(emb, coarse, cfg, mock), ConfigError);

    cfg.selector = Selector::adapted;
    CHECK_THROWS_AS(refine_instance(emb, coarse, cfg, mock), ConfigError);
    const LoraAdaptor zero = LoraAdaptor::zero(16, 4);
    const RefineResult adapted = refine_instance(emb, coarse, cfg, mock, {nullptr, &zero});
    cfg.selector = Selector::predicted;
    CHECK(adapted.refined == refine_instance(emb, coarse, cfg, mock).refined);
}

TEST_CASE("select_best breaks ties towards the lowest index") {
    MultiMaskOutput out;
    out.masks.assign(3, BinaryMask(2, 2));
    out.iou_pred = {0.5, 0.9, 0.9};
    CHECK(select_best(out, Selector::predicted, {}) == 1);
}

TEST_CASE("an empty coarse mask passes through with a warning") {
    const OracleScene sc = quiet_scene(14);
    const MockSegmenter mock({sc});
    const ImageEmbedding emb = mock.embed(render_scene(sc));
    const BinaryMask empty(sc.width, sc.height);
    const RefineResult r = refine_instance(emb, empty, RefineConfig{}, mock);
    CHECK(r.passthrough());
    CHECK(r.refined == empty);
    CHECK(r.iterations.empty());
    REQUIRE(r.warnings.size() == 1);
}

TEST_CASE("semantic refinement repaints merged class regions") {
    const OracleScene sc = quiet_scene(15);
    REQUIRE(sc.shapes.size() >= 2);
    const MockSegmenter mock({sc});
    const ImageEmbedding emb = mock.embed(render_scene(sc));
    LabelMask coarse(sc.width, sc.height, 0);
    LabelMask expected(sc.width, sc.height, 0);
    for (std::size_t s = 0; s < sc.shapes.size(); ++s) {
        const int cls = static_cast<int>(s) + 1;
        const BinaryMask damaged = damage(sc.shapes[s].mask);
        for (std::size_t p = 0; p < coarse.size(); ++p) {
            if (damaged[p] != 0) coarse[p] = cls;
            if (sc.shapes[s].mask[p] != 0) expected[p] = cls;
        }
    }
    const SemanticResult r = refine_semantic(emb, coarse, RefineConfig{}, mock);
    CHECK(r.labels == expected);
    CHECK(r.targets.size() >= sc.shapes.size());

    RefineConfig gt_cfg;
    gt_cfg.selector = Selector::gt_iou;
    CHECK_THROWS_AS(refine_semantic(emb, coarse, gt_cfg, mock), ConfigError);
    CHECK_THROWS_AS(refine_semantic(emb, LabelMask(4, 4, 0), RefineConfig{}, mock), DimensionError);
}

TEST_CASE("overlapping class claims go to the higher score") {
    // Two classes whose refinements overlap: the nested disc wins over the square it sits on
    // only where its score is higher; equal scores go to the lower class id.
    OracleScene sc;
    sc.image_id = "claims";
    sc.width = 48;
    sc.height = 48;
    sc.noise = 0.0;
    sc.shapes.push_back({1, rect_mask(48, 48, 4, 4, 44, 44)});
    sc.shapes.push_back({2, maskforge::testing::disc_mask(48, 48, 24, 24, 6)});
    const MockSegmenter mock({sc});
    const ImageEmbedding emb = mock.embed(render_scene(sc));
    LabelMask coarse(48, 48, 0);
    for (std::size_t p = 0; p < coarse.size(); ++p) {
        if (sc.shapes[0].mask[p] != 0) coarse[p] = 2;
        if (sc.shapes[1].mask[p] != 0) coarse[p] = 1;
    }
    const SemanticResult r = refine_semantic(emb, coarse, RefineConfig{}, mock);
    // Both targets score 1.0 on their chosen candidate; the disc pixels are
    // claimed by class 1 (lower id) and the rest of the square by class 2.
    CHECK(r.labels(24, 24) == 1);
    CHECK(r.labels(6, 6) == 2);
    CHECK(r.labels(0, 0) == 0);
}
