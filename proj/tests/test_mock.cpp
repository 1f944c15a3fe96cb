#include "support.hpp"

#include "maskforge/error.hpp"
#include "maskforge/metrics.hpp"
#include "maskforge/mock_segmenter.hpp"
#include "maskforge/raster_ops.hpp"

#include <cmath>
#include <doctest.h>
#include <nlohmann/json.hpp>

using namespace maskforge;
using maskforge::testing::disc_mask;
using maskforge::testing::rect_mask;

namespace {

// A large square with a small disc drawn on top of it.
OracleScene nested_scene() {
    OracleScene sc;
    sc.image_id = "nested";
    sc.width = 64;
    sc.height = 64;
    sc.noise = 0.0;
    sc.shapes.push_back({1, rect_mask(64, 64, 8, 8, 56, 56)});
    sc.shapes.push_back({2, disc_mask(64, 64, 20, 20, 6)});
    return sc;
}

PromptSet point_prompt(int x, int y) {
    PromptSet p;
    p.src_width = 64;
    p.src_height = 64;
    p.enabled = PromptKinds::point_only();
    p.positive = Point{x, y, Polarity::positive};
    return p;
}

} // namespace

TEST_CASE("mock returns the target with its dilation and erosion") {
    const OracleScene sc = nested_scene();
    const MockSegmenter mock({sc});
    const ImageEmbedding emb = mock.embed(render_scene(sc));
    const MultiMaskOutput out = mock.predict(emb, point_prompt(40, 40));
    REQUIRE(out.size() == 3);
    CHECK(out.masks[0] == sc.shapes[0].mask);
    CHECK(out.masks[1] == dilate(sc.shapes[0].mask, 2.0));
    CHECK(out.masks[2] == erode(sc.shapes[0].mask, 2.0));
    CHECK(out.iou_pred[0] == 1.0);
    CHECK(out.iou_pred[1] < 1.0);
    CHECK(out.hidden[0].size() == 16);
    CHECK_NOTHROW(check_output(mock, out, 64, 64));
}

TEST_CASE("mock target choice for overlapping shapes") {
    const OracleScene sc = nested_scene();
    const MockSegmenter mock({sc});
    // Both shapes contain the click; list order picks the square.
    CHECK(mock.select_target(sc, point_prompt(20, 20)) == 0);

    PromptSet neg = point_prompt(20, 20);
    neg.negative = Point{40, 40, Polarity::negative};
    CHECK(mock.select_target(sc, neg) == 1);

    PromptSet boxed = point_prompt(20, 20);
    boxed.enabled = {true, true, false};
    boxed.box = Box{14, 14, 27, 27};
    CHECK(mock.select_target(sc, boxed) == 1);

    PromptSet box_only;
    box_only.src_width = 64;
    box_only.src_height = 64;
    box_only.enabled = PromptKinds::box_only();
    box_only.box = Box{8, 8, 56, 56};
    CHECK(mock.select_target(sc, box_only) == 0);

    // A click on background with nothing else falls through to no target.
    const MultiMaskOutput empty = mock.predict(mock.embed(render_scene(sc)), point_prompt(2, 2));
    CHECK(is_empty(empty.masks[0]));
    CHECK(empty.iou_pred == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("mock embedding cells follow the topmost shape") {
    const OracleScene sc = nested_scene();
    const MockSegmenter mock({sc});
    const ImageEmbedding emb = mock.embed(render_scene(sc));
    CHECK(emb.grid_w == 16);
    CHECK(emb.channels == 32);
    CHECK_NOTHROW(emb.validate());
    const auto square = emb.cell(10, 10);
    const auto disc = emb.cell(5, 5);
    const auto background = emb.cell(0, 0);
    CHECK(std::vector<float>(square.begin(), square.end()) ==
          std::vector<float>(emb.cell(12, 12).begin(), emb.cell(12, 12).end()));
    double dot = 0.0;
    for (std::size_t k = 0; k < square.size(); ++k) {
        dot += double(square[k]) * disc[k] + double(square[k]) * background[k];
    }
    CHECK(std::abs(dot) < 1e-5);
}

TEST_CASE("mock is deterministic and noise is bounded") {
    OracleScene sc = generate_scene(17, "s17", SceneGenConfig{});
    sc.noise = 0.05;
    const MockSegmenter mock({sc});
    const ImageEmbedding emb = mock.embed(render_scene(sc));
    const PromptSet p = excavate(sc.shapes[0].mask, emb, ExcavationConfig{}, mock.prompt_grid(96, 96));
    const MultiMaskOutput a = mock.predict(emb, p);
    const MultiMaskOutput b = mock.predict(emb, p);
    CHECK(a.iou_pred == b.iou_pred);
    CHECK(a.hidden == b.hidden);
    for (std::size_t i = 0; i < 3; ++i) {
        const double exact = std::round(iou(a.masks[i], a.masks[0]) * 1000.0) / 1000.0;
        CHECK(std::abs(a.iou_pred[i] - exact) <= 0.05 + 1e-12);
    }
}

TEST_CASE("mock rejects bad input") {
    const OracleScene sc = nested_scene();
    const MockSegmenter mock({sc});
    const ImageEmbedding emb = mock.embed(render_scene(sc));
    PromptSet none;
    none.src_width = 64;
    none.src_height = 64;
    none.enabled = PromptKinds::point_only();
    CHECK_THROWS_AS(mock.predict(emb, none), ConfigError);

    RgbImage other = render_scene(sc);
    other.id = "missing";
    CHECK_THROWS_AS(mock.embed(other), BackendError);
    other.id = "nested";
    other.width = 32;
    CHECK_THROWS_AS(mock.embed(other), DimensionError);

    CHECK_THROWS_AS(MockSegmenter({}), ConfigError);
    CHECK_THROWS_AS(MockSegmenter({sc, sc}), ConfigError);
}

TEST_CASE("scene json round trip") {
    std::vector<OracleScene> scenes{nested_scene(), generate_scene(3, "g", SceneGenConfig{})};
    const auto back = scenes_from_json(scenes_to_json(scenes));
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back[i].image_id == scenes[i].image_id);
        CHECK(back[i].seed == scenes[i].seed);
        CHECK(back[i].noise == scenes[i].noise);
        REQUIRE(back[i].shapes.size() == scenes[i].shapes.size());
        for (std::size_t s = 0; s < back[i].shapes.size(); ++s) {
            CHECK(back[i].shapes[s].id == scenes[i].shapes[s].id);
            CHECK(back[i].shapes[s].mask == scenes[i].shapes[s].mask);
        }
    }
    CHECK_THROWS_AS(scenes_from_json(nlohmann::json::object()), FormatError);
}

TEST_CASE("generated scenes are seeded and non-overlapping unless nested") {
    SceneGenConfig cfg;
    const OracleScene a = generate_scene(5, "a", cfg);
    const OracleScene b = generate_scene(5, "a", cfg);
    REQUIRE(a.shapes.size() == b.shapes.size());
    CHECK(a.shapes.size() >= 1);
    for (std::size_t i = 0; i < a.shapes.size(); ++i) {
        CHECK(a.shapes[i].mask == b.shapes[i].mask);
        for (std::size_t j = i + 1; j < a.shapes.size(); ++j) {
            CHECK(is_empty(mask_and(a.shapes[i].mask, a.shapes[j].mask)));
        }
    }
    cfg.nested = true;
    const OracleScene n = generate_scene(5, "n", cfg);
    for (std::size_t j = 1; j < n.shapes.size(); ++j) {
        CHECK_FALSE(is_empty(mask_and(n.shapes[0].mask, n.shapes[j].mask)));
    }
}
