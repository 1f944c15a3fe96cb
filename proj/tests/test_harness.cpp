#include "support.hpp"

#include "maskforge/error.hpp"
#include "maskforge/harness/cli.hpp"
#include "maskforge/harness/config.hpp"
#include "maskforge/harness/dataset.hpp"
#include "maskforge/harness/defects.hpp"
#include "maskforge/harness/fixtures.hpp"
#include "maskforge/harness/image_io.hpp"
#include "maskforge/metrics.hpp"
#include "maskforge/mock_segmenter.hpp"
#include "maskforge/raster_ops.hpp"
#include "maskforge/rle.hpp"

#include <doctest.h>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

using namespace maskforge;
using maskforge::testing::disc_mask;
using maskforge::testing::rect_mask;
using maskforge::testing::scratch_dir;
namespace fs = std::filesystem;

namespace {

RgbImage solid_image(const std::string& id, int w, int h, std::uint8_t v) {
    return {id, w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3, v)};
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

struct CliRun {
    int code = 0;
    std::string out;
    std::string err;
};

CliRun cli(const std::vector<std::string>& args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("png round trips") {
    const fs::path dir = scratch_dir("png");
    RgbImage img = solid_image("x", 5, 3, 0);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        img.data[i] = static_cast<std::uint8_t>(i * 11);
    }
    write_rgb_png((dir / "x.png").string(), img);
    const RgbImage back = read_rgb_png((dir / "x.png").string());
    CHECK(back.data == img.data);
    CHECK(back.id == "x");

    const BinaryMask m = disc_mask(9, 7, 4, 3, 2);
    write_mask_png((dir / "m.png").string(), m);
    CHECK(read_mask_png((dir / "m.png").string()) == m);

    LabelMask small(4, 2, 0);
    small(1, 0) = 5;
    small(3, 1) = 255;
    write_label_png((dir / "l8.png").string(), small);
    CHECK(read_label_png((dir / "l8.png").string()) == small);
    LabelMask wide = small;
    wide(2, 1) = 4000;
    write_label_png((dir / "l16.png").string(), wide);
    CHECK(read_label_png((dir / "l16.png").string()) == wide);

    CHECK_THROWS_AS(read_label_png((dir / "x.png").string()), FormatError);
    CHECK_THROWS_AS(read_rgb_png((dir / "missing.png").string()), IoError);
    std::ofstream(dir / "junk.png") << "not a png";
    CHECK_THROWS_AS(read_mask_png((dir / "junk.png").string()), Error);
}

TEST_CASE("config json round trip and strict keys") {
    HarnessConfig cfg;
    cfg.refine.iterations = 2;
    cfg.refine.selector = Selector::coarse_iou;
    cfg.refine.excavation.enabled = PromptKinds::box_only();
    cfg.train.lr_drop_steps = {5};
    cfg.defects.fp_blobs = {{1, 3}, {2, 6}};
    const HarnessConfig back = config_from_json(config_to_json(cfg));
    CHECK(config_to_json(back) == config_to_json(cfg));
    CHECK(back.refine.excavation.enabled == PromptKinds::box_only());
    CHECK(back.defects.fp_blobs.radius.hi == 6);

    const HarnessConfig defaults = config_from_json(nlohmann::json::object());
    CHECK(defaults.refine.excavation.lambda == 0.1);
    CHECK(defaults.train.margin == 0.02);

    try {
        config_from_json({{"refine", {{"lamda", 0.2}}}});
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("refine.lamda") != std::string::npos);
    }
    CHECK_THROWS_AS(config_from_json({{"tarin", nlohmann::json::object()}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"train", {{"lr", "fast"}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"refine", {{"selector", "best"}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"refine", {{"iterations", 0}}}}), ConfigError);

    const fs::path dir = scratch_dir("config");
    std::ofstream(dir / "c.json") << config_to_json(cfg).dump();
    CHECK(config_to_json(load_config((dir / "c.json").string())) == config_to_json(cfg));
    std::ofstream(dir / "bad.json") << "{";
    CHECK_THROWS_AS(load_config((dir / "bad.json").string()), ConfigError);
    CHECK_THROWS_AS(load_config((dir / "none.json").string()), IoError);
}

TEST_CASE("ingest instance pngs") {
    const fs::path dir = scratch_dir("ingest");
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "coarse");
    fs::create_directories(dir / "gt");
    write_rgb_png((dir / "images" / "a.png").string(), solid_image("a", 12, 10, 50));
    write_rgb_png((dir / "images" / "b.png").string(), solid_image("b", 12, 10, 90));
    write_rgb_png((dir / "images" / "c.png").string(), solid_image("c", 12, 10, 90));
    const BinaryMask m2 = rect_mask(12, 10, 0, 0, 3, 3);
    const BinaryMask m10 = rect_mask(12, 10, 5, 5, 9, 9);
    const BinaryMask m1 = rect_mask(12, 10, 2, 2, 6, 6);
    write_mask_png((dir / "coarse" / "a_10.png").string(), m10);
    write_mask_png((dir / "coarse" / "a_2.png").string(), m2);
    write_mask_png((dir / "coarse" / "b_1.png").string(), m1);
    for (const char* f : {"a_10.png", "a_2.png", "b_1.png"}) {
        fs::copy_file(dir / "coarse" / f, dir / "gt" / f);
    }

    DatasetSpec spec;
    spec.image_dir = (dir / "images").string();
    spec.coarse = {MaskFormat::instance_pngs, (dir / "coarse").string()};
    spec.gt = MaskSource{MaskFormat::instance_pngs, (dir / "gt").string()};
    const auto items = ingest(spec);
    REQUIRE(items.size() == 3);
    CHECK(items[0].image.id == "a");
    REQUIRE(items[0].instances.size() == 2);
    CHECK(items[0].instances[0].id == 2);
    CHECK(items[0].instances[1].id == 10);
    CHECK(items[0].instances[1].coarse == m10);
    CHECK(*items[0].instances[1].gt == m10);
    CHECK(items[1].instances.size() == 1);
    CHECK(items[2].instances.empty());

    fs::remove(dir / "gt" / "b_1.png");
    CHECK_THROWS_AS(ingest(spec), IoError);
    fs::copy_file(dir / "coarse" / "b_1.png", dir / "gt" / "b_1.png");

    write_mask_png((dir / "coarse" / "b_3.png").string(), BinaryMask(6, 6));
    CHECK_THROWS_AS(ingest(spec), DimensionError);
    fs::remove(dir / "coarse" / "b_3.png");

    write_mask_png((dir / "coarse" / "bogus.png").string(), m1);
    CHECK_THROWS_AS(ingest(spec), FormatError);
    fs::remove(dir / "coarse" / "bogus.png");

    write_mask_png((dir / "coarse" / "d_1.png").string(), m1);
    CHECK_THROWS_AS(ingest(spec), IoError);
}

TEST_CASE("ingest label pngs and coco json") {
    const fs::path dir = scratch_dir("ingest_labels");
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "labels");
    write_rgb_png((dir / "images" / "a.png").string(), solid_image("a", 8, 6, 10));
    LabelMask labels(8, 6, 0);
    for (int x = 0; x < 3; ++x) labels(x, 1) = 1;
    for (int x = 4; x < 8; ++x) labels(x, 4) = 5;
    write_label_png((dir / "labels" / "a.png").string(), labels);

    DatasetSpec spec;
    spec.image_dir = (dir / "images").string();
    spec.coarse = {MaskFormat::label_pngs, (dir / "labels").string()};
    auto items = ingest(spec);
    REQUIRE(items[0].instances.size() == 2);
    CHECK(items[0].instances[0].id == 1);
    CHECK(items[0].instances[1].id == 5);
    CHECK(foreground_area(items[0].instances[1].coarse) == 4);

    spec.mode = DatasetMode::semantic;
    items = ingest(spec);
    REQUIRE(items[0].coarse_labels.has_value());
    CHECK(*items[0].coarse_labels == labels);

    CocoImageMasks coco{"a", 8, 6, {}};
    coco.masks.push_back({7, 3, rect_mask(8, 6, 1, 1, 4, 3)});
    coco.masks.push_back({4, 1, rect_mask(8, 6, 5, 0, 8, 6)});
    std::ofstream(dir / "coco.json") << coco_to_json({coco}).dump();
    const auto recs = read_instance_masks({MaskFormat::coco_json, (dir / "coco.json").string()}, "a", 8, 6);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].id == 4);
    CHECK(recs[0].mask == rect_mask(8, 6, 5, 0, 8, 6));
    CHECK(recs[1].category == 3);
    CHECK_THROWS_AS(read_instance_masks({MaskFormat::coco_json, (dir / "coco.json").string()}, "a", 9, 6),
                    DimensionError);

    auto j = coco_to_json({coco});
    j["annotations"][0]["segmentation"] = nlohmann::json::array({nlohmann::json::array({1, 2, 3, 4})});
    std::ofstream(dir / "poly.json") << j.dump();
    CHECK_THROWS_AS(read_instance_masks({MaskFormat::coco_json, (dir / "poly.json").string()}, "a", 8, 6),
                    FormatError);
}

TEST_CASE("defect simulation") {
    const BinaryMask gt = disc_mask(64, 64, 32, 32, 14);
    DefectSpec identity;
    identity.boundary_noise = {0, 0};
    identity.fp_blobs = {{0, 0}, {0, 0}};
    identity.fn_holes = {{0, 0}, {0, 0}};
    CHECK(identity.is_identity());
    CHECK(simulate_defects(gt, identity, 3) == gt);

    DefectSpec fp_only = identity;
    fp_only.fp_blobs = {{1, 3}, {2, 4}};
    fp_only.min_iou = 0.0;
    DefectSpec fn_only = identity;
    fn_only.fn_holes = {{1, 3}, {2, 4}};
    fn_only.min_iou = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const BinaryMask plus = simulate_defects(gt, fp_only, s);
        CHECK(mask_and(plus, gt) == gt);
        CHECK(foreground_area(plus) > foreground_area(gt));
        const BinaryMask minus = simulate_defects(gt, fn_only, s);
        CHECK(mask_and(minus, gt) == minus);
        CHECK(foreground_area(minus) < foreground_area(gt));
    }

    DefectSpec spec;
    spec.min_iou = 0.5;
    spec.max_iou = 0.9;
    int in_window = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
        const BinaryMask coarse = simulate_defects(gt, spec, s);
        const double v = iou(coarse, gt);
        in_window += (v >= 0.5 && v <= 0.9) ? 1 : 0;
    }
    CHECK(in_window == 200);
    CHECK(simulate_defects(gt, spec, 42) == simulate_defects(gt, spec, 42));
    CHECK_FALSE(simulate_defects(gt, spec, 42) == simulate_defects(gt, spec, 43));
    spec.seed = 1;
    CHECK_FALSE(simulate_defects(gt, spec, 42) == simulate_defects(gt, DefectSpec{}, 42));

    CHECK_THROWS_AS(simulate_defects(BinaryMask(8, 8), spec, 0), EmptyMaskError);
    DefectSpec impossible;
    impossible.min_iou = 0.999;
    impossible.max_iou = 0.9995;
    impossible.max_retries = 4;
    CHECK_THROWS_AS(simulate_defects(gt, impossible, 0), SimulationError);
    DefectSpec bad;
    bad.boundary_noise = {3, 1};
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    DefectSpec drops;
    CHECK_FALSE(drop_instance(drops, 5));
    drops.drop_prob = 1.0;
    CHECK(drop_instance(drops, 5));
    CHECK(defect_stream("img", 3) != defect_stream("img", 4));
}

TEST_CASE("parity fixtures record, persist and check") {
    SceneGenConfig gen;
    const OracleScene sc = generate_scene(2, "fx", gen);
    const MockSegmenter mock({sc});
    const RgbImage image = render_scene(sc);
    const ImageEmbedding emb = mock.embed(image);
    const PromptSet prompts = excavate(sc.shapes[0].mask, emb, ExcavationConfig{}, {96, 96});
    const ParityFixture fx = record_fixture(mock, image, prompts, "fx_1");
    CHECK(fx.embed_c == 32);
    CHECK(fx.logits.size() == 3);
    CHECK(check_fixture(mock, fx).pass());

    const fs::path dir = scratch_dir("fixtures");
    save_fixture(dir.string(), fx);
    CHECK(fs::exists(dir / "fx_1.png"));
    const ParityFixture loaded = load_fixture((dir / "fx_1.json").string());
    CHECK(loaded.image == fx.image);
    CHECK(loaded.prompts == fx.prompts);
    const ParityResult ok = check_fixture(mock, loaded);
    CHECK(ok.pass());
    CHECK(ok.logits_max_abs == 0.0);

    ParityFixture drifted = fx;
    drifted.iou[1] += 0.01;
    const ParityResult bad = check_fixture(mock, drifted);
    CHECK_FALSE(bad.pass());
    CHECK(bad.iou_max_abs == doctest::Approx(0.01));

    ParityFixture reshaped = fx;
    reshaped.hidden.pop_back();
    CHECK_FALSE(check_fixture(mock, reshaped).error.empty());

    auto j = read_json(dir / "fx_1.json");
    j["version"] = 9;
    std::ofstream(dir / "v9.json") << j.dump();
    CHECK_THROWS_AS(load_fixture((dir / "v9.json").string()), VersionMismatchError);
    const auto report = parity_to_json({ok, bad});
    CHECK(report.at("fixtures").size() == 2);
    CHECK(report.at("pass") == false);
}

TEST_CASE("cli exit codes") {
    CHECK(cli({"--help"}).code == 0);
    CHECK(cli({"--no-such-flag"}).code == 2);
    CHECK(cli({"refine"}).code == 2);
    CHECK(cli({"--jobs", "0", "synth-scenes"}).code == 2);
    const CliRun no_out = cli({"synth-scenes", "--count", "1"});
    CHECK(no_out.code == 2);
    CHECK(no_out.err.find("usage error") != std::string::npos);
    const CliRun bad_backend = cli({"--backend", "tpu:x", "backend-check"});
    CHECK(bad_backend.code == 2);
    const CliRun missing = cli({"--backend", "neural:/nonexistent/manifest.json", "backend-check"});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("/nonexistent/manifest.json") != std::string::npos);
}

TEST_CASE("cli synth, refine, eval and adapt on the mock backend") {
    const fs::path dir = scratch_dir("cli_flow");
    const std::string data = (dir / "data").string();
    REQUIRE(cli({"--seed", "3", "--out", data, "synth-scenes", "--count", "6", "--noise", "0"}).code == 0);
    const std::string backend = "mock:" + data + "/scenes.json";
    CHECK(fs::exists(dir / "data" / "images" / "scene_005.png"));

    const std::string run = (dir / "run").string();
    const CliRun refined = cli({"--backend", backend, "--out", run, "refine", "--images", data + "/images",
                                "--coarse", data + "/coarse", "--gt", data + "/gt"});
    REQUIRE_MESSAGE(refined.code == 0, refined.err);
    const auto report = read_json(dir / "run" / "report.json");
    const auto& agg = report.at("aggregates");
    CHECK(agg.at("mean_iou").get<double>() > agg.at("mean_coarse_iou").get<double>());
    CHECK(agg.at("mean_iou").get<double>() > 0.99);
    const auto index = read_json(dir / "run" / "index.json");
    CHECK(index.at("annotations").size() == agg.at("count").get<std::size_t>());
    CHECK(fs::exists(dir / "run" / "report.csv"));

    const CliRun scored = cli({"--out", (dir / "eval").string(), "eval", "--images", data + "/images", "--pred",
                               data + "/gt", "--gt", data + "/gt"});
    REQUIRE_MESSAGE(scored.code == 0, scored.err);
    CHECK(read_json(dir / "eval" / "report.json").at("aggregates").at("mean_iou").get<double>() == 1.0);

    const std::string adapt = (dir / "adapt").string();
    const CliRun trained = cli({"--backend", backend, "--out", adapt, "--seed", "1", "adapt-iou", "--images",
                                data + "/images", "--coarse", data + "/coarse"});
    REQUIRE_MESSAGE(trained.code == 0, trained.err);
    CHECK(fs::exists(dir / "adapt" / "adaptor.json"));
    const CliRun adapted = cli({"--backend", backend, "--out", (dir / "run_adapted").string(), "refine",
                                "--images", data + "/images", "--coarse", data + "/coarse", "--selector",
                                "adapted", "--adaptor", adapt + "/adaptor.json"});
    CHECK_MESSAGE(adapted.code == 0, adapted.err);
    const CliRun no_adaptor = cli({"--backend", backend, "--out", (dir / "x").string(), "refine", "--images",
                                   data + "/images", "--coarse", data + "/coarse", "--selector", "adapted"});
    CHECK(no_adaptor.code != 0);
}

TEST_CASE("cli output does not depend on the worker count") {
    const fs::path dir = scratch_dir("cli_jobs");
    const std::string data = (dir / "data").string();
    REQUIRE(cli({"--seed", "9", "--out", data, "synth-scenes", "--count", "5"}).code == 0);
    const std::string backend = "mock:" + data + "/scenes.json";
    for (const char* jobs : {"1", "4"}) {
        const CliRun r = cli({"--backend", backend, "--jobs", jobs, "--out", (dir / jobs).string(), "refine",
                              "--images", data + "/images", "--coarse", data + "/coarse", "--gt", data + "/gt"});
        REQUIRE_MESSAGE(r.code == 0, r.err);
    }
    CHECK(slurp(dir / "1" / "report.json") == slurp(dir / "4" / "report.json"));
    CHECK(slurp(dir / "1" / "index.json") == slurp(dir / "4" / "index.json"));
}

TEST_CASE("cli simulate-defects and backend-check") {
    const fs::path dir = scratch_dir("cli_tools");
    const std::string data = (dir / "data").string();
    REQUIRE(cli({"--out", data, "synth-scenes", "--count", "2"}).code == 0);
    const CliRun sim = cli({"--seed", "4", "--out", (dir / "sim").string(), "simulate-defects", "--images",
                            data + "/images", "--gt", data + "/gt"});
    REQUIRE_MESSAGE(sim.code == 0, sim.err);
    CHECK(fs::exists(dir / "sim" / "defects.json"));

    const std::string backend = "mock:" + data + "/scenes.json";
    const CliRun rec = cli({"--backend", backend, "--out", (dir / "rec").string(), "backend-check", "--record",
                            "--images", data + "/images", "--coarse", data + "/coarse"});
    REQUIRE_MESSAGE(rec.code == 0, rec.err);
    const CliRun check = cli({"--backend", backend, "--out", (dir / "chk").string(), "backend-check",
                              "--fixtures", (dir / "rec" / "fixtures").string()});
    CHECK_MESSAGE(check.code == 0, check.err);
    CHECK(check.out.find("FAIL") == std::string::npos);
    CHECK(fs::exists(dir / "chk" / "parity.json"));
}
