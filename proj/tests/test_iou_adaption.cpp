#include "support.hpp"

#include "maskforge/error.hpp"
#include "maskforge/iou_adaption.hpp"
#include "maskforge/mock_segmenter.hpp"
#include "maskforge/random.hpp"

#include <cmath>
#include <doctest.h>
#include <nlohmann/json.hpp>

using namespace maskforge;

namespace {

// Quality is readable from hidden[0]; base scores are noise.
std::vector<TrainSample> synthetic_samples(std::uint64_t seed, int n, int dim) {
    Rng rng(seed);
    std::vector<TrainSample> out;
    for (int s = 0; s < n; ++s) {
        TrainSample t;
        double best_q = -1.0;
        for (int k = 0; k < 3; ++k) {
            std::vector<double> h(static_cast<std::size_t>(dim));
            for (double& v : h) {
                v = rng.uniform(-1.0, 1.0);
            }
            const double q = rng.uniform();
            h[0] = q;
            if (q > best_q) {
                best_q = q;
                t.best_index = k;
            }
            t.hidden.push_back(std::move(h));
            t.base_scores.push_back(rng.uniform(0.5, 0.6));
        }
        out.push_back(std::move(t));
    }
    return out;
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) {
        m = std::max(m, std::abs(x));
    }
    return m;
}

} // namespace

TEST_CASE("ranking loss hand cases") {
    const std::vector<double> ordered{0.9, 0.5, 0.4};
    CHECK(ranking_loss(ordered, 0, 0.02) == 0.0);
    const std::vector<double> swapped{0.5, 0.9, 0.4};
    CHECK(ranking_loss(swapped, 0, 0.02) == doctest::Approx(0.42).epsilon(1e-12));
    const std::vector<double> tied{0.3, 0.3, 0.3};
    CHECK(ranking_loss(tied, 1, 0.02) == doctest::Approx(0.04).epsilon(1e-12));
    CHECK_THROWS_AS(ranking_loss(tied, 3, 0.02), ConfigError);

    CHECK(ranking_loss_grad(swapped, 0, 0.02) == std::vector<double>{-1.0, 1.0, 0.0});
    CHECK(ranking_loss_grad(ordered, 0, 0.02) == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(ranking_loss_grad(tied, 1, 0.02) == std::vector<double>{1.0, -2.0, 1.0});
}

TEST_CASE("ranking loss gradient matches finite differences") {
    Rng rng(99);
    const double h = 1e-6;
    int checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> x(3);
        for (double& v : x) {
            v = rng.uniform();
        }
        const int best = rng.uniform_int(0, 2);
        bool near_kink = false;
        for (int i = 0; i < 3; ++i) {
            if (i != best && std::abs(x[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(best)] + 0.02) < 1e-4) {
                near_kink = true;
            }
        }
        if (near_kink) {
            continue;
        }
        const auto g = ranking_loss_grad(x, best, 0.02);
        for (std::size_t i = 0; i < 3; ++i) {
            auto up = x;
            auto down = x;
            up[i] += h;
            down[i] -= h;
            const double fd = (ranking_loss(up, best, 0.02) - ranking_loss(down, best, 0.02)) / (2.0 * h);
            CHECK(std::abs(fd - g[i]) <= 1e-5 * std::max(1.0, std::abs(g[i])));
        }
        ++checked;
    }
    CHECK(checked > 950);
}

TEST_CASE("adapted scores equal base + scale * B A h") {
    Rng rng(3);
    LoraAdaptor ad = LoraAdaptor::zero(6, 2, 0.5);
    for (double& v : ad.a) v = rng.normal();
    for (double& v : ad.b) v = rng.normal();
    std::vector<std::vector<double>> hidden(3, std::vector<double>(6));
    for (auto& h : hidden) {
        for (double& v : h) v = rng.normal();
    }
    const std::vector<double> base{0.1, 0.2, 0.3};
    const auto got = adapted_scores(hidden, base, ad);
    for (std::size_t i = 0; i < 3; ++i) {
        double delta = 0.0;
        for (int r = 0; r < 2; ++r) {
            double ah = 0.0;
            for (int k = 0; k < 6; ++k) {
                ah += ad.a[static_cast<std::size_t>(r * 6 + k)] * hidden[i][static_cast<std::size_t>(k)];
            }
            delta += ad.b[static_cast<std::size_t>(r)] * ah;
        }
        CHECK(got[i] == doctest::Approx(base[i] + 0.5 * delta).epsilon(1e-12));
    }
    CHECK(adapted_scores(hidden, base, LoraAdaptor::zero(6, 2)) == base);
    hidden[1].pop_back();
    CHECK_THROWS_AS(adapted_scores(hidden, base, ad), DimensionError);
}

TEST_CASE("each full-batch SGD step follows the numerical gradient") {
    const auto samples = synthetic_samples(7, 40, 8);
    TrainConfig cfg;
    cfg.batch = 40;
    cfg.lr = 1.0;
    cfg.init_std = 0.3;
    cfg.epochs = 0;
    const LoraAdaptor init = train(samples, cfg);
    CHECK(max_abs(init.b) == 0.0);

    auto numerical = [&](const LoraAdaptor& at, std::vector<double> LoraAdaptor::*field) {
        std::vector<double> g((at.*field).size());
        const double h = 1e-6;
        for (std::size_t k = 0; k < g.size(); ++k) {
            LoraAdaptor up = at;
            LoraAdaptor down = at;
            (up.*field)[k] += h;
            (down.*field)[k] -= h;
            g[k] = (mean_ranking_loss(samples, up, cfg.margin) - mean_ranking_loss(samples, down, cfg.margin)) /
                   (2.0 * h);
        }
        return g;
    };

    cfg.epochs = 1;
    const LoraAdaptor one = train(samples, cfg);
    const auto gb = numerical(init, &LoraAdaptor::b);
    for (std::size_t k = 0; k < gb.size(); ++k) {
        CHECK(std::abs((init.b[k] - one.b[k]) - gb[k]) <= 1e-5 * max_abs(gb));
    }
    CHECK(one.a == init.a);

    cfg.epochs = 2;
    const LoraAdaptor two = train(samples, cfg);
    const auto ga = numerical(one, &LoraAdaptor::a);
    REQUIRE(max_abs(ga) > 0.0);
    for (std::size_t k = 0; k < ga.size(); ++k) {
        CHECK(std::abs((one.a[k] - two.a[k]) - ga[k]) <= 1e-5 * max_abs(ga));
    }
}

TEST_CASE("training is seeded and lowers the ranking loss") {
    const auto samples = synthetic_samples(11, 200, 8);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.lr = 0.5;
    cfg.init_std = 0.1;
    cfg.seed = 4;
    const LoraAdaptor a = train(samples, cfg);
    const LoraAdaptor b = train(samples, cfg);
    CHECK(a == b);
    const double before = mean_ranking_loss(samples, LoraAdaptor::zero(8, 4), cfg.margin);
    const double after = mean_ranking_loss(samples, a, cfg.margin);
    CHECK(after < 0.5 * before);

    cfg.seed = 5;
    CHECK_FALSE(train(samples, cfg) == a);
    CHECK_THROWS_AS(train(std::span<const TrainSample>{}, cfg), ConfigError);
}

TEST_CASE("learning rate drop steps") {
    TrainConfig cfg;
    CHECK(effective_drop_steps(cfg, 52) == std::vector<int>{60, 100});
    cfg.lr_drop_reference_steps = 120;
    CHECK(effective_drop_steps(cfg, 60) == std::vector<int>{30, 50});
}

TEST_CASE("adaptor json round trip and validation") {
    LoraAdaptor ad = LoraAdaptor::zero(5, 2, 2.0);
    ad.a[3] = 0.125;
    ad.b[1] = -1.5;
    CHECK(adaptor_from_json(adaptor_to_json(ad)) == ad);
    auto j = adaptor_to_json(ad);
    j["version"] = 2;
    CHECK_THROWS_AS(adaptor_from_json(j), VersionMismatchError);
    j = adaptor_to_json(ad);
    j["A"].erase(0);
    CHECK_THROWS_AS(adaptor_from_json(j), DimensionError);
    CHECK_THROWS_AS(LoraAdaptor::zero(4, 5), DimensionError);

    const auto dir = maskforge::testing::scratch_dir("adaptor");
    save_adaptor((dir / "a.json").string(), ad);
    CHECK(load_adaptor((dir / "a.json").string()) == ad);
    CHECK_THROWS_AS(load_adaptor((dir / "missing.json").string()), IoError);
}

TEST_CASE("training set from mock predictions") {
    SceneGenConfig gen;
    std::vector<OracleScene> scenes;
    std::vector<AdaptionImage> images;
    for (int i = 0; i < 3; ++i) {
        scenes.push_back(generate_scene(static_cast<std::uint64_t>(i), "t" + std::to_string(i), gen));
        AdaptionImage item{render_scene(scenes.back()), {}};
        for (const auto& s : scenes.back().shapes) {
            item.coarse.push_back(s.mask);
        }
        item.coarse.push_back(BinaryMask(gen.width, gen.height));
        images.push_back(std::move(item));
    }
    const MockSegmenter mock(scenes);
    const auto modes = default_training_modes();
    const auto serial = build_training_set(images, mock, ExcavationConfig{}, modes, 1);
    const auto threaded = build_training_set(images, mock, ExcavationConfig{}, modes, 4);
    std::size_t shapes = 0;
    for (const auto& s : scenes) {
        shapes += s.shapes.size();
    }
    CHECK(serial.size() == shapes * modes.size());
    REQUIRE(serial.size() == threaded.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].base_scores == threaded[i].base_scores);
        CHECK(serial[i].best_index == threaded[i].best_index);
        // Coarse masks are the shapes themselves, so the exact candidate wins.
        CHECK(serial[i].best_index == 0);
    }
}
