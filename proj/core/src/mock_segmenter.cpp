#include "maskforge/mock_segmenter.hpp"

#include "maskforge/metrics.hpp"
#include "maskforge/random.hpp"
#include "maskforge/raster_ops.hpp"
#include "maskforge/rle.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

namespace maskforge {

namespace {

std::uint64_t prompt_hash(const OracleScene& scene, const PromptSet& p) {
    std::uint64_t h = hash_string(mix64(0x6d61736bULL, scene.seed), scene.image_id);
    h = mix64(h, (p.enabled.point ? 1u : 0u) | (p.enabled.box ? 2u : 0u) | (p.enabled.mask ? 4u : 0u));
    auto point = [&](const std::optional<Point>& pt) {
        h = mix64(h, pt ? 1 : 0);
        if (pt) {
            h = mix64(h, static_cast<std::uint64_t>(pt->x));
            h = mix64(h, static_cast<std::uint64_t>(pt->y));
        }
    };
    point(p.positive);
    point(p.negative);
    h = mix64(h, p.box ? 1 : 0);
    if (p.box) {
        for (int v : {p.box->x0, p.box->y0, p.box->x1, p.box->y1}) {
            h = mix64(h, static_cast<std::uint64_t>(v));
        }
    }
    h = mix64(h, p.soft_mask ? 1 : 0);
    if (p.soft_mask) {
        const SoftMaskPrompt& m = *p.soft_mask;
        h = mix64(h, static_cast<std::uint64_t>(m.center.x));
        h = mix64(h, static_cast<std::uint64_t>(m.center.y));
        h = mix64(h, m.area);
        h = mix64(h, static_cast<std::uint64_t>(m.values.width()));
        h = mix64(h, static_cast<std::uint64_t>(m.values.height()));
        h = mix64(h, static_cast<std::uint64_t>(std::llround(m.omega * 1e6)));
        h = mix64(h, static_cast<std::uint64_t>(std::llround(m.gamma * 1e6)));
    }
    return h;
}

std::vector<std::vector<double>> cluster_directions(const OracleScene& scene) {
    std::vector<int> ids{0};
    for (const auto& s : scene.shapes) {
        ids.push_back(s.id);
    }
    const auto dim = static_cast<std::size_t>(scene.feature_dim);
    const bool orthogonal = ids.size() <= dim;
    std::vector<std::vector<double>> out;
    for (int id : ids) {
        Rng rng(mix64(mix64(scene.seed, 0xfeedULL), static_cast<std::uint64_t>(id)));
        std::vector<double> v(dim);
        for (double& x : v) {
            x = rng.normal();
        }
        if (orthogonal) {
            for (const auto& u : out) {
                double dot = 0.0;
                for (std::size_t k = 0; k < dim; ++k) {
                    dot += v[k] * u[k];
                }
                for (std::size_t k = 0; k < dim; ++k) {
                    v[k] -= dot * u[k];
                }
            }
        }
        double norm = 0.0;
        for (double x : v) {
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (double& x : v) {
            x /= norm;
        }
        out.push_back(std::move(v));
    }
    return out;
}

std::vector<double> mask_statistics(const BinaryMask& m, const OracleScene& scene, int slot) {
    std::vector<double> h(static_cast<std::size_t>(scene.hidden_dim), 0.0);
    const double area = double(foreground_area(m));
    std::vector<double> stats(5, 0.0);
    if (area > 0) {
        const Box box = tight_box(m);
        double cx = 0.0;
        double cy = 0.0;
        for (int y = 0; y < m.height(); ++y) {
            for (int x = 0; x < m.width(); ++x) {
                if (m(x, y) != 0) {
                    cx += x;
                    cy += y;
                }
            }
        }
        stats[0] = area / (double(m.width()) * m.height());
        stats[1] = double(foreground_area(boundary_band(m, 1))) / area;
        stats[2] = (cx / area - m.width() / 2.0) / m.width();
        stats[3] = (cy / area - m.height() / 2.0) / m.height();
        stats[4] = area / double(box.area());
    }
    Rng rng(mix64(mix64(scene.seed, 0x51075ULL), static_cast<std::uint64_t>(slot)));
    for (std::size_t k = 0; k < h.size(); ++k) {
        const double constant = rng.uniform(-4.0, 4.0);
        h[k] = k < stats.size() ? stats[k] : constant;
    }
    return h;
}

BinaryMask support_at_source(const SoftMaskPrompt& m, int width, int height) {
    BinaryMask support(m.values.width(), m.values.height());
    for (std::size_t i = 0; i < support.size(); ++i) {
        support[i] = m.values[i] > 0.0 ? 1 : 0;
    }
    return resize_nearest(support, width, height);
}

bool contains(const BinaryMask& m, const Point& p) {
    return m.in_bounds(p.x, p.y) && m(p.x, p.y) != 0;
}

} // namespace

void OracleScene::validate() const {
    if (width <= 0 || height <= 0) {
        throw DimensionError("scene '" + image_id + "': non-positive size");
    }
    if (feature_dim <= 0 || stride <= 0 || hidden_dim < 5) {
        throw ConfigError("scene '" + image_id + "': feature_dim, stride must be positive and hidden_dim >= 5");
    }
    std::set<int> ids;
    for (const auto& s : shapes) {
        if (s.id <= 0 || !ids.insert(s.id).second) {
            throw ConfigError("scene '" + image_id + "': shape ids must be unique and positive");
        }
        if (s.mask.width() != width || s.mask.height() != height) {
            throw DimensionError("scene '" + image_id + "': shape mask size mismatch");
        }
    }
}

MockSegmenter::MockSegmenter(std::vector<OracleScene> scenes) : scenes_(std::move(scenes)) {
    if (scenes_.empty()) {
        throw ConfigError("mock backend: no scenes");
    }
    for (std::size_t i = 0; i < scenes_.size(); ++i) {
        scenes_[i].validate();
        if (!index_.emplace(scenes_[i].image_id, i).second) {
            throw ConfigError("mock backend: duplicate scene '" + scenes_[i].image_id + "'");
        }
    }
    feature_dim_ = scenes_.front().feature_dim;
    hidden_dim_ = scenes_.front().hidden_dim;
    for (const auto& s : scenes_) {
        if (s.feature_dim != feature_dim_ || s.hidden_dim != hidden_dim_) {
            throw ConfigError("mock backend: scenes disagree on feature_dim or hidden_dim");
        }
    }
}

Capabilities MockSegmenter::capabilities() const {
    return {3, hidden_dim_, feature_dim_};
}

GridSize MockSegmenter::prompt_grid(int src_width, int src_height) const {
    return {src_width, src_height};
}

const OracleScene& MockSegmenter::scene(const std::string& image_id) const {
    const auto it = index_.find(image_id);
    if (it == index_.end()) {
        throw BackendError("mock backend: no scene for image '" + image_id + "'");
    }
    return scenes_[it->second];
}

ImageEmbedding MockSegmenter::embed(const RgbImage& image) const {
    const OracleScene& sc = scene(image.id);
    if (image.width != sc.width || image.height != sc.height) {
        throw DimensionError("mock backend: image '" + image.id + "' does not match its scene size");
    }
    const auto directions = cluster_directions(sc);
    ImageEmbedding emb;
    emb.source_id = sc.image_id;
    emb.src_width = sc.width;
    emb.src_height = sc.height;
    emb.grid_w = (sc.width + sc.stride - 1) / sc.stride;
    emb.grid_h = (sc.height + sc.stride - 1) / sc.stride;
    emb.channels = sc.feature_dim;
    emb.cells_per_px_x = 1.0 / sc.stride;
    emb.cells_per_px_y = 1.0 / sc.stride;
    emb.data.assign(static_cast<std::size_t>(emb.grid_w) * emb.grid_h * emb.channels, 0.0f);
    for (int cy = 0; cy < emb.grid_h; ++cy) {
        const int py = std::min(cy * sc.stride + sc.stride / 2, sc.height - 1);
        for (int cx = 0; cx < emb.grid_w; ++cx) {
            const int px = std::min(cx * sc.stride + sc.stride / 2, sc.width - 1);
            std::size_t cluster = 0;
            for (std::size_t s = 0; s < sc.shapes.size(); ++s) {
                if (sc.shapes[s].mask(px, py) != 0) {
                    cluster = s + 1;
                }
            }
            float* cell = emb.data.data() + (static_cast<std::size_t>(cy) * emb.grid_w + cx) * emb.channels;
            for (int k = 0; k < emb.channels; ++k) {
                cell[k] = static_cast<float>(directions[cluster][static_cast<std::size_t>(k)]);
            }
        }
    }
    return emb;
}

int MockSegmenter::select_target(const OracleScene& sc, const PromptSet& p) const {
    const int n = static_cast<int>(sc.shapes.size());
    std::optional<BinaryMask> box_region;
    if (p.enabled.box && p.box) {
        box_region = box_mask(*p.box, sc.width, sc.height);
    }
    std::optional<BinaryMask> support;
    if (p.enabled.mask && p.soft_mask) {
        support = support_at_source(*p.soft_mask, sc.width, sc.height);
    }
    auto box_fit = [&](int s) { return iou(sc.shapes[static_cast<std::size_t>(s)].mask, *box_region); };
    auto mask_fit = [&](int s) {
        return double(foreground_area(mask_and(sc.shapes[static_cast<std::size_t>(s)].mask, *support)));
    };
    // First strictly-best candidate under `score`, ignoring non-positive scores.
    auto best_of = [](const std::vector<int>& candidates, auto score) {
        int best = -1;
        double best_score = 0.0;
        for (int s : candidates) {
            const double v = score(s);
            if (v > best_score) {
                best_score = v;
                best = s;
            }
        }
        return best;
    };

    if (p.enabled.point && p.positive) {
        std::vector<int> hits;
        for (int s = 0; s < n; ++s) {
            if (contains(sc.shapes[static_cast<std::size_t>(s)].mask, *p.positive)) {
                hits.push_back(s);
            }
        }
        if (p.negative && hits.size() > 1) {
            std::vector<int> kept;
            for (int s : hits) {
                if (!contains(sc.shapes[static_cast<std::size_t>(s)].mask, *p.negative)) {
                    kept.push_back(s);
                }
            }
            if (!kept.empty()) {
                hits = std::move(kept);
            }
        }
        if (hits.size() == 1) {
            return hits.front();
        }
        if (hits.size() > 1) {
            if (box_region) {
                if (const int s = best_of(hits, box_fit); s >= 0) {
                    return s;
                }
            }
            if (support) {
                if (const int s = best_of(hits, mask_fit); s >= 0) {
                    return s;
                }
            }
            return hits.front();
        }
    }
    std::vector<int> all(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) {
        all[static_cast<std::size_t>(s)] = s;
    }
    if (box_region) {
        if (const int s = best_of(all, box_fit); s >= 0) {
            return s;
        }
    }
    if (support) {
        if (const int s = best_of(all, mask_fit); s >= 0) {
            return s;
        }
    }
    return -1;
}

MultiMaskOutput MockSegmenter::predict(const ImageEmbedding& emb, const PromptSet& prompts) const {
    require_prompts(prompts);
    const OracleScene& sc = scene(emb.source_id);
    if (prompts.src_width != sc.width || prompts.src_height != sc.height) {
        throw DimensionError("mock backend: prompts do not match scene size");
    }
    const int target_index = select_target(sc, prompts);
    const BinaryMask target =
        target_index >= 0 ? sc.shapes[static_cast<std::size_t>(target_index)].mask : BinaryMask(sc.width, sc.height);

    MultiMaskOutput out;
    out.masks = {target, dilate(target, kCandidateRadius), erode(target, kCandidateRadius)};
    Rng rng(prompt_hash(sc, prompts));
    for (std::size_t i = 0; i < out.masks.size(); ++i) {
        const BinaryMask& m = out.masks[i];
        RealRaster logits(sc.width, sc.height);
        for (std::size_t p = 0; p < m.size(); ++p) {
            logits[p] = m[p] != 0 ? 1.0 : -1.0;
        }
        out.logits.push_back(std::move(logits));
        const double perturbation = rng.uniform(-sc.noise, sc.noise);
        double score = 0.0;
        if (target_index >= 0) {
            score = std::round(iou(m, target) * 1000.0) / 1000.0;
            score = std::clamp(score + perturbation, 0.0, 1.0);
        }
        out.iou_pred.push_back(score);
        out.hidden.push_back(mask_statistics(m, sc, static_cast<int>(i)));
    }
    return out;
}

nlohmann::json scenes_to_json(const std::vector<OracleScene>& scenes) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : scenes) {
        nlohmann::json shapes = nlohmann::json::array();
        for (const auto& shape : s.shapes) {
            shapes.push_back({{"id", shape.id}, {"mask", rle_to_json(rle_encode(shape.mask))}});
        }
        arr.push_back({{"image_id", s.image_id},
                       {"width", s.width},
                       {"height", s.height},
                       {"feature_dim", s.feature_dim},
                       {"stride", s.stride},
                       {"hidden_dim", s.hidden_dim},
                       {"noise", s.noise},
                       {"seed", s.seed},
                       {"shapes", shapes}});
    }
    return {{"version", 1}, {"scenes", arr}};
}

std::vector<OracleScene> scenes_from_json(const nlohmann::json& j) {
    try {
        std::vector<OracleScene> out;
        for (const auto& s : j.at("scenes")) {
            OracleScene sc;
            sc.image_id = s.at("image_id").get<std::string>();
            sc.width = s.at("width").get<int>();
            sc.height = s.at("height").get<int>();
            sc.feature_dim = s.value("feature_dim", 32);
            sc.stride = s.value("stride", 4);
            sc.hidden_dim = s.value("hidden_dim", 16);
            sc.noise = s.value("noise", 0.05);
            sc.seed = s.value("seed", std::uint64_t{0});
            for (const auto& shape : s.at("shapes")) {
                sc.shapes.push_back({shape.at("id").get<int>(), rle_decode(rle_from_json(shape.at("mask")))});
            }
            sc.validate();
            out.push_back(std::move(sc));
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("scene file: ") + e.what());
    }
}

std::vector<OracleScene> load_scenes(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(path, "cannot open scene file");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    return scenes_from_json(j);
}

void save_scenes(const std::string& path, const std::vector<OracleScene>& scenes) {
    std::ofstream out(path);
    if (!out) {
        throw IoError(path, "cannot write scene file");
    }
    out << scenes_to_json(scenes).dump() << '\n';
}

namespace {

BinaryMask draw_shape(Rng& rng, int width, int height, int cx, int cy, int radius) {
    BinaryMask m(width, height);
    const int kind = rng.uniform_int(0, 2);
    if (kind == 0) {
        const double rx = radius * rng.uniform(0.7, 1.0);
        const double ry = radius * rng.uniform(0.7, 1.0);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double dx = (x - cx) / rx;
                const double dy = (y - cy) / ry;
                if (dx * dx + dy * dy <= 1.0) {
                    m(x, y) = 1;
                }
            }
        }
    } else if (kind == 1) {
        const int hw = std::max(2, static_cast<int>(radius * rng.uniform(0.6, 0.95)));
        const int hh = std::max(2, static_cast<int>(radius * rng.uniform(0.6, 0.95)));
        for (int y = std::max(0, cy - hh); y <= std::min(height - 1, cy + hh); ++y) {
            for (int x = std::max(0, cx - hw); x <= std::min(width - 1, cx + hw); ++x) {
                m(x, y) = 1;
            }
        }
    } else {
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double offset = radius * 0.45;
        const double r1 = radius * 0.65;
        const double r2 = radius * rng.uniform(0.45, 0.65);
        const double ax = cx + offset * std::cos(angle);
        const double ay = cy + offset * std::sin(angle);
        const double bx = cx - offset * std::cos(angle);
        const double by = cy - offset * std::sin(angle);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double da = (x - ax) * (x - ax) + (y - ay) * (y - ay);
                const double db = (x - bx) * (x - bx) + (y - by) * (y - by);
                if (da <= r1 * r1 || db <= r2 * r2) {
                    m(x, y) = 1;
                }
            }
        }
    }
    return m;
}

} // namespace

OracleScene generate_scene(std::uint64_t seed, const std::string& image_id, const SceneGenConfig& cfg) {
    Rng rng(mix64(seed, 0x5ce9eULL));
    OracleScene sc;
    sc.image_id = image_id;
    sc.width = cfg.width;
    sc.height = cfg.height;
    sc.feature_dim = cfg.feature_dim;
    sc.stride = cfg.stride;
    sc.hidden_dim = cfg.hidden_dim;
    sc.noise = cfg.noise;
    sc.seed = seed;

    const int count = rng.uniform_int(cfg.min_shapes, cfg.max_shapes);
    BinaryMask occupied(cfg.width, cfg.height);
    int next_id = 1;
    if (cfg.nested) {
        // One large shape with smaller ones straddling it.
        const int radius = cfg.max_radius + cfg.max_radius / 2;
        BinaryMask big = draw_shape(rng, cfg.width, cfg.height, cfg.width / 2, cfg.height / 2, radius);
        sc.shapes.push_back({next_id++, big});
        for (int k = 1; k < count; ++k) {
            for (int attempt = 0; attempt < 50; ++attempt) {
                const int r = rng.uniform_int(cfg.min_radius, std::max(cfg.min_radius, cfg.max_radius * 2 / 3));
                const int cx = rng.uniform_int(r, cfg.width - 1 - r);
                const int cy = rng.uniform_int(r, cfg.height - 1 - r);
                BinaryMask m = draw_shape(rng, cfg.width, cfg.height, cx, cy, r);
                const bool touches_big = foreground_area(mask_and(m, big)) > 0;
                const bool clear_of_small = foreground_area(mask_and(dilate(m, 2), occupied)) == 0;
                if (touches_big && clear_of_small && foreground_area(m) > 0) {
                    occupied = mask_or(occupied, m);
                    sc.shapes.push_back({next_id++, std::move(m)});
                    break;
                }
            }
        }
        return sc;
    }
    for (int k = 0; k < count; ++k) {
        for (int attempt = 0; attempt < 50; ++attempt) {
            const int r = rng.uniform_int(cfg.min_radius, cfg.max_radius);
            const int cx = rng.uniform_int(r, cfg.width - 1 - r);
            const int cy = rng.uniform_int(r, cfg.height - 1 - r);
            BinaryMask m = draw_shape(rng, cfg.width, cfg.height, cx, cy, r);
            if (foreground_area(m) > 0 && foreground_area(mask_and(dilate(m, 3), occupied)) == 0) {
                occupied = mask_or(occupied, m);
                sc.shapes.push_back({next_id++, std::move(m)});
                break;
            }
        }
    }
    return sc;
}

RgbImage render_scene(const OracleScene& scene) {
    RgbImage img{scene.image_id, scene.width, scene.height,
                 std::vector<std::uint8_t>(static_cast<std::size_t>(scene.width) * scene.height * 3, 96)};
    for (const auto& shape : scene.shapes) {
        Rng rng(mix64(scene.seed, static_cast<std::uint64_t>(shape.id) * 7919));
        const std::uint8_t color[3] = {static_cast<std::uint8_t>(rng.uniform_int(128, 255)),
                                       static_cast<std::uint8_t>(rng.uniform_int(0, 255)),
                                       static_cast<std::uint8_t>(rng.uniform_int(0, 127))};
        for (std::size_t p = 0; p < shape.mask.size(); ++p) {
            if (shape.mask[p] != 0) {
                for (int c = 0; c < 3; ++c) {
                    img.data[p * 3 + static_cast<std::size_t>(c)] = color[c];
                }
            }
        }
    }
    return img;
}

} // namespace maskforge
