#include "maskforge/prompts.hpp"

#include "maskforge/raster_ops.hpp"
#include "maskforge/rle.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

namespace maskforge {

namespace {

double gaussian_value(int x, int y, const Point& center, double omega, double gamma, std::size_t area) {
    const double dx = double(x - center.x);
    const double dy = double(y - center.y);
    return omega * std::exp(-(dx * dx + dy * dy) / (double(area) * gamma));
}

// Grid cell -> source pixel under the nearest convention; -1 when outside the image.
int cell_to_pixel(int cell, double cells_per_px, int src_extent) {
    const int px = static_cast<int>(std::floor(double(cell) / cells_per_px));
    return px < src_extent ? px : -1;
}

int pixel_to_cell(int px, double cells_per_px, int grid_extent) {
    const int cell = static_cast<int>(std::floor((px + 0.5) * cells_per_px));
    return std::clamp(cell, 0, grid_extent - 1);
}

void require_foreground(const BinaryMask& mask, const char* what) {
    if (mask.empty() || is_empty(mask)) {
        throw EmptyMaskError(std::string(what) + ": coarse mask has no foreground");
    }
}

} // namespace

void ImageEmbedding::validate() const {
    if (grid_w <= 0 || grid_h <= 0 || channels <= 0 || src_width <= 0 || src_height <= 0) {
        throw DimensionError("embedding: non-positive dimensions");
    }
    if (data.size() != static_cast<std::size_t>(grid_w) * grid_h * channels) {
        throw DimensionError("embedding: data length does not match grid");
    }
    if (!(cells_per_px_x > 0.0) || !(cells_per_px_y > 0.0)) {
        throw DimensionError("embedding: non-positive pixel scale");
    }
    for (float v : data) {
        if (!std::isfinite(v)) {
            throw DimensionError("embedding: non-finite entry");
        }
    }
}

void ExcavationConfig::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ConfigError("excavation: lambda must lie in [0, 1]");
    }
    if (!(omega > 0.0)) {
        throw ConfigError("excavation: omega must be positive");
    }
    if (!(gamma > 0.0)) {
        throw ConfigError("excavation: gamma must be positive");
    }
    if (expand_fraction < 0.0 || max_expand_px < 0 || expand_iters < 0) {
        throw ConfigError("excavation: expansion parameters must be non-negative");
    }
    if (!enabled.any()) {
        throw ConfigError("excavation: no prompt kind enabled");
    }
}

Point positive_point(const BinaryMask& coarse) {
    require_foreground(coarse, "positive_point");
    const RealRaster sq = squared_distance_transform(coarse, BorderMode::background);
    Point best{0, 0, Polarity::positive};
    double best_value = -1.0;
    for (int y = 0; y < sq.height(); ++y) {
        for (int x = 0; x < sq.width(); ++x) {
            if (sq(x, y) > best_value) {
                best_value = sq(x, y);
                best = {x, y, Polarity::positive};
            }
        }
    }
    return best;
}

std::optional<Point> negative_point(const BinaryMask& coarse, const Box& box, double min_distance) {
    if (!box.valid_in(coarse.width(), coarse.height())) {
        throw DimensionError("negative_point: box outside image");
    }
    // Distance of every background pixel to the nearest in-image foreground.
    const RealRaster sq = squared_distance_transform(complement(coarse), BorderMode::ignore);
    std::optional<Point> best;
    double best_value = -1.0;
    for (int y = box.y0; y < box.y1; ++y) {
        for (int x = box.x0; x < box.x1; ++x) {
            if (coarse(x, y) != 0) {
                continue;
            }
            if (sq(x, y) > best_value) {
                best_value = sq(x, y);
                best = Point{x, y, Polarity::negative};
            }
        }
    }
    if (!best || best_value < min_distance * min_distance) {
        return std::nullopt;
    }
    return best;
}

QueryEmbedding query_embedding(const ImageEmbedding& emb, const BinaryMask& coarse) {
    require_foreground(coarse, "query_embedding");
    if (coarse.width() != emb.src_width || coarse.height() != emb.src_height) {
        throw DimensionError("query_embedding: mask does not match embedding source size");
    }
    const auto c = static_cast<std::size_t>(emb.channels);
    std::vector<double> sum(c, 0.0);
    std::size_t count = 0;
    auto accumulate = [&](int cx, int cy) {
        const auto feature = emb.cell(cx, cy);
        for (std::size_t k = 0; k < c; ++k) {
            sum[k] += feature[k];
        }
        ++count;
    };
    for (int cy = 0; cy < emb.grid_h; ++cy) {
        const int py = cell_to_pixel(cy, emb.cells_per_px_y, emb.src_height);
        if (py < 0) {
            continue;
        }
        for (int cx = 0; cx < emb.grid_w; ++cx) {
            const int px = cell_to_pixel(cx, emb.cells_per_px_x, emb.src_width);
            if (px >= 0 && coarse(px, py) != 0) {
                accumulate(cx, cy);
            }
        }
    }
    if (count == 0) {
        // Foreground too thin to survive the resize: fall back to the cell under the deepest point.
        const Point p = positive_point(coarse);
        accumulate(pixel_to_cell(p.x, emb.cells_per_px_x, emb.grid_w),
                   pixel_to_cell(p.y, emb.cells_per_px_y, emb.grid_h));
    }
    for (double& v : sum) {
        v /= double(count);
    }
    return {std::move(sum)};
}

RealRaster cosine_similarity_grid(const QueryEmbedding& query, const ImageEmbedding& emb) {
    if (query.vector.size() != static_cast<std::size_t>(emb.channels)) {
        throw DimensionError("similarity_map: channel mismatch");
    }
    double qnorm = 0.0;
    for (double v : query.vector) {
        qnorm += v * v;
    }
    qnorm = std::sqrt(qnorm);
    if (!(qnorm > 0.0) || !std::isfinite(qnorm)) {
        throw DegenerateFeatureError("similarity_map: query embedding has zero norm");
    }
    RealRaster grid(emb.grid_w, emb.grid_h);
    for (int cy = 0; cy < emb.grid_h; ++cy) {
        for (int cx = 0; cx < emb.grid_w; ++cx) {
            const auto feature = emb.cell(cx, cy);
            double dot = 0.0;
            double fnorm = 0.0;
            for (std::size_t k = 0; k < feature.size(); ++k) {
                dot += query.vector[k] * feature[k];
                fnorm += double(feature[k]) * feature[k];
            }
            grid(cx, cy) = fnorm > 0.0 ? dot / (qnorm * std::sqrt(fnorm)) : 0.0;
        }
    }
    return grid;
}

BinaryMask similarity_map(const QueryEmbedding& query, const ImageEmbedding& emb, double threshold) {
    const RealRaster grid = cosine_similarity_grid(query, emb);
    // Bilinear with half-pixel centres; identical to resize() when the grid
    // covers exactly the source image.
    struct Tap {
        int lo;
        int hi;
        double t;
    };
    auto taps = [](int src_extent, double scale, int grid_extent) {
        std::vector<Tap> result(static_cast<std::size_t>(src_extent));
        for (int i = 0; i < src_extent; ++i) {
            const double g = std::clamp((i + 0.5) * scale - 0.5, 0.0, double(grid_extent - 1));
            const int lo = static_cast<int>(std::floor(g));
            result[static_cast<std::size_t>(i)] = {lo, std::min(lo + 1, grid_extent - 1), g - lo};
        }
        return result;
    };
    const auto tx = taps(emb.src_width, emb.cells_per_px_x, emb.grid_w);
    const auto ty = taps(emb.src_height, emb.cells_per_px_y, emb.grid_h);
    BinaryMask out(emb.src_width, emb.src_height);
    for (int y = 0; y < emb.src_height; ++y) {
        const Tap& a = ty[static_cast<std::size_t>(y)];
        for (int x = 0; x < emb.src_width; ++x) {
            const Tap& b = tx[static_cast<std::size_t>(x)];
            const double top = grid(b.lo, a.lo) * (1.0 - b.t) + grid(b.hi, a.lo) * b.t;
            const double bottom = grid(b.lo, a.hi) * (1.0 - b.t) + grid(b.hi, a.hi) * b.t;
            out(x, y) = top * (1.0 - a.t) + bottom * a.t >= threshold ? 1 : 0;
        }
    }
    return out;
}

Box expand_box(const Box& start, const BinaryMask& similarity, const ExcavationConfig& cfg) {
    const int w = similarity.width();
    const int h = similarity.height();
    Box box = start;

    // Positive ratio over the in-image part of a strip; nullopt if the strip is empty.
    auto ratio = [&](int x0, int y0, int x1, int y1) -> std::optional<double> {
        x0 = std::max(x0, 0);
        y0 = std::max(y0, 0);
        x1 = std::min(x1, w);
        y1 = std::min(y1, h);
        if (x0 >= x1 || y0 >= y1) {
            return std::nullopt;
        }
        long long positive = 0;
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                positive += similarity(x, y) != 0 ? 1 : 0;
            }
        }
        return double(positive) / double(static_cast<long long>(x1 - x0) * (y1 - y0));
    };
    auto strip_width = [&](int side) {
        return std::max(1, static_cast<int>(std::lround(cfg.expand_fraction * side)));
    };

    for (int iter = 0; iter < cfg.expand_iters; ++iter) {
        const int sw_x = strip_width(box.width());
        const int sw_y = strip_width(box.height());
        const int step_x = std::min(sw_x, cfg.max_expand_px);
        const int step_y = std::min(sw_y, cfg.max_expand_px);
        Box next = box;
        // All four directions are judged against the box at the start of the iteration.
        if (auto r = ratio(box.x0 - sw_x, box.y0, box.x0, box.y1); r && *r > cfg.lambda) {
            next.x0 = std::max(0, box.x0 - step_x);
        }
        if (auto r = ratio(box.x1, box.y0, box.x1 + sw_x, box.y1); r && *r > cfg.lambda) {
            next.x1 = std::min(w, box.x1 + step_x);
        }
        if (auto r = ratio(box.x0, box.y0 - sw_y, box.x1, box.y0); r && *r > cfg.lambda) {
            next.y0 = std::max(0, box.y0 - step_y);
        }
        if (auto r = ratio(box.x0, box.y1, box.x1, box.y1 + sw_y); r && *r > cfg.lambda) {
            next.y1 = std::min(h, box.y1 + step_y);
        }
        if (next == box) {
            break;
        }
        box = next;
    }
    return box;
}

Box cebox(const BinaryMask& coarse, const ImageEmbedding& emb, const ExcavationConfig& cfg) {
    const Box tight = tight_box(coarse);
    if (cfg.expand_iters == 0 || cfg.max_expand_px == 0) {
        return tight;
    }
    const QueryEmbedding query = query_embedding(emb, coarse);
    const BinaryMask sim = similarity_map(query, emb, cfg.sim_threshold);
    return expand_box(tight, sim, cfg);
}

SoftMaskPrompt gaussian_mask(const BinaryMask& coarse, const ExcavationConfig& cfg, GridSize grid) {
    require_foreground(coarse, "gaussian_mask");
    if (grid.width <= 0 || grid.height <= 0) {
        throw DimensionError("gaussian_mask: prompt grid must be positive");
    }
    SoftMaskPrompt out;
    out.center = positive_point(coarse);
    out.omega = cfg.omega;
    out.gamma = cfg.gamma;
    out.area = foreground_area(coarse);
    out.values = RealRaster(grid.width, grid.height);
    const int w = coarse.width();
    const int h = coarse.height();
    for (int gy = 0; gy < grid.height; ++gy) {
        const int sy = static_cast<int>(static_cast<long long>(gy) * h / grid.height);
        for (int gx = 0; gx < grid.width; ++gx) {
            const int sx = static_cast<int>(static_cast<long long>(gx) * w / grid.width);
            if (coarse(sx, sy) != 0) {
                out.values(gx, gy) = gaussian_value(sx, sy, out.center, out.omega, out.gamma, out.area);
            }
        }
    }
    return out;
}

PromptSet excavate(const BinaryMask& coarse, const ImageEmbedding& emb, const ExcavationConfig& cfg,
                   GridSize grid) {
    cfg.validate();
    require_foreground(coarse, "excavate");
    PromptSet prompts;
    prompts.src_width = coarse.width();
    prompts.src_height = coarse.height();
    prompts.enabled = cfg.enabled;

    std::optional<Box> box;
    if (cfg.enabled.box) {
        box = cebox(coarse, emb, cfg);
        prompts.box = box;
    }
    if (cfg.enabled.point) {
        prompts.positive = positive_point(coarse);
        const Box search = box ? *box : tight_box(coarse);
        prompts.negative = negative_point(coarse, search, cfg.min_negative_distance);
    }
    if (cfg.enabled.mask) {
        prompts.soft_mask = gaussian_mask(coarse, cfg, grid);
    }
    return prompts;
}

nlohmann::json prompts_to_json(const PromptSet& p) {
    nlohmann::json j;
    j["source_size"] = {p.src_height, p.src_width};
    nlohmann::json enabled = nlohmann::json::array();
    if (p.enabled.point) enabled.push_back("point");
    if (p.enabled.box) enabled.push_back("box");
    if (p.enabled.mask) enabled.push_back("mask");
    j["enabled"] = enabled;

    nlohmann::json points = nlohmann::json::array();
    if (p.positive) points.push_back({p.positive->x, p.positive->y, 1});
    if (p.negative) points.push_back({p.negative->x, p.negative->y, 0});
    j["points"] = points;
    if (p.box) {
        j["box"] = {p.box->x0, p.box->y0, p.box->x1, p.box->y1};
    }
    if (p.soft_mask) {
        const SoftMaskPrompt& m = *p.soft_mask;
        BinaryMask support(m.values.width(), m.values.height());
        for (std::size_t i = 0; i < m.values.size(); ++i) {
            support[i] = m.values[i] > 0.0 ? 1 : 0;
        }
        j["soft_mask"] = {{"support", rle_to_json(rle_encode(support))},
                          {"center", {m.center.x, m.center.y}},
                          {"omega", m.omega},
                          {"gamma", m.gamma},
                          {"area", m.area}};
    }
    return j;
}

PromptSet prompts_from_json(const nlohmann::json& j) {
    try {
        PromptSet p;
        p.src_height = j.at("source_size").at(0).get<int>();
        p.src_width = j.at("source_size").at(1).get<int>();
        p.enabled = {false, false, false};
        for (const auto& kind : j.at("enabled")) {
            const auto name = kind.get<std::string>();
            if (name == "point") p.enabled.point = true;
            else if (name == "box") p.enabled.box = true;
            else if (name == "mask") p.enabled.mask = true;
            else throw FormatError("prompts: unknown prompt kind '" + name + "'");
        }
        for (const auto& pt : j.at("points")) {
            Point point{pt.at(0).get<int>(), pt.at(1).get<int>(),
                        pt.at(2).get<int>() != 0 ? Polarity::positive : Polarity::negative};
            if (point.polarity == Polarity::positive) p.positive = point;
            else p.negative = point;
        }
        if (j.contains("box")) {
            const auto& b = j.at("box");
            p.box = Box{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
        }
        if (j.contains("soft_mask")) {
            const auto& s = j.at("soft_mask");
            SoftMaskPrompt m;
            m.center = {s.at("center").at(0).get<int>(), s.at("center").at(1).get<int>(), Polarity::positive};
            m.omega = s.at("omega").get<double>();
            m.gamma = s.at("gamma").get<double>();
            m.area = s.at("area").get<std::size_t>();
            const BinaryMask support = rle_decode(rle_from_json(s.at("support")));
            m.values = RealRaster(support.width(), support.height());
            for (int gy = 0; gy < support.height(); ++gy) {
                const int sy = static_cast<int>(static_cast<long long>(gy) * p.src_height / support.height());
                for (int gx = 0; gx < support.width(); ++gx) {
                    if (support(gx, gy) != 0) {
                        const int sx = static_cast<int>(static_cast<long long>(gx) * p.src_width / support.width());
                        m.values(gx, gy) = gaussian_value(sx, sy, m.center, m.omega, m.gamma, m.area);
                    }
                }
            }
            p.soft_mask = std::move(m);
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("prompts: malformed json: ") + e.what());
    }
}

} // namespace maskforge
