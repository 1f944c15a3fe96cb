#include "maskforge/harness/fixtures.hpp"

#include "maskforge/error.hpp"
#include "maskforge/harness/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace maskforge {

namespace {

using nlohmann::json;

std::vector<double> channel_first(const ImageEmbedding& emb) {
    std::vector<double> out(emb.data.size());
    const auto hw = static_cast<std::size_t>(emb.grid_h) * emb.grid_w;
    for (std::size_t p = 0; p < hw; ++p) {
        for (int k = 0; k < emb.channels; ++k) {
            out[static_cast<std::size_t>(k) * hw + p] = emb.data[p * emb.channels + static_cast<std::size_t>(k)];
        }
    }
    return out;
}

template <typename A, typename B>
double max_abs(const A& a, const B& b) {
    if (a.size() != b.size()) {
        throw DimensionError("size " + std::to_string(a.size()) + " vs expected " + std::to_string(b.size()));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    }
    return m;
}

} // namespace

bool ParityResult::pass() const {
    return error.empty() && embedding_max_abs < tolerance && logits_max_abs < tolerance && iou_max_abs < tolerance &&
           hidden_max_abs < tolerance;
}

ParityFixture record_fixture(const PromptedSegmenter& backend, const RgbImage& image, const PromptSet& prompts,
                             const std::string& name) {
    ParityFixture f;
    f.name = name;
    f.image = image;
    f.prompts = prompts;
    const ImageEmbedding emb = backend.embed(image);
    f.embed_c = emb.channels;
    f.embed_h = emb.grid_h;
    f.embed_w = emb.grid_w;
    f.embedding = channel_first(emb);
    MultiMaskOutput out = backend.predict(emb, prompts);
    f.logits = std::move(out.logits);
    f.iou = std::move(out.iou_pred);
    f.hidden = std::move(out.hidden);
    return f;
}

ParityResult check_fixture(const PromptedSegmenter& backend, const ParityFixture& f) {
    ParityResult r;
    r.name = f.name;
    r.tolerance = f.tolerance;
    try {
        const ImageEmbedding emb = backend.embed(f.image);
        if (emb.channels != f.embed_c || emb.grid_h != f.embed_h || emb.grid_w != f.embed_w) {
            throw DimensionError("embedding shape differs from fixture");
        }
        r.embedding_max_abs = max_abs(channel_first(emb), f.embedding);
        const MultiMaskOutput out = backend.predict(emb, f.prompts);
        if (out.logits.size() != f.logits.size() || out.hidden.size() != f.hidden.size()) {
            throw DimensionError("candidate count differs from fixture");
        }
        for (std::size_t i = 0; i < f.logits.size(); ++i) {
            if (!out.logits[i].same_dims(f.logits[i])) {
                throw DimensionError("logit grid differs from fixture");
            }
            r.logits_max_abs = std::max(r.logits_max_abs, max_abs(out.logits[i].pixels(), f.logits[i].pixels()));
            r.hidden_max_abs = std::max(r.hidden_max_abs, max_abs(out.hidden[i], f.hidden[i]));
        }
        r.iou_max_abs = max_abs(out.iou_pred, f.iou);
    } catch (const Error& e) {
        r.error = e.what();
    }
    return r;
}

void save_fixture(const std::string& dir, const ParityFixture& f) {
    fs::create_directories(dir);
    write_rgb_png((fs::path(dir) / (f.name + ".png")).string(), f.image);
    json logits_data = json::array();
    int lh = 0;
    int lw = 0;
    for (const auto& l : f.logits) {
        lh = l.height();
        lw = l.width();
        for (double v : l.pixels()) {
            logits_data.push_back(v);
        }
    }
    const json j = {
        {"format", "maskforge-fixture"},
        {"version", ParityFixture::kFormatVersion},
        {"name", f.name},
        {"image", f.name + ".png"},
        {"image_id", f.image.id},
        {"prompts", prompts_to_json(f.prompts)},
        {"tolerance", f.tolerance},
        {"expected",
         {{"embedding", {{"shape", {f.embed_c, f.embed_h, f.embed_w}}, {"data", f.embedding}}},
          {"logits", {{"shape", {f.logits.size(), lh, lw}}, {"data", logits_data}}},
          {"iou", f.iou},
          {"hidden", f.hidden}}},
    };
    const std::string path = (fs::path(dir) / (f.name + ".json")).string();
    std::ofstream out(path);
    if (!out) {
        throw IoError(path, "cannot write fixture");
    }
    out << j.dump() << '\n';
}

ParityFixture load_fixture(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(path, "cannot open fixture");
    }
    try {
        json j;
        in >> j;
        if (j.at("format").get<std::string>() != "maskforge-fixture") {
            throw FormatError(path + ": not a parity fixture");
        }
        if (j.at("version").get<int>() != ParityFixture::kFormatVersion) {
            throw VersionMismatchError(path + ": unsupported fixture version " +
                                       std::to_string(j.at("version").get<int>()));
        }
        ParityFixture f;
        f.name = j.at("name").get<std::string>();
        f.image = read_rgb_png((fs::path(path).parent_path() / j.at("image").get<std::string>()).string());
        f.image.id = j.value("image_id", f.name);
        f.prompts = prompts_from_json(j.at("prompts"));
        f.tolerance = j.value("tolerance", 1e-3);
        const json& e = j.at("expected");
        const auto eshape = e.at("embedding").at("shape").get<std::vector<int>>();
        if (eshape.size() != 3) {
            throw FormatError(path + ": embedding shape must be [c, h, w]");
        }
        f.embed_c = eshape[0];
        f.embed_h = eshape[1];
        f.embed_w = eshape[2];
        f.embedding = e.at("embedding").at("data").get<std::vector<double>>();
        const auto lshape = e.at("logits").at("shape").get<std::vector<int>>();
        const auto ldata = e.at("logits").at("data").get<std::vector<double>>();
        if (lshape.size() != 3 ||
            ldata.size() != static_cast<std::size_t>(lshape[0]) * static_cast<std::size_t>(lshape[1]) * lshape[2] ||
            f.embedding.size() != static_cast<std::size_t>(f.embed_c) * f.embed_h * f.embed_w) {
            throw FormatError(path + ": expected tensor sizes do not match their shapes");
        }
        for (int k = 0; k < lshape[0]; ++k) {
            RealRaster l(lshape[2], lshape[1]);
            std::copy_n(ldata.begin() + static_cast<std::ptrdiff_t>(k) * lshape[1] * lshape[2], l.size(),
                        l.pixels().begin());
            f.logits.push_back(std::move(l));
        }
        f.iou = e.at("iou").get<std::vector<double>>();
        f.hidden = e.at("hidden").get<std::vector<std::vector<double>>>();
        return f;
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
}

json parity_to_json(const std::vector<ParityResult>& results) {
    json rows = json::array();
    bool all = true;
    for (const auto& r : results) {
        json row = {{"name", r.name},
                    {"embedding_max_abs", r.embedding_max_abs},
                    {"logits_max_abs", r.logits_max_abs},
                    {"iou_max_abs", r.iou_max_abs},
                    {"hidden_max_abs", r.hidden_max_abs},
                    {"tolerance", r.tolerance},
                    {"pass", r.pass()}};
        if (!r.error.empty()) {
            row["error"] = r.error;
        }
        all = all && r.pass();
        rows.push_back(row);
    }
    return {{"schema_version", 1}, {"fixtures", rows}, {"pass", all}};
}

} // namespace maskforge
