#include "maskforge/neural_segmenter.hpp"

#include "maskforge/raster_ops.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

namespace maskforge {

#ifdef MASKFORGE_HAVE_ONNXRUNTIME
std::unique_ptr<GraphRunner> make_ort_runner(const std::string& path);
#endif

std::size_t Tensor::element_count() const {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= static_cast<std::size_t>(std::max<std::int64_t>(d, 0));
    }
    return n;
}

namespace {

class UnavailableRunner final : public GraphRunner {
public:
    explicit UnavailableRunner(std::string path) : path_(std::move(path)) {}

    std::vector<Tensor> run(const std::vector<NamedTensor>&, const std::vector<std::string>&) const override {
        throw BackendError("cannot execute '" + path_ + "': built without ONNX Runtime");
    }

private:
    std::string path_;
};

void require_positive(int v, const char* what) {
    if (v <= 0) {
        throw DimMismatchError(std::string("manifest: ") + what + " must be positive");
    }
}

void expect_dims(const TensorSignature* sig, const std::vector<std::int64_t>& expected, const std::string& graph,
                 const std::string& name) {
    if (sig == nullptr) {
        throw DimMismatchError(graph + ": graph has no tensor named '" + name + "'");
    }
    if (sig->dims.empty()) {
        return;
    }
    if (sig->dims.size() != expected.size()) {
        throw DimMismatchError(graph + ": '" + name + "' has rank " + std::to_string(sig->dims.size()) +
                               ", manifest implies " + std::to_string(expected.size()));
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (sig->dims[i] >= 0 && expected[i] >= 0 && sig->dims[i] != expected[i]) {
            throw DimMismatchError(graph + ": '" + name + "' dim " + std::to_string(i) + " is " +
                                   std::to_string(sig->dims[i]) + ", manifest says " + std::to_string(expected[i]));
        }
    }
}

void expect_shape(const Tensor& t, const std::vector<std::int64_t>& expected, const std::string& name) {
    bool ok = t.shape.size() == expected.size();
    for (std::size_t i = 0; ok && i < expected.size(); ++i) {
        ok = expected[i] < 0 || t.shape[i] == expected[i];
    }
    if (!ok || t.data.size() != t.element_count()) {
        std::string got;
        for (auto d : t.shape) {
            got += std::to_string(d) + " ";
        }
        throw DimMismatchError("graph output '" + name + "' has unexpected shape [ " + got + "]");
    }
}

} // namespace

GraphRunnerFactory default_runner_factory() {
#ifdef MASKFORGE_HAVE_ONNXRUNTIME
    return [](const std::string& path) { return make_ort_runner(path); };
#else
    return [](const std::string& path) -> std::unique_ptr<GraphRunner> {
        return std::make_unique<UnavailableRunner>(path);
    };
#endif
}

bool onnxruntime_available() {
#ifdef MASKFORGE_HAVE_ONNXRUNTIME
    return true;
#else
    return false;
#endif
}

void ModelManifest::validate() const {
    if (format_version != kFormatVersion) {
        throw VersionMismatchError("manifest: format_version " + std::to_string(format_version) +
                                   " is not supported (expected " + std::to_string(kFormatVersion) + ")");
    }
    require_positive(input_size, "input_size");
    require_positive(embed_h, "embedding.height");
    require_positive(embed_w, "embedding.width");
    require_positive(embed_c, "embedding.channels");
    require_positive(prompt_grid_h, "prompt_grid.height");
    require_positive(prompt_grid_w, "prompt_grid.width");
    require_positive(logit_h, "logit_grid.height");
    require_positive(logit_w, "logit_grid.width");
    require_positive(hidden_dim, "hidden_dim");
    require_positive(num_candidates, "num_candidates");
    for (double s : pixel_std) {
        if (!(s > 0.0)) {
            throw DimMismatchError("manifest: pixel_std entries must be positive");
        }
    }
    if (encoder_file.empty() || decoder_file.empty()) {
        throw ModelLoadError("manifest", "encoder and decoder file names are required");
    }
}

nlohmann::json manifest_to_json(const ModelManifest& m) {
    return {
        {"format_version", m.format_version},
        {"input_size", m.input_size},
        {"padding", "bottom_right"},
        {"pixel_mean", m.pixel_mean},
        {"pixel_std", m.pixel_std},
        {"embedding", {{"height", m.embed_h}, {"width", m.embed_w}, {"channels", m.embed_c}}},
        {"prompt_grid", {{"height", m.prompt_grid_h}, {"width", m.prompt_grid_w}}},
        {"logit_grid", {{"height", m.logit_h}, {"width", m.logit_w}}},
        {"hidden_dim", m.hidden_dim},
        {"num_candidates", m.num_candidates},
        {"encoder", {{"file", m.encoder_file}, {"input", m.encoder_input}, {"output", m.encoder_output}}},
        {"decoder",
         {{"file", m.decoder_file},
          {"inputs",
           {{"embeddings", m.decoder_embeddings},
            {"point_coords", m.decoder_point_coords},
            {"point_labels", m.decoder_point_labels},
            {"mask_input", m.decoder_mask_input},
            {"has_mask_input", m.decoder_has_mask}}},
          {"outputs", {{"logits", m.decoder_logits}, {"iou", m.decoder_iou}, {"hidden", m.decoder_hidden}}}}},
    };
}

ModelManifest manifest_from_json(const nlohmann::json& j) {
    try {
        ModelManifest m;
        m.format_version = j.at("format_version").get<int>();
        if (m.format_version != ModelManifest::kFormatVersion) {
            m.validate();
        }
        if (j.value("padding", std::string("bottom_right")) != "bottom_right") {
            throw ModelLoadError("manifest", "only bottom_right padding is supported");
        }
        m.input_size = j.at("input_size").get<int>();
        m.pixel_mean = j.at("pixel_mean").get<std::array<double, 3>>();
        m.pixel_std = j.at("pixel_std").get<std::array<double, 3>>();
        const auto& e = j.at("embedding");
        m.embed_h = e.at("height").get<int>();
        m.embed_w = e.at("width").get<int>();
        m.embed_c = e.at("channels").get<int>();
        m.prompt_grid_h = j.at("prompt_grid").at("height").get<int>();
        m.prompt_grid_w = j.at("prompt_grid").at("width").get<int>();
        m.logit_h = j.at("logit_grid").at("height").get<int>();
        m.logit_w = j.at("logit_grid").at("width").get<int>();
        m.hidden_dim = j.at("hidden_dim").get<int>();
        m.num_candidates = j.value("num_candidates", 3);
        const auto& enc = j.at("encoder");
        m.encoder_file = enc.at("file").get<std::string>();
        m.encoder_input = enc.value("input", m.encoder_input);
        m.encoder_output = enc.value("output", m.encoder_output);
        const auto& dec = j.at("decoder");
        m.decoder_file = dec.at("file").get<std::string>();
        if (dec.contains("inputs")) {
            const auto& in = dec.at("inputs");
            m.decoder_embeddings = in.value("embeddings", m.decoder_embeddings);
            m.decoder_point_coords = in.value("point_coords", m.decoder_point_coords);
            m.decoder_point_labels = in.value("point_labels", m.decoder_point_labels);
            m.decoder_mask_input = in.value("mask_input", m.decoder_mask_input);
            m.decoder_has_mask = in.value("has_mask_input", m.decoder_has_mask);
        }
        if (dec.contains("outputs")) {
            const auto& out = dec.at("outputs");
            m.decoder_logits = out.value("logits", m.decoder_logits);
            m.decoder_iou = out.value("iou", m.decoder_iou);
            m.decoder_hidden = out.value("hidden", m.decoder_hidden);
        }
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ModelLoadError("manifest", e.what());
    }
}

void validate_graphs(const ModelManifest& m, const GraphSignature& encoder, const GraphSignature& decoder) {
    const std::int64_t s = m.input_size;
    const std::int64_t k = m.num_candidates;
    expect_dims(encoder.input(m.encoder_input), {1, 3, s, s}, m.encoder_file, m.encoder_input);
    expect_dims(encoder.output(m.encoder_output), {1, m.embed_c, m.embed_h, m.embed_w}, m.encoder_file,
                m.encoder_output);
    expect_dims(decoder.input(m.decoder_embeddings), {1, m.embed_c, m.embed_h, m.embed_w}, m.decoder_file,
                m.decoder_embeddings);
    expect_dims(decoder.input(m.decoder_point_coords), {1, -1, 2}, m.decoder_file, m.decoder_point_coords);
    expect_dims(decoder.input(m.decoder_point_labels), {1, -1}, m.decoder_file, m.decoder_point_labels);
    expect_dims(decoder.input(m.decoder_mask_input), {1, 1, m.prompt_grid_h, m.prompt_grid_w}, m.decoder_file,
                m.decoder_mask_input);
    expect_dims(decoder.input(m.decoder_has_mask), {1}, m.decoder_file, m.decoder_has_mask);
    expect_dims(decoder.output(m.decoder_logits), {1, k, m.logit_h, m.logit_w}, m.decoder_file, m.decoder_logits);
    expect_dims(decoder.output(m.decoder_iou), {1, k}, m.decoder_file, m.decoder_iou);
    expect_dims(decoder.output(m.decoder_hidden), {1, k, m.hidden_dim}, m.decoder_file, m.decoder_hidden);
}

NeuralSegmenter::NeuralSegmenter(ModelManifest manifest, std::shared_ptr<const GraphRunner> encoder,
                                 std::shared_ptr<const GraphRunner> decoder)
    : manifest_(std::move(manifest)), encoder_(std::move(encoder)), decoder_(std::move(decoder)) {
    manifest_.validate();
    if (!encoder_ || !decoder_) {
        throw BackendError("neural backend: missing graph runner");
    }
}

Capabilities NeuralSegmenter::capabilities() const {
    return {manifest_.num_candidates, manifest_.hidden_dim, manifest_.embed_c};
}

NeuralSegmenter::Resized NeuralSegmenter::resized_size(int src_width, int src_height) const {
    if (src_width <= 0 || src_height <= 0) {
        throw DimensionError("neural backend: empty image");
    }
    const double scale = double(manifest_.input_size) / double(std::max(src_width, src_height));
    return {std::max(1, static_cast<int>(src_width * scale + 0.5)),
            std::max(1, static_cast<int>(src_height * scale + 0.5)), scale};
}

GridSize NeuralSegmenter::prompt_grid(int src_width, int src_height) const {
    const Resized r = resized_size(src_width, src_height);
    const double s = manifest_.input_size;
    return {std::clamp(static_cast<int>(std::lround(r.width * manifest_.prompt_grid_w / s)), 1, manifest_.prompt_grid_w),
            std::clamp(static_cast<int>(std::lround(r.height * manifest_.prompt_grid_h / s)), 1,
                       manifest_.prompt_grid_h)};
}

Tensor NeuralSegmenter::preprocess(const RgbImage& image) const {
    if (image.data.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
        throw DimensionError("neural backend: RGB buffer size mismatch");
    }
    const Resized r = resized_size(image.width, image.height);
    const int s = manifest_.input_size;
    Tensor t{{1, 3, s, s}, std::vector<float>(static_cast<std::size_t>(3) * s * s, 0.0f)};
    for (int c = 0; c < 3; ++c) {
        RealRaster channel(image.width, image.height);
        for (std::size_t p = 0; p < channel.size(); ++p) {
            channel[p] = image.data[p * 3 + static_cast<std::size_t>(c)];
        }
        const RealRaster scaled = resize(channel, r.width, r.height, ResizeMode::bilinear);
        float* plane = t.data.data() + static_cast<std::size_t>(c) * s * s;
        for (int y = 0; y < r.height; ++y) {
            for (int x = 0; x < r.width; ++x) {
                plane[static_cast<std::size_t>(y) * s + x] = static_cast<float>(
                    (scaled(x, y) - manifest_.pixel_mean[static_cast<std::size_t>(c)]) /
                    manifest_.pixel_std[static_cast<std::size_t>(c)]);
            }
        }
    }
    return t;
}

ImageEmbedding NeuralSegmenter::embed(const RgbImage& image) const {
    const Tensor input = preprocess(image);
    auto outputs = encoder_->run({{manifest_.encoder_input, input}}, {manifest_.encoder_output});
    if (outputs.size() != 1) {
        throw BackendError("encoder returned " + std::to_string(outputs.size()) + " outputs");
    }
    const Tensor& out = outputs.front();
    const int c = manifest_.embed_c;
    const int h = manifest_.embed_h;
    const int w = manifest_.embed_w;
    expect_shape(out, {1, c, h, w}, manifest_.encoder_output);

    const Resized r = resized_size(image.width, image.height);
    ImageEmbedding emb;
    emb.source_id = image.id;
    emb.grid_w = w;
    emb.grid_h = h;
    emb.channels = c;
    emb.src_width = image.width;
    emb.src_height = image.height;
    emb.cells_per_px_x = r.scale * w / manifest_.input_size;
    emb.cells_per_px_y = r.scale * h / manifest_.input_size;
    emb.data.resize(static_cast<std::size_t>(c) * h * w);
    for (int k = 0; k < c; ++k) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                emb.data[(static_cast<std::size_t>(y) * w + x) * c + k] =
                    out.data[(static_cast<std::size_t>(k) * h + y) * w + x];
            }
        }
    }
    emb.validate();
    return emb;
}

std::vector<NamedTensor> NeuralSegmenter::decoder_inputs(const ImageEmbedding& emb, const PromptSet& prompts) const {
    require_prompts(prompts);
    const int c = manifest_.embed_c;
    const int h = manifest_.embed_h;
    const int w = manifest_.embed_w;
    if (emb.channels != c || emb.grid_h != h || emb.grid_w != w) {
        throw DimMismatchError("decoder: embedding does not match manifest");
    }
    if (prompts.src_width != emb.src_width || prompts.src_height != emb.src_height) {
        throw DimensionError("decoder: prompts do not match the embedded image");
    }
    Tensor embeddings{{1, c, h, w}, std::vector<float>(emb.data.size())};
    for (int k = 0; k < c; ++k) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                embeddings.data[(static_cast<std::size_t>(k) * h + y) * w + x] =
                    emb.data[(static_cast<std::size_t>(y) * w + x) * c + k];
            }
        }
    }

    const Resized r = resized_size(prompts.src_width, prompts.src_height);
    const double sx = double(r.width) / prompts.src_width;
    const double sy = double(r.height) / prompts.src_height;
    std::vector<float> coords;
    std::vector<float> labels;
    auto add = [&](double x, double y, float label) {
        coords.push_back(static_cast<float>(x * sx));
        coords.push_back(static_cast<float>(y * sy));
        labels.push_back(label);
    };
    if (prompts.enabled.point && prompts.positive) {
        add(prompts.positive->x, prompts.positive->y, 1.0f);
        if (prompts.negative) {
            add(prompts.negative->x, prompts.negative->y, 0.0f);
        }
    }
    if (prompts.enabled.box && prompts.box) {
        add(prompts.box->x0, prompts.box->y0, 2.0f);
        add(prompts.box->x1, prompts.box->y1, 3.0f);
    } else {
        // Padding point expected by exported decoders when no box is given.
        coords.push_back(0.0f);
        coords.push_back(0.0f);
        labels.push_back(-1.0f);
    }
    const auto n = static_cast<std::int64_t>(labels.size());

    const int pgh = manifest_.prompt_grid_h;
    const int pgw = manifest_.prompt_grid_w;
    Tensor mask{{1, 1, pgh, pgw}, std::vector<float>(static_cast<std::size_t>(pgh) * pgw, 0.0f)};
    float has_mask = 0.0f;
    if (prompts.enabled.mask && prompts.soft_mask) {
        const RealRaster& values = prompts.soft_mask->values;
        const GridSize grid = prompt_grid(prompts.src_width, prompts.src_height);
        if (values.width() != grid.width || values.height() != grid.height) {
            throw DimensionError("decoder: soft mask is not on this backend's prompt grid");
        }
        for (int y = 0; y < values.height(); ++y) {
            for (int x = 0; x < values.width(); ++x) {
                mask.data[static_cast<std::size_t>(y) * pgw + x] = static_cast<float>(values(x, y));
            }
        }
        has_mask = 1.0f;
    }

    return {
        {manifest_.decoder_embeddings, std::move(embeddings)},
        {manifest_.decoder_point_coords, {{1, n, 2}, std::move(coords)}},
        {manifest_.decoder_point_labels, {{1, n}, std::move(labels)}},
        {manifest_.decoder_mask_input, std::move(mask)},
        {manifest_.decoder_has_mask, {{1}, {has_mask}}},
    };
}

MultiMaskOutput NeuralSegmenter::predict(const ImageEmbedding& emb, const PromptSet& prompts) const {
    auto outputs = decoder_->run(decoder_inputs(emb, prompts),
                                 {manifest_.decoder_logits, manifest_.decoder_iou, manifest_.decoder_hidden});
    if (outputs.size() != 3) {
        throw BackendError("decoder returned " + std::to_string(outputs.size()) + " outputs, expected 3");
    }
    const int k = manifest_.num_candidates;
    const int lh = manifest_.logit_h;
    const int lw = manifest_.logit_w;
    const int dh = manifest_.hidden_dim;
    expect_shape(outputs[0], {1, k, lh, lw}, manifest_.decoder_logits);
    expect_shape(outputs[1], {1, k}, manifest_.decoder_iou);
    expect_shape(outputs[2], {1, k, dh}, manifest_.decoder_hidden);

    MultiMaskOutput out;
    const std::size_t plane = static_cast<std::size_t>(lh) * lw;
    for (int i = 0; i < k; ++i) {
        RealRaster logits(lw, lh);
        for (std::size_t p = 0; p < plane; ++p) {
            logits[p] = outputs[0].data[static_cast<std::size_t>(i) * plane + p];
        }
        out.masks.push_back(logits_to_mask(logits, emb.src_width, emb.src_height));
        out.logits.push_back(std::move(logits));
        out.iou_pred.push_back(outputs[1].data[static_cast<std::size_t>(i)]);
        out.hidden.emplace_back(outputs[2].data.begin() + static_cast<std::ptrdiff_t>(i) * dh,
                                outputs[2].data.begin() + static_cast<std::ptrdiff_t>(i + 1) * dh);
    }
    return out;
}

BinaryMask NeuralSegmenter::logits_to_mask(const RealRaster& logits, int src_width, int src_height) const {
    const int s = manifest_.input_size;
    const Resized r = resized_size(src_width, src_height);
    const RealRaster padded = resize(logits, s, s, ResizeMode::bilinear);
    RealRaster cropped(r.width, r.height);
    for (int y = 0; y < r.height; ++y) {
        for (int x = 0; x < r.width; ++x) {
            cropped(x, y) = padded(x, y);
        }
    }
    return threshold_above(resize(cropped, src_width, src_height, ResizeMode::bilinear), 0.0);
}

std::unique_ptr<NeuralSegmenter> load_neural(const std::string& manifest_path, const GraphRunnerFactory& factory) {
    std::ifstream in(manifest_path);
    if (!in) {
        throw ModelLoadError(manifest_path, "file not found or unreadable");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ModelLoadError(manifest_path, e.what());
    }
    ModelManifest m;
    try {
        m = manifest_from_json(j);
    } catch (const ModelLoadError& e) {
        throw ModelLoadError(manifest_path, e.what());
    }
    m.base_dir = std::filesystem::path(manifest_path).parent_path().string();
    const auto resolve = [&](const std::string& name) { return (std::filesystem::path(m.base_dir) / name).string(); };
    const std::string encoder_path = resolve(m.encoder_file);
    const std::string decoder_path = resolve(m.decoder_file);
    validate_graphs(m, read_onnx_signature(encoder_path), read_onnx_signature(decoder_path));
    std::shared_ptr<const GraphRunner> encoder = factory(encoder_path);
    std::shared_ptr<const GraphRunner> decoder = factory(decoder_path);
    return std::make_unique<NeuralSegmenter>(std::move(m), std::move(encoder), std::move(decoder));
}

} // namespace maskforge
