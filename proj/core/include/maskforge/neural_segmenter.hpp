#pragma once

#include "maskforge/onnx_signature.hpp"
#include "maskforge/segmenter.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace maskforge {

/// Dense float32 tensor, row-major over `shape`.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<float> data;

    std::size_t element_count() const;
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

/// Executes one exported graph. Implementations must be safe to call from
/// several threads at once (serialising internally if needed).
class GraphRunner {
public:
    virtual ~GraphRunner() = default;
    virtual std::vector<Tensor> run(const std::vector<NamedTensor>& inputs,
                                    const std::vector<std::string>& output_names) const = 0;
};

using GraphRunnerFactory = std::function<std::unique_ptr<GraphRunner>(const std::string& graph_path)>;

/// ONNX Runtime when the build found it, otherwise a factory whose runners
/// throw BackendError on first use.
GraphRunnerFactory default_runner_factory();
bool onnxruntime_available();

struct ModelManifest {
    static constexpr int kFormatVersion = 1;

    int format_version = 0;
    /// Longest image side is scaled to this; the input is padded to a square
    /// of this size with the image at the top-left.
    int input_size = 1024;
    std::array<double, 3> pixel_mean{123.675, 116.28, 103.53};
    std::array<double, 3> pixel_std{58.395, 57.12, 57.375};
    int embed_h = 64;
    int embed_w = 64;
    int embed_c = 256;
    int prompt_grid_h = 256;
    int prompt_grid_w = 256;
    int logit_h = 256;
    int logit_w = 256;
    int hidden_dim = 256;
    int num_candidates = 3;

    std::string encoder_file;
    std::string encoder_input = "image";
    std::string encoder_output = "image_embeddings";

    std::string decoder_file;
    std::string decoder_embeddings = "image_embeddings";
    std::string decoder_point_coords = "point_coords";
    std::string decoder_point_labels = "point_labels";
    std::string decoder_mask_input = "mask_input";
    std::string decoder_has_mask = "has_mask_input";
    std::string decoder_logits = "low_res_masks";
    std::string decoder_iou = "iou_predictions";
    std::string decoder_hidden = "iou_hidden";

    /// Directory the graph file names are resolved against.
    std::string base_dir;

    void validate() const;
};

nlohmann::json manifest_to_json(const ModelManifest& m);
ModelManifest manifest_from_json(const nlohmann::json& j);

/// Throws DimMismatchError when the graphs disagree with the manifest.
void validate_graphs(const ModelManifest& m, const GraphSignature& encoder, const GraphSignature& decoder);

/// Promptable segmenter running an exported encoder/decoder pair.
///
/// Images are resized so the longest side equals input_size, normalised per
/// channel and zero-padded bottom/right. Decoder logits live on that padded
/// grid; logits_to_mask upsamples, crops and resizes back to source size.
class NeuralSegmenter final : public PromptedSegmenter {
public:
    NeuralSegmenter(ModelManifest manifest, std::shared_ptr<const GraphRunner> encoder,
                    std::shared_ptr<const GraphRunner> decoder);

    Capabilities capabilities() const override;
    GridSize prompt_grid(int src_width, int src_height) const override;
    ImageEmbedding embed(const RgbImage& image) const override;
    MultiMaskOutput predict(const ImageEmbedding& emb, const PromptSet& prompts) const override;
    BinaryMask logits_to_mask(const RealRaster& logits, int src_width, int src_height) const override;

    const ModelManifest& manifest() const noexcept { return manifest_; }

    /// Encoder input tensor (1 x 3 x S x S) for an image.
    Tensor preprocess(const RgbImage& image) const;
    /// Decoder inputs for a prompt set.
    std::vector<NamedTensor> decoder_inputs(const ImageEmbedding& emb, const PromptSet& prompts) const;

    struct Resized {
        int width;
        int height;
        double scale;
    };
    Resized resized_size(int src_width, int src_height) const;

private:
    ModelManifest manifest_;
    std::shared_ptr<const GraphRunner> encoder_;
    std::shared_ptr<const GraphRunner> decoder_;
};

/// Reads and validates the manifest and both graph signatures, then builds
/// runners through `factory`. Missing or malformed files raise ModelLoadError
/// naming the file; unknown versions VersionMismatchError; inconsistent
/// dimensions DimMismatchError.
std::unique_ptr<NeuralSegmenter> load_neural(const std::string& manifest_path,
                                             const GraphRunnerFactory& factory = default_runner_factory());

} // namespace maskforge
