#pragma once

#include "maskforge/prompts.hpp"
#include "maskforge/raster.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace maskforge {

/// Interleaved 8-bit RGB.
struct RgbImage {
    std::string id;
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

struct Capabilities {
    int num_candidates = 3;
    int hidden_dim = 0;
    int embedding_channels = 0;
};

/// K candidate masks with quality scores and quality-head hidden vectors.
struct MultiMaskOutput {
    std::vector<BinaryMask> masks;
    std::vector<RealRaster> logits;
    std::vector<double> iou_pred;
    std::vector<std::vector<double>> hidden;

    std::size_t size() const noexcept { return masks.size(); }
};

/// A promptable segmenter. Implementations are immutable after construction
/// and callable from any number of threads.
class PromptedSegmenter {
public:
    virtual ~PromptedSegmenter() = default;

    virtual Capabilities capabilities() const = 0;

    /// Resolution at which soft-mask prompts are consumed for a source image.
    virtual GridSize prompt_grid(int src_width, int src_height) const = 0;

    virtual ImageEmbedding embed(const RgbImage& image) const = 0;

    /// Throws ConfigError when no prompt is present.
    virtual MultiMaskOutput predict(const ImageEmbedding& emb, const PromptSet& prompts) const = 0;

    /// Maps one low-resolution logit raster to a source-resolution mask.
    /// The default is a half-pixel bilinear resize thresholded at > 0.
    virtual BinaryMask logits_to_mask(const RealRaster& logits, int src_width, int src_height) const;
};

/// Throws BackendError unless the output has K entries everywhere and every
/// mask equals logits_to_mask(logits).
void check_output(const PromptedSegmenter& backend, const MultiMaskOutput& out, int src_width, int src_height);

/// Throws ConfigError if the set carries no usable prompt.
void require_prompts(const PromptSet& prompts);

} // namespace maskforge
