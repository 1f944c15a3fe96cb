#pragma once

#include "maskforge/raster.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace maskforge {

/// Spatial feature tensor produced by a backend encoder.
///
/// Cell (cx, cy) holds `channels` reals at data[(cy * grid_w + cx) * channels].
/// `cells_per_px_x/y` map source pixels onto the grid: source pixel x covers
/// grid coordinate x * cells_per_px_x. A grid may extend past the source image
/// (padded encoders); cells mapping outside the image are never foreground.
struct ImageEmbedding {
    /// Id of the image the embedding was computed from.
    std::string source_id;
    int grid_w = 0;
    int grid_h = 0;
    int channels = 0;
    int src_width = 0;
    int src_height = 0;
    double cells_per_px_x = 1.0;
    double cells_per_px_y = 1.0;
    std::vector<float> data;

    std::span<const float> cell(int cx, int cy) const {
        return {data.data() + (static_cast<std::size_t>(cy) * static_cast<std::size_t>(grid_w) +
                               static_cast<std::size_t>(cx)) * static_cast<std::size_t>(channels),
                static_cast<std::size_t>(channels)};
    }

    /// Throws DimensionError when sizes disagree or entries are not finite.
    void validate() const;
};

struct QueryEmbedding {
    std::vector<double> vector;
};

/// Soft mask prompt on the backend's prompt grid.
struct SoftMaskPrompt {
    RealRaster values;
    /// Amplitude peak in source pixel coordinates.
    Point center;
    double omega = 0.0;
    double gamma = 0.0;
    /// Foreground area of the coarse mask the prompt was built from.
    std::size_t area = 0;

    friend bool operator==(const SoftMaskPrompt&, const SoftMaskPrompt&) = default;
};

struct PromptKinds {
    bool point = true;
    bool box = true;
    bool mask = true;

    static PromptKinds all() { return {true, true, true}; }
    static PromptKinds point_only() { return {true, false, false}; }
    static PromptKinds box_only() { return {false, true, false}; }
    static PromptKinds mask_only() { return {false, false, true}; }
    bool any() const noexcept { return point || box || mask; }

    friend bool operator==(const PromptKinds&, const PromptKinds&) = default;
};

/// Prompts mined for one target. Fields for disabled kinds are left unset.
struct PromptSet {
    int src_width = 0;
    int src_height = 0;
    PromptKinds enabled;
    std::optional<Point> positive;
    std::optional<Point> negative;
    std::optional<Box> box;
    std::optional<SoftMaskPrompt> soft_mask;

    friend bool operator==(const PromptSet&, const PromptSet&) = default;
};

struct ExcavationConfig {
    /// Minimum positive similarity ratio in a strip for the box to grow.
    double lambda = 0.1;
    double omega = 15.0;
    double gamma = 4.0;
    double sim_threshold = 0.5;
    /// Strip width as a fraction of the box side it extends.
    double expand_fraction = 0.10;
    int max_expand_px = 16;
    int expand_iters = 3;
    /// Negative clicks closer than this to the foreground are dropped.
    double min_negative_distance = 2.0;
    PromptKinds enabled = PromptKinds::all();

    void validate() const;
};

struct GridSize {
    int width = 0;
    int height = 0;
};

Point positive_point(const BinaryMask& coarse);
std::optional<Point> negative_point(const BinaryMask& coarse, const Box& box,
                                    double min_distance = 2.0);

QueryEmbedding query_embedding(const ImageEmbedding& emb, const BinaryMask& coarse);

/// Per-cell cosine similarity against the query.
RealRaster cosine_similarity_grid(const QueryEmbedding& query, const ImageEmbedding& emb);

/// Cosine similarity upsampled (bilinear, half-pixel centres) to source
/// resolution and thresholded at `threshold` (value >= threshold -> 1).
BinaryMask similarity_map(const QueryEmbedding& query, const ImageEmbedding& emb, double threshold = 0.5);

/// Context-aware elastic box: the tight box grown towards similar context.
Box cebox(const BinaryMask& coarse, const ImageEmbedding& emb, const ExcavationConfig& cfg);

/// Same expansion loop over a precomputed similarity map.
Box expand_box(const Box& start, const BinaryMask& similarity, const ExcavationConfig& cfg);

/// Gaussian-style soft mask centred on the deepest interior point, zero
/// outside the coarse foreground, nearest-resized to `grid`.
SoftMaskPrompt gaussian_mask(const BinaryMask& coarse, const ExcavationConfig& cfg, GridSize grid);

/// Mines every enabled prompt kind. `grid` is the backend's prompt grid.
PromptSet excavate(const BinaryMask& coarse, const ImageEmbedding& emb, const ExcavationConfig& cfg,
                   GridSize grid);

nlohmann::json prompts_to_json(const PromptSet& prompts);
PromptSet prompts_from_json(const nlohmann::json& j);

} // namespace maskforge
