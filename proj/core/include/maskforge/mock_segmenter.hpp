#pragma once

#include "maskforge/segmenter.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace maskforge {

struct SceneShape {
    int id = 0;
    BinaryMask mask;
};

/// Ground truth for the geometric oracle backend. Shapes may overlap; later
/// shapes are drawn on top when rendering and when assigning embedding cells.
struct OracleScene {
    std::string image_id;
    int width = 0;
    int height = 0;
    std::vector<SceneShape> shapes;
    int feature_dim = 32;
    /// Source pixels per embedding cell.
    int stride = 4;
    int hidden_dim = 16;
    /// Amplitude of the seeded uniform perturbation added to iou_pred.
    double noise = 0.05;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Deterministic geometric stand-in for a promptable segmenter.
///
/// predict() picks a target shape from the prompts (the shape under the
/// positive click, otherwise the best box fit, otherwise the best soft-mask
/// overlap) and returns [target, dilate(target, 2), erode(target, 2)].
class MockSegmenter final : public PromptedSegmenter {
public:
    explicit MockSegmenter(std::vector<OracleScene> scenes);

    Capabilities capabilities() const override;
    GridSize prompt_grid(int src_width, int src_height) const override;
    ImageEmbedding embed(const RgbImage& image) const override;
    MultiMaskOutput predict(const ImageEmbedding& emb, const PromptSet& prompts) const override;

    const OracleScene& scene(const std::string& image_id) const;
    const std::vector<OracleScene>& scenes() const noexcept { return scenes_; }

    /// Index into scene.shapes of the shape predict() would target, or -1.
    int select_target(const OracleScene& scene, const PromptSet& prompts) const;

    static constexpr double kCandidateRadius = 2.0;

private:
    std::vector<OracleScene> scenes_;
    std::map<std::string, std::size_t> index_;
    int feature_dim_ = 0;
    int hidden_dim_ = 0;
};

nlohmann::json scenes_to_json(const std::vector<OracleScene>& scenes);
std::vector<OracleScene> scenes_from_json(const nlohmann::json& j);
std::vector<OracleScene> load_scenes(const std::string& path);
void save_scenes(const std::string& path, const std::vector<OracleScene>& scenes);

struct SceneGenConfig {
    int width = 96;
    int height = 96;
    int min_shapes = 2;
    int max_shapes = 4;
    int min_radius = 9;
    int max_radius = 20;
    /// When set, every scene places smaller shapes on top of a large one.
    bool nested = false;
    int feature_dim = 32;
    int stride = 4;
    int hidden_dim = 16;
    double noise = 0.05;
};

/// Seeded synthetic scene of ellipses, rectangles and two-lobe blobs.
OracleScene generate_scene(std::uint64_t seed, const std::string& image_id, const SceneGenConfig& cfg);

/// Flat-colour rendering of a scene, shapes painted in order.
RgbImage render_scene(const OracleScene& scene);

} // namespace maskforge
