#pragma once

#include "maskforge/segmenter.hpp"

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace maskforge {

/// One (image, prompts) -> expected outputs bundle for backend parity runs.
/// The embedding is stored channel-first (c, h, w) like the exported graph.
struct ParityFixture {
    static constexpr int kFormatVersion = 1;

    std::string name;
    RgbImage image;
    PromptSet prompts;
    int embed_c = 0;
    int embed_h = 0;
    int embed_w = 0;
    std::vector<double> embedding;
    std::vector<RealRaster> logits;
    std::vector<double> iou;
    std::vector<std::vector<double>> hidden;
    double tolerance = 1e-3;
};

struct ParityResult {
    std::string name;
    double embedding_max_abs = 0.0;
    double logits_max_abs = 0.0;
    double iou_max_abs = 0.0;
    double hidden_max_abs = 0.0;
    double tolerance = 0.0;
    /// Set when the backend failed or shapes disagreed.
    std::string error;

    bool pass() const;
};

/// Runs `backend` on the fixture inputs and stores its outputs as expected values.
ParityFixture record_fixture(const PromptedSegmenter& backend, const RgbImage& image, const PromptSet& prompts,
                             const std::string& name);

ParityResult check_fixture(const PromptedSegmenter& backend, const ParityFixture& fixture);

/// Writes `<dir>/<name>.json` and `<dir>/<name>.png`.
void save_fixture(const std::string& dir, const ParityFixture& fixture);
/// The image path inside the JSON is resolved against the JSON's directory.
ParityFixture load_fixture(const std::string& path);

nlohmann::json parity_to_json(const std::vector<ParityResult>& results);

} // namespace maskforge
