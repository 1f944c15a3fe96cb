#pragma once

#include "maskforge/prompts.hpp"
#include "maskforge/segmenter.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace maskforge {

/// Low-rank delta on the quality head's last layer:
/// score'_i = base_i + scale * B (A h_i), with A: rank x hidden_dim, B: 1 x rank.
struct LoraAdaptor {
    static constexpr int kFormatVersion = 1;

    int hidden_dim = 0;
    int rank = 0;
    double scale = 1.0;
    /// Row-major rank x hidden_dim.
    std::vector<double> a;
    std::vector<double> b;

    static LoraAdaptor zero(int hidden_dim, int rank, double scale = 1.0);

    void validate() const;

    friend bool operator==(const LoraAdaptor&, const LoraAdaptor&) = default;
};

std::vector<double> adapted_scores(std::span<const std::vector<double>> hidden, std::span<const double> base,
                                   const LoraAdaptor& adaptor);

/// sum_{i != j} max(0, x_i - x_j + margin)
double ranking_loss(std::span<const double> scores, int best, double margin);

/// Subgradient of ranking_loss; zero at the hinge kink.
std::vector<double> ranking_loss_grad(std::span<const double> scores, int best, double margin);

struct TrainSample {
    std::vector<std::vector<double>> hidden;
    std::vector<double> base_scores;
    int best_index = 0;
};

struct TrainConfig {
    double lr = 0.01;
    int batch = 5;
    int epochs = 1;
    std::vector<int> lr_drop_steps{60, 100};
    double lr_drop_factor = 0.1;
    /// When positive, drop steps are rescaled by total_steps / lr_drop_reference_steps.
    int lr_drop_reference_steps = 0;
    double margin = 0.02;
    int rank = 4;
    double scale = 1.0;
    double init_std = 0.01;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Drop steps after optional rescaling to `total_steps`.
std::vector<int> effective_drop_steps(const TrainConfig& cfg, int total_steps);

/// Mini-batch SGD on the mean ranking loss. A starts seeded Gaussian, B at
/// zero; only the delta is trained. Throws ConfigError on an empty set.
LoraAdaptor train(std::span<const TrainSample> samples, const TrainConfig& cfg);

/// Mean ranking loss of `adaptor` over samples.
double mean_ranking_loss(std::span<const TrainSample> samples, const LoraAdaptor& adaptor, double margin);

struct AdaptionImage {
    RgbImage image;
    std::vector<BinaryMask> coarse;
};

/// Single-prompt samples: for every coarse instance and every mode in
/// `modes` run predict and label the candidate with the best IoU against the
/// coarse mask. Empty coarse masks and all-tied candidates are skipped.
std::vector<TrainSample> build_training_set(std::span<const AdaptionImage> images, const PromptedSegmenter& backend,
                                            const ExcavationConfig& excavation,
                                            std::span<const PromptKinds> modes, int jobs = 1);

std::vector<PromptKinds> default_training_modes();

nlohmann::json adaptor_to_json(const LoraAdaptor& adaptor);
LoraAdaptor adaptor_from_json(const nlohmann::json& j);
void save_adaptor(const std::string& path, const LoraAdaptor& adaptor);
LoraAdaptor load_adaptor(const std::string& path);

} // namespace maskforge
