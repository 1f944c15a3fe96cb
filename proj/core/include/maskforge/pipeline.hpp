#pragma once

#include "maskforge/iou_adaption.hpp"
#include "maskforge/prompts.hpp"
#include "maskforge/segmenter.hpp"
#include "maskforge/stm.hpp"

#include <optional>
#include <string>
#include <vector>

namespace maskforge {

enum class Selector { predicted, adapted, coarse_iou, gt_iou };

std::string to_string(Selector selector);
/// Throws ConfigError on an unknown name.
Selector selector_from_string(const std::string& name);

struct RefineConfig {
    ExcavationConfig excavation;
    MergeConfig merge;
    int iterations = 1;
    Selector selector = Selector::predicted;

    void validate() const;
};

/// Side information a selector may need.
struct SelectionContext {
    const BinaryMask* coarse = nullptr;
    const BinaryMask* gt = nullptr;
    const LoraAdaptor* adaptor = nullptr;
};

/// Per-candidate scores under `selector`. Throws ConfigError when the
/// selector's context is missing.
std::vector<double> selector_scores(const MultiMaskOutput& out, Selector selector, const SelectionContext& ctx);

/// Argmax of selector_scores, lowest index on ties.
int select_best(const MultiMaskOutput& out, Selector selector, const SelectionContext& ctx);

struct IterationRecord {
    PromptSet prompts;
    MultiMaskOutput output;
    int chosen = 0;
    double chosen_score = 0.0;
};

struct RefineResult {
    BinaryMask refined;
    /// -1 when the input was passed through unrefined.
    int chosen_index = -1;
    double chosen_score = 0.0;
    std::vector<IterationRecord> iterations;
    std::vector<std::string> warnings;
    std::optional<double> coarse_iou_vs_gt;
    std::optional<double> refined_iou_vs_gt;

    bool passthrough() const noexcept { return chosen_index < 0; }
};

struct InstanceContext {
    const BinaryMask* gt = nullptr;
    const LoraAdaptor* adaptor = nullptr;
};

/// Excavate, predict and select, `cfg.iterations` times, each round starting
/// from the previous round's choice. An empty coarse mask is returned as-is
/// with a warning.
RefineResult refine_instance(const ImageEmbedding& emb, const BinaryMask& coarse, const RefineConfig& cfg,
                             const PromptedSegmenter& backend, const InstanceContext& ctx = {});

struct SemanticTarget {
    int class_id = 0;
    RefineResult result;
};

struct SemanticResult {
    LabelMask labels;
    std::vector<SemanticTarget> targets;
    /// Isolated trivial regions painted without refinement.
    std::vector<SemanticTarget> passthrough;
};

/// Split-then-merge per class, refine every merged region, then repaint.
/// Pixels claimed by several classes go to the higher selected score (lower
/// class id on ties); unclaimed pixels become background.
SemanticResult refine_semantic(const ImageEmbedding& emb, const LabelMask& semantic, const RefineConfig& cfg,
                               const PromptedSegmenter& backend, const LoraAdaptor* adaptor = nullptr);

} // namespace maskforge
