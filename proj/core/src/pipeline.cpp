#include "maskforge/pipeline.hpp"

#include "maskforge/metrics.hpp"

#include <limits>

namespace maskforge {

std::string to_string(Selector selector) {
    switch (selector) {
    case Selector::predicted:
        return "predicted";
    case Selector::adapted:
        return "adapted";
    case Selector::coarse_iou:
        return "coarse_iou";
    case Selector::gt_iou:
        return "gt_iou";
    }
    return "unknown";
}

Selector selector_from_string(const std::string& name) {
    if (name == "predicted") return Selector::predicted;
    if (name == "adapted") return Selector::adapted;
    if (name == "coarse_iou") return Selector::coarse_iou;
    if (name == "gt_iou") return Selector::gt_iou;
    throw ConfigError("unknown selector '" + name + "'");
}

void RefineConfig::validate() const {
    excavation.validate();
    merge.validate();
    if (iterations < 1) {
        throw ConfigError("refine: iterations must be >= 1");
    }
}

std::vector<double> selector_scores(const MultiMaskOutput& out, Selector selector, const SelectionContext& ctx) {
    switch (selector) {
    case Selector::predicted:
        return out.iou_pred;
    case Selector::adapted:
        if (ctx.adaptor == nullptr) {
            throw ConfigError("selector 'adapted' requires an adaptor");
        }
        return adapted_scores(out.hidden, out.iou_pred, *ctx.adaptor);
    case Selector::coarse_iou:
    case Selector::gt_iou: {
        const BinaryMask* ref = selector == Selector::coarse_iou ? ctx.coarse : ctx.gt;
        if (ref == nullptr) {
            throw ConfigError("selector '" + to_string(selector) + "' requires a reference mask");
        }
        std::vector<double> scores;
        for (const auto& m : out.masks) {
            scores.push_back(iou(m, *ref));
        }
        return scores;
    }
    }
    throw ConfigError("unknown selector");
}

int select_best(const MultiMaskOutput& out, Selector selector, const SelectionContext& ctx) {
    const auto scores = selector_scores(out, selector, ctx);
    if (scores.empty()) {
        throw BackendError("select_best: no candidates");
    }
    return static_cast<int>(std::distance(scores.begin(), std::max_element(scores.begin(), scores.end())));
}

RefineResult refine_instance(const ImageEmbedding& emb, const BinaryMask& coarse, const RefineConfig& cfg,
                             const PromptedSegmenter& backend, const InstanceContext& ctx) {
    cfg.validate();
    RefineResult result;
    result.refined = coarse;
    if (is_empty(coarse)) {
        result.warnings.push_back("empty coarse mask passed through unrefined");
    } else {
        const GridSize grid = backend.prompt_grid(coarse.width(), coarse.height());
        BinaryMask current = coarse;
        for (int round = 0; round < cfg.iterations; ++round) {
            if (is_empty(current)) {
                result.warnings.push_back("cascade stopped: round " + std::to_string(round) +
                                          " started from an empty mask");
                break;
            }
            IterationRecord rec;
            rec.prompts = excavate(current, emb, cfg.excavation, grid);
            rec.output = backend.predict(emb, rec.prompts);
            check_output(backend, rec.output, coarse.width(), coarse.height());
            const SelectionContext sel{&current, ctx.gt, ctx.adaptor};
            const auto scores = selector_scores(rec.output, cfg.selector, sel);
            rec.chosen = static_cast<int>(std::distance(scores.begin(), std::max_element(scores.begin(), scores.end())));
            rec.chosen_score = scores[static_cast<std::size_t>(rec.chosen)];
            current = rec.output.masks[static_cast<std::size_t>(rec.chosen)];
            result.chosen_index = rec.chosen;
            result.chosen_score = rec.chosen_score;
            result.iterations.push_back(std::move(rec));
        }
        result.refined = std::move(current);
    }
    if (ctx.gt != nullptr) {
        result.coarse_iou_vs_gt = iou(coarse, *ctx.gt);
        result.refined_iou_vs_gt = iou(result.refined, *ctx.gt);
    }
    return result;
}

SemanticResult refine_semantic(const ImageEmbedding& emb, const LabelMask& semantic, const RefineConfig& cfg,
                               const PromptedSegmenter& backend, const LoraAdaptor* adaptor) {
    cfg.validate();
    if (cfg.selector == Selector::gt_iou) {
        throw ConfigError("selector 'gt_iou' is not available for semantic refinement");
    }
    if (semantic.width() != emb.src_width || semantic.height() != emb.src_height) {
        throw DimensionError("refine_semantic: label mask does not match embedding source size");
    }
    SemanticResult out;
    for (auto& [cls, inputs] : stm_refine_inputs(semantic, cfg.merge)) {
        for (const BinaryMask& target : inputs.targets) {
            out.targets.push_back({cls, refine_instance(emb, target, cfg, backend, {nullptr, adaptor})});
        }
        for (const BinaryMask& region : inputs.passthrough) {
            RefineResult r;
            r.refined = region;
            r.warnings.push_back("trivial region passed through");
            out.passthrough.push_back({cls, std::move(r)});
        }
    }

    const double lowest = -std::numeric_limits<double>::infinity();
    LabelMask labels(semantic.width(), semantic.height(), 0);
    std::vector<double> best(labels.size(), lowest);
    auto paint = [&](const SemanticTarget& t, double score) {
        const BinaryMask& m = t.result.refined;
        for (std::size_t p = 0; p < m.size(); ++p) {
            if (m[p] == 0) {
                continue;
            }
            const bool unclaimed = labels[p] == 0;
            const bool better = score > best[p] || (score == best[p] && t.class_id < labels[p]);
            if (unclaimed || better) {
                labels[p] = t.class_id;
                best[p] = score;
            }
        }
    };
    for (const auto& t : out.targets) {
        paint(t, t.result.passthrough() ? lowest : t.result.chosen_score);
    }
    for (const auto& t : out.passthrough) {
        paint(t, lowest);
    }
    out.labels = std::move(labels);
    return out;
}

} // namespace maskforge
