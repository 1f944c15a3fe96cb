#include "maskforge/segmenter.hpp"

#include "maskforge/raster_ops.hpp"

namespace maskforge {

BinaryMask PromptedSegmenter::logits_to_mask(const RealRaster& logits, int src_width, int src_height) const {
    return threshold_above(resize(logits, src_width, src_height, ResizeMode::bilinear), 0.0);
}

void check_output(const PromptedSegmenter& backend, const MultiMaskOutput& out, int src_width, int src_height) {
    const auto k = static_cast<std::size_t>(backend.capabilities().num_candidates);
    if (out.masks.size() != k || out.logits.size() != k || out.iou_pred.size() != k || out.hidden.size() != k) {
        throw BackendError("predict returned " + std::to_string(out.masks.size()) + " candidates, expected " +
                           std::to_string(k));
    }
    for (std::size_t i = 0; i < k; ++i) {
        if (out.masks[i].width() != src_width || out.masks[i].height() != src_height) {
            throw BackendError("candidate mask has wrong size");
        }
        if (out.hidden[i].size() != static_cast<std::size_t>(backend.capabilities().hidden_dim)) {
            throw BackendError("candidate hidden vector has wrong size");
        }
        if (backend.logits_to_mask(out.logits[i], src_width, src_height) != out.masks[i]) {
            throw BackendError("candidate " + std::to_string(i) + " mask disagrees with its logits");
        }
    }
}

void require_prompts(const PromptSet& prompts) {
    const bool any = (prompts.enabled.point && prompts.positive) || (prompts.enabled.box && prompts.box) ||
                     (prompts.enabled.mask && prompts.soft_mask);
    if (!any) {
        throw ConfigError("predict: prompt set is empty");
    }
}

} // namespace maskforge
