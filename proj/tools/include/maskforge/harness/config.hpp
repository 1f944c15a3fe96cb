#pragma once

#include "maskforge/harness/defects.hpp"
#include "maskforge/iou_adaption.hpp"
#include "maskforge/pipeline.hpp"

#include <string>

#include <nlohmann/json_fwd.hpp>

namespace maskforge {

/// Everything a run can be configured with. On disk this is a JSON object
/// with optional "refine", "train" and "defects" sections whose keys are the
/// struct field names; unknown keys are rejected.
struct HarnessConfig {
    RefineConfig refine;
    TrainConfig train;
    DefectSpec defects;

    void validate() const;
};

nlohmann::json config_to_json(const HarnessConfig& cfg);
/// Missing keys keep their defaults. Throws ConfigError on unknown keys or
/// wrongly typed values.
HarnessConfig config_from_json(const nlohmann::json& j);
HarnessConfig load_config(const std::string& path);

nlohmann::json prompt_kinds_to_json(const PromptKinds& kinds);
PromptKinds prompt_kinds_from_json(const nlohmann::json& j);

} // namespace maskforge
