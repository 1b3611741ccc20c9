#pragma once

#include <string>

#include "dfn/model.hpp"
#include "dfn/training.hpp"

namespace dfn {

// Everything a run needs, bundled for config files and checkpoint snapshots.
struct PipelineConfig {
  DeFraudNetConfig model;
  TrainConfig train;
  PreprocConfig preproc;
  AugmentConfig augment;
};

// JSON round-trip. Field names mirror the config structs exactly; see
// config_from_json for the overlay rules.
std::string config_to_json(const PipelineConfig& cfg);

// Parses JSON over a default-constructed PipelineConfig: absent keys keep
// their defaults, unknown keys are a ConfigError (catches typos early).
PipelineConfig config_from_json(const std::string& text);

// Same, but overlaying an existing config.
PipelineConfig config_overlay_json(PipelineConfig base, const std::string& text);

}  // namespace dfn
