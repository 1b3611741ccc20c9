#include "dfn/config_io.hpp"

#include <json.hpp>

#include "dfn/errors.hpp"

namespace dfn {
namespace {

using nlohmann::json;

// Rejects keys we do not recognise so a typo'd field never silently keeps
// the default value.
void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("config: unknown key \"" + it.key() + "\" in " + where);
  }
}

template <typename T>
void pull(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config: bad value for \"" + std::string(key) + "\" in " + where + ": " +
                      e.what());
  }
}

void parse_densenet(const json& j, DenseNetConfig& cfg, const std::string& where) {
  check_keys(j,
             {"depth", "growth_rate", "blocks", "bottleneck", "compression", "stem_channels",
              "input_channels"},
             where);
  pull(j, "depth", cfg.depth, where);
  pull(j, "growth_rate", cfg.growth_rate, where);
  pull(j, "blocks", cfg.blocks, where);
  pull(j, "bottleneck", cfg.bottleneck, where);
  pull(j, "compression", cfg.compression, where);
  pull(j, "stem_channels", cfg.stem_channels, where);
  pull(j, "input_channels", cfg.input_channels, where);
}

json densenet_to_json(const DenseNetConfig& cfg) {
  return json{{"depth", cfg.depth},
              {"growth_rate", cfg.growth_rate},
              {"blocks", cfg.blocks},
              {"bottleneck", cfg.bottleneck},
              {"compression", cfg.compression},
              {"stem_channels", cfg.stem_channels},
              {"input_channels", cfg.input_channels}};
}

void parse_attention(const json& j, AttentionConfig& cfg, const std::string& where) {
  check_keys(j, {"channel_reduction", "patch_reduction", "spatial_kernel", "patch_mode"}, where);
  pull(j, "channel_reduction", cfg.channel_reduction, where);
  pull(j, "patch_reduction", cfg.patch_reduction, where);
  pull(j, "spatial_kernel", cfg.spatial_kernel, where);
  if (j.contains("patch_mode")) {
    std::string mode = j.at("patch_mode").get<std::string>();
    if (mode == "cross_patch") {
      cfg.patch_mode = PatchAttentionMode::CrossPatch;
    } else if (mode == "shared") {
      cfg.patch_mode = PatchAttentionMode::Shared;
    } else {
      throw ConfigError("config: patch_mode must be \"cross_patch\" or \"shared\", got \"" +
                        mode + "\"");
    }
  }
}

json attention_to_json(const AttentionConfig& cfg) {
  return json{{"channel_reduction", cfg.channel_reduction},
              {"patch_reduction", cfg.patch_reduction},
              {"spatial_kernel", cfg.spatial_kernel},
              {"patch_mode",
               cfg.patch_mode == PatchAttentionMode::CrossPatch ? "cross_patch" : "shared"}};
}

void parse_model(const json& j, DeFraudNetConfig& cfg) {
  check_keys(j, {"net1", "net2", "attention", "patch_grid", "fusion_hidden", "aux_heads"},
             "model");
  if (j.contains("net1")) parse_densenet(j.at("net1"), cfg.net1, "model.net1");
  if (j.contains("net2")) parse_densenet(j.at("net2"), cfg.net2, "model.net2");
  if (j.contains("attention")) parse_attention(j.at("attention"), cfg.attention, "model.attention");
  if (j.contains("patch_grid")) {
    const json& g = j.at("patch_grid");
    check_keys(g, {"patch_size", "stride"}, "model.patch_grid");
    pull(g, "patch_size", cfg.patch_grid.patch_size, "model.patch_grid");
    pull(g, "stride", cfg.patch_grid.stride, "model.patch_grid");
  }
  pull(j, "fusion_hidden", cfg.fusion_hidden, "model");
  pull(j, "aux_heads", cfg.aux_heads, "model");
}

json model_to_json(const DeFraudNetConfig& cfg) {
  return json{{"net1", densenet_to_json(cfg.net1)},
              {"net2", densenet_to_json(cfg.net2)},
              {"attention", attention_to_json(cfg.attention)},
              {"patch_grid",
               json{{"patch_size", cfg.patch_grid.patch_size}, {"stride", cfg.patch_grid.stride}}},
              {"fusion_hidden", cfg.fusion_hidden},
              {"aux_heads", cfg.aux_heads}};
}

void parse_train(const json& j, TrainConfig& cfg) {
  check_keys(j,
             {"lr", "momentum", "nesterov", "weight_decay", "epochs",
              "fingerprints_per_step", "seed", "shuffle"},
             "train");
  pull(j, "lr", cfg.lr, "train");
  pull(j, "momentum", cfg.momentum, "train");
  pull(j, "nesterov", cfg.nesterov, "train");
  pull(j, "weight_decay", cfg.weight_decay, "train");
  pull(j, "epochs", cfg.epochs, "train");
  pull(j, "fingerprints_per_step", cfg.fingerprints_per_step, "train");
  pull(j, "seed", cfg.seed, "train");
  pull(j, "shuffle", cfg.shuffle, "train");
}

json train_to_json(const TrainConfig& cfg) {
  return json{{"lr", cfg.lr},
              {"momentum", cfg.momentum},
              {"nesterov", cfg.nesterov},
              {"weight_decay", cfg.weight_decay},
              {"epochs", cfg.epochs},
              {"fingerprints_per_step", cfg.fingerprints_per_step},
              {"seed", cfg.seed},
              {"shuffle", cfg.shuffle}};
}

void parse_preproc(const json& j, PreprocConfig& cfg) {
  check_keys(j, {"target_size", "lbp", "gabor"}, "preproc");
  pull(j, "target_size", cfg.target_size, "preproc");
  if (j.contains("lbp")) {
    const json& l = j.at("lbp");
    check_keys(l, {"neighbors", "radius", "bilinear_sampling"}, "preproc.lbp");
    pull(l, "neighbors", cfg.lbp.neighbors, "preproc.lbp");
    pull(l, "radius", cfg.lbp.radius, "preproc.lbp");
    pull(l, "bilinear_sampling", cfg.lbp.bilinear_sampling, "preproc.lbp");
  }
  if (j.contains("gabor")) {
    const json& g = j.at("gabor");
    check_keys(g, {"kernel_size", "theta", "sigma", "lambda", "gamma", "psi"}, "preproc.gabor");
    pull(g, "kernel_size", cfg.gabor.kernel_size, "preproc.gabor");
    pull(g, "theta", cfg.gabor.theta, "preproc.gabor");
    pull(g, "sigma", cfg.gabor.sigma, "preproc.gabor");
    pull(g, "lambda", cfg.gabor.lambda, "preproc.gabor");
    pull(g, "gamma", cfg.gabor.gamma, "preproc.gabor");
    pull(g, "psi", cfg.gabor.psi, "preproc.gabor");
  }
}

json preproc_to_json(const PreprocConfig& cfg) {
  return json{{"target_size", cfg.target_size},
              {"lbp",
               json{{"neighbors", cfg.lbp.neighbors},
                    {"radius", cfg.lbp.radius},
                    {"bilinear_sampling", cfg.lbp.bilinear_sampling}}},
              {"gabor",
               json{{"kernel_size", cfg.gabor.kernel_size},
                    {"theta", cfg.gabor.theta},
                    {"sigma", cfg.gabor.sigma},
                    {"lambda", cfg.gabor.lambda},
                    {"gamma", cfg.gabor.gamma},
                    {"psi", cfg.gabor.psi}}}};
}

void parse_augment(const json& j, AugmentConfig& cfg) {
  check_keys(j,
             {"target_size", "rotation_deg", "translate_frac", "scale_lo", "scale_hi",
              "crop_pad_frac"},
             "augment");
  pull(j, "target_size", cfg.target_size, "augment");
  pull(j, "rotation_deg", cfg.rotation_deg, "augment");
  pull(j, "translate_frac", cfg.translate_frac, "augment");
  pull(j, "scale_lo", cfg.scale_lo, "augment");
  pull(j, "scale_hi", cfg.scale_hi, "augment");
  pull(j, "crop_pad_frac", cfg.crop_pad_frac, "augment");
}

json augment_to_json(const AugmentConfig& cfg) {
  return json{{"target_size", cfg.target_size},
              {"rotation_deg", cfg.rotation_deg},
              {"translate_frac", cfg.translate_frac},
              {"scale_lo", cfg.scale_lo},
              {"scale_hi", cfg.scale_hi},
              {"crop_pad_frac", cfg.crop_pad_frac}};
}

}  // namespace

std::string config_to_json(const PipelineConfig& cfg) {
  json j{{"model", model_to_json(cfg.model)},
         {"train", train_to_json(cfg.train)},
         {"preproc", preproc_to_json(cfg.preproc)},
         {"augment", augment_to_json(cfg.augment)}};
  return j.dump(2) + "\n";
}

PipelineConfig config_overlay_json(PipelineConfig base, const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(j, {"model", "train", "preproc", "augment"}, "top level");
  if (j.contains("model")) parse_model(j.at("model"), base.model);
  if (j.contains("train")) parse_train(j.at("train"), base.train);
  if (j.contains("preproc")) parse_preproc(j.at("preproc"), base.preproc);
  if (j.contains("augment")) parse_augment(j.at("augment"), base.augment);
  return base;
}

PipelineConfig config_from_json(const std::string& text) {
  return config_overlay_json(PipelineConfig{}, text);
}

}  // namespace dfn
