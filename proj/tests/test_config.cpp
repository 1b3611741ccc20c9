#include <doctest.h>

#include <json.hpp>

#include "dfn/config_io.hpp"
#include "dfn/errors.hpp"

using namespace dfn;

TEST_CASE("config JSON round trip preserves every field") {
  PipelineConfig cfg;
  cfg.model.net1 = DenseNetConfig{.depth = 40, .growth_rate = 24, .blocks = 3,
                                  .bottleneck = true, .compression = 0.5,
                                  .stem_channels = 0, .input_channels = 3};
  cfg.model.net2.depth = 22;
  cfg.model.attention.channel_reduction = 8;
  cfg.model.attention.patch_mode = PatchAttentionMode::Shared;
  cfg.model.patch_grid.patch_size = 56;
  cfg.model.patch_grid.stride = 84;
  cfg.model.fusion_hidden = 96;
  cfg.model.aux_heads = true;
  cfg.train.lr = 0.01;
  cfg.train.momentum = 0.85;
  cfg.train.nesterov = false;
  cfg.train.weight_decay = 1e-4;
  cfg.train.epochs = 7;
  cfg.train.fingerprints_per_step = 3;
  cfg.train.seed = 99;
  cfg.train.shuffle = false;
  cfg.preproc.target_size = 112;
  cfg.preproc.lbp.radius = 2;
  cfg.preproc.gabor.kernel_size = 31;
  cfg.preproc.gabor.sigma = 4.5;
  cfg.augment.rotation_deg = 5.0;
  cfg.augment.crop_pad_frac = 0.1;

  const auto text = config_to_json(cfg);
  const auto back = config_from_json(text);

  CHECK(back.model.net1.depth == 40);
  CHECK(back.model.net1.growth_rate == 24);
  CHECK(back.model.net1.bottleneck == true);
  CHECK(back.model.net1.compression == 0.5);
  CHECK(back.model.net2.depth == 22);
  CHECK(back.model.attention.channel_reduction == 8);
  CHECK(back.model.attention.patch_mode == PatchAttentionMode::Shared);
  CHECK(back.model.patch_grid.patch_size == 56);
  CHECK(back.model.patch_grid.stride == 84);
  CHECK(back.model.fusion_hidden == 96);
  CHECK(back.model.aux_heads == true);
  CHECK(back.train.lr == 0.01);
  CHECK(back.train.momentum == 0.85);
  CHECK(back.train.nesterov == false);
  CHECK(back.train.weight_decay == 1e-4);
  CHECK(back.train.epochs == 7);
  CHECK(back.train.fingerprints_per_step == 3);
  CHECK(back.train.seed == 99);
  CHECK(back.train.shuffle == false);
  CHECK(back.preproc.target_size == 112);
  CHECK(back.preproc.lbp.radius == 2);
  CHECK(back.preproc.gabor.kernel_size == 31);
  CHECK(back.preproc.gabor.sigma == 4.5);
  CHECK(back.augment.rotation_deg == 5.0);
  CHECK(back.augment.crop_pad_frac == 0.1);

  // a second pass through the printer is stable
  CHECK(config_to_json(back) == text);
}

TEST_CASE("partial JSON keeps defaults for absent keys") {
  const auto cfg = config_from_json(R"({"train": {"lr": 0.5}})");
  PipelineConfig defaults;
  CHECK(cfg.train.lr == 0.5);
  CHECK(cfg.train.momentum == defaults.train.momentum);
  CHECK(cfg.train.epochs == defaults.train.epochs);
  CHECK(cfg.model.net1.depth == defaults.model.net1.depth);
  CHECK(cfg.preproc.gabor.kernel_size == defaults.preproc.gabor.kernel_size);
}

TEST_CASE("overlay changes one field and nothing else") {
  PipelineConfig base;
  base.train.lr = 0.25;
  base.model.patch_grid.stride = 84;
  const auto out =
      config_overlay_json(base, R"({"model": {"patch_grid": {"patch_size": 56}}})");
  CHECK(out.model.patch_grid.patch_size == 56);
  CHECK(out.model.patch_grid.stride == 84);
  CHECK(out.train.lr == 0.25);
}

TEST_CASE("unknown keys are named in the error") {
  CHECK_THROWS_WITH_AS(config_from_json(R"({"trian": {}})"),
                       doctest::Contains("trian"), ConfigError);
  CHECK_THROWS_WITH_AS(config_from_json(R"({"train": {"learning_rate": 0.1}})"),
                       doctest::Contains("learning_rate"), ConfigError);
  CHECK_THROWS_WITH_AS(config_from_json(R"({"train": {"learning_rate": 0.1}})"),
                       doctest::Contains("train"), ConfigError);
  CHECK_THROWS_WITH_AS(config_from_json(R"({"model": {"net1": {"width": 4}}})"),
                       doctest::Contains("model.net1"), ConfigError);
}

TEST_CASE("patch_mode parses both spellings and rejects others") {
  CHECK(config_from_json(R"({"model": {"attention": {"patch_mode": "shared"}}})")
            .model.attention.patch_mode == PatchAttentionMode::Shared);
  CHECK(config_from_json(R"({"model": {"attention": {"patch_mode": "cross_patch"}}})")
            .model.attention.patch_mode == PatchAttentionMode::CrossPatch);
  CHECK_THROWS_WITH_AS(
      config_from_json(R"({"model": {"attention": {"patch_mode": "global"}}})"),
      doctest::Contains("patch_mode"), ConfigError);
}

TEST_CASE("malformed JSON and wrong value types are ConfigErrors") {
  CHECK_THROWS_WITH_AS(config_from_json("{"), doctest::Contains("invalid JSON"),
                       ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"train": {"lr": "fast"}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"train": 3})"), ConfigError);
}
