#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dfn/model.hpp"
#include "dfn/rng.hpp"

namespace dfn {

struct TrainConfig {
  double lr = 0.006;
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 1e-4;
  int epochs = 500;
  // samples per optimizer step; 1 keeps the one-fingerprint-plus-its-patches
  // step semantics, higher values average losses over several fingerprints
  int fingerprints_per_step = 1;
  std::uint64_t seed = 0;
  bool shuffle = true;
};

struct TrainSample {
  ThreeChannelImage image;
  int label = 0;  // 0 live, 1 fake
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;       // mean per-sample loss over the epoch
  double train_ace = 0.0;  // ACE of the online step predictions, in percent
};

// SGD with Nesterov momentum in the lookahead-applied form:
//   g' = g + wd*w;  v <- mu*v + g';  w <- w - lr*(g' + mu*v)
// (plain momentum when nesterov=false: w <- w - lr*v). Weight decay touches
// only tensors named ".../w" (conv and linear kernels), never norm
// scale/shift or biases.
class SgdNesterov {
 public:
  SgdNesterov(const ParamStore& store, const TrainConfig& cfg);

  // One update over every trainable parameter. A parameter with no gradient
  // buffer is a StateError naming it.
  void step(ParamStore& store);

  const std::map<std::string, std::vector<float>>& velocities() const {
    return velocities_;
  }
  // Checkpoint restore; shapes must match the current parameter set.
  void restore(const std::map<std::string, std::vector<float>>& velocities);

  const TrainConfig& config() const { return cfg_; }

 private:
  TrainConfig cfg_;
  std::map<std::string, std::vector<float>> velocities_;
};

struct TrainHooks {
  // Called after each epoch; returning false stops training early.
  std::function<bool(const EpochStats&)> on_epoch;
  // When set, one JSON object per epoch is appended: {"epoch":..,"loss":..,
  // "train_ace":..}
  std::ostream* epoch_log = nullptr;
};

struct TrainResult {
  std::vector<EpochStats> log;
  std::int64_t steps = 0;
  int last_epoch = 0;  // 1-based epoch count reached
};

// Epoch loop: seeded shuffle, one joint forward/backward per fingerprint
// (whole image + all its patches), one optimizer step per
// fingerprints_per_step samples. Deterministic given (model seed, cfg.seed,
// rng state). Throws ConfigError if the dataset is empty or single-class,
// StateError if the loss goes non-finite.
TrainResult train(DeFraudNetModel& model, const std::vector<TrainSample>& data,
                  const TrainConfig& cfg, SgdNesterov& opt, Rng& rng,
                  int start_epoch = 0, const TrainHooks& hooks = {});

// Loss for one sample's forward tensors: cross-entropy on the fused logits,
// plus 0.3-weighted auxiliary cross-entropies when the model has aux heads.
template <typename S>
TensorPtrT<S> sample_loss(const ForwardTensorsT<S>& fw, int label);

// --- checkpointing ---
//
// File layout: magic "DFNCKPT1", u32 version=1, u64 payload byte length,
// payload of named-array records (u16 name length, name bytes, u8 dtype
// 0=f32 1=u8 2=u64, u8 rank, u32 dims..., little-endian payload), then a
// trailing 32-byte SHA-256 over all preceding bytes.

struct Checkpoint {
  std::string config_json;  // pipeline config snapshot
  DeFraudNetModel model;    // rebuilt and loaded
  std::map<std::string, std::vector<float>> velocities;
  std::uint64_t epoch = 0;
  Rng rng{0};
};

void save_checkpoint(const std::string& path, const DeFraudNetModel& model,
                     const SgdNesterov& opt, std::uint64_t epoch, const Rng& rng,
                     const std::string& config_json);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace dfn
