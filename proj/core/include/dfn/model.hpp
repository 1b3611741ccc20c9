#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dfn/attention.hpp"
#include "dfn/densenet.hpp"
#include "dfn/param_store.hpp"
#include "dfn/patching.hpp"
#include "dfn/preproc.hpp"

namespace dfn {

inline constexpr int kImageSide = 224;

struct DeFraudNetConfig {
  DenseNetConfig net1{.depth = 16, .growth_rate = 12};  // whole image, 224
  DenseNetConfig net2{.depth = 10, .growth_rate = 6};   // patches
  AttentionConfig attention;
  PatchGridConfig patch_grid;
  int fusion_hidden = 128;
  bool aux_heads = false;
};

// The assembled network: both towers, attention, fusion head, all living in
// one flat ParamStore. Everything about the parameter set is reproducible
// from (config, init_seed).
template <typename S>
struct DeFraudNetModelT {
  DeFraudNetConfig config;
  ParamStoreT<S> params;
  LayerPlan net1_plan;
  LayerPlan net2_plan;
  int patch_count = 0;
  std::uint64_t init_seed = 0;
};

using DeFraudNetModel = DeFraudNetModelT<float>;

struct Prediction {
  std::array<float, 2> logits{};      // [live, fake]
  float probability_fake = 0.0f;      // softmax(logits)[1]
  std::vector<float> patch_weights;   // diagnostic
  bool fake = false;                  // argmax
  const char* label() const { return fake ? "fake" : "live"; }
};

// In-graph handles from one forward pass; used by training (loss wiring)
// and tests (probing intermediate values).
template <typename S>
struct ForwardTensorsT {
  TensorPtrT<S> logits;         // [2]
  TensorPtrT<S> global_vec;     // g, [C1]
  TensorPtrT<S> patch_vectors;  // M_s, [n,C2]
  TensorPtrT<S> patch_weights;  // [n], in (0,1)
  TensorPtrT<S> fused;          // P, [C2]
  TensorPtrT<S> aux1_logits;    // null unless aux_heads
  TensorPtrT<S> aux2_logits;
};

using ForwardTensors = ForwardTensorsT<float>;

// Deterministic build: plans both towers, registers every parameter under
// stable names (net1/..., net2/..., att/..., head/...), He-init from `seed`.
template <typename S>
DeFraudNetModelT<S> build_model(const DeFraudNetConfig& cfg, std::uint64_t seed);

// One fingerprint through the whole pipeline: Network-1 on the full image;
// patches batched through Network-2, channel then spatial attention, pooled
// to per-patch vectors; patch attention weighs them; fused vector P is the
// weight-normalized mean; head classifies [g ; P].
template <typename S>
ForwardTensorsT<S> forward_graph(DeFraudNetModelT<S>& model,
                                 const ThreeChannelImage& image, bool training);

// Normalized weighted mean of patch vectors: sum_i w_i p_i / sum_i w_i.
template <typename S>
TensorPtrT<S> fuse_patch_vectors(const TensorPtrT<S>& patch_vectors,
                                 const TensorPtrT<S>& weights);

// Eval-mode single-image prediction (no grad, running norm statistics).
Prediction forward(DeFraudNetModelT<float>& model, const ThreeChannelImage& image);

struct BatchPrediction {
  std::vector<std::optional<Prediction>> predictions;  // index-aligned
  std::vector<std::pair<std::size_t, std::string>> failures;
};

// Order-preserving batch prediction; a failing image is recorded by index
// and does not abort the rest.
BatchPrediction predict_batch(DeFraudNetModelT<float>& model,
                              const std::vector<ThreeChannelImage>& images);

}  // namespace dfn
