#pragma once

#include <string>
#include <vector>

#include "dfn/param_store.hpp"
#include "dfn/rng.hpp"
#include "dfn/tensor.hpp"

namespace dfn {

struct DenseNetConfig {
  int depth = 40;
  int growth_rate = 12;
  int blocks = 3;  // fixed at 3; kept a field so plans are self-describing
  bool bottleneck = false;
  double compression = 0.5;  // transition output = floor(compression * C)
  int stem_channels = 0;     // 0 means 2 * growth_rate
  int input_channels = 3;
};

enum class LayerKind { Stem, Dense, Transition, FinalNorm };

struct LayerDesc {
  LayerKind kind;
  int in_channels = 0;
  int out_channels = 0;           // channels after this layer (post-concat for Dense)
  int growth = 0;                 // Dense only
  int bottleneck_channels = 0;    // Dense with bottleneck: 4 * growth
  std::string name;               // parameter prefix relative to the network
};

// Channel arithmetic of one network, independent of spatial extent. The stem
// stride is resolved at forward time from the input side (>= 112 -> stride 2,
// else 1), so one plan serves both the 224 and 56 pipelines of a given
// config.
struct LayerPlan {
  DenseNetConfig cfg;
  int layers_per_block = 0;
  std::vector<LayerDesc> layers;
  int final_channels = 0;
};

enum class FeatureSource { Network1, Network2 };

template <typename S>
struct FeatureVectorT {
  TensorPtrT<S> values;  // [C] or [N,C] for batched input
  FeatureSource source = FeatureSource::Network1;
  int dimension = 0;
};

using FeatureVector = FeatureVectorT<float>;

// Validates the depth/growth combination ((L-4) % 3 == 0 plain,
// (L-4) % 6 == 0 bottleneck) and lays out stem, three equal dense blocks,
// two transitions, and the final norm.
LayerPlan plan_network(const DenseNetConfig& cfg);

// Exact analytic parameter total of the plan (convs are bias-free; each norm
// contributes 2C).
std::int64_t param_count(const LayerPlan& plan);

inline std::int64_t conv_param_count(int cin, int cout, int k, bool bias) {
  return static_cast<std::int64_t>(cin) * cout * k * k + (bias ? cout : 0);
}

int stem_stride_for(int input_side);

// Spatial side of the final feature map for a given input side.
int feature_map_side(const LayerPlan& plan, int input_side);

// Registers all parameters and norm buffers under `prefix` and fills weights
// He-normal (std = sqrt(2/fan_in)), norm scale 1, shift 0, running stats
// (0,1). Draw order follows plan order, so a seed pins every value.
template <typename S>
void init_densenet(const LayerPlan& plan, ParamStoreT<S>& store,
                   const std::string& prefix, Rng& rng);

// Runs the plan over [3,S,S] or [N,3,S,S]. Returns the attention-ready
// feature map (final norm + relu of the last block's output) and its global
// average pool as the FeatureVector.
template <typename S>
std::pair<TensorPtrT<S>, FeatureVectorT<S>> forward_features(
    const LayerPlan& plan, const ParamStoreT<S>& store, const std::string& prefix,
    const TensorPtrT<S>& input, bool training, FeatureSource source);

}  // namespace dfn
