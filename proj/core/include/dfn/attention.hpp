#pragma once

#include <string>

#include "dfn/param_store.hpp"
#include "dfn/rng.hpp"
#include "dfn/tensor.hpp"

namespace dfn {

enum class PatchAttentionMode {
  CrossPatch,  // MLP n -> ceil(n/r_p) -> n; hidden layer mixes patches
  Shared,      // one scalar MLP 1 -> 4 -> 1 applied to each patch entry
};

struct AttentionConfig {
  int channel_reduction = 8;   // r_c
  int patch_reduction = 4;     // r_p
  int spatial_kernel = 7;      // odd
  PatchAttentionMode patch_mode = PatchAttentionMode::CrossPatch;
};

// Parameter registration. `channels` is the patch tower's final channel
// count C, `patch_count` the grid's n. Channel MLP: C -> ceil(C/r_c) -> C,
// shared across the avg and max paths. Spatial: one [1,2,k,k] conv + bias.
// Patch MLP per mode above.
template <typename S>
void init_attention(ParamStoreT<S>& store, const std::string& prefix,
                    int channels, int patch_count, const AttentionConfig& cfg,
                    Rng& rng);

// sigma(MLP(f_avg) + MLP(f_max)) from spatially pooled statistics of
// F [C,H,W] or [N,C,H,W]; result [C] / [N,C], strictly inside (0,1).
template <typename S>
TensorPtrT<S> channel_attention(const TensorPtrT<S>& fmap, const ParamStoreT<S>& store,
                                const std::string& prefix, const AttentionConfig& cfg);

// Per-channel scalar modulation.
template <typename S>
TensorPtrT<S> apply_channel(const TensorPtrT<S>& fmap, const TensorPtrT<S>& weights);

// sigma(conv_k([avg-over-channels ; max-over-channels])) with same-padding;
// result [1,H,W] / [N,1,H,W].
template <typename S>
TensorPtrT<S> spatial_attention(const TensorPtrT<S>& fmap, const ParamStoreT<S>& store,
                                const std::string& prefix, const AttentionConfig& cfg);

// Broadcast multiplication of the one-channel map over all channels.
template <typename S>
TensorPtrT<S> apply_spatial(const TensorPtrT<S>& fmap, const TensorPtrT<S>& map);

// From the attended patch maps [n,C,H,W]: M_s [n,C] by spatial average,
// M_c [n] by channel average of M_s.
template <typename S>
std::pair<TensorPtrT<S>, TensorPtrT<S>> patch_descriptor(const TensorPtrT<S>& attended);

// sigma(MLP(M_c)) -> per-patch weights [n], strictly inside (0,1).
template <typename S>
TensorPtrT<S> patch_attention(const TensorPtrT<S>& m_c, const ParamStoreT<S>& store,
                              const std::string& prefix, const AttentionConfig& cfg);

inline int reduced_dim(int dim, int reduction) { return (dim + reduction - 1) / reduction; }

}  // namespace dfn
