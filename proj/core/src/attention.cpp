#include "dfn/attention.hpp"

#include <cmath>

#include "dfn/ops.hpp"

namespace dfn {

namespace {

void validate(const AttentionConfig& cfg, int channels, int patch_count) {
  if (cfg.channel_reduction < 1 || cfg.channel_reduction > channels)
    throw ConfigError("attention: channel_reduction must be in [1, C=" +
                      std::to_string(channels) + "]");
  if (cfg.patch_reduction < 1 || cfg.patch_reduction > patch_count)
    throw ConfigError("attention: patch_reduction must be in [1, n=" +
                      std::to_string(patch_count) + "]");
  if (cfg.spatial_kernel < 1 || cfg.spatial_kernel % 2 == 0)
    throw ConfigError("attention: spatial_kernel must be odd");
}

template <typename S>
void he_fc(ParamStoreT<S>& store, const std::string& name, int out_dim, int in_dim,
           Rng& rng) {
  auto w = make_tensor<S>({out_dim, in_dim});
  const double std_dev = std::sqrt(2.0 / in_dim);
  for (auto& v : w->data) v = static_cast<S>(rng.normal(0.0, std_dev));
  store.add_param(name + "/w", w);
  store.add_param(name + "/b", make_tensor<S>({out_dim}));
}

// two-layer MLP with relu hidden, used by both channel and patch attention
template <typename S>
TensorPtrT<S> mlp2(const ParamStoreT<S>& store, const std::string& prefix,
                   const TensorPtrT<S>& x) {
  auto h = relu(fully_connected(x, store.param(prefix + "/fc1/w"),
                                store.param(prefix + "/fc1/b")));
  return fully_connected(h, store.param(prefix + "/fc2/w"),
                         store.param(prefix + "/fc2/b"));
}

}  // namespace

template <typename S>
void init_attention(ParamStoreT<S>& store, const std::string& prefix,
                    int channels, int patch_count, const AttentionConfig& cfg,
                    Rng& rng) {
  validate(cfg, channels, patch_count);

  const int ch_hidden = reduced_dim(channels, cfg.channel_reduction);
  he_fc(store, prefix + "/ch/fc1", ch_hidden, channels, rng);
  he_fc(store, prefix + "/ch/fc2", channels, ch_hidden, rng);

  auto w = make_tensor<S>({1, 2, cfg.spatial_kernel, cfg.spatial_kernel});
  const double std_dev =
      std::sqrt(2.0 / (2.0 * cfg.spatial_kernel * cfg.spatial_kernel));
  for (auto& v : w->data) v = static_cast<S>(rng.normal(0.0, std_dev));
  store.add_param(prefix + "/sp/conv/w", w);
  store.add_param(prefix + "/sp/conv/b", make_tensor<S>({1}));

  if (cfg.patch_mode == PatchAttentionMode::CrossPatch) {
    const int p_hidden = reduced_dim(patch_count, cfg.patch_reduction);
    he_fc(store, prefix + "/patch/fc1", p_hidden, patch_count, rng);
    he_fc(store, prefix + "/patch/fc2", patch_count, p_hidden, rng);
  } else {
    he_fc(store, prefix + "/patch/fc1", 4, 1, rng);
    he_fc(store, prefix + "/patch/fc2", 1, 4, rng);
  }
}

template <typename S>
TensorPtrT<S> channel_attention(const TensorPtrT<S>& fmap, const ParamStoreT<S>& store,
                                const std::string& prefix, const AttentionConfig& cfg) {
  (void)cfg;
  auto f_avg = reduce_spatial(fmap, ReduceKind::Avg);
  auto f_max = reduce_spatial(fmap, ReduceKind::Max);
  // the two paths share one MLP
  auto a = mlp2(store, prefix + "/ch", f_avg);
  auto b = mlp2(store, prefix + "/ch", f_max);
  return sigmoid(add(a, b));
}

template <typename S>
TensorPtrT<S> apply_channel(const TensorPtrT<S>& fmap, const TensorPtrT<S>& weights) {
  return mul_channels(fmap, weights);
}

template <typename S>
TensorPtrT<S> spatial_attention(const TensorPtrT<S>& fmap, const ParamStoreT<S>& store,
                                const std::string& prefix, const AttentionConfig& cfg) {
  auto c_avg = reduce_channels(fmap, ReduceKind::Avg);
  auto c_max = reduce_channels(fmap, ReduceKind::Max);
  const int ch_axis = static_cast<int>(fmap->shape.size()) - 3;
  auto stacked = concat<S>({c_avg, c_max}, ch_axis);
  auto conv = conv2d(stacked, store.param(prefix + "/sp/conv/w"),
                     store.param(prefix + "/sp/conv/b"), 1, cfg.spatial_kernel / 2);
  return sigmoid(conv);
}

template <typename S>
TensorPtrT<S> apply_spatial(const TensorPtrT<S>& fmap, const TensorPtrT<S>& map) {
  return mul_spatial(fmap, map);
}

template <typename S>
std::pair<TensorPtrT<S>, TensorPtrT<S>> patch_descriptor(const TensorPtrT<S>& attended) {
  if (attended->shape.size() != 4)
    throw ShapeError("patch_descriptor: expected [n,C,H,W], got " +
                     shape_str(attended->shape));
  auto m_s = reduce_spatial(attended, ReduceKind::Avg);  // [n,C]
  auto m_c = mean_cols(m_s);                             // [n]
  return {m_s, m_c};
}

template <typename S>
TensorPtrT<S> patch_attention(const TensorPtrT<S>& m_c, const ParamStoreT<S>& store,
                              const std::string& prefix, const AttentionConfig& cfg) {
  if (m_c->shape.size() != 1)
    throw ShapeError("patch_attention: expected [n], got " + shape_str(m_c->shape));
  const int n = m_c->shape[0];
  if (cfg.patch_mode == PatchAttentionMode::CrossPatch) {
    const int expect = store.param(prefix + "/patch/fc1/w")->shape[1];
    if (expect != n)
      throw ShapeError("patch_attention: params built for n=" + std::to_string(expect) +
                       ", got n=" + std::to_string(n));
    return sigmoid(mlp2(store, prefix + "/patch", m_c));
  }
  // shared mode: the same scalar MLP maps each entry independently; feeding
  // the entries as a [n,1] batch does exactly that
  auto col = reshape(m_c, {n, 1});
  auto w = sigmoid(mlp2(store, prefix + "/patch", col));  // [n,1]
  return reshape(w, {n});
}

#define DFN_INSTANTIATE_ATTENTION(S)                                                     \
  template void init_attention<S>(ParamStoreT<S>&, const std::string&, int, int,         \
                                  const AttentionConfig&, Rng&);                          \
  template TensorPtrT<S> channel_attention<S>(const TensorPtrT<S>&, const ParamStoreT<S>&, \
                                              const std::string&, const AttentionConfig&); \
  template TensorPtrT<S> apply_channel<S>(const TensorPtrT<S>&, const TensorPtrT<S>&);   \
  template TensorPtrT<S> spatial_attention<S>(const TensorPtrT<S>&, const ParamStoreT<S>&, \
                                              const std::string&, const AttentionConfig&); \
  template TensorPtrT<S> apply_spatial<S>(const TensorPtrT<S>&, const TensorPtrT<S>&);   \
  template std::pair<TensorPtrT<S>, TensorPtrT<S>> patch_descriptor<S>(const TensorPtrT<S>&); \
  template TensorPtrT<S> patch_attention<S>(const TensorPtrT<S>&, const ParamStoreT<S>&, \
                                            const std::string&, const AttentionConfig&);

DFN_INSTANTIATE_ATTENTION(float)
DFN_INSTANTIATE_ATTENTION(double)

#undef DFN_INSTANTIATE_ATTENTION

}  // namespace dfn
