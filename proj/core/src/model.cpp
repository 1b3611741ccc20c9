#include "dfn/model.hpp"

#include <cmath>

#include "dfn/ops.hpp"

namespace dfn {

namespace {

template <typename S>
void he_fc_pair(ParamStoreT<S>& store, const std::string& name, int out_dim,
                int in_dim, Rng& rng) {
  auto w = make_tensor<S>({out_dim, in_dim});
  const double std_dev = std::sqrt(2.0 / in_dim);
  for (auto& v : w->data) v = static_cast<S>(rng.normal(0.0, std_dev));
  store.add_param(name + "/w", w);
  store.add_param(name + "/b", make_tensor<S>({out_dim}));
}

}  // namespace

template <typename S>
DeFraudNetModelT<S> build_model(const DeFraudNetConfig& cfg, std::uint64_t seed) {
  if (cfg.fusion_hidden < 1) throw ConfigError("build_model: fusion_hidden must be >= 1");

  DeFraudNetModelT<S> model;
  model.config = cfg;
  model.init_seed = seed;
  model.net1_plan = plan_network(cfg.net1);
  model.net2_plan = plan_network(cfg.net2);

  const int per_axis = static_cast<int>(patch_positions(kImageSide, cfg.patch_grid).size());
  model.patch_count = per_axis * per_axis;

  // patch tower must shrink its input cleanly through both transitions
  if (cfg.patch_grid.patch_size % 4 != 0)
    throw ConfigError("build_model: patch_size must be divisible by 4");

  Rng rng(seed);
  init_densenet(model.net1_plan, model.params, "net1", rng);
  init_densenet(model.net2_plan, model.params, "net2", rng);
  init_attention(model.params, "att", model.net2_plan.final_channels,
                 model.patch_count, cfg.attention, rng);

  const int head_in = model.net1_plan.final_channels + model.net2_plan.final_channels;
  he_fc_pair(model.params, "head/fc1", cfg.fusion_hidden, head_in, rng);
  he_fc_pair(model.params, "head/fc2", 2, cfg.fusion_hidden, rng);

  if (cfg.aux_heads) {
    he_fc_pair(model.params, "aux1/fc", 2, model.net1_plan.final_channels, rng);
    he_fc_pair(model.params, "aux2/fc", 2, model.net2_plan.final_channels, rng);
  }
  return model;
}

template <typename S>
TensorPtrT<S> fuse_patch_vectors(const TensorPtrT<S>& patch_vectors,
                                 const TensorPtrT<S>& weights) {
  if (patch_vectors->shape.size() != 2 || weights->shape.size() != 1 ||
      patch_vectors->shape[0] != weights->shape[0])
    throw ShapeError("fuse_patch_vectors: need [n,C] and [n], got " +
                     shape_str(patch_vectors->shape) + " and " + shape_str(weights->shape));
  auto weighted = mul_channels(patch_vectors, weights);
  return div_by_scalar(sum_rows(weighted), sum_all(weights));
}

template <typename S>
ForwardTensorsT<S> forward_graph(DeFraudNetModelT<S>& model,
                                 const ThreeChannelImage& image, bool training) {
  image.validate();
  if (image.side() != kImageSide || image.gray.width != kImageSide)
    throw ShapeError("forward_graph: image must be " + std::to_string(kImageSide) +
                     " square, got " + std::to_string(image.gray.height) + "x" +
                     std::to_string(image.gray.width));

  auto whole = image_to_tensor<S>(image);
  auto patches = extract_patches<S>(image, model.config.patch_grid);
  if (patches.count != model.patch_count)
    throw ShapeError("forward_graph: patch grid yields " + std::to_string(patches.count) +
                     " patches but model was built for " + std::to_string(model.patch_count));

  ForwardTensorsT<S> out;

  auto [map1, g] = forward_features(model.net1_plan, model.params, "net1", whole,
                                    training, FeatureSource::Network1);
  (void)map1;
  out.global_vec = g.values;

  auto [map2, fv2] = forward_features(model.net2_plan, model.params, "net2",
                                      patches.packed, training, FeatureSource::Network2);
  (void)fv2;

  auto ch_w = channel_attention(map2, model.params, "att", model.config.attention);
  auto ch_applied = apply_channel(map2, ch_w);
  auto sp_map = spatial_attention(ch_applied, model.params, "att", model.config.attention);
  auto attended = apply_spatial(ch_applied, sp_map);

  auto [m_s, m_c] = patch_descriptor(attended);
  out.patch_vectors = m_s;
  out.patch_weights = patch_attention(m_c, model.params, "att", model.config.attention);
  out.fused = fuse_patch_vectors(m_s, out.patch_weights);

  auto head_in = concat<S>({out.global_vec, out.fused}, 0);
  auto hidden = relu(fully_connected(head_in, model.params.param("head/fc1/w"),
                                     model.params.param("head/fc1/b")));
  out.logits = fully_connected(hidden, model.params.param("head/fc2/w"),
                               model.params.param("head/fc2/b"));

  if (model.config.aux_heads) {
    out.aux1_logits = fully_connected(out.global_vec, model.params.param("aux1/fc/w"),
                                      model.params.param("aux1/fc/b"));
    out.aux2_logits = fully_connected(out.fused, model.params.param("aux2/fc/w"),
                                      model.params.param("aux2/fc/b"));
  }
  return out;
}

Prediction forward(DeFraudNetModelT<float>& model, const ThreeChannelImage& image) {
  NoGradGuard guard;
  auto t = forward_graph(model, image, /*training=*/false);
  Prediction p;
  p.logits = {t.logits->data[0], t.logits->data[1]};
  const auto probs = softmax(t.logits);
  p.probability_fake = static_cast<float>(probs[1]);
  p.patch_weights.assign(t.patch_weights->data.begin(), t.patch_weights->data.end());
  p.fake = t.logits->data[1] > t.logits->data[0];
  return p;
}

BatchPrediction predict_batch(DeFraudNetModelT<float>& model,
                              const std::vector<ThreeChannelImage>& images) {
  BatchPrediction out;
  out.predictions.resize(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    try {
      out.predictions[i] = forward(model, images[i]);
    } catch (const Error& e) {
      out.failures.emplace_back(i, e.what());
    }
  }
  return out;
}

template DeFraudNetModelT<float> build_model<float>(const DeFraudNetConfig&, std::uint64_t);
template DeFraudNetModelT<double> build_model<double>(const DeFraudNetConfig&, std::uint64_t);
template TensorPtrT<float> fuse_patch_vectors<float>(const TensorPtrT<float>&, const TensorPtrT<float>&);
template TensorPtrT<double> fuse_patch_vectors<double>(const TensorPtrT<double>&, const TensorPtrT<double>&);
template ForwardTensorsT<float> forward_graph<float>(DeFraudNetModelT<float>&, const ThreeChannelImage&, bool);
template ForwardTensorsT<double> forward_graph<double>(DeFraudNetModelT<double>&, const ThreeChannelImage&, bool);

}  // namespace dfn
