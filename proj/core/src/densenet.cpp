#include "dfn/densenet.hpp"

#include <cmath>

#include "dfn/ops.hpp"

namespace dfn {

LayerPlan plan_network(const DenseNetConfig& cfg) {
  if (cfg.blocks != 3) throw ConfigError("plan_network: blocks must be 3");
  if (cfg.growth_rate < 1) throw ConfigError("plan_network: growth_rate must be >= 1");
  if (cfg.input_channels < 1) throw ConfigError("plan_network: input_channels must be >= 1");
  if (!(cfg.compression > 0.0 && cfg.compression <= 1.0))
    throw ConfigError("plan_network: compression must be in (0,1]");
  const int div = cfg.bottleneck ? 6 : 3;
  if (cfg.depth < 4 || (cfg.depth - 4) % div != 0)
    throw ConfigError("plan_network: depth " + std::to_string(cfg.depth) +
                      " invalid; (depth-4) must be divisible by " + std::to_string(div) +
                      (cfg.bottleneck ? " (bottleneck)" : " (plain)"));

  LayerPlan plan;
  plan.cfg = cfg;
  plan.layers_per_block = (cfg.depth - 4) / div;

  int c = cfg.stem_channels > 0 ? cfg.stem_channels : 2 * cfg.growth_rate;
  plan.layers.push_back({LayerKind::Stem, cfg.input_channels, c, 0, 0, "stem"});

  for (int b = 1; b <= cfg.blocks; ++b) {
    for (int l = 1; l <= plan.layers_per_block; ++l) {
      LayerDesc d;
      d.kind = LayerKind::Dense;
      d.in_channels = c;
      d.growth = cfg.growth_rate;
      d.bottleneck_channels = cfg.bottleneck ? 4 * cfg.growth_rate : 0;
      c += cfg.growth_rate;
      d.out_channels = c;
      d.name = "b" + std::to_string(b) + "/l" + std::to_string(l);
      plan.layers.push_back(std::move(d));
    }
    if (b < cfg.blocks) {
      LayerDesc t;
      t.kind = LayerKind::Transition;
      t.in_channels = c;
      c = static_cast<int>(std::floor(cfg.compression * c));
      if (c < 1) throw ConfigError("plan_network: compression collapses channels to zero");
      t.out_channels = c;
      t.name = "t" + std::to_string(b);
      plan.layers.push_back(std::move(t));
    }
  }
  plan.layers.push_back({LayerKind::FinalNorm, c, c, 0, 0, "final_bn"});
  plan.final_channels = c;
  return plan;
}

std::int64_t param_count(const LayerPlan& plan) {
  std::int64_t n = 0;
  for (const LayerDesc& d : plan.layers) {
    switch (d.kind) {
      case LayerKind::Stem:
        n += conv_param_count(d.in_channels, d.out_channels, 3, false);
        break;
      case LayerKind::Dense:
        n += 2 * d.in_channels;  // norm scale+shift
        if (d.bottleneck_channels > 0) {
          n += conv_param_count(d.in_channels, d.bottleneck_channels, 1, false);
          n += 2 * d.bottleneck_channels;
          n += conv_param_count(d.bottleneck_channels, d.growth, 3, false);
        } else {
          n += conv_param_count(d.in_channels, d.growth, 3, false);
        }
        break;
      case LayerKind::Transition:
        n += 2 * d.in_channels;
        n += conv_param_count(d.in_channels, d.out_channels, 1, false);
        break;
      case LayerKind::FinalNorm:
        n += 2 * d.in_channels;
        break;
    }
  }
  return n;
}

int stem_stride_for(int input_side) { return input_side >= 112 ? 2 : 1; }

int feature_map_side(const LayerPlan& plan, int input_side) {
  // stem conv: 3x3, pad 1, stride per input size; transitions halve via
  // 2x2 avg-pool stride 2
  int side = (input_side + 2 - 3) / stem_stride_for(input_side) + 1;
  for (const LayerDesc& d : plan.layers)
    if (d.kind == LayerKind::Transition) side /= 2;
  return side;
}

namespace {

template <typename S>
TensorPtrT<S> he_conv(ParamStoreT<S>& store, const std::string& name, int cout,
                      int cin, int k, Rng& rng) {
  auto w = make_tensor<S>({cout, cin, k, k});
  const double std_dev = std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
  for (auto& v : w->data) v = static_cast<S>(rng.normal(0.0, std_dev));
  return store.add_param(name, w);
}

template <typename S>
void add_norm(ParamStoreT<S>& store, const std::string& name, int c) {
  store.add_param(name + "/gamma", full_tensor<S>({c}, S(1)));
  store.add_param(name + "/beta", make_tensor<S>({c}));
  store.add_buffer(name + "/mean", make_tensor<S>({c}));
  store.add_buffer(name + "/var", full_tensor<S>({c}, S(1)));
}

template <typename S>
TensorPtrT<S> norm_relu(const ParamStoreT<S>& store, const std::string& name,
                        const TensorPtrT<S>& x, bool training) {
  auto y = batch_norm(x, store.param(name + "/gamma"), store.param(name + "/beta"),
                      store.buffer(name + "/mean"), store.buffer(name + "/var"),
                      training);
  return relu(y);
}

}  // namespace

template <typename S>
void init_densenet(const LayerPlan& plan, ParamStoreT<S>& store,
                   const std::string& prefix, Rng& rng) {
  for (const LayerDesc& d : plan.layers) {
    const std::string base = prefix + "/" + d.name;
    switch (d.kind) {
      case LayerKind::Stem:
        he_conv(store, base + "/w", d.out_channels, d.in_channels, 3, rng);
        break;
      case LayerKind::Dense:
        add_norm(store, base + "/bn1", d.in_channels);
        if (d.bottleneck_channels > 0) {
          he_conv(store, base + "/conv1/w", d.bottleneck_channels, d.in_channels, 1, rng);
          add_norm(store, base + "/bn2", d.bottleneck_channels);
          he_conv(store, base + "/conv2/w", d.growth, d.bottleneck_channels, 3, rng);
        } else {
          he_conv(store, base + "/conv1/w", d.growth, d.in_channels, 3, rng);
        }
        break;
      case LayerKind::Transition:
        add_norm(store, base + "/bn", d.in_channels);
        he_conv(store, base + "/conv/w", d.out_channels, d.in_channels, 1, rng);
        break;
      case LayerKind::FinalNorm:
        add_norm(store, base, d.in_channels);
        break;
    }
  }
}

template <typename S>
std::pair<TensorPtrT<S>, FeatureVectorT<S>> forward_features(
    const LayerPlan& plan, const ParamStoreT<S>& store, const std::string& prefix,
    const TensorPtrT<S>& input, bool training, FeatureSource source) {
  const Shape& is = input->shape;
  if (is.size() != 3 && is.size() != 4)
    throw ShapeError("forward_features: input must be [3,S,S] or [N,3,S,S], got " +
                     shape_str(is));
  const int ch = is[is.size() - 3];
  const int side = is[is.size() - 1];
  if (ch != plan.cfg.input_channels || is[is.size() - 2] != side)
    throw ShapeError("forward_features: bad input " + shape_str(is));

  TensorPtrT<S> x = input;
  for (const LayerDesc& d : plan.layers) {
    const std::string base = prefix + "/" + d.name;
    switch (d.kind) {
      case LayerKind::Stem:
        x = conv2d(x, store.param(base + "/w"), TensorPtrT<S>{}, stem_stride_for(side), 1);
        break;
      case LayerKind::Dense: {
        auto y = norm_relu(store, base + "/bn1", x, training);
        if (d.bottleneck_channels > 0) {
          y = conv2d(y, store.param(base + "/conv1/w"), TensorPtrT<S>{}, 1, 0);
          y = norm_relu(store, base + "/bn2", y, training);
          y = conv2d(y, store.param(base + "/conv2/w"), TensorPtrT<S>{}, 1, 1);
        } else {
          y = conv2d(y, store.param(base + "/conv1/w"), TensorPtrT<S>{}, 1, 1);
        }
        // dense connectivity: the new features ride along with every
        // earlier layer's output
        x = concat<S>({x, y}, static_cast<int>(x->shape.size()) - 3);
        break;
      }
      case LayerKind::Transition: {
        auto y = norm_relu(store, base + "/bn", x, training);
        y = conv2d(y, store.param(base + "/conv/w"), TensorPtrT<S>{}, 1, 0);
        x = pool2d(y, PoolKind::Avg, 2, 2);
        break;
      }
      case LayerKind::FinalNorm:
        x = norm_relu(store, base, x, training);
        break;
    }
  }

  FeatureVectorT<S> fv;
  fv.values = reduce_spatial(x, ReduceKind::Avg);
  fv.source = source;
  fv.dimension = plan.final_channels;
  return {x, fv};
}

template void init_densenet<float>(const LayerPlan&, ParamStoreT<float>&, const std::string&, Rng&);
template void init_densenet<double>(const LayerPlan&, ParamStoreT<double>&, const std::string&, Rng&);
template std::pair<TensorPtrT<float>, FeatureVectorT<float>> forward_features<float>(
    const LayerPlan&, const ParamStoreT<float>&, const std::string&,
    const TensorPtrT<float>&, bool, FeatureSource);
template std::pair<TensorPtrT<double>, FeatureVectorT<double>> forward_features<double>(
    const LayerPlan&, const ParamStoreT<double>&, const std::string&,
    const TensorPtrT<double>&, bool, FeatureSource);

}  // namespace dfn
