#include <doctest.h>

#include <cmath>
#include <cstdint>

#include "dfn/densenet.hpp"
#include "dfn/errors.hpp"
#include "oracles.hpp"

using namespace dfn;

namespace {

DenseNetConfig desk_n1() {
  DenseNetConfig cfg;
  cfg.depth = 16;
  cfg.growth_rate = 12;
  return cfg;
}

DenseNetConfig desk_n2() {
  DenseNetConfig cfg;
  cfg.depth = 10;
  cfg.growth_rate = 6;
  return cfg;
}

}  // namespace

TEST_CASE("plan splits depth into three equal blocks") {
  DenseNetConfig plain;
  plain.depth = 40;
  plain.growth_rate = 12;
  CHECK(plan_network(plain).layers_per_block == 12);

  DenseNetConfig bc;
  bc.depth = 100;
  bc.growth_rate = 12;
  bc.bottleneck = true;
  CHECK(plan_network(bc).layers_per_block == 16);

  CHECK(plan_network(desk_n1()).layers_per_block == 4);
  CHECK(plan_network(desk_n2()).layers_per_block == 2);
}

TEST_CASE("plan rejects depths that do not split") {
  DenseNetConfig bad;
  bad.depth = 11;
  CHECK_THROWS_AS(plan_network(bad), ConfigError);

  DenseNetConfig bad_bc;
  bad_bc.bottleneck = true;  // bottleneck pairs need (depth-4) % 6 == 0
  bad_bc.depth = 44;
  CHECK_THROWS_AS(plan_network(bad_bc), ConfigError);
}

TEST_CASE("desk plans land on the documented channel totals") {
  auto p1 = plan_network(desk_n1());
  CHECK(p1.final_channels == 90);
  auto p2 = plan_network(desk_n2());
  CHECK(p2.final_channels == 24);
}

TEST_CASE("channel arithmetic walks stem, dense growth, and compression") {
  auto plan = plan_network(desk_n2());
  // stem 12, block +6+6 = 24, transition floor(24/2) = 12, repeat, final 24
  REQUIRE(plan.layers.size() >= 4);
  CHECK(plan.layers.front().kind == LayerKind::Stem);
  CHECK(plan.layers.front().out_channels == 12);
  int transitions = 0, dense = 0;
  int last = plan.layers.front().out_channels;
  for (std::size_t i = 1; i < plan.layers.size(); ++i) {
    const auto& l = plan.layers[i];
    CHECK(l.in_channels == last);
    if (l.kind == LayerKind::Dense) {
      CHECK(l.out_channels == l.in_channels + l.growth);
      ++dense;
    } else if (l.kind == LayerKind::Transition) {
      CHECK(l.out_channels == l.in_channels / 2);
      ++transitions;
    }
    last = l.out_channels;
  }
  CHECK(dense == 6);
  CHECK(transitions == 2);
  CHECK(plan.layers.back().kind == LayerKind::FinalNorm);
}

TEST_CASE("conv_param_count fixture: 3 -> 16 channels, 3x3, bias") {
  CHECK(conv_param_count(3, 16, 3, true) == 448);
  CHECK(conv_param_count(3, 16, 3, false) == 432);
}

TEST_CASE("BC(100,12) parameter total is within 5% of 0.8M") {
  DenseNetConfig cfg;
  cfg.depth = 100;
  cfg.growth_rate = 12;
  cfg.bottleneck = true;
  const auto total = param_count(plan_network(cfg));
  CHECK(std::fabs(static_cast<double>(total) - 800000.0) / 800000.0 < 0.05);
}

TEST_CASE("analytic param_count equals the registered store exactly") {
  for (const auto& cfg : {desk_n1(), desk_n2()}) {
    auto plan = plan_network(cfg);
    ParamStoreT<float> store;
    Rng rng(71);
    init_densenet(plan, store, "net", rng);
    CHECK(param_count(plan) == store.parameter_count());
  }
}

TEST_CASE("stem stride switches on input side") {
  CHECK(stem_stride_for(56) == 1);
  CHECK(stem_stride_for(111) == 1);
  CHECK(stem_stride_for(112) == 2);
  CHECK(stem_stride_for(224) == 2);
}

TEST_CASE("feature map side: two transition pools plus the stem stride") {
  auto p1 = plan_network(desk_n1());
  CHECK(feature_map_side(p1, 224) == 28);
  auto p2 = plan_network(desk_n2());
  CHECK(feature_map_side(p2, 56) == 14);
}

TEST_CASE("forward_features emits the documented shapes") {
  auto plan = plan_network(desk_n2());
  ParamStoreT<float> store;
  Rng rng(72);
  init_densenet(plan, store, "net2", rng);

  Rng data_rng(73);
  auto x = oracle::random_tensor<float>({3, 56, 56}, data_rng, 0.0, 1.0);
  auto [fmap, fv] = forward_features(plan, store, "net2", x, false, FeatureSource::Network2);
  REQUIRE(fmap->shape == Shape{24, 14, 14});
  REQUIRE(fv.values->shape == Shape{24});
  CHECK(fv.dimension == 24);
  CHECK(fv.source == FeatureSource::Network2);

  // global average pool ties the two outputs together
  for (int c = 0; c < 24; ++c) {
    double acc = 0.0;
    for (int i = 0; i < 196; ++i) acc += fmap->data[c * 196 + i];
    CHECK(std::fabs(fv.values->data[c] - acc / 196.0) < 1e-5);
  }
}

TEST_CASE("batched forward matches per-sample forward") {
  auto plan = plan_network(desk_n2());
  ParamStoreT<float> store;
  Rng rng(74);
  init_densenet(plan, store, "n", rng);

  Rng data_rng(75);
  auto xb = oracle::random_tensor<float>({2, 3, 56, 56}, data_rng, 0.0, 1.0);
  auto [fmapb, fvb] = forward_features(plan, store, "n", xb, false, FeatureSource::Network1);
  REQUIRE(fmapb->shape == Shape{2, 24, 14, 14});
  REQUIRE(fvb.values->shape == Shape{2, 24});

  const int per = 3 * 56 * 56;
  for (int n = 0; n < 2; ++n) {
    std::vector<float> slice(xb->data.begin() + n * per, xb->data.begin() + (n + 1) * per);
    auto x = tensor_from<float>({3, 56, 56}, std::move(slice));
    auto [fmap, fv] = forward_features(plan, store, "n", x, false, FeatureSource::Network1);
    for (int i = 0; i < 24 * 196; ++i)
      CHECK(std::fabs(fmapb->data[n * 24 * 196 + i] - fmap->data[i]) < 1e-5);
    for (int c = 0; c < 24; ++c)
      CHECK(std::fabs(fvb.values->data[n * 24 + c] - fv.values->data[c]) < 1e-5);
  }
}

TEST_CASE("zero input stays finite in both modes") {
  auto plan = plan_network(desk_n2());
  ParamStoreT<float> store;
  Rng rng(76);
  init_densenet(plan, store, "n", rng);
  auto zero = tensor_from<float>({3, 56, 56}, std::vector<float>(3 * 56 * 56, 0.0f));
  for (bool training : {false, true}) {
    auto [fmap, fv] = forward_features(plan, store, "n", zero, training, FeatureSource::Network1);
    for (float v : fmap->data) CHECK(std::isfinite(v));
    for (float v : fv.values->data) CHECK(std::isfinite(v));
  }
}

TEST_CASE("init is pinned by seed; forward is deterministic") {
  auto plan = plan_network(desk_n2());
  ParamStoreT<float> s1, s2, s3;
  Rng r1(77), r2(77), r3(78);
  init_densenet(plan, s1, "n", r1);
  init_densenet(plan, s2, "n", r2);
  init_densenet(plan, s3, "n", r3);

  REQUIRE(s1.params().size() == s2.params().size());
  bool any_differs = false;
  for (const auto& [name, t] : s1.params()) {
    CHECK(s2.param(name)->data == t->data);
    if (s3.param(name)->data != t->data) any_differs = true;
  }
  CHECK(any_differs);

  Rng data_rng(79);
  auto x = oracle::random_tensor<float>({3, 56, 56}, data_rng, 0.0, 1.0);
  auto [fa, va] = forward_features(plan, s1, "n", x, false, FeatureSource::Network1);
  auto [fb, vb] = forward_features(plan, s2, "n", x, false, FeatureSource::Network1);
  CHECK(fa->data == fb->data);
  CHECK(va.values->data == vb.values->data);
}

TEST_CASE("He init scales with fan-in") {
  auto plan = plan_network(desk_n1());
  ParamStoreT<float> store;
  Rng rng(80);
  init_densenet(plan, store, "n", rng);
  // stem conv: fan_in = 3*3*3 = 27, expect sample std near sqrt(2/27)
  auto stem = store.param("n/stem/w");
  double sum = 0.0, sq = 0.0;
  for (float v : stem->data) {
    sum += v;
    sq += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(stem->data.size());
  const double var = sq / n - (sum / n) * (sum / n);
  const double want = 2.0 / 27.0;
  CHECK(std::fabs(var - want) / want < 0.35);
}

TEST_CASE("training forward updates running statistics") {
  auto plan = plan_network(desk_n2());
  ParamStoreT<float> store;
  Rng rng(81);
  init_densenet(plan, store, "n", rng);

  std::string mean_name;
  for (const auto& [name, t] : store.buffers())
    if (name.ends_with("/mean")) {
      mean_name = name;
      break;
    }
  REQUIRE_FALSE(mean_name.empty());
  const auto before = store.buffer(mean_name)->data;

  Rng data_rng(82);
  auto x = oracle::random_tensor<float>({3, 56, 56}, data_rng, 0.0, 1.0);
  forward_features(plan, store, "n", x, true, FeatureSource::Network1);
  CHECK(store.buffer(mean_name)->data != before);

  // eval mode leaves stats untouched
  const auto after = store.buffer(mean_name)->data;
  forward_features(plan, store, "n", x, false, FeatureSource::Network1);
  CHECK(store.buffer(mean_name)->data == after);
}
