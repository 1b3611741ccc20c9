#include <doctest.h>

#include <cmath>

#include "dfn/autograd.hpp"
#include "dfn/ops.hpp"
#include "oracles.hpp"

using namespace dfn;

namespace {

TensorPtrT<double> dtensor(Shape shape, std::vector<double> values, bool grad = false) {
  return tensor_from<double>(std::move(shape), std::move(values), grad);
}

}  // namespace

TEST_CASE("conv2d: all-ones 3x3 input, 2x2 ones kernel sums four pixels") {
  auto x = tensor_from<float>({1, 3, 3}, std::vector<float>(9, 1.0f));
  auto w = tensor_from<float>({1, 1, 2, 2}, std::vector<float>(4, 1.0f));
  auto y = conv2d(x, w, TensorPtr{}, 1, 0);
  REQUIRE(y->shape == Shape{1, 2, 2});
  for (float v : y->data) CHECK(v == 4.0f);
}

TEST_CASE("conv2d: zero kernel with bias gives the bias") {
  auto x = tensor_from<float>({1, 3, 3}, std::vector<float>(9, 1.0f));
  auto w = tensor_from<float>({1, 1, 3, 3}, std::vector<float>(9, 0.0f));
  auto b = tensor_from<float>({1}, {2.5f});
  auto y = conv2d(x, w, b, 1, 0);
  REQUIRE(y->shape == Shape{1, 1, 1});
  CHECK(y->data[0] == 2.5f);
}

TEST_CASE("conv2d matches the quadruple-loop oracle on random cases") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const int c = 1 + static_cast<int>(rng.uniform_int(0, 2));
    const int k_out = 1 + static_cast<int>(rng.uniform_int(0, 2));
    const int k = 1 + 2 * static_cast<int>(rng.uniform_int(0, 1));
    const int h = k + static_cast<int>(rng.uniform_int(0, 8));
    const int stride = 1 + static_cast<int>(rng.uniform_int(0, 1));
    const int pad = static_cast<int>(rng.uniform_int(0, k / 2));
    auto x = oracle::random_tensor<float>({c, h, h}, rng);
    auto w = oracle::random_tensor<float>({k_out, c, k, k}, rng);
    auto b = oracle::random_tensor<float>({k_out}, rng);
    auto y = conv2d(x, w, b, stride, pad);
    int ho = 0, wo = 0;
    const auto ref = oracle::conv2d_ref(oracle::to_double(x), 1, c, h, h, oracle::to_double(w),
                                        k_out, k, oracle::to_double(b), stride, pad, ho, wo);
    REQUIRE(y->shape == Shape{k_out, ho, wo});
    for (std::size_t i = 0; i < ref.size(); ++i)
      CHECK(std::fabs(y->data[i] - ref[i]) < 1e-5);
  }
}

TEST_CASE("conv2d batched rank-4 matches per-sample rank-3") {
  Rng rng(12);
  auto xb = oracle::random_tensor<float>({3, 2, 6, 6}, rng);
  auto w = oracle::random_tensor<float>({4, 2, 3, 3}, rng);
  auto b = oracle::random_tensor<float>({4}, rng);
  auto yb = conv2d(xb, w, b, 1, 1);
  REQUIRE(yb->shape == Shape{3, 4, 6, 6});
  for (int n = 0; n < 3; ++n) {
    std::vector<float> slice(xb->data.begin() + n * 72, xb->data.begin() + (n + 1) * 72);
    auto x = tensor_from<float>({2, 6, 6}, std::move(slice));
    auto y = conv2d(x, w, b, 1, 1);
    for (int i = 0; i < 4 * 36; ++i) CHECK(yb->data[n * 4 * 36 + i] == y->data[i]);
  }
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(13);
  auto x = oracle::random_tensor<double>({2, 5, 5}, rng);
  auto w = oracle::random_tensor<double>({3, 2, 3, 3}, rng);
  auto b = oracle::random_tensor<double>({3}, rng);
  auto make_loss = [&] {
    auto y = conv2d(x, w, b, 2, 1);
    return sum_all(y);
  };
  CHECK(oracle::check_gradients({x, w, b}, make_loss));
}

TEST_CASE("batch_norm: zero input with gamma=1 beta=0 stays zero") {
  auto x = tensor_from<float>({2, 3, 3}, std::vector<float>(18, 0.0f));
  auto gamma = tensor_from<float>({2}, {1.0f, 1.0f});
  auto beta = tensor_from<float>({2}, {0.0f, 0.0f});
  auto rm = tensor_from<float>({2}, {0.0f, 0.0f});
  auto rv = tensor_from<float>({2}, {1.0f, 1.0f});
  auto y = batch_norm(x, gamma, beta, rm, rv, true);
  for (float v : y->data) CHECK(v == 0.0f);
}

TEST_CASE("batch_norm: gamma=0 beta=5 gives all fives") {
  Rng rng(14);
  auto x = oracle::random_tensor<float>({2, 4, 4}, rng);
  auto gamma = tensor_from<float>({2}, {0.0f, 0.0f});
  auto beta = tensor_from<float>({2}, {5.0f, 5.0f});
  auto rm = tensor_from<float>({2}, {0.0f, 0.0f});
  auto rv = tensor_from<float>({2}, {1.0f, 1.0f});
  for (bool training : {true, false}) {
    auto y = batch_norm(x, gamma, beta, rm, rv, training);
    for (float v : y->data) CHECK(v == 5.0f);
  }
}

TEST_CASE("batch_norm normalizes a random batch to zero mean unit variance") {
  Rng rng(15);
  auto x = oracle::random_tensor<float>({4, 3, 5, 5}, rng, -3.0, 3.0);
  auto gamma = tensor_from<float>({3}, std::vector<float>(3, 1.0f));
  auto beta = tensor_from<float>({3}, std::vector<float>(3, 0.0f));
  auto rm = tensor_from<float>({3}, std::vector<float>(3, 0.0f));
  auto rv = tensor_from<float>({3}, std::vector<float>(3, 1.0f));
  auto y = batch_norm(x, gamma, beta, rm, rv, true);
  const int per = 4 * 25;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0, sq = 0.0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 25; ++i) {
        const double v = y->data[(n * 3 + c) * 25 + i];
        sum += v;
        sq += v * v;
      }
    const double mean = sum / per;
    CHECK(std::fabs(mean) < 1e-5);
    CHECK(std::fabs(sq / per - mean * mean - 1.0) < 1e-3);
  }
}

TEST_CASE("batch_norm eval mode uses running stats and leaves them alone") {
  Rng rng(16);
  auto x = oracle::random_tensor<float>({2, 3, 3}, rng);
  auto gamma = tensor_from<float>({2}, {2.0f, 0.5f});
  auto beta = tensor_from<float>({2}, {0.1f, -0.2f});
  auto rm = tensor_from<float>({2}, {0.3f, -0.4f});
  auto rv = tensor_from<float>({2}, {1.5f, 0.8f});
  const auto rm_before = rm->data, rv_before = rv->data;
  auto y = batch_norm(x, gamma, beta, rm, rv, false);
  CHECK(rm->data == rm_before);
  CHECK(rv->data == rv_before);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 9; ++i) {
      const double xhat = (x->data[c * 9 + i] - rm->data[c]) / std::sqrt(rv->data[c] + 1e-5);
      const double want = gamma->data[c] * xhat + beta->data[c];
      CHECK(std::fabs(y->data[c * 9 + i] - want) < 1e-5);
    }
}

TEST_CASE("batch_norm training mode updates running stats with momentum 0.1") {
  Rng rng(17);
  auto x = oracle::random_tensor<float>({4, 1, 2, 2}, rng);
  auto gamma = tensor_from<float>({1}, {1.0f});
  auto beta = tensor_from<float>({1}, {0.0f});
  auto rm = tensor_from<float>({1}, {0.0f});
  auto rv = tensor_from<float>({1}, {1.0f});
  batch_norm(x, gamma, beta, rm, rv, true);
  double sum = 0.0;
  for (float v : x->data) sum += v;
  const double mean = sum / 16.0;
  double var = 0.0;
  for (float v : x->data) var += (v - mean) * (v - mean);
  const double unbiased = var / 15.0;
  CHECK(std::fabs(rm->data[0] - 0.1 * mean) < 1e-6);
  CHECK(std::fabs(rv->data[0] - (0.9 + 0.1 * unbiased)) < 1e-6);
}

TEST_CASE("batch_norm gradients match finite differences") {
  Rng rng(18);
  auto x = oracle::random_tensor<double>({3, 2, 3, 3}, rng);
  auto gamma = oracle::random_tensor<double>({2}, rng, 0.5, 1.5);
  auto beta = oracle::random_tensor<double>({2}, rng);
  auto rm = tensor_from<double>({2}, std::vector<double>(2, 0.0));
  auto rv = tensor_from<double>({2}, std::vector<double>(2, 1.0));
  auto make_loss = [&] {
    auto y = batch_norm(x, gamma, beta, rm, rv, true);
    auto y2 = activation(y, ActKind::Sigmoid);  // break symmetry so dX is nonzero
    return sum_all(y2);
  };
  CHECK(oracle::check_gradients({x, gamma, beta}, make_loss));
}

TEST_CASE("activation fixtures: sigmoid(0)=0.5, relu clamps") {
  auto x = tensor_from<float>({3}, {0.0f, -3.2f, 3.2f});
  auto s = sigmoid(x);
  CHECK(s->data[0] == 0.5f);
  auto r = relu(x);
  CHECK(r->data[0] == 0.0f);
  CHECK(r->data[1] == 0.0f);
  CHECK(r->data[2] == 3.2f);
}

TEST_CASE("sigmoid gradient at 0 is 0.25") {
  auto x = dtensor({1}, {0.0}, true);
  auto make_loss = [&] { return sum_all(sigmoid(x)); };
  auto loss = make_loss();
  backward(loss);
  CHECK(oracle::rel_err(x->grad[0], 0.25) < 1e-6);
  CHECK(oracle::check_gradients({x}, make_loss, 1e-5, 1e-4));
}

TEST_CASE("sigmoid output is strictly inside (0,1) even for huge inputs") {
  auto x = tensor_from<float>({4}, {-1000.0f, -80.0f, 80.0f, 1000.0f});
  auto y = sigmoid(x);
  for (float v : y->data) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("pool2d fixtures: avg 2.5 and max 4.0 on [[1,2],[3,4]]") {
  auto x = tensor_from<float>({1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
  CHECK(pool2d(x, PoolKind::Avg, 2, 2)->data[0] == 2.5f);
  CHECK(pool2d(x, PoolKind::Max, 2, 2)->data[0] == 4.0f);
}

TEST_CASE("pool2d matches the windowed-reduction oracle") {
  Rng rng(19);
  auto x = oracle::random_tensor<float>({3, 6, 6}, rng);
  for (bool max_pool : {false, true}) {
    auto y = pool2d(x, max_pool ? PoolKind::Max : PoolKind::Avg, 2, 2);
    int ho = 0, wo = 0;
    const auto ref = oracle::pool2d_ref(oracle::to_double(x), 3, 6, 6, max_pool, 2, 2, ho, wo);
    REQUIRE(y->shape == Shape{3, ho, wo});
    for (std::size_t i = 0; i < ref.size(); ++i)
      CHECK(std::fabs(y->data[i] - ref[i]) < 1e-6);
  }
}

TEST_CASE("pool2d rejects windows that do not tile") {
  auto x = tensor_from<float>({1, 5, 5}, std::vector<float>(25, 0.0f));
  CHECK_THROWS_AS(pool2d(x, PoolKind::Avg, 2, 2), ShapeError);
}

TEST_CASE("pool2d gradients match finite differences") {
  Rng rng(20);
  auto x = oracle::random_tensor<double>({2, 4, 4}, rng);
  for (PoolKind kind : {PoolKind::Avg, PoolKind::Max}) {
    auto make_loss = [&] { return sum_all(sigmoid(pool2d(x, kind, 2, 2))); };
    CHECK(oracle::check_gradients({x}, make_loss));
  }
}

TEST_CASE("reduce_spatial fixtures and oracle") {
  auto c7 = tensor_from<float>({1, 2, 2}, std::vector<float>(4, 7.0f));
  CHECK(reduce_spatial(c7, ReduceKind::Avg)->data[0] == 7.0f);
  CHECK(reduce_spatial(c7, ReduceKind::Max)->data[0] == 7.0f);

  auto x = tensor_from<float>({1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
  CHECK(reduce_spatial(x, ReduceKind::Avg)->data[0] == 2.5f);
  CHECK(reduce_spatial(x, ReduceKind::Max)->data[0] == 4.0f);

  Rng rng(21);
  auto r = oracle::random_tensor<float>({4, 5, 3}, rng);
  for (bool max_kind : {false, true}) {
    auto y = reduce_spatial(r, max_kind ? ReduceKind::Max : ReduceKind::Avg);
    const auto ref = oracle::reduce_spatial_ref(oracle::to_double(r), 4, 5, 3, max_kind);
    REQUIRE(y->shape == Shape{4});
    for (int i = 0; i < 4; ++i) CHECK(std::fabs(y->data[i] - ref[i]) < 1e-6);
  }
}

TEST_CASE("reduce_channels fixtures and oracle") {
  std::vector<float> two(8);
  std::fill(two.begin(), two.begin() + 4, 1.0f);
  std::fill(two.begin() + 4, two.end(), 3.0f);
  auto x = tensor_from<float>({2, 2, 2}, std::move(two));
  auto avg = reduce_channels(x, ReduceKind::Avg);
  auto mx = reduce_channels(x, ReduceKind::Max);
  REQUIRE(avg->shape == Shape{1, 2, 2});
  for (float v : avg->data) CHECK(v == 2.0f);
  for (float v : mx->data) CHECK(v == 3.0f);

  Rng rng(22);
  auto single = oracle::random_tensor<float>({1, 3, 3}, rng);
  CHECK(reduce_channels(single, ReduceKind::Avg)->data == single->data);
  CHECK(reduce_channels(single, ReduceKind::Max)->data == single->data);

  auto r = oracle::random_tensor<float>({5, 4, 4}, rng);
  for (bool max_kind : {false, true}) {
    auto y = reduce_channels(r, max_kind ? ReduceKind::Max : ReduceKind::Avg);
    const auto ref = oracle::reduce_channels_ref(oracle::to_double(r), 5, 4, 4, max_kind);
    for (std::size_t i = 0; i < ref.size(); ++i)
      CHECK(std::fabs(y->data[i] - ref[i]) < 1e-6);
  }
}

TEST_CASE("reduce gradients match finite differences") {
  Rng rng(23);
  auto x = oracle::random_tensor<double>({3, 3, 3}, rng);
  for (ReduceKind kind : {ReduceKind::Avg, ReduceKind::Max}) {
    auto spatial = [&] { return sum_all(sigmoid(reduce_spatial(x, kind))); };
    auto channels = [&] { return sum_all(sigmoid(reduce_channels(x, kind))); };
    CHECK(oracle::check_gradients({x}, spatial));
    CHECK(oracle::check_gradients({x}, channels));
  }
}

TEST_CASE("fully_connected fixtures and oracle") {
  auto x = tensor_from<float>({3}, {1.0f, 2.0f, 3.0f});
  auto eye = tensor_from<float>({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(fully_connected(x, eye, TensorPtr{})->data == x->data);

  auto zero_w = tensor_from<float>({2, 3}, std::vector<float>(6, 0.0f));
  auto b = tensor_from<float>({2}, {4.0f, -1.0f});
  CHECK(fully_connected(x, zero_w, b)->data == b->data);

  Rng rng(24);
  auto rx = oracle::random_tensor<float>({7}, rng);
  auto rw = oracle::random_tensor<float>({4, 7}, rng);
  auto rb = oracle::random_tensor<float>({4}, rng);
  auto y = fully_connected(rx, rw, rb);
  const auto ref =
      oracle::fc_ref(oracle::to_double(rx), 7, oracle::to_double(rw), 4, oracle::to_double(rb));
  for (int i = 0; i < 4; ++i) CHECK(std::fabs(y->data[i] - ref[i]) < 1e-5);
}

TEST_CASE("fully_connected batched rows match per-row results") {
  Rng rng(25);
  auto xb = oracle::random_tensor<float>({3, 5}, rng);
  auto w = oracle::random_tensor<float>({2, 5}, rng);
  auto b = oracle::random_tensor<float>({2}, rng);
  auto yb = fully_connected(xb, w, b);
  REQUIRE(yb->shape == Shape{3, 2});
  for (int n = 0; n < 3; ++n) {
    std::vector<float> row(xb->data.begin() + n * 5, xb->data.begin() + (n + 1) * 5);
    auto y = fully_connected(tensor_from<float>({5}, std::move(row)), w, b);
    for (int i = 0; i < 2; ++i) CHECK(yb->data[n * 2 + i] == y->data[i]);
  }
}

TEST_CASE("fully_connected gradients match finite differences") {
  Rng rng(26);
  auto x = oracle::random_tensor<double>({2, 4}, rng);
  auto w = oracle::random_tensor<double>({3, 4}, rng);
  auto b = oracle::random_tensor<double>({3}, rng);
  auto make_loss = [&] { return sum_all(sigmoid(fully_connected(x, w, b))); };
  CHECK(oracle::check_gradients({x, w, b}, make_loss));
}

TEST_CASE("concat fixtures: channel stacking and identity") {
  auto zeros = tensor_from<float>({1, 2, 2}, std::vector<float>(4, 0.0f));
  auto ones = tensor_from<float>({1, 2, 2}, std::vector<float>(4, 1.0f));
  auto y = concat<float>({zeros, ones}, 0);
  REQUIRE(y->shape == Shape{2, 2, 2});
  for (int i = 0; i < 4; ++i) CHECK(y->data[i] == 0.0f);
  for (int i = 4; i < 8; ++i) CHECK(y->data[i] == 1.0f);

  auto single = concat<float>({ones}, 0);
  CHECK(single->data == ones->data);
}

TEST_CASE("concat gradient partitions across inputs") {
  Rng rng(27);
  auto a = oracle::random_tensor<double>({2, 2}, rng);
  auto b = oracle::random_tensor<double>({3, 2}, rng);
  auto make_loss = [&] { return sum_all(sigmoid(concat<double>({a, b}, 0))); };
  CHECK(oracle::check_gradients({a, b}, make_loss));
}

TEST_CASE("softmax_cross_entropy fixtures") {
  auto flat = tensor_from<float>({2}, {0.0f, 0.0f});
  for (int label : {0, 1})
    CHECK(std::fabs(softmax_cross_entropy(flat, label)->data[0] - std::log(2.0)) < 1e-6);

  auto confident = tensor_from<float>({2}, {10.0f, -10.0f});
  CHECK(softmax_cross_entropy(confident, 0)->data[0] < 1e-8);

  // Shift invariance: adding a constant to all logits changes nothing.
  auto l1 = tensor_from<double>({2}, {1.3, -0.4});
  auto l2 = tensor_from<double>({2}, {101.3, 99.6});
  CHECK(std::fabs(softmax_cross_entropy(l1, 1)->data[0] -
                  softmax_cross_entropy(l2, 1)->data[0]) < 1e-9);
}

TEST_CASE("softmax_cross_entropy gradient is p - onehot") {
  auto logits = dtensor({2}, {0.7, -0.3}, true);
  auto loss = softmax_cross_entropy(logits, 1);
  backward(loss);
  const double p0 = std::exp(0.7) / (std::exp(0.7) + std::exp(-0.3));
  CHECK(oracle::rel_err(logits->grad[0], p0) < 1e-6);
  CHECK(std::fabs(logits->grad[1] - ((1.0 - p0) - 1.0)) < 1e-6);

  auto fresh = dtensor({2}, {0.7, -0.3});
  auto make_loss = [&] { return softmax_cross_entropy(fresh, 1); };
  CHECK(oracle::check_gradients({fresh}, make_loss, 1e-6, 1e-4));
}

TEST_CASE("softmax probabilities sum to one and order logits") {
  auto logits = tensor_from<float>({2}, {2.0f, -1.0f});
  const auto p = softmax(logits);
  CHECK(std::fabs(p[0] + p[1] - 1.0) < 1e-12);
  CHECK(p[0] > p[1]);
}

TEST_CASE("backward on sum gives ones; unused parameter keeps empty grad") {
  Rng rng(28);
  auto w = oracle::random_tensor<double>({3, 4}, rng);
  auto unused = oracle::random_tensor<double>({2}, rng);
  w->requires_grad = true;
  unused->requires_grad = true;
  auto loss = sum_all(w);
  backward(loss);
  REQUIRE(w->grad.size() == w->data.size());
  for (double g : w->grad) CHECK(g == 1.0);
  CHECK(unused->grad.empty());
}

TEST_CASE("backward requires a scalar root and visits shared nodes once") {
  Rng rng(29);
  auto x = oracle::random_tensor<double>({3}, rng);
  x->requires_grad = true;
  CHECK_THROWS_AS(backward(sigmoid(x)), ShapeError);

  // Diamond: loss = sum(s + s) where s = sigmoid(x); ds flows twice into s
  // but s's backward must run once, giving 2 * s'(x).
  auto s = sigmoid(x);
  auto loss = sum_all(add(s, s));
  backward(loss);
  for (int i = 0; i < 3; ++i) {
    const double sv = 1.0 / (1.0 + std::exp(-x->data[i]));
    CHECK(oracle::rel_err(x->grad[i], 2.0 * sv * (1.0 - sv)) < 1e-8);
  }
}

TEST_CASE("NoGradGuard suppresses graph construction") {
  Rng rng(30);
  auto x = oracle::random_tensor<float>({2, 3, 3}, rng);
  x->requires_grad = true;
  NoGradGuard guard;
  auto y = sigmoid(x);
  CHECK(y->parents.empty());
  CHECK_FALSE(y->requires_grad);
}

TEST_CASE("broadcast helpers match finite differences") {
  Rng rng(31);
  auto x = oracle::random_tensor<double>({3, 2, 2}, rng);
  auto w1 = oracle::random_tensor<double>({3}, rng, 0.1, 1.0);
  auto mc1 = [&] { return sum_all(sigmoid(mul_channels(x, w1))); };
  CHECK(oracle::check_gradients({x, w1}, mc1));

  auto xb = oracle::random_tensor<double>({2, 3, 2, 2}, rng);
  auto w2 = oracle::random_tensor<double>({2, 3}, rng, 0.1, 1.0);
  auto mc2 = [&] { return sum_all(sigmoid(mul_channels(xb, w2))); };
  CHECK(oracle::check_gradients({xb, w2}, mc2));

  auto m = oracle::random_tensor<double>({1, 2, 2}, rng, 0.1, 1.0);
  auto ms = [&] { return sum_all(sigmoid(mul_spatial(x, m))); };
  CHECK(oracle::check_gradients({x, m}, ms));

  auto rows = oracle::random_tensor<double>({4, 3}, rng);
  auto sr = [&] { return sum_all(sigmoid(sum_rows(rows))); };
  CHECK(oracle::check_gradients({rows}, sr));
  auto mc = [&] { return sum_all(sigmoid(mean_cols(rows))); };
  CHECK(oracle::check_gradients({rows}, mc));

  auto s = oracle::random_tensor<double>({1}, rng, 0.5, 2.0);
  auto dv = [&] { return sum_all(sigmoid(div_by_scalar(rows, s))); };
  CHECK(oracle::check_gradients({rows, s}, dv));
}

TEST_CASE("mul_channels fixtures") {
  auto x = tensor_from<float>({2, 2, 2}, {1, 1, 1, 1, 2, 2, 2, 2});
  auto w = tensor_from<float>({2}, {1.0f, 0.0f});
  auto y = mul_channels(x, w);
  for (int i = 0; i < 4; ++i) CHECK(y->data[i] == 1.0f);
  for (int i = 4; i < 8; ++i) CHECK(y->data[i] == 0.0f);
}

TEST_CASE("mul_spatial fixtures: ones is identity, zero kills a column") {
  Rng rng(32);
  auto x = oracle::random_tensor<float>({3, 2, 2}, rng);
  auto ones = tensor_from<float>({1, 2, 2}, std::vector<float>(4, 1.0f));
  CHECK(mul_spatial(x, ones)->data == x->data);

  auto mask = tensor_from<float>({1, 2, 2}, {1.0f, 0.0f, 1.0f, 1.0f});
  auto y = mul_spatial(x, mask);
  for (int c = 0; c < 3; ++c) CHECK(y->data[c * 4 + 1] == 0.0f);
}

TEST_CASE("reshape keeps data and supports gradients") {
  Rng rng(33);
  auto x = oracle::random_tensor<double>({2, 6}, rng);
  auto r = reshape(x, {3, 4});
  REQUIRE(r->shape == Shape{3, 4});
  CHECK(r->data == x->data);
  CHECK_THROWS_AS(reshape(x, Shape{5, 2}), ShapeError);
  auto make_loss = [&] { return sum_all(sigmoid(reshape(x, {12}))); };
  CHECK(oracle::check_gradients({x}, make_loss));
}

TEST_CASE("shape validation errors") {
  auto x = tensor_from<float>({2, 3, 3}, std::vector<float>(18, 0.0f));
  auto w_bad = tensor_from<float>({1, 3, 2, 2}, std::vector<float>(12, 0.0f));
  CHECK_THROWS_AS(conv2d(x, w_bad, TensorPtr{}, 1, 0), ShapeError);
  auto a = tensor_from<float>({2}, {1.0f, 2.0f});
  auto b = tensor_from<float>({3}, {1.0f, 2.0f, 3.0f});
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(softmax_cross_entropy(a, 2), InputError);
}
