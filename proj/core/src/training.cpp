#include "dfn/training.hpp"

#include <cmath>
#include <ostream>

#include "dfn/autograd.hpp"
#include "dfn/ops.hpp"

namespace dfn {

namespace {

// the optimizer tolerates lr=0 (a frozen step still moves velocities);
// train() additionally demands lr > 0
void validate_step(const TrainConfig& cfg) {
  if (cfg.lr < 0.0) throw ConfigError("TrainConfig: lr must be >= 0");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    throw ConfigError("TrainConfig: momentum must be in [0,1)");
  if (cfg.weight_decay < 0.0) throw ConfigError("TrainConfig: weight_decay must be >= 0");
  if (cfg.fingerprints_per_step < 1)
    throw ConfigError("TrainConfig: fingerprints_per_step must be >= 1");
}

void validate(const TrainConfig& cfg) {
  validate_step(cfg);
  if (!(cfg.lr > 0.0)) throw ConfigError("TrainConfig: lr must be > 0");
  if (cfg.epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
}

bool decayed(const std::string& name) {
  return name.size() >= 2 && name.compare(name.size() - 2, 2, "/w") == 0;
}

}  // namespace

SgdNesterov::SgdNesterov(const ParamStore& store, const TrainConfig& cfg) : cfg_(cfg) {
  validate_step(cfg);
  for (const auto& [name, t] : store.params())
    velocities_[name].assign(t->data.size(), 0.0f);
}

void SgdNesterov::restore(const std::map<std::string, std::vector<float>>& velocities) {
  for (auto& [name, v] : velocities_) {
    auto it = velocities.find(name);
    if (it == velocities.end())
      throw StateError("optimizer restore: missing velocity for " + name);
    if (it->second.size() != v.size())
      throw StateError("optimizer restore: size mismatch for " + name);
    v = it->second;
  }
}

void SgdNesterov::step(ParamStore& store) {
  const float lr = static_cast<float>(cfg_.lr);
  const float mu = static_cast<float>(cfg_.momentum);
  for (const auto& [name, t] : store.params()) {
    if (t->grad.size() != t->data.size())
      throw StateError("sgd step: no gradient for " + name);
    auto& v = velocities_.at(name);
    const float wd = decayed(name) ? static_cast<float>(cfg_.weight_decay) : 0.0f;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const float g = t->grad[i] + wd * t->data[i];
      v[i] = mu * v[i] + g;
      t->data[i] -= lr * (cfg_.nesterov ? g + mu * v[i] : v[i]);
    }
  }
}

template <typename S>
TensorPtrT<S> sample_loss(const ForwardTensorsT<S>& fw, int label) {
  auto loss = softmax_cross_entropy(fw.logits, label);
  if (fw.aux1_logits && fw.aux2_logits) {
    auto aux = add(softmax_cross_entropy(fw.aux1_logits, label),
                   softmax_cross_entropy(fw.aux2_logits, label));
    loss = add(loss, scale(aux, 0.3));
  }
  return loss;
}

TrainResult train(DeFraudNetModel& model, const std::vector<TrainSample>& data,
                  const TrainConfig& cfg, SgdNesterov& opt, Rng& rng,
                  int start_epoch, const TrainHooks& hooks) {
  validate(cfg);
  if (data.empty()) throw ConfigError("train: empty dataset");
  bool seen[2] = {false, false};
  for (const TrainSample& s : data) {
    if (s.label != 0 && s.label != 1)
      throw InputError("train: label must be 0 or 1, got " + std::to_string(s.label));
    seen[s.label] = true;
  }
  if (!seen[0] || !seen[1])
    throw ConfigError("train: dataset must contain both classes");

  TrainResult result;
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) {
      for (std::size_t i = order.size() - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(i)));
        std::swap(order[i], order[j]);
      }
    }

    double loss_sum = 0.0;
    std::int64_t counts[2] = {0, 0};  // totals per class
    std::int64_t errors[2] = {0, 0};  // misclassified per class

    std::size_t i = 0;
    while (i < order.size()) {
      const std::size_t group = std::min<std::size_t>(
          static_cast<std::size_t>(cfg.fingerprints_per_step), order.size() - i);
      model.params.zero_grad();
      for (std::size_t k = 0; k < group; ++k, ++i) {
        const TrainSample& s = data[order[i]];
        auto fw = forward_graph(model, s.image, /*training=*/true);
        auto loss = sample_loss(fw, s.label);
        if (group > 1) loss = scale(loss, 1.0 / static_cast<double>(group));
        backward(loss);

        const double sample_loss_value =
            static_cast<double>(loss->data[0]) * (group > 1 ? group : 1);
        if (!std::isfinite(sample_loss_value))
          throw StateError("training diverged: non-finite loss at epoch " +
                           std::to_string(epoch + 1) + ", step " +
                           std::to_string(result.steps + 1));
        loss_sum += sample_loss_value;

        const bool predicted_fake = fw.logits->data[1] > fw.logits->data[0];
        ++counts[s.label];
        if (predicted_fake != (s.label == 1)) ++errors[s.label];
      }
      opt.step(model.params);
      ++result.steps;
    }

    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.loss = loss_sum / static_cast<double>(data.size());
    const double err_live = counts[0] ? 100.0 * errors[0] / counts[0] : 0.0;
    const double err_fake = counts[1] ? 100.0 * errors[1] / counts[1] : 0.0;
    stats.train_ace = (err_live + err_fake) / 2.0;
    result.log.push_back(stats);
    result.last_epoch = stats.epoch;

    if (hooks.epoch_log) {
      (*hooks.epoch_log) << "{\"epoch\":" << stats.epoch << ",\"loss\":" << stats.loss
                         << ",\"train_ace\":" << stats.train_ace << "}\n";
      hooks.epoch_log->flush();
    }
    if (hooks.on_epoch && !hooks.on_epoch(stats)) break;
  }
  return result;
}

template TensorPtrT<float> sample_loss<float>(const ForwardTensorsT<float>&, int);
template TensorPtrT<double> sample_loss<double>(const ForwardTensorsT<double>&, int);

}  // namespace dfn
