#pragma once

#include <cmath>
#include <cstdio>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dymixop/dataset.hpp"
#include "dymixop/model.hpp"

namespace dymixop {

enum class Metric { mse, relative_mse };

inline std::string to_string(Metric m) { return m == Metric::mse ? "mse" : "relative_mse"; }

struct LossWeights {
  double alpha = 1.0;  // one-step prediction term
  double beta = 0.1;   // consistency term

  void validate() const {
    require(alpha >= 0.0 && beta >= 0.0 && alpha + beta > 0.0, ErrorKind::config,
            "loss weights must be non-negative with a positive sum");
  }
};

template <typename T>
ad::Var<T> metric_loss(const ad::Var<T>& pred, const ad::Var<T>& target, Metric metric) {
  return metric == Metric::mse ? ad::mse(pred, target) : ad::relative_mse(pred, target);
}

/// Channels of the most recent frame in a packed window.
template <typename T>
Tensor<T> last_frame(const Tensor<T>& window, std::size_t channels) {
  return slice_channels(window, window.extent(1) - channels, channels);
}

/// alpha * metric(prediction, target) + beta * metric(consistency, last input frame).
template <typename T>
ad::Var<T> compute_loss(const DyMixOpModel<T>& model, const Tensor<T>& window, const Tensor<T>& target,
                        const LossWeights& w, Metric metric) {
  w.validate();
  auto x = ad::constant(window);
  ad::Var<T> loss;
  if (w.alpha > 0.0) {
    loss = ad::scale(metric_loss(model_forward(model, x), ad::constant(target), metric), static_cast<T>(w.alpha));
  }
  if (w.beta > 0.0) {
    auto recon = ad::constant(last_frame(window, model.config().channels));
    auto term = ad::scale(metric_loss(consistency_forward(model, x), recon, metric), static_cast<T>(w.beta));
    loss = loss ? ad::add(loss, term) : term;
  }
  return loss;
}

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  double gamma = 0.97;  // step decay factor
  std::size_t step_size = 6;

  void validate() const {
    require(lr > 0.0, ErrorKind::config, "optimizer: lr must be positive");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorKind::config,
            "optimizer: betas must lie in [0, 1)");
    require(eps > 0.0 && weight_decay >= 0.0, ErrorKind::config, "optimizer: eps must be positive, weight_decay >= 0");
    require(gamma > 0.0 && step_size >= 1, ErrorKind::config, "optimizer: gamma must be positive and step_size >= 1");
  }

  /// Step decay: lr0 * gamma^floor(epoch / step_size).
  double lr_at(std::size_t epoch) const {
    return lr * std::pow(gamma, static_cast<double>(epoch / step_size));
  }
};

/// AdamW moments keyed by parameter id, plus counters needed to resume.
template <typename T>
struct OptimizerState {
  std::map<std::string, Tensor<T>> m;
  std::map<std::string, Tensor<T>> v;
  std::uint64_t step = 0;
  std::size_t epoch = 0;  // completed epochs
  double lr = 1e-3;       // rate in effect for the most recent step
};

/// One AdamW update with decoupled weight decay. Every gradient is checked
/// before any parameter changes.
template <typename T>
void optimizer_step(OptimizerState<T>& state, std::vector<ad::Parameter<T>>& params, const OptimizerConfig& cfg,
                    double lr) {
  for (auto& p : params) {
    if (!p.trainable || p.node->grad.empty()) continue;
    for (T g : p.node->grad.values()) {
      if (!std::isfinite(static_cast<double>(g))) fail(ErrorKind::numeric, "optimizer: non-finite gradient in parameter '" + p.id + "'");
    }
  }
  state.step += 1;
  state.lr = lr;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& p : params) {
    if (!p.trainable) continue;
    const Tensor<T> grad = p.grad();
    auto& m = state.m.try_emplace(p.id, Tensor<T>::zeros(p.value().shape(), p.value().is_complex())).first->second;
    auto& v = state.v.try_emplace(p.id, Tensor<T>::zeros(p.value().shape(), p.value().is_complex())).first->second;
    require(m.same_layout(p.value()), ErrorKind::shape, "optimizer: moment shape mismatch for '" + p.id + "'");
    Tensor<T>& x = p.value();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double g = grad[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      double xi = static_cast<double>(x[i]) * (1.0 - lr * cfg.weight_decay);
      xi -= lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps);
      x[i] = static_cast<T>(xi);
    }
  }
}

struct TrainOptions {
  std::size_t epochs = 100;
  std::size_t batch = 16;
  std::size_t eval_batch = 64;
  std::uint64_t seed = 0;
  LossWeights weights;
  Metric metric = Metric::mse;
  OptimizerConfig optimizer;
};

struct HistoryEntry {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double lr = 0.0;
};

inline std::string format_history(const HistoryEntry& h) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "epoch=%zu train_loss=%.9e test_loss=%.9e lr=%.9e", h.epoch, h.train_loss,
                h.test_loss, h.lr);
  return buf;
}

/// Rows `idx` of a (batch, ...) tensor.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& idx) {
  const std::size_t row = x.size() / x.extent(0);
  Shape shape = x.shape();
  shape[0] = idx.size();
  Tensor<T> out(shape);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy(x.data() + idx[i] * row, x.data() + (idx[i] + 1) * row, out.data() + i * row);
  }
  return out;
}

/// Epoch-local shuffle derived from (seed, epoch) so resumed runs replay it.
inline std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::size_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

/// Batched reduction of a per-batch loss into a per-sample average.
template <typename T, typename Fn>
double batched_average(const PairSet<T>& pairs, std::size_t batch, Fn batch_loss) {
  require(pairs.size() > 0, ErrorKind::value, "evaluate: empty dataset");
  require(batch >= 1, ErrorKind::config, "evaluate: batch must be >= 1");
  double total = 0.0;
  for (std::size_t start = 0; start < pairs.size(); start += batch) {
    std::vector<std::size_t> idx(std::min(batch, pairs.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    total += batch_loss(gather_rows(pairs.inputs, idx), gather_rows(pairs.targets, idx)) * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(pairs.size());
}

/// The training objective averaged over samples.
template <typename T>
double evaluate_objective(const DyMixOpModel<T>& model, const PairSet<T>& pairs, const LossWeights& w, Metric metric,
                          std::size_t batch = 64) {
  return batched_average(pairs, batch, [&](const Tensor<T>& x, const Tensor<T>& y) {
    return static_cast<double>(compute_loss(model, x, y, w, metric)->value[0]);
  });
}

/// One-step prediction error. With `target_stats` the metric is taken on
/// denormalized fields.
template <typename T>
double evaluate(const DyMixOpModel<T>& model, const PairSet<T>& pairs, Metric metric,
                const NormStats* target_stats = nullptr, std::size_t batch = 64) {
  return batched_average(pairs, batch, [&](const Tensor<T>& x, const Tensor<T>& y) {
    Tensor<T> pred = predict(model, x), truth = y;
    if (target_stats) {
      pred = target_stats->denormalize(pred);
      truth = target_stats->denormalize(truth);
    }
    return static_cast<double>(metric_loss(ad::constant(pred), ad::constant(truth), metric)->value[0]);
  });
}

/// Runs `options.epochs` further epochs starting at `state.epoch`. Losses in
/// the history are the full objective evaluated after each epoch.
template <typename T>
std::vector<HistoryEntry> train(DyMixOpModel<T>& model, const PairSet<T>& train_set, const PairSet<T>& test_set,
                                const TrainOptions& options, OptimizerState<T>& state,
                                const std::function<void(const HistoryEntry&)>& on_epoch = {}) {
  options.optimizer.validate();
  options.weights.validate();
  require(options.batch >= 1, ErrorKind::config, "train: batch must be >= 1");
  std::vector<HistoryEntry> history;
  if (options.epochs == 0) return history;
  require(train_set.size() > 0, ErrorKind::value, "train: empty training set");
  for (std::size_t e = 0; e < options.epochs; ++e) {
    const std::size_t epoch = state.epoch;
    const double lr = options.optimizer.lr_at(epoch);
    auto order = epoch_order(train_set.size(), options.seed, epoch);
    for (std::size_t start = 0; start < order.size(); start += options.batch) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(std::min(start + options.batch, order.size())));
      model.zero_grad();
      auto loss = compute_loss(model, gather_rows(train_set.inputs, idx), gather_rows(train_set.targets, idx),
                               options.weights, options.metric);
      ad::backward(loss);
      optimizer_step(state, model.parameters(), options.optimizer, lr);
    }
    state.epoch += 1;
    HistoryEntry h{state.epoch, evaluate_objective(model, train_set, options.weights, options.metric, options.eval_batch),
                   test_set.size() ? evaluate_objective(model, test_set, options.weights, options.metric, options.eval_batch)
                                   : std::nan(""),
                   lr};
    history.push_back(h);
    if (on_epoch) on_epoch(h);
  }
  model.zero_grad();
  return history;
}

/// Autoregressive prediction: each output replaces the oldest frame of the
/// window. Returns (steps, batch, d_u, grid...); empty when steps == 0.
template <typename T>
Tensor<T> rollout(const DyMixOpModel<T>& model, const Tensor<T>& window, std::size_t steps) {
  const std::size_t du = model.config().channels;
  require(window.rank() >= 3 && window.extent(1) == model.config().window_channels(), ErrorKind::shape,
          "rollout: window " + shape_str(window.shape()) + " does not match a model expecting " +
              std::to_string(model.config().window_channels()) + " channels");
  if (steps == 0) return Tensor<T>();
  Shape out_shape{steps, window.extent(0), du};
  out_shape.insert(out_shape.end(), window.shape().begin() + 2, window.shape().end());
  Tensor<T> out(out_shape);
  Tensor<T> current = window;
  for (std::size_t s = 0; s < steps; ++s) {
    Tensor<T> next = predict(model, current);
    std::copy(next.data(), next.data() + next.size(), out.data() + s * next.size());
    if (model.config().history == 0) {
      current = next;
    } else {
      current = concat_channels({slice_channels(current, du, current.extent(1) - du), next});
    }
  }
  return out;
}

}  // namespace dymixop
