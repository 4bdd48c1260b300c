#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dymixop/tensor.hpp"

namespace dymixop {

/// Snapshots stored as (trajectory, time, channel, grid...). A `map` dataset
/// holds exactly two frames per sample, input then target, and is used for
/// steady problems where the operator maps a coefficient field to a solution.
template <typename T>
struct TrajectoryDataset {
  std::string pde;
  bool is_map = false;
  Tensor<T> data;
  std::vector<std::string> channel_names;
  std::vector<std::string> split;  // "train" or "test", one label per trajectory
  std::map<std::string, std::string> spec;  // generator settings echoed into the file header

  std::size_t trajectories() const { return data.extent(0); }
  std::size_t times() const { return data.extent(1); }
  std::size_t channels() const { return data.extent(2); }
  Shape grid() const { return Shape(data.shape().begin() + 3, data.shape().end()); }
  std::size_t frame_size() const { return data.size() / (trajectories() * times()); }

  void validate() const {
    require(data.rank() == 4 || data.rank() == 5, ErrorKind::shape,
            "dataset: data must be (trajectory, time, channel, 1 or 2 grid axes), got " + shape_str(data.shape()));
    require(!is_map || times() == 2, ErrorKind::shape, "dataset: a map dataset needs exactly 2 frames per sample");
    require(split.empty() || split.size() == trajectories(), ErrorKind::value,
            "dataset: " + std::to_string(split.size()) + " split labels for " + std::to_string(trajectories()) +
                " trajectories");
    for (const auto& s : split) require(s == "train" || s == "test", ErrorKind::value, "dataset: bad split label '" + s + "'");
    for (T v : data.values()) require(std::isfinite(static_cast<double>(v)), ErrorKind::numeric, "dataset: non-finite value");
  }

  std::vector<std::size_t> indices(const std::string& label) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
      if (split[i] == label) out.push_back(i);
    return out;
  }
};

/// Window/target pairs: inputs (pair, d_u (k+1), grid...), targets (pair, d_u, grid...).
template <typename T>
struct PairSet {
  Tensor<T> inputs;
  Tensor<T> targets;

  std::size_t size() const { return inputs.empty() ? 0 : inputs.extent(0); }
};

/// Number of sliding windows of history k over a trajectory of `length` frames.
inline std::size_t pair_count(std::size_t length, std::size_t k) {
  if (length <= k + 1) {
    fail(ErrorKind::value, "dataset: trajectory of " + std::to_string(length) + " frames is too short for history k=" +
                               std::to_string(k) + " (needs > " + std::to_string(k + 1) + ")");
  }
  return length - k - 1;
}

/// Sliding windows [u_{i-k}, ..., u_i] -> u_{i+1}, frames packed oldest first
/// along the channel axis. Map datasets yield one pair per sample and ignore k.
template <typename T>
PairSet<T> build_pairs(const TrajectoryDataset<T>& ds, std::size_t k, const std::vector<std::size_t>& trajectories) {
  require(!trajectories.empty(), ErrorKind::value, "dataset: no trajectories selected");
  const std::size_t c = ds.channels(), frame = ds.frame_size(), window = ds.is_map ? 1 : k + 1;
  const std::size_t per_traj = ds.is_map ? 1 : pair_count(ds.times(), k);
  const std::size_t total = per_traj * trajectories.size();
  Shape in_shape{total, c * window}, out_shape{total, c};
  for (auto n : ds.grid()) {
    in_shape.push_back(n);
    out_shape.push_back(n);
  }
  PairSet<T> pairs{Tensor<T>(in_shape), Tensor<T>(out_shape)};
  std::size_t p = 0;
  for (std::size_t traj : trajectories) {
    require(traj < ds.trajectories(), ErrorKind::value, "dataset: trajectory index out of range");
    const T* base = ds.data.data() + traj * ds.times() * frame;
    for (std::size_t i = 0; i < per_traj; ++i, ++p) {
      const std::size_t first = ds.is_map ? 0 : i;
      std::copy(base + first * frame, base + (first + window) * frame, pairs.inputs.data() + p * window * frame);
      const std::size_t target = ds.is_map ? 1 : i + k + 1;
      std::copy(base + target * frame, base + (target + 1) * frame, pairs.targets.data() + p * frame);
    }
  }
  return pairs;
}

/// Seeded partition into train/test by whole trajectories.
inline std::vector<std::string> split_trajectories(std::size_t count, double test_fraction, std::uint64_t seed) {
  require(test_fraction >= 0.0 && test_fraction < 1.0, ErrorKind::config, "dataset: test fraction must lie in [0, 1)");
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(count)));
  require(count - n_test >= 1, ErrorKind::value, "dataset: split leaves no training trajectories");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::string> labels(count, "train");
  for (std::size_t i = 0; i < n_test; ++i) labels[order[i]] = "test";
  return labels;
}

/// Per-channel min-max statistics. Tensors laid out (batch, channel, ...)
/// whose channel count is a multiple of the statistic count use channel
/// c % count, so a packed history window shares one set of field statistics.
struct NormStats {
  std::vector<double> min;
  std::vector<double> max;

  std::size_t channels() const { return min.size(); }

  template <typename T>
  Tensor<T> normalize(const Tensor<T>& x) const {
    return apply(x, [](double v, double lo, double hi) { return (v - lo) / (hi - lo); });
  }

  template <typename T>
  Tensor<T> denormalize(const Tensor<T>& x) const {
    return apply(x, [](double v, double lo, double hi) { return v * (hi - lo) + lo; });
  }

 private:
  template <typename T, typename Fn>
  Tensor<T> apply(const Tensor<T>& x, Fn fn) const {
    require(x.rank() >= 2 && !min.empty() && x.extent(1) % min.size() == 0, ErrorKind::shape,
            "normalize: " + std::to_string(min.size()) + " channel statistics do not fit " + shape_str(x.shape()));
    Tensor<T> out = x;
    const std::size_t per = points_per_channel(x.shape()), ch = x.extent(1);
    for (std::size_t b = 0; b < x.extent(0); ++b)
      for (std::size_t c = 0; c < ch; ++c) {
        const double lo = min[c % min.size()], hi = max[c % min.size()];
        T* row = out.data() + (b * ch + c) * per;
        for (std::size_t p = 0; p < per; ++p) row[p] = static_cast<T>(fn(static_cast<double>(row[p]), lo, hi));
      }
    return out;
  }
};

/// Channel statistics of frames [frame_begin, frame_end) over the given trajectories.
template <typename T>
NormStats fit_norm(const TrajectoryDataset<T>& ds, const std::vector<std::size_t>& trajectories,
                   std::size_t frame_begin, std::size_t frame_end) {
  require(!trajectories.empty(), ErrorKind::value, "normalize: no trajectories to fit statistics on");
  const std::size_t c = ds.channels(), per = ds.frame_size() / c;
  NormStats stats{std::vector<double>(c, INFINITY), std::vector<double>(c, -INFINITY)};
  for (std::size_t traj : trajectories)
    for (std::size_t t = frame_begin; t < frame_end; ++t)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* row = ds.data.data() + ((traj * ds.times() + t) * c + ch) * per;
        for (std::size_t p = 0; p < per; ++p) {
          stats.min[ch] = std::min(stats.min[ch], static_cast<double>(row[p]));
          stats.max[ch] = std::max(stats.max[ch], static_cast<double>(row[p]));
        }
      }
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (!(stats.max[ch] > stats.min[ch])) {
      fail(ErrorKind::value, "normalize: channel " + std::to_string(ch) + " is constant over the training split");
    }
  }
  return stats;
}

/// Input and target statistics from the training split only.
template <typename T>
std::pair<NormStats, NormStats> fit_dataset_norm(const TrajectoryDataset<T>& ds) {
  auto train = ds.indices("train");
  if (ds.is_map) return {fit_norm(ds, train, 0, 1), fit_norm(ds, train, 1, 2)};
  auto s = fit_norm(ds, train, 0, ds.times());
  return {s, s};
}

}  // namespace dymixop
