#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "dymixop/config.hpp"
#include "dymixop/gradcheck.hpp"
#include "dymixop/io.hpp"
#include "dymixop/parallel.hpp"
#include "dymixop/solvers.hpp"

namespace dymixop::cli {

using json = nlohmann::json;

inline void require_file(const std::string& path, const std::string& what) {
  require(!path.empty(), ErrorKind::config, "no " + what + " given");
  require(std::filesystem::is_regular_file(path), ErrorKind::io, what + " '" + path + "' does not exist");
}

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9e", v);
  return buf;
}

/// Plain-text table with left-aligned columns separated by two spaces.
inline void print_table(std::ostream& out, const std::vector<std::string>& head,
                        const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    width[c] = head[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& r) {
    std::string s;
    for (std::size_t c = 0; c < r.size(); ++c) {
      s += r[c];
      if (c + 1 < r.size()) s += std::string(width[c] - r[c].size() + 2, ' ');
    }
    out << s << "\n";
  };
  line(head);
  for (const auto& r : rows) line(r);
}

// ---------------------------------------------------------------------------
// Normalized window/target pairs for a dataset split

template <typename T>
struct Prepared {
  TrajectoryDataset<T> data;
  NormStats input_norm;
  NormStats target_norm;
  PairSet<T> train;
  PairSet<T> test;
};

template <typename T>
PairSet<T> normalized_pairs(const TrajectoryDataset<T>& ds, std::size_t k, const std::vector<std::size_t>& trajs,
                            const NormStats& in, const NormStats& out) {
  if (trajs.empty()) return {};
  auto pairs = build_pairs(ds, k, trajs);
  return {in.normalize(pairs.inputs), out.normalize(pairs.targets)};
}

/// Loads a dataset and builds normalized pairs. Statistics come from the
/// training split unless given (as when evaluating a trained checkpoint).
template <typename T>
Prepared<T> prepare(const std::string& path, std::size_t k, const NormStats* in = nullptr, const NormStats* out = nullptr) {
  require_file(path, "dataset");
  Prepared<T> p{io::load_dataset<T>(path), {}, {}, {}, {}};
  if (in && out) {
    p.input_norm = *in;
    p.target_norm = *out;
  } else {
    std::tie(p.input_norm, p.target_norm) = fit_dataset_norm(p.data);
  }
  require(p.input_norm.channels() == p.data.channels(), ErrorKind::shape,
          "dataset has " + std::to_string(p.data.channels()) + " channels, statistics describe " +
              std::to_string(p.input_norm.channels()));
  p.train = normalized_pairs(p.data, k, p.data.indices("train"), p.input_norm, p.target_norm);
  p.test = normalized_pairs(p.data, k, p.data.indices("test"), p.input_norm, p.target_norm);
  return p;
}

inline std::string checkpoint_dtype(const std::string& path) {
  require_file(path, "checkpoint");
  return io::read_container(path, io::checkpoint_magic).header.at("dtype").get<std::string>();
}

// ---------------------------------------------------------------------------
// gen

inline TrajectoryDataset<double> cmd_gen(const std::string& spec_path, const std::string& output,
                                         const std::map<std::string, std::string>& overrides, std::ostream& out) {
  require_file(spec_path, "spec file");
  auto values = read_key_values(spec_path);
  for (const auto& [k, v] : overrides) values[k] = v;
  const TrajectorySpec spec = spec_from_values(values);
  auto ds = generate(spec);
  ds.spec = to_values(spec, spec_keys());
  io::save_dataset(output, ds);
  out << "wrote " << output << " pde=" << ds.pde << " shape=" << shape_str(ds.data.shape())
      << " train=" << ds.indices("train").size() << " test=" << ds.indices("test").size() << "\n";
  return ds;
}

// ---------------------------------------------------------------------------
// train

template <typename T>
std::vector<HistoryEntry> train_run(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  std::optional<io::Checkpoint<T>> resumed;
  if (!cfg.resume.empty()) {
    require_file(cfg.resume, "resume checkpoint");
    resumed = io::load_checkpoint<T>(cfg.resume);
  }
  const std::size_t k = resumed ? resumed->model.history : cfg.history;
  auto data = resumed ? prepare<T>(cfg.dataset, k, &resumed->input_norm, &resumed->target_norm) : prepare<T>(cfg.dataset, k);
  DyMixOpModel<T> model(resumed ? resumed->model : cfg.model(data.data.channels()));
  OptimizerState<T> state;
  if (resumed) io::restore(*resumed, model, state);

  std::ofstream log(cfg.log, resumed ? std::ios::app : std::ios::trunc);
  require(log.good(), ErrorKind::io, "cannot write log '" + cfg.log + "'");
  const auto history = train(model, data.train, data.test, cfg.train_options(), state, [&](const HistoryEntry& h) {
    const auto line = format_history(h);
    out << line << "\n" << std::flush;
    log << line << "\n" << std::flush;
  });
  io::save_checkpoint(cfg.checkpoint, io::make_checkpoint(model, state, to_values(cfg, run_keys()), data.input_norm,
                                                          data.target_norm));
  return history;
}

inline std::vector<HistoryEntry> cmd_train(const RunConfig& cfg, std::ostream& out) {
  if (cfg.precision == "f64") return train_run<double>(cfg, out);
  return train_run<float>(cfg, out);
}

// ---------------------------------------------------------------------------
// eval

struct EvalRow {
  std::string split;
  std::size_t pairs = 0;
  double objective = 0.0;
  double mse = 0.0;
  double relative_mse = 0.0;
};

template <typename T>
std::vector<EvalRow> eval_run(const RunConfig& cfg) {
  auto ckpt = io::load_checkpoint<T>(cfg.checkpoint);
  RunConfig trained;
  apply_values(trained, run_keys(), ckpt.run);
  const std::string dataset = cfg.dataset.empty() ? trained.dataset : cfg.dataset;
  auto data = prepare<T>(dataset, ckpt.model.history, &ckpt.input_norm, &ckpt.target_norm);
  DyMixOpModel<T> model(ckpt.model);
  OptimizerState<T> state;
  io::restore(ckpt, model, state);
  const NormStats* phys = cfg.physical_metric ? &data.target_norm : nullptr;
  const auto options = trained.train_options();
  std::vector<EvalRow> rows;
  for (auto [name, pairs] : {std::pair{"train", &data.train}, std::pair{"test", &data.test}}) {
    if (pairs->size() == 0) continue;
    rows.push_back({name, pairs->size(),
                    evaluate_objective(model, *pairs, options.weights, options.metric, trained.eval_batch),
                    evaluate(model, *pairs, Metric::mse, phys, cfg.eval_batch),
                    evaluate(model, *pairs, Metric::relative_mse, phys, cfg.eval_batch)});
  }
  return rows;
}

inline std::vector<EvalRow> cmd_eval(const RunConfig& cfg, bool as_json, std::ostream& out) {
  const auto rows = checkpoint_dtype(cfg.checkpoint) == "f64" ? eval_run<double>(cfg) : eval_run<float>(cfg);
  if (as_json) {
    json j = json::array();
    for (const auto& r : rows)
      j.push_back({{"split", r.split}, {"pairs", r.pairs}, {"objective", r.objective}, {"mse", r.mse},
                   {"relative_mse", r.relative_mse}});
    out << j.dump(2) << "\n";
  } else {
    std::vector<std::vector<std::string>> table;
    for (const auto& r : rows)
      table.push_back({r.split, std::to_string(r.pairs), sci(r.objective), sci(r.mse), sci(r.relative_mse)});
    print_table(out, {"split", "pairs", "objective", "mse", "relative_mse"}, table);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// predict

template <typename T>
Shape predict_run(const RunConfig& cfg) {
  auto ckpt = io::load_checkpoint<T>(cfg.checkpoint);
  RunConfig trained;
  apply_values(trained, run_keys(), ckpt.run);
  const std::string dataset = cfg.dataset.empty() ? trained.dataset : cfg.dataset;
  require_file(dataset, "dataset");
  const auto ds = io::load_dataset<T>(dataset);
  DyMixOpModel<T> model(ckpt.model);
  OptimizerState<T> state;
  io::restore(ckpt, model, state);

  auto candidates = ds.indices("test");
  if (candidates.empty()) candidates = ds.indices("train");
  require(cfg.trajectory < candidates.size(), ErrorKind::config,
          "trajectory " + std::to_string(cfg.trajectory) + " out of range (" + std::to_string(candidates.size()) +
              " available)");
  const std::size_t k = ckpt.model.history, c = ds.channels(), frame = ds.frame_size();
  require(!ds.is_map || cfg.steps <= 1, ErrorKind::config, "a map dataset supports at most one prediction step");
  require(cfg.start + k < ds.times(), ErrorKind::config,
          "window start " + std::to_string(cfg.start) + " with history " + std::to_string(k) + " exceeds " +
              std::to_string(ds.times()) + " frames");
  Shape window_shape{1, c * (k + 1)}, out_shape{cfg.steps, c};
  for (auto n : ds.grid()) {
    window_shape.push_back(n);
    out_shape.push_back(n);
  }
  const T* base = ds.data.data() + (candidates[cfg.trajectory] * ds.times() + cfg.start) * frame;
  Tensor<T> window(window_shape, std::vector<T>(base, base + (k + 1) * frame));
  window = ckpt.input_norm.normalize(window);
  model.config().check_resolution(ds.grid());

  Tensor<T> frames;
  if (cfg.steps > 0) {
    // (steps, 1, c, grid) -> (steps, c, grid); the batch axis has extent one.
    auto raw = rollout(model, window, cfg.steps);
    frames = ckpt.target_norm.denormalize(Tensor<T>(out_shape, std::vector<T>(raw.values().begin(), raw.values().end())));
  }
  json meta{{"pde", ds.pde},
            {"trajectory", candidates[cfg.trajectory]},
            {"start", cfg.start},
            {"history", k},
            {"channels", ds.channel_names}};
  io::save_prediction(cfg.output, out_shape, frames, meta);
  return out_shape;
}

inline Shape cmd_predict(const RunConfig& cfg, std::ostream& out) {
  const auto shape = checkpoint_dtype(cfg.checkpoint) == "f64" ? predict_run<double>(cfg) : predict_run<float>(cfg);
  out << "wrote " << cfg.output << " shape=" << shape_str(shape) << "\n";
  return shape;
}

// ---------------------------------------------------------------------------
// gradcheck

/// Always in double precision on random inputs of the configured size.
inline GradCheckReport cmd_gradcheck(const RunConfig& cfg, bool as_json, std::ostream& out) {
  cfg.validate();
  require(cfg.samples >= 1 && cfg.grid >= 1, ErrorKind::config, "gradcheck needs samples >= 1 and grid >= 1");
  DyMixOpModel<double> model(cfg.model(cfg.channels));
  const auto& m = model.config();
  Shape in_shape{cfg.samples, m.window_channels()}, out_shape{cfg.samples, m.channels};
  for (std::size_t a = 0; a < m.spatial_dims(); ++a) {
    in_shape.push_back(cfg.grid);
    out_shape.push_back(cfg.grid);
  }
  m.check_resolution(Shape(in_shape.begin() + 2, in_shape.end()));
  std::mt19937_64 rng(cfg.seed ^ 0x9c4eull);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor<double> window(in_shape), target(out_shape);
  for (auto& v : window.values()) v = u(rng);
  for (auto& v : target.values()) v = u(rng);
  const auto report = grad_check(model, window, target, cfg.tolerance, {cfg.alpha, cfg.beta}, cfg.metric);
  if (as_json) {
    json entries = json::array();
    for (const auto& e : report.entries)
      entries.push_back({{"id", e.id}, {"size", e.size}, {"max_rel_err", e.max_rel_err}, {"passed", e.passed}});
    out << json{{"tolerance", report.tolerance}, {"passed", report.passed()}, {"entries", entries}}.dump(2) << "\n";
  } else {
    std::vector<std::vector<std::string>> rows;
    for (const auto& e : report.entries)
      rows.push_back({e.id, std::to_string(e.size), sci(e.max_rel_err), e.passed ? "ok" : "FAIL"});
    print_table(out, {"parameter", "size", "max_rel_err", "status"}, rows);
    out << "worst=" << sci(report.worst()) << " tolerance=" << sci(report.tolerance)
        << " failures=" << report.failures().size() << "\n";
  }
  return report;
}

// ---------------------------------------------------------------------------
// ablate

struct AblationRow {
  std::string variant;
  std::size_t parameters = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_mse = 0.0;
  double seconds = 0.0;
};

/// Trains every variant from the same seed and budget on the same pairs.
template <typename T>
std::vector<AblationRow> run_ablation(const RunConfig& cfg, const Prepared<T>& data,
                                      const std::function<void(const std::string&, const HistoryEntry&)>& on_epoch = {}) {
  const auto variants = split_list(cfg.variants);
  require(!variants.empty(), ErrorKind::config, "no ablation variants given");
  require(data.test.size() > 0, ErrorKind::value, "ablation needs a non-empty test split");
  const NormStats* phys = cfg.physical_metric ? &data.target_norm : nullptr;
  std::vector<AblationRow> rows;
  for (const auto& name : variants) {
    RunConfig v = cfg;
    v.preset = name;
    const auto start = std::chrono::steady_clock::now();
    DyMixOpModel<T> model(v.model(data.data.channels()));
    OptimizerState<T> state;
    const auto options = v.train_options();
    train(model, data.train, data.test, options, state, [&](const HistoryEntry& h) {
      if (on_epoch) on_epoch(name, h);
    });
    AblationRow row{name, model.parameter_count(),
                    evaluate_objective(model, data.train, options.weights, options.metric, v.eval_batch),
                    evaluate_objective(model, data.test, options.weights, options.metric, v.eval_batch),
                    evaluate(model, data.test, Metric::mse, phys, v.eval_batch), 0.0};
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rows.push_back(row);
  }
  return rows;
}

inline std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, bool as_json, std::ostream& out) {
  cfg.validate();
  for (const auto& v : split_list(cfg.variants)) {
    ModelConfig probe;
    apply_preset(probe, v);
  }
  std::vector<AblationRow> rows;
  if (cfg.precision == "f64") rows = run_ablation(cfg, prepare<double>(cfg.dataset, cfg.history));
  else rows = run_ablation(cfg, prepare<float>(cfg.dataset, cfg.history));
  if (as_json) {
    json j = json::array();
    for (const auto& r : rows)
      j.push_back({{"variant", r.variant}, {"parameters", r.parameters}, {"train_loss", r.train_loss},
                   {"test_loss", r.test_loss}, {"test_mse", r.test_mse}, {"seconds", r.seconds}});
    out << j.dump(2) << "\n";
  } else {
    std::vector<std::vector<std::string>> table;
    for (const auto& r : rows)
      table.push_back({r.variant, std::to_string(r.parameters), sci(r.train_loss), sci(r.test_loss), sci(r.test_mse)});
    print_table(out, {"variant", "parameters", "train_loss", "test_loss", "test_mse"}, table);
  }
  return rows;
}

}  // namespace dymixop::cli
