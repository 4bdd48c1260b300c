#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dymixop/model.hpp"
#include "dymixop/solvers.hpp"
#include "dymixop/training.hpp"

namespace dymixop {

namespace parse {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n"), e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    fail(ErrorKind::config, "'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

inline std::size_t to_size(const std::string& key, const std::string& v) { return static_cast<std::size_t>(to_u64(key, v)); }

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::config, "'" + key + "' expects a number, got '" + v + "'");
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(ErrorKind::config, "'" + key + "' expects true or false, got '" + v + "'");
}

inline std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_size(key, trim(item)));
  require(!out.empty(), ErrorKind::config, "'" + key + "' expects a comma-separated list");
  return out;
}

inline std::string number(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

}  // namespace parse

/// A named setting with text conversions in both directions.
template <typename Cfg>
struct Key {
  std::string name;
  std::string help;
  std::function<std::string(const Cfg&)> get;
  std::function<void(Cfg&, const std::string&)> set;
};

template <typename Cfg>
const Key<Cfg>& find_key(const std::vector<Key<Cfg>>& keys, const std::string& name) {
  for (const auto& k : keys)
    if (k.name == name) return k;
  fail(ErrorKind::config, "unknown key '" + name + "'");
}

/// `key = value` lines; `#` starts a comment. Unknown keys are rejected.
inline std::map<std::string, std::string> read_key_values(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot open config file '" + path + "'");
  std::map<std::string, std::string> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = parse::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::config, path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = parse::trim(line.substr(0, eq)), value = parse::trim(line.substr(eq + 1));
    require(!key.empty(), ErrorKind::config, path + ":" + std::to_string(lineno) + ": empty key");
    out[key] = value;
  }
  return out;
}

template <typename Cfg>
void apply_values(Cfg& cfg, const std::vector<Key<Cfg>>& keys, const std::map<std::string, std::string>& values) {
  for (const auto& [k, v] : values) find_key(keys, k).set(cfg, v);
}

template <typename Cfg>
std::map<std::string, std::string> to_values(const Cfg& cfg, const std::vector<Key<Cfg>>& keys) {
  std::map<std::string, std::string> out;
  for (const auto& k : keys) out[k.name] = k.get(cfg);
  return out;
}

// ---------------------------------------------------------------------------

inline std::string to_string(Activation a) { return a == Activation::gelu ? "gelu" : "tanh"; }

inline std::string to_string(MixKind m) {
  return m == MixKind::mixed ? "mixed" : m == MixKind::local ? "local" : "global";
}

inline std::string to_string(StackMode s) {
  return s == StackMode::hybrid ? "hybrid" : s == StackMode::parallel ? "parallel" : "hierarchical";
}

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"full",           "local-only",    "global-only",      "linear-only",
                                              "nonlinear-only", "parallel-only", "hierarchical-only"};
  return names;
}

/// Applies an ablation preset on top of a model configuration.
inline void apply_preset(ModelConfig& m, const std::string& preset) {
  if (preset == "full") return;
  if (preset == "local-only") m.nonlinear_kind = MixKind::local;
  else if (preset == "global-only") m.nonlinear_kind = MixKind::global;
  else if (preset == "linear-only") m.n_nonlinear = 0;
  else if (preset == "nonlinear-only") m.n_linear = 0;
  else if (preset == "parallel-only") m.stack = StackMode::parallel;
  else if (preset == "hierarchical-only") m.stack = StackMode::hierarchical;
  else fail(ErrorKind::config, "unknown preset '" + preset + "'");
}

struct RunConfig {
  // model
  std::size_t width = 32;
  std::size_t depth = 2;
  std::size_t n_linear = 1;
  std::size_t n_nonlinear = 1;
  std::size_t history = 0;
  std::vector<std::size_t> modes{16};
  Activation activation = Activation::gelu;
  bool final_activation = false;
  bool spectral_diag = false;
  MixKind mixing = MixKind::mixed;
  StackMode stack = StackMode::hybrid;
  std::string preset = "full";
  // training
  std::size_t epochs = 100;
  std::size_t batch = 16;
  std::size_t eval_batch = 64;
  double lr = 1e-3;
  double alpha = 1.0;
  double beta = 0.1;
  double gamma = 0.97;
  std::size_t step_size = 6;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Metric metric = Metric::mse;
  bool physical_metric = false;
  std::uint64_t seed = 0;
  std::string precision = "f32";
  std::size_t threads = 0;  // 0 keeps the runtime default
  // files
  std::string dataset;
  std::string checkpoint = "dymixop.ckpt";
  std::string log = "train.log";
  std::string resume;
  std::string output = "prediction.dmxd";
  // predict
  std::size_t steps = 10;
  std::size_t trajectory = 0;
  std::size_t start = 0;
  // gradcheck
  std::size_t channels = 1;
  std::size_t grid = 32;
  std::size_t samples = 2;
  double tolerance = 1e-4;
  // ablate
  std::string variants = "full,local-only,global-only,linear-only,nonlinear-only,parallel-only,hierarchical-only";

  ModelConfig model(std::size_t fields) const {
    ModelConfig m;
    m.channels = fields;
    m.history = history;
    m.width = width;
    m.depth = depth;
    m.n_linear = n_linear;
    m.n_nonlinear = n_nonlinear;
    m.modes = modes;
    m.activation = activation;
    m.final_activation = final_activation;
    m.spectral_diag = spectral_diag;
    m.nonlinear_kind = mixing;
    m.stack = stack;
    m.seed = seed;
    apply_preset(m, preset);
    m.validate();
    return m;
  }

  TrainOptions train_options() const {
    TrainOptions t;
    t.epochs = epochs;
    t.batch = batch;
    t.eval_batch = eval_batch;
    t.seed = seed;
    t.weights = {alpha, beta};
    t.metric = metric;
    t.optimizer = {lr, beta1, beta2, eps, weight_decay, gamma, step_size};
    return t;
  }

  void validate() const {
    require(precision == "f32" || precision == "f64", ErrorKind::config, "precision must be f32 or f64");
    require(batch >= 1 && eval_batch >= 1, ErrorKind::config, "batch sizes must be >= 1");
    train_options().optimizer.validate();
    LossWeights{alpha, beta}.validate();
    ModelConfig probe = model(1);
    (void)probe;
  }
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = parse::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline const std::vector<Key<RunConfig>>& run_keys() {
  using C = RunConfig;
  using namespace parse;
#define DMX_SIZE(field, help) \
  Key<C>{#field, help, [](const C& c) { return std::to_string(c.field); }, [](C& c, const std::string& v) { c.field = to_size(#field, v); }}
#define DMX_DOUBLE(field, help) \
  Key<C>{#field, help, [](const C& c) { return number(c.field); }, [](C& c, const std::string& v) { c.field = to_double(#field, v); }}
#define DMX_BOOL(field, help)                                                      \
  Key<C>{#field, help, [](const C& c) { return std::string(c.field ? "true" : "false"); }, \
         [](C& c, const std::string& v) { c.field = to_bool(#field, v); }}
#define DMX_TEXT(field, help) \
  Key<C>{#field, help, [](const C& c) { return c.field; }, [](C& c, const std::string& v) { c.field = v; }}
  static const std::vector<Key<C>> keys{
      DMX_SIZE(width, "latent channel width d_m"),
      DMX_SIZE(depth, "number of LGM layers"),
      DMX_SIZE(n_linear, "linear LGM transforms per layer"),
      DMX_SIZE(n_nonlinear, "nonlinear LGM transforms per layer"),
      DMX_SIZE(history, "extra past frames k in the input window"),
      Key<C>{"modes", "retained Fourier modes per axis, comma separated", [](const C& c) { return join(c.modes); },
             [](C& c, const std::string& v) { c.modes = to_sizes("modes", v); }},
      Key<C>{"activation", "gelu or tanh", [](const C& c) { return to_string(c.activation); },
             [](C& c, const std::string& v) {
               if (v == "gelu") c.activation = Activation::gelu;
               else if (v == "tanh") c.activation = Activation::tanh;
               else fail(ErrorKind::config, "'activation' expects gelu or tanh, got '" + v + "'");
             }},
      DMX_BOOL(final_activation, "apply the activation to the evolved latent state"),
      DMX_BOOL(spectral_diag, "per-channel spectral weights instead of full channel mixing"),
      Key<C>{"mixing", "nonlinear transform factors: mixed, local or global", [](const C& c) { return to_string(c.mixing); },
             [](C& c, const std::string& v) {
               if (v == "mixed") c.mixing = MixKind::mixed;
               else if (v == "local") c.mixing = MixKind::local;
               else if (v == "global") c.mixing = MixKind::global;
               else fail(ErrorKind::config, "'mixing' expects mixed, local or global, got '" + v + "'");
             }},
      Key<C>{"stack", "layer stacking: hybrid, parallel or hierarchical", [](const C& c) { return to_string(c.stack); },
             [](C& c, const std::string& v) {
               if (v == "hybrid") c.stack = StackMode::hybrid;
               else if (v == "parallel") c.stack = StackMode::parallel;
               else if (v == "hierarchical") c.stack = StackMode::hierarchical;
               else fail(ErrorKind::config, "'stack' expects hybrid, parallel or hierarchical, got '" + v + "'");
             }},
      Key<C>{"preset", "ablation preset applied on top of the model keys", [](const C& c) { return c.preset; },
             [](C& c, const std::string& v) {
               ModelConfig probe;
               apply_preset(probe, v);
               c.preset = v;
             }},
      DMX_SIZE(epochs, "training epochs (added to a resumed run)"),
      DMX_SIZE(batch, "training batch size"),
      DMX_SIZE(eval_batch, "evaluation batch size"),
      DMX_DOUBLE(lr, "initial learning rate"),
      DMX_DOUBLE(alpha, "weight of the one-step prediction loss"),
      DMX_DOUBLE(beta, "weight of the consistency loss"),
      DMX_DOUBLE(gamma, "learning-rate decay factor"),
      DMX_SIZE(step_size, "epochs between learning-rate decays"),
      DMX_DOUBLE(weight_decay, "decoupled weight decay"),
      DMX_DOUBLE(beta1, "first-moment decay"),
      DMX_DOUBLE(beta2, "second-moment decay"),
      DMX_DOUBLE(eps, "optimizer epsilon"),
      Key<C>{"metric", "mse or relative_mse", [](const C& c) { return to_string(c.metric); },
             [](C& c, const std::string& v) {
               if (v == "mse") c.metric = Metric::mse;
               else if (v == "relative_mse") c.metric = Metric::relative_mse;
               else fail(ErrorKind::config, "'metric' expects mse or relative_mse, got '" + v + "'");
             }},
      DMX_BOOL(physical_metric, "report evaluation metrics on denormalized fields"),
      Key<C>{"seed", "random seed", [](const C& c) { return std::to_string(c.seed); },
             [](C& c, const std::string& v) { c.seed = to_u64("seed", v); }},
      Key<C>{"precision", "f32 or f64", [](const C& c) { return c.precision; },
             [](C& c, const std::string& v) {
               require(v == "f32" || v == "f64", ErrorKind::config, "'precision' expects f32 or f64, got '" + v + "'");
               c.precision = v;
             }},
      DMX_SIZE(threads, "worker threads (0 keeps the default)"),
      DMX_TEXT(dataset, "dataset file"),
      DMX_TEXT(checkpoint, "checkpoint file"),
      DMX_TEXT(log, "training log file"),
      DMX_TEXT(resume, "checkpoint to continue training from"),
      DMX_TEXT(output, "prediction output file"),
      DMX_SIZE(steps, "rollout steps"),
      DMX_SIZE(trajectory, "index among the test trajectories to roll out"),
      DMX_SIZE(start, "first frame of the rollout window"),
      DMX_SIZE(channels, "field channels for gradient checks without a dataset"),
      DMX_SIZE(grid, "grid points per axis for gradient checks"),
      DMX_SIZE(samples, "batch size for gradient checks"),
      DMX_DOUBLE(tolerance, "gradient check tolerance"),
      DMX_TEXT(variants, "comma-separated ablation presets"),
  };
#undef DMX_SIZE
#undef DMX_DOUBLE
#undef DMX_BOOL
#undef DMX_TEXT
  return keys;
}

inline const std::vector<Key<TrajectorySpec>>& spec_keys() {
  using S = TrajectorySpec;
  using namespace parse;
#define DMX_SIZE(field) \
  Key<S>{#field, "", [](const S& s) { return std::to_string(s.field); }, [](S& s, const std::string& v) { s.field = to_size(#field, v); }}
#define DMX_DOUBLE(field) \
  Key<S>{#field, "", [](const S& s) { return number(s.field); }, [](S& s, const std::string& v) { s.field = to_double(#field, v); }}
  static const std::vector<Key<S>> keys{
      Key<S>{"pde", "ks1d, burgers1d or darcy2d", [](const S& s) { return to_string(s.pde); },
             [](S& s, const std::string& v) { s.pde = parse_pde(v); }},
      DMX_SIZE(n),
      DMX_SIZE(refine),
      DMX_DOUBLE(length),
      DMX_DOUBLE(nu),
      DMX_DOUBLE(dt),
      DMX_SIZE(stride),
      DMX_SIZE(snapshots),
      DMX_DOUBLE(burn_in),
      DMX_DOUBLE(amplitude),
      DMX_SIZE(init_modes),
      DMX_SIZE(trajectories),
      DMX_DOUBLE(test_fraction),
      Key<S>{"seed", "", [](const S& s) { return std::to_string(s.seed); }, [](S& s, const std::string& v) { s.seed = to_u64("seed", v); }},
      DMX_DOUBLE(a_high),
      DMX_DOUBLE(a_low),
      DMX_DOUBLE(grf_tau),
      DMX_DOUBLE(grf_alpha),
      DMX_DOUBLE(cg_tol),
      DMX_SIZE(cg_max_iter),
  };
#undef DMX_SIZE
#undef DMX_DOUBLE
  return keys;
}

/// Spec from key-value pairs; `pde` picks the defaults the other keys override.
inline TrajectorySpec spec_from_values(std::map<std::string, std::string> values) {
  TrajectorySpec spec;
  if (auto it = values.find("pde"); it != values.end()) {
    spec = TrajectorySpec::defaults(parse_pde(it->second));
    values.erase(it);
  }
  apply_values(spec, spec_keys(), values);
  spec.validate();
  return spec;
}

}  // namespace dymixop
