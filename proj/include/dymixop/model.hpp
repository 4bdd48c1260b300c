#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dymixop/autodiff.hpp"
#include "dymixop/fft.hpp"
#include "dymixop/spectral.hpp"

namespace dymixop {

using ad::Activation;

/// Which factors an LGM transform keeps. `mixed` is local (x) global; the
/// ablations replace it with a single factor.
enum class MixKind { local, global, mixed };

/// How layer outputs are combined into the evolved latent state.
///   hybrid:       c0 + sum_l dt_l F_l(c_{l-1}),  c_l = act(c_{l-1} + F_l(c_{l-1}))
///   parallel:     c0 + sum_l dt_l F_l(c0)
///   hierarchical: c_{L}, the residual chain alone
enum class StackMode { hybrid, parallel, hierarchical };

struct ModelConfig {
  std::size_t channels = 1;  // d_u, fields per frame
  std::size_t history = 0;   // k, extra past frames in the input window
  std::size_t width = 16;    // d_m; the lifted width d_v is 2 d_m
  std::size_t depth = 2;     // L_d
  std::size_t n_linear = 1;
  std::size_t n_nonlinear = 1;
  std::vector<std::size_t> modes{12};
  Activation activation = Activation::gelu;
  bool final_activation = false;
  bool spectral_diag = false;
  MixKind nonlinear_kind = MixKind::mixed;
  StackMode stack = StackMode::hybrid;
  std::uint64_t seed = 0;

  std::size_t window_channels() const { return channels * (history + 1); }
  std::size_t lifted_width() const { return 2 * width; }
  std::size_t spatial_dims() const { return modes.size(); }

  void validate() const {
    require(channels >= 1, ErrorKind::config, "model: channels must be >= 1");
    require(width >= 1, ErrorKind::config, "model: width must be >= 1");
    require(depth >= 1, ErrorKind::config, "model: depth must be >= 1");
    require(modes.size() == 1 || modes.size() == 2, ErrorKind::config, "model: modes must cover 1 or 2 spatial axes");
    for (auto m : modes) require(m >= 1, ErrorKind::config, "model: retained modes must be >= 1");
    require(n_linear + n_nonlinear >= 1, ErrorKind::config, "model: a layer needs at least one LGM transform");
  }

  /// Grids must be powers of two with at least two points per retained mode.
  void check_resolution(const Shape& spatial) const {
    require(spatial.size() == modes.size(), ErrorKind::shape,
            "model: expected " + std::to_string(modes.size()) + " spatial axes, got grid " + shape_str(spatial));
    for (std::size_t a = 0; a < spatial.size(); ++a) {
      fft::require_power_of_two(spatial[a], "model grid");
      if (spatial[a] < 2 * modes[a]) {
        fail(ErrorKind::shape, "model: grid extent " + std::to_string(spatial[a]) + " cannot hold " +
                                   std::to_string(modes[a]) + " retained modes (needs >= " +
                                   std::to_string(2 * modes[a]) + ")");
      }
    }
  }
};

template <typename T>
struct ChannelMap {
  ad::Var<T> weight;  // (out, in)
  ad::Var<T> bias;    // (out)

  ad::Var<T> operator()(const ad::Var<T>& x) const { return ad::channel_map(x, weight, bias); }
};

/// local(c) (x) global(c); a missing factor stands for the constant-one field.
template <typename T>
struct LgmTransform {
  MixKind kind = MixKind::local;
  std::optional<ChannelMap<T>> local;
  ad::Var<T> global;  // complex spectral coefficients, null when absent
};

template <typename T>
struct LgmLayer {
  std::vector<LgmTransform<T>> linear;
  std::vector<LgmTransform<T>> nonlinear;
  ChannelMap<T> mix;  // applied to the sum of the nonlinear transforms
  ad::Var<T> dt;      // learnable evolution step
};

template <typename T>
class DyMixOpModel {
 public:
  explicit DyMixOpModel(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(config_.seed);
    const std::size_t dv = config_.lifted_width(), dm = config_.width;
    lift_ = make_map("lift", config_.window_channels(), dv, rng);
    project_ = make_map("project", dv, dm, rng);
    for (std::size_t l = 0; l < config_.depth; ++l) {
      const std::string prefix = "layers." + std::to_string(l);
      LgmLayer<T> layer;
      for (std::size_t a = 0; a < config_.n_linear; ++a) {
        layer.linear.push_back(make_transform(prefix + ".linear." + std::to_string(a), MixKind::local, rng));
      }
      for (std::size_t b = 0; b < config_.n_nonlinear; ++b) {
        layer.nonlinear.push_back(make_transform(prefix + ".nonlinear." + std::to_string(b), config_.nonlinear_kind, rng));
      }
      layer.mix = make_map(prefix + ".mix", dm, dm, rng);
      layer.dt = add_parameter(prefix + ".dt", Tensor<T>::scalar(static_cast<T>(1.0 / static_cast<double>(config_.depth))));
      layers_.push_back(std::move(layer));
    }
    unproject_ = make_map("unproject", dm, dv, rng);
    unlift_ = make_map("unlift", dv, config_.channels, rng);
  }

  DyMixOpModel(const DyMixOpModel&) = delete;
  DyMixOpModel& operator=(const DyMixOpModel&) = delete;
  DyMixOpModel(DyMixOpModel&&) noexcept = default;
  DyMixOpModel& operator=(DyMixOpModel&&) noexcept = default;

  const ModelConfig& config() const { return config_; }
  std::vector<ad::Parameter<T>>& parameters() { return params_; }
  const std::vector<ad::Parameter<T>>& parameters() const { return params_; }

  ad::Parameter<T>& parameter(const std::string& id) {
    auto it = index_.find(id);
    if (it == index_.end()) fail(ErrorKind::value, "model: no parameter named '" + id + "'");
    return params_[it->second];
  }

  bool has_parameter(const std::string& id) const { return index_.count(id) > 0; }

  /// Real scalars held by all parameters (complex entries count twice).
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value().size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  const ChannelMap<T>& lift() const { return lift_; }
  const ChannelMap<T>& project() const { return project_; }
  const ChannelMap<T>& unproject() const { return unproject_; }
  const ChannelMap<T>& unlift() const { return unlift_; }
  const std::vector<LgmLayer<T>>& layers() const { return layers_; }

 private:
  ad::Var<T> add_parameter(const std::string& id, Tensor<T> value) {
    require(index_.count(id) == 0, ErrorKind::value, "model: duplicate parameter id '" + id + "'");
    auto node = ad::variable(std::move(value));
    index_[id] = params_.size();
    params_.push_back({id, node, true});
    return node;
  }

  template <typename Rng>
  ChannelMap<T> make_map(const std::string& id, std::size_t in, std::size_t out, Rng& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<T> w(Shape{out, in}), b(Shape{out});
    for (auto& v : w.values()) v = static_cast<T>(dist(rng));
    for (auto& v : b.values()) v = static_cast<T>(dist(rng));
    return {add_parameter(id + ".weight", std::move(w)), add_parameter(id + ".bias", std::move(b))};
  }

  template <typename Rng>
  LgmTransform<T> make_transform(const std::string& id, MixKind kind, Rng& rng) {
    LgmTransform<T> t;
    t.kind = kind;
    const std::size_t dm = config_.width;
    if (kind != MixKind::global) t.local = make_map(id + ".local", dm, dm, rng);
    if (kind != MixKind::local) {
      auto w = SpectralWeights<T>::random(config_.modes, dm, dm, config_.spectral_diag, rng);
      t.global = add_parameter(id + ".global", std::move(w.values));
    }
    return t;
  }

  ModelConfig config_;
  std::vector<ad::Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
  ChannelMap<T> lift_, project_, unproject_, unlift_;
  std::vector<LgmLayer<T>> layers_;
};

/// Real scalars implied by a configuration: every channel map contributes
/// d_out d_in + d_out, every spectral kernel 2 * prod(retained modes) * d_m^2
/// (2 * prod * d_m when diagonal), every layer one step size.
inline std::size_t expected_parameter_count(const ModelConfig& c) {
  auto map = [](std::size_t in, std::size_t out) { return out * in + out; };
  std::size_t modes = c.modes.size() == 2 ? 2 * c.modes[0] * c.modes[1] : c.modes[0];
  const std::size_t dm = c.width, dv = c.lifted_width();
  const std::size_t spectral = 2 * modes * (c.spectral_diag ? dm : dm * dm);
  std::size_t per_layer = c.n_linear * map(dm, dm) + map(dm, dm) + 1;
  if (c.nonlinear_kind != MixKind::global) per_layer += c.n_nonlinear * map(dm, dm);
  if (c.nonlinear_kind != MixKind::local) per_layer += c.n_nonlinear * spectral;
  return map(c.window_channels(), dv) + map(dv, dm) + c.depth * per_layer + map(dm, dv) + map(dv, c.channels);
}

template <typename T>
ad::Var<T> lgm_forward(const LgmTransform<T>& t, const ad::Var<T>& c, const ModelConfig& config) {
  switch (t.kind) {
    case MixKind::local: return (*t.local)(c);
    case MixKind::global: return ad::spectral_multiply(c, t.global, config.modes, config.spectral_diag);
    case MixKind::mixed:
      return ad::hadamard((*t.local)(c), ad::spectral_multiply(c, t.global, config.modes, config.spectral_diag));
  }
  fail(ErrorKind::value, "lgm_forward: unknown transform kind");
}

/// sum_a M_lin_a(c) + H[sum_b M_nonlin_b(c)]
template <typename T>
ad::Var<T> layer_forward(const LgmLayer<T>& layer, const ad::Var<T>& c, const ModelConfig& config) {
  ad::Var<T> out;
  for (const auto& t : layer.linear) {
    auto term = lgm_forward(t, c, config);
    out = out ? ad::add(out, term) : term;
  }
  if (!layer.nonlinear.empty()) {
    ad::Var<T> inner;
    for (const auto& t : layer.nonlinear) {
      auto term = lgm_forward(t, c, config);
      inner = inner ? ad::add(inner, term) : term;
    }
    auto mixed = layer.mix(inner);
    out = out ? ad::add(out, mixed) : mixed;
  }
  return out;
}

template <typename T>
ad::Var<T> stack_forward(const DyMixOpModel<T>& model, const ad::Var<T>& c0) {
  const auto& config = model.config();
  const auto& layers = model.layers();
  ad::Var<T> out;
  switch (config.stack) {
    case StackMode::hybrid: {
      out = c0;
      ad::Var<T> state = c0;
      for (std::size_t l = 0; l < layers.size(); ++l) {
        auto f = layer_forward(layers[l], state, config);
        out = ad::add(out, ad::scale(f, layers[l].dt));
        if (l + 1 < layers.size()) state = ad::activation(ad::add(state, f), config.activation);
      }
      break;
    }
    case StackMode::parallel: {
      out = c0;
      for (const auto& layer : layers) out = ad::add(out, ad::scale(layer_forward(layer, c0, config), layer.dt));
      break;
    }
    case StackMode::hierarchical: {
      out = c0;
      for (std::size_t l = 0; l < layers.size(); ++l) {
        out = ad::add(out, layer_forward(layers[l], out, config));
        if (l + 1 < layers.size()) out = ad::activation(out, config.activation);
      }
      break;
    }
  }
  if (config.final_activation) out = ad::activation(out, config.activation);
  return out;
}

namespace detail {

template <typename T>
void check_window(const DyMixOpModel<T>& model, const ad::Var<T>& window) {
  const auto& shape = window->value.shape();
  const auto& config = model.config();
  require(shape.size() == 2 + config.spatial_dims(), ErrorKind::shape,
          "model: window " + shape_str(shape) + " must be (batch, channels, " + std::to_string(config.spatial_dims()) +
              " spatial axes)");
  if (shape[1] != config.window_channels()) {
    fail(ErrorKind::shape, "model: window " + shape_str(shape) + " has " + std::to_string(shape[1]) +
                               " channels, expected " + std::to_string(config.window_channels()));
  }
  config.check_resolution(Shape(shape.begin() + 2, shape.end()));
}

}  // namespace detail

/// Prediction of the next frame from a (batch, d_u (k+1), grid...) window.
template <typename T>
ad::Var<T> model_forward(const DyMixOpModel<T>& model, const ad::Var<T>& window) {
  detail::check_window(model, window);
  auto c0 = model.project()(model.lift()(window));
  auto c = stack_forward(model, c0);
  return model.unlift()(model.unproject()(c));
}

/// The lift/project sandwich without the latent evolution.
template <typename T>
ad::Var<T> consistency_forward(const DyMixOpModel<T>& model, const ad::Var<T>& window) {
  detail::check_window(model, window);
  return model.unlift()(model.unproject()(model.project()(model.lift()(window))));
}

template <typename T>
Tensor<T> predict(const DyMixOpModel<T>& model, const Tensor<T>& window) {
  return model_forward(model, ad::constant(window))->value;
}

}  // namespace dymixop
