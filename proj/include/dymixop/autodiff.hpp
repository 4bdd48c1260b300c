#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <unordered_set>
#include <vector>

#include "dymixop/spectral.hpp"
#include "dymixop/tensor.hpp"

namespace dymixop::ad {

/// A value on the tape. Leaves (parameters, inputs) have no backward rule and
/// accumulate gradients across backward() calls; interior nodes are reset at
/// the start of every backward().
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  bool requires_grad = false;

  bool is_leaf() const { return !backward; }

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>::zeros(value.shape(), value.is_complex());
    return grad;
  }

  void accumulate(const Tensor<T>& g) {
    Tensor<T>& buf = grad_buffer();
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
  }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  return n;
}

template <typename T>
Var<T> variable(Tensor<T> value) {
  auto n = constant(std::move(value));
  n->requires_grad = true;
  return n;
}

namespace detail {

template <typename T>
Var<T> make_node(Tensor<T> value, std::vector<Var<T>> parents) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  n->parents = std::move(parents);
  return n;
}

template <typename T>
bool wants(const Var<T>& v) {
  return v->requires_grad;
}

}  // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  auto n = detail::make_node(dymixop::add(a->value, b->value), {a, b});
  if (n->requires_grad) {
    n->backward = [](Node<T>& self) {
      for (auto& p : self.parents) {
        if (p->requires_grad) p->accumulate(self.grad);
      }
    };
  }
  return n;
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  auto n = detail::make_node(dymixop::sub(a->value, b->value), {a, b});
  if (n->requires_grad) {
    n->backward = [](Node<T>& self) {
      if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
      if (self.parents[1]->requires_grad) self.parents[1]->accumulate(dymixop::scale(T(-1), self.grad));
    };
  }
  return n;
}

template <typename T>
Var<T> hadamard(const Var<T>& a, const Var<T>& b) {
  require(!a->value.is_complex(), ErrorKind::shape, "ad::hadamard: real operands only");
  auto n = detail::make_node(dymixop::hadamard(a->value, b->value), {a, b});
  if (n->requires_grad) {
    n->backward = [](Node<T>& self) {
      auto& a = self.parents[0];
      auto& b = self.parents[1];
      if (a->requires_grad) a->accumulate(dymixop::hadamard(self.grad, b->value));
      if (b->requires_grad) b->accumulate(dymixop::hadamard(self.grad, a->value));
    };
  }
  return n;
}

/// Multiplication by a fixed constant.
template <typename T>
Var<T> scale(const Var<T>& x, T alpha) {
  auto n = detail::make_node(dymixop::scale(alpha, x->value), {x});
  if (n->requires_grad) {
    n->backward = [alpha](Node<T>& self) { self.parents[0]->accumulate(dymixop::scale(alpha, self.grad)); };
  }
  return n;
}

/// Multiplication by a single-element variable (e.g. a learnable step size).
template <typename T>
Var<T> scale(const Var<T>& x, const Var<T>& s) {
  require(s->value.size() == 1, ErrorKind::shape, "ad::scale: scale must hold one element, got " + shape_str(s->value.shape()));
  auto n = detail::make_node(dymixop::scale(s->value[0], x->value), {x, s});
  if (n->requires_grad) {
    n->backward = [](Node<T>& self) {
      auto& x = self.parents[0];
      auto& s = self.parents[1];
      if (x->requires_grad) x->accumulate(dymixop::scale(s->value[0], self.grad));
      if (s->requires_grad) {
        double dot = 0.0;
        for (std::size_t i = 0; i < self.grad.size(); ++i) dot += static_cast<double>(self.grad[i]) * x->value[i];
        s->accumulate(Tensor<T>::scalar(static_cast<T>(dot)));
      }
    };
  }
  return n;
}

template <typename T>
Var<T> channel_map(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  auto n = detail::make_node(dymixop::channel_map(x->value, weight->value, bias->value), {x, weight, bias});
  if (!n->requires_grad) return n;
  n->backward = [](Node<T>& self) {
    const auto& x = self.parents[0];
    const auto& w = self.parents[1];
    const auto& b = self.parents[2];
    const std::size_t batch = x->value.extent(0), c_in = w->value.extent(1), c_out = w->value.extent(0);
    const std::size_t points = points_per_channel(x->value.shape());
    const T* g = self.grad.data();
    const T* xin = x->value.data();
    if (x->requires_grad) {
      Tensor<T>& gx = x->grad_buffer();
      parallel_for(static_cast<std::ptrdiff_t>(batch * c_in), [&](std::ptrdiff_t idx) {
        const std::size_t bb = static_cast<std::size_t>(idx) / c_in, i = static_cast<std::size_t>(idx) % c_in;
        T* dst = gx.data() + (bb * c_in + i) * points;
        for (std::size_t j = 0; j < c_out; ++j) {
          const T wji = w->value[j * c_in + i];
          const T* src = g + (bb * c_out + j) * points;
          for (std::size_t p = 0; p < points; ++p) dst[p] += wji * src[p];
        }
      });
    }
    if (w->requires_grad) {
      Tensor<T>& gw = w->grad_buffer();
      parallel_for(static_cast<std::ptrdiff_t>(c_out), [&](std::ptrdiff_t js) {
        const std::size_t j = static_cast<std::size_t>(js);
        for (std::size_t i = 0; i < c_in; ++i) {
          T acc = T(0);
          for (std::size_t bb = 0; bb < batch; ++bb) {
            const T* gr = g + (bb * c_out + j) * points;
            const T* xr = xin + (bb * c_in + i) * points;
            for (std::size_t p = 0; p < points; ++p) acc += gr[p] * xr[p];
          }
          gw[j * c_in + i] += acc;
        }
      });
    }
    if (b->requires_grad) {
      Tensor<T>& gb = b->grad_buffer();
      for (std::size_t j = 0; j < c_out; ++j) {
        T acc = T(0);
        for (std::size_t bb = 0; bb < batch; ++bb) {
          const T* gr = g + (bb * c_out + j) * points;
          for (std::size_t p = 0; p < points; ++p) acc += gr[p];
        }
        gb[j] += acc;
      }
    }
  };
  return n;
}

/// Global transform with trainable truncated Fourier coefficients held by `weights`.
template <typename T>
Var<T> spectral_multiply(const Var<T>& x, const Var<T>& weights, const std::vector<std::size_t>& modes, bool diagonal) {
  SpectralWeights<T> kernel{modes, diagonal, weights->value};
  auto result = spectral_forward(x->value, kernel);
  auto n = detail::make_node(std::move(result.out), {x, weights});
  if (!n->requires_grad) return n;
  n->backward = [kernel = std::move(kernel), input_modes = std::move(result.input_modes)](Node<T>& self) {
    auto& x = self.parents[0];
    auto& w = self.parents[1];
    spectral_backward(self.grad, kernel, input_modes, x->requires_grad ? &x->grad_buffer() : nullptr,
                      w->requires_grad ? &w->grad_buffer() : nullptr);
  };
  return n;
}

enum class Activation { gelu, tanh };

namespace detail {

template <typename T>
constexpr T gelu_c() {
  return static_cast<T>(0.7978845608028654);  // sqrt(2 / pi)
}

template <typename T>
T gelu(T x) {
  const T u = gelu_c<T>() * (x + T(0.044715) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(u));
}

template <typename T>
T gelu_derivative(T x) {
  const T u = gelu_c<T>() * (x + T(0.044715) * x * x * x);
  const T t = std::tanh(u);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * gelu_c<T>() * (T(1) + T(3 * 0.044715) * x * x);
}

}  // namespace detail

/// Elementwise activation; GELU uses the tanh approximation.
template <typename T>
Var<T> activation(const Var<T>& x, Activation kind) {
  Tensor<T> out = x->value;
  for (auto& v : out.values()) v = kind == Activation::gelu ? detail::gelu(v) : std::tanh(v);
  auto n = detail::make_node(std::move(out), {x});
  if (n->requires_grad) {
    n->backward = [kind](Node<T>& self) {
      auto& x = self.parents[0];
      Tensor<T>& gx = x->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const T d = kind == Activation::gelu ? detail::gelu_derivative(x->value[i])
                                             : T(1) - self.value[i] * self.value[i];
        gx[i] += self.grad[i] * d;
      }
    };
  }
  return n;
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  std::vector<Tensor<T>> values;
  values.reserve(parts.size());
  for (const auto& p : parts) values.push_back(p->value);
  auto n = detail::make_node(dymixop::concat_channels<T>(std::span<const Tensor<T>>(values)), parts);
  if (n->requires_grad) {
    n->backward = [](Node<T>& self) {
      std::size_t begin = 0;
      for (auto& p : self.parents) {
        const std::size_t count = p->value.extent(1);
        if (p->requires_grad) p->accumulate(dymixop::slice_channels(self.grad, begin, count));
        begin += count;
      }
    };
  }
  return n;
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, std::size_t begin, std::size_t count) {
  auto n = detail::make_node(dymixop::slice_channels(x->value, begin, count), {x});
  if (n->requires_grad) {
    n->backward = [begin, count](Node<T>& self) {
      auto& x = self.parents[0];
      Tensor<T>& gx = x->grad_buffer();
      const std::size_t batch = x->value.extent(0), channels = x->value.extent(1);
      const std::size_t width = x->value.size() / (batch * channels);
      for (std::size_t b = 0; b < batch; ++b) {
        const T* src = self.grad.data() + b * count * width;
        T* dst = gx.data() + (b * channels + begin) * width;
        for (std::size_t i = 0; i < count * width; ++i) dst[i] += src[i];
      }
    };
  }
  return n;
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const double m = mean_all(x->value);
  auto n = detail::make_node(Tensor<T>::scalar(static_cast<T>(m)), {x});
  if (n->requires_grad) {
    n->backward = [](Node<T>& self) {
      auto& x = self.parents[0];
      const T g = self.grad[0] / static_cast<T>(x->value.size());
      Tensor<T>& gx = x->grad_buffer();
      for (auto& v : gx.values()) v += g;
    };
  }
  return n;
}

/// mean((a - b)^2) over every element.
template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  require_same_layout(a->value, b->value, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a->value.size(); ++i) {
    const double d = static_cast<double>(a->value[i]) - static_cast<double>(b->value[i]);
    acc += d * d;
  }
  const std::size_t count = a->value.size();
  auto n = detail::make_node(Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(count))), {a, b});
  if (n->requires_grad) {
    n->backward = [count](Node<T>& self) {
      auto& a = self.parents[0];
      auto& b = self.parents[1];
      const T factor = T(2) * self.grad[0] / static_cast<T>(count);
      for (int side = 0; side < 2; ++side) {
        auto& p = side == 0 ? a : b;
        if (!p->requires_grad) continue;
        const T sign = side == 0 ? T(1) : T(-1);
        Tensor<T>& g = p->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * factor * (a->value[i] - b->value[i]);
      }
    };
  }
  return n;
}

/// Per-sample sum(err^2) / sum(target^2), averaged over the batch axis.
template <typename T>
Var<T> relative_mse(const Var<T>& pred, const Var<T>& target) {
  require_same_layout(pred->value, target->value, "relative_mse");
  const std::size_t batch = pred->value.extent(0), per = pred->value.size() / batch;
  std::vector<double> err(batch, 0.0), norm(batch, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) {
      const double t = target->value[i], d = static_cast<double>(pred->value[i]) - t;
      err[b] += d * d;
      norm[b] += t * t;
    }
    if (!(norm[b] > 0.0)) fail(ErrorKind::value, "relative_mse: target sample " + std::to_string(b) + " has zero norm");
  }
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) total += err[b] / norm[b];
  auto n = detail::make_node(Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(batch))), {pred, target});
  if (n->requires_grad) {
    n->backward = [batch, per, err, norm](Node<T>& self) {
      auto& p = self.parents[0];
      auto& t = self.parents[1];
      const double g = static_cast<double>(self.grad[0]) / static_cast<double>(batch);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = b * per; i < (b + 1) * per; ++i) {
          const double d = static_cast<double>(p->value[i]) - static_cast<double>(t->value[i]);
          if (p->requires_grad) p->grad_buffer()[i] += static_cast<T>(g * 2.0 * d / norm[b]);
          if (t->requires_grad) {
            const double dt = -2.0 * d / norm[b] - 2.0 * err[b] * t->value[i] / (norm[b] * norm[b]);
            t->grad_buffer()[i] += static_cast<T>(g * dt);
          }
        }
      }
    };
  }
  return n;
}

/// Reverse sweep from a single-element loss. Leaf gradients accumulate.
template <typename T>
void backward(const Var<T>& loss) {
  require(loss->value.size() == 1 && !loss->value.is_complex(), ErrorKind::shape,
          "backward: loss must be a real scalar, got " + shape_str(loss->value.shape()));
  if (!loss->requires_grad) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node<T>* node : order) {
    if (!node->is_leaf()) node->grad = Tensor<T>();
  }
  loss->accumulate(Tensor<T>::scalar(T(1)));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (!node->is_leaf() && !node->grad.empty()) node->backward(*node);
  }
  for (Node<T>* node : order) {
    if (!node->is_leaf()) node->grad = Tensor<T>();
  }
}

/// A named trainable leaf.
template <typename T>
struct Parameter {
  std::string id;
  Var<T> node;
  bool trainable = true;

  const Tensor<T>& value() const { return node->value; }
  Tensor<T>& value() { return node->value; }

  Tensor<T> grad() const {
    return node->grad.empty() ? Tensor<T>::zeros(node->value.shape(), node->value.is_complex()) : node->grad;
  }

  void zero_grad() { node->grad = Tensor<T>::zeros(node->value.shape(), node->value.is_complex()); }
};

}  // namespace dymixop::ad
