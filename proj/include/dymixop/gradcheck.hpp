#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dymixop/training.hpp"

namespace dymixop {

struct GradCheckEntry {
  std::string id;
  std::size_t size = 0;
  double max_rel_err = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  double tolerance = 0.0;
  std::vector<GradCheckEntry> entries;

  std::vector<GradCheckEntry> failures() const {
    std::vector<GradCheckEntry> out;
    for (const auto& e : entries)
      if (!e.passed) out.push_back(e);
    return out;
  }

  bool passed() const { return failures().empty(); }

  double worst() const {
    double w = 0.0;
    for (const auto& e : entries) w = std::max(w, e.max_rel_err);
    return w;
  }
};

/// Compares reverse-mode gradients of the training objective with central
/// differences, step h = 1e-5 (1 + |theta|). The per-parameter error is
/// max|analytic - numeric| / max(max|analytic|, max|numeric|), so entries
/// with vanishing gradient do not dominate. A parameter passes when its
/// error is strictly below `tolerance`.
inline GradCheckReport grad_check(DyMixOpModel<double>& model, const Tensor<double>& window, const Tensor<double>& target,
                                  double tolerance, const LossWeights& weights = {}, Metric metric = Metric::mse) {
  GradCheckReport report{tolerance, {}};
  auto loss_value = [&] { return compute_loss(model, window, target, weights, metric)->value[0]; };
  model.zero_grad();
  ad::backward(compute_loss(model, window, target, weights, metric));
  for (auto& p : model.parameters()) {
    const Tensor<double> analytic = p.grad();
    Tensor<double>& theta = p.value();
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double saved = theta[i], h = 1e-5 * (1.0 + std::fabs(saved));
      theta[i] = saved + h;
      const double up = loss_value();
      theta[i] = saved - h;
      const double down = loss_value();
      theta[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      diff = std::max(diff, std::fabs(analytic[i] - numeric));
      scale = std::max({scale, std::fabs(analytic[i]), std::fabs(numeric)});
    }
    const double err = diff / std::max(scale, 1e-12);
    report.entries.push_back({p.id, theta.size(), err, err < tolerance});
  }
  model.zero_grad();
  return report;
}

}  // namespace dymixop
