// AdamW with per-parameter lr multipliers, warmup + cosine schedule and
// layer-wise lr decay.
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "tgm/nn.hpp"

namespace tgm::optim {

/// Linear scaling rule: lr = base_lr * batch_size / 256.
inline double effective_lr(double base_lr, int batch_size) {
  return base_lr * static_cast<double>(batch_size) / 256.0;
}

struct Schedule {
  double peak_lr = 0.0;
  double min_lr = 0.0;
  long warmup_steps = 0;
  long total_steps = 1;

  /// Linear warmup from 0, then half-cosine decay to min_lr at total_steps.
  double lr_at(long step) const {
    if (step < warmup_steps)
      return peak_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    const long span = total_steps - warmup_steps;
    if (span <= 0) return peak_lr;
    const double progress =
        std::min(1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(span));
    return min_lr + (peak_lr - min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  }
};

/// decay^(num_layers + 1 - depth): depth 0 is the patch embedding, 1..n the
/// blocks and n+1 everything above them.
inline double layer_multiplier(int depth, int num_layers, double decay) {
  return std::pow(decay, static_cast<double>(num_layers + 1 - depth));
}

inline std::vector<double> layerwise_multipliers(int num_layers, double decay) {
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("layer decay must lie in (0, 1]");
  std::vector<double> out;
  for (int d = 0; d <= num_layers + 1; ++d) out.push_back(layer_multiplier(d, num_layers, decay));
  return out;
}

struct AdamWConfig {
  double beta1 = 0.9, beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
  double grad_clip = 0.0;  // max global grad norm, 0 = off
};

template <typename T>
class AdamW {
 public:
  struct Group {
    nn::Parameter<T>* param;
    double lr_scale;
    Mat<T> m, v;
  };

  AdamW(const nn::ParamList<T>& params, AdamWConfig cfg, int num_layers = 0,
        double layer_decay = 1.0)
      : cfg_(cfg) {
    const auto mult = layerwise_multipliers(num_layers, layer_decay);
    for (auto* p : params) {
      const int d = std::clamp(p->depth, 0, num_layers + 1);
      groups_.push_back({p, mult[static_cast<std::size_t>(d)],
                         Mat<T>::Zero(p->value.rows(), p->value.cols()),
                         Mat<T>::Zero(p->value.rows(), p->value.cols())});
    }
  }

  const std::vector<Group>& groups() const { return groups_; }
  long steps() const { return t_; }

  double grad_norm() const {
    double s = 0.0;
    for (const auto& g : groups_) s += static_cast<double>(g.param->grad.squaredNorm());
    return std::sqrt(s);
  }

  /// One update with base learning rate `lr` (scaled per group).
  void step(double lr) {
    ++t_;
    double clip = 1.0;
    if (cfg_.grad_clip > 0.0) {
      const double n = grad_norm();
      if (n > cfg_.grad_clip) clip = cfg_.grad_clip / (n + 1e-6);
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    for (auto& g : groups_) {
      const double glr = lr * g.lr_scale;
      auto& p = *g.param;
      const Mat<T> grad = p.grad * static_cast<T>(clip);
      g.m = b1 * g.m + (T(1) - b1) * grad;
      g.v = b2 * g.v + (T(1) - b2) * grad.cwiseAbs2();
      if (glr == 0.0) continue;
      if (p.decay && cfg_.weight_decay > 0.0)
        p.value *= static_cast<T>(1.0 - glr * cfg_.weight_decay);
      const T step_size = static_cast<T>(glr / bc1);
      const T denom_scale = static_cast<T>(1.0 / std::sqrt(bc2));
      p.value.array() -= step_size * g.m.array() /
                         (g.v.array().sqrt() * denom_scale + static_cast<T>(cfg_.eps));
    }
  }

 private:
  AdamWConfig cfg_;
  std::vector<Group> groups_;
  long t_ = 0;
};

}  // namespace tgm::optim
