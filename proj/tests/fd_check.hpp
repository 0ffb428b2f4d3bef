#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tgm/trainer.hpp"

namespace tgm::testing {

/// Tiny model used by the gradient checks: 32 tokens, 8 masked per clip.
inline model::ModelConfig fd_model_config() {
  model::ModelConfig c;
  c.frames = 4;
  c.height = 16;
  c.width = 16;
  c.patch = {2, 4, 4};
  c.D = 8;
  c.depth = 1;
  c.heads = 2;
  c.decoder_D = 8;
  c.decoder_depth = 1;
  c.decoder_heads = 2;
  c.mlp_ratio = 2.0;
  c.D_proj = 8;
  c.proj_hidden = 16;
  c.D_text = 16;
  c.text_head = true;
  c.init_seed = 3;
  return c;
}

template <typename T>
std::vector<trainer::PretrainSample<T>> fd_batch(const model::ModelConfig& c, int B, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n01;
  const Grid g = c.grid();
  std::vector<trainer::PretrainSample<T>> out;
  for (int b = 0; b < B; ++b) {
    trainer::PretrainSample<T> s;
    s.index = b;
    s.cubes.resize(g.size(), c.cube_size());
    s.targets.resize(g.size(), c.cube_size());
    for (Eigen::Index i = 0; i < s.cubes.size(); ++i) s.cubes.data()[i] = static_cast<T>(n01(rng) * 0.5);
    for (Eigen::Index i = 0; i < s.targets.size(); ++i) s.targets.data()[i] = static_cast<T>(n01(rng));
    s.mask = masking::random_mask(g, 0.25, rng);  // 4 per slice, 8 in total
    s.part = masking::partition(s.mask);
    s.text.resize(1, c.D_text);
    for (Eigen::Index i = 0; i < s.text.size(); ++i) s.text.data()[i] = static_cast<T>(n01(rng));
    s.text /= s.text.norm();
    out.push_back(std::move(s));
  }
  return out;
}

struct FdResult {
  double max_rel_error = 0.0;
  int checked = 0;
};

/// Entries whose gradient vanishes identically: the bias in front of a
/// training-mode batch norm, and key biases (softmax is shift invariant).
template <typename T>
bool structurally_zero(const nn::Parameter<T>& p, Eigen::Index idx) {
  if (p.name == "proj_head.fc1.bias") return true;
  const std::string suffix = "attn.qkv.bias";
  if (p.name.size() >= suffix.size() && p.name.compare(p.name.size() - suffix.size(), suffix.size(), suffix) == 0) {
    const Eigen::Index D = p.value.cols() / 3;
    return idx >= D && idx < 2 * D;
  }
  return false;
}

/// Compares analytic gradients of the combined objective with central
/// differences on `count` random scalar parameters (tensor picked uniformly,
/// then an entry uniformly; structurally zero entries are redrawn).
template <typename T>
FdResult finite_difference_check(model::VideoMAE<T>& m, const std::vector<trainer::PretrainSample<T>>& batch,
                                 int count, double step, std::uint64_t seed) {
  trainer::ObjectiveOptions opt;
  opt.contrastive = true;
  opt.lambda = 1.0;
  opt.tau = 0.07;
  m.zero_grad();
  trainer::batch_objective(m, batch, opt);
  auto params = m.parameters();

  trainer::ObjectiveOptions fwd = opt;
  fwd.backward = false;
  fwd.update_running = false;
  auto loss = [&] { return trainer::batch_objective(m, batch, fwd).total; };

  Rng rng(seed);
  FdResult r;
  while (r.checked < count) {
    auto* p = params[std::uniform_int_distribution<std::size_t>(0, params.size() - 1)(rng)];
    const auto idx = std::uniform_int_distribution<Eigen::Index>(0, p->value.size() - 1)(rng);
    if (structurally_zero(*p, idx)) continue;
    T& w = p->value.data()[idx];
    const T saved = w;
    const T hi = static_cast<T>(static_cast<double>(saved) + step);
    const T lo = static_cast<T>(static_cast<double>(saved) - step);
    w = hi;
    const double up = loss();
    w = lo;
    const double down = loss();
    w = saved;
    // the representable perturbation, not the requested one
    const double numeric = (up - down) / (static_cast<double>(hi) - static_cast<double>(lo));
    const double analytic = static_cast<double>(p->grad.data()[idx]);
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-12});
    r.max_rel_error = std::max(r.max_rel_error, std::abs(numeric - analytic) / denom);
    ++r.checked;
  }
  return r;
}

}  // namespace tgm::testing
