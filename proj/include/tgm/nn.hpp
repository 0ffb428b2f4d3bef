// Transformer building blocks with explicit backward passes.
//
// Layers own their parameters and gradient accumulators; per-call activations
// live in caller-owned cache structs so several samples can be in flight
// between forward and backward.
#pragma once

#include <cmath>
#include <algorithm>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "tgm/common.hpp"

namespace tgm::nn {

template <typename T>
struct Parameter {
  std::string name;
  Mat<T> value;
  Mat<T> grad;
  int depth = 0;       // layer index used by layer-wise lr decay
  bool decay = true;   // subject to weight decay

  Parameter() = default;
  Parameter(std::string n, Mat<T> v, int d, bool wd)
      : name(std::move(n)), value(std::move(v)), grad(Mat<T>::Zero(value.rows(), value.cols())),
        depth(d), decay(wd) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename T>
using ParamList = std::vector<Parameter<T>*>;

template <typename T>
Mat<T> xavier_uniform(int out, int in, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-a, a);
  Mat<T> m(out, in);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(u(rng));
  return m;
}

template <typename T>
struct Linear {
  Parameter<T> weight;  // [out x in]
  Parameter<T> bias;    // [1 x out]

  Linear() = default;
  Linear(const std::string& name, int in, int out, int depth, Rng& rng)
      : weight(name + ".weight", xavier_uniform<T>(out, in, rng), depth, true),
        bias(name + ".bias", Mat<T>::Zero(1, out), depth, false) {}

  int in_features() const { return static_cast<int>(weight.value.cols()); }
  int out_features() const { return static_cast<int>(weight.value.rows()); }

  Mat<T> forward(const Mat<T>& x) const {
    Mat<T> y = x * weight.value.transpose();
    y.rowwise() += bias.value.row(0);
    return y;
  }

  /// Accumulates parameter gradients and returns dL/dx.
  Mat<T> backward(const Mat<T>& x, const Mat<T>& dy) {
    weight.grad.noalias() += dy.transpose() * x;
    bias.grad += dy.colwise().sum();
    return dy * weight.value;
  }

  void collect(ParamList<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

template <typename T>
struct LayerNorm {
  Parameter<T> gamma, beta;
  T eps = T(1e-6);

  struct Cache {
    Mat<T> xhat;
    std::vector<T> rstd;
  };

  LayerNorm() = default;
  LayerNorm(const std::string& name, int dim, int depth)
      : gamma(name + ".weight", Mat<T>::Ones(1, dim), depth, false),
        beta(name + ".bias", Mat<T>::Zero(1, dim), depth, false) {}

  Mat<T> forward(const Mat<T>& x, Cache& c) const {
    const auto n = static_cast<T>(x.cols());
    c.xhat.resize(x.rows(), x.cols());
    c.rstd.resize(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const T mu = x.row(r).sum() / n;
      const T var = (x.row(r).array() - mu).square().sum() / n;
      const T rs = T(1) / std::sqrt(var + eps);
      c.rstd[static_cast<std::size_t>(r)] = rs;
      c.xhat.row(r) = (x.row(r).array() - mu) * rs;
    }
    Mat<T> y = c.xhat.array().rowwise() * gamma.value.row(0).array();
    y.rowwise() += beta.value.row(0);
    return y;
  }

  Mat<T> backward(const Mat<T>& dy, const Cache& c) {
    gamma.grad += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    beta.grad += dy.colwise().sum();
    const auto n = static_cast<T>(dy.cols());
    Mat<T> dxhat = dy.array().rowwise() * gamma.value.row(0).array();
    Mat<T> dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      const T m1 = dxhat.row(r).sum() / n;
      const T m2 = (dxhat.row(r).array() * c.xhat.row(r).array()).sum() / n;
      dx.row(r) = ((dxhat.row(r).array() - m1 - c.xhat.row(r).array() * m2) *
                   c.rstd[static_cast<std::size_t>(r)])
                      .matrix();
    }
    return dx;
  }

  void collect(ParamList<T>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

/// Exact (erf) GELU.
template <typename T>
Mat<T> gelu(const Mat<T>& x) {
  return x.unaryExpr([](T v) { return T(0.5) * v * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>)); });
}

template <typename T>
Mat<T> gelu_backward(const Mat<T>& x, const Mat<T>& dy) {
  const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  Mat<T> d = x.unaryExpr([&](T v) {
    return T(0.5) * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>)) +
           v * inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
  });
  return d.cwiseProduct(dy);
}

template <typename T>
void softmax_rows_inplace(Mat<T>& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const T mx = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - mx).exp();
    s.row(r) /= s.row(r).sum();
  }
}

/// Multi-head self-attention over all rows of the input (joint space-time).
template <typename T>
struct Attention {
  Linear<T> qkv;
  Linear<T> proj;
  int heads = 1;

  struct Cache {
    Mat<T> x, qkv_out, ctx;
    std::vector<Mat<T>> probs;  // one [L x L] matrix per head
  };

  Attention() = default;
  Attention(const std::string& name, int dim, int num_heads, int depth, Rng& rng)
      : qkv(name + ".qkv", dim, 3 * dim, depth, rng),
        proj(name + ".proj", dim, dim, depth, rng),
        heads(num_heads) {
    if (dim % num_heads != 0) throw ConfigError("width must be divisible by the head count");
  }

  int dim() const { return proj.out_features(); }

  Mat<T> forward(const Mat<T>& x, Cache& c) const {
    const int D = dim(), dh = D / heads;
    const auto L = x.rows();
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    c.x = x;
    c.qkv_out = qkv.forward(x);
    c.ctx.resize(L, D);
    c.probs.resize(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      const auto q = c.qkv_out.middleCols(h * dh, dh);
      const auto k = c.qkv_out.middleCols(D + h * dh, dh);
      const auto v = c.qkv_out.middleCols(2 * D + h * dh, dh);
      Mat<T>& p = c.probs[static_cast<std::size_t>(h)];
      p.noalias() = (q * k.transpose()) * scale;
      softmax_rows_inplace(p);
      c.ctx.middleCols(h * dh, dh).noalias() = p * v;
    }
    return proj.forward(c.ctx);
  }

  Mat<T> backward(const Mat<T>& dy, const Cache& c) {
    const int D = dim(), dh = D / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    const Mat<T> dctx = proj.backward(c.ctx, dy);
    Mat<T> dqkv(c.qkv_out.rows(), 3 * D);
    for (int h = 0; h < heads; ++h) {
      const auto q = c.qkv_out.middleCols(h * dh, dh);
      const auto k = c.qkv_out.middleCols(D + h * dh, dh);
      const auto v = c.qkv_out.middleCols(2 * D + h * dh, dh);
      const Mat<T>& p = c.probs[static_cast<std::size_t>(h)];
      const auto dout = dctx.middleCols(h * dh, dh);
      Mat<T> dp = dout * v.transpose();
      dqkv.middleCols(2 * D + h * dh, dh).noalias() = p.transpose() * dout;
      // softmax backward, row by row
      Mat<T> ds = p.cwiseProduct(
          (dp.colwise() - p.cwiseProduct(dp).rowwise().sum()));
      ds *= scale;
      dqkv.middleCols(h * dh, dh).noalias() = ds * k;
      dqkv.middleCols(D + h * dh, dh).noalias() = ds.transpose() * q;
    }
    return qkv.backward(c.x, dqkv);
  }

  void collect(ParamList<T>& out) {
    qkv.collect(out);
    proj.collect(out);
  }
};

/// Per-sample residual-branch scaling for stochastic depth: 0 drops the
/// branch, 1/(1-p) keeps it.
template <typename T>
struct BranchScale {
  T attn = T(1), mlp = T(1);
};

template <typename T>
BranchScale<T> sample_drop_path(double rate, Rng& rng) {
  if (rate <= 0.0) return {};
  std::bernoulli_distribution keep(1.0 - rate);
  const T s = static_cast<T>(1.0 / (1.0 - rate));
  return {keep(rng) ? s : T(0), keep(rng) ? s : T(0)};
}

/// Pre-norm transformer block: x + attn(LN(x)), then x + mlp(LN(x)).
template <typename T>
struct Block {
  LayerNorm<T> norm1, norm2;
  Attention<T> attn;
  Linear<T> fc1, fc2;

  struct Cache {
    typename LayerNorm<T>::Cache n1, n2;
    typename Attention<T>::Cache attn;
    Mat<T> y2, hidden;  // LN2 output and fc1 pre-activation
    Mat<T> act;         // GELU output
    BranchScale<T> scale;
  };

  Block() = default;
  Block(const std::string& name, int dim, int heads, double mlp_ratio, int depth, Rng& rng)
      : norm1(name + ".norm1", dim, depth),
        norm2(name + ".norm2", dim, depth),
        attn(name + ".attn", dim, heads, depth, rng),
        fc1(name + ".mlp.fc1", dim, static_cast<int>(std::lround(dim * mlp_ratio)), depth, rng),
        fc2(name + ".mlp.fc2", static_cast<int>(std::lround(dim * mlp_ratio)), dim, depth, rng) {}

  Mat<T> forward(const Mat<T>& x, Cache& c, BranchScale<T> scale = {}) const {
    c.scale = scale;
    Mat<T> out = x;
    if (scale.attn != T(0)) out += scale.attn * attn.forward(norm1.forward(x, c.n1), c.attn);
    if (scale.mlp != T(0)) {
      c.y2 = norm2.forward(out, c.n2);
      c.hidden = fc1.forward(c.y2);
      c.act = gelu(c.hidden);
      out += scale.mlp * fc2.forward(c.act);
    }
    return out;
  }

  Mat<T> backward(const Mat<T>& dy, const Cache& c) {
    Mat<T> dx = dy;
    if (c.scale.mlp != T(0)) {
      const Mat<T> dact = fc2.backward(c.act, c.scale.mlp * dy);
      const Mat<T> dy2 = fc1.backward(c.y2, gelu_backward(c.hidden, dact));
      dx += norm2.backward(dy2, c.n2);
    }
    if (c.scale.attn != T(0)) {
      const Mat<T> dn1 = attn.backward(c.scale.attn * dx, c.attn);
      dx += norm1.backward(dn1, c.n1);
    }
    return dx;
  }

  void collect(ParamList<T>& out) {
    norm1.collect(out);
    attn.collect(out);
    norm2.collect(out);
    fc1.collect(out);
    fc2.collect(out);
  }
};

/// Batch normalization over rows. Training mode uses the statistics of the
/// whole batch (population variance); eval mode uses running estimates.
template <typename T>
struct BatchNorm {
  Parameter<T> gamma, beta;
  RowVec<T> running_mean, running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  struct Cache {
    Mat<T> xhat;
    RowVec<T> rstd;
    bool training = false;
  };

  BatchNorm() = default;
  BatchNorm(const std::string& name, int dim, int depth)
      : gamma(name + ".weight", Mat<T>::Ones(1, dim), depth, false),
        beta(name + ".bias", Mat<T>::Zero(1, dim), depth, false),
        running_mean(RowVec<T>::Zero(dim)),
        running_var(RowVec<T>::Ones(dim)) {}

  Mat<T> forward(const Mat<T>& x, Cache& c, bool training, bool update_running = true) {
    c.training = training;
    RowVec<T> mean, var;
    if (training) {
      if (x.rows() < 2)
        throw std::invalid_argument("batch norm in training mode needs at least 2 samples");
      const auto n = static_cast<T>(x.rows());
      mean = x.colwise().sum() / n;
      var = (x.rowwise() - mean).array().square().colwise().sum().matrix() / n;
      if (update_running) {
        running_mean = (T(1) - momentum) * running_mean + momentum * mean;
        running_var = (T(1) - momentum) * running_var + momentum * var * (n / (n - T(1)));
      }
    } else {
      mean = running_mean;
      var = running_var;
    }
    c.rstd = (var.array() + eps).rsqrt().matrix();
    c.xhat = (x.rowwise() - mean).array().rowwise() * c.rstd.array();
    Mat<T> y = c.xhat.array().rowwise() * gamma.value.row(0).array();
    y.rowwise() += beta.value.row(0);
    return y;
  }

  Mat<T> backward(const Mat<T>& dy, const Cache& c) {
    gamma.grad += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    beta.grad += dy.colwise().sum();
    Mat<T> dxhat = dy.array().rowwise() * gamma.value.row(0).array();
    if (!c.training) return dxhat.array().rowwise() * c.rstd.array();
    const auto n = static_cast<T>(dy.rows());
    const RowVec<T> m1 = dxhat.colwise().sum() / n;
    const RowVec<T> m2 = (dxhat.array() * c.xhat.array()).colwise().sum().matrix() / n;
    Mat<T> dx = dxhat.rowwise() - m1;
    dx -= (c.xhat.array().rowwise() * m2.array()).matrix();
    return dx.array().rowwise() * c.rstd.array();
  }

  void collect(ParamList<T>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

/// Row-wise l2 normalization; returns the row norms through `norms`.
template <typename T>
Mat<T> l2_normalize_rows(const Mat<T>& x, std::vector<T>& norms) {
  Mat<T> y(x.rows(), x.cols());
  norms.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T n = std::max(x.row(r).norm(), T(1e-12));
    norms[static_cast<std::size_t>(r)] = n;
    y.row(r) = x.row(r) / n;
  }
  return y;
}

template <typename T>
Mat<T> l2_normalize_backward(const Mat<T>& y, const std::vector<T>& norms, const Mat<T>& dy) {
  Mat<T> dx(y.rows(), y.cols());
  for (Eigen::Index r = 0; r < y.rows(); ++r)
    dx.row(r) = (dy.row(r) - y.row(r) * y.row(r).dot(dy.row(r))) / norms[static_cast<std::size_t>(r)];
  return dx;
}

/// Fixed 1-D sin/cos table for integer positions, `dim` must be even.
template <typename T>
Mat<T> sincos_1d(int positions, int dim) {
  Mat<T> out(positions, dim);
  const int half = dim / 2;
  for (int p = 0; p < positions; ++p)
    for (int i = 0; i < half; ++i) {
      const double omega = 1.0 / std::pow(10000.0, static_cast<double>(i) / std::max(half, 1));
      out(p, i) = static_cast<T>(std::sin(p * omega));
      out(p, half + i) = static_cast<T>(std::cos(p * omega));
    }
  return out;
}

/// Separable 3-D sin/cos embedding for a (T', H', W') token grid: the width is
/// split into temporal, row and column parts and concatenated per token.
template <typename T>
Mat<T> sincos_3d(int gt, int gh, int gw, int dim) {
  if (dim % 2 != 0) throw ConfigError("positional embedding width must be even");
  const int dt = 2 * (dim / 6), dh = dt, dw = dim - dt - dh;
  const Mat<T> et = sincos_1d<T>(gt, dt), eh = sincos_1d<T>(gh, dh), ew = sincos_1d<T>(gw, dw);
  Mat<T> out(gt * gh * gw, dim);
  for (int a = 0; a < gt; ++a)
    for (int b = 0; b < gh; ++b)
      for (int c = 0; c < gw; ++c) {
        const int row = (a * gh + b) * gw + c;
        out.row(row).head(dt) = et.row(a);
        out.row(row).segment(dt, dh) = eh.row(b);
        out.row(row).tail(dw) = ew.row(c);
      }
  return out;
}

/// Mean softmax cross-entropy and its gradient w.r.t. logits.
template <typename T>
T cross_entropy(const Mat<T>& logits, const std::vector<int>& labels, Mat<T>* dlogits) {
  Mat<T> p = logits;
  softmax_rows_inplace(p);
  const auto n = static_cast<T>(logits.rows());
  T loss = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= logits.cols()) throw std::out_of_range("label outside classifier range");
    loss -= std::log(std::max(p(r, y), std::numeric_limits<T>::min()));
    p(r, y) -= T(1);
  }
  if (dlogits) *dlogits = p / n;
  return loss / n;
}

}  // namespace tgm::nn
