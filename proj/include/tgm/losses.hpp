// Reconstruction and video-text contrastive objectives.
#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "tgm/common.hpp"
#include "tgm/masking.hpp"

namespace tgm::losses {

enum class MseSupport { Masked, All };

/// Mean squared error over the rows selected by `support`. When `grad` is
/// given it receives dL/dpred; rows outside the support get exact zeros.
template <typename T>
T masked_mse(const Mat<T>& pred, const Mat<T>& target, const masking::MaskedPartition& part,
             Mat<T>* grad = nullptr, MseSupport support = MseSupport::Masked) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() || pred.rows() != part.size())
    throw DimensionError("prediction, target and partition disagree in shape");
  std::vector<int> all;
  const std::vector<int>* rows = &part.masked;
  if (support == MseSupport::All) {
    all.resize(static_cast<std::size_t>(pred.rows()));
    for (int i = 0; i < pred.rows(); ++i) all[static_cast<std::size_t>(i)] = i;
    rows = &all;
  }
  if (rows->empty()) throw std::domain_error("masked MSE needs at least one masked row");
  const T denom = static_cast<T>(rows->size()) * static_cast<T>(pred.cols());
  if (grad) grad->setZero(pred.rows(), pred.cols());
  T sum = 0;
  for (int r : *rows) {
    const auto diff = (pred.row(r) - target.row(r)).eval();
    sum += diff.squaredNorm();
    if (grad) grad->row(r) = (T(2) / denom) * diff;
  }
  return sum / denom;
}

/// InfoNCE for one query against its positive key and a set of negatives,
/// with dot-product similarity of unit vectors. Zero when there are no
/// negatives.
template <typename Vec>
double info_nce(const Vec& q, const Vec& k_pos, std::span<const Vec> negatives, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  const double pos = static_cast<double>(q.dot(k_pos)) / tau;
  double mx = pos;
  std::vector<double> logits;
  logits.reserve(negatives.size());
  for (const auto& k : negatives) {
    logits.push_back(static_cast<double>(q.dot(k)) / tau);
    mx = std::max(mx, logits.back());
  }
  double z = std::exp(pos - mx);
  for (double l : logits) z += std::exp(l - mx);
  return -(pos - mx - std::log(z));
}

/// Symmetric video<->text InfoNCE over a batch of matched unit rows:
/// mean_i (L(v_i, t_i, t_{j!=i}) + L(t_i, v_i, v_{j!=i})) / 2.
template <typename T>
T symmetric_nce(const Mat<T>& v, const Mat<T>& t, T tau, Mat<T>* dv = nullptr,
                Mat<T>* dt = nullptr) {
  if (v.rows() != t.rows() || v.cols() != t.cols())
    throw DimensionError("video and text batches disagree in shape");
  if (v.rows() < 2) throw std::invalid_argument("contrastive batch needs N >= 2");
  if (!(tau > T(0))) throw std::invalid_argument("temperature must be positive");
  const auto n = v.rows();
  const Mat<T> s = (v * t.transpose()) / tau;
  Mat<T> prow = s, pcol = s.transpose();
  T loss = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mr = prow.row(i).maxCoeff();
    prow.row(i) = (prow.row(i).array() - mr).exp();
    const T zr = prow.row(i).sum();
    prow.row(i) /= zr;
    const T mc = pcol.row(i).maxCoeff();
    pcol.row(i) = (pcol.row(i).array() - mc).exp();
    const T zc = pcol.row(i).sum();
    pcol.row(i) /= zc;
    // -log softmax at the diagonal, both directions
    loss += (mr + std::log(zr) - s(i, i)) + (mc + std::log(zc) - s(i, i));
  }
  loss /= T(2) * static_cast<T>(n);
  if (dv || dt) {
    // dL/dS from both softmaxes; pcol is indexed [text][video]
    Mat<T> ds = prow + pcol.transpose();
    ds.diagonal().array() -= T(2);
    ds /= T(2) * static_cast<T>(n) * tau;
    if (dv) *dv = ds * t;
    if (dt) *dt = ds.transpose() * v;
  }
  return loss;
}

struct LossReport {
  double l_mse = 0.0;
  double l_nce = 0.0;
  double total = 0.0;
  double nce_diagnostic = 0.0;  // recorded whether or not it is optimized
};

/// Combined objective. `l_nce` is the contrastive value measured this step;
/// it always populates the diagnostic and enters the total only when enabled.
inline LossReport combine(double l_mse, double l_nce, double lambda, bool contrastive_enabled) {
  LossReport r;
  r.l_mse = l_mse;
  r.l_nce = l_nce;
  r.nce_diagnostic = l_nce;
  r.total = contrastive_enabled ? l_mse + lambda * l_nce : l_mse;
  return r;
}

}  // namespace tgm::losses
