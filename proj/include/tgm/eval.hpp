// Linear probing, multi-view inference and video-text retrieval.
#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tgm/trainer.hpp"

namespace tgm::eval {

using videocore::VideoClip;

// ---------------------------------------------------------------------------
// Linear probe

struct ProbeResult {
  double train_accuracy = 0.0;
  double top1 = 0.0;  // held-out split
  int train_size = 0, test_size = 0;
  std::uint64_t checksum_before = 0, checksum_after = 0;
};

/// Seeded split of [0, n) into a train prefix and test suffix.
inline std::pair<std::vector<int>, std::vector<int>> split_indices(int n, double train_fraction,
                                                                   std::uint64_t seed) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, 0, 41));
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto ntrain = static_cast<std::size_t>(
      std::clamp(static_cast<long>(std::lround(train_fraction * n)), 1L, static_cast<long>(n) - 1));
  return {{perm.begin(), perm.begin() + static_cast<long>(ntrain)},
          {perm.begin() + static_cast<long>(ntrain), perm.end()}};
}

/// Softmax regression on fixed features. Features are standardized with the
/// training-split statistics; minibatch AdamW without weight decay.
struct LinearClassifier {
  Mat<double> weight;  // classes x D
  RowVec<double> bias;
  RowVec<double> mean, inv_std;

  Mat<double> logits(const Mat<double>& x) const {
    const Mat<double> z = (x.rowwise() - mean).array().rowwise() * inv_std.array();
    return (z * weight.transpose()).rowwise() + bias;
  }

  std::vector<int> predict(const Mat<double>& x) const {
    const Mat<double> l = logits(x);
    std::vector<int> out;
    for (Eigen::Index r = 0; r < l.rows(); ++r) {
      Eigen::Index arg;
      l.row(r).maxCoeff(&arg);
      out.push_back(static_cast<int>(arg));
    }
    return out;
  }
};

inline double accuracy(const std::vector<int>& pred, const std::vector<int>& labels) {
  if (pred.empty()) return 0.0;
  int hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

inline LinearClassifier train_linear(const Mat<double>& x, const std::vector<int>& y, int classes,
                                     const config::ProbeConfig& pc, std::uint64_t seed) {
  const auto n = x.rows();
  const auto d = x.cols();
  LinearClassifier c;
  c.mean = x.colwise().mean();
  const RowVec<double> var = (x.rowwise() - c.mean).array().square().colwise().mean();
  c.inv_std = (var.array().sqrt() + 1e-6).inverse();
  nn::Linear<double> lin;
  lin.weight = nn::Parameter<double>("probe.weight", Mat<double>::Zero(classes, d), 0, false);
  lin.bias = nn::Parameter<double>("probe.bias", Mat<double>::Zero(1, classes), 0, false);
  optim::AdamW<double> opt({&lin.weight, &lin.bias}, {0.9, 0.999, 1e-8, 0.0, 0.0});
  const Mat<double> z = (x.rowwise() - c.mean).array().rowwise() * c.inv_std.array();
  const int bs = std::max(1, std::min<int>(pc.batch_size, static_cast<int>(n)));
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  for (int epoch = 0; epoch < pc.epochs; ++epoch) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch), 43));
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Eigen::Index start = 0; start < n; start += bs) {
      const Eigen::Index end = std::min<Eigen::Index>(n, start + bs);
      Mat<double> xb(end - start, d);
      std::vector<int> yb;
      for (Eigen::Index i = start; i < end; ++i) {
        xb.row(i - start) = z.row(perm[static_cast<std::size_t>(i)]);
        yb.push_back(y[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
      }
      lin.weight.zero_grad();
      lin.bias.zero_grad();
      Mat<double> dl;
      nn::cross_entropy(lin.forward(xb), yb, &dl);
      lin.backward(xb, dl);
      opt.step(pc.lr);
    }
  }
  c.weight = lin.weight.value;
  c.bias = lin.bias.value.row(0);
  return c;
}

/// Trains a linear classifier on frozen pooled features. Throws if the
/// encoder parameters change during probing.
template <typename T>
ProbeResult linear_probe(model::VideoMAE<T>& m, const synthgen::Corpus& corpus, const config::ProbeConfig& pc,
                         std::uint64_t seed) {
  const int classes = synthgen::num_classes(corpus.label_map);
  trainer::check_labels(corpus, classes);
  ProbeResult r;
  r.checksum_before = m.encoder_checksum();
  const Mat<double> feats = trainer::extract_features(m, corpus.videos, corpus.patch).template cast<double>();
  const auto [tr, te] = split_indices(corpus.size(), pc.train_fraction, seed);
  auto gather = [&](const std::vector<int>& idx, Mat<double>& x, std::vector<int>& y) {
    x.resize(static_cast<Eigen::Index>(idx.size()), feats.cols());
    y.clear();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = feats.row(idx[i]);
      y.push_back(corpus.labels[static_cast<std::size_t>(idx[i])]);
    }
  };
  Mat<double> xtr, xte;
  std::vector<int> ytr, yte;
  gather(tr, xtr, ytr);
  gather(te, xte, yte);
  const LinearClassifier c = train_linear(xtr, ytr, classes, pc, seed);
  r.train_accuracy = accuracy(c.predict(xtr), ytr);
  r.top1 = accuracy(c.predict(xte), yte);
  r.train_size = static_cast<int>(tr.size());
  r.test_size = static_cast<int>(te.size());
  r.checksum_after = m.encoder_checksum();
  if (r.checksum_after != r.checksum_before)
    throw std::logic_error("encoder parameters changed during linear probing");
  return r;
}

// ---------------------------------------------------------------------------
// Multi-view inference

struct ViewSpec {
  int temporal_views = 1;
  int spatial_views = 1;
};

/// Evenly spaced offsets of a window of `len` inside `total`; one view is
/// centred, two or more include both ends.
inline std::vector<int> view_offsets(int total, int len, int views) {
  if (views < 1) throw ConfigError("view counts must be >= 1");
  if (total < len) throw DimensionError("clip too small for the requested views");
  std::vector<int> out;
  if (views == 1) return {(total - len) / 2};
  for (int i = 0; i < views; ++i)
    out.push_back(static_cast<int>(std::lround(static_cast<double>(i) * (total - len) / (views - 1))));
  return out;
}

inline VideoClip sub_clip(const VideoClip& v, int t0, int y0, int x0, int T, int H, int W) {
  VideoClip out(T, H, W, v.C);
  out.frame_stride = v.frame_stride;
  for (int t = 0; t < T; ++t)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        for (int c = 0; c < v.C; ++c) out.at(t, y, x, c) = v.at(t0 + t, y0 + y, x0 + x, c);
  return out;
}

template <typename T>
struct MultiviewResult {
  RowVec<T> logits;
  int passes = 0;
};

/// Averages classifier logits over temporal x spatial views. Spatial views
/// slide along the longer side (left/centre/right for landscape clips).
template <typename T>
MultiviewResult<T> multiview_infer(const model::VideoMAE<T>& m, const VideoClip& video, const ViewSpec& views) {
  if (!m.has_classifier()) throw ConfigError("multi-view inference needs a classifier");
  const auto& mc = m.config();
  if (video.T < mc.frames) throw DimensionError("insufficient frames for the model clip length");
  const auto starts = view_offsets(video.T, mc.frames, views.temporal_views);
  const bool horizontal = video.W - mc.width >= video.H - mc.height;
  const auto xs = horizontal ? view_offsets(video.W, mc.width, views.spatial_views)
                             : view_offsets(video.W, mc.width, 1);
  const auto ys = horizontal ? view_offsets(video.H, mc.height, 1)
                             : view_offsets(video.H, mc.height, views.spatial_views);
  MultiviewResult<T> r;
  r.logits = RowVec<T>::Zero(m.classifier.out_features());
  for (int t0 : starts)
    for (std::size_t s = 0; s < std::max(xs.size(), ys.size()); ++s) {
      const int x0 = xs[std::min(s, xs.size() - 1)], y0 = ys[std::min(s, ys.size() - 1)];
      const VideoClip clip = sub_clip(video, t0, y0, x0, mc.frames, mc.height, mc.width);
      const Mat<T> f = m.features(videocore::extract_cubes<T>(clip, mc.patch));
      r.logits += m.classifier.forward(f).row(0);
      ++r.passes;
    }
  r.logits /= static_cast<T>(r.passes);
  return r;
}

template <typename T>
double multiview_accuracy(const model::VideoMAE<T>& m, const synthgen::Corpus& corpus, const ViewSpec& views) {
  int hit = 0;
  for (int i = 0; i < corpus.size(); ++i) {
    const auto r = multiview_infer(m, corpus.videos[static_cast<std::size_t>(i)], views);
    Eigen::Index arg;
    r.logits.maxCoeff(&arg);
    hit += static_cast<int>(arg) == corpus.labels[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hit) / corpus.size();
}

// ---------------------------------------------------------------------------
// Retrieval

struct RetrievalResult {
  std::map<int, double> video_to_text;  // K -> recall
  std::map<int, double> text_to_video;
  Mat<double> similarity;               // videos x texts
  int tied_queries = 0;  // queries whose matched item shared its score with another candidate
  std::vector<int> video_ranks, text_ranks;  // 1-based rank of the first satisfying candidate
};

namespace detail {

/// Rank (1-based) of the first candidate accepted by `ok`, ordering by score
/// descending and index ascending. Sets `tied` when that candidate's score
/// is shared by another candidate.
template <typename Row, typename Ok>
int rank_of(const Row& scores, Ok ok, bool& tied) {
  const auto n = static_cast<int>(scores.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores(a) > scores(b); });
  for (int r = 0; r < n; ++r) {
    const int j = order[static_cast<std::size_t>(r)];
    if (!ok(j)) continue;
    tied = false;
    for (int k = 0; k < n; ++k)
      if (k != j && scores(k) == scores(j)) tied = true;
    return r + 1;
  }
  throw std::logic_error("no satisfying candidate");
}

}  // namespace detail

/// R@K in both directions for row-aligned video and text embeddings. A
/// query is satisfied by any candidate whose caption string equals the
/// query's own caption.
inline RetrievalResult retrieval_from_embeddings(const Mat<double>& video, const Mat<double>& text,
                                                 const std::vector<std::string>& captions,
                                                 const std::vector<int>& ks = {1, 5}) {
  const auto n = video.rows();
  if (text.rows() != n || static_cast<Eigen::Index>(captions.size()) != n || video.cols() != text.cols())
    throw DimensionError("retrieval inputs disagree in shape");
  RetrievalResult r;
  r.similarity = video * text.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    auto same = [&](int j) { return captions[static_cast<std::size_t>(j)] == captions[static_cast<std::size_t>(i)]; };
    bool tv = false, tt = false;
    r.video_ranks.push_back(detail::rank_of(r.similarity.row(i).transpose(), same, tv));
    r.text_ranks.push_back(detail::rank_of(r.similarity.col(i), same, tt));
    r.tied_queries += tv + tt;
  }
  for (int k : ks) {
    auto recall = [&](const std::vector<int>& ranks) {
      return static_cast<double>(std::count_if(ranks.begin(), ranks.end(), [&](int x) { return x <= k; })) /
             static_cast<double>(n);
    };
    r.video_to_text[k] = recall(r.video_ranks);
    r.text_to_video[k] = recall(r.text_ranks);
  }
  return r;
}

/// Canonical caption of each clip (the first template).
inline std::vector<std::string> canonical_captions(const synthgen::Corpus& corpus) {
  std::vector<std::string> out;
  for (const auto& c : corpus.captions) out.push_back(c.at(0));
  return out;
}

/// Video embeddings are the projection head output (eval-mode batch norm)
/// of pooled encoder features; with `raw`, the l2-normalized pooled features
/// themselves, compared against zero-padded text.
template <typename T>
RetrievalResult retrieve(model::VideoMAE<T>& m, const synthgen::Corpus& corpus, bool raw = false,
                         const std::vector<int>& ks = {1, 5}) {
  const synthgen::Embedder embedder;
  const auto captions = canonical_captions(corpus);
  const Mat<T> pooled = trainer::extract_features(m, corpus.videos, corpus.patch);
  Mat<T> text(corpus.size(), embedder.dim());
  for (int i = 0; i < corpus.size(); ++i)
    text.row(i) = embedder.embed_text(captions[static_cast<std::size_t>(i)]).transpose().template cast<T>();
  Mat<T> v, t;
  if (raw) {
    std::vector<T> norms;
    v = nn::l2_normalize_rows(pooled, norms);
    if (text.cols() > v.cols()) throw DimensionError("raw retrieval needs model.D >= text width");
    t = Mat<T>::Zero(text.rows(), v.cols());
    t.leftCols(text.cols()) = text;
  } else {
    model::HeadCache<T> hc;
    v = m.proj_head.forward(pooled, hc, false, false);
    t = m.text_features(text);
  }
  return retrieval_from_embeddings(v.template cast<double>(), t.template cast<double>(), captions, ks);
}

/// Mean R@1 (video to text) of random unit embeddings under the same caption
/// duplicate rule: the chance level for a given caption list.
inline double chance_r_at_1(const std::vector<std::string>& captions, int dim, int trials, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(captions.size());
  double sum = 0.0;
  for (int tr = 0; tr < trials; ++tr) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(tr), 47));
    std::normal_distribution<double> g;
    Mat<double> v(n, dim), t(n, dim);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int d = 0; d < dim; ++d) {
        v(i, d) = g(rng);
        t(i, d) = g(rng);
      }
    v.rowwise().normalize();
    t.rowwise().normalize();
    sum += retrieval_from_embeddings(v, t, captions, {1}).video_to_text.at(1);
  }
  return sum / trials;
}

// ---------------------------------------------------------------------------
// Metrics report

struct Metrics {
  std::optional<double> top1;
  std::optional<double> r_at_1, r_at_5;
  ViewSpec views;
  std::uint64_t seed = 0;
  std::string checkpoint_hash;
  nlohmann::json extra = nlohmann::json::object();
};

inline nlohmann::json to_json(const Metrics& m) {
  nlohmann::json j;
  j["top1"] = m.top1 ? nlohmann::json(*m.top1) : nlohmann::json(nullptr);
  j["r_at_1"] = m.r_at_1 ? nlohmann::json(*m.r_at_1) : nlohmann::json(nullptr);
  j["r_at_5"] = m.r_at_5 ? nlohmann::json(*m.r_at_5) : nlohmann::json(nullptr);
  j["views"] = {{"temporal", m.views.temporal_views}, {"spatial", m.views.spatial_views}};
  j["seed"] = m.seed;
  j["checkpoint_hash"] = m.checkpoint_hash;
  for (const auto& [k, v] : m.extra.items()) j[k] = v;
  return j;
}

inline void write_metrics(const std::filesystem::path& path, const Metrics& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << to_json(m).dump(2) << '\n';
}

}  // namespace tgm::eval
