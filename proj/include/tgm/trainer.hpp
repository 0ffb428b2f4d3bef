// Pretraining and finetuning loops.
//
// Every random draw of step s comes from derive_seed(seed, s, ...), so a run
// is a pure function of its config and corpus.
#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgm/checkpoint.hpp"
#include "tgm/config.hpp"
#include "tgm/losses.hpp"
#include "tgm/masking.hpp"
#include "tgm/model.hpp"
#include "tgm/optim.hpp"
#include "tgm/synthgen.hpp"

namespace tgm::trainer {

using videocore::Grid;
using videocore::VideoClip;

// ---------------------------------------------------------------------------
// Augmentation

/// Bilinear sample of channel c at continuous pixel coordinates.
inline float bilinear(const VideoClip& v, int t, float y, float x, int c) {
  y = std::clamp(y, 0.f, static_cast<float>(v.H - 1));
  x = std::clamp(x, 0.f, static_cast<float>(v.W - 1));
  const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
  const int y1 = std::min(y0 + 1, v.H - 1), x1 = std::min(x0 + 1, v.W - 1);
  const float fy = y - static_cast<float>(y0), fx = x - static_cast<float>(x0);
  const float top = v.at(t, y0, x0, c) * (1 - fx) + v.at(t, y0, x1, c) * fx;
  const float bot = v.at(t, y1, x0, c) * (1 - fx) + v.at(t, y1, x1, c) * fx;
  return top * (1 - fy) + bot * fy;
}

/// Crops [y0, y0+ch) x [x0, x0+cw) from every frame and resizes it back to
/// the full frame with bilinear interpolation (pixel centres aligned).
inline VideoClip crop_resize(const VideoClip& v, float y0, float x0, float ch, float cw) {
  VideoClip out(v.T, v.H, v.W, v.C);
  out.frame_stride = v.frame_stride;
  const float sy = ch / static_cast<float>(v.H), sx = cw / static_cast<float>(v.W);
  for (int t = 0; t < v.T; ++t)
    for (int y = 0; y < v.H; ++y)
      for (int x = 0; x < v.W; ++x) {
        const float yy = y0 + (static_cast<float>(y) + 0.5f) * sy - 0.5f;
        const float xx = x0 + (static_cast<float>(x) + 0.5f) * sx - 0.5f;
        for (int c = 0; c < v.C; ++c) out.at(t, y, x, c) = bilinear(v, t, yy, xx, c);
      }
  return out;
}

/// Multi-scale crop: each side is scaled independently by a factor drawn from
/// [scale_min, scale_max], the window is placed uniformly, then resized back.
inline VideoClip multiscale_crop(const VideoClip& v, double scale_min, double scale_max, Rng& rng) {
  std::uniform_real_distribution<double> scale(scale_min, scale_max);
  const float ch = static_cast<float>(scale(rng) * v.H), cw = static_cast<float>(scale(rng) * v.W);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const float y0 = static_cast<float>(u(rng)) * (static_cast<float>(v.H) - ch);
  const float x0 = static_cast<float>(u(rng)) * (static_cast<float>(v.W) - cw);
  return crop_resize(v, y0, x0, ch, cw);
}

inline VideoClip hflip(const VideoClip& v) {
  VideoClip out = v;
  for (int t = 0; t < v.T; ++t)
    for (int y = 0; y < v.H; ++y)
      for (int x = 0; x < v.W; ++x)
        for (int c = 0; c < v.C; ++c) out.at(t, y, x, c) = v.at(t, y, v.W - 1 - x, c);
  return out;
}

/// Applies the configured crop/flip. Imported similarity maps refer to the
/// stored pixels, so augmentation is skipped when they are in use.
inline VideoClip augment(const VideoClip& v, const config::RunConfig& cfg, Rng& rng) {
  if (!cfg.mask.simmap_dir.empty()) return v;
  VideoClip out = cfg.train.crop_enabled
                      ? multiscale_crop(v, cfg.train.crop_scale_min, cfg.train.crop_scale_max, rng)
                      : v;
  if (cfg.train.flip_enabled && std::bernoulli_distribution(0.5)(rng)) out = hflip(out);
  return out;
}

// ---------------------------------------------------------------------------
// Samples

template <typename T>
struct PretrainSample {
  int index = -1;
  Mat<T> cubes;    // [L x P] model input
  Mat<T> targets;  // [L x P] reconstruction targets
  BinaryMask mask;
  masking::MaskedPartition part;
  Mat<T> text;     // [1 x D_text]
  std::string caption;
};

inline std::string simmap_filename(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "simmap_%05d.tgms", i);
  return buf;
}

/// Builds the similarity map a text-guided mask needs for one clip.
inline SimilarityMap similarity_for(const synthgen::Corpus& corpus, int idx, const VideoClip& video,
                                    const std::string& caption, const config::RunConfig& cfg,
                                    const synthgen::Embedder& embedder, Rng& rng) {
  const Grid g = videocore::grid_for(video, cfg.patch);
  if (!cfg.mask.simmap_dir.empty())
    return synthgen::import_similarity_map(
        (std::filesystem::path(cfg.mask.simmap_dir) / simmap_filename(idx)).string(), g);
  return synthgen::compute_similarity_map(embedder, video, corpus.scenes[static_cast<std::size_t>(idx)],
                                          caption, cfg.patch, static_cast<float>(cfg.mask.embed_sigma),
                                          rng);
}

template <typename T>
PretrainSample<T> build_sample(const synthgen::Corpus& corpus, int idx, const config::RunConfig& cfg,
                               const synthgen::Embedder& embedder, Rng& rng, bool augmented = true) {
  const auto u = static_cast<std::size_t>(idx);
  PretrainSample<T> s;
  s.index = idx;
  const VideoClip video = augmented ? augment(corpus.videos.at(u), cfg, rng) : corpus.videos.at(u);
  s.caption = synthgen::sample_caption(corpus.captions.at(u), rng, cfg.mask.single_caption);
  s.text = embedder.embed_text(s.caption).transpose().template cast<T>();
  const Grid g = videocore::grid_for(video, cfg.patch);
  std::optional<SimilarityMap> sim;
  if (masking::needs_similarity(cfg.mask.algorithm))
    sim = similarity_for(corpus, idx, video, s.caption, cfg, embedder, rng);
  const masking::MaskContext ctx{&video, &cfg.patch, sim ? &*sim : nullptr};
  s.mask = masking::make_mask({cfg.mask.algorithm, cfg.mask.gamma}, g, ctx, rng);
  s.part = masking::partition(s.mask);
  s.cubes = videocore::extract_cubes<T>(video, cfg.patch);
  s.targets = cfg.loss.norm_pix ? videocore::normalize_targets<T>(video, cfg.patch).values
                                : videocore::raw_targets<T>(video, cfg.patch).values;
  return s;
}

// ---------------------------------------------------------------------------
// Objective

struct ObjectiveOptions {
  bool contrastive = false;
  double lambda = 1.0;
  double tau = 0.07;
  losses::MseSupport support = losses::MseSupport::Masked;
  double drop_path = 0.0;
  Rng* rng = nullptr;           // drop-path draws
  bool backward = true;
  bool update_running = true;   // batch-norm running statistics
};

inline ObjectiveOptions objective_options(const config::RunConfig& cfg) {
  ObjectiveOptions o;
  o.contrastive = cfg.loss.contrastive;
  o.lambda = cfg.loss.lambda;
  o.tau = cfg.loss.tau;
  o.support = cfg.loss.mse_support;
  return o;
}

/// Batch loss: mean masked MSE over samples plus, when enabled, lambda times
/// the symmetric InfoNCE between projected pooled encoder outputs and caption
/// embeddings. Gradients accumulate into the model parameters. The
/// contrastive value is computed for every batch of >= 2 samples as a
/// diagnostic.
template <typename T>
losses::LossReport batch_objective(model::VideoMAE<T>& m, const std::vector<PretrainSample<T>>& batch,
                                   const ObjectiveOptions& opt) {
  const auto B = static_cast<Eigen::Index>(batch.size());
  if (B == 0) throw std::invalid_argument("empty batch");
  if (opt.contrastive && B < 2) throw ConfigError("contrastive loss needs batch_size >= 2");

  std::vector<model::EncoderCache<T>> enc(batch.size());
  std::vector<model::DecoderCache<T>> dec(batch.size());
  std::vector<Mat<T>> dpred(batch.size());
  Mat<T> pooled(B, m.config().D);
  model::EncodeOptions eo{opt.drop_path, opt.rng};
  double mse = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = batch[b];
    const Mat<T> e = m.encode(s.cubes, s.part.visible, enc[b], eo);
    pooled.row(static_cast<Eigen::Index>(b)) = model::VideoMAE<T>::mean_pool(e);
    const Mat<T> pred = m.decode(e, s.part, dec[b]);
    mse += static_cast<double>(
        losses::masked_mse(pred, s.targets, s.part, opt.backward ? &dpred[b] : nullptr, opt.support));
  }
  mse /= static_cast<double>(B);

  double nce = 0.0;
  Mat<T> dpooled;
  if (B >= 2) {
    Mat<T> text(B, batch[0].text.cols());
    for (Eigen::Index b = 0; b < B; ++b) text.row(b) = batch[static_cast<std::size_t>(b)].text;
    model::HeadCache<T> hc;
    const bool grads = opt.backward && opt.contrastive && opt.lambda != 0.0;
    const Mat<T> v = m.proj_head.forward(pooled, hc, true, opt.update_running && opt.contrastive);
    Mat<T> tpre;
    std::vector<T> tnorms;
    const Mat<T> t = m.text_features(text, &tpre, &tnorms);
    Mat<T> dv, dt;
    nce = static_cast<double>(losses::symmetric_nce<T>(v, t, static_cast<T>(opt.tau),
                                                       grads ? &dv : nullptr, grads ? &dt : nullptr));
    if (grads) {
      const T lam = static_cast<T>(opt.lambda);
      dpooled = m.proj_head.backward(dv * lam, hc);
      if (m.config().text_head)
        m.text_head.backward(text, nn::l2_normalize_backward(t, tnorms, Mat<T>(dt * lam)));
    }
  }

  if (opt.backward) {
    const T inv_b = T(1) / static_cast<T>(B);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      Mat<T> de = m.decode_backward(dpred[b] * inv_b, dec[b]);
      if (dpooled.size() > 0)
        de.rowwise() += dpooled.row(static_cast<Eigen::Index>(b)) / static_cast<T>(de.rows());
      m.encode_backward(de, enc[b]);
    }
  }
  return losses::combine(mse, nce, opt.lambda, opt.contrastive);
}

// ---------------------------------------------------------------------------
// Step bookkeeping

struct LogRow {
  long step = 0;
  double l_mse = 0, l_nce = 0, nce_diagnostic = 0, lr = 0, wall_ms = 0;
};

inline constexpr const char* kLogHeader = "step,l_mse,l_nce,nce_diagnostic,lr,wall_ms";

inline std::string format_row(const LogRow& r) {
  std::ostringstream os;
  os << r.step << std::setprecision(9) << ',' << r.l_mse << ',' << r.l_nce << ',' << r.nce_diagnostic
     << ',' << r.lr << ',' << std::setprecision(6) << r.wall_ms;
  return os.str();
}

struct Plan {
  int batch = 1;
  long steps_per_epoch = 1;
  long total_steps = 1;
  long warmup_steps = 0;
};

/// Batch size is capped at the corpus size; an epoch is floor(N / batch)
/// steps. With `steps` set, warmup keeps the warmup_epochs / epochs ratio.
inline Plan make_plan(const config::TrainConfig& t, int corpus_size) {
  Plan p;
  p.batch = std::min(t.batch_size, corpus_size);
  p.steps_per_epoch = std::max<long>(1, corpus_size / p.batch);
  if (t.steps > 0) {
    p.total_steps = t.steps;
    const double frac = t.epochs > 0 ? static_cast<double>(t.warmup_epochs) / t.epochs : 0.0;
    p.warmup_steps = static_cast<long>(std::floor(frac * static_cast<double>(t.steps)));
  } else {
    p.total_steps = static_cast<long>(t.epochs) * p.steps_per_epoch;
    p.warmup_steps = static_cast<long>(t.warmup_epochs) * p.steps_per_epoch;
  }
  return p;
}

/// Corpus indices of the batch used at `step`: an epoch-wise seeded
/// permutation, sliced consecutively.
inline std::vector<int> batch_indices(const Plan& plan, int corpus_size, std::uint64_t seed, long step) {
  const long epoch = step / plan.steps_per_epoch;
  const long pos = step % plan.steps_per_epoch;
  std::vector<int> perm(static_cast<std::size_t>(corpus_size));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch), 7));
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto first = perm.begin() + pos * plan.batch;
  return {first, first + plan.batch};
}

inline std::uint64_t model_init_seed(const config::RunConfig& cfg) {
  return derive_seed(cfg.train.seed, cfg.model.init_seed, 5);
}

struct PretrainOptions {
  std::filesystem::path out_dir;  // empty = no files written
  bool dump_masks = false;        // masks.bin: per sample u32 step, u32 video, mask bytes
  bool write_checkpoint = true;
  std::function<void(const LogRow&)> on_step;
};

template <typename T>
struct PretrainResult {
  model::VideoMAE<T> model;
  std::vector<LogRow> log;
  Plan plan;
};

namespace detail {

template <typename T>
void dump_nonfinite(const std::filesystem::path& dir, long step, const losses::LossReport& r,
                    const std::vector<int>& idx, double lr, model::VideoMAE<T>& m) {
  std::ostringstream os;
  os << "non-finite loss at step " << step << "\nl_mse " << r.l_mse << "\nl_nce " << r.l_nce << "\nlr "
     << lr << "\nbatch";
  for (int i : idx) os << ' ' << i;
  os << "\n";
  for (auto* p : m.parameters())
    os << p->name << " |w| " << p->value.norm() << " |g| " << p->grad.norm() << "\n";
  if (!dir.empty()) {
    std::ofstream(dir / "nonfinite_dump.txt") << os.str();
  }
  throw std::runtime_error("non-finite loss at step " + std::to_string(step) +
                           (dir.empty() ? "" : "; diagnostics in " + (dir / "nonfinite_dump.txt").string()));
}

}  // namespace detail

/// Self-supervised pretraining on `corpus`. Writes loss.csv and
/// checkpoint.tgmc under out_dir when one is given.
template <typename T = float>
PretrainResult<T> pretrain(const synthgen::Corpus& corpus, const config::RunConfig& cfg,
                           const PretrainOptions& opts = {}) {
  cfg.validate();
  if (corpus.size() == 0) throw ConfigError("corpus is empty");
  const Plan plan = make_plan(cfg.train, corpus.size());
  if (cfg.loss.contrastive && plan.batch < 2)
    throw ConfigError("contrastive pretraining needs batch_size >= 2");

  model::ModelConfig mc = cfg.model_config();
  mc.init_seed = model_init_seed(cfg);
  mc.num_classes = 0;
  PretrainResult<T> res{model::VideoMAE<T>(mc), {}, plan};
  auto& m = res.model;

  const auto [b1, b2] = cfg.train.pretrain_betas();
  optim::AdamW<T> opt(m.parameters(), {b1, b2, 1e-8, cfg.train.weight_decay, cfg.train.grad_clip});
  const optim::Schedule sched{optim::effective_lr(cfg.train.pretrain_base_lr(), plan.batch), cfg.train.min_lr,
                              plan.warmup_steps, plan.total_steps};
  const synthgen::Embedder embedder;
  ObjectiveOptions oo = objective_options(cfg);

  std::ofstream csv, masks;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    csv.open(opts.out_dir / "loss.csv", std::ios::trunc);
    if (!csv) throw FormatError("cannot write " + (opts.out_dir / "loss.csv").string());
    csv << kLogHeader << '\n';
    if (opts.dump_masks) masks.open(opts.out_dir / "masks.bin", std::ios::binary | std::ios::trunc);
  }

  const auto t0 = std::chrono::steady_clock::now();
  for (long step = 0; step < plan.total_steps; ++step) {
    const std::vector<int> idx = batch_indices(plan, corpus.size(), cfg.train.seed, step);
    std::vector<PretrainSample<T>> batch;
    for (std::size_t b = 0; b < idx.size(); ++b) {
      Rng rng(derive_seed(derive_seed(cfg.train.seed, static_cast<std::uint64_t>(step), 11), b));
      batch.push_back(build_sample<T>(corpus, idx[b], cfg, embedder, rng));
      if (masks.is_open()) {
        std::string rec;
        videocore::detail::put_u32(rec, static_cast<std::uint32_t>(step));
        videocore::detail::put_u32(rec, static_cast<std::uint32_t>(idx[b]));
        rec.append(batch.back().mask.bits.begin(), batch.back().mask.bits.end());
        masks.write(rec.data(), static_cast<std::streamsize>(rec.size()));
      }
    }
    Rng drop_rng(derive_seed(cfg.train.seed, static_cast<std::uint64_t>(step), 13));
    oo.drop_path = 0.0;  // stochastic depth is a finetuning regularizer
    oo.rng = &drop_rng;

    m.zero_grad();
    const losses::LossReport r = batch_objective(m, batch, oo);
    const double lr = sched.lr_at(step);
    if (!std::isfinite(r.total) || !std::isfinite(r.nce_diagnostic))
      detail::dump_nonfinite(opts.out_dir, step, r, idx, lr, m);
    opt.step(lr);

    LogRow row{step, r.l_mse, cfg.loss.contrastive ? r.l_nce : 0.0, r.nce_diagnostic, lr,
               std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count()};
    res.log.push_back(row);
    if (csv.is_open()) csv << format_row(row) << '\n';
    if (opts.on_step) opts.on_step(row);
    if (!opts.out_dir.empty() && opts.write_checkpoint && cfg.train.checkpoint_every > 0 &&
        (step + 1) % cfg.train.checkpoint_every == 0 && step + 1 < plan.total_steps) {
      char name[48];
      std::snprintf(name, sizeof name, "checkpoint_step%06ld.tgmc", step + 1);
      checkpoint::save(m, (opts.out_dir / name).string(), cfg, {{"step", std::to_string(step + 1)}});
    }
  }
  if (!opts.out_dir.empty() && opts.write_checkpoint)
    checkpoint::save(m, (opts.out_dir / "checkpoint.tgmc").string(), cfg,
                     {{"step", std::to_string(plan.total_steps)},
                      {"corpus_hash", hex64(checkpoint::corpus_hash(corpus))}});
  return res;
}

/// Mean masked MSE of `m` over the whole corpus with fixed (unaugmented)
/// samples; no parameter or running-statistic changes.
template <typename T>
double evaluate_mse(model::VideoMAE<T>& m, const synthgen::Corpus& corpus, const config::RunConfig& cfg,
                    std::uint64_t seed) {
  const synthgen::Embedder embedder;
  ObjectiveOptions oo = objective_options(cfg);
  oo.contrastive = false;
  oo.backward = false;
  oo.update_running = false;
  double sum = 0.0;
  for (int i = 0; i < corpus.size(); ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i), 19));
    std::vector<PretrainSample<T>> one{build_sample<T>(corpus, i, cfg, embedder, rng, false)};
    sum += batch_objective(m, one, oo).l_mse;
  }
  return sum / corpus.size();
}

// ---------------------------------------------------------------------------
// Finetuning

/// Pooled encoder features of full unmasked clips, one row per clip.
template <typename T>
Mat<T> extract_features(const model::VideoMAE<T>& m, const std::vector<VideoClip>& videos,
                        const videocore::PatchConfig& patch) {
  Mat<T> f(static_cast<Eigen::Index>(videos.size()), m.config().D);
  for (std::size_t i = 0; i < videos.size(); ++i)
    f.row(static_cast<Eigen::Index>(i)) = m.features(videocore::extract_cubes<T>(videos[i], patch));
  return f;
}

template <typename T>
double classifier_accuracy(const model::VideoMAE<T>& m, const synthgen::Corpus& corpus,
                           const videocore::PatchConfig& patch) {
  int hit = 0;
  for (int i = 0; i < corpus.size(); ++i) {
    const RowVec<T> f = m.features(videocore::extract_cubes<T>(corpus.videos[static_cast<std::size_t>(i)], patch));
    const Mat<T> logits = m.classifier.forward(Mat<T>(f));
    Eigen::Index arg;
    logits.row(0).maxCoeff(&arg);
    hit += static_cast<int>(arg) == corpus.labels[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hit) / corpus.size();
}

struct FinetuneRow {
  long step = 0;
  double loss = 0, lr = 0;
};

template <typename T>
struct FinetuneResult {
  model::VideoMAE<T> model;
  std::vector<FinetuneRow> log;
  double train_accuracy = 0.0;
  std::vector<double> layer_multipliers;
};

inline void check_labels(const synthgen::Corpus& corpus, int classes) {
  if (static_cast<int>(corpus.labels.size()) != corpus.size())
    throw ConfigError("label file does not match the corpus size");
  for (int y : corpus.labels)
    if (y < 0 || y >= classes)
      throw ConfigError("label " + std::to_string(y) + " outside the " + std::to_string(classes) +
                        " classes of the label map");
}

/// Supervised finetuning of the encoder plus a new linear classifier with
/// layer-wise lr decay and stochastic depth.
template <typename T = float>
FinetuneResult<T> finetune(model::VideoMAE<T> m, const synthgen::Corpus& corpus, const config::RunConfig& cfg,
                           const std::filesystem::path& out_dir = {}) {
  cfg.validate();
  const int classes = synthgen::num_classes(corpus.label_map);
  check_labels(corpus, classes);
  m.add_classifier(classes);
  const Plan plan = make_plan(cfg.train, corpus.size());

  nn::ParamList<T> params = m.encoder_parameters();
  m.classifier.collect(params);
  const auto [b1, b2] = cfg.train.finetune_betas();
  const int n = m.config().depth;
  optim::AdamW<T> opt(params, {b1, b2, 1e-8, cfg.train.weight_decay, cfg.train.grad_clip}, n,
                      cfg.train.layer_decay);
  const optim::Schedule sched{optim::effective_lr(cfg.train.finetune_base_lr(), plan.batch), cfg.train.min_lr,
                              plan.warmup_steps, plan.total_steps};

  std::ofstream csv;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    csv.open(out_dir / "finetune.csv", std::ios::trunc);
    csv << "step,loss,lr\n";
  }
  FinetuneResult<T> res{std::move(m), {}, 0.0, optim::layerwise_multipliers(n, cfg.train.layer_decay)};
  auto& model = res.model;
  for (long step = 0; step < plan.total_steps; ++step) {
    const std::vector<int> idx = batch_indices(plan, corpus.size(), cfg.train.seed ^ 0xf17eULL, step);
    const auto B = static_cast<Eigen::Index>(idx.size());
    std::vector<model::EncoderCache<T>> caches(idx.size());
    Mat<T> pooled(B, model.config().D);
    std::vector<int> labels;
    Rng drop_rng(derive_seed(cfg.train.seed, static_cast<std::uint64_t>(step), 23));
    for (std::size_t b = 0; b < idx.size(); ++b) {
      Rng rng(derive_seed(derive_seed(cfg.train.seed, static_cast<std::uint64_t>(step), 29), b));
      const VideoClip v = augment(corpus.videos[static_cast<std::size_t>(idx[b])], cfg, rng);
      pooled.row(static_cast<Eigen::Index>(b)) =
          model.features(videocore::extract_cubes<T>(v, cfg.patch), &caches[b], {cfg.train.drop_path, &drop_rng});
      labels.push_back(corpus.labels[static_cast<std::size_t>(idx[b])]);
    }
    for (auto* p : params) p->zero_grad();
    Mat<T> dlogits;
    const T loss = nn::cross_entropy(model.classifier.forward(pooled), labels, &dlogits);
    if (!std::isfinite(static_cast<double>(loss)))
      throw std::runtime_error("non-finite finetuning loss at step " + std::to_string(step));
    const Mat<T> dpooled = model.classifier.backward(pooled, dlogits);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const auto rows = caches[b].out.rows();
      Mat<T> de = dpooled.row(static_cast<Eigen::Index>(b)).replicate(rows, 1) / static_cast<T>(rows);
      model.encode_backward(de, caches[b]);
    }
    const double lr = sched.lr_at(step);
    opt.step(lr);
    res.log.push_back({step, static_cast<double>(loss), lr});
    if (csv.is_open()) csv << step << ',' << std::setprecision(9) << loss << ',' << lr << '\n';
  }
  res.train_accuracy = classifier_accuracy(model, corpus, cfg.patch);
  return res;
}

}  // namespace tgm::trainer
