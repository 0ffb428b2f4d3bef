#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "tgm/checkpoint.hpp"
#include "tgm/eval.hpp"
#include "tgm/viz.hpp"

using namespace tgm;
using tgm::testing::TempDir;

namespace {

config::RunConfig tiny_config() {
  config::RunConfig c;
  config::apply_text(c, R"(
data.frames = 4
data.height = 16
data.width = 16
patch.t = 2
patch.h = 8
patch.w = 8
model.D = 16
model.depth = 1
model.heads = 2
model.decoder_D = 16
model.decoder_depth = 1
model.decoder_heads = 2
model.mlp_ratio = 2
model.D_proj = 16
model.proj_hidden = 16
mask.gamma = 0.5
batch_size = 4
epochs = 2
warmup_epochs = 1
base_lr = 0.05
probe.epochs = 20
)");
  return c;
}

synthgen::Corpus tiny_corpus(const config::RunConfig& c, int n, std::uint64_t seed = 1) {
  return synthgen::generate_corpus(n, seed, c.scene_distribution(), c.patch);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<double>> numeric_rows(const std::filesystem::path& p) {
  std::vector<std::vector<double>> out;
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) row.push_back(std::stod(f));
    out.push_back(row);
  }
  return out;
}

}  // namespace

TEST(Config, ParsesKeyValueText) {
  config::RunConfig c;
  config::apply_text(c, "# comment\nmask.algorithm = text-bottom  # trailing\n\nbetas = 0.8, 0.9\nloss.contrastive=true\n");
  EXPECT_EQ(c.mask.algorithm, masking::MaskAlgorithm::TextBottom);
  ASSERT_TRUE(c.train.betas.has_value());
  EXPECT_EQ(c.train.betas->first, 0.8);
  EXPECT_EQ(c.train.betas->second, 0.9);
  EXPECT_TRUE(c.loss.contrastive);
  EXPECT_EQ(c.train.pretrain_base_lr(), 1.5e-4);
  EXPECT_EQ(c.train.finetune_base_lr(), 5e-4);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  config::RunConfig c;
  EXPECT_THROW(config::apply_text(c, "mask.gama = 0.5\n"), ConfigError);
  EXPECT_THROW(config::apply_text(c, "batch_size = many\n"), ConfigError);
  EXPECT_THROW(config::apply_text(c, "batch_size = 3.5\n"), ConfigError);
  EXPECT_THROW(config::apply_text(c, "loss.contrastive = maybe\n"), ConfigError);
  EXPECT_THROW(config::apply_text(c, "just words\n"), ConfigError);
  EXPECT_THROW(config::apply_override(c, "mask.algorithm=spiral"), ConfigError);
  EXPECT_THROW(config::load_file("/nonexistent/tgm.conf"), ConfigError);
}

TEST(Config, ValidateCatchesInconsistentValues) {
  auto c = tiny_config();
  EXPECT_NO_THROW(c.validate());
  auto bad = c;
  bad.mask.gamma = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.data.height = 20;
  EXPECT_THROW(bad.validate(), DimensionError);
  bad = c;
  bad.model.heads = 3;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.train.warmup_epochs = 2;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Config, TextRoundTrip) {
  auto c = tiny_config();
  c.mask.algorithm = masking::MaskAlgorithm::Motion;
  c.train.betas = std::pair{0.85, 0.99};
  config::RunConfig back;
  config::apply_text(back, config::to_text(c));
  EXPECT_EQ(config::to_pairs(back), config::to_pairs(c));
}

TEST(Augment, FlipAndFullCropAreExact) {
  const auto v = tgm::testing::random_video(2, 6, 8, 3);
  EXPECT_EQ(trainer::hflip(trainer::hflip(v)).data, v.data);
  EXPECT_EQ(trainer::hflip(v).at(1, 2, 0, 1), v.at(1, 2, 7, 1));
  const auto same = trainer::crop_resize(v, 0.f, 0.f, 6.f, 8.f);
  for (std::size_t i = 0; i < v.data.size(); ++i) EXPECT_NEAR(same.data[i], v.data[i], 1e-6f);
  Rng rng(4);
  const auto crop = trainer::multiscale_crop(v, 0.5, 0.9, rng);
  EXPECT_EQ(crop.T, v.T);
  EXPECT_EQ(crop.H, v.H);
  EXPECT_EQ(crop.W, v.W);
}

TEST(Checkpoint, RoundTripRestoresEveryTensor) {
  TempDir dir("ckpt");
  auto cfg = tiny_config();
  cfg.model.text_head = true;
  model::VideoMAE<float> m(cfg.model_config());
  m.proj_head.bn.running_mean.setConstant(0.25f);
  m.proj_head.bn.running_var.setConstant(2.5f);
  m.mask_token.value.setConstant(0.125f);
  const std::string path = dir.str("m.tgmc");
  checkpoint::save(m, path, cfg, {{"note", "x"}});
  const auto loaded = checkpoint::load<float>(path, &cfg);
  auto& lm = const_cast<model::VideoMAE<float>&>(loaded.model);
  auto a = m.parameters(), b = lm.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i]->name, b[i]->name);
    EXPECT_EQ(a[i]->value, b[i]->value) << a[i]->name;
  }
  EXPECT_EQ(lm.proj_head.bn.running_mean, m.proj_head.bn.running_mean);
  EXPECT_EQ(lm.proj_head.bn.running_var, m.proj_head.bn.running_var);
  EXPECT_EQ(loaded.manifest.at("note"), "x");
  EXPECT_EQ(loaded.manifest.at("content_hash"), hex64(checkpoint::config_hash(cfg)));
  EXPECT_EQ(config::to_pairs(loaded.config), config::to_pairs(cfg));
}

TEST(Checkpoint, ArchitectureMismatchNeedsForce) {
  TempDir dir("ckpt_mismatch");
  auto cfg = tiny_config();
  model::VideoMAE<float> m(cfg.model_config());
  checkpoint::save(m, dir.str("m.tgmc"), cfg);
  auto other = cfg;
  other.model.D = 32;
  try {
    checkpoint::load<float>(dir.str("m.tgmc"), &other);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.D"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("--force"), std::string::npos);
  }
  EXPECT_NO_THROW(checkpoint::load<float>(dir.str("m.tgmc"), &other, true));
  auto lr_only = cfg;
  lr_only.train.base_lr = 1.0;
  EXPECT_NO_THROW(checkpoint::load<float>(dir.str("m.tgmc"), &lr_only));
}

TEST(Checkpoint, CorruptBlobIsFormatError) {
  TempDir dir("ckpt_corrupt");
  auto cfg = tiny_config();
  model::VideoMAE<float> m(cfg.model_config());
  checkpoint::save(m, dir.str("m.tgmc"), cfg);
  const std::string bytes = slurp(dir.path() / "m.tgmc");
  std::ofstream(dir.path() / "m.tgmc", std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() / 2);
  EXPECT_THROW(checkpoint::load<float>(dir.str("m.tgmc")), FormatError);
}

TEST(Pretrain, ContrastiveNeedsTwoSamples) {
  auto cfg = tiny_config();
  cfg.loss.contrastive = true;
  cfg.train.batch_size = 1;
  EXPECT_THROW(trainer::pretrain<float>(tiny_corpus(cfg, 4), cfg), ConfigError);
  cfg.loss.contrastive = false;
  const auto r = trainer::pretrain<float>(tiny_corpus(cfg, 2), cfg);
  for (const auto& row : r.log) EXPECT_EQ(row.nce_diagnostic, 0.0);
}

TEST(Pretrain, PlanFollowsEpochsAndSteps) {
  config::TrainConfig t;
  t.batch_size = 8;
  t.epochs = 10;
  t.warmup_epochs = 2;
  auto p = trainer::make_plan(t, 20);
  EXPECT_EQ(p.batch, 8);
  EXPECT_EQ(p.steps_per_epoch, 2);
  EXPECT_EQ(p.total_steps, 20);
  EXPECT_EQ(p.warmup_steps, 4);
  t.steps = 100;
  p = trainer::make_plan(t, 20);
  EXPECT_EQ(p.total_steps, 100);
  EXPECT_EQ(p.warmup_steps, 20);
  EXPECT_EQ(trainer::make_plan(t, 5).batch, 5);
}

TEST(Pretrain, IdenticalRunsAreDeterministic) {
  TempDir a("det_a"), b("det_b");
  auto cfg = tiny_config();
  cfg.loss.contrastive = true;
  cfg.mask.algorithm = masking::MaskAlgorithm::TextTop;
  const auto corpus = tiny_corpus(cfg, 8);
  trainer::PretrainOptions oa{a.path(), true, true, {}}, ob{b.path(), true, true, {}};
  trainer::pretrain<float>(corpus, cfg, oa);
  trainer::pretrain<float>(corpus, cfg, ob);
  const auto ra = numeric_rows(a.path() / "loss.csv"), rb = numeric_rows(b.path() / "loss.csv");
  ASSERT_EQ(ra.size(), rb.size());
  ASSERT_FALSE(ra.empty());
  for (std::size_t i = 0; i < ra.size(); ++i)
    for (std::size_t k = 0; k + 1 < ra[i].size(); ++k) EXPECT_NEAR(ra[i][k], rb[i][k], 1e-6);
  const std::string ma = slurp(a.path() / "masks.bin");
  EXPECT_FALSE(ma.empty());
  EXPECT_EQ(ma, slurp(b.path() / "masks.bin"));
  EXPECT_EQ(slurp(a.path() / "checkpoint.tgmc"), slurp(b.path() / "checkpoint.tgmc"));
}

TEST(Pretrain, LossDecreasesOnTinyCorpus) {
  auto cfg = tiny_config();
  cfg.train.crop_enabled = false;
  cfg.train.epochs = 30;
  cfg.train.warmup_epochs = 3;
  const auto r = trainer::pretrain<float>(tiny_corpus(cfg, 8), cfg);
  double first = 0, last = 0;
  for (int i = 0; i < 5; ++i) {
    first += r.log[static_cast<std::size_t>(i)].l_mse;
    last += r.log[r.log.size() - 1 - static_cast<std::size_t>(i)].l_mse;
  }
  EXPECT_LT(last, first);
}

TEST(Objective, ZeroLambdaLeavesHeadGradientZero) {
  auto cfg = tiny_config();
  model::VideoMAE<double> m(cfg.model_config());
  const auto corpus = tiny_corpus(cfg, 4);
  const synthgen::Embedder e;
  std::vector<trainer::PretrainSample<double>> batch;
  for (int i = 0; i < 4; ++i) {
    Rng rng(static_cast<std::uint64_t>(i));
    batch.push_back(trainer::build_sample<double>(corpus, i, cfg, e, rng));
  }
  trainer::ObjectiveOptions o;
  o.contrastive = true;
  o.lambda = 0.0;
  m.zero_grad();
  const auto r = trainer::batch_objective(m, batch, o);
  EXPECT_EQ(r.total, r.l_mse);
  EXPECT_GT(r.l_nce, 0.0);
  for (auto* p : m.parameters())
    if (p->name.rfind("proj_head", 0) == 0) EXPECT_EQ(p->grad.cwiseAbs().maxCoeff(), 0.0) << p->name;
}

TEST(Objective, EvaluateMseIsReadOnly) {
  auto cfg = tiny_config();
  model::VideoMAE<float> m(cfg.model_config());
  const auto h = m.encoder_checksum();
  const auto mean = m.proj_head.bn.running_mean;
  const auto corpus = tiny_corpus(cfg, 4);
  const double a = trainer::evaluate_mse(m, corpus, cfg, 3);
  EXPECT_EQ(a, trainer::evaluate_mse(m, corpus, cfg, 3));
  EXPECT_EQ(m.encoder_checksum(), h);
  EXPECT_EQ(m.proj_head.bn.running_mean, mean);
}

TEST(Probe, EncoderIsFrozen) {
  auto cfg = tiny_config();
  model::VideoMAE<float> m(cfg.model_config());
  const auto corpus = tiny_corpus(cfg, 40);
  const auto r = eval::linear_probe(m, corpus, cfg.probe, 5);
  EXPECT_EQ(r.checksum_before, r.checksum_after);
  EXPECT_EQ(r.train_size, 30);
  EXPECT_EQ(r.test_size, 10);
  EXPECT_GE(r.top1, 0.0);
  EXPECT_LE(r.top1, 1.0);
  const auto again = eval::linear_probe(m, corpus, cfg.probe, 5);
  EXPECT_EQ(again.top1, r.top1);
}

TEST(Probe, SeparableFeaturesAreLearned) {
  Mat<double> x(60, 3);
  std::vector<int> y;
  Rng rng(6);
  std::normal_distribution<double> n01;
  for (int i = 0; i < 60; ++i) {
    y.push_back(i % 3);
    for (int d = 0; d < 3; ++d) x(i, d) = (d == i % 3 ? 5.0 : 0.0) + 0.3 * n01(rng);
  }
  config::ProbeConfig pc;
  pc.epochs = 50;
  pc.lr = 0.05;
  const auto c = eval::train_linear(x, y, 3, pc, 1);
  EXPECT_EQ(eval::accuracy(c.predict(x), y), 1.0);
}

TEST(Probe, SplitIsAPartition) {
  const auto [tr, te] = eval::split_indices(20, 0.75, 3);
  EXPECT_EQ(tr.size(), 15u);
  EXPECT_EQ(te.size(), 5u);
  std::vector<int> all = tr;
  all.insert(all.end(), te.begin(), te.end());
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 20; ++i) EXPECT_EQ(all[static_cast<std::size_t>(i)], i);
}

TEST(Finetune, UpdatesEncoderAndAppliesLayerDecay) {
  auto cfg = tiny_config();
  cfg.train.epochs = 2;
  cfg.train.warmup_epochs = 1;
  cfg.train.base_lr = 0.01;
  model::VideoMAE<float> m(cfg.model_config());
  const auto before = m.encoder_checksum();
  const auto corpus = tiny_corpus(cfg, 8);
  auto r = trainer::finetune<float>(m, corpus, cfg);
  EXPECT_NE(r.model.encoder_checksum(), before);
  EXPECT_TRUE(r.model.has_classifier());
  EXPECT_EQ(r.model.classifier.out_features(), 5);
  ASSERT_EQ(r.layer_multipliers.size(), 3u);
  EXPECT_DOUBLE_EQ(r.layer_multipliers[0], 0.75 * 0.75);
  for (const auto& row : r.log) EXPECT_TRUE(std::isfinite(row.loss));
  EXPECT_GE(r.train_accuracy, 0.0);
}

TEST(Finetune, RejectsOutOfRangeLabels) {
  auto cfg = tiny_config();
  auto corpus = tiny_corpus(cfg, 4);
  corpus.labels[2] = 9;
  EXPECT_THROW(trainer::finetune<float>(model::VideoMAE<float>(cfg.model_config()), corpus, cfg), ConfigError);
}

TEST(Multiview, OffsetsAndPassCount) {
  EXPECT_EQ(eval::view_offsets(8, 4, 1), std::vector<int>{2});
  EXPECT_EQ(eval::view_offsets(8, 4, 3), (std::vector<int>{0, 2, 4}));
  EXPECT_EQ(eval::view_offsets(4, 4, 2), (std::vector<int>{0, 0}));
  EXPECT_THROW(eval::view_offsets(3, 4, 1), DimensionError);
  auto cfg = tiny_config();
  model::VideoMAE<float> m(cfg.model_config());
  m.add_classifier(5);
  const auto long_clip = tgm::testing::random_video(12, 16, 24, 7);
  EXPECT_EQ(eval::multiview_infer(m, long_clip, {5, 3}).passes, 15);
  EXPECT_EQ(eval::multiview_infer(m, long_clip, {2, 1}).passes, 2);
}

TEST(Multiview, SingleViewEqualsPlainClassifier) {
  auto cfg = tiny_config();
  model::VideoMAE<float> m(cfg.model_config());
  m.add_classifier(5);
  const auto clip = tgm::testing::random_video(4, 16, 16, 8);
  const auto r = eval::multiview_infer(m, clip, {1, 1});
  const Mat<float> direct = m.classifier.forward(Mat<float>(m.features(videocore::extract_cubes<float>(clip, cfg.patch))));
  EXPECT_EQ(r.passes, 1);
  EXPECT_LT((r.logits - direct.row(0)).cwiseAbs().maxCoeff(), 1e-6f);
  model::VideoMAE<float> bare(cfg.model_config());
  EXPECT_THROW(eval::multiview_infer(bare, clip, {1, 1}), ConfigError);
}

TEST(Retrieval, IdenticalEmbeddingsRetrievePerfectly) {
  Mat<double> e = Mat<double>::Identity(6, 6);
  std::vector<std::string> caps{"a", "b", "c", "d", "e", "f"};
  const auto r = eval::retrieval_from_embeddings(e, e, caps, {1, 5});
  EXPECT_EQ(r.video_to_text.at(1), 1.0);
  EXPECT_EQ(r.text_to_video.at(1), 1.0);
  EXPECT_EQ(r.tied_queries, 0);
}

TEST(Retrieval, RecallIsMonotoneInK) {
  Rng rng(9);
  std::normal_distribution<double> n01;
  Mat<double> v(20, 4), t(20, 4);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v.data()[i] = n01(rng);
    t.data()[i] = n01(rng);
  }
  std::vector<std::string> caps;
  for (int i = 0; i < 20; ++i) caps.push_back(std::to_string(i));
  const auto r = eval::retrieval_from_embeddings(v, t, caps, {1, 2, 5, 10, 20});
  double prev = 0.0;
  for (const auto& [k, rec] : r.video_to_text) {
    EXPECT_GE(rec, prev);
    prev = rec;
  }
  EXPECT_EQ(r.video_to_text.at(20), 1.0);
}

TEST(Retrieval, DuplicateCaptionsCountAsHits) {
  Mat<double> v(3, 2), t(3, 2);
  v << 1, 0, 0, 1, 0, 1;
  t << 1, 0, 0, 1, 1, 0;  // clip 2's own text points elsewhere
  const auto strict = eval::retrieval_from_embeddings(v, t, {"x", "y", "z"}, {1});
  const auto dup = eval::retrieval_from_embeddings(v, t, {"x", "y", "y"}, {1});
  // clip 2 ranks text 1 first: a miss, unless both share a caption
  EXPECT_NEAR(strict.video_to_text.at(1), 2.0 / 3.0, 1e-12);
  EXPECT_EQ(dup.video_to_text.at(1), 1.0);
}

TEST(Retrieval, TieOrderFavoursLowerIndex) {
  Mat<double> v(2, 2), t(2, 2);
  v << 1, 0, 1, 0;
  t << 1, 0, 1, 0;
  const auto r = eval::retrieval_from_embeddings(v, t, {"a", "b"}, {1});
  EXPECT_EQ(r.video_ranks, (std::vector<int>{1, 2}));
  EXPECT_EQ(r.tied_queries, 4);
}

TEST(Retrieval, ChanceLevelMatchesCandidateCount) {
  std::vector<std::string> caps;
  for (int i = 0; i < 16; ++i) caps.push_back(std::to_string(i));
  EXPECT_NEAR(eval::chance_r_at_1(caps, 16, 400, 1), 1.0 / 16.0, 0.015);
  std::vector<std::string> pairs;
  for (int i = 0; i < 16; ++i) pairs.push_back(std::to_string(i / 2));
  EXPECT_GT(eval::chance_r_at_1(pairs, 16, 400, 1), 1.5 / 16.0);
}

TEST(Retrieval, ModelRetrievalIsWellFormed) {
  auto cfg = tiny_config();
  model::VideoMAE<float> m(cfg.model_config());
  const auto corpus = tiny_corpus(cfg, 10);
  for (bool raw : {false, true}) {
    const auto r = eval::retrieve(m, corpus, raw);
    EXPECT_EQ(r.similarity.rows(), 10);
    EXPECT_GE(r.video_to_text.at(5), r.video_to_text.at(1));
  }
}

TEST(Metrics, JsonHasNullsForMissingValues) {
  eval::Metrics m;
  m.top1 = 0.5;
  m.seed = 3;
  m.extra["chance_r_at_1"] = 0.1;
  const auto j = eval::to_json(m);
  EXPECT_EQ(j["top1"], 0.5);
  EXPECT_TRUE(j["r_at_1"].is_null());
  EXPECT_EQ(j["views"]["temporal"], 1);
  EXPECT_EQ(j["chance_r_at_1"], 0.1);
}

TEST(Plot, DeterministicSvg) {
  TempDir dir("plot");
  std::ofstream(dir.path() / "a.csv") << trainer::kLogHeader << "\n0,1,0,2.0,0,5\n1,0.9,0,1.5,0,9\n";
  std::ofstream(dir.path() / "b.csv") << trainer::kLogHeader << "\n0,1,0,2.2,0,1\n1,0.8,0,1.1,0,2\n";
  std::ostringstream w1, w2;
  const auto s1 = viz::plot_losses({dir.path() / "a.csv", dir.path() / "b.csv"}, {"A", "B"}, w1);
  const auto s2 = viz::plot_losses({dir.path() / "a.csv", dir.path() / "b.csv"}, {"A", "B"}, w2);
  EXPECT_EQ(s1, s2);
  EXPECT_EQ(std::count(s1.begin(), s1.end(), '\n') > 5, true);
  EXPECT_NE(s1.find("<polyline"), std::string::npos);
  EXPECT_NE(s1.find(">A<"), std::string::npos);
  EXPECT_TRUE(w1.str().empty());
}

TEST(Plot, EmptySeriesWarns) {
  TempDir dir("plot_empty");
  std::ofstream(dir.path() / "a.csv") << trainer::kLogHeader << "\n";
  std::ofstream(dir.path() / "b.csv") << trainer::kLogHeader << "\n0,1,0,2.0,0,5\n";
  std::ostringstream warn;
  const auto svg = viz::plot_losses({dir.path() / "a.csv", dir.path() / "b.csv"}, {"empty", "full"}, warn);
  EXPECT_NE(warn.str().find("empty"), std::string::npos);
  EXPECT_EQ(svg.find(">empty<"), std::string::npos);
  EXPECT_NE(svg.find(">full<"), std::string::npos);
}

TEST(Plot, MalformedCsvIsFormatError) {
  TempDir dir("plot_bad");
  std::ofstream(dir.path() / "fields.csv") << trainer::kLogHeader << "\n0,1,0\n";
  std::ofstream(dir.path() / "text.csv") << trainer::kLogHeader << "\n0,1,0,abc,0,5\n";
  std::ofstream(dir.path() / "cols.csv") << "step,loss\n0,1\n";
  std::ostringstream warn;
  for (const char* f : {"fields.csv", "text.csv", "cols.csv"})
    EXPECT_THROW(viz::plot_losses({dir.path() / f}, {}, warn), FormatError) << f;
  EXPECT_THROW(viz::plot_losses({dir.path() / "missing.csv"}, {}, warn), FormatError);
}

TEST(Viz, PanelsAndReconstruction) {
  TempDir dir("viz");
  auto cfg = tiny_config();
  model::VideoMAE<float> m(cfg.model_config());
  const auto corpus = tiny_corpus(cfg, 1);
  Rng rng(1);
  const auto mask = masking::tube_mask(corpus.grid(), 0.5, rng);
  const auto files = viz::write_mask_slices(dir.path(), 0, mask, cfg.patch);
  EXPECT_EQ(files.size(), 2u);
  const auto rec = viz::reconstruct(m, corpus.videos[0], mask, true);
  EXPECT_NO_THROW(rec.validate());
  const auto masked = viz::masked_input(corpus.videos[0], mask, cfg.patch);
  const auto part = masking::partition(mask);
  // visible cubes pass through unchanged
  const auto g = corpus.grid();
  for (int tok : part.visible) {
    const auto c = g.coords(tok);
    EXPECT_EQ(masked.at(c[0] * 2, c[1] * 8, c[2] * 8, 0), corpus.videos[0].at(c[0] * 2, c[1] * 8, c[2] * 8, 0));
  }
  for (int tok : part.masked) {
    const auto c = g.coords(tok);
    EXPECT_EQ(masked.at(c[0] * 2, c[1] * 8, c[2] * 8, 0), 0.5f);
  }
}
