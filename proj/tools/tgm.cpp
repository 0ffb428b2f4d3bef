// tgm: command-line driver for data generation, training, evaluation and
// figure output. Exit codes: 0 success, 1 runtime failure, 2 usage/config.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tgm/checkpoint.hpp"
#include "tgm/config.hpp"
#include "tgm/eval.hpp"
#include "tgm/trainer.hpp"
#include "tgm/viz.hpp"

namespace fs = std::filesystem;
using namespace tgm;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key = value config file");
  cmd->add_option("--set", c.overrides, "override one key (key=value), repeatable");
  const char* env = std::getenv("TGM_OUT_DIR");
  c.out_dir = env && *env ? env : "tgm_out";
  cmd->add_option("--out-dir", c.out_dir, "output directory (default $TGM_OUT_DIR or ./tgm_out)");
}

/// Config file and overrides applied on top of `base`.
config::RunConfig build_config(const Common& c, config::RunConfig base = {}) {
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw ConfigError("cannot open config file " + c.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    config::apply_text(base, ss.str());
  }
  for (const auto& o : c.overrides) config::apply_override(base, o);
  base.validate();
  return base;
}

fs::path corpus_dir(const config::RunConfig& cfg, const Common& c) {
  const fs::path p(cfg.data.dir);
  return p.is_absolute() ? p : fs::path(c.out_dir) / p;
}

synthgen::Corpus load_corpus(const fs::path& dir, const config::RunConfig& cfg) {
  if (!fs::exists(dir / "corpus.txt"))
    throw std::runtime_error("no corpus at " + dir.string() + "; run `tgm gen-data` first");
  return synthgen::load_corpus(dir, cfg.patch);
}

void write_run_manifest(const fs::path& out, const std::string& command, const config::RunConfig& cfg,
                        const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  fs::create_directories(out);
  std::ofstream m(out / (command + ".manifest"), std::ios::trunc);
  m << "# rerun: tgm " << command << " --config " << (out / (command + ".manifest")).string() << "\n";
  m << config::to_text(cfg);
  for (const auto& [k, v] : extra) m << "# " << k << " = " << v << "\n";
}

/// Loads a checkpoint and returns the config it was written with, overlaid by
/// the user's file and overrides. Architecture keys that then differ from the
/// manifest are an error unless `force`.
checkpoint::Loaded<float> load_checkpoint(const std::string& path, const Common& c, bool force) {
  const auto man = checkpoint::read_manifest(checkpoint::manifest_path(path));
  const config::RunConfig cfg = build_config(c, checkpoint::config_from_manifest(man));
  auto loaded = checkpoint::load<float>(path, &cfg, force);
  loaded.config = cfg;
  return loaded;
}

std::string checkpoint_hash(const std::string& path) {
  if (path.empty()) return "";
  return hex64(fnv1a(videocore::detail::read_file(path)));
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const Common& c, bool simmaps) {
  const auto cfg = build_config(c);
  const fs::path dir = corpus_dir(cfg, c);
  const auto corpus = synthgen::generate_corpus(cfg.data.count, cfg.data.seed, cfg.scene_distribution(), cfg.patch);
  synthgen::write_corpus(dir, corpus);
  if (simmaps) {
    const synthgen::Embedder embedder;
    for (int i = 0; i < corpus.size(); ++i) {
      const auto u = static_cast<std::size_t>(i);
      Rng rng(derive_seed(cfg.data.seed, u, 53));
      const auto sim = synthgen::compute_similarity_map(embedder, corpus.videos[u], corpus.scenes[u],
                                                        corpus.captions[u].front(), cfg.patch,
                                                        static_cast<float>(cfg.mask.embed_sigma), rng);
      synthgen::write_simmap((dir / trainer::simmap_filename(i)).string(), sim);
    }
  }
  write_run_manifest(c.out_dir, "gen-data", cfg, {{"corpus_hash", hex64(checkpoint::corpus_hash(corpus))}});
  std::cout << "wrote " << corpus.size() << " clips to " << dir.string() << "\n";
  return 0;
}

int cmd_pretrain(const Common& c, bool dump_masks) {
  const auto cfg = build_config(c);
  const auto corpus = load_corpus(corpus_dir(cfg, c), cfg);
  trainer::PretrainOptions opts;
  opts.out_dir = c.out_dir;
  opts.dump_masks = dump_masks;
  const long every = std::max<long>(1, trainer::make_plan(cfg.train, corpus.size()).total_steps / 20);
  opts.on_step = [every](const trainer::LogRow& r) {
    if (r.step % every == 0)
      std::cout << "step " << r.step << " mse " << r.l_mse << " nce " << r.nce_diagnostic << " lr " << r.lr << "\n";
  };
  const auto res = trainer::pretrain<float>(corpus, cfg, opts);
  write_run_manifest(c.out_dir, "pretrain", cfg, {{"corpus_hash", hex64(checkpoint::corpus_hash(corpus))}});
  const auto& last = res.log.back();
  std::cout << "final step " << last.step << " mse " << last.l_mse << " nce_diagnostic " << last.nce_diagnostic
            << "\ncheckpoint " << (fs::path(c.out_dir) / "checkpoint.tgmc").string() << "\n";
  return 0;
}

int cmd_finetune(const Common& c, std::string ckpt, bool force) {
  config::RunConfig cfg = build_config(c);
  if (ckpt.empty()) ckpt = cfg.train.init_checkpoint;
  model::VideoMAE<float> m = [&] {
    if (ckpt.empty()) {
      model::ModelConfig mc = cfg.model_config();
      mc.init_seed = trainer::model_init_seed(cfg);
      return model::VideoMAE<float>(mc);
    }
    auto loaded = load_checkpoint(ckpt, c, force);
    cfg = loaded.config;
    return std::move(loaded.model);
  }();
  const auto corpus = load_corpus(corpus_dir(cfg, c), cfg);
  auto res = trainer::finetune<float>(std::move(m), corpus, cfg, c.out_dir);
  const eval::ViewSpec views{cfg.eval.temporal_views, cfg.eval.spatial_views};
  eval::Metrics metrics;
  metrics.top1 = eval::multiview_accuracy(res.model, corpus, views);
  metrics.views = views;
  metrics.seed = cfg.train.seed;
  metrics.checkpoint_hash = checkpoint_hash(ckpt);
  metrics.extra["train_accuracy"] = res.train_accuracy;
  const fs::path out = fs::path(c.out_dir) / "finetuned.tgmc";
  checkpoint::save(res.model, out.string(), cfg, {{"init_checkpoint", ckpt}});
  eval::write_metrics(fs::path(c.out_dir) / "finetune_metrics.json", metrics);
  write_run_manifest(c.out_dir, "finetune", cfg, {{"checkpoint", ckpt}});
  std::cout << "train accuracy " << res.train_accuracy << "\ncheckpoint " << out.string() << "\n";
  return 0;
}

int cmd_probe(const Common& c, const std::string& ckpt, bool force) {
  config::RunConfig cfg = build_config(c);
  model::VideoMAE<float> m = [&] {
    if (ckpt.empty()) {
      std::cerr << "note: no --checkpoint, probing a randomly initialized encoder\n";
      model::ModelConfig mc = cfg.model_config();
      mc.init_seed = trainer::model_init_seed(cfg);
      return model::VideoMAE<float>(mc);
    }
    auto loaded = load_checkpoint(ckpt, c, force);
    cfg = loaded.config;
    return std::move(loaded.model);
  }();
  const auto corpus = load_corpus(corpus_dir(cfg, c), cfg);
  const auto r = eval::linear_probe(m, corpus, cfg.probe, cfg.train.seed);
  eval::Metrics metrics;
  metrics.top1 = r.top1;
  metrics.seed = cfg.train.seed;
  metrics.checkpoint_hash = checkpoint_hash(ckpt);
  metrics.extra["probe_train_accuracy"] = r.train_accuracy;
  metrics.extra["train_size"] = r.train_size;
  metrics.extra["test_size"] = r.test_size;
  metrics.extra["encoder_checksum"] = hex64(r.checksum_after);
  fs::create_directories(c.out_dir);
  eval::write_metrics(fs::path(c.out_dir) / "probe_metrics.json", metrics);
  write_run_manifest(c.out_dir, "probe", cfg, {{"checkpoint", ckpt}});
  std::cout << "probe top1 " << r.top1 << " (train " << r.train_accuracy << ", " << r.test_size << " held out)\n";
  return 0;
}

int cmd_retrieve(const Common& c, const std::string& ckpt, const std::string& corpus_override, bool raw,
                 bool force) {
  auto loaded = load_checkpoint(ckpt, c, force);
  const auto& cfg = loaded.config;
  if (loaded.manifest.count("loss.contrastive") && loaded.manifest.at("loss.contrastive") != "true" && !raw)
    std::cerr << "warning: checkpoint was not trained with the contrastive loss; projection head is untrained\n";
  const fs::path dir = corpus_override.empty() ? corpus_dir(cfg, c) : fs::path(corpus_override);
  synthgen::Corpus corpus = load_corpus(dir, cfg);
  const int n = std::min(corpus.size(), cfg.eval.retrieval_count);
  if (n < corpus.size()) {
    // retrieval uses the last n clips of the corpus
    const auto cut = [n](auto& v) { v.erase(v.begin(), v.end() - n); };
    cut(corpus.videos), cut(corpus.scenes), cut(corpus.captions), cut(corpus.labels), cut(corpus.ground_truth);
  }
  const auto r = eval::retrieve(loaded.model, corpus, raw, {1, 5, 10});
  const double chance = eval::chance_r_at_1(eval::canonical_captions(corpus), loaded.model.config().D_proj, 200,
                                            cfg.train.seed);
  eval::Metrics metrics;
  metrics.r_at_1 = r.video_to_text.at(1);
  metrics.r_at_5 = r.video_to_text.at(5);
  metrics.seed = cfg.train.seed;
  metrics.checkpoint_hash = checkpoint_hash(ckpt);
  metrics.extra["text_to_video"] = {{"r_at_1", r.text_to_video.at(1)}, {"r_at_5", r.text_to_video.at(5)},
                                    {"r_at_10", r.text_to_video.at(10)}};
  metrics.extra["r_at_10"] = r.video_to_text.at(10);
  metrics.extra["videos"] = n;
  metrics.extra["tied_queries"] = r.tied_queries;
  metrics.extra["chance_r_at_1"] = chance;
  metrics.extra["features"] = raw ? "raw" : "projection";
  fs::create_directories(c.out_dir);
  eval::write_metrics(fs::path(c.out_dir) / "retrieval_metrics.json", metrics);
  write_run_manifest(c.out_dir, "retrieve", cfg, {{"checkpoint", ckpt}, {"corpus", dir.string()}});
  std::cout << std::fixed << std::setprecision(4) << "video->text R@1 " << r.video_to_text.at(1) << " R@5 "
            << r.video_to_text.at(5) << "\ntext->video R@1 " << r.text_to_video.at(1) << " R@5 "
            << r.text_to_video.at(5) << "\nchance R@1 " << chance << " over " << n << " clips\n";
  if (r.tied_queries > 0) std::cout << r.tied_queries << " queries had tied scores (lowest index wins)\n";
  return 0;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string f; std::getline(ss, f, ',');)
    if (!config::detail::trim(f).empty()) out.push_back(config::detail::trim(f));
  return out;
}

int cmd_mask_stats(const Common& c, const std::string& algorithms, double gamma, int count) {
  const auto cfg = build_config(c);
  const fs::path dir = corpus_dir(cfg, c);
  synthgen::Corpus corpus;
  if (fs::exists(dir / "corpus.txt")) {
    corpus = synthgen::load_corpus(dir, cfg.patch);
  } else {
    std::cerr << "note: no corpus at " << dir.string() << ", generating " << (count > 0 ? count : cfg.data.count)
              << " clips in memory\n";
    corpus = synthgen::generate_corpus(count > 0 ? count : cfg.data.count, cfg.data.seed, cfg.scene_distribution(),
                                       cfg.patch);
  }
  const int n = count > 0 ? std::min(count, corpus.size()) : corpus.size();
  const synthgen::Embedder embedder;
  fs::create_directories(c.out_dir);
  std::ofstream tsv(fs::path(c.out_dir) / "mask_stats.tsv", std::ios::trunc);
  tsv << "algorithm\tgamma\tclips\tmean_coverage\tstd_coverage\n";
  std::cout << std::left << std::setw(14) << "algorithm" << std::setw(10) << "coverage" << "std\n";
  for (const auto& name : split_list(algorithms)) {
    const auto alg = masking::parse_algorithm(name);
    std::vector<double> cov;
    for (int i = 0; i < n; ++i) {
      const auto u = static_cast<std::size_t>(i);
      Rng rng(derive_seed(cfg.train.seed, u, 59));
      const auto& v = corpus.videos[u];
      const Grid g = videocore::grid_for(v, cfg.patch);
      std::optional<SimilarityMap> sim;
      if (masking::needs_similarity(alg)) {
        const auto& cap = synthgen::sample_caption(corpus.captions[u], rng, cfg.mask.single_caption);
        sim = trainer::similarity_for(corpus, i, v, cap, cfg, embedder, rng);
      }
      const auto mask = masking::make_mask({alg, gamma}, g, {&v, &cfg.patch, sim ? &*sim : nullptr}, rng);
      cov.push_back(masking::saliency_coverage(mask, corpus.ground_truth[u]));
    }
    double mean = 0, var = 0;
    for (double x : cov) mean += x;
    mean /= static_cast<double>(cov.size());
    for (double x : cov) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(cov.size()));
    std::cout << std::setw(14) << name << std::setw(10) << std::fixed << std::setprecision(4) << mean << sd << "\n";
    tsv << name << '\t' << gamma << '\t' << cov.size() << '\t' << mean << '\t' << sd << '\n';
  }
  write_run_manifest(c.out_dir, "mask-stats", cfg, {{"algorithms", algorithms}, {"gamma", std::to_string(gamma)}});
  return 0;
}

struct VisualizeArgs {
  int video = -1;
  std::string checkpoint;
  int layer = -1, head = 0;
  std::vector<std::string> loss_csvs, labels;
  std::string column = "nce_diagnostic";
  bool force = false;
};

int cmd_visualize(const Common& c, const VisualizeArgs& a) {
  if (a.video < 0 && a.loss_csvs.empty()) throw ConfigError("visualize needs --video and/or --loss-csv");
  const fs::path out(c.out_dir);
  fs::create_directories(out);
  if (!a.loss_csvs.empty()) {
    std::vector<fs::path> paths(a.loss_csvs.begin(), a.loss_csvs.end());
    const std::string svg = viz::plot_losses(paths, a.labels, std::cerr, a.column);
    std::ofstream(out / "losses.svg", std::ios::trunc) << svg;
    std::cout << "wrote " << (out / "losses.svg").string() << "\n";
  }
  if (a.video < 0) return 0;

  config::RunConfig cfg = build_config(c);
  std::optional<checkpoint::Loaded<float>> loaded;
  if (!a.checkpoint.empty()) {
    loaded = load_checkpoint(a.checkpoint, c, a.force);
    cfg = loaded->config;
  }
  const auto corpus = load_corpus(corpus_dir(cfg, c), cfg);
  if (a.video >= corpus.size()) throw ConfigError("--video out of range");
  const auto u = static_cast<std::size_t>(a.video);
  const auto& v = corpus.videos[u];
  const Grid g = videocore::grid_for(v, cfg.patch);
  Rng rng(derive_seed(cfg.train.seed, u, 61));
  const synthgen::Embedder embedder;
  std::optional<SimilarityMap> sim;
  if (masking::needs_similarity(cfg.mask.algorithm)) {
    const auto& cap = synthgen::sample_caption(corpus.captions[u], rng, cfg.mask.single_caption);
    sim = trainer::similarity_for(corpus, a.video, v, cap, cfg, embedder, rng);
  }
  const auto mask = masking::make_mask({cfg.mask.algorithm, cfg.mask.gamma}, g, {&v, &cfg.patch, sim ? &*sim : nullptr},
                                       rng);
  std::size_t files = viz::write_mask_slices(out, a.video, mask, cfg.patch).size();
  files += viz::write_frames(out, "input", a.video, v).size();
  files += viz::write_frames(out, "masked", a.video, viz::masked_input(v, mask, cfg.patch)).size();
  if (loaded) {
    auto& m = loaded->model;
    files += viz::write_frames(out, "recon", a.video, viz::reconstruct(m, v, mask, cfg.loss.norm_pix)).size();
    const int layer = a.layer >= 0 ? a.layer : m.config().depth - 1;
    const auto att = model::attention_map(m, videocore::extract_cubes<float>(v, cfg.patch), layer, a.head);
    files += viz::write_attention(out, a.video, att, cfg.patch).size();
  } else {
    std::cerr << "note: no --checkpoint, skipping reconstruction and attention panels\n";
  }
  write_run_manifest(c.out_dir, "visualize", cfg, {{"video", std::to_string(a.video)}, {"checkpoint", a.checkpoint}});
  std::cout << "wrote " << files << " images to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tgm: text-guided masked video autoencoder toolkit"};
  app.require_subcommand(1);

  Common gen_c, pre_c, ft_c, pr_c, ret_c, ms_c, vis_c;
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic captioned corpus");
  add_common(gen, gen_c);
  bool simmaps = false;
  gen->add_flag("--simmaps", simmaps, "also write toy-embedder SIMMAP files");

  auto* pre = app.add_subcommand("pretrain", "masked autoencoder pretraining");
  add_common(pre, pre_c);
  bool dump_masks = false;
  pre->add_flag("--dump-masks", dump_masks, "write every generated mask to masks.bin");

  std::string ft_ckpt, pr_ckpt, ret_ckpt, ret_corpus;
  bool ft_force = false, pr_force = false, ret_force = false, ret_raw = false;
  auto* ft = app.add_subcommand("finetune", "supervised finetuning with a linear classifier");
  add_common(ft, ft_c);
  ft->add_option("--checkpoint", ft_ckpt, "pretrained checkpoint (default: init_checkpoint key)");
  ft->add_flag("--force", ft_force, "load despite architecture mismatches");

  auto* pr = app.add_subcommand("probe", "linear probe on frozen features");
  add_common(pr, pr_c);
  pr->add_option("--checkpoint", pr_ckpt, "checkpoint to probe (default: random init)");
  pr->add_flag("--force", pr_force, "load despite architecture mismatches");

  auto* ret = app.add_subcommand("retrieve", "zero-shot video-text retrieval");
  add_common(ret, ret_c);
  ret->add_option("--checkpoint", ret_ckpt, "contrastively pretrained checkpoint")->required();
  ret->add_option("--corpus", ret_corpus, "held-out corpus directory (default: data.dir)");
  ret->add_flag("--raw", ret_raw, "use pooled encoder features instead of the projection head");
  ret->add_flag("--force", ret_force, "load despite architecture mismatches");

  auto* ms = app.add_subcommand("mask-stats", "saliency coverage per mask algorithm");
  add_common(ms, ms_c);
  std::string algorithms = "tube,random,motion,text-top,text-bottom";
  double gamma = 0.75;
  int count = 0;
  ms->add_option("--algorithms", algorithms, "comma-separated algorithms");
  ms->add_option("--gamma", gamma, "mask ratio")->check(CLI::Range(0.0, 0.999999));
  ms->add_option("--count", count, "number of clips (default: whole corpus)");

  auto* vis = app.add_subcommand("visualize", "mask, reconstruction, attention and loss-curve figures");
  add_common(vis, vis_c);
  VisualizeArgs va;
  vis->add_option("--video", va.video, "corpus index of the clip to render");
  vis->add_option("--checkpoint", va.checkpoint, "checkpoint for reconstruction and attention");
  vis->add_option("--layer", va.layer, "encoder layer for the attention map (default: last)");
  vis->add_option("--head", va.head, "attention head");
  vis->add_option("--loss-csv", va.loss_csvs, "loss CSV to overlay, repeatable");
  vis->add_option("--label", va.labels, "curve label per --loss-csv");
  vis->add_option("--column", va.column, "CSV column to plot");
  vis->add_flag("--force", va.force, "load despite architecture mismatches");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) return cmd_gen_data(gen_c, simmaps);
    if (*pre) return cmd_pretrain(pre_c, dump_masks);
    if (*ft) return cmd_finetune(ft_c, ft_ckpt, ft_force);
    if (*pr) return cmd_probe(pr_c, pr_ckpt, pr_force);
    if (*ret) return cmd_retrieve(ret_c, ret_ckpt, ret_corpus, ret_raw, ret_force);
    if (*ms) return cmd_mask_stats(ms_c, algorithms, gamma, count);
    if (*vis) return cmd_visualize(vis_c, va);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
