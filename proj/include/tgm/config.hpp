// Run configuration: flat "key = value" files with a closed key set.
//
// Training fields use their bare names (base_lr, batch_size, ...); the other
// sections are prefixed (data., patch., model., mask., loss., probe., eval.).
// Unknown keys and unparsable values raise ConfigError.
#pragma once

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tgm/losses.hpp"
#include "tgm/masking.hpp"
#include "tgm/model.hpp"
#include "tgm/synthgen.hpp"

namespace tgm::config {

struct DataConfig {
  std::string dir = "corpus";
  int count = 400;
  std::uint64_t seed = 0;
  int frames = 8, height = 32, width = 32;
  synthgen::LabelMap label_map = synthgen::LabelMap::Direction;
  double fg_min = 0.68, fg_max = 0.80;
};

struct MaskConfig {
  masking::MaskAlgorithm algorithm = masking::MaskAlgorithm::TextTop;
  double gamma = 0.6;
  double embed_sigma = 0.1;
  bool single_caption = false;
  std::string simmap_dir;  // imported SIMMAP files instead of the toy embedder
};

struct LossConfig {
  bool contrastive = false;
  double lambda = 1.0;
  double tau = 0.07;
  losses::MseSupport mse_support = losses::MseSupport::Masked;
  bool norm_pix = true;
};

struct TrainConfig {
  std::optional<double> base_lr;  // 1.5e-4 pretrain, 5e-4 finetune
  double weight_decay = 0.05;
  std::optional<std::pair<double, double>> betas;  // (0.9,0.95) pretrain, (0.9,0.999) finetune
  int batch_size = 32;
  int epochs = 100;
  int warmup_epochs = 20;
  long steps = 0;  // > 0 overrides epochs * steps_per_epoch
  std::string schedule = "cosine";
  double min_lr = 0.0;
  double layer_decay = 0.75;
  bool flip_enabled = false;
  bool crop_enabled = true;
  double crop_scale_min = 0.66, crop_scale_max = 1.0;
  double drop_path = 0.1;
  double grad_clip = 0.0;
  std::uint64_t seed = 0;
  long checkpoint_every = 0;
  std::string init_checkpoint;  // finetune/probe starting point

  double pretrain_base_lr() const { return base_lr.value_or(1.5e-4); }
  double finetune_base_lr() const { return base_lr.value_or(5e-4); }
  std::pair<double, double> pretrain_betas() const { return betas.value_or(std::pair{0.9, 0.95}); }
  std::pair<double, double> finetune_betas() const { return betas.value_or(std::pair{0.9, 0.999}); }
};

struct ProbeConfig {
  int epochs = 100;
  double lr = 1e-3;
  int batch_size = 32;
  double train_fraction = 0.75;
};

struct EvalConfig {
  int temporal_views = 1, spatial_views = 1;
  bool retrieval_raw = false;
  int retrieval_count = 64;
};

struct RunConfig {
  DataConfig data;
  videocore::PatchConfig patch{2, 8, 8};
  model::ModelConfig model;
  MaskConfig mask;
  LossConfig loss;
  TrainConfig train;
  ProbeConfig probe;
  EvalConfig eval;

  /// Model config with clip geometry and patch size taken from data/patch.
  model::ModelConfig model_config() const {
    model::ModelConfig m = model;
    m.frames = data.frames;
    m.height = data.height;
    m.width = data.width;
    m.patch = patch;
    return m;
  }

  synthgen::SceneDistribution scene_distribution() const {
    synthgen::SceneDistribution d;
    d.T = data.frames;
    d.H = data.height;
    d.W = data.width;
    d.label_map = data.label_map;
    d.fg_fraction_min = static_cast<float>(data.fg_min);
    d.fg_fraction_max = static_cast<float>(data.fg_max);
    return d;
  }

  void validate() const {
    model_config().validate();
    masking::mask_count(mask.gamma, model_config().grid());
    if (train.batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (train.epochs <= 0 && train.steps <= 0) throw ConfigError("epochs must be positive");
    if (train.warmup_epochs < 0 || (train.steps <= 0 && train.warmup_epochs >= train.epochs))
      throw ConfigError("warmup_epochs must be smaller than epochs");
    if (train.schedule != "cosine") throw ConfigError("only the cosine schedule is supported");
    if (!(train.layer_decay > 0.0 && train.layer_decay <= 1.0))
      throw ConfigError("layer_decay must lie in (0, 1]");
    if (!(loss.tau > 0.0)) throw ConfigError("loss.tau must be positive");
    if (train.crop_scale_min <= 0.0 || train.crop_scale_min > train.crop_scale_max ||
        train.crop_scale_max > 1.0)
      throw ConfigError("crop scales must satisfy 0 < min <= max <= 1");
    if (train.drop_path < 0.0 || train.drop_path >= 1.0) throw ConfigError("drop_path must lie in [0, 1)");
    if (probe.train_fraction <= 0.0 || probe.train_fraction >= 1.0)
      throw ConfigError("probe.train_fraction must lie in (0, 1)");
    if (eval.temporal_views < 1 || eval.spatial_views < 1) throw ConfigError("view counts must be >= 1");
  }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
  N out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("invalid value '" + v + "' for key " + key);
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("invalid boolean '" + v + "' for key " + key);
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::string fmt(bool v) { return v ? "true" : "false"; }

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define TGM_INT_FIELD(KEY, MEMBER)                                                           \
  Field{KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = parse_number<decltype(c.MEMBER)>(KEY, v); }, \
        [](const RunConfig& c) { return std::to_string(c.MEMBER); }}
#define TGM_REAL_FIELD(KEY, MEMBER)                                                          \
  Field{KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = parse_number<double>(KEY, v); }, \
        [](const RunConfig& c) { return fmt(static_cast<double>(c.MEMBER)); }}
#define TGM_BOOL_FIELD(KEY, MEMBER)                                                          \
  Field{KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = parse_bool(KEY, v); },     \
        [](const RunConfig& c) { return fmt(static_cast<bool>(c.MEMBER)); }}
#define TGM_STRING_FIELD(KEY, MEMBER)                                                        \
  Field{KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = v; },                       \
        [](const RunConfig& c) { return c.MEMBER; }}

inline const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      TGM_STRING_FIELD("data.dir", data.dir),
      TGM_INT_FIELD("data.count", data.count),
      TGM_INT_FIELD("data.seed", data.seed),
      TGM_INT_FIELD("data.frames", data.frames),
      TGM_INT_FIELD("data.height", data.height),
      TGM_INT_FIELD("data.width", data.width),
      Field{"data.label_map",
            [](RunConfig& c, const std::string& v) { c.data.label_map = synthgen::parse_label_map(v); },
            [](const RunConfig& c) { return std::string(synthgen::to_string(c.data.label_map)); }},
      TGM_REAL_FIELD("data.fg_min", data.fg_min),
      TGM_REAL_FIELD("data.fg_max", data.fg_max),
      TGM_INT_FIELD("patch.t", patch.t),
      TGM_INT_FIELD("patch.h", patch.h),
      TGM_INT_FIELD("patch.w", patch.w),
      TGM_INT_FIELD("model.D", model.D),
      TGM_INT_FIELD("model.depth", model.depth),
      TGM_INT_FIELD("model.heads", model.heads),
      TGM_INT_FIELD("model.decoder_D", model.decoder_D),
      TGM_INT_FIELD("model.decoder_depth", model.decoder_depth),
      TGM_INT_FIELD("model.decoder_heads", model.decoder_heads),
      TGM_REAL_FIELD("model.mlp_ratio", model.mlp_ratio),
      TGM_INT_FIELD("model.D_proj", model.D_proj),
      TGM_INT_FIELD("model.proj_hidden", model.proj_hidden),
      TGM_BOOL_FIELD("model.text_head", model.text_head),
      TGM_INT_FIELD("model.init_seed", model.init_seed),
      Field{"mask.algorithm",
            [](RunConfig& c, const std::string& v) { c.mask.algorithm = masking::parse_algorithm(v); },
            [](const RunConfig& c) { return std::string(masking::to_string(c.mask.algorithm)); }},
      TGM_REAL_FIELD("mask.gamma", mask.gamma),
      TGM_REAL_FIELD("mask.embed_sigma", mask.embed_sigma),
      TGM_BOOL_FIELD("mask.single_caption", mask.single_caption),
      TGM_STRING_FIELD("mask.simmap_dir", mask.simmap_dir),
      TGM_BOOL_FIELD("loss.contrastive", loss.contrastive),
      TGM_REAL_FIELD("loss.lambda", loss.lambda),
      TGM_REAL_FIELD("loss.tau", loss.tau),
      Field{"loss.mse_support",
            [](RunConfig& c, const std::string& v) {
              if (v == "masked") c.loss.mse_support = losses::MseSupport::Masked;
              else if (v == "all") c.loss.mse_support = losses::MseSupport::All;
              else throw ConfigError("loss.mse_support must be masked or all");
            },
            [](const RunConfig& c) {
              return std::string(c.loss.mse_support == losses::MseSupport::Masked ? "masked" : "all");
            }},
      TGM_BOOL_FIELD("loss.norm_pix", loss.norm_pix),
      Field{"base_lr",
            [](RunConfig& c, const std::string& v) { c.train.base_lr = parse_number<double>("base_lr", v); },
            [](const RunConfig& c) { return c.train.base_lr ? fmt(*c.train.base_lr) : std::string("default"); }},
      TGM_REAL_FIELD("weight_decay", train.weight_decay),
      Field{"betas",
            [](RunConfig& c, const std::string& v) {
              const auto comma = v.find(',');
              if (comma == std::string::npos) throw ConfigError("betas must be 'b1,b2'");
              c.train.betas = std::pair{parse_number<double>("betas", trim(v.substr(0, comma))),
                                        parse_number<double>("betas", trim(v.substr(comma + 1)))};
            },
            [](const RunConfig& c) {
              return c.train.betas ? fmt(c.train.betas->first) + "," + fmt(c.train.betas->second)
                                   : std::string("default");
            }},
      TGM_INT_FIELD("batch_size", train.batch_size),
      TGM_INT_FIELD("epochs", train.epochs),
      TGM_INT_FIELD("warmup_epochs", train.warmup_epochs),
      TGM_INT_FIELD("steps", train.steps),
      TGM_STRING_FIELD("schedule", train.schedule),
      TGM_REAL_FIELD("min_lr", train.min_lr),
      TGM_REAL_FIELD("layer_decay", train.layer_decay),
      TGM_BOOL_FIELD("flip_enabled", train.flip_enabled),
      TGM_BOOL_FIELD("crop_enabled", train.crop_enabled),
      TGM_REAL_FIELD("crop_scale_min", train.crop_scale_min),
      TGM_REAL_FIELD("crop_scale_max", train.crop_scale_max),
      TGM_REAL_FIELD("drop_path", train.drop_path),
      TGM_REAL_FIELD("grad_clip", train.grad_clip),
      TGM_INT_FIELD("seed", train.seed),
      TGM_INT_FIELD("checkpoint_every", train.checkpoint_every),
      TGM_STRING_FIELD("init_checkpoint", train.init_checkpoint),
      TGM_INT_FIELD("probe.epochs", probe.epochs),
      TGM_REAL_FIELD("probe.lr", probe.lr),
      TGM_INT_FIELD("probe.batch_size", probe.batch_size),
      TGM_REAL_FIELD("probe.train_fraction", probe.train_fraction),
      TGM_INT_FIELD("eval.temporal_views", eval.temporal_views),
      TGM_INT_FIELD("eval.spatial_views", eval.spatial_views),
      TGM_BOOL_FIELD("eval.retrieval_raw", eval.retrieval_raw),
      TGM_INT_FIELD("eval.retrieval_count", eval.retrieval_count),
  };
  return all;
}

#undef TGM_INT_FIELD
#undef TGM_REAL_FIELD
#undef TGM_BOOL_FIELD
#undef TGM_STRING_FIELD

}  // namespace detail

inline std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& f : detail::fields()) out.push_back(f.key);
  return out;
}

/// Applies one "key=value" assignment.
inline void set(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : detail::fields())
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override must be key=value: " + assignment);
  set(cfg, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

/// Parses "key = value" lines; '#' starts a comment.
inline void apply_text(RunConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  int lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.find('=') == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    apply_override(cfg, line);
  }
}

inline RunConfig load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  apply_text(cfg, ss.str());
  return cfg;
}

/// Every key with its current value, in registry order.
inline std::vector<std::pair<std::string, std::string>> to_pairs(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : detail::fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

inline std::string to_text(const RunConfig& cfg) {
  std::string s;
  for (const auto& [k, v] : to_pairs(cfg)) {
    if (v == "default") continue;
    s += k + " = " + v + "\n";
  }
  return s;
}

}  // namespace tgm::config
