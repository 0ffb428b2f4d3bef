// Checkpoint blobs with a key = value manifest sidecar.
//
// Blob layout: "TGMC", u32 version, u32 entry count, then per entry
// u32 name length, name bytes, u32 rows, u32 cols, rows*cols f32 values.
// The manifest (<path>.manifest) lists the run config and content hashes.
#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tgm/config.hpp"
#include "tgm/model.hpp"

namespace tgm::checkpoint {

inline constexpr std::uint32_t kVersion = 1;

using Manifest = std::map<std::string, std::string>;

/// Keys that must agree between a checkpoint and the config loading it.
inline bool is_architecture_key(const std::string& k) {
  return k.rfind("model.", 0) == 0 || k.rfind("patch.", 0) == 0 || k == "data.frames" ||
         k == "data.height" || k == "data.width";
}

inline std::uint64_t config_hash(const config::RunConfig& cfg) {
  return fnv1a(config::to_text(cfg));
}

inline std::uint64_t corpus_hash(const synthgen::Corpus& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int i = 0; i < c.size(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    const auto& v = c.videos[u];
    h = fnv1a(v.data.data(), v.data.size() * sizeof(float), h);
    for (const auto& cap : c.captions[u]) h = fnv1a(cap, h);
    h = fnv1a(&c.labels[u], sizeof(int), h);
  }
  return h;
}

template <typename T>
std::vector<std::pair<std::string, Mat<T>*>> named_tensors(model::VideoMAE<T>& m,
                                                          std::vector<Mat<T>>& scratch) {
  std::vector<std::pair<std::string, Mat<T>*>> out;
  for (auto* p : m.parameters()) out.emplace_back(p->name, &p->value);
  // running batch-norm statistics travel as 1-row tensors
  scratch.resize(2);
  scratch[0] = m.proj_head.bn.running_mean;
  scratch[1] = m.proj_head.bn.running_var;
  out.emplace_back("proj_head.bn.running_mean", &scratch[0]);
  out.emplace_back("proj_head.bn.running_var", &scratch[1]);
  return out;
}

inline Manifest read_manifest(const std::string& path) {
  Manifest m;
  for (const auto& line : synthgen::read_lines(path)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    m[config::detail::trim(line.substr(0, eq))] = config::detail::trim(line.substr(eq + 1));
  }
  return m;
}

inline std::string manifest_path(const std::string& blob) { return blob + ".manifest"; }

template <typename T>
void save(model::VideoMAE<T>& m, const std::string& path, const config::RunConfig& cfg,
          const Manifest& extra = {}) {
  std::vector<Mat<T>> scratch;
  const auto tensors = named_tensors(m, scratch);
  std::string buf = "TGMC";
  videocore::detail::put_u32(buf, kVersion);
  videocore::detail::put_u32(buf, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    videocore::detail::put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    videocore::detail::put_u32(buf, static_cast<std::uint32_t>(t->rows()));
    videocore::detail::put_u32(buf, static_cast<std::uint32_t>(t->cols()));
    for (Eigen::Index i = 0; i < t->size(); ++i) {
      const float f = static_cast<float>(t->data()[i]);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      videocore::detail::put_u32(buf, bits);
    }
  }
  videocore::detail::write_file(path, buf);

  std::ofstream man(manifest_path(path), std::ios::trunc);
  if (!man) throw FormatError("cannot write manifest for " + path);
  man << "# tgm checkpoint manifest\n";
  for (const auto& [k, v] : config::to_pairs(cfg))
    if (v != "default") man << k << " = " << v << '\n';
  man << "model.num_classes = " << m.config().num_classes << '\n';
  man << "content_hash = " << hex64(config_hash(cfg)) << '\n';
  man << "blob_hash = " << hex64(fnv1a(buf)) << '\n';
  for (const auto& [k, v] : extra) man << k << " = " << v << '\n';
  if (!man) throw FormatError("short write to manifest for " + path);
}

/// Rebuilds the run config stored in a manifest (unknown keys are skipped so
/// bookkeeping entries do not break loading).
inline config::RunConfig config_from_manifest(const Manifest& man) {
  config::RunConfig cfg;
  const auto keys = config::known_keys();
  for (const auto& [k, v] : man)
    if (std::find(keys.begin(), keys.end(), k) != keys.end()) config::set(cfg, k, v);
  return cfg;
}

/// Throws ConfigError listing every architecture key that differs.
inline void check_compatible(const Manifest& man, const config::RunConfig& expected) {
  std::string diff;
  for (const auto& [k, v] : config::to_pairs(expected)) {
    if (!is_architecture_key(k)) continue;
    const auto it = man.find(k);
    const std::string have = it == man.end() ? "<missing>" : it->second;
    if (have != v) diff += " " + k + " (checkpoint " + have + ", config " + v + ")";
  }
  if (!diff.empty())
    throw ConfigError("checkpoint manifest does not match config:" + diff + "; use --force to override");
}

template <typename T>
struct Loaded {
  model::VideoMAE<T> model;
  config::RunConfig config;
  Manifest manifest;
};

/// Loads a checkpoint. When `expected` is given, architecture keys must match
/// unless `force` is set.
template <typename T>
Loaded<T> load(const std::string& path, const config::RunConfig* expected = nullptr,
               bool force = false) {
  const Manifest man = read_manifest(manifest_path(path));
  if (expected && !force) check_compatible(man, *expected);
  config::RunConfig cfg = config_from_manifest(man);
  model::ModelConfig mc = cfg.model_config();
  if (auto it = man.find("model.num_classes"); it != man.end())
    mc.num_classes = config::detail::parse_number<int>("model.num_classes", it->second);
  model::VideoMAE<T> m(mc);

  const std::string bytes = videocore::detail::read_file(path);
  if (bytes.size() < 12 || bytes.compare(0, 4, "TGMC") != 0) throw FormatError("not a TGMC checkpoint");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  std::size_t off = 4;
  auto need = [&](std::size_t n) {
    if (off + n > bytes.size()) throw FormatError("truncated checkpoint " + path);
  };
  auto u32 = [&] {
    need(4);
    const auto v = videocore::detail::get_u32(p + off);
    off += 4;
    return v;
  };
  if (u32() != kVersion) throw FormatError("unsupported checkpoint version");
  const std::uint32_t count = u32();
  std::map<std::string, Mat<T>> stored;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t len = u32();
    need(len);
    std::string name(bytes.data() + off, len);
    off += len;
    const std::uint32_t rows = u32(), cols = u32();
    need(std::size_t{4} * rows * cols);
    Mat<T> t(rows, cols);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      float f;
      const auto bits = videocore::detail::get_u32(p + off);
      std::memcpy(&f, &bits, 4);
      t.data()[i] = static_cast<T>(f);
      off += 4;
    }
    stored.emplace(std::move(name), std::move(t));
  }
  std::vector<Mat<T>> scratch;
  for (auto& [name, t] : named_tensors(m, scratch)) {
    auto it = stored.find(name);
    if (it == stored.end()) throw FormatError("checkpoint lacks tensor " + name);
    if (it->second.rows() != t->rows() || it->second.cols() != t->cols())
      throw DimensionError("checkpoint tensor " + name + " has the wrong shape");
    *t = it->second;
  }
  m.proj_head.bn.running_mean = scratch[0].row(0);
  m.proj_head.bn.running_var = scratch[1].row(0);
  return {std::move(m), std::move(cfg), man};
}

}  // namespace tgm::checkpoint
