// Procedural moving-shape videos with captions, ground-truth foreground and a
// frozen attribute embedder that plays the role of an aligned image-text
// model.
#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tgm/common.hpp"
#include "tgm/grid_maps.hpp"
#include "tgm/videocore.hpp"

namespace tgm::synthgen {

using videocore::PatchConfig;
using videocore::VideoClip;

enum class Shape { Square, Circle, Triangle, Cross };
enum class Color { Red, Green, Blue, Yellow };
enum class Direction { Left, Right, Up, Down, Still };
enum class Background { Solid, StaticNoise };

inline constexpr std::array<std::string_view, 4> kShapeNames{"square", "circle", "triangle",
                                                             "cross"};
inline constexpr std::array<std::string_view, 4> kColorNames{"red", "green", "blue", "yellow"};
inline constexpr std::array<std::string_view, 5> kDirectionNames{"left", "right", "up", "down",
                                                                 "still"};
inline constexpr std::array<std::array<float, 3>, 4> kColorRgb{{{0.90f, 0.10f, 0.10f},
                                                               {0.10f, 0.80f, 0.15f},
                                                               {0.10f, 0.20f, 0.90f},
                                                               {0.90f, 0.85f, 0.10f}}};

inline std::string_view name(Shape s) { return kShapeNames[static_cast<std::size_t>(s)]; }
inline std::string_view name(Color c) { return kColorNames[static_cast<std::size_t>(c)]; }
inline std::string_view name(Direction d) { return kDirectionNames[static_cast<std::size_t>(d)]; }

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::array<std::string_view, N>& names) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return static_cast<Enum>(i);
  throw FormatError("unknown attribute '" + std::string(s) + "'");
}

struct SceneSpec {
  Shape shape = Shape::Square;
  Color color = Color::Red;
  Direction direction = Direction::Right;
  float speed = 1.f;  // pixels per frame
  Background background = Background::Solid;
  float noise_sigma = 0.f;  // background pixel noise
  float size = 8.f;         // side of the shape's bounding box, pixels
  float x0 = 0.f, y0 = 0.f;  // box centre at frame 0
  float bg_level = 0.45f;

  std::array<float, 2> velocity() const {
    switch (direction) {
      case Direction::Left: return {-speed, 0.f};
      case Direction::Right: return {speed, 0.f};
      case Direction::Up: return {0.f, -speed};
      case Direction::Down: return {0.f, speed};
      case Direction::Still: return {0.f, 0.f};
    }
    return {0.f, 0.f};
  }
};

/// Point-in-shape test relative to the shape centre, for a box of side s.
inline bool inside_shape(Shape shape, float dx, float dy, float s) {
  const float r = 0.5f * s;
  if (std::abs(dx) > r || std::abs(dy) > r) return false;
  switch (shape) {
    case Shape::Square: return true;
    case Shape::Circle: return dx * dx + dy * dy <= r * r;
    case Shape::Triangle: {
      // apex at the top, base at the bottom of the box
      const float frac = (dy + r) / s;
      return std::abs(dx) <= frac * r;
    }
    case Shape::Cross: return std::abs(dx) <= s / 6.f || std::abs(dy) <= s / 6.f;
  }
  return false;
}

struct RenderedScene {
  VideoClip video;
  std::vector<std::uint8_t> occupancy;  // T*H*W, 1 where the object covers the pixel
};

inline RenderedScene render(const SceneSpec& scene, int T, int H, int W, Rng& rng) {
  RenderedScene out{VideoClip(T, H, W, 3), std::vector<std::uint8_t>(
                                               static_cast<std::size_t>(T) * H * W, 0)};
  std::vector<float> bg(static_cast<std::size_t>(H) * W * 3, scene.bg_level);
  if (scene.background == Background::StaticNoise && scene.noise_sigma > 0.f) {
    std::normal_distribution<float> noise(0.f, scene.noise_sigma);
    for (float& v : bg) v = std::clamp(scene.bg_level + noise(rng), 0.f, 1.f);
  }
  const auto [vx, vy] = scene.velocity();
  const auto& rgb = kColorRgb[static_cast<std::size_t>(scene.color)];
  for (int t = 0; t < T; ++t) {
    const float cx = scene.x0 + vx * static_cast<float>(t);
    const float cy = scene.y0 + vy * static_cast<float>(t);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const bool on = inside_shape(scene.shape, static_cast<float>(x) + 0.5f - cx,
                                     static_cast<float>(y) + 0.5f - cy, scene.size);
        out.occupancy[(static_cast<std::size_t>(t) * H + y) * W + x] = on;
        for (int c = 0; c < 3; ++c)
          out.video.at(t, y, x, c) =
              on ? rgb[static_cast<std::size_t>(c)] : bg[(static_cast<std::size_t>(y) * W + x) * 3 + c];
      }
  }
  videocore::quantize_u8(out.video);
  return out;
}

inline constexpr double kForegroundOverlap = 0.25;

/// A cell is foreground when the object covers at least a quarter of its
/// pixels in any frame of the cell's temporal extent.
inline GroundTruthMask ground_truth_from_occupancy(const std::vector<std::uint8_t>& occ, int T,
                                                   int H, int W, const PatchConfig& cfg) {
  const Grid g = videocore::grid_for(T, H, W, cfg);
  GroundTruthMask gt{g, std::vector<std::uint8_t>(static_cast<std::size_t>(g.size()), 0)};
  const int need = static_cast<int>(std::ceil(kForegroundOverlap * cfg.h * cfg.w));
  for (int tau = 0; tau < g.T; ++tau)
    for (int i = 0; i < g.H; ++i)
      for (int j = 0; j < g.W; ++j) {
        bool fg = false;
        for (int dt = 0; dt < cfg.t && !fg; ++dt) {
          int n = 0;
          for (int dy = 0; dy < cfg.h; ++dy)
            for (int dx = 0; dx < cfg.w; ++dx)
              n += occ[(static_cast<std::size_t>(tau * cfg.t + dt) * H + i * cfg.h + dy) * W +
                       j * cfg.w + dx];
          fg = n >= need;
        }
        gt.fg[static_cast<std::size_t>(g.token(tau, i, j))] = fg;
      }
  return gt;
}

// ---------------------------------------------------------------------------
// Captions

using CaptionSet = std::vector<std::string>;

inline CaptionSet captions_for(const SceneSpec& s) {
  const std::string c(name(s.color)), sh(name(s.shape)), d(name(s.direction));
  return {"a " + c + " " + sh + " moving " + d, "the " + c + " " + sh + " is moving " + d,
          d + "-moving " + c + " " + sh};
}

/// Uniform choice among the captions; `single_caption` always returns the first.
inline const std::string& sample_caption(const CaptionSet& captions, Rng& rng,
                                         bool single_caption = false) {
  if (captions.empty()) throw std::invalid_argument("caption set is empty");
  if (single_caption) return captions.front();
  std::uniform_int_distribution<std::size_t> pick(0, captions.size() - 1);
  return captions[pick(rng)];
}

// ---------------------------------------------------------------------------
// Frozen attribute embedder

/// Attribute vocabulary: 4 shapes, 4 colours, 5 directions, then a null slot
/// used when a caption names no known attribute.
inline constexpr int kNumAttributes = 14;
inline constexpr int kNullAttribute = 13;
inline constexpr int kEmbedDim = 16;

inline int attribute_index(Shape s) { return static_cast<int>(s); }
inline int attribute_index(Color c) { return 4 + static_cast<int>(c); }
inline int attribute_index(Direction d) { return 8 + static_cast<int>(d); }

using TextEmbedding = Eigen::VectorXf;

class Embedder {
 public:
  static constexpr std::uint64_t kDefaultSeed = 0x51eec0deULL;

  /// Orthonormalized Gaussian projection from attribute bags to R^dim.
  explicit Embedder(std::uint64_t seed = kDefaultSeed, int dim = kEmbedDim) {
    if (dim < kNumAttributes) throw ConfigError("embedding width must cover every attribute");
    Rng rng(seed);
    std::normal_distribution<double> n01;
    Eigen::MatrixXd g(dim, kNumAttributes);
    for (int r = 0; r < dim; ++r)
      for (int c = 0; c < kNumAttributes; ++c) g(r, c) = n01(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, kNumAttributes);
    projection_ = q.cast<float>();
  }

  int dim() const { return static_cast<int>(projection_.rows()); }
  const Eigen::MatrixXf& projection() const { return projection_; }

  std::uint64_t checksum() const {
    return fnv1a(projection_.data(), sizeof(float) * static_cast<std::size_t>(projection_.size()));
  }

  Eigen::VectorXf embed_bag(const std::vector<int>& attributes) const {
    Eigen::VectorXf bag = Eigen::VectorXf::Zero(kNumAttributes);
    for (int a : attributes) bag(a) = 1.f;
    Eigen::VectorXf v = projection_ * bag;
    const float n = v.norm();
    return n > 0.f ? Eigen::VectorXf(v / n) : v;
  }

  static std::vector<int> parse_attributes(std::string_view caption) {
    std::vector<int> out;
    std::string word;
    auto flush = [&] {
      if (word.empty()) return;
      for (std::size_t i = 0; i < kShapeNames.size(); ++i)
        if (word == kShapeNames[i]) out.push_back(static_cast<int>(i));
      for (std::size_t i = 0; i < kColorNames.size(); ++i)
        if (word == kColorNames[i]) out.push_back(4 + static_cast<int>(i));
      for (std::size_t i = 0; i < kDirectionNames.size(); ++i)
        if (word == kDirectionNames[i]) out.push_back(8 + static_cast<int>(i));
      word.clear();
    };
    for (char ch : caption) {
      if (std::isalpha(static_cast<unsigned char>(ch)))
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
      else
        flush();
    }
    flush();
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    if (out.empty()) out.push_back(kNullAttribute);
    return out;
  }

  TextEmbedding embed_text(std::string_view caption) const {
    return embed_bag(parse_attributes(caption));
  }

 private:
  Eigen::MatrixXf projection_;
};

/// Nearest palette colour of a pixel, or -1 when none is within tolerance.
inline int classify_pixel(const VideoClip& v, int t, int y, int x, float tol = 0.25f) {
  for (std::size_t c = 0; c < kColorRgb.size(); ++c) {
    float d2 = 0.f;
    for (int ch = 0; ch < 3; ++ch) {
      const float d = v.at(t, y, x, ch) - kColorRgb[c][static_cast<std::size_t>(ch)];
      d2 += d * d;
    }
    if (d2 <= tol * tol) return static_cast<int>(c);
  }
  return -1;
}

/// Per-cell embeddings [L x dim]. A cell carries the attribute bag
/// {detected colour, shape, direction} when palette-coloured pixels cover at
/// least a quarter of it in some frame of its extent; otherwise it carries no
/// attributes. Gaussian noise of scale `sigma` is added before normalizing;
/// a noiseless empty cell is the zero vector.
inline Eigen::MatrixXf embed_patches(const Embedder& embedder, const VideoClip& video,
                                     const SceneSpec& scene, const PatchConfig& cfg, float sigma,
                                     Rng& rng) {
  const Grid g = videocore::grid_for(video, cfg);
  Eigen::MatrixXf out = Eigen::MatrixXf::Zero(g.size(), embedder.dim());
  const int need = static_cast<int>(std::ceil(kForegroundOverlap * cfg.h * cfg.w));
  std::normal_distribution<float> noise(0.f, 1.f);
  for (int tau = 0; tau < g.T; ++tau)
    for (int i = 0; i < g.H; ++i)
      for (int j = 0; j < g.W; ++j) {
        int color = -1;
        for (int dt = 0; dt < cfg.t && color < 0; ++dt) {
          std::array<int, 4> counts{};
          for (int dy = 0; dy < cfg.h; ++dy)
            for (int dx = 0; dx < cfg.w; ++dx) {
              const int c = classify_pixel(video, tau * cfg.t + dt, i * cfg.h + dy, j * cfg.w + dx);
              if (c >= 0) ++counts[static_cast<std::size_t>(c)];
            }
          const auto best = std::max_element(counts.begin(), counts.end());
          if (*best >= need) color = static_cast<int>(best - counts.begin());
        }
        Eigen::VectorXf e = Eigen::VectorXf::Zero(embedder.dim());
        if (color >= 0)
          e = embedder.embed_bag({attribute_index(scene.shape),
                                  attribute_index(static_cast<Color>(color)),
                                  attribute_index(scene.direction)});
        if (sigma > 0.f)
          for (int d = 0; d < embedder.dim(); ++d) e(d) += sigma * noise(rng);
        const float n = e.norm();
        if (n > 0.f) e /= n;
        out.row(g.token(tau, i, j)) = e.transpose();
      }
  return out;
}

inline SimilarityMap similarity_from_embeddings(const Eigen::MatrixXf& cells, const Grid& g,
                                                const TextEmbedding& text) {
  SimilarityMap m{g, std::vector<float>(static_cast<std::size_t>(g.size())),
                  SimilaritySource::ToyEmbedder};
  const Eigen::VectorXf s = cells * text;
  for (int i = 0; i < g.size(); ++i)
    m.sims[static_cast<std::size_t>(i)] = std::clamp(s(i), -1.f, 1.f);
  return m;
}

inline SimilarityMap compute_similarity_map(const Embedder& embedder, const VideoClip& video,
                                            const SceneSpec& scene, std::string_view caption,
                                            const PatchConfig& cfg, float sigma, Rng& rng) {
  return similarity_from_embeddings(embed_patches(embedder, video, scene, cfg, sigma, rng),
                                    videocore::grid_for(video, cfg),
                                    embedder.embed_text(caption));
}

// ---------------------------------------------------------------------------
// SIMMAP files: "TGMS", u32 T',H',W', then little-endian f32 values.

inline void write_simmap(const std::string& path, const SimilarityMap& m) {
  std::string buf = "TGMS";
  for (int d : {m.grid.T, m.grid.H, m.grid.W})
    videocore::detail::put_u32(buf, static_cast<std::uint32_t>(d));
  for (float v : m.sims) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    videocore::detail::put_u32(buf, bits);
  }
  videocore::detail::write_file(path, buf);
}

inline SimilarityMap decode_simmap(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, 4, "TGMS") != 0)
    throw FormatError("not a SIMMAP file (bad magic)");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const Grid g{static_cast<int>(videocore::detail::get_u32(p + 4)),
               static_cast<int>(videocore::detail::get_u32(p + 8)),
               static_cast<int>(videocore::detail::get_u32(p + 12))};
  if (g.T <= 0 || g.H <= 0 || g.W <= 0) throw FormatError("SIMMAP header has invalid grid");
  const std::size_t n = static_cast<std::size_t>(g.T) * g.H * g.W;
  if (bytes.size() != 16 + 4 * n) throw FormatError("SIMMAP payload size does not match header");
  SimilarityMap m{g, std::vector<float>(n), SimilaritySource::Imported};
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bits = videocore::detail::get_u32(p + 16 + 4 * i);
    float v;
    std::memcpy(&v, &bits, 4);
    if (!std::isfinite(v)) throw FormatError("SIMMAP contains a non-finite value");
    if (v < -1.f || v > 1.f) throw FormatError("SIMMAP value outside [-1, 1]");
    m.sims[i] = v;
  }
  return m;
}

/// Reads a SIMMAP and checks it against the token grid of the paired video.
inline SimilarityMap import_similarity_map(const std::string& path, const Grid& expected) {
  SimilarityMap m = decode_simmap(videocore::detail::read_file(path));
  if (!(m.grid == expected))
    throw DimensionError("SIMMAP grid " + std::to_string(m.grid.T) + "x" +
                         std::to_string(m.grid.H) + "x" + std::to_string(m.grid.W) +
                         " does not match video token grid " + std::to_string(expected.T) + "x" +
                         std::to_string(expected.H) + "x" + std::to_string(expected.W));
  return m;
}

// ---------------------------------------------------------------------------
// Corpus generation

enum class LabelMap { Direction, Shape, Color, Combined };

inline std::string_view to_string(LabelMap m) {
  switch (m) {
    case LabelMap::Direction: return "direction";
    case LabelMap::Shape: return "shape";
    case LabelMap::Color: return "color";
    case LabelMap::Combined: return "combined";
  }
  return "?";
}

inline LabelMap parse_label_map(std::string_view s) {
  for (auto m : {LabelMap::Direction, LabelMap::Shape, LabelMap::Color, LabelMap::Combined})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown label map '" + std::string(s) + "'");
}

inline int num_classes(LabelMap m) {
  switch (m) {
    case LabelMap::Direction: return 5;
    case LabelMap::Shape: return 4;
    case LabelMap::Color: return 4;
    case LabelMap::Combined: return 80;
  }
  return 0;
}

inline int label_of(const SceneSpec& s, LabelMap m) {
  const int sh = static_cast<int>(s.shape), co = static_cast<int>(s.color),
            di = static_cast<int>(s.direction);
  switch (m) {
    case LabelMap::Direction: return di;
    case LabelMap::Shape: return sh;
    case LabelMap::Color: return co;
    case LabelMap::Combined: return (sh * 4 + co) * 5 + di;
  }
  return 0;
}

struct SceneDistribution {
  int T = 8, H = 32, W = 32;
  float size_min = 0.5f, size_max = 1.0f;  // bounding-box side, fraction of min(H, W)
  float speed_min = 0.5f, speed_max = 1.5f;
  // Accepted range for the fraction of foreground token cells; scenes are
  // redrawn until they land inside it (or the closest draw is kept).
  float fg_fraction_min = 0.68f, fg_fraction_max = 0.80f;
  int max_redraws = 256;
  float p_noise_background = 0.5f;
  float noise_sigma = 0.06f;
  LabelMap label_map = LabelMap::Direction;
};

inline std::vector<std::uint8_t> occupancy(const SceneSpec& scene, int T, int H, int W) {
  std::vector<std::uint8_t> occ(static_cast<std::size_t>(T) * H * W, 0);
  const auto [vx, vy] = scene.velocity();
  for (int t = 0; t < T; ++t) {
    const float cx = scene.x0 + vx * static_cast<float>(t);
    const float cy = scene.y0 + vy * static_cast<float>(t);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        occ[(static_cast<std::size_t>(t) * H + y) * W + x] =
            inside_shape(scene.shape, static_cast<float>(x) + 0.5f - cx,
                         static_cast<float>(y) + 0.5f - cy, scene.size);
  }
  return occ;
}

namespace detail {

/// Draws size, speed and start position for a scene whose attributes are
/// already set. Returns false when the object cannot move at `speed_min`.
inline bool place_object(SceneSpec& s, const SceneDistribution& dist, Rng& rng) {
  std::uniform_real_distribution<float> u01(0.f, 1.f);
  const float side = static_cast<float>(std::min(dist.H, dist.W));
  s.size = std::round(side * (dist.size_min + (dist.size_max - dist.size_min) * u01(rng)));
  s.speed = dist.speed_min + (dist.speed_max - dist.speed_min) * u01(rng);
  bool ok = true;
  if (s.direction == Direction::Still) {
    s.speed = 0.f;
  } else if (dist.T > 1) {
    const float room = static_cast<float>(
        (s.direction == Direction::Left || s.direction == Direction::Right) ? dist.W : dist.H);
    const float cap = std::max(0.f, (room - s.size) / static_cast<float>(dist.T - 1));
    ok = cap >= dist.speed_min;
    s.speed = std::min(s.speed, cap);
  }
  // Start so the bounding box stays inside the frame at every timestep.
  const auto [vx, vy] = s.velocity();
  const float r = 0.5f * s.size;
  const float tx = vx * static_cast<float>(dist.T - 1), ty = vy * static_cast<float>(dist.T - 1);
  const float xlo = r - std::min(0.f, tx), xhi = static_cast<float>(dist.W) - r - std::max(0.f, tx);
  const float ylo = r - std::min(0.f, ty), yhi = static_cast<float>(dist.H) - r - std::max(0.f, ty);
  s.x0 = xlo + (std::max(xhi, xlo) - xlo) * u01(rng);
  s.y0 = ylo + (std::max(yhi, ylo) - ylo) * u01(rng);
  return ok;
}

}  // namespace detail

/// Scene for every video index. The labelled attribute is drawn from a
/// balanced, seed-shuffled assignment so class counts differ by at most one.
inline std::vector<SceneSpec> sample_scenes(int n, std::uint64_t seed,
                                            const SceneDistribution& dist,
                                            const PatchConfig& patch) {
  const int classes = num_classes(dist.label_map);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % classes;
  Rng shuffle_rng(derive_seed(seed, 0, 1));
  std::shuffle(labels.begin(), labels.end(), shuffle_rng);

  const Grid g = videocore::grid_for(dist.T, dist.H, dist.W, patch);
  std::vector<SceneSpec> scenes;
  scenes.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i), 2));
    std::uniform_int_distribution<int> u4(0, 3), u5(0, 4);
    std::uniform_real_distribution<float> u01(0.f, 1.f);
    SceneSpec s;
    s.shape = static_cast<Shape>(u4(rng));
    s.color = static_cast<Color>(u4(rng));
    s.direction = static_cast<Direction>(u5(rng));
    const int lab = labels[static_cast<std::size_t>(i)];
    switch (dist.label_map) {
      case LabelMap::Direction: s.direction = static_cast<Direction>(lab); break;
      case LabelMap::Shape: s.shape = static_cast<Shape>(lab); break;
      case LabelMap::Color: s.color = static_cast<Color>(lab); break;
      case LabelMap::Combined:
        s.shape = static_cast<Shape>(lab / 20);
        s.color = static_cast<Color>((lab / 5) % 4);
        s.direction = static_cast<Direction>(lab % 5);
        break;
    }
    s.background = u01(rng) < dist.p_noise_background ? Background::StaticNoise : Background::Solid;
    s.noise_sigma = s.background == Background::StaticNoise ? dist.noise_sigma : 0.f;
    s.bg_level = 0.3f + 0.3f * u01(rng);

    const float mid = 0.5f * (dist.fg_fraction_min + dist.fg_fraction_max);
    SceneSpec best = s;
    float best_gap = std::numeric_limits<float>::infinity();
    for (int attempt = 0; attempt < std::max(1, dist.max_redraws); ++attempt) {
      SceneSpec cand = s;
      const bool moves = detail::place_object(cand, dist, rng);
      const auto gt = ground_truth_from_occupancy(occupancy(cand, dist.T, dist.H, dist.W),
                                                  dist.T, dist.H, dist.W, patch);
      const float frac = static_cast<float>(gt.count()) / static_cast<float>(g.size());
      const bool in_band = frac >= dist.fg_fraction_min && frac <= dist.fg_fraction_max;
      const float gap = std::abs(frac - mid) + (in_band ? 0.f : 1.f) + (moves ? 0.f : 2.f);
      if (gap < best_gap) {
        best_gap = gap;
        best = cand;
      }
      if (in_band && moves) break;
    }
    scenes.push_back(best);
  }
  return scenes;
}

struct Corpus {
  PatchConfig patch;
  LabelMap label_map = LabelMap::Direction;
  std::vector<VideoClip> videos;
  std::vector<SceneSpec> scenes;
  std::vector<CaptionSet> captions;
  std::vector<int> labels;
  std::vector<GroundTruthMask> ground_truth;

  int size() const { return static_cast<int>(videos.size()); }
  Grid grid() const { return videocore::grid_for(videos.at(0), patch); }
};

inline Corpus generate_corpus(int n, std::uint64_t seed, const SceneDistribution& dist,
                              const PatchConfig& patch) {
  videocore::grid_for(dist.T, dist.H, dist.W, patch);
  if (n <= 0) throw ConfigError("corpus size must be positive");
  Corpus c;
  c.patch = patch;
  c.label_map = dist.label_map;
  c.scenes = sample_scenes(n, seed, dist, patch);
  for (int i = 0; i < n; ++i) {
    const SceneSpec& s = c.scenes[static_cast<std::size_t>(i)];
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i), 3));
    RenderedScene r = render(s, dist.T, dist.H, dist.W, rng);
    c.ground_truth.push_back(ground_truth_from_occupancy(r.occupancy, dist.T, dist.H, dist.W, patch));
    c.videos.push_back(std::move(r.video));
    c.captions.push_back(captions_for(s));
    c.labels.push_back(label_of(s, dist.label_map));
  }
  return c;
}

inline std::string video_filename(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "video_%05d.tgmv", i);
  return buf;
}

inline std::string scene_to_line(const SceneSpec& s) {
  std::ostringstream os;
  os << name(s.shape) << '\t' << name(s.color) << '\t' << name(s.direction) << '\t' << s.speed
     << '\t' << (s.background == Background::Solid ? "solid" : "static-noise") << '\t'
     << s.noise_sigma << '\t' << s.size << '\t' << s.x0 << '\t' << s.y0 << '\t' << s.bg_level;
  return os.str();
}

inline SceneSpec scene_from_line(const std::string& line) {
  std::istringstream is(line);
  std::string sh, co, di, bg;
  SceneSpec s;
  if (!(is >> sh >> co >> di >> s.speed >> bg >> s.noise_sigma >> s.size >> s.x0 >> s.y0 >>
        s.bg_level))
    throw FormatError("malformed scene line: " + line);
  s.shape = parse_enum<Shape>(sh, kShapeNames);
  s.color = parse_enum<Color>(co, kColorNames);
  s.direction = parse_enum<Direction>(di, kDirectionNames);
  if (bg == "solid") s.background = Background::Solid;
  else if (bg == "static-noise") s.background = Background::StaticNoise;
  else throw FormatError("unknown background '" + bg + "'");
  return s;
}

/// Writes a corpus directory:
///   videos/video_NNNNN.tgmv   TGMV clips
///   captions.txt              3 tab-separated captions per line
///   labels.txt                one integer per line
///   scenes.tsv                scene parameters (needed by the embedder)
///   ground_truth.txt          "T' H' W' bits" per line
///   corpus.txt                key = value description
inline void write_corpus(const std::filesystem::path& dir, const Corpus& c) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "videos");
  std::ofstream caps(dir / "captions.txt"), labs(dir / "labels.txt"), scenes(dir / "scenes.tsv"),
      gts(dir / "ground_truth.txt"), meta(dir / "corpus.txt");
  if (!caps || !labs || !scenes || !gts || !meta)
    throw FormatError("cannot write corpus files under " + dir.string());
  for (int i = 0; i < c.size(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    videocore::write_tgmv((dir / "videos" / video_filename(i)).string(), c.videos[u]);
    caps << c.captions[u][0] << '\t' << c.captions[u][1] << '\t' << c.captions[u][2] << '\n';
    labs << c.labels[u] << '\n';
    scenes << scene_to_line(c.scenes[u]) << '\n';
    const auto& g = c.ground_truth[u];
    gts << g.grid.T << ' ' << g.grid.H << ' ' << g.grid.W << ' ';
    for (auto b : g.fg) gts << (b ? '1' : '0');
    gts << '\n';
  }
  meta << "count = " << c.size() << "\npatch.t = " << c.patch.t << "\npatch.h = " << c.patch.h
       << "\npatch.w = " << c.patch.w << "\nlabel_map = " << to_string(c.label_map)
       << "\nclasses = " << num_classes(c.label_map) << '\n';
  if (!caps || !labs || !scenes || !gts || !meta) throw FormatError("short write under " + dir.string());
}

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw FormatError("cannot open " + p.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline std::vector<int> read_labels(const std::filesystem::path& p) {
  std::vector<int> out;
  for (const auto& l : read_lines(p)) {
    if (l.empty()) continue;
    std::size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(l, &pos);
    } catch (const std::exception&) {
      throw FormatError("bad label line '" + l + "'");
    }
    if (pos != l.size()) throw FormatError("bad label line '" + l + "'");
    out.push_back(v);
  }
  return out;
}

inline Corpus load_corpus(const std::filesystem::path& dir, const PatchConfig& patch) {
  Corpus c;
  c.patch = patch;
  for (const auto& l : read_lines(dir / "corpus.txt")) {
    const auto eq = l.find('=');
    if (eq == std::string::npos) continue;
    std::string key = l.substr(0, eq), val = l.substr(eq + 1);
    auto trim = [](std::string& s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
    };
    trim(key);
    trim(val);
    if (key == "label_map") c.label_map = parse_label_map(val);
  }
  const auto caps = read_lines(dir / "captions.txt");
  c.labels = read_labels(dir / "labels.txt");
  const auto scenes = read_lines(dir / "scenes.tsv");
  const auto gts = read_lines(dir / "ground_truth.txt");
  const std::size_t n = c.labels.size();
  if (caps.size() != n || scenes.size() != n || gts.size() != n)
    throw FormatError("corpus files disagree on the number of videos");
  for (std::size_t i = 0; i < n; ++i) {
    c.videos.push_back(videocore::read_tgmv((dir / "videos" / video_filename(static_cast<int>(i))).string()));
    videocore::grid_for(c.videos.back(), patch);
    CaptionSet cs;
    std::istringstream is(caps[i]);
    for (std::string part; std::getline(is, part, '\t');) cs.push_back(part);
    if (cs.size() != 3) throw FormatError("caption line " + std::to_string(i) + " lacks 3 captions");
    c.captions.push_back(std::move(cs));
    c.scenes.push_back(scene_from_line(scenes[i]));
    std::istringstream gs(gts[i]);
    GroundTruthMask g;
    std::string bits;
    if (!(gs >> g.grid.T >> g.grid.H >> g.grid.W >> bits) ||
        bits.size() != static_cast<std::size_t>(g.grid.size()))
      throw FormatError("malformed ground-truth line " + std::to_string(i));
    for (char b : bits) g.fg.push_back(b == '1');
    c.ground_truth.push_back(std::move(g));
    if (c.labels[i] < 0 || c.labels[i] >= num_classes(c.label_map))
      throw FormatError("label out of range on line " + std::to_string(i));
  }
  return c;
}

}  // namespace tgm::synthgen
