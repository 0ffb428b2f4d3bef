// Mask generators and the visible/masked token partition.
//
// Every generator masks exactly k = round_half_up(gamma * H' * W') cells in
// each temporal slice. Score-based generators rank cells per slice and break
// ties by ascending cell index.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "tgm/common.hpp"
#include "tgm/grid_maps.hpp"
#include "tgm/videocore.hpp"

namespace tgm::masking {

enum class MaskAlgorithm { Tube, Random, Motion, TextTop, TextBottom };

inline std::string_view to_string(MaskAlgorithm a) {
  switch (a) {
    case MaskAlgorithm::Tube: return "tube";
    case MaskAlgorithm::Random: return "random";
    case MaskAlgorithm::Motion: return "motion";
    case MaskAlgorithm::TextTop: return "text-top";
    case MaskAlgorithm::TextBottom: return "text-bottom";
  }
  return "?";
}

inline MaskAlgorithm parse_algorithm(std::string_view s) {
  for (auto a : {MaskAlgorithm::Tube, MaskAlgorithm::Random, MaskAlgorithm::Motion,
                 MaskAlgorithm::TextTop, MaskAlgorithm::TextBottom})
    if (to_string(a) == s) return a;
  throw ConfigError("unknown mask algorithm '" + std::string(s) + "'");
}

inline bool needs_similarity(MaskAlgorithm a) {
  return a == MaskAlgorithm::TextTop || a == MaskAlgorithm::TextBottom;
}

/// Cells masked per temporal slice for ratio gamma in [0, 1).
inline int mask_count(double gamma, const Grid& grid) {
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw ConfigError("mask ratio must lie in [0, 1), got " + std::to_string(gamma));
  const int n = grid.cells_per_slice();
  const auto k = static_cast<long>(std::floor(gamma * n + 0.5));
  return static_cast<int>(std::clamp<long>(k, 0, n));
}

struct MaskSpec {
  MaskAlgorithm algorithm = MaskAlgorithm::Tube;
  double gamma = 0.75;
  std::uint64_t seed = 0;

  int k_per_slice(const Grid& g) const { return mask_count(gamma, g); }
};

namespace detail {

inline BinaryMask empty_mask(const Grid& g) {
  return {g, std::vector<std::uint8_t>(static_cast<std::size_t>(g.size()), 0)};
}

/// k distinct values from [0, n), uniformly, via partial Fisher-Yates.
inline std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

/// Marks, in every slice, the k cells with the highest (or lowest) score.
inline BinaryMask rank_per_slice(const Grid& g, const std::vector<float>& scores, int k,
                                 bool highest) {
  BinaryMask m = empty_mask(g);
  const int n = g.cells_per_slice();
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int tau = 0; tau < g.T; ++tau) {
    const float* s = scores.data() + static_cast<std::ptrdiff_t>(tau) * n;
    std::iota(order.begin(), order.end(), 0);
    auto before = [&](int a, int b) {
      if (s[a] != s[b]) return highest ? s[a] > s[b] : s[a] < s[b];
      return a < b;
    };
    std::partial_sort(order.begin(), order.begin() + k, order.end(), before);
    for (int r = 0; r < k; ++r)
      m.bits[static_cast<std::size_t>(tau * n + order[static_cast<std::size_t>(r)])] = 1;
  }
  return m;
}

}  // namespace detail

/// One random spatial pattern replicated over every temporal slice.
inline BinaryMask tube_mask(const Grid& g, double gamma, Rng& rng) {
  const int k = mask_count(gamma, g);
  BinaryMask m = detail::empty_mask(g);
  const int n = g.cells_per_slice();
  for (int cell : detail::sample_without_replacement(n, k, rng))
    for (int tau = 0; tau < g.T; ++tau) m.bits[static_cast<std::size_t>(tau * n + cell)] = 1;
  return m;
}

/// Independent uniform k-subset per temporal slice.
inline BinaryMask random_mask(const Grid& g, double gamma, Rng& rng) {
  const int k = mask_count(gamma, g);
  BinaryMask m = detail::empty_mask(g);
  const int n = g.cells_per_slice();
  for (int tau = 0; tau < g.T; ++tau)
    for (int cell : detail::sample_without_replacement(n, k, rng))
      m.bits[static_cast<std::size_t>(tau * n + cell)] = 1;
  return m;
}

/// Frame-difference motion proxy: mean |V[f] - V[f-1]| over each cell's
/// t x h x w x C extent, with frame 0 borrowing the difference of frame 1.
inline std::vector<float> motion_scores(const videocore::VideoClip& video,
                                        const videocore::PatchConfig& cfg) {
  const Grid g = videocore::grid_for(video, cfg);
  std::vector<double> acc(static_cast<std::size_t>(g.size()), 0.0);
  if (video.T >= 2) {
    for (int f = 0; f < video.T; ++f) {
      const int cur = f == 0 ? 1 : f;
      const int tau = f / cfg.t;
      for (int y = 0; y < video.H; ++y)
        for (int x = 0; x < video.W; ++x) {
          double d = 0.0;
          for (int c = 0; c < video.C; ++c)
            d += std::abs(static_cast<double>(video.at(cur, y, x, c)) -
                          static_cast<double>(video.at(cur - 1, y, x, c)));
          acc[static_cast<std::size_t>(g.token(tau, y / cfg.h, x / cfg.w))] += d;
        }
    }
  }
  const double denom = static_cast<double>(cfg.cube_size(video.C));
  std::vector<float> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / denom);
  return out;
}

inline BinaryMask motion_mask(const videocore::VideoClip& video,
                              const videocore::PatchConfig& cfg, double gamma) {
  const Grid g = videocore::grid_for(video, cfg);
  return detail::rank_per_slice(g, motion_scores(video, cfg), mask_count(gamma, g), true);
}

/// Masks the k most (top) or least (bottom) text-similar cells per slice.
inline BinaryMask text_mask(const SimilarityMap& sim, const Grid& token_grid, double gamma,
                            bool bottom = false) {
  if (!(sim.grid == token_grid))
    throw DimensionError("similarity map grid does not match token grid");
  if (sim.sims.size() != static_cast<std::size_t>(token_grid.size()))
    throw DimensionError("similarity map has wrong number of cells");
  return detail::rank_per_slice(token_grid, sim.sims, mask_count(gamma, token_grid), !bottom);
}

/// Inputs a generator may need; score-based algorithms require the matching
/// field to be set.
struct MaskContext {
  const videocore::VideoClip* video = nullptr;
  const videocore::PatchConfig* patch = nullptr;
  const SimilarityMap* similarity = nullptr;
};

inline BinaryMask make_mask(const MaskSpec& spec, const Grid& grid, const MaskContext& ctx,
                            Rng& rng) {
  switch (spec.algorithm) {
    case MaskAlgorithm::Tube: return tube_mask(grid, spec.gamma, rng);
    case MaskAlgorithm::Random: return random_mask(grid, spec.gamma, rng);
    case MaskAlgorithm::Motion:
      if (!ctx.video || !ctx.patch) throw ConfigError("motion mask needs the video");
      return motion_mask(*ctx.video, *ctx.patch, spec.gamma);
    case MaskAlgorithm::TextTop:
    case MaskAlgorithm::TextBottom:
      if (!ctx.similarity) throw ConfigError("text mask needs a similarity map");
      return text_mask(*ctx.similarity, grid, spec.gamma,
                       spec.algorithm == MaskAlgorithm::TextBottom);
  }
  throw ConfigError("unhandled mask algorithm");
}

/// Sorted visible and masked token indices.
struct MaskedPartition {
  std::vector<int> visible;
  std::vector<int> masked;

  int size() const { return static_cast<int>(visible.size() + masked.size()); }
};

inline MaskedPartition partition(const BinaryMask& mask) {
  MaskedPartition p;
  for (int i = 0; i < mask.grid.size(); ++i) (mask.masked(i) ? p.masked : p.visible).push_back(i);
  return p;
}

template <typename T>
MaskedPartition partition(const videocore::TokenSeq<T>& tokens, const BinaryMask& mask) {
  if (!(tokens.grid == mask.grid) || tokens.tokens.rows() != mask.grid.size() ||
      mask.bits.size() != static_cast<std::size_t>(mask.grid.size()))
    throw DimensionError("mask grid does not match token sequence");
  return partition(mask);
}

/// Fraction of masked cells that are ground-truth foreground.
inline double saliency_coverage(const BinaryMask& mask, const GroundTruthMask& gt) {
  if (!(mask.grid == gt.grid)) throw DimensionError("mask and ground truth grids differ");
  int masked = 0, hit = 0;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (!mask.bits[i]) continue;
    ++masked;
    hit += gt.fg[i] != 0;
  }
  if (masked == 0) throw std::domain_error("saliency coverage undefined for an empty mask");
  return static_cast<double>(hit) / masked;
}

}  // namespace tgm::masking
