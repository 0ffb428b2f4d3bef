// Per-cell maps over a token grid: similarity scores, foreground and masks.
#pragma once

#include <cstdint>
#include <vector>

#include "tgm/videocore.hpp"

namespace tgm {

using videocore::Grid;

enum class SimilaritySource { ToyEmbedder, Imported };

/// Cosine similarity of each token cell against one caption embedding.
struct SimilarityMap {
  Grid grid;
  std::vector<float> sims;  // grid.size() values, token order
  SimilaritySource source = SimilaritySource::ToyEmbedder;

  float at(int tau, int i, int j) const {
    return sims[static_cast<std::size_t>(grid.token(tau, i, j))];
  }
};

/// Ground-truth foreground cells of a synthetic clip.
struct GroundTruthMask {
  Grid grid;
  std::vector<std::uint8_t> fg;  // 1 = foreground

  int count() const {
    int n = 0;
    for (auto b : fg) n += b != 0;
    return n;
  }
};

/// Token mask; true (1) means hidden from the encoder.
struct BinaryMask {
  Grid grid;
  std::vector<std::uint8_t> bits;

  bool masked(int token) const { return bits[static_cast<std::size_t>(token)] != 0; }
  int slice_count(int tau) const {
    int n = 0;
    const int base = tau * grid.cells_per_slice();
    for (int c = 0; c < grid.cells_per_slice(); ++c)
      n += bits[static_cast<std::size_t>(base + c)] != 0;
    return n;
  }
  int count() const {
    int n = 0;
    for (auto b : bits) n += b != 0;
    return n;
  }
  bool operator==(const BinaryMask&) const = default;
};

}  // namespace tgm
