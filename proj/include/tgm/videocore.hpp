// Video tensors, cube patchification and per-patch target normalization.
//
// Token order is temporal-major row-major: cell (tau, i, j) of a grid with
// extents (T', H', W') is token tau*H'*W' + i*W' + j. Inside a cube, pixels
// are flattened as (dt, dy, dx, channel). Every module that addresses tokens
// (masks, positions, attention maps, similarity maps) shares this order.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "tgm/common.hpp"

namespace tgm::videocore {

/// RGB video with values in [0,1], stored as a dense T x H x W x C array.
struct VideoClip {
  int T = 0, H = 0, W = 0, C = 3;
  int frame_stride = 1;
  std::vector<float> data;

  VideoClip() = default;
  VideoClip(int t, int h, int w, int c = 3, float fill = 0.f)
      : T(t), H(h), W(w), C(c),
        data(static_cast<std::size_t>(t) * h * w * c, fill) {}

  std::size_t index(int t, int y, int x, int c) const {
    return ((static_cast<std::size_t>(t) * H + y) * W + x) * C + c;
  }
  float& at(int t, int y, int x, int c) { return data[index(t, y, x, c)]; }
  float at(int t, int y, int x, int c) const { return data[index(t, y, x, c)]; }
  std::size_t size() const { return data.size(); }

  /// Throws DimensionError/FormatError when the clip violates its invariants.
  void validate() const {
    if (T <= 0 || H <= 0 || W <= 0 || C != 3)
      throw DimensionError("video dims must be positive with C = 3");
    if (data.size() != static_cast<std::size_t>(T) * H * W * C)
      throw DimensionError("video data size does not match T*H*W*C");
    if (frame_stride <= 0) throw DimensionError("frame_stride must be positive");
    for (float v : data)
      if (!std::isfinite(v) || v < 0.f || v > 1.f)
        throw FormatError("video values must be finite and within [0,1]");
  }
};

struct PatchConfig {
  int t = 2, h = 16, w = 16;

  int cube_size(int channels = 3) const { return t * h * w * channels; }
};

/// Token grid extents (T', H', W').
struct Grid {
  int T = 0, H = 0, W = 0;

  int cells_per_slice() const { return H * W; }
  int size() const { return T * H * W; }
  int token(int tau, int i, int j) const { return (tau * H + i) * W + j; }
  std::array<int, 3> coords(int token) const {
    return {token / (H * W), (token / W) % H, token % W};
  }
  bool operator==(const Grid&) const = default;
};

inline Grid grid_for(int T, int H, int W, const PatchConfig& cfg) {
  if (cfg.t <= 0 || cfg.h <= 0 || cfg.w <= 0)
    throw DimensionError("patch extents must be positive");
  if (T % cfg.t != 0 || H % cfg.h != 0 || W % cfg.w != 0)
    throw DimensionError("video " + std::to_string(T) + "x" + std::to_string(H) + "x" +
                         std::to_string(W) + " not divisible by cube " +
                         std::to_string(cfg.t) + "x" + std::to_string(cfg.h) + "x" +
                         std::to_string(cfg.w));
  return {T / cfg.t, H / cfg.h, W / cfg.w};
}

inline Grid grid_for(const VideoClip& v, const PatchConfig& cfg) {
  return grid_for(v.T, v.H, v.W, cfg);
}

/// Flattened raw cubes, one row per token: [L x (t*h*w*C)].
template <typename T>
Mat<T> extract_cubes(const VideoClip& video, const PatchConfig& cfg) {
  const Grid g = grid_for(video, cfg);
  const int P = cfg.cube_size(video.C);
  Mat<T> out(g.size(), P);
  for (int tau = 0; tau < g.T; ++tau)
    for (int i = 0; i < g.H; ++i)
      for (int j = 0; j < g.W; ++j) {
        const int row = g.token(tau, i, j);
        int col = 0;
        for (int dt = 0; dt < cfg.t; ++dt)
          for (int dy = 0; dy < cfg.h; ++dy) {
            const float* src =
                &video.data[video.index(tau * cfg.t + dt, i * cfg.h + dy, j * cfg.w, 0)];
            for (int k = 0; k < cfg.w * video.C; ++k) out(row, col++) = static_cast<T>(src[k]);
          }
      }
  return out;
}

/// Linear cube embedding: token = W * cube + b.
template <typename T>
struct PatchEmbedParams {
  Mat<T> weight;  // [D x P]
  RowVec<T> bias;  // [D]

  static PatchEmbedParams identity(int P) {
    return {Mat<T>::Identity(P, P), RowVec<T>::Zero(P)};
  }
};

template <typename T>
struct TokenSeq {
  Mat<T> tokens;  // [L x D]
  Grid grid;
};

template <typename T>
TokenSeq<T> patchify(const VideoClip& video, const PatchConfig& cfg,
                     const PatchEmbedParams<T>& embed) {
  Mat<T> cubes = extract_cubes<T>(video, cfg);
  if (embed.weight.cols() != cubes.cols())
    throw DimensionError("patch embedding expects " + std::to_string(embed.weight.cols()) +
                         " inputs, cube has " + std::to_string(cubes.cols()));
  if (embed.bias.size() != embed.weight.rows())
    throw DimensionError("patch embedding bias width mismatch");
  Mat<T> tokens = cubes * embed.weight.transpose();
  tokens.rowwise() += embed.bias;
  return {std::move(tokens), grid_for(video, cfg)};
}

enum class Normalization { Raw, Standardized };

template <typename T>
struct PatchTarget {
  Mat<T> values;  // [L x P]
  Normalization normalization = Normalization::Raw;
  std::vector<T> mean;  // per patch, populated when standardized
  std::vector<T> stddev;
};

inline constexpr double kStdFloor = 1e-6;

/// Per-patch standardization with population statistics. A patch whose
/// standard deviation falls below `std_floor` is divided by the floor instead.
template <typename T>
PatchTarget<T> standardize_rows(Mat<T> values, double std_floor = kStdFloor) {
  PatchTarget<T> out;
  out.normalization = Normalization::Standardized;
  const auto n = static_cast<double>(values.cols());
  out.mean.resize(static_cast<std::size_t>(values.rows()));
  out.stddev.resize(out.mean.size());
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    double mu = 0.0;
    for (Eigen::Index c = 0; c < values.cols(); ++c) mu += static_cast<double>(values(r, c));
    mu /= n;
    double var = 0.0;
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const double d = static_cast<double>(values(r, c)) - mu;
      var += d * d;
    }
    var /= n;
    const double sd = std::max(std::sqrt(var), std_floor);
    for (Eigen::Index c = 0; c < values.cols(); ++c)
      values(r, c) = static_cast<T>((static_cast<double>(values(r, c)) - mu) / sd);
    out.mean[static_cast<std::size_t>(r)] = static_cast<T>(mu);
    out.stddev[static_cast<std::size_t>(r)] = static_cast<T>(sd);
  }
  out.values = std::move(values);
  return out;
}

template <typename T>
PatchTarget<T> normalize_targets(const VideoClip& video, const PatchConfig& cfg,
                                 double std_floor = kStdFloor) {
  return standardize_rows(extract_cubes<T>(video, cfg), std_floor);
}

template <typename T>
PatchTarget<T> raw_targets(const VideoClip& video, const PatchConfig& cfg) {
  return {extract_cubes<T>(video, cfg), Normalization::Raw, {}, {}};
}

/// Inverse of extract_cubes. Standardized predictions are mapped back with the
/// stored per-patch statistics. Values are not clamped.
template <typename T>
VideoClip unpatchify(const PatchTarget<T>& pred, const Grid& grid, const PatchConfig& cfg,
                     int channels = 3) {
  const int P = cfg.cube_size(channels);
  if (pred.values.rows() != grid.size() || pred.values.cols() != P)
    throw DimensionError("prediction is " + std::to_string(pred.values.rows()) + "x" +
                         std::to_string(pred.values.cols()) + ", expected " +
                         std::to_string(grid.size()) + "x" + std::to_string(P));
  const bool standardized = pred.normalization == Normalization::Standardized;
  if (standardized && (pred.mean.size() != static_cast<std::size_t>(grid.size()) ||
                       pred.stddev.size() != pred.mean.size()))
    throw DimensionError("standardized prediction lacks per-patch statistics");
  VideoClip out(grid.T * cfg.t, grid.H * cfg.h, grid.W * cfg.w, channels);
  for (int row = 0; row < grid.size(); ++row) {
    const auto [tau, i, j] = grid.coords(row);
    const auto r = static_cast<std::size_t>(row);
    int col = 0;
    for (int dt = 0; dt < cfg.t; ++dt)
      for (int dy = 0; dy < cfg.h; ++dy)
        for (int dx = 0; dx < cfg.w; ++dx)
          for (int c = 0; c < channels; ++c, ++col) {
            T v = pred.values(row, col);
            if (standardized) v = v * pred.stddev[r] + pred.mean[r];
            out.at(tau * cfg.t + dt, i * cfg.h + dy, j * cfg.w + dx, c) = static_cast<float>(v);
          }
  }
  return out;
}

// ---------------------------------------------------------------------------
// TGMV raw video files: "TGMV", u32 T,H,W,C (little endian), then T*H*W*C
// bytes of 8-bit RGB in temporal-major row-major order.

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path);
}

}  // namespace detail

inline std::uint8_t to_u8(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
}

inline std::string encode_tgmv(const VideoClip& v) {
  std::string buf = "TGMV";
  buf.reserve(20 + v.size());
  for (int d : {v.T, v.H, v.W, v.C}) detail::put_u32(buf, static_cast<std::uint32_t>(d));
  for (float x : v.data) buf.push_back(static_cast<char>(to_u8(x)));
  return buf;
}

inline VideoClip decode_tgmv(const std::string& bytes) {
  if (bytes.size() < 20 || bytes.compare(0, 4, "TGMV") != 0)
    throw FormatError("not a TGMV video (bad magic)");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const auto T = detail::get_u32(p + 4), H = detail::get_u32(p + 8),
             W = detail::get_u32(p + 12), C = detail::get_u32(p + 16);
  if (T == 0 || H == 0 || W == 0 || C != 3) throw FormatError("TGMV header has invalid dims");
  const std::uint64_t n = std::uint64_t{T} * H * W * C;
  if (bytes.size() - 20 != n) throw FormatError("TGMV payload size does not match header");
  VideoClip v(static_cast<int>(T), static_cast<int>(H), static_cast<int>(W), static_cast<int>(C));
  for (std::uint64_t i = 0; i < n; ++i) v.data[i] = static_cast<float>(p[20 + i]) / 255.f;
  return v;
}

inline void write_tgmv(const std::string& path, const VideoClip& v) {
  detail::write_file(path, encode_tgmv(v));
}

inline VideoClip read_tgmv(const std::string& path) {
  return decode_tgmv(detail::read_file(path));
}

/// Snaps values to the 8-bit grid so in-memory clips match what a TGMV
/// round trip would produce.
inline void quantize_u8(VideoClip& v) {
  for (float& x : v.data) x = static_cast<float>(to_u8(x)) / 255.f;
}

}  // namespace tgm::videocore
