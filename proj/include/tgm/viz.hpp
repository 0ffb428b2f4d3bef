// Image and plot outputs: binary PGM/PPM frames, mask and attention panels,
// and an SVG overlay of loss curves read from training CSV logs.
#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "tgm/eval.hpp"

namespace tgm::viz {

using videocore::VideoClip;

inline void write_pgm(const std::filesystem::path& path, int w, int h, const std::vector<std::uint8_t>& px) {
  if (px.size() != static_cast<std::size_t>(w) * h) throw DimensionError("PGM buffer size mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P5\n" << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

inline void write_ppm(const std::filesystem::path& path, int w, int h, const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(w) * h * 3) throw DimensionError("PPM buffer size mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P6\n" << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
}

inline std::vector<std::uint8_t> frame_rgb(const VideoClip& v, int t) {
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(v.H) * v.W * 3);
  for (int y = 0; y < v.H; ++y)
    for (int x = 0; x < v.W; ++x)
      for (int c = 0; c < 3; ++c) out.push_back(videocore::to_u8(v.at(t, y, x, c)));
  return out;
}

/// Cell values of one grid slice upsampled to pixels (each cell covers a
/// patch.h x patch.w block).
inline std::vector<std::uint8_t> upsample_slice(const std::vector<float>& cells, const Grid& g, int tau,
                                                const videocore::PatchConfig& patch) {
  const int H = g.H * patch.h, W = g.W * patch.w;
  std::vector<std::uint8_t> px(static_cast<std::size_t>(H) * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      px[static_cast<std::size_t>(y) * W + x] =
          videocore::to_u8(cells[static_cast<std::size_t>(g.token(tau, y / patch.h, x / patch.w))]);
  return px;
}

inline std::string panel_name(const std::string& kind, int video, int index, const char* ext) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s_%d_%d.%s", kind.c_str(), video, index, ext);
  return buf;
}

/// mask_{video}_{slice}.pgm: white = masked.
inline std::vector<std::filesystem::path> write_mask_slices(const std::filesystem::path& dir, int video,
                                                            const BinaryMask& mask,
                                                            const videocore::PatchConfig& patch) {
  std::vector<float> cells(mask.bits.begin(), mask.bits.end());
  std::vector<std::filesystem::path> out;
  for (int tau = 0; tau < mask.grid.T; ++tau) {
    out.push_back(dir / panel_name("mask", video, tau, "pgm"));
    write_pgm(out.back(), mask.grid.W * patch.w, mask.grid.H * patch.h, upsample_slice(cells, mask.grid, tau, patch));
  }
  return out;
}

/// attention_{video}_{slice}.pgm: weights divided by their maximum over the
/// whole clip.
template <typename T>
std::vector<std::filesystem::path> write_attention(const std::filesystem::path& dir, int video,
                                                   const model::AttentionMap<T>& a,
                                                   const videocore::PatchConfig& patch) {
  T mx = 0;
  for (T w : a.weights) mx = std::max(mx, w);
  std::vector<float> cells;
  for (T w : a.weights) cells.push_back(mx > 0 ? static_cast<float>(w / mx) : 0.f);
  std::vector<std::filesystem::path> out;
  for (int tau = 0; tau < a.grid.T; ++tau) {
    out.push_back(dir / panel_name("attention", video, tau, "pgm"));
    write_pgm(out.back(), a.grid.W * patch.w, a.grid.H * patch.h, upsample_slice(cells, a.grid, tau, patch));
  }
  return out;
}

/// Reconstructed clip: visible cubes copied from the input, masked cubes
/// from the decoder output mapped back through the per-patch statistics.
template <typename T>
VideoClip reconstruct(model::VideoMAE<T>& m, const VideoClip& video, const BinaryMask& mask, bool norm_pix) {
  const auto& mc = m.config();
  const Mat<T> cubes = videocore::extract_cubes<T>(video, mc.patch);
  const auto part = masking::partition(mask);
  model::EncoderCache<T> ec;
  model::DecoderCache<T> dc;
  const Mat<T> pred = m.decode(m.encode(cubes, part.visible, ec), part, dc);
  auto out = norm_pix ? videocore::normalize_targets<T>(video, mc.patch)
                      : videocore::raw_targets<T>(video, mc.patch);
  for (int idx : part.masked) out.values.row(idx) = pred.row(idx);
  VideoClip v = videocore::unpatchify<T>(out, mask.grid, mc.patch, video.C);
  for (float& x : v.data) x = std::clamp(x, 0.f, 1.f);
  return v;
}

/// Input frames with masked cubes greyed out.
inline VideoClip masked_input(const VideoClip& video, const BinaryMask& mask, const videocore::PatchConfig& patch) {
  VideoClip v = video;
  for (int t = 0; t < v.T; ++t)
    for (int y = 0; y < v.H; ++y)
      for (int x = 0; x < v.W; ++x)
        if (mask.masked(mask.grid.token(t / patch.t, y / patch.h, x / patch.w)))
          for (int c = 0; c < v.C; ++c) v.at(t, y, x, c) = 0.5f;
  return v;
}

inline std::vector<std::filesystem::path> write_frames(const std::filesystem::path& dir, const std::string& kind,
                                                       int video, const VideoClip& v) {
  std::vector<std::filesystem::path> out;
  for (int t = 0; t < v.T; ++t) {
    out.push_back(dir / panel_name(kind, video, t, "ppm"));
    write_ppm(out.back(), v.W, v.H, frame_rgb(v, t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss curves

struct Series {
  std::string label;
  std::vector<double> x, y;
};

/// Reads column `column` against `step` from a loss CSV. Rows with a wrong
/// field count or non-numeric fields are format errors.
inline Series read_series(const std::filesystem::path& path, const std::string& column,
                          const std::string& label = "") {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) return {label.empty() ? path.stem().string() : label, {}, {}};
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string f; std::getline(ss, f, ',');) out.push_back(config::detail::trim(f));
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  const auto header = split(line);
  const auto find = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError(path.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t xs = find("step"), ys = find(column);
  Series s{label.empty() ? path.stem().string() : label, {}, {}};
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (config::detail::trim(line).empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size())
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(header.size()) + " fields");
    try {
      std::size_t used = 0;
      const double x = std::stod(f[xs], &used);
      if (used != f[xs].size()) throw std::invalid_argument("trailing");
      const double y = std::stod(f[ys], &used);
      if (used != f[ys].size()) throw std::invalid_argument("trailing");
      s.x.push_back(x);
      s.y.push_back(y);
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": non-numeric field");
    }
  }
  return s;
}

inline std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

/// SVG line plot, one polyline per non-empty series. Empty series are
/// reported on `warn` and skipped. Output depends only on the input values.
inline std::string plot_svg(const std::vector<Series>& series, const std::string& title, std::ostream& warn,
                            int width = 640, int height = 400) {
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};
  std::vector<const Series*> live;
  for (const auto& s : series) {
    if (s.x.empty()) warn << "warning: series '" << s.label << "' is empty; skipped\n";
    else live.push_back(&s);
  }
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!live.empty()) {
    x0 = y0 = std::numeric_limits<double>::infinity();
    x1 = y1 = -std::numeric_limits<double>::infinity();
    for (const auto* s : live)
      for (std::size_t i = 0; i < s->x.size(); ++i) {
        x0 = std::min(x0, s->x[i]);
        x1 = std::max(x1, s->x[i]);
        y0 = std::min(y0, s->y[i]);
        y1 = std::max(y1, s->y[i]);
      }
    if (x1 <= x0) x1 = x0 + 1;
    if (y1 <= y0) y1 = y0 + 1;
  }
  const double ml = 60, mr = 150, mt = 30, mb = 40;
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return mt + ph - (y - y0) / (y1 - y0) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << ml << "\" y=\"18\" font-size=\"13\">" << title << "</text>\n";
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = y0 + (y1 - y0) * k / 4.0, xv = x0 + (x1 - x0) * k / 4.0;
    os << "<text x=\"" << fmt_num(ml - 4) << "\" y=\"" << fmt_num(py(yv) + 4) << "\" text-anchor=\"end\">"
       << fmt_tick(yv) << "</text>\n";
    os << "<text x=\"" << fmt_num(px(xv)) << "\" y=\"" << fmt_num(mt + ph + 16) << "\" text-anchor=\"middle\">"
       << fmt_tick(xv) << "</text>\n";
  }
  os << "<text x=\"" << fmt_num(ml + pw / 2) << "\" y=\"" << height - 6 << "\" text-anchor=\"middle\">step</text>\n";
  for (std::size_t k = 0; k < live.size(); ++k) {
    const char* color = kColors[k % std::size(kColors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < live[k]->x.size(); ++i)
      os << (i ? " " : "") << fmt_num(px(live[k]->x[i])) << ',' << fmt_num(py(live[k]->y[i]));
    os << "\"/>\n";
    const double ly = mt + 14 + 16.0 * static_cast<double>(k);
    os << "<line x1=\"" << fmt_num(ml + pw + 10) << "\" y1=\"" << fmt_num(ly - 4) << "\" x2=\"" << fmt_num(ml + pw + 30)
       << "\" y2=\"" << fmt_num(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << fmt_num(ml + pw + 34) << "\" y=\"" << fmt_num(ly) << "\">" << live[k]->label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

/// Overlays `column` (nce_diagnostic by default) from each CSV.
inline std::string plot_losses(const std::vector<std::filesystem::path>& csvs, const std::vector<std::string>& labels,
                               std::ostream& warn, const std::string& column = "nce_diagnostic") {
  if (csvs.empty()) throw ConfigError("plot_losses needs at least one CSV");
  std::vector<Series> series;
  for (std::size_t i = 0; i < csvs.size(); ++i)
    series.push_back(read_series(csvs[i], column, i < labels.size() ? labels[i] : ""));
  return plot_svg(series, column, warn);
}

}  // namespace tgm::viz
