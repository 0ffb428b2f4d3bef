// Asymmetric masked video autoencoder: visible-token encoder, lightweight
// decoder with a shared mask token, contrastive projection head and an
// optional classifier for transfer.
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tgm/masking.hpp"
#include "tgm/nn.hpp"
#include "tgm/videocore.hpp"

namespace tgm::model {

using masking::MaskedPartition;
using videocore::Grid;
using videocore::PatchConfig;

struct ModelConfig {
  // clip geometry the positional tables are built for
  int frames = 8, height = 32, width = 32, channels = 3;
  PatchConfig patch{2, 8, 8};

  int D = 96, depth = 4, heads = 4;
  int decoder_D = 48, decoder_depth = 2, decoder_heads = 4;
  double mlp_ratio = 4.0;
  int D_proj = 32, proj_hidden = 128;
  int D_text = 16;
  bool text_head = false;
  int num_classes = 0;  // 0 = no classifier
  std::uint64_t init_seed = 0;

  Grid grid() const { return videocore::grid_for(frames, height, width, patch); }
  int tokens() const { return grid().size(); }
  int cube_size() const { return patch.cube_size(channels); }

  void validate() const {
    grid();
    if (D <= 0 || decoder_D <= 0 || depth < 0 || decoder_depth < 0)
      throw ConfigError("model widths must be positive and depths non-negative");
    if (heads <= 0 || D % heads != 0) throw ConfigError("model.D must be divisible by model.heads");
    if (decoder_heads <= 0 || decoder_D % decoder_heads != 0)
      throw ConfigError("model.decoder_D must be divisible by model.decoder_heads");
    if (D % 2 != 0 || decoder_D % 2 != 0) throw ConfigError("model widths must be even");
    if (D_proj <= 0 || proj_hidden <= 0) throw ConfigError("projection widths must be positive");
    if (!text_head && D_proj < D_text)
      throw ConfigError("model.D_proj must be >= the text embedding width without a text head");
  }
};

template <typename T>
struct EncoderCache {
  std::vector<int> visible;
  Mat<T> cubes;  // visible cubes [L_v x P]
  std::vector<typename nn::Block<T>::Cache> blocks;
  Mat<T> out;    // E [L_v x D]
};

template <typename T>
struct DecoderCache {
  MaskedPartition part;
  Mat<T> enc;  // encoder output fed to the decoder embedding
  std::vector<typename nn::Block<T>::Cache> blocks;
  Mat<T> last;  // input to the reconstruction head
};

template <typename T>
struct HeadCache {
  Mat<T> pooled, hidden, bn_out, relu_out, pre_norm, out;
  typename nn::BatchNorm<T>::Cache bn;
  std::vector<T> norms;
};

/// Projection head: linear -> batch norm -> ReLU -> linear -> l2 normalize.
template <typename T>
struct ProjectionHead {
  nn::Linear<T> fc1;
  nn::BatchNorm<T> bn;
  nn::Linear<T> fc2;

  ProjectionHead() = default;
  ProjectionHead(int in, int hidden, int out, int depth, Rng& rng)
      : fc1("proj_head.fc1", in, hidden, depth, rng),
        bn("proj_head.bn", hidden, depth),
        fc2("proj_head.fc2", hidden, out, depth, rng) {}

  /// `pooled` holds one row per sample. Training mode needs >= 2 rows.
  Mat<T> forward(const Mat<T>& pooled, HeadCache<T>& c, bool training,
                 bool update_running = true) {
    c.pooled = pooled;
    c.hidden = fc1.forward(pooled);
    c.bn_out = bn.forward(c.hidden, c.bn, training, update_running);
    c.relu_out = c.bn_out.cwiseMax(T(0));
    c.pre_norm = fc2.forward(c.relu_out);
    c.out = nn::l2_normalize_rows(c.pre_norm, c.norms);
    return c.out;
  }

  Mat<T> backward(const Mat<T>& dout, const HeadCache<T>& c) {
    const Mat<T> dpre = nn::l2_normalize_backward(c.out, c.norms, dout);
    Mat<T> drelu = fc2.backward(c.relu_out, dpre);
    drelu = (c.bn_out.array() > T(0)).select(drelu, T(0));
    return fc1.backward(c.pooled, bn.backward(drelu, c.bn));
  }

  void collect(nn::ParamList<T>& out) {
    fc1.collect(out);
    bn.collect(out);
    fc2.collect(out);
  }
};

/// Options for one encoder pass.
struct EncodeOptions {
  double drop_path = 0.0;  // maximum stochastic-depth rate (linear over depth)
  Rng* rng = nullptr;      // required when drop_path > 0
};

template <typename T>
class VideoMAE {
 public:
  explicit VideoMAE(const ModelConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    Rng rng(derive_seed(cfg.init_seed, 0, 17));
    const Grid g = cfg.grid();
    const int P = cfg.cube_size();
    patch_embed = nn::Linear<T>("patch_embed", P, cfg.D, 0, rng);
    for (int i = 0; i < cfg.depth; ++i)
      blocks.emplace_back("blocks." + std::to_string(i), cfg.D, cfg.heads, cfg.mlp_ratio, i + 1, rng);
    const int head_depth = cfg.depth + 1;
    decoder_embed = nn::Linear<T>("decoder_embed", cfg.D, cfg.decoder_D, head_depth, rng);
    mask_token = nn::Parameter<T>("mask_token", Mat<T>::Zero(1, cfg.decoder_D), head_depth, false);
    for (int i = 0; i < cfg.decoder_depth; ++i)
      decoder_blocks.emplace_back("decoder_blocks." + std::to_string(i), cfg.decoder_D,
                                  cfg.decoder_heads, cfg.mlp_ratio, head_depth, rng);
    decoder_head = nn::Linear<T>("decoder_head", cfg.decoder_D, P, head_depth, rng);
    proj_head = ProjectionHead<T>(cfg.D, cfg.proj_hidden, cfg.D_proj, head_depth, rng);
    if (cfg.text_head) text_head = nn::Linear<T>("text_head", cfg.D_text, cfg.D_proj, head_depth, rng);
    if (cfg.num_classes > 0) add_classifier(cfg.num_classes);
    enc_pos_ = nn::sincos_3d<T>(g.T, g.H, g.W, cfg.D);
    dec_pos_ = nn::sincos_3d<T>(g.T, g.H, g.W, cfg.decoder_D);
  }

  const ModelConfig& config() const { return cfg_; }
  Grid grid() const { return cfg_.grid(); }
  const Mat<T>& encoder_positions() const { return enc_pos_; }
  const Mat<T>& decoder_positions() const { return dec_pos_; }

  void add_classifier(int classes) {
    Rng rng(derive_seed(cfg_.init_seed, 1, 17));
    cfg_.num_classes = classes;
    classifier = nn::Linear<T>("classifier", cfg_.D, classes, cfg_.depth + 1, rng);
    classifier.weight.value *= T(0.1);
  }
  bool has_classifier() const { return cfg_.num_classes > 0; }

  /// Encoder over the visible tokens only. `cubes` is the full [L x P] cube
  /// matrix; rows not listed in `visible` are never touched.
  Mat<T> encode(const Mat<T>& cubes, const std::vector<int>& visible, EncoderCache<T>& c,
                const EncodeOptions& opt = {}) const {
    const int L = cfg_.tokens();
    if (cubes.rows() != L || cubes.cols() != cfg_.cube_size())
      throw DimensionError("cube matrix does not match the model geometry");
    c.visible = visible;
    c.cubes.resize(static_cast<Eigen::Index>(visible.size()), cubes.cols());
    Mat<T> pos(static_cast<Eigen::Index>(visible.size()), cfg_.D);
    for (std::size_t r = 0; r < visible.size(); ++r) {
      const int idx = visible[r];
      if (idx < 0 || idx >= L) throw std::out_of_range("visible token index out of range");
      c.cubes.row(static_cast<Eigen::Index>(r)) = cubes.row(idx);
      pos.row(static_cast<Eigen::Index>(r)) = enc_pos_.row(idx);
    }
    Mat<T> x = patch_embed.forward(c.cubes) + pos;
    c.blocks.resize(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      nn::BranchScale<T> scale;
      if (opt.drop_path > 0.0) {
        if (!opt.rng) throw std::invalid_argument("drop path needs an rng");
        const double rate = blocks.size() > 1
                                ? opt.drop_path * static_cast<double>(b) / static_cast<double>(blocks.size() - 1)
                                : opt.drop_path;
        scale = nn::sample_drop_path<T>(rate, *opt.rng);
      }
      x = blocks[b].forward(x, c.blocks[b], scale);
    }
    c.out = x;
    return x;
  }

  void encode_backward(const Mat<T>& dout, const EncoderCache<T>& c) {
    Mat<T> d = dout;
    for (std::size_t b = blocks.size(); b-- > 0;) d = blocks[b].backward(d, c.blocks[b]);
    patch_embed.backward(c.cubes, d);
  }

  /// Decoder over the full token set: projected encoder rows at visible
  /// positions, the mask token elsewhere, plus positions.
  Mat<T> decode(const Mat<T>& enc, const MaskedPartition& part, DecoderCache<T>& c) const {
    const int L = cfg_.tokens();
    if (part.size() != L || enc.rows() != static_cast<Eigen::Index>(part.visible.size()))
      throw DimensionError("partition does not match the encoder output");
    c.part = part;
    c.enc = enc;
    const Mat<T> y = decoder_embed.forward(enc);
    Mat<T> x = dec_pos_;
    for (std::size_t r = 0; r < part.visible.size(); ++r)
      x.row(part.visible[r]) += y.row(static_cast<Eigen::Index>(r));
    for (int idx : part.masked) x.row(idx) += mask_token.value.row(0);
    c.blocks.resize(decoder_blocks.size());
    for (std::size_t b = 0; b < decoder_blocks.size(); ++b)
      x = decoder_blocks[b].forward(x, c.blocks[b]);
    c.last = x;
    return decoder_head.forward(x);
  }

  /// Returns dL/d(encoder output).
  Mat<T> decode_backward(const Mat<T>& dpred, const DecoderCache<T>& c) {
    Mat<T> d = decoder_head.backward(c.last, dpred);
    for (std::size_t b = decoder_blocks.size(); b-- > 0;) d = decoder_blocks[b].backward(d, c.blocks[b]);
    for (int idx : c.part.masked) mask_token.grad += d.row(idx);
    Mat<T> dy(static_cast<Eigen::Index>(c.part.visible.size()), cfg_.decoder_D);
    for (std::size_t r = 0; r < c.part.visible.size(); ++r)
      dy.row(static_cast<Eigen::Index>(r)) = d.row(c.part.visible[r]);
    return decoder_embed.backward(c.enc, dy);
  }

  static RowVec<T> mean_pool(const Mat<T>& enc) {
    return enc.colwise().sum() / static_cast<T>(enc.rows());
  }

  /// Text embeddings in projection space: through the optional text head,
  /// otherwise zero-padded to D_proj (norm and cosines preserved).
  Mat<T> text_features(const Mat<T>& text, Mat<T>* pre = nullptr,
                       std::vector<T>* norms = nullptr) const {
    if (cfg_.text_head) {
      const Mat<T> z = text_head.forward(text);
      std::vector<T> local;
      Mat<T> out = nn::l2_normalize_rows(z, norms ? *norms : local);
      if (pre) *pre = z;
      return out;
    }
    Mat<T> out = Mat<T>::Zero(text.rows(), cfg_.D_proj);
    out.leftCols(text.cols()) = text;
    return out;
  }

  /// Full unmasked pass, mean pooled: the representation used for probing,
  /// finetuning and retrieval.
  RowVec<T> features(const Mat<T>& cubes, EncoderCache<T>* cache = nullptr,
                     const EncodeOptions& opt = {}) const {
    EncoderCache<T> local;
    EncoderCache<T>& c = cache ? *cache : local;
    return mean_pool(encode(cubes, all_tokens(), c, opt));
  }

  std::vector<int> all_tokens() const {
    std::vector<int> v(static_cast<std::size_t>(cfg_.tokens()));
    for (int i = 0; i < cfg_.tokens(); ++i) v[static_cast<std::size_t>(i)] = i;
    return v;
  }

  /// Every trainable parameter, in a stable order.
  nn::ParamList<T> parameters() {
    nn::ParamList<T> out;
    patch_embed.collect(out);
    for (auto& b : blocks) b.collect(out);
    decoder_embed.collect(out);
    out.push_back(&mask_token);
    for (auto& b : decoder_blocks) b.collect(out);
    decoder_head.collect(out);
    proj_head.collect(out);
    if (cfg_.text_head) text_head.collect(out);
    if (has_classifier()) classifier.collect(out);
    return out;
  }

  /// Encoder-side parameters (patch embedding and blocks).
  nn::ParamList<T> encoder_parameters() {
    nn::ParamList<T> out;
    patch_embed.collect(out);
    for (auto& b : blocks) b.collect(out);
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  /// FNV-1a over the encoder parameter values.
  std::uint64_t encoder_checksum() {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto* p : encoder_parameters())
      h = fnv1a(p->value.data(), sizeof(T) * static_cast<std::size_t>(p->value.size()), h);
    return h;
  }

  nn::Linear<T> patch_embed;
  std::vector<nn::Block<T>> blocks;
  nn::Linear<T> decoder_embed;
  nn::Parameter<T> mask_token;
  std::vector<nn::Block<T>> decoder_blocks;
  nn::Linear<T> decoder_head;
  ProjectionHead<T> proj_head;
  nn::Linear<T> text_head;
  nn::Linear<T> classifier;

 private:
  ModelConfig cfg_;
  Mat<T> enc_pos_, dec_pos_;
};

/// Query row of one encoder attention head over the full (unmasked) clip.
template <typename T>
struct AttentionMap {
  Grid grid;
  int query = 0;
  std::vector<T> weights;  // one per key token, sums to 1
};

/// Centre patch of the centre frame: the token containing frame T/2 and the
/// middle row/column of the grid.
inline int center_query_token(const ModelConfig& cfg) {
  const Grid g = cfg.grid();
  const int tau = (cfg.frames / 2) / cfg.patch.t;
  return g.token(std::min(tau, g.T - 1), g.H / 2, g.W / 2);
}

template <typename T>
AttentionMap<T> attention_map(const VideoMAE<T>& m, const Mat<T>& cubes, int layer, int head,
                              std::optional<int> query = std::nullopt) {
  const auto& cfg = m.config();
  if (layer < 0 || layer >= cfg.depth) throw std::out_of_range("attention layer out of range");
  if (head < 0 || head >= cfg.heads) throw std::out_of_range("attention head out of range");
  EncoderCache<T> cache;
  m.encode(cubes, m.all_tokens(), cache);
  const Mat<T>& p = cache.blocks[static_cast<std::size_t>(layer)].attn.probs[static_cast<std::size_t>(head)];
  AttentionMap<T> out{cfg.grid(), query.value_or(center_query_token(cfg)), {}};
  if (out.query < 0 || out.query >= p.rows()) throw std::out_of_range("query token out of range");
  out.weights.assign(p.row(out.query).data(), p.row(out.query).data() + p.cols());
  return out;
}

}  // namespace tgm::model
