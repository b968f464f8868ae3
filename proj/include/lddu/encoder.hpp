#pragma once

// Per-modality pre-norm transformer stacks producing contextual sequences O^m.

#include <array>
#include <random>
#include <string>
#include <vector>

#include "lddu/dataset.hpp"
#include "lddu/layers.hpp"

namespace lddu {

struct EncoderConfig {
  std::array<int, 3> layers{3, 3, 3};  // visual, audio, text
  int width = 256;
  int heads = 4;
  int ffn = 512;
  double dropout = 0.0;
  int max_len = 64;

  void validate() const {
    for (int l : layers)
      if (l < 1) throw ConfigError("encoder.layers must be >= 1 for every modality");
    if (width < 1 || heads < 1) throw ConfigError("encoder.width and encoder.heads must be positive");
    if (width % heads != 0) throw ConfigError("encoder.width must be divisible by encoder.heads");
    if (ffn < 1) throw ConfigError("encoder.ffn must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("encoder.dropout must lie in [0, 1)");
    if (max_len < 1) throw ConfigError("encoder.max_len must be positive");
  }
};

/// Training-time switches threaded through a forward pass.
struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;
  const Matrix* gate_override = nullptr;  // fixed fusion gate [B x 1], for gradient checks
};

/// Contextualized sequence of one modality, stacked [B*L x width].
struct EncodedSequence {
  ad::Var output;
  const std::vector<std::vector<bool>>* masks = nullptr;
  Index len = 0;
};

struct EncodedModalities {
  std::array<EncodedSequence, 3> seq;
  const EncodedSequence& operator[](Modality m) const { return seq[static_cast<int>(m)]; }
};

class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(ParameterStore& store, const std::string& prefix, int input_dim, int layers,
                     const EncoderConfig& cfg, std::mt19937_64& rng)
      : cfg_(cfg), input_dim_(input_dim) {
    input_ = Linear(store, prefix + ".input", input_dim, cfg.width, rng);
    pos_ = &store.add(prefix + ".pos", normal_matrix(cfg.max_len, cfg.width, 0.02, rng));
    for (int l = 0; l < layers; ++l) {
      const std::string p = prefix + ".layer" + std::to_string(l);
      Block b;
      b.ln1 = LayerNorm(store, p + ".ln1", cfg.width);
      b.wq = Linear(store, p + ".attn.q", cfg.width, cfg.width, rng);
      b.wk = Linear(store, p + ".attn.k", cfg.width, cfg.width, rng);
      b.wv = Linear(store, p + ".attn.v", cfg.width, cfg.width, rng);
      b.wo = Linear(store, p + ".attn.o", cfg.width, cfg.width, rng);
      b.ln2 = LayerNorm(store, p + ".ln2", cfg.width);
      b.ff1 = Linear(store, p + ".ffn.in", cfg.width, cfg.ffn, rng);
      b.ff2 = Linear(store, p + ".ffn.out", cfg.ffn, cfg.width, rng);
      blocks_.push_back(b);
    }
    final_ln_ = LayerNorm(store, prefix + ".ln_final", cfg.width);
  }

  /// frames: one [L x d] zero-padded matrix per sample, all with the same L.
  ad::Var forward(ad::Tape& t, const std::vector<Matrix>& frames, const std::vector<std::vector<bool>>& masks,
                  const ForwardContext& ctx) const {
    if (frames.empty()) throw ShapeError("encoder: empty batch");
    const Index len = frames.front().rows();
    if (len > cfg_.max_len) {
      throw ShapeError("encoder: sequence length " + std::to_string(len) + " exceeds encoder.max_len " +
                       std::to_string(cfg_.max_len));
    }
    Matrix stacked(static_cast<Index>(frames.size()) * len, input_dim_);
    for (std::size_t b = 0; b < frames.size(); ++b) {
      if (frames[b].rows() != len || frames[b].cols() != input_dim_) {
        throw ShapeError("encoder: expected [" + std::to_string(len) + " x " + std::to_string(input_dim_) +
                         "] frames, got " + shape_str(frames[b]));
      }
      stacked.middleRows(static_cast<Index>(b) * len, len) = frames[b];
    }
    const Index batch = static_cast<Index>(frames.size());
    ad::Var pos = ad::tile_rows(ad::slice_rows(t.param(*pos_), 0, len), batch);
    ad::Var h = input_(t, t.constant(std::move(stacked))) + pos;
    const bool drop = ctx.training && cfg_.dropout > 0.0 && ctx.rng != nullptr;
    for (const Block& b : blocks_) {
      ad::Var x = b.ln1(t, h);
      ad::Var a = ad::multi_head_self_attention(b.wq(t, x), b.wk(t, x), b.wv(t, x), masks, len, cfg_.heads);
      a = b.wo(t, a);
      if (drop) a = ad::dropout(a, cfg_.dropout, *ctx.rng);
      h = h + a;
      ad::Var f = b.ff2(t, ad::gelu(b.ff1(t, b.ln2(t, h))));
      if (drop) f = ad::dropout(f, cfg_.dropout, *ctx.rng);
      h = h + f;
    }
    return final_ln_(t, h);
  }

  int input_dim() const { return input_dim_; }

 private:
  struct Block {
    LayerNorm ln1, ln2;
    Linear wq, wk, wv, wo, ff1, ff2;
  };

  EncoderConfig cfg_;
  int input_dim_ = 0;
  Linear input_;
  Parameter* pos_ = nullptr;
  std::vector<Block> blocks_;
  LayerNorm final_ln_;
};

/// Independent encoder stacks for visual, audio and text.
class UnimodalEncoders {
 public:
  UnimodalEncoders() = default;
  UnimodalEncoders(ParameterStore& store, const std::array<int, 3>& input_dims, const EncoderConfig& cfg,
                   std::mt19937_64& rng)
      : cfg_(cfg) {
    cfg.validate();
    for (Modality m : kModalities) {
      const int k = static_cast<int>(m);
      enc_[k] = TransformerEncoder(store, std::string("enc.") + modality_short(m), input_dims[k], cfg.layers[k], cfg,
                                   rng);
    }
  }

  EncodedModalities encode(ad::Tape& t, const Batch& batch, const ForwardContext& ctx) const {
    EncodedModalities out;
    for (Modality m : kModalities) {
      const ModalityBlock& blk = batch.block(m);
      EncodedSequence& s = out.seq[static_cast<int>(m)];
      s.output = enc_[static_cast<int>(m)].forward(t, blk.frames, blk.mask, ctx);
      s.masks = &blk.mask;
      s.len = blk.max_len;
    }
    return out;
  }

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  std::array<TransformerEncoder, 3> enc_;
};

}  // namespace lddu
