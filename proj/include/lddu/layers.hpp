#pragma once

// Building blocks shared by the model modules. Sequences of a batch are stored
// stacked: sample b occupies rows [b*L, (b+1)*L) of a [B*L x width] matrix, with a
// per-sample validity mask over its L positions.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "lddu/autodiff.hpp"
#include "lddu/params.hpp"

namespace lddu {

/// Affine map x W + b registered under `<prefix>.w` / `<prefix>.b`.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& prefix, Index in, Index out, std::mt19937_64& rng)
      : w_(&store.add(prefix + ".w", xavier_uniform(in, out, rng))),
        b_(&store.add(prefix + ".b", Matrix::Zero(1, out))) {}

  ad::Var operator()(ad::Tape& t, const ad::Var& x) const { return ad::add_row(ad::matmul(x, t.param(*w_)), t.param(*b_)); }

  Parameter& weight() const { return *w_; }
  Parameter& bias() const { return *b_; }
  Index in() const { return w_->value.rows(); }
  Index out() const { return w_->value.cols(); }

 private:
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
};

/// Row-wise layer normalization with learned gain and bias.
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& prefix, Index width)
      : g_(&store.add(prefix + ".g", Matrix::Ones(1, width))), b_(&store.add(prefix + ".b", Matrix::Zero(1, width))) {}

  ad::Var operator()(ad::Tape& t, const ad::Var& x) const {
    return ad::layer_norm_rows(x, t.param(*g_), t.param(*b_));
  }

 private:
  Parameter* g_ = nullptr;
  Parameter* b_ = nullptr;
};

/// One hidden GELU layer followed by a linear readout.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& prefix, Index in, Index hidden, Index out, std::mt19937_64& rng)
      : hidden_(store, prefix + ".hidden", in, hidden, rng), out_(store, prefix + ".out", hidden, out, rng) {}

  ad::Var operator()(ad::Tape& t, const ad::Var& x) const { return out_(t, ad::gelu(hidden_(t, x))); }

  const Linear& hidden() const { return hidden_; }
  const Linear& out() const { return out_; }

 private:
  Linear hidden_;
  Linear out_;
};

namespace ad {

/// [B*g x d] -> [B x g*d]: row b is the concatenation of rows b*g .. b*g+g-1.
inline Var group_rows(const Var& x, Index group) {
  if (group <= 0 || x.rows() % group != 0) throw ShapeError("group_rows: rows not divisible by group");
  Tape& t = *x.tape();
  const Index b = x.rows() / group, d = x.cols();
  Matrix y(b, group * d);
  for (Index i = 0; i < b; ++i)
    for (Index k = 0; k < group; ++k) y.block(i, k * d, 1, d) = x.value().row(i * group + k);
  if (!x.requires_grad()) return t.constant(std::move(y));
  const std::size_t ix = x.id();
  return t.push(std::move(y), true, [ix, b, group, d](Tape& tp, const Matrix& g) {
    Matrix dx(b * group, d);
    for (Index i = 0; i < b; ++i)
      for (Index k = 0; k < group; ++k) dx.row(i * group + k) = g.block(i, k * d, 1, d);
    tp.accumulate(ix, dx);
  });
}

/// Repeats x [L x d] vertically `times` times.
inline Var tile_rows(const Var& x, Index times) {
  Tape& t = *x.tape();
  const Index l = x.rows();
  Matrix y = x.value().replicate(times, 1);
  if (!x.requires_grad()) return t.constant(std::move(y));
  const std::size_t ix = x.id();
  return t.push(std::move(y), true, [ix, l, times](Tape& tp, const Matrix& g) {
    Matrix dx = Matrix::Zero(l, g.cols());
    for (Index k = 0; k < times; ++k) dx += g.middleRows(k * l, l);
    tp.accumulate(ix, dx);
  });
}

namespace detail {

inline void masked_softmax_inplace(Matrix& s, const std::vector<bool>& valid) {
  for (Index i = 0; i < s.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < s.cols(); ++j)
      if (valid[static_cast<std::size_t>(j)]) mx = std::max(mx, s(i, j));
    double z = 0.0;
    for (Index j = 0; j < s.cols(); ++j) {
      if (valid[static_cast<std::size_t>(j)]) {
        s(i, j) = std::exp(s(i, j) - mx);
        z += s(i, j);
      } else {
        s(i, j) = 0.0;
      }
    }
    s.row(i) /= z;
  }
}

inline void check_masks(const std::vector<std::vector<bool>>& masks, Index rows, Index len, const char* op) {
  if (len <= 0 || rows != static_cast<Index>(masks.size()) * len) {
    throw ShapeError(std::string(op) + ": stacked rows do not match batch size x sequence length");
  }
  for (const auto& m : masks) {
    if (static_cast<Index>(m.size()) != len) throw ShapeError(std::string(op) + ": mask length mismatch");
    bool any = false;
    for (bool v : m) any = any || v;
    if (!any) throw ValidationError(std::string(op) + ": sequence with no valid frames");
  }
}

}  // namespace detail

/// Scaled dot-product self-attention over stacked sequences, `heads` heads of
/// width d/heads. Keys at masked positions receive zero weight.
inline Var multi_head_self_attention(const Var& q, const Var& k, const Var& v,
                                     const std::vector<std::vector<bool>>& masks, Index len, Index heads) {
  const Index width = q.cols();
  if (k.cols() != width || v.cols() != width || k.rows() != q.rows() || v.rows() != q.rows()) {
    throw ShapeError("multi_head_self_attention: q/k/v shape mismatch");
  }
  if (heads <= 0 || width % heads != 0) throw ShapeError("multi_head_self_attention: width not divisible by heads");
  detail::check_masks(masks, q.rows(), len, "multi_head_self_attention");
  const Index batch = static_cast<Index>(masks.size());
  const Index dk = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Tape& t = *q.tape();
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  Matrix out(q.rows(), width);
  std::vector<Matrix> probs(static_cast<std::size_t>(batch * heads));
  for (Index b = 0; b < batch; ++b) {
    for (Index h = 0; h < heads; ++h) {
      Matrix s = qv.block(b * len, h * dk, len, dk) * kv.block(b * len, h * dk, len, dk).transpose() * scale;
      detail::masked_softmax_inplace(s, masks[static_cast<std::size_t>(b)]);
      out.block(b * len, h * dk, len, dk) = s * vv.block(b * len, h * dk, len, dk);
      probs[static_cast<std::size_t>(b * heads + h)] = std::move(s);
    }
  }
  if (!(q.requires_grad() || k.requires_grad() || v.requires_grad())) return t.constant(std::move(out));
  const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
  return t.push(std::move(out), true,
                [iq, ik, iv, batch, heads, len, dk, scale, probs = std::move(probs)](Tape& tp, const Matrix& g) {
                  const Matrix& qv = tp.value(iq);
                  const Matrix& kv = tp.value(ik);
                  const Matrix& vv = tp.value(iv);
                  Matrix dq = Matrix::Zero(qv.rows(), qv.cols());
                  Matrix dk_ = Matrix::Zero(kv.rows(), kv.cols());
                  Matrix dv = Matrix::Zero(vv.rows(), vv.cols());
                  for (Index b = 0; b < batch; ++b) {
                    for (Index h = 0; h < heads; ++h) {
                      const Matrix& p = probs[static_cast<std::size_t>(b * heads + h)];
                      const auto go = g.block(b * len, h * dk, len, dk);
                      Matrix dp = go * vv.block(b * len, h * dk, len, dk).transpose();
                      dv.block(b * len, h * dk, len, dk) = p.transpose() * go;
                      Vector dot = dp.cwiseProduct(p).rowwise().sum();
                      Matrix ds = p.cwiseProduct(dp - dot.replicate(1, len)) * scale;
                      dq.block(b * len, h * dk, len, dk) = ds * kv.block(b * len, h * dk, len, dk);
                      dk_.block(b * len, h * dk, len, dk) = ds.transpose() * qv.block(b * len, h * dk, len, dk);
                    }
                  }
                  tp.accumulate(iq, dq);
                  tp.accumulate(ik, dk_);
                  tp.accumulate(iv, dv);
                });
}

/// Label-query attention pooling. The logits of sample b are
/// label_proj [q x p] times frame_proj_b^T [p x L]; softmax runs over the valid
/// frames and the result pools frame_proj_b. Returns the pooled features stacked
/// as [B*q x p]; attention maps [q x L] per sample go to `maps` when given.
inline Var label_attention(const Var& label_proj, const Var& frame_proj, const std::vector<std::vector<bool>>& masks,
                           Index len, std::vector<Matrix>* maps = nullptr) {
  if (label_proj.cols() != frame_proj.cols()) throw ShapeError("label_attention: projection widths differ");
  detail::check_masks(masks, frame_proj.rows(), len, "label_attention");
  const Index batch = static_cast<Index>(masks.size());
  const Index q = label_proj.rows();
  const Index p = label_proj.cols();
  Tape& t = *label_proj.tape();
  const Matrix& lv = label_proj.value();
  const Matrix& fv = frame_proj.value();
  Matrix out(batch * q, p);
  std::vector<Matrix> attn(static_cast<std::size_t>(batch));
  for (Index b = 0; b < batch; ++b) {
    Matrix a = lv * fv.middleRows(b * len, len).transpose();
    detail::masked_softmax_inplace(a, masks[static_cast<std::size_t>(b)]);
    out.middleRows(b * q, q) = a * fv.middleRows(b * len, len);
    attn[static_cast<std::size_t>(b)] = std::move(a);
  }
  if (maps) *maps = attn;
  if (!(label_proj.requires_grad() || frame_proj.requires_grad())) return t.constant(std::move(out));
  const std::size_t il = label_proj.id(), iff = frame_proj.id();
  return t.push(std::move(out), true, [il, iff, batch, q, len, attn = std::move(attn)](Tape& tp, const Matrix& g) {
    const Matrix& lv = tp.value(il);
    const Matrix& fv = tp.value(iff);
    Matrix dl = Matrix::Zero(lv.rows(), lv.cols());
    Matrix df = Matrix::Zero(fv.rows(), fv.cols());
    for (Index b = 0; b < batch; ++b) {
      const Matrix& a = attn[static_cast<std::size_t>(b)];
      const auto go = g.middleRows(b * q, q);
      const auto fb = fv.middleRows(b * len, len);
      Matrix da = go * fb.transpose();
      Vector dot = da.cwiseProduct(a).rowwise().sum();
      Matrix ds = a.cwiseProduct(da - dot.replicate(1, len));
      dl += ds * fb;
      df.middleRows(b * len, len) = a.transpose() * go + ds.transpose() * lv;
    }
    tp.accumulate(il, dl);
    tp.accumulate(iff, df);
  });
}

/// Attention pooling with externally supplied logits: logits [B*L x q] (one
/// score per frame and label), softmax per sample over valid frames, pooling
/// values [B*L x p]. Used when label embeddings are disabled.
inline Var scored_attention(const Var& logits, const Var& values, const std::vector<std::vector<bool>>& masks,
                            Index len, std::vector<Matrix>* maps = nullptr) {
  detail::check_masks(masks, values.rows(), len, "scored_attention");
  if (logits.rows() != values.rows()) throw ShapeError("scored_attention: logits/values row mismatch");
  const Index batch = static_cast<Index>(masks.size());
  const Index q = logits.cols();
  const Index p = values.cols();
  Tape& t = *logits.tape();
  Matrix out(batch * q, p);
  std::vector<Matrix> attn(static_cast<std::size_t>(batch));
  for (Index b = 0; b < batch; ++b) {
    Matrix a = logits.value().middleRows(b * len, len).transpose();
    detail::masked_softmax_inplace(a, masks[static_cast<std::size_t>(b)]);
    out.middleRows(b * q, q) = a * values.value().middleRows(b * len, len);
    attn[static_cast<std::size_t>(b)] = std::move(a);
  }
  if (maps) *maps = attn;
  if (!(logits.requires_grad() || values.requires_grad())) return t.constant(std::move(out));
  const std::size_t il = logits.id(), iv = values.id();
  return t.push(std::move(out), true, [il, iv, batch, q, len, attn = std::move(attn)](Tape& tp, const Matrix& g) {
    const Matrix& vv = tp.value(iv);
    Matrix dl = Matrix::Zero(tp.value(il).rows(), q);
    Matrix dv = Matrix::Zero(vv.rows(), vv.cols());
    for (Index b = 0; b < batch; ++b) {
      const Matrix& a = attn[static_cast<std::size_t>(b)];
      const auto go = g.middleRows(b * q, q);
      Matrix da = go * vv.middleRows(b * len, len).transpose();
      Vector dot = da.cwiseProduct(a).rowwise().sum();
      Matrix ds = a.cwiseProduct(da - dot.replicate(1, len));
      dl.middleRows(b * len, len) = ds.transpose();
      dv.middleRows(b * len, len) = a.transpose() * go;
    }
    tp.accumulate(il, dl);
    tp.accumulate(iv, dv);
  });
}

/// Inverted dropout with a mask drawn from `rng`; identity when rate is 0.
inline Var dropout(const Var& x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.size(); ++i) mask(i) = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  return x * x.tape()->constant(std::move(mask));
}

}  // namespace ad
}  // namespace lddu
