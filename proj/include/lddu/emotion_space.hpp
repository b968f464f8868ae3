#pragma once

// Emotion space: trainable label embeddings query each modality's sequence to
// pool one feature row per label, and the Info Classifier reads the
// concatenated per-label features of all three modalities.

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "lddu/encoder.hpp"

namespace lddu {

struct EmotionSpaceConfig {
  int d_h = 128;
  int proj_dim = 256;
  int label_dim = 256;
  int info_hidden = 256;
  bool esm_enabled = true;  // false: label embeddings replaced by per-frame MLP scores

  void validate() const {
    if (d_h < 2 || d_h % 2 != 0) throw ConfigError("emotion_space.d_h must be even and >= 2");
    if (proj_dim < 1 || label_dim < 1 || info_hidden < 1) throw ConfigError("emotion_space widths must be positive");
  }
};

/// Per-label features of one modality: Z [B*q x d_h] and attention maps [q x L] per sample.
struct LabelFeatures {
  ad::Var z;
  std::vector<Matrix> attention;
};

class EmotionSpace {
 public:
  EmotionSpace() = default;
  EmotionSpace(ParameterStore& store, int q, int frame_width, const EmotionSpaceConfig& cfg, std::mt19937_64& rng)
      : cfg_(cfg), q_(q) {
    cfg.validate();
    if (q < 1) throw ConfigError("emotion space needs q >= 1");
    labels_ = &store.add("esm.labels", normal_matrix(q, cfg.label_dim, 1.0, rng));
    label_proj_ = Linear(store, "esm.label_proj", cfg.label_dim, cfg.proj_dim, rng);
    for (Modality m : kModalities) {
      const int k = static_cast<int>(m);
      const std::string p = std::string("esm.") + modality_short(m);
      frame_proj_[k] = Linear(store, p + ".frame_proj", frame_width, cfg.proj_dim, rng);
      out_[k] = Linear(store, p + ".out", cfg.proj_dim, cfg.d_h, rng);
      if (!cfg.esm_enabled) scorer_[k] = Mlp(store, p + ".scorer", frame_width, cfg.proj_dim, q, rng);
    }
  }

  /// Z^m = Linear(A^m Proj(O^m)) with A^m = softmax over valid frames of Proj(L) Proj(O^m)^T.
  LabelFeatures attend(ad::Tape& t, Modality m, const EncodedSequence& seq) const {
    const int k = static_cast<int>(m);
    LabelFeatures out;
    ad::Var frames = frame_proj_[k](t, seq.output);
    ad::Var pooled;
    if (cfg_.esm_enabled) {
      ad::Var queries = label_proj_(t, t.param(*labels_));
      pooled = ad::label_attention(queries, frames, *seq.masks, seq.len, &out.attention);
    } else {
      pooled = ad::scored_attention(scorer_[k](t, seq.output), frames, *seq.masks, seq.len, &out.attention);
    }
    out.z = out_[k](t, pooled);
    return out;
  }

  const EmotionSpaceConfig& config() const { return cfg_; }
  int q() const { return q_; }
  Parameter& labels() const { return *labels_; }

 private:
  EmotionSpaceConfig cfg_;
  int q_ = 0;
  Parameter* labels_ = nullptr;
  Linear label_proj_;
  std::array<Linear, 3> frame_proj_;
  std::array<Linear, 3> out_;
  std::array<Mlp, 3> scorer_;
};

/// F_dir = [Z^v, Z^a, Z^t] flattened per sample, [B x 3*q*d_h].
inline ad::Var info_features(const std::array<LabelFeatures, 3>& feats, Index q) {
  return ad::concat_cols({ad::group_rows(feats[0].z, q), ad::group_rows(feats[1].z, q), ad::group_rows(feats[2].z, q)});
}

/// Two-layer perceptron producing q logits; probabilities are sigmoid(logits).
class InfoClassifier {
 public:
  InfoClassifier() = default;
  InfoClassifier(ParameterStore& store, Index in, Index hidden, Index q, std::mt19937_64& rng)
      : mlp_(store, "info", in, hidden, q, rng) {}

  ad::Var logits(ad::Tape& t, const ad::Var& f_dir) const { return mlp_(t, f_dir); }
  ad::Var predict(ad::Tape& t, const ad::Var& f_dir) const { return ad::sigmoid(logits(t, f_dir)); }

  const Mlp& mlp() const { return mlp_; }

 private:
  Mlp mlp_;
};

inline void validate_binary_labels(const Matrix& y, const char* what) {
  for (Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw ValidationError(std::string(what) + ": labels must be 0 or 1");
  }
}

inline constexpr double kProbClamp = 1e-7;

/// Mean binary cross-entropy from logits (mean over labels, then samples).
inline ad::Var bce_with_logits(const ad::Var& logits, const Matrix& labels) {
  require_shape(labels, logits.rows(), logits.cols(), "bce_with_logits labels");
  validate_binary_labels(labels, "bce_with_logits");
  const Matrix& x = logits.value();
  const double n = static_cast<double>(x.size());
  double total = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    total += std::max(x(i), 0.0) - x(i) * labels(i) + std::log1p(std::exp(-std::abs(x(i))));
  }
  Matrix value(1, 1);
  value(0, 0) = total / n;
  Matrix y = labels;
  return ad::fused({logits}, std::move(value), [x = Matrix(x), y = std::move(y), n](const Matrix& g) {
    Matrix d(x.rows(), x.cols());
    for (Index i = 0; i < x.size(); ++i) {
      const double s = x(i) >= 0 ? 1.0 / (1.0 + std::exp(-x(i))) : std::exp(x(i)) / (1.0 + std::exp(x(i)));
      d(i) = g(0, 0) * (s - y(i)) / n;
    }
    return std::vector<Matrix>{std::move(d)};
  });
}

/// Mean binary cross-entropy of probabilities clamped to [1e-7, 1 - 1e-7].
inline ad::Var bce_probs(const ad::Var& probs, const Matrix& labels) {
  require_shape(labels, probs.rows(), probs.cols(), "bce labels");
  validate_binary_labels(labels, "bce");
  const Matrix& p = probs.value();
  const double n = static_cast<double>(p.size());
  double total = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    const double c = std::min(std::max(p(i), kProbClamp), 1.0 - kProbClamp);
    total -= labels(i) * std::log(c) + (1.0 - labels(i)) * std::log(1.0 - c);
  }
  Matrix value(1, 1);
  value(0, 0) = total / n;
  Matrix y = labels;
  return ad::fused({probs}, std::move(value), [p = Matrix(p), y = std::move(y), n](const Matrix& g) {
    Matrix d = Matrix::Zero(p.rows(), p.cols());
    for (Index i = 0; i < p.size(); ++i) {
      if (p(i) < kProbClamp || p(i) > 1.0 - kProbClamp) continue;
      d(i) = g(0, 0) * (-y(i) / p(i) + (1.0 - y(i)) / (1.0 - p(i))) / n;
    }
    return std::vector<Matrix>{std::move(d)};
  });
}

/// L_dir: batch-mean BCE of the Info Classifier, evaluated from its logits.
inline ad::Var loss_dir(const ad::Var& info_logits, const Matrix& labels) { return bce_with_logits(info_logits, labels); }

/// Plain-value BCE for callers without a tape.
inline double bce_value(const Matrix& probs, const Matrix& labels) {
  ad::Tape t;
  return bce_probs(t.constant(probs), labels).scalar();
}

}  // namespace lddu
