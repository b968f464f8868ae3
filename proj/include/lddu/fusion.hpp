#pragma once

// Uncertainty-aware late fusion: a mean-branch and a variance-branch classifier
// mixed per sample by the scalar uncertainty score d:
//   y_fnl = d * y_mu + (1 - d) * y_sigma

#include <cmath>
#include <random>
#include <string>

#include "lddu/latent_distribution.hpp"

namespace lddu {

struct FusionConfig {
  int cls_hidden = 256;
  bool swap_gate = false;   // use (1 - d) in place of d
  bool drop_mu = false;     // y_fnl = y_sigma
  bool drop_sigma = false;  // y_fnl = y_mu

  void validate() const {
    if (cls_hidden < 1) throw ConfigError("fusion classifier width must be positive");
    if (drop_mu && drop_sigma) throw ConfigError("cls.drop_mu and cls.drop_sigma cannot both be set");
  }
};

/// d = (1/q) sum_j |y_dir_j - y_j|, one value per sample [B x 1].
inline ad::Var uncertainty_score(const ad::Var& y_dir, const Matrix& labels) {
  require_shape(labels, y_dir.rows(), y_dir.cols(), "uncertainty_score labels");
  validate_binary_labels(labels, "uncertainty_score");
  return ad::row_mean(ad::abs(y_dir - y_dir.tape()->constant(labels)));
}

inline double uncertainty_score(const RowVector& y_dir, const RowVector& labels) {
  if (y_dir.size() != labels.size()) throw ShapeError("uncertainty_score: size mismatch");
  validate_binary_labels(labels, "uncertainty_score");
  return (y_dir - labels).cwiseAbs().mean();
}

/// Label-free proxy: mean binary entropy in bits, d_hat in [0, 1].
inline double inference_uncertainty(const RowVector& y_dir) {
  double h = 0.0;
  for (Index j = 0; j < y_dir.size(); ++j) {
    const double p = std::min(std::max(y_dir(j), 1e-300), 1.0);
    const double r = 1.0 - p;
    double hb = 0.0;
    if (p > 0.0) hb -= p * std::log(p);
    if (r > 0.0) hb -= r * std::log(r);
    h += hb / std::log(2.0);
  }
  return y_dir.size() > 0 ? h / static_cast<double>(y_dir.size()) : 0.0;
}

inline Matrix inference_uncertainty(const Matrix& y_dir) {
  Matrix d(y_dir.rows(), 1);
  for (Index i = 0; i < y_dir.rows(); ++i) d(i, 0) = inference_uncertainty(RowVector(y_dir.row(i)));
  return d;
}

struct FusionPrediction {
  ad::Var y_mu;     // [B x q], invalid when the branch is dropped
  ad::Var y_sigma;  // [B x q], invalid when the branch is dropped
  ad::Var d;        // [B x 1]
  ad::Var y_fnl;    // [B x q]
};

/// Per-sample concatenation over modalities of the per-label rows of `parts`,
/// [B x 3*q*w].
inline ad::Var concat_modalities(const std::array<ad::Var, 3>& parts, Index q) {
  return ad::concat_cols({ad::group_rows(parts[0], q), ad::group_rows(parts[1], q), ad::group_rows(parts[2], q)});
}

class UncertaintyFusion {
 public:
  UncertaintyFusion() = default;
  UncertaintyFusion(ParameterStore& store, int q, int d_h, const FusionConfig& cfg, std::mt19937_64& rng)
      : cfg_(cfg), q_(q) {
    cfg.validate();
    const Index in = static_cast<Index>(3) * q * (d_h / 2);
    mu_cls_ = Mlp(store, "cls.mu", in, cfg.cls_hidden, q, rng);
    sigma_cls_ = Mlp(store, "cls.sigma", in, cfg.cls_hidden, q, rng);
  }

  FusionPrediction fuse(ad::Tape& t, const LatentDistributionSet& dist, const ad::Var& d) const {
    if (d.cols() != 1) throw ShapeError("fuse: d must be [B x 1]");
    for (double v : d.value().reshaped())
      if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("fuse: uncertainty score outside [0, 1]");
    FusionPrediction out;
    out.d = d;
    ad::Var gate = cfg_.swap_gate ? (1.0 - d) : d;
    if (!cfg_.drop_mu) out.y_mu = ad::sigmoid(mu_cls_(t, concat_modalities(dist.mu, q_)));
    if (!cfg_.drop_sigma) out.y_sigma = ad::sigmoid(sigma_cls_(t, concat_modalities(dist.sigma, q_)));
    if (cfg_.drop_mu) {
      out.y_fnl = out.y_sigma;
    } else if (cfg_.drop_sigma) {
      out.y_fnl = out.y_mu;
    } else {
      if (d.rows() != out.y_mu.rows()) throw ShapeError("fuse: d rows differ from batch size");
      out.y_fnl = ad::scale_rows(out.y_mu, gate) + ad::scale_rows(out.y_sigma, 1.0 - gate);
    }
    return out;
  }

  const FusionConfig& config() const { return cfg_; }
  const Mlp& mu_classifier() const { return mu_cls_; }
  const Mlp& sigma_classifier() const { return sigma_cls_; }

 private:
  FusionConfig cfg_;
  int q_ = 0;
  Mlp mu_cls_;
  Mlp sigma_cls_;
};

/// L_cls: batch-mean BCE of the fused prediction.
inline ad::Var loss_cls(const ad::Var& y_fnl, const Matrix& labels) { return bce_probs(y_fnl, labels); }

/// Uncertainty-gated mixing on plain values.
inline RowVector fuse_values(const RowVector& y_mu, const RowVector& y_sigma, double d) {
  return d * y_mu + (1.0 - d) * y_sigma;
}

}  // namespace lddu
