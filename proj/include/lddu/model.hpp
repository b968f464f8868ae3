#pragma once

// The full network and its loss composition:
//   L_total = L_cls + lambda * L_ocl + beta * L_scl + gamma * L_dir

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "lddu/calibration.hpp"
#include "lddu/config.hpp"
#include "lddu/metrics.hpp"

namespace lddu {

inline void check_loss_weights(double lambda, double beta, double gamma) {
  if (lambda < 0.0 || beta < 0.0 || gamma < 0.0) throw ConfigError("loss weights must be non-negative");
}

inline double total_loss(double cls, double ocl, double scl, double dir, double lambda, double beta, double gamma) {
  check_loss_weights(lambda, beta, gamma);
  for (double v : {cls, ocl, scl, dir})
    if (!std::isfinite(v)) throw NumericError("total_loss: non-finite component loss");
  return cls + lambda * ocl + beta * scl + gamma * dir;
}

/// Tape version; components with a zero weight or an invalid Var are left out of
/// the graph entirely.
inline ad::Var total_loss(const ad::Var& cls, const ad::Var& ocl, const ad::Var& scl, const ad::Var& dir,
                          double lambda, double beta, double gamma) {
  check_loss_weights(lambda, beta, gamma);
  ad::Var total = cls;
  if (ocl.valid() && lambda > 0.0) total = total + ad::scale(ocl, lambda);
  if (scl.valid() && beta > 0.0) total = total + ad::scale(scl, beta);
  if (dir.valid() && gamma > 0.0) total = total + ad::scale(dir, gamma);
  return total;
}

struct ModelShape {
  int q = 0;
  std::array<int, 3> dims{0, 0, 0};
};

/// Everything one forward pass produces.
struct ForwardResult {
  std::array<LabelFeatures, 3> features;
  ad::Var info_logits;  // [B x q]
  ad::Var y_dir;        // [B x q]
  ad::Var d;            // [B x 1] uncertainty score, differentiable when labels are known
  LatentDistributionSet dist;
  ad::Var vectors;  // [3*B*q x dim], modality-major, then sample, then label
  std::vector<VectorIdentity> identities;
  FusionPrediction fusion;
};

struct LossBreakdown {
  double cls = 0.0;
  double ocl = 0.0;
  double scl = 0.0;
  double dir = 0.0;
  double total = 0.0;
};

struct StepLosses {
  ad::Var total;
  ad::Var cls, ocl, scl, dir;
  LossBreakdown values;
  SupConResult scl_stats;
};

class LdduModel {
 public:
  LdduModel(const TrainConfig& cfg, const ModelShape& shape, std::uint64_t seed) : cfg_(cfg), shape_(shape) {
    cfg.validate();
    if (shape.q < 1) throw ConfigError("model needs q >= 1");
    std::mt19937_64 rng(seed);
    encoders_ = UnimodalEncoders(store_, shape.dims, cfg.encoder, rng);
    space_ = EmotionSpace(store_, shape.q, cfg.encoder.width, cfg.emotion_space, rng);
    const Index q = shape.q;
    const Index d_h = cfg.emotion_space.d_h;
    info_ = InfoClassifier(store_, 3 * q * d_h, cfg.emotion_space.info_hidden, q, rng);
    heads_ = DistributionHeads(store_, static_cast<int>(d_h), rng);
    fusion_ = UncertaintyFusion(store_, shape.q, static_cast<int>(d_h), cfg.fusion, rng);
  }
  LdduModel(const LdduModel&) = delete;
  LdduModel& operator=(const LdduModel&) = delete;

  /// With `labels_known` the fusion gate is the label-based score d; otherwise
  /// the label-free entropy proxy is used.
  ForwardResult forward(ad::Tape& t, const Batch& batch, const ForwardContext& ctx, bool labels_known) const {
    if (batch.labels.cols() != shape_.q) throw ShapeError("batch label width differs from model q");
    ForwardResult r;
    EncodedModalities enc = encoders_.encode(t, batch, ctx);
    for (Modality m : kModalities) r.features[static_cast<int>(m)] = space_.attend(t, m, enc[m]);
    r.info_logits = info_.logits(t, info_features(r.features, shape_.q));
    r.y_dir = ad::sigmoid(r.info_logits);
    std::array<ad::Var, 3> z;
    for (int k = 0; k < 3; ++k) z[k] = r.features[k].z;
    r.dist = heads_.decouple(t, z);

    std::vector<ad::Var> parts;
    const VectorMode mode = cfg_.scl.mode();
    for (Modality m : kModalities) {
      const int k = static_cast<int>(m);
      parts.push_back(distribution_vectors(r.dist.mu[k], r.dist.sigma[k], mode));
      for (std::size_t b = 0; b < batch.size(); ++b) {
        for (int j = 0; j < shape_.q; ++j) {
          r.identities.push_back({batch.indices[b], m, j, batch.labels(static_cast<Index>(b), j) == 1.0});
        }
      }
    }
    r.vectors = ad::concat_rows(parts);

    // The gate is a constant: L_cls trains the two branches, while the Info
    // Classifier only learns from L_dir and, through D = 1 - d, from L_ocl.
    Matrix gate;
    if (ctx.gate_override) {
      gate = *ctx.gate_override;
      r.d = labels_known ? uncertainty_score(r.y_dir, batch.labels) : t.constant(gate);
    } else if (labels_known) {
      r.d = uncertainty_score(r.y_dir, batch.labels);
      gate = r.d.value();
    } else {
      gate = inference_uncertainty(r.y_dir.value());
      r.d = t.constant(gate);
    }
    r.fusion = fusion_.fuse(t, r.dist, t.constant(std::move(gate)));
    return r;
  }

  /// Composes the training objective. `queue` may be null (empty pool beyond
  /// the batch); `tracker` may be null (correctness prior for every sample).
  StepLosses losses(const ForwardResult& r, const Batch& batch, const ContrastQueue* queue,
                    const CorrectnessTracker* tracker) const {
    StepLosses s;
    s.cls = loss_cls(r.fusion.y_fnl, batch.labels);
    s.dir = loss_dir(r.info_logits, batch.labels);
    if (cfg_.scl_active()) {
      Matrix qm(0, r.vectors.cols());
      std::vector<VectorIdentity> qids;
      if (queue && !queue->empty()) std::tie(qm, qids) = queue->snapshot(r.vectors.cols());
      s.scl = supcon_loss(r.vectors, r.identities, qm, qids, cfg_.scl.tau, shape_.q, cfg_.scl.cross_modal_positives,
                          &s.scl_stats);
    }
    if (cfg_.ocl_active()) {
      CalibBatch c;
      if (tracker) {
        c = build_calib_batch(r.dist, r.d, *tracker, batch.indices, shape_.q);
      } else {
        CorrectnessTracker fresh(*std::max_element(batch.indices.begin(), batch.indices.end()) + 1);
        c = build_calib_batch(r.dist, r.d, fresh, batch.indices, shape_.q);
      }
      s.ocl = loss_ocl(c, cfg_.ocl);
    }
    s.total = total_loss(s.cls, s.ocl, s.scl, s.dir, cfg_.lambda, cfg_.beta, cfg_.gamma);
    s.values.cls = s.cls.scalar();
    s.values.dir = s.dir.scalar();
    s.values.scl = s.scl.valid() ? s.scl.scalar() : 0.0;
    s.values.ocl = s.ocl.valid() ? s.ocl.scalar() : 0.0;
    s.values.total = s.total.scalar();
    return s;
  }

  /// Detached copies of every vector of a forward pass, ready for the queue.
  static std::vector<DistributionVector> queue_entries(const ForwardResult& r) {
    std::vector<DistributionVector> out;
    const Matrix& v = r.vectors.value();
    for (std::size_t i = 0; i < r.identities.size(); ++i) {
      out.push_back({Vector(v.row(static_cast<Index>(i)).transpose()), r.identities[i]});
    }
    return out;
  }

  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  const TrainConfig& config() const { return cfg_; }
  const ModelShape& shape() const { return shape_; }

 private:
  TrainConfig cfg_;
  ModelShape shape_;
  ParameterStore store_;
  UnimodalEncoders encoders_;
  EmotionSpace space_;
  InfoClassifier info_;
  DistributionHeads heads_;
  UncertaintyFusion fusion_;
};

}  // namespace lddu
