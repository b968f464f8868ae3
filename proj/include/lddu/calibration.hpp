#pragma once

// Ordinality calibration. Per-sample correctness proportions r_i are tracked
// across training; the batch vectors
//   S_i = 1 / |sigma_i|_2,  D_i = 1 - d_i,  R_i = r_i
// are turned into softmax distributions over the batch and matched with
// symmetric KL divergences, so that inverse spread and prediction closeness rank
// samples the way their empirical correctness does.

#include <cmath>
#include <vector>

#include "lddu/fusion.hpp"

namespace lddu {

inline constexpr double kCorrectnessPrior = 0.5;

class CorrectnessTracker {
 public:
  CorrectnessTracker() = default;
  explicit CorrectnessTracker(std::size_t n) : count_(n, 0), correct_(n, 0.0) {}

  /// Folds one step of Info Classifier predictions into the running means. A
  /// sample's step correctness is the fraction of labels decided correctly at
  /// `threshold`.
  void update(const std::vector<std::size_t>& indices, const Matrix& y_dir, const Matrix& labels,
              double threshold = 0.5) {
    require_shape(labels, y_dir.rows(), y_dir.cols(), "tracker labels");
    if (static_cast<Index>(indices.size()) != y_dir.rows()) throw ShapeError("tracker: index count != batch rows");
    for (std::size_t b = 0; b < indices.size(); ++b) {
      double hits = 0.0;
      for (Index j = 0; j < y_dir.cols(); ++j) {
        const int pred = y_dir(static_cast<Index>(b), j) >= threshold ? 1 : 0;
        if (pred == static_cast<int>(labels(static_cast<Index>(b), j))) hits += 1.0;
      }
      record(indices[b], hits / static_cast<double>(y_dir.cols()));
    }
  }

  /// Adds one observation with correctness in [0, 1].
  void record(std::size_t index, double correctness) {
    check(index);
    if (!(correctness >= 0.0 && correctness <= 1.0)) throw ValidationError("tracker: correctness outside [0, 1]");
    ++count_[index];
    correct_[index] += correctness;
  }

  double r(std::size_t index) const {
    check(index);
    return count_[index] == 0 ? kCorrectnessPrior : correct_[index] / static_cast<double>(count_[index]);
  }
  long evaluations(std::size_t index) const {
    check(index);
    return count_[index];
  }
  std::size_t size() const { return count_.size(); }

  const std::vector<long>& counts() const { return count_; }
  const std::vector<double>& sums() const { return correct_; }
  static CorrectnessTracker restore(std::vector<long> counts, std::vector<double> sums) {
    if (counts.size() != sums.size()) throw FormatError("tracker state: count and sum lengths differ");
    CorrectnessTracker t;
    t.count_ = std::move(counts);
    t.correct_ = std::move(sums);
    return t;
  }

 private:
  void check(std::size_t index) const {
    if (index >= count_.size()) throw LookupError("tracker: unknown sample index " + std::to_string(index));
  }

  std::vector<long> count_;
  std::vector<double> correct_;
};

struct CalibBatch {
  ad::Var s;  // [B x 1]
  ad::Var d;  // [B x 1], holds 1 - d_i
  Matrix r;   // [B x 1], constant
};

/// |sigma_i|_2 over every modality and label of sample i, [B x 1].
inline ad::Var sigma_norms(const LatentDistributionSet& dist, Index q) {
  return ad::row_norm(concat_modalities(dist.sigma, q));
}

inline CalibBatch build_calib_batch(const LatentDistributionSet& dist, const ad::Var& d,
                                    const CorrectnessTracker& tracker, const std::vector<std::size_t>& indices,
                                    Index q) {
  CalibBatch c;
  c.s = ad::reciprocal(sigma_norms(dist, q));
  if (d.rows() != c.s.rows() || d.cols() != 1) throw ShapeError("build_calib_batch: d must be [B x 1]");
  if (static_cast<Index>(indices.size()) != d.rows()) throw ShapeError("build_calib_batch: index count mismatch");
  c.d = 1.0 - d;
  c.r = Matrix(d.rows(), 1);
  for (std::size_t b = 0; b < indices.size(); ++b) c.r(static_cast<Index>(b), 0) = tracker.r(indices[b]);
  return c;
}

struct OclConfig {
  bool enabled = true;
  bool only_sr = false;  // keep only the (S, R) pair
  bool only_dr = false;  // keep only the (D, R) pair
  bool with_ds = false;  // add a (D, S) pair
  double temperature = 1.0;

  void validate() const {
    if (only_sr && only_dr) throw ConfigError("ocl.only_sr and ocl.only_dr are exclusive");
    if (!(temperature > 0.0)) throw ConfigError("ocl.temperature must be > 0");
  }
};

struct OclResult {
  double loss = 0.0;
  Vector grad_s;
  Vector grad_d;
};

namespace detail {

inline Vector softmax(const Vector& x, double temperature) {
  Vector z = x / temperature;
  z.array() -= z.maxCoeff();
  z = z.array().exp().matrix();
  return z / z.sum();
}

inline constexpr double kKlClamp = 1e-12;

/// KL(P || Q) + KL(Q || P) for P = softmax(a/T), Q = softmax(b/T); gradients
/// with respect to a and b are added into ga and gb.
inline double symmetric_kl(const Vector& a, const Vector& b, double temperature, Vector* ga, Vector* gb) {
  const Vector p = softmax(a, temperature);
  const Vector q = softmax(b, temperature);
  const Vector lp = p.cwiseMax(kKlClamp).array().log().matrix();
  const Vector lq = q.cwiseMax(kKlClamp).array().log().matrix();
  const double kl_pq = p.dot(lp - lq);
  const double kl_qp = q.dot(lq - lp);
  // d KL(P||Q)/da = p * (c - <p, c>)/T with c = log p - log q; d KL(P||Q)/db = (q - p)/T.
  if (ga) {
    const Vector c = lp - lq;
    *ga += (p.array() * (c.array() - p.dot(c))).matrix() / temperature;
    *ga += (p - q) / temperature;
  }
  if (gb) {
    const Vector c = lq - lp;
    *gb += (q.array() * (c.array() - q.dot(c))).matrix() / temperature;
    *gb += (q - p) / temperature;
  }
  return kl_pq + kl_qp;
}

}  // namespace detail

/// L_ocl = KL(P_D||P_R) + KL(P_R||P_D) + KL(P_S||P_R) + KL(P_R||P_S), with the
/// pair switches of `cfg`. R never receives a gradient.
inline OclResult loss_ocl(const Vector& s, const Vector& d, const Vector& r, const OclConfig& cfg = {}) {
  if (s.size() != d.size() || s.size() != r.size()) throw ShapeError("loss_ocl: S, D, R sizes differ");
  OclResult res;
  res.grad_s = Vector::Zero(s.size());
  res.grad_d = Vector::Zero(d.size());
  if (s.size() < 2) return res;
  const double t = cfg.temperature;
  if (!cfg.only_sr) res.loss += detail::symmetric_kl(d, r, t, &res.grad_d, nullptr);
  if (!cfg.only_dr) res.loss += detail::symmetric_kl(s, r, t, &res.grad_s, nullptr);
  if (cfg.with_ds) res.loss += detail::symmetric_kl(d, s, t, &res.grad_d, &res.grad_s);
  return res;
}

inline ad::Var loss_ocl(const CalibBatch& c, const OclConfig& cfg = {}) {
  OclResult r = loss_ocl(Vector(c.s.value().col(0)), Vector(c.d.value().col(0)), Vector(c.r.col(0)), cfg);
  Matrix value(1, 1);
  value(0, 0) = r.loss;
  return ad::fused({c.s, c.d}, std::move(value), [gs = Matrix(r.grad_s), gd = Matrix(r.grad_d)](const Matrix& g) {
    return std::vector<Matrix>{gs * g(0, 0), gd * g(0, 0)};
  });
}

}  // namespace lddu
