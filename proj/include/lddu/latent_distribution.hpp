#pragma once

// Disentangled latent distributions: every (sample, modality, label) feature row
// is mapped to a Gaussian N(mu, sigma); the normalized pair forms a
// distribution vector e used by a supervised contrastive loss whose pool is the
// current batch plus a FIFO queue of recent, gradient-free vectors.

#include <array>
#include <cmath>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "lddu/emotion_space.hpp"

namespace lddu {

inline constexpr double kSigmaFloor = 1e-6;
inline constexpr double kNormEps = 1e-12;

enum class VectorMode { Both, MuOnly, SigmaOnly };

struct LatentConfig {
  double tau = 0.1;
  int queue_size = 8192;
  bool scl_enabled = true;
  bool use_mu_only = false;
  bool use_sigma_only = false;
  bool cross_modal_positives = false;  // positives share the label only, any modality

  VectorMode mode() const {
    if (use_mu_only) return VectorMode::MuOnly;
    if (use_sigma_only) return VectorMode::SigmaOnly;
    return VectorMode::Both;
  }

  void validate() const {
    if (!(tau > 0.0)) throw ConfigError("scl.tau must be > 0");
    if (queue_size < 0) throw ConfigError("scl.queue_size must be >= 0");
    if (use_mu_only && use_sigma_only) throw ConfigError("scl.use_mu_only and scl.use_sigma_only are exclusive");
  }
};

/// Per-modality Gaussian parameters, rows stacked [B*q x d_h/2] (row b*q + j is
/// sample b, label j).
struct LatentDistributionSet {
  std::array<ad::Var, 3> mu;
  std::array<ad::Var, 3> sigma;
};

/// Shared MLP encoder followed by separate mean and scale heads, per modality.
/// sigma = softplus(raw) + 1e-6 keeps every component strictly positive.
class DistributionHeads {
 public:
  DistributionHeads() = default;
  DistributionHeads(ParameterStore& store, int d_h, std::mt19937_64& rng) : d_h_(d_h) {
    if (d_h < 2 || d_h % 2 != 0) throw ConfigError("distribution heads need an even d_h");
    for (Modality m : kModalities) {
      const int k = static_cast<int>(m);
      const std::string p = std::string("ddl.") + modality_short(m);
      encoder_[k] = Linear(store, p + ".encoder", d_h, d_h, rng);
      mu_[k] = Linear(store, p + ".mu", d_h, d_h / 2, rng);
      sigma_[k] = Linear(store, p + ".sigma", d_h, d_h / 2, rng);
    }
  }

  void decouple_into(ad::Tape& t, Modality m, const ad::Var& z, LatentDistributionSet& out) const {
    if (z.cols() != d_h_) throw ShapeError("decouple: expected width " + std::to_string(d_h_) + ", got " + shape_str(z.value()));
    if (!z.value().allFinite()) throw ValidationError("decouple: non-finite label features");
    const int k = static_cast<int>(m);
    ad::Var h = ad::gelu(encoder_[k](t, z));
    out.mu[k] = mu_[k](t, h);
    out.sigma[k] = ad::add_scalar(ad::softplus(sigma_[k](t, h)), kSigmaFloor);
  }

  LatentDistributionSet decouple(ad::Tape& t, const std::array<ad::Var, 3>& z) const {
    LatentDistributionSet out;
    for (Modality m : kModalities) decouple_into(t, m, z[static_cast<int>(m)], out);
    return out;
  }

  int d_h() const { return d_h_; }
  const Linear& mu_head(Modality m) const { return mu_[static_cast<int>(m)]; }
  const Linear& sigma_head(Modality m) const { return sigma_[static_cast<int>(m)]; }

 private:
  int d_h_ = 0;
  std::array<Linear, 3> encoder_;
  std::array<Linear, 3> mu_;
  std::array<Linear, 3> sigma_;
};

/// Which (modality, label) cluster a vector belongs to, and whether its sample
/// carries that label.
struct VectorIdentity {
  std::size_t sample = 0;
  Modality modality = Modality::Visual;
  int label = 0;
  bool positive = false;

  int cluster(int q) const { return static_cast<int>(modality) * q + label; }
};

struct DistributionVector {
  Vector e;
  VectorIdentity id;
};

/// e = (mu / |mu|, sigma / |sigma|); each half has unit norm so e^T e = 2.
inline Vector to_vector(const Vector& mu, const Vector& sigma, VectorMode mode = VectorMode::Both,
                        bool strict = false) {
  if (mu.size() != sigma.size()) throw ShapeError("to_vector: mu and sigma sizes differ");
  for (Index i = 0; i < sigma.size(); ++i)
    if (!(sigma(i) > 0.0)) throw ValidationError("to_vector: sigma must be strictly positive");
  const double nm = mu.norm();
  const double ns = sigma.norm();
  if (strict && nm == 0.0) throw NumericError("to_vector: zero-norm mu");
  switch (mode) {
    case VectorMode::MuOnly:
      return mu / (nm + kNormEps);
    case VectorMode::SigmaOnly:
      return sigma / (ns + kNormEps);
    case VectorMode::Both:
      break;
  }
  Vector e(mu.size() * 2);
  e.head(mu.size()) = mu / (nm + kNormEps);
  e.tail(sigma.size()) = sigma / (ns + kNormEps);
  return e;
}

/// Differentiable version of to_vector applied to every row.
inline ad::Var distribution_vectors(const ad::Var& mu, const ad::Var& sigma, VectorMode mode) {
  ad::Var mu_n = ad::divide_rows(mu, ad::row_norm(mu, kNormEps));
  if (mode == VectorMode::MuOnly) return mu_n;
  ad::Var sigma_n = ad::divide_rows(sigma, ad::row_norm(sigma, kNormEps));
  if (mode == VectorMode::SigmaOnly) return sigma_n;
  return ad::concat_cols({mu_n, sigma_n});
}

/// Bounded FIFO of detached distribution vectors. Entries are copied in and
/// never modified; the oldest entry is evicted first.
class ContrastQueue {
 public:
  explicit ContrastQueue(std::size_t capacity = 8192) : capacity_(capacity) {}

  void push(const std::vector<DistributionVector>& vectors) {
    ++push_calls_;
    for (const auto& v : vectors) {
      if (capacity_ == 0) break;
      if (entries_.size() == capacity_) entries_.pop_front();
      entries_.push_back(v);
      ++pushed_;
    }
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  const DistributionVector& at(std::size_t i) const { return entries_.at(i); }
  std::size_t push_calls() const { return push_calls_; }
  std::size_t pushed() const { return pushed_; }

  /// Row matrix of all entries plus their identities, oldest first.
  std::pair<Matrix, std::vector<VectorIdentity>> snapshot(Index dim) const {
    Matrix m(static_cast<Index>(entries_.size()), dim);
    std::vector<VectorIdentity> ids;
    ids.reserve(entries_.size());
    Index r = 0;
    for (const auto& e : entries_) {
      if (e.e.size() != dim) throw ShapeError("contrast queue: entry width differs from requested dimension");
      m.row(r++) = e.e.transpose();
      ids.push_back(e.id);
    }
    return {std::move(m), std::move(ids)};
  }

  void clear() { entries_.clear(); }

 private:
  std::size_t capacity_;
  std::deque<DistributionVector> entries_;
  std::size_t push_calls_ = 0;
  std::size_t pushed_ = 0;
};

struct SupConResult {
  double loss = 0.0;
  Matrix grad;  // d loss / d batch vectors
  std::size_t anchors = 0;
  std::size_t skipped = 0;  // anchors without positives
};

/// Supervised contrastive loss summed over positive anchors of the batch.
///
/// Pool = batch rows plus queue rows. Anchors are the positive batch rows (the
/// sample carries the label). For anchor e, positives are the other pool rows
/// of the same cluster that are themselves positive; every other pool row
/// except e is a negative, including rows of e's own cluster whose sample lacks
/// the label. Per anchor:
///   -(1/|P|) sum_{p in P} log( exp(e.p/tau) / sum_{t in P u N} exp(e.t/tau) ).
/// Anchors with no positives contribute nothing.
inline SupConResult supcon_loss(const Matrix& batch, const std::vector<VectorIdentity>& batch_ids,
                                const Matrix& queue, const std::vector<VectorIdentity>& queue_ids, double tau,
                                int q, bool cross_modal_positives = false) {
  if (!(tau > 0.0)) throw ConfigError("supcon: tau must be > 0");
  if (static_cast<std::size_t>(batch.rows()) != batch_ids.size() ||
      static_cast<std::size_t>(queue.rows()) != queue_ids.size()) {
    throw ShapeError("supcon: identity count does not match vector rows");
  }
  if (queue.rows() > 0 && queue.cols() != batch.cols()) throw ShapeError("supcon: queue width differs from batch");
  const Index nb = batch.rows();
  const Index np = nb + queue.rows();
  const Index d = batch.cols();
  Matrix pool(np, d);
  pool.topRows(nb) = batch;
  if (queue.rows() > 0) pool.bottomRows(queue.rows()) = queue;
  std::vector<const VectorIdentity*> ids;
  for (const auto& i : batch_ids) ids.push_back(&i);
  for (const auto& i : queue_ids) ids.push_back(&i);
  auto key = [&](const VectorIdentity& v) { return cross_modal_positives ? v.label : v.cluster(q); };

  SupConResult res;
  res.grad = Matrix::Zero(nb, d);
  std::vector<Index> anchors;
  for (Index i = 0; i < nb; ++i)
    if (batch_ids[static_cast<std::size_t>(i)].positive) anchors.push_back(i);
  if (anchors.empty()) return res;

  Matrix a(static_cast<Index>(anchors.size()), d);
  for (std::size_t k = 0; k < anchors.size(); ++k) a.row(static_cast<Index>(k)) = batch.row(anchors[k]);
  const Matrix logits = a * pool.transpose() / tau;
  Matrix g = Matrix::Zero(logits.rows(), logits.cols());
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    const Index ai = anchors[k];
    const Index row = static_cast<Index>(k);
    const int ck = key(*ids[static_cast<std::size_t>(ai)]);
    std::vector<Index> pos;
    double mx = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < np; ++c) {
      if (c == ai) continue;
      mx = std::max(mx, logits(row, c));
      const VectorIdentity& other = *ids[static_cast<std::size_t>(c)];
      if (other.positive && key(other) == ck) pos.push_back(c);
    }
    if (pos.empty()) {
      ++res.skipped;
      continue;
    }
    ++res.anchors;
    double z = 0.0;
    for (Index c = 0; c < np; ++c)
      if (c != ai) z += std::exp(logits(row, c) - mx);
    const double lse = mx + std::log(z);
    const double inv = 1.0 / static_cast<double>(pos.size());
    double term = 0.0;
    for (Index c : pos) term += logits(row, c) - lse;
    res.loss += -inv * term;
    for (Index c = 0; c < np; ++c)
      if (c != ai) g(row, c) = std::exp(logits(row, c) - lse);
    for (Index c : pos) g(row, c) -= inv;
  }
  // logits = a pool^T / tau
  const Matrix da = g * pool / tau;
  const Matrix dpool = g.transpose() * a / tau;
  res.grad = dpool.topRows(nb);
  for (std::size_t k = 0; k < anchors.size(); ++k) res.grad.row(anchors[k]) += da.row(static_cast<Index>(k));
  return res;
}

/// Tape node for the contrastive loss; the queue is a constant input.
inline ad::Var supcon_loss(const ad::Var& batch, const std::vector<VectorIdentity>& batch_ids, const Matrix& queue,
                           const std::vector<VectorIdentity>& queue_ids, double tau, int q,
                           bool cross_modal_positives = false, SupConResult* stats = nullptr) {
  SupConResult r = supcon_loss(batch.value(), batch_ids, queue, queue_ids, tau, q, cross_modal_positives);
  Matrix value(1, 1);
  value(0, 0) = r.loss;
  if (stats) {
    stats->loss = r.loss;
    stats->anchors = r.anchors;
    stats->skipped = r.skipped;
  }
  return ad::fused({batch}, std::move(value), [grad = std::move(r.grad)](const Matrix& g) {
    return std::vector<Matrix>{grad * g(0, 0)};
  });
}

/// Similarity z(e1, e2) = e1^T e2.
inline double similarity(const Vector& a, const Vector& b) { return a.dot(b); }

}  // namespace lddu
