#pragma once

// Multi-label evaluation metrics and the statistics used by the reports.
//
// Acc is Jaccard accuracy: mean over samples of |pred & truth| / |pred | truth|,
// with an empty prediction on an empty truth counted as 1. P, R and miF1 are
// micro-averaged over every (sample, label) decision; a zero denominator
// yields 0.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "lddu/tensor.hpp"

namespace lddu {

struct ConfusionCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long tn = 0;
};

struct MetricsReport {
  std::size_t samples = 0;
  double acc = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double mif1 = 0.0;
  ConfusionCounts counts;
  std::vector<double> label_precision;
  std::vector<double> label_recall;
  std::vector<ConfusionCounts> label_counts;
  Matrix cooccurrence;  // [q x q] predicted label co-occurrence counts
  std::optional<double> silhouette;
  std::optional<double> spearman_sigma_noise;
};

inline double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

inline Matrix threshold_predictions(const Matrix& probs, double threshold = 0.5) {
  return (probs.array() >= threshold).cast<double>().matrix();
}

/// pred and truth are binary [n x q].
inline MetricsReport compute_metrics(const Matrix& pred, const Matrix& truth) {
  require_shape(pred, truth.rows(), truth.cols(), "compute_metrics predictions");
  const Index n = truth.rows(), q = truth.cols();
  MetricsReport r;
  r.samples = static_cast<std::size_t>(n);
  r.label_counts.assign(static_cast<std::size_t>(q), {});
  r.cooccurrence = Matrix::Zero(q, q);
  double jaccard = 0.0;
  for (Index i = 0; i < n; ++i) {
    long inter = 0, uni = 0;
    for (Index j = 0; j < q; ++j) {
      const bool p = pred(i, j) >= 0.5;
      const bool y = truth(i, j) >= 0.5;
      ConfusionCounts& c = r.label_counts[static_cast<std::size_t>(j)];
      if (p && y) ++c.tp;
      if (p && !y) ++c.fp;
      if (!p && y) ++c.fn;
      if (!p && !y) ++c.tn;
      inter += (p && y) ? 1 : 0;
      uni += (p || y) ? 1 : 0;
      if (p)
        for (Index k = 0; k < q; ++k)
          if (pred(i, k) >= 0.5) r.cooccurrence(j, k) += 1.0;
    }
    jaccard += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  for (const auto& c : r.label_counts) {
    r.counts.tp += c.tp;
    r.counts.fp += c.fp;
    r.counts.fn += c.fn;
    r.counts.tn += c.tn;
    r.label_precision.push_back(safe_ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp)));
    r.label_recall.push_back(safe_ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn)));
  }
  r.acc = n > 0 ? jaccard / static_cast<double>(n) : 0.0;
  r.precision = safe_ratio(static_cast<double>(r.counts.tp), static_cast<double>(r.counts.tp + r.counts.fp));
  r.recall = safe_ratio(static_cast<double>(r.counts.tp), static_cast<double>(r.counts.tp + r.counts.fn));
  r.mif1 = safe_ratio(2.0 * r.precision * r.recall, r.precision + r.recall);
  return r;
}

/// Average ranks (1-based), ties share their mean rank.
inline std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

/// Pearson correlation; 0 when either input is constant.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("pearson: size mismatch");
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(ranks(x), ranks(y));
}

/// Mean silhouette coefficient of row vectors under Euclidean distance.
/// Points in singleton clusters score 0; returns 0 with fewer than 2 clusters.
inline double silhouette(const Matrix& points, const std::vector<int>& cluster) {
  if (static_cast<std::size_t>(points.rows()) != cluster.size()) throw ShapeError("silhouette: label count mismatch");
  const Index n = points.rows();
  if (n == 0) return 0.0;
  std::vector<int> ids = cluster;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 2) return 0.0;
  std::vector<std::size_t> slot(static_cast<std::size_t>(n));
  std::vector<double> sizes(ids.size(), 0.0);
  for (Index i = 0; i < n; ++i) {
    slot[static_cast<std::size_t>(i)] = static_cast<std::size_t>(
        std::lower_bound(ids.begin(), ids.end(), cluster[static_cast<std::size_t>(i)]) - ids.begin());
    sizes[slot[static_cast<std::size_t>(i)]] += 1.0;
  }
  const Vector sq = points.rowwise().squaredNorm();
  const Matrix gram = points * points.transpose();
  double total = 0.0;
  std::vector<double> sums(ids.size());
  for (Index i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d2 = std::max(0.0, sq(i) + sq(j) - 2.0 * gram(i, j));
      sums[slot[static_cast<std::size_t>(j)]] += std::sqrt(d2);
    }
    const std::size_t own = slot[static_cast<std::size_t>(i)];
    if (sizes[own] <= 1.0) continue;
    const double a = sums[own] / (sizes[own] - 1.0);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < ids.size(); ++c)
      if (c != own && sizes[c] > 0.0) b = std::min(b, sums[c] / sizes[c]);
    const double m = std::max(a, b);
    total += m > 0.0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(n);
}

struct CorrelationReport {
  Matrix predicted;     // [q x q] Pearson over label columns of predictions
  Matrix ground_truth;  // [q x q] Pearson over label columns of labels
  double cosine = 0.0;  // cosine similarity of the flattened matrices
};

inline Matrix label_correlation(const Matrix& y) {
  const Index q = y.cols();
  Matrix m(q, q);
  std::vector<std::vector<double>> cols(static_cast<std::size_t>(q));
  for (Index j = 0; j < q; ++j) cols[static_cast<std::size_t>(j)] = std::vector<double>(y.col(j).data(), y.col(j).data() + y.rows());
  for (Index j = 0; j < q; ++j)
    for (Index k = 0; k < q; ++k)
      m(j, k) = pearson(cols[static_cast<std::size_t>(j)], cols[static_cast<std::size_t>(k)]);
  return m;
}

inline CorrelationReport emotion_correlation_report(const Matrix& predictions, const Matrix& labels) {
  require_shape(predictions, labels.rows(), labels.cols(), "emotion_correlation_report");
  CorrelationReport r;
  r.predicted = label_correlation(predictions);
  r.ground_truth = label_correlation(labels);
  const double den = r.predicted.norm() * r.ground_truth.norm();
  r.cosine = den > 0.0 ? r.predicted.cwiseProduct(r.ground_truth).sum() / den : 0.0;
  return r;
}

}  // namespace lddu
