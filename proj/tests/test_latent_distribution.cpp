#include <gtest/gtest.h>

#include "support.hpp"

using namespace lddu;

namespace {

VectorIdentity ident(std::size_t sample, Modality m, int label, bool positive) { return {sample, m, label, positive}; }

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(static_cast<Index>(r.size()), static_cast<Index>(r.begin()->size()));
  Index i = 0;
  for (const auto& row : r) {
    Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

// Random unit-half vectors with random identities over `clusters` labels of one modality.
struct RandomPool {
  Matrix vectors;
  std::vector<VectorIdentity> ids;
};

RandomPool random_pool(Index n, Index half, int q, std::mt19937_64& rng) {
  RandomPool p;
  p.vectors.resize(n, 2 * half);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> lab(0, q - 1), mod(0, 2);
  std::bernoulli_distribution pos(0.7);
  for (Index i = 0; i < n; ++i) {
    Vector mu(half), sigma(half);
    for (Index k = 0; k < half; ++k) {
      mu(k) = g(rng);
      sigma(k) = std::abs(g(rng)) + 0.1;
    }
    p.vectors.row(i) = to_vector(mu, sigma).transpose();
    p.ids.push_back(ident(static_cast<std::size_t>(i), static_cast<Modality>(mod(rng)), lab(rng), pos(rng)));
  }
  return p;
}

}  // namespace

TEST(Decouple, SigmaIsStrictlyPositiveAndShapesHalve) {
  ParameterStore store;
  std::mt19937_64 rng(1);
  DistributionHeads heads(store, 128, rng);
  for (double scale : {1.0, 100.0, 1e4}) {
    ad::Tape t;
    std::array<ad::Var, 3> z;
    for (auto& v : z) v = t.constant(normal_matrix(6, 128, scale, rng));
    const LatentDistributionSet d = heads.decouple(t, z);
    for (int k = 0; k < 3; ++k) {
      EXPECT_EQ(d.mu[k].rows(), 6);
      EXPECT_EQ(d.mu[k].cols(), 64);
      EXPECT_EQ(d.sigma[k].cols(), 64);
      EXPECT_GT(d.sigma[k].value().minCoeff(), 0.0);
      EXPECT_TRUE(d.mu[k].value().allFinite());
    }
  }
}

TEST(Decouple, SigmaHeadDoesNotTouchMu) {
  ParameterStore store;
  std::mt19937_64 rng(2);
  DistributionHeads heads(store, 8, rng);
  const Matrix z = normal_matrix(3, 8, 1.0, rng);
  auto run = [&] {
    ad::Tape t;
    const LatentDistributionSet d = heads.decouple(t, {t.constant(z), t.constant(z), t.constant(z)});
    return std::make_pair(Matrix(d.mu[0].value()), Matrix(d.sigma[0].value()));
  };
  const auto [mu0, sigma0] = run();
  store.get("ddl.v.sigma.w").value.array() += 0.5;
  const auto [mu1, sigma1] = run();
  EXPECT_EQ(mu0, mu1);
  EXPECT_NE(sigma0, sigma1);
}

TEST(Decouple, NonFiniteInputIsRejected) {
  ParameterStore store;
  std::mt19937_64 rng(3);
  DistributionHeads heads(store, 4, rng);
  Matrix z = Matrix::Zero(2, 4);
  z(1, 2) = std::numeric_limits<double>::infinity();
  ad::Tape t;
  EXPECT_THROW(heads.decouple(t, {t.constant(z), t.constant(z), t.constant(z)}), ValidationError);
  EXPECT_THROW(DistributionHeads(store, 5, rng), ConfigError);
}

TEST(ToVector, WorkedExample) {
  const Vector e = to_vector(Vector{{3.0, 4.0}}, Vector{{1.0, 1.0}});
  EXPECT_NEAR(e(0), 0.6, 1e-12);
  EXPECT_NEAR(e(1), 0.8, 1e-12);
  EXPECT_NEAR(e(2), std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(e(3), std::sqrt(0.5), 1e-12);
}

TEST(ToVector, SelfSimilarityIsTwoAndScaleInvariant) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 500; ++trial) {
    const Index h = 1 + trial % 9;
    Vector mu(h), sigma(h);
    for (Index k = 0; k < h; ++k) {
      mu(k) = g(rng) * std::pow(10.0, trial % 7 - 3);
      sigma(k) = std::abs(g(rng)) + 1e-6;
    }
    const Vector e = to_vector(mu, sigma);
    EXPECT_NEAR(e.dot(e), 2.0, 1e-6);
    const Vector e10 = to_vector(10.0 * mu, sigma);
    // Exact up to the norm epsilon, whose effect shrinks with |mu|.
    EXPECT_NEAR((e.head(h) - e10.head(h)).norm(), 0.0, 1e-12 + 10.0 * kNormEps / mu.norm());
  }
}

TEST(ToVector, DegenerateInputs) {
  EXPECT_THROW(to_vector(Vector::Zero(3), Vector::Ones(3), VectorMode::Both, true), NumericError);
  EXPECT_NO_THROW(to_vector(Vector::Zero(3), Vector::Ones(3)));  // 1e-12 on the norm
  EXPECT_THROW(to_vector(Vector::Ones(3), Vector{{1.0, 0.0, 1.0}}), ValidationError);
}

TEST(ToVector, TapeVersionAgreesAndHonorsModes) {
  std::mt19937_64 rng(5);
  const Matrix mu = normal_matrix(4, 3, 1.0, rng);
  const Matrix sigma = normal_matrix(4, 3, 1.0, rng).cwiseAbs().array() + 0.1;
  ad::Tape t;
  const Matrix both = distribution_vectors(t.constant(mu), t.constant(sigma), VectorMode::Both).value();
  const Matrix mu_only = distribution_vectors(t.constant(mu), t.constant(sigma), VectorMode::MuOnly).value();
  const Matrix sigma_only = distribution_vectors(t.constant(mu), t.constant(sigma), VectorMode::SigmaOnly).value();
  ASSERT_EQ(both.cols(), 6);
  ASSERT_EQ(mu_only.cols(), 3);
  ASSERT_EQ(sigma_only.cols(), 3);
  for (Index i = 0; i < 4; ++i) {
    const Vector ref = to_vector(mu.row(i).transpose(), sigma.row(i).transpose());
    EXPECT_NEAR((both.row(i).transpose() - ref).norm(), 0.0, 1e-12);
    EXPECT_NEAR((mu_only.row(i).transpose() - ref.head(3)).norm(), 0.0, 1e-12);
    EXPECT_NEAR((sigma_only.row(i).transpose() - ref.tail(3)).norm(), 0.0, 1e-12);
  }
}

TEST(Similarity, StaysWithinPlusMinusTwo) {
  std::mt19937_64 rng(6);
  const RandomPool p = random_pool(200, 5, 3, rng);
  for (Index i = 0; i < p.vectors.rows(); ++i) {
    for (Index j = 0; j < p.vectors.rows(); ++j) {
      const double z = similarity(p.vectors.row(i).transpose(), p.vectors.row(j).transpose());
      EXPECT_LE(z, 2.0 + 1e-12);
      EXPECT_GE(z, -2.0 - 1e-12);
    }
  }
}

TEST(SupCon, SingleAnchorHandValue) {
  // Anchor a; queue holds one positive p with a.p = 2 and one negative n with a.n = 0.
  const Matrix batch = rows({{1, 0, 1, 0}});
  const Matrix queue = rows({{1, 0, 1, 0}, {0, 1, 0, 1}});
  const SupConResult r = supcon_loss(batch, {ident(0, Modality::Visual, 0, true)}, queue,
                                     {ident(1, Modality::Visual, 0, true), ident(2, Modality::Visual, 1, true)}, 1.0, 2);
  EXPECT_NEAR(r.loss, -std::log(std::exp(2.0) / (std::exp(2.0) + 1.0)), 1e-12);
  EXPECT_NEAR(r.loss, 0.12693, 1e-5);
  EXPECT_EQ(r.anchors, 1u);
}

TEST(SupCon, NegativeFlagRowsOfTheSameClusterAreNegatives) {
  const Matrix batch = rows({{1, 0, 1, 0}});
  const Matrix queue = rows({{1, 0, 1, 0}, {0.6, 0.8, 1, 0}});
  const SupConResult r = supcon_loss(batch, {ident(0, Modality::Audio, 1, true)}, queue,
                                     {ident(1, Modality::Audio, 1, true), ident(2, Modality::Audio, 1, false)}, 0.5, 2);
  const double zp = 2.0 / 0.5, zn = 1.6 / 0.5;
  EXPECT_NEAR(r.loss, -std::log(std::exp(zp) / (std::exp(zp) + std::exp(zn))), 1e-12);
}

TEST(SupCon, CrossModalPositivesShareTheLabelOnly) {
  const Matrix batch = rows({{1, 0}});
  const Matrix queue = rows({{0, 1}, {1, 0}});
  const std::vector<VectorIdentity> bid{ident(0, Modality::Visual, 0, true)};
  const std::vector<VectorIdentity> qid{ident(1, Modality::Text, 0, true), ident(2, Modality::Audio, 1, true)};
  EXPECT_EQ(supcon_loss(batch, bid, queue, qid, 1.0, 2, false).anchors, 0u);
  const SupConResult r = supcon_loss(batch, bid, queue, qid, 1.0, 2, true);
  EXPECT_EQ(r.anchors, 1u);
  EXPECT_NEAR(r.loss, -std::log(1.0 / (1.0 + std::exp(1.0))), 1e-12);
}

TEST(SupCon, AnchorWithoutPositivesIsSkipped) {
  const Matrix batch = rows({{1, 0}, {0, 1}});
  const SupConResult r = supcon_loss(batch, {ident(0, Modality::Visual, 0, true), ident(1, Modality::Visual, 1, false)},
                                     Matrix(0, 2), {}, 0.1, 2);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.anchors, 0u);
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_TRUE(r.grad.isZero(0.0));
}

TEST(SupCon, RejectsNonPositiveTemperature) {
  const Matrix batch = rows({{1, 0}});
  EXPECT_THROW(supcon_loss(batch, {ident(0, Modality::Visual, 0, true)}, Matrix(0, 2), {}, 0.0, 1), ConfigError);
  LatentConfig cfg;
  cfg.tau = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(SupCon, EveryAnchorTermIsNonNegative) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const RandomPool b = random_pool(12, 3, 2, rng);
    const RandomPool q = random_pool(8, 3, 2, rng);
    for (Index i = 0; i < b.vectors.rows(); ++i) {
      if (!b.ids[static_cast<std::size_t>(i)].positive) continue;
      // Single-anchor batch: the loss is exactly that anchor's term.
      Matrix pool(b.vectors.rows() - 1 + q.vectors.rows(), b.vectors.cols());
      std::vector<VectorIdentity> pids;
      Index r = 0;
      for (Index k = 0; k < b.vectors.rows(); ++k) {
        if (k == i) continue;
        pool.row(r++) = b.vectors.row(k);
        pids.push_back(b.ids[static_cast<std::size_t>(k)]);
      }
      pool.bottomRows(q.vectors.rows()) = q.vectors;
      pids.insert(pids.end(), q.ids.begin(), q.ids.end());
      EXPECT_GE(supcon_loss(b.vectors.row(i), {b.ids[static_cast<std::size_t>(i)]}, pool, pids, 0.2, 2).loss, 0.0);
    }
  }
}

TEST(SupCon, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  const RandomPool b = random_pool(10, 3, 2, rng);
  const RandomPool q = random_pool(6, 3, 2, rng);
  const double err = lddu::testing::check_input_gradient(b.vectors, [&](ad::Tape&, const ad::Var& x) {
    return supcon_loss(x, b.ids, q.vectors, q.ids, 0.3, 2);
  });
  EXPECT_LE(err, 1e-4);
}

TEST(SupCon, TrainingPullsClustersTogether) {
  // Free mu/sigma rows for 3 modalities x 2 labels x 6 samples, optimized on the
  // contrastive loss alone.
  const int q = 2, per = 6, half = 4;
  std::mt19937_64 rng(9);
  ParameterStore store;
  Parameter& mu = store.add("mu", normal_matrix(3 * q * per, half, 1.0, rng));
  Parameter& raw = store.add("raw", normal_matrix(3 * q * per, half, 1.0, rng));
  std::vector<VectorIdentity> ids;
  std::vector<int> cluster;
  for (Modality m : kModalities)
    for (int j = 0; j < q; ++j)
      for (int s = 0; s < per; ++s) {
        ids.push_back(ident(static_cast<std::size_t>(s), m, j, true));
        cluster.push_back(ids.back().cluster(q));
      }
  auto vectors = [&](ad::Tape& t) {
    return distribution_vectors(t.param(mu), ad::add_scalar(ad::softplus(t.param(raw)), kSigmaFloor), VectorMode::Both);
  };
  auto gap = [&] {
    ad::Tape t(false);
    const Matrix e = vectors(t).value();
    const Matrix z = e * e.transpose();
    double within = 0.0, between = 0.0;
    long nw = 0, nb = 0;
    for (Index i = 0; i < z.rows(); ++i)
      for (Index j = 0; j < z.cols(); ++j) {
        if (i == j) continue;
        if (cluster[static_cast<std::size_t>(i)] == cluster[static_cast<std::size_t>(j)]) {
          within += z(i, j);
          ++nw;
        } else {
          between += z(i, j);
          ++nb;
        }
      }
    return within / static_cast<double>(nw) - between / static_cast<double>(nb);
  };
  const double before = gap();
  Adam adam;
  for (int step = 0; step < 200; ++step) {
    store.zero_grad();
    ad::Tape t;
    ad::Var l = supcon_loss(vectors(t), ids, Matrix(0, 2 * half), {}, 0.1, q);
    t.backward(l);
    t.flush_param_grads();
    adam.step(store, 0.05);
  }
  const double after = gap();
  EXPECT_GT(after, 0.0);
  EXPECT_GT(after, before + 0.5);
}

TEST(ContrastQueue, FifoEvictsOldestFirst) {
  ContrastQueue q(3);
  for (std::size_t i = 1; i <= 4; ++i) q.push({{Vector::Constant(2, static_cast<double>(i)), ident(i, Modality::Visual, 0, true)}});
  ASSERT_EQ(q.size(), 3u);
  EXPECT_EQ(q.at(0).id.sample, 2u);
  EXPECT_EQ(q.at(1).id.sample, 3u);
  EXPECT_EQ(q.at(2).id.sample, 4u);
  EXPECT_EQ(q.push_calls(), 4u);
}

TEST(ContrastQueue, UnderCapacityKeepsEverythingInOrder) {
  ContrastQueue q(10);
  std::vector<DistributionVector> batch;
  for (std::size_t i = 0; i < 4; ++i) batch.push_back({Vector::Constant(2, static_cast<double>(i)), ident(i, Modality::Text, 1, false)});
  q.push(batch);
  ASSERT_EQ(q.size(), 4u);
  const auto [m, ids] = q.snapshot(2);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(ids[i].sample, i);
    EXPECT_EQ(m(static_cast<Index>(i), 0), static_cast<double>(i));
  }
}

TEST(ContrastQueue, EntriesAreImmutableCopies) {
  ContrastQueue q(4);
  std::vector<DistributionVector> batch{{Vector::Ones(3), ident(0, Modality::Audio, 0, true)}};
  q.push(batch);
  batch[0].e.setConstant(-7.0);
  batch[0].id.label = 3;
  EXPECT_EQ(q.at(0).e, Vector::Ones(3));
  EXPECT_EQ(q.at(0).id.label, 0);
}

TEST(ContrastQueue, RandomPushSequencesRespectCapacity) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t cap = rng() % 20;
    ContrastQueue q(cap);
    std::vector<std::size_t> all;
    std::size_t next = 0;
    for (int k = 0; k < 10; ++k) {
      std::vector<DistributionVector> batch;
      const std::size_t n = rng() % 7;
      for (std::size_t i = 0; i < n; ++i) {
        batch.push_back({Vector::Zero(1), ident(next, Modality::Visual, 0, true)});
        all.push_back(next++);
      }
      q.push(batch);
      ASSERT_LE(q.size(), cap);
      const std::size_t keep = std::min(cap, all.size());
      ASSERT_EQ(q.size(), keep);
      for (std::size_t i = 0; i < keep; ++i) EXPECT_EQ(q.at(i).id.sample, all[all.size() - keep + i]);
    }
  }
}
