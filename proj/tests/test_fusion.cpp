#include <gtest/gtest.h>

#include "support.hpp"

using namespace lddu;

namespace {

RowVector rv(std::initializer_list<double> v) {
  RowVector r(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) r(i++) = x;
  return r;
}

// Distribution heads + fusion classifiers on free label features.
struct FusionPath {
  int q = 2, d_h = 4, batch = 3;
  ParameterStore store;
  DistributionHeads heads;
  UncertaintyFusion fusion;
  std::array<Matrix, 3> z;

  explicit FusionPath(FusionConfig cfg = {}) {
    cfg.cls_hidden = 8;
    std::mt19937_64 rng(5);
    heads = DistributionHeads(store, d_h, rng);
    fusion = UncertaintyFusion(store, q, d_h, cfg, rng);
    for (auto& m : z) m = normal_matrix(batch * q, d_h, 1.0, rng);
  }

  FusionPrediction run(ad::Tape& t, const Matrix& d) const {
    const LatentDistributionSet dist = heads.decouple(t, {t.constant(z[0]), t.constant(z[1]), t.constant(z[2])});
    return fusion.fuse(t, dist, t.constant(d));
  }
};

}  // namespace

TEST(UncertaintyScore, WorkedExamples) {
  EXPECT_EQ(uncertainty_score(rv({1, 0, 1}), rv({1, 0, 1})), 0.0);
  EXPECT_EQ(uncertainty_score(rv({0, 1, 0}), rv({1, 0, 1})), 1.0);
  EXPECT_NEAR(uncertainty_score(rv({0.8, 0.2}), rv({1, 0})), 0.2, 1e-15);
  EXPECT_THROW(uncertainty_score(rv({0.5, 0.5}), rv({1, 2})), ValidationError);
}

TEST(UncertaintyScore, TapeVersionMatchesAndStaysInUnitInterval) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix p(4, 3), y(4, 3);
    for (Index i = 0; i < p.size(); ++i) {
      p.data()[i] = u(rng);
      y.data()[i] = u(rng) < 0.5 ? 0.0 : 1.0;
    }
    ad::Tape t;
    const Matrix d = uncertainty_score(t.constant(p), y).value();
    for (Index i = 0; i < 4; ++i) {
      EXPECT_NEAR(d(i, 0), uncertainty_score(RowVector(p.row(i)), RowVector(y.row(i))), 1e-15);
      EXPECT_GE(d(i, 0), 0.0);
      EXPECT_LE(d(i, 0), 1.0);
    }
  }
}

TEST(InferenceUncertainty, WorkedExamples) {
  EXPECT_NEAR(inference_uncertainty(rv({0.5, 0.5, 0.5})), 1.0, 1e-15);
  EXPECT_LE(inference_uncertainty(rv({1e-7, 1 - 1e-7, 1e-7})), 1e-5);
  EXPECT_NEAR(inference_uncertainty(rv({0.5, 1e-7})), 0.5, 1e-5);
}

TEST(Fuse, GateEndpointsAndMidpoint) {
  EXPECT_EQ(fuse_values(rv({0.8}), rv({0.4}), 1.0), rv({0.8}));
  EXPECT_EQ(fuse_values(rv({0.8}), rv({0.4}), 0.0), rv({0.4}));
  EXPECT_NEAR(fuse_values(rv({0.8}), rv({0.4}), 0.5)(0), 0.6, 1e-15);

  FusionPath f;
  ad::Tape t;
  const FusionPrediction one = f.run(t, Matrix::Ones(3, 1));
  EXPECT_EQ(one.y_fnl.value(), one.y_mu.value());
  const FusionPrediction zero = f.run(t, Matrix::Zero(3, 1));
  EXPECT_EQ(zero.y_fnl.value(), zero.y_sigma.value());
}

TEST(Fuse, OutputIsAConvexCombinationPerElement) {
  FusionPath f;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix d(3, 1);
    for (Index i = 0; i < 3; ++i) d(i, 0) = u(rng);
    ad::Tape t;
    const FusionPrediction p = f.run(t, d);
    const Matrix& m = p.y_mu.value();
    const Matrix& s = p.y_sigma.value();
    const Matrix& y = p.y_fnl.value();
    for (Index i = 0; i < y.rows(); ++i)
      for (Index j = 0; j < y.cols(); ++j) {
        EXPECT_GE(y(i, j), std::min(m(i, j), s(i, j)) - 1e-15);
        EXPECT_LE(y(i, j), std::max(m(i, j), s(i, j)) + 1e-15);
      }
  }
}

TEST(Fuse, SwapGateUsesTheComplement) {
  FusionConfig cfg;
  cfg.swap_gate = true;
  FusionPath f(cfg);
  ad::Tape t;
  const FusionPrediction p = f.run(t, Matrix::Ones(3, 1));
  EXPECT_EQ(p.y_fnl.value(), p.y_sigma.value());
}

TEST(Fuse, RejectsGateOutsideUnitInterval) {
  FusionPath f;
  ad::Tape t;
  EXPECT_THROW(f.run(t, Matrix::Constant(3, 1, 1.5)), ValidationError);
  EXPECT_THROW(f.run(t, Matrix::Constant(3, 2, 0.5)), ShapeError);
}

TEST(LossCls, HandValues) {
  Matrix y(1, 2);
  y << 1, 0;
  ad::Tape t;
  Matrix p(1, 2);
  p << 0.9, 0.1;
  EXPECT_NEAR(loss_cls(t.constant(p), y).scalar(), -std::log(0.9), 1e-12);
  EXPECT_NEAR(loss_cls(t.constant(p), y).scalar(), 0.10536, 1e-5);
  EXPECT_NEAR(loss_cls(t.constant(Matrix::Constant(2, 3, 0.5)), Matrix::Zero(2, 3)).scalar(), std::log(2.0), 1e-12);
  EXPECT_LE(loss_cls(t.constant(y), y).scalar(), 1e-6);
}

TEST(LossCls, DroppingABranchCutsItsGradient) {
  for (bool drop_sigma : {true, false}) {
    FusionConfig cfg;
    cfg.drop_sigma = drop_sigma;
    cfg.drop_mu = !drop_sigma;
    FusionPath f(cfg);
    Matrix y(3, 2);
    y << 1, 0, 0, 1, 1, 1;
    f.store.zero_grad();
    ad::Tape t;
    ad::Var l = loss_cls(f.run(t, Matrix::Constant(3, 1, 0.3)).y_fnl, y);
    t.backward(l);
    t.flush_param_grads();
    const std::string off = drop_sigma ? "cls.sigma." : "cls.mu.";
    const std::string on = drop_sigma ? "cls.mu." : "cls.sigma.";
    for (const char* part : {"hidden.w", "hidden.b", "out.w", "out.b"}) {
      EXPECT_EQ(f.store.get(off + part).grad.norm(), 0.0) << off + part;
      EXPECT_GT(f.store.get(on + part).grad.norm(), 0.0) << on + part;
    }
    EXPECT_EQ(f.store.get(drop_sigma ? "ddl.v.sigma.w" : "ddl.v.mu.w").grad.norm(), 0.0);
  }
}

TEST(LossCls, GradientsMatchFiniteDifferences) {
  FusionPath f;
  Matrix y(3, 2);
  y << 1, 0, 0, 1, 1, 1;
  Matrix d(3, 1);
  d << 0.2, 0.7, 0.5;
  const auto errs =
      lddu::testing::check_parameter_gradients(f.store, [&](ad::Tape& t) { return loss_cls(f.run(t, d).y_fnl, y); });
  for (const auto& e : errs) {
    EXPECT_LE(e.rel, 1e-4) << e.name;
    EXPECT_GT(e.norm, 0.0) << e.name;
  }
}
