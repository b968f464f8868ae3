#include <gtest/gtest.h>

#include "support.hpp"

using namespace lddu;
using lddu::testing::check_input_gradient;

namespace {

Matrix random_matrix(Index r, Index c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  return normal_matrix(r, c, scale, rng);
}

// Fixed random readout so every output entry matters.
ad::Var readout(ad::Tape& t, const ad::Var& y, std::uint64_t seed = 99) {
  return ad::sum(y * t.constant(random_matrix(y.rows(), y.cols(), seed)));
}

}  // namespace

TEST(Autodiff, ElementwiseOpsMatchFiniteDifferences) {
  const Matrix x = random_matrix(3, 4, 1);
  const Matrix pos = x.cwiseAbs().array() + 0.5;
  EXPECT_LT(check_input_gradient(x, [](ad::Tape& t, const ad::Var& v) { return readout(t, ad::sigmoid(v)); }), 1e-6);
  EXPECT_LT(check_input_gradient(x, [](ad::Tape& t, const ad::Var& v) { return readout(t, ad::softplus(v)); }), 1e-6);
  EXPECT_LT(check_input_gradient(x, [](ad::Tape& t, const ad::Var& v) { return readout(t, ad::gelu(v)); }), 1e-6);
  EXPECT_LT(check_input_gradient(x, [](ad::Tape& t, const ad::Var& v) { return readout(t, ad::exp(v)); }), 1e-6);
  EXPECT_LT(check_input_gradient(pos, [](ad::Tape& t, const ad::Var& v) { return readout(t, ad::log(v)); }), 1e-6);
  EXPECT_LT(check_input_gradient(pos, [](ad::Tape& t, const ad::Var& v) { return readout(t, ad::reciprocal(v)); }), 1e-6);
  EXPECT_LT(check_input_gradient(x, [](ad::Tape& t, const ad::Var& v) { return readout(t, v * v); }), 1e-6);
}

TEST(Autodiff, StructuralOpsMatchFiniteDifferences) {
  const Matrix x = random_matrix(4, 6, 2);
  EXPECT_LT(check_input_gradient(x, [](ad::Tape& t, const ad::Var& v) {
              return readout(t, ad::matmul(v, t.constant(random_matrix(6, 3, 5))));
            }),
            1e-6);
  EXPECT_LT(check_input_gradient(x, [](ad::Tape& t, const ad::Var& v) { return readout(t, ad::transpose(v)); }), 1e-6);
  EXPECT_LT(check_input_gradient(x, [](ad::Tape& t, const ad::Var& v) { return readout(t, ad::row_mean(v)); }), 1e-6);
  EXPECT_LT(check_input_gradient(x, [](ad::Tape& t, const ad::Var& v) { return readout(t, ad::row_norm(v)); }), 1e-6);
  EXPECT_LT(check_input_gradient(x, [](ad::Tape& t, const ad::Var& v) { return readout(t, ad::slice_cols(v, 1, 3)); }),
            1e-6);
  EXPECT_LT(check_input_gradient(x, [](ad::Tape& t, const ad::Var& v) { return readout(t, ad::slice_rows(v, 1, 2)); }),
            1e-6);
  EXPECT_LT(check_input_gradient(x, [](ad::Tape& t, const ad::Var& v) { return readout(t, ad::flatten(v)); }), 1e-6);
  EXPECT_LT(check_input_gradient(x, [](ad::Tape& t, const ad::Var& v) { return readout(t, ad::group_rows(v, 2)); }),
            1e-6);
  EXPECT_LT(check_input_gradient(x, [](ad::Tape& t, const ad::Var& v) { return readout(t, ad::tile_rows(v, 3)); }),
            1e-6);
  EXPECT_LT(check_input_gradient(x, [](ad::Tape& t, const ad::Var& v) {
              return readout(t, ad::concat_cols({v, ad::scale(v, 2.0)}));
            }),
            1e-6);
  EXPECT_LT(check_input_gradient(x, [](ad::Tape& t, const ad::Var& v) {
              return readout(t, ad::concat_rows({v, ad::exp(v)}));
            }),
            1e-6);
}

TEST(Autodiff, RowOpsMatchFiniteDifferences) {
  const Matrix x = random_matrix(4, 5, 3);
  const Matrix s = random_matrix(4, 1, 4).cwiseAbs().array() + 0.5;
  EXPECT_LT(check_input_gradient(x, [&](ad::Tape& t, const ad::Var& v) {
              return readout(t, ad::scale_rows(v, t.constant(s)));
            }),
            1e-6);
  EXPECT_LT(check_input_gradient(s, [&](ad::Tape& t, const ad::Var& v) {
              return readout(t, ad::scale_rows(t.constant(x), v));
            }),
            1e-6);
  EXPECT_LT(check_input_gradient(s, [&](ad::Tape& t, const ad::Var& v) {
              return readout(t, ad::divide_rows(t.constant(x), v));
            }),
            1e-6);
  EXPECT_LT(check_input_gradient(random_matrix(1, 5, 6), [&](ad::Tape& t, const ad::Var& b) {
              return readout(t, ad::add_row(t.constant(x), b));
            }),
            1e-6);
}

TEST(Autodiff, MaskedSoftmaxAndLayerNormMatchFiniteDifferences) {
  const Matrix x = random_matrix(3, 5, 7);
  const std::vector<bool> valid{true, true, false, true, false};
  EXPECT_LT(check_input_gradient(x, [&](ad::Tape& t, const ad::Var& v) {
              return readout(t, ad::masked_softmax_rows(v, valid));
            }),
            1e-6);
  const Matrix g = random_matrix(1, 5, 8), b = random_matrix(1, 5, 9);
  EXPECT_LT(check_input_gradient(x, [&](ad::Tape& t, const ad::Var& v) {
              return readout(t, ad::layer_norm_rows(v, t.constant(g), t.constant(b)));
            }),
            1e-6);
  EXPECT_LT(check_input_gradient(g, [&](ad::Tape& t, const ad::Var& v) {
              return readout(t, ad::layer_norm_rows(t.constant(x), v, t.constant(b)));
            }),
            1e-6);
}

TEST(Autodiff, AttentionKernelsMatchFiniteDifferences) {
  const Index len = 4, batch = 2, width = 6;
  const std::vector<std::vector<bool>> masks{{true, true, true, false}, {true, true, false, false}};
  const Matrix x = random_matrix(batch * len, width, 10);
  const Matrix k = random_matrix(batch * len, width, 11);
  EXPECT_LT(check_input_gradient(x, [&](ad::Tape& t, const ad::Var& v) {
              ad::Var out = ad::multi_head_self_attention(v, t.constant(k), v, masks, len, 2);
              // Padded query rows are never read downstream; read only valid rows.
              Matrix w = random_matrix(out.rows(), out.cols(), 12);
              for (Index b = 0; b < batch; ++b)
                for (Index p = 0; p < len; ++p)
                  if (!masks[static_cast<std::size_t>(b)][static_cast<std::size_t>(p)]) w.row(b * len + p).setZero();
              return ad::sum(out * t.constant(w));
            }),
            1e-6);
  const Matrix labels = random_matrix(3, width, 13);
  EXPECT_LT(check_input_gradient(labels, [&](ad::Tape& t, const ad::Var& v) {
              return readout(t, ad::label_attention(v, t.constant(x), masks, len));
            }),
            1e-6);
  EXPECT_LT(check_input_gradient(x, [&](ad::Tape& t, const ad::Var& v) {
              return readout(t, ad::label_attention(t.constant(labels), v, masks, len));
            }),
            1e-6);
}

TEST(Autodiff, GradientsAccumulateAcrossUses) {
  ad::Tape t;
  ad::Var x = t.leaf(Matrix::Constant(1, 1, 3.0));
  ad::Var y = x * x + ad::scale(x, 2.0);  // dy/dx = 2x + 2 = 8
  t.backward(y);
  EXPECT_DOUBLE_EQ(t.grad(x)(0, 0), 8.0);
}

TEST(Autodiff, NoGradTapeRecordsConstantsOnly) {
  Parameter p("w", Matrix::Ones(2, 2));
  ad::Tape t(false);
  ad::Var w = t.param(p);
  EXPECT_FALSE(w.requires_grad());
  ad::Var y = ad::sum(ad::sigmoid(w));
  EXPECT_FALSE(y.requires_grad());
  EXPECT_NEAR(y.scalar(), 4.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(Autodiff, ValueReferencesSurviveTapeGrowth) {
  ad::Tape t;
  ad::Var x = t.constant(Matrix::Constant(2, 2, 1.5));
  const Matrix& ref = x.value();
  for (int i = 0; i < 5000; ++i) t.constant(Matrix::Zero(2, 2));
  EXPECT_EQ(ref(1, 1), 1.5);
}

TEST(Autodiff, ShapeMismatchThrows) {
  ad::Tape t;
  ad::Var a = t.constant(Matrix::Zero(2, 3));
  ad::Var b = t.constant(Matrix::Zero(2, 2));
  EXPECT_THROW(ad::matmul(a, b), ShapeError);
  EXPECT_THROW(a + b, ShapeError);
}

TEST(Optimizer, WarmupCosineSchedule) {
  EXPECT_NEAR(warmup_cosine_lr(1.0, 0, 100, 0.1), 0.1, 1e-12);
  EXPECT_NEAR(warmup_cosine_lr(1.0, 9, 100, 0.1), 1.0, 1e-12);
  EXPECT_NEAR(warmup_cosine_lr(1.0, 55, 100, 0.1), 0.5, 1e-12);
  EXPECT_LT(warmup_cosine_lr(1.0, 99, 100, 0.1), 1e-3);
}

TEST(Optimizer, AdamMinimizesQuadratic) {
  ParameterStore store;
  Parameter& p = store.add("x", Matrix::Constant(1, 3, 5.0));
  Adam adam(AdamConfig{});
  for (int i = 0; i < 2000; ++i) {
    store.zero_grad();
    ad::Tape t;
    ad::Var x = t.param(p);
    ad::Var l = ad::sum(x * x);
    t.backward(l);
    t.flush_param_grads();
    adam.step(store, 0.05);
  }
  EXPECT_LT(p.value.cwiseAbs().maxCoeff(), 1e-2);
}
