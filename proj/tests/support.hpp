#pragma once

// Shared fixtures for the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lddu/lddu.hpp"

namespace lddu::testing {

/// Small planted dataset kept in memory.
inline Dataset toy_dataset(int n, int q, std::uint64_t seed, std::array<int, 3> dims = {5, 4, 6}) {
  SynthConfig sc;
  sc.n = n;
  sc.q = q;
  sc.seed = seed;
  sc.dims = dims;
  sc.seq_len_min = {2, 3, 2};
  sc.seq_len_max = {4, 5, 3};
  SyntheticData sd = generate_synthetic(sc);
  return Dataset(sd.manifest, sd.samples);
}

/// Micro model: q=2, d_h=4, every width <= 8, one layer per modality.
inline TrainConfig micro_config() {
  TrainConfig c;
  c.encoder.layers = {1, 1, 1};
  c.encoder.width = 8;
  c.encoder.heads = 2;
  c.encoder.ffn = 8;
  c.encoder.max_len = 8;
  c.emotion_space.d_h = 4;
  c.emotion_space.proj_dim = 8;
  c.emotion_space.label_dim = 8;
  c.emotion_space.info_hidden = 8;
  c.fusion.cls_hidden = 8;
  c.scl.queue_size = 64;
  c.epochs = 1;
  c.batch_size = 4;
  c.lr = 1e-3;
  return c;
}

struct GroupError {
  std::string name;
  double rel = 0.0;   // |analytic - numeric| / max(|analytic|, |numeric|, floor), as vectors
  double norm = 0.0;  // |analytic|
};

/// Denominator floor of the relative error. Groups whose true gradient is exactly
/// zero (attention key biases: softmax is shift invariant) compare noise to noise.
inline constexpr double kGradFloor = 1e-6;

/// Five-point central finite differences on every scalar of every parameter. `loss` builds
/// the objective on the tape it is handed.
inline std::vector<GroupError> check_parameter_gradients(ParameterStore& store,
                                                         const std::function<ad::Var(ad::Tape&)>& loss,
                                                         double h = 1e-3) {
  store.zero_grad();
  {
    ad::Tape t;
    ad::Var l = loss(t);
    t.backward(l);
    t.flush_param_grads();
  }
  auto eval = [&] {
    ad::Tape t(false);
    return loss(t).scalar();
  };
  std::vector<GroupError> out;
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& p = store.at(i);
    Matrix numeric(p.value.rows(), p.value.cols());
    for (Index k = 0; k < p.value.size(); ++k) {
      const double v0 = p.value.data()[k];
      auto at = [&](double dx) {
        p.value.data()[k] = v0 + dx;
        return eval();
      };
      // Fourth-order stencil: truncation O(h^4) allows a step large enough to
      // keep rounding noise low.
      const double d = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
      p.value.data()[k] = v0;
      numeric.data()[k] = d;
    }
    const double scale = std::max({p.grad.norm(), numeric.norm(), kGradFloor});
    out.push_back({p.name, (p.grad - numeric).norm() / scale, p.grad.norm()});
  }
  return out;
}

/// Finite-difference check of d loss / d x for a free input matrix.
inline double check_input_gradient(const Matrix& x0, const std::function<ad::Var(ad::Tape&, const ad::Var&)>& loss,
                                   double h = 1e-6) {
  Matrix analytic;
  {
    ad::Tape t;
    ad::Var x = t.leaf(x0);
    ad::Var l = loss(t, x);
    t.backward(l);
    analytic = t.grad(x);
  }
  Matrix numeric(x0.rows(), x0.cols());
  Matrix x = x0;
  for (Index k = 0; k < x.size(); ++k) {
    const double v0 = x.data()[k];
    x.data()[k] = v0 + h;
    ad::Tape t1;
    const double up = loss(t1, t1.constant(x)).scalar();
    x.data()[k] = v0 - h;
    ad::Tape t2;
    const double down = loss(t2, t2.constant(x)).scalar();
    x.data()[k] = v0;
    numeric.data()[k] = (up - down) / (2.0 * h);
  }
  const double scale = std::max({analytic.norm(), numeric.norm(), kGradFloor});
  return (analytic - numeric).norm() / scale;
}

/// Everything needed to evaluate the full objective of a frozen micro model:
/// batch of 3, a warm queue, a tracker with history, and a fixed fusion gate.
struct MicroPipeline {
  Dataset data;
  TrainConfig cfg;
  std::unique_ptr<LdduModel> model;
  Batch batch;
  ContrastQueue queue{64};
  CorrectnessTracker tracker;
  Matrix gate;

  explicit MicroPipeline(TrainConfig c = micro_config(), std::uint64_t seed = 3)
      : data(toy_dataset(12, 2, seed)), cfg(std::move(c)) {
    model = std::make_unique<LdduModel>(cfg, ModelShape{data.q(), data.manifest().dims}, seed);
    const auto& ids = data.split("train");
    // Pick three samples that together hold both labels, positives and negatives.
    std::vector<std::string> pick;
    for (const auto& id : ids) {
      pick.push_back(id);
      if (pick.size() == 3) {
        const Batch b = make_batch(data, pick);
        const double pos = b.labels.sum();
        if (pos >= 2 && pos <= 4 && (b.labels.colwise().sum().array() > 0).all()) break;
        pick.erase(pick.begin());
      }
    }
    batch = make_batch(data, pick);
    queue = ContrastQueue(static_cast<std::size_t>(cfg.scl.queue_size));
    tracker = CorrectnessTracker(data.size());
    const Batch warm = make_batch(data, std::vector<std::string>(ids.end() - 4, ids.end()));
    ad::Tape t(false);
    ForwardResult r = model->forward(t, warm, ForwardContext{}, true);
    queue.push(LdduModel::queue_entries(r));
    for (std::size_t b = 0; b < batch.indices.size(); ++b) tracker.record(batch.indices[b], 0.25 * static_cast<double>(b + 1));
    ad::Tape tg(false);
    gate = model->forward(tg, batch, ForwardContext{}, true).d.value();
  }

  ad::Var total(ad::Tape& t) const {
    ForwardContext ctx;
    ctx.gate_override = &gate;
    ForwardResult r = model->forward(t, batch, ctx, true);
    return model->losses(r, batch, &queue, &tracker).total;
  }
};

inline double max_rel(const std::vector<GroupError>& g) {
  double m = 0.0;
  for (const auto& e : g) m = std::max(m, e.rel);
  return m;
}

}  // namespace lddu::testing
