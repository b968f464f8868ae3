#pragma once

// Training loop, inference, checkpoints, embedding export and reports.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lddu/model.hpp"

namespace lddu {

// ---------------------------------------------------------------- inference

/// Per-sample outputs of a gradient-free pass over one split.
struct InferenceResult {
  std::vector<std::string> ids;
  Matrix probs;        // [n x q] fused predictions y_fnl (gate from the entropy proxy)
  Matrix info_probs;   // [n x q] Info Classifier predictions
  Matrix mu_probs;     // [n x q] mean branch (empty when dropped)
  Matrix sigma_probs;  // [n x q] variance branch (empty when dropped)
  Matrix labels;       // [n x q]
  Vector sigma_norm;   // |sigma_i|_2 over all modalities and labels
  Vector d;            // label-based uncertainty score
  Vector d_hat;        // entropy proxy used at inference
  std::vector<std::optional<double>> noise;
  Matrix vectors;      // positive distribution vectors, one row each
  std::vector<VectorIdentity> vector_ids;
};

inline InferenceResult run_inference(const LdduModel& model, const Dataset& data, const std::string& split,
                                     int batch_size = 64) {
  const auto& ids = data.split(split);
  if (ids.empty()) throw LookupError("split '" + split + "' is empty");
  const int q = model.shape().q;
  InferenceResult out;
  const Index n = static_cast<Index>(ids.size());
  out.probs.resize(n, q);
  out.info_probs.resize(n, q);
  out.labels.resize(n, q);
  if (!model.config().fusion.drop_mu) out.mu_probs.resize(n, q);
  if (!model.config().fusion.drop_sigma) out.sigma_probs.resize(n, q);
  out.sigma_norm.resize(n);
  out.d.resize(n);
  out.d_hat.resize(n);
  std::vector<Vector> rows;
  Index at = 0;
  for (const Batch& batch : make_batches(data, ids, batch_size, 0, false, model.config().encoder.max_len)) {
    ad::Tape t(false);
    ForwardResult r = model.forward(t, batch, ForwardContext{}, false);
    const Index b = static_cast<Index>(batch.size());
    out.probs.middleRows(at, b) = r.fusion.y_fnl.value();
    out.info_probs.middleRows(at, b) = r.y_dir.value();
    out.labels.middleRows(at, b) = batch.labels;
    if (r.fusion.y_mu.valid()) out.mu_probs.middleRows(at, b) = r.fusion.y_mu.value();
    if (r.fusion.y_sigma.valid()) out.sigma_probs.middleRows(at, b) = r.fusion.y_sigma.value();
    out.sigma_norm.segment(at, b) = sigma_norms(r.dist, q).value().col(0);
    out.d_hat.segment(at, b) = r.fusion.d.value().col(0);
    for (Index i = 0; i < b; ++i) {
      out.d(at + i) = uncertainty_score(RowVector(r.y_dir.value().row(i)), RowVector(batch.labels.row(i)));
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
      out.ids.push_back(batch.ids[i]);
      out.noise.push_back(data.sample(batch.indices[i]).meta.noise);
    }
    const Matrix& v = r.vectors.value();
    for (std::size_t i = 0; i < r.identities.size(); ++i) {
      if (!r.identities[i].positive) continue;
      rows.push_back(v.row(static_cast<Index>(i)).transpose());
      out.vector_ids.push_back(r.identities[i]);
    }
    at += b;
  }
  out.vectors.resize(static_cast<Index>(rows.size()), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) out.vectors.row(static_cast<Index>(i)) = rows[i].transpose();
  return out;
}

/// Spearman correlation between |sigma_i| and the planted noise level, over
/// samples that carry one; empty when fewer than two do.
inline std::optional<double> sigma_noise_spearman(const InferenceResult& r) {
  std::vector<double> s, e;
  for (std::size_t i = 0; i < r.noise.size(); ++i) {
    if (!r.noise[i]) continue;
    s.push_back(r.sigma_norm(static_cast<Index>(i)));
    e.push_back(*r.noise[i]);
  }
  if (s.size() < 2) return std::nullopt;
  return spearman(s, e);
}

inline MetricsReport metrics_from_inference(const InferenceResult& r, int q, double threshold = 0.5) {
  MetricsReport m = compute_metrics(threshold_predictions(r.probs, threshold), r.labels);
  std::vector<int> clusters;
  for (const auto& id : r.vector_ids) clusters.push_back(id.cluster(q));
  if (r.vectors.rows() > 1) m.silhouette = silhouette(r.vectors, clusters);
  m.spearman_sigma_noise = sigma_noise_spearman(r);
  return m;
}

inline MetricsReport evaluate(const LdduModel& model, const Dataset& data, const std::string& split,
                              double threshold = 0.5) {
  return metrics_from_inference(run_inference(model, data, split), model.shape().q, threshold);
}

// --------------------------------------------------------------- checkpoints

inline constexpr const char* kCheckpointFormat = "lddu-checkpoint-1";

struct Checkpoint {
  TrainConfig config;
  ModelShape shape;
  std::vector<std::string> label_names;
  std::string data_root;
  int epoch = 0;
  double val_mif1 = 0.0;
  std::unique_ptr<LdduModel> model;
  CorrectnessTracker tracker;
};

inline nlohmann::json checkpoint_to_json(const LdduModel& model, const CorrectnessTracker& tracker,
                                         const std::vector<std::string>& label_names, const std::string& data_root,
                                         int epoch, double val_mif1) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["config"] = config_to_json(model.config());
  j["q"] = model.shape().q;
  j["dims"] = model.shape().dims;
  j["label_names"] = label_names;
  j["data"] = data_root;
  j["epoch"] = epoch;
  j["val_mif1"] = val_mif1;
  nlohmann::json params = nlohmann::json::object();
  const ParameterStore& store = model.parameters();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Parameter& p = store.at(i);
    std::vector<double> flat(static_cast<std::size_t>(p.value.size()));
    for (Index r = 0, k = 0; r < p.value.rows(); ++r)
      for (Index c = 0; c < p.value.cols(); ++c) flat[static_cast<std::size_t>(k++)] = p.value(r, c);
    params[p.name] = {{"rows", p.value.rows()}, {"cols", p.value.cols()}, {"data", std::move(flat)}};
  }
  j["params"] = std::move(params);
  j["tracker"] = {{"count", tracker.counts()}, {"sum", tracker.sums()}};
  return j;
}

inline void save_checkpoint(const std::filesystem::path& path, const LdduModel& model,
                            const CorrectnessTracker& tracker, const std::vector<std::string>& label_names,
                            const std::string& data_root, int epoch, double val_mif1) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw FormatError("cannot write checkpoint " + tmp.string());
    out << checkpoint_to_json(model, tracker, label_names, data_root, epoch, val_mif1).dump();
    if (!out) throw FormatError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Copies every named array of `params` into the model; names and shapes must match exactly.
inline void load_parameters(ParameterStore& store, const nlohmann::json& params) {
  if (!params.is_object()) throw FormatError("checkpoint: params must be an object");
  if (params.size() != store.size()) {
    throw FormatError("checkpoint: expected " + std::to_string(store.size()) + " parameter arrays, found " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& p = store.at(i);
    if (!params.contains(p.name)) throw FormatError("checkpoint: missing parameter '" + p.name + "'");
    const auto& e = params.at(p.name);
    const Index rows = e.at("rows").get<Index>(), cols = e.at("cols").get<Index>();
    if (rows != p.value.rows() || cols != p.value.cols()) {
      throw ShapeError("checkpoint: parameter '" + p.name + "' has shape [" + std::to_string(rows) + " x " +
                       std::to_string(cols) + "], model expects " + shape_str(p.value));
    }
    const auto flat = e.at("data").get<std::vector<double>>();
    if (static_cast<Index>(flat.size()) != rows * cols) throw FormatError("checkpoint: '" + p.name + "' data length");
    for (Index r = 0, k = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) p.value(r, c) = flat[static_cast<std::size_t>(k++)];
  }
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    if (j.value("format", "") != kCheckpointFormat) throw FormatError("not an lddu checkpoint: " + path.string());
    Checkpoint c;
    c.config = config_from_json(j.at("config"));
    c.shape.q = j.at("q").get<int>();
    c.shape.dims = j.at("dims").get<std::array<int, 3>>();
    c.label_names = j.at("label_names").get<std::vector<std::string>>();
    c.data_root = j.value("data", "");
    c.epoch = j.value("epoch", 0);
    c.val_mif1 = j.value("val_mif1", 0.0);
    c.model = std::make_unique<LdduModel>(c.config, c.shape, c.config.seed);
    load_parameters(c.model->parameters(), j.at("params"));
    c.tracker = CorrectnessTracker::restore(j.at("tracker").at("count").get<std::vector<long>>(),
                                            j.at("tracker").at("sum").get<std::vector<double>>());
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
}

// ------------------------------------------------------------------ training

struct EpochReport {
  int epoch = 0;
  double lr = 0.0;  // rate of the last step
  LossBreakdown mean_loss;
  std::optional<MetricsReport> val;
  double seconds = 0.0;
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: nothing written
  std::string data_root;          // recorded in checkpoints for later eval
  std::ostream* log = nullptr;
};

struct TrainResult {
  std::vector<EpochReport> epochs;
  int best_epoch = 0;
  double best_mif1 = -1.0;
  std::filesystem::path checkpoint;  // empty when out_dir was empty
  std::size_t queue_push_calls = 0;
  std::size_t steps = 0;
  std::unique_ptr<LdduModel> model;  // parameters of the best epoch
  CorrectnessTracker tracker;
};

namespace detail {

inline std::string describe_losses(const LossBreakdown& l) {
  std::ostringstream s;
  s << "cls=" << l.cls << " ocl=" << l.ocl << " scl=" << l.scl << " dir=" << l.dir << " total=" << l.total;
  return s.str();
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

inline TrainResult train(const TrainConfig& cfg, const Dataset& data, const TrainOptions& opt = {}) {
  cfg.validate();
  const auto& train_ids = data.split("train");
  if (train_ids.empty()) throw ValidationError("train split is empty");
  const bool has_val = data.has_split(cfg.eval_split) && !data.split(cfg.eval_split).empty();

  TrainResult res;
  const ModelShape shape{data.q(), data.manifest().dims};
  auto model = std::make_unique<LdduModel>(cfg, shape, cfg.seed);
  ParameterStore& store = model->parameters();
  ContrastQueue queue(static_cast<std::size_t>(cfg.scl.queue_size));
  CorrectnessTracker tracker(data.size());
  Adam adam(AdamConfig{0.9, 0.999, 1e-8, cfg.weight_decay});
  std::mt19937_64 dropout_rng(detail::mix_seed(cfg.seed, 1));

  const long per_epoch = static_cast<long>((train_ids.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                                           static_cast<std::size_t>(cfg.batch_size));
  const long total_steps = per_epoch * cfg.epochs;
  std::vector<Matrix> best;
  long step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochReport rep;
    rep.epoch = epoch;
    const auto batches = make_batches(data, train_ids, cfg.batch_size,
                                      detail::mix_seed(cfg.seed, 100 + static_cast<std::uint64_t>(epoch)), true,
                                      cfg.encoder.max_len);
    for (const Batch& batch : batches) {
      ad::Tape t;
      ForwardResult fwd = model->forward(t, batch, ForwardContext{true, &dropout_rng}, true);
      StepLosses loss = model->losses(fwd, batch, &queue, &tracker);
      const LossBreakdown& v = loss.values;
      if (!std::isfinite(v.cls) || !std::isfinite(v.ocl) || !std::isfinite(v.scl) || !std::isfinite(v.dir) ||
          !std::isfinite(v.total)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                           ": " + detail::describe_losses(v));
      }
      t.backward(loss.total);
      store.zero_grad();
      t.flush_param_grads();
      rep.lr = warmup_cosine_lr(cfg.lr, step, total_steps, cfg.warmup);
      adam.step(store, rep.lr);
      if (cfg.scl_active()) queue.push(LdduModel::queue_entries(fwd));
      tracker.update(batch.indices, fwd.y_dir.value(), batch.labels, cfg.threshold);
      const double w = static_cast<double>(batch.size());
      rep.mean_loss.cls += w * v.cls;
      rep.mean_loss.ocl += w * v.ocl;
      rep.mean_loss.scl += w * v.scl;
      rep.mean_loss.dir += w * v.dir;
      rep.mean_loss.total += w * v.total;
      ++step;
    }
    const double n = static_cast<double>(train_ids.size());
    rep.mean_loss.cls /= n;
    rep.mean_loss.ocl /= n;
    rep.mean_loss.scl /= n;
    rep.mean_loss.dir /= n;
    rep.mean_loss.total /= n;

    if (has_val) rep.val = evaluate(*model, data, cfg.eval_split, cfg.threshold);
    const double score = rep.val ? rep.val->mif1 : -static_cast<double>(rep.mean_loss.total);
    if (res.best_epoch == 0 || score > res.best_mif1) {
      res.best_epoch = epoch;
      res.best_mif1 = score;
      best.clear();
      for (std::size_t i = 0; i < store.size(); ++i) best.push_back(store.at(i).value);
      if (!opt.out_dir.empty()) {
        res.checkpoint = opt.out_dir / "best.ckpt.json";
        save_checkpoint(res.checkpoint, *model, tracker, data.manifest().label_names, opt.data_root, epoch, score);
      }
    }
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (opt.log) {
      *opt.log << "epoch " << epoch << "/" << cfg.epochs << "  " << detail::describe_losses(rep.mean_loss);
      if (rep.val) *opt.log << "  val miF1=" << rep.val->mif1 << " acc=" << rep.val->acc;
      *opt.log << "  (" << std::fixed << std::setprecision(1) << rep.seconds << "s)" << std::defaultfloat
               << std::setprecision(6) << "\n";
    }
    res.epochs.push_back(std::move(rep));
  }

  for (std::size_t i = 0; i < store.size(); ++i) store.at(i).value = best[i];
  res.queue_push_calls = queue.push_calls();
  res.steps = static_cast<std::size_t>(step);
  res.model = std::move(model);
  res.tracker = std::move(tracker);
  return res;
}

// ------------------------------------------------------------------- exports

/// Writes one CSV record per positive (sample, modality, label):
///   sample_id,modality,label,e0,...,e{k-1}
/// Returns the number of records.
inline std::size_t export_embeddings(const LdduModel& model, const Dataset& data, const std::string& split,
                                     const std::filesystem::path& out_path) {
  const InferenceResult r = run_inference(model, data, split);
  if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
  std::ofstream out(out_path);
  if (!out) throw FormatError("cannot write " + out_path.string());
  out << "sample_id,modality,label";
  for (Index k = 0; k < r.vectors.cols(); ++k) out << ",e" << k;
  out << "\n" << std::setprecision(17);
  const auto& names = data.manifest().label_names;
  for (std::size_t i = 0; i < r.vector_ids.size(); ++i) {
    const VectorIdentity& id = r.vector_ids[i];
    out << data.sample(id.sample).id << "," << modality_name(id.modality) << "," << names[static_cast<std::size_t>(id.label)];
    for (Index k = 0; k < r.vectors.cols(); ++k) out << "," << r.vectors(static_cast<Index>(i), k);
    out << "\n";
  }
  if (!out) throw FormatError("failed writing " + out_path.string());
  return r.vector_ids.size();
}

struct CalibRow {
  std::string id;
  double sigma_norm = 0.0;
  double d = 0.0;
  double d_hat = 0.0;
  double r = 0.0;        // training-time running correctness (prior when never trained on)
  double correct = 0.0;  // correctness of the Info Classifier on this pass
  std::optional<double> noise;
};

struct CalibReport {
  std::string split;
  std::vector<CalibRow> rows;
  double spearman_s_correct = 0.0;  // S = 1/|sigma| vs correctness
  double spearman_d_correct = 0.0;  // D = 1 - d vs correctness
  double spearman_s_r = 0.0;
  double spearman_d_r = 0.0;
  std::optional<double> spearman_sigma_noise;
};

inline CalibReport calib_report(const LdduModel& model, const CorrectnessTracker& tracker, const Dataset& data,
                                const std::string& split, double threshold = 0.5) {
  const InferenceResult r = run_inference(model, data, split);
  CalibReport rep;
  rep.split = split;
  std::vector<double> s, dd, corr, rr;
  for (std::size_t i = 0; i < r.ids.size(); ++i) {
    const Index k = static_cast<Index>(i);
    CalibRow row;
    row.id = r.ids[i];
    row.sigma_norm = r.sigma_norm(k);
    row.d = r.d(k);
    row.d_hat = r.d_hat(k);
    const std::size_t gi = data.index_of(row.id);
    row.r = gi < tracker.size() ? tracker.r(gi) : kCorrectnessPrior;
    double hits = 0.0;
    for (Index j = 0; j < r.labels.cols(); ++j) hits += ((r.info_probs(k, j) >= threshold) == (r.labels(k, j) == 1.0)) ? 1.0 : 0.0;
    row.correct = hits / static_cast<double>(r.labels.cols());
    row.noise = r.noise[i];
    s.push_back(1.0 / row.sigma_norm);
    dd.push_back(1.0 - row.d);
    corr.push_back(row.correct);
    rr.push_back(row.r);
    rep.rows.push_back(std::move(row));
  }
  rep.spearman_s_correct = spearman(s, corr);
  rep.spearman_d_correct = spearman(dd, corr);
  rep.spearman_s_r = spearman(s, rr);
  rep.spearman_d_r = spearman(dd, rr);
  rep.spearman_sigma_noise = sigma_noise_spearman(r);
  return rep;
}

inline void write_calib_report(std::ostream& out, const CalibReport& rep) {
  out << "split " << rep.split << " (" << rep.rows.size() << " samples)\n";
  out << std::left << std::setw(14) << "sample" << std::right << std::setw(12) << "|sigma|" << std::setw(10) << "d"
      << std::setw(10) << "d_hat" << std::setw(10) << "r" << std::setw(10) << "correct" << std::setw(10) << "noise"
      << "\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& row : rep.rows) {
    out << std::left << std::setw(14) << row.id << std::right << std::setw(12) << row.sigma_norm << std::setw(10)
        << row.d << std::setw(10) << row.d_hat << std::setw(10) << row.r << std::setw(10) << row.correct;
    if (row.noise) {
      out << std::setw(10) << *row.noise;
    } else {
      out << std::setw(10) << "-";
    }
    out << "\n";
  }
  out << "spearman(1/|sigma|, correct) = " << rep.spearman_s_correct << "\n";
  out << "spearman(1 - d, correct)     = " << rep.spearman_d_correct << "\n";
  out << "spearman(1/|sigma|, r)       = " << rep.spearman_s_r << "\n";
  out << "spearman(1 - d, r)           = " << rep.spearman_d_r << "\n";
  if (rep.spearman_sigma_noise) out << "spearman(|sigma|, noise)     = " << *rep.spearman_sigma_noise << "\n";
  out << std::defaultfloat << std::setprecision(6);
}

// ------------------------------------------------------------------- reports

inline nlohmann::json metrics_to_json(const MetricsReport& m) {
  nlohmann::json j;
  j["samples"] = m.samples;
  j["acc"] = m.acc;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["mif1"] = m.mif1;
  j["counts"] = {{"tp", m.counts.tp}, {"fp", m.counts.fp}, {"fn", m.counts.fn}, {"tn", m.counts.tn}};
  j["label_precision"] = m.label_precision;
  j["label_recall"] = m.label_recall;
  nlohmann::json lc = nlohmann::json::array();
  for (const auto& c : m.label_counts) lc.push_back({{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}});
  j["label_counts"] = std::move(lc);
  j["cooccurrence"] = io::matrix_to_json(m.cooccurrence);
  j["silhouette"] = m.silhouette ? nlohmann::json(*m.silhouette) : nlohmann::json(nullptr);
  j["spearman_sigma_noise"] = m.spearman_sigma_noise ? nlohmann::json(*m.spearman_sigma_noise) : nlohmann::json(nullptr);
  return j;
}

inline void write_metrics_table(std::ostream& out, const std::string& title, const MetricsReport& m,
                                const std::vector<std::string>& label_names) {
  out << title << " (" << m.samples << " samples, threshold 0.5, Acc = Jaccard)\n";
  out << std::fixed << std::setprecision(4);
  out << "  Acc " << m.acc << "   P " << m.precision << "   R " << m.recall << "   miF1 " << m.mif1 << "\n";
  out << "  TP " << m.counts.tp << "  FP " << m.counts.fp << "  FN " << m.counts.fn << "  TN " << m.counts.tn << "\n";
  for (std::size_t j = 0; j < m.label_counts.size(); ++j) {
    const std::string name = j < label_names.size() ? label_names[j] : std::to_string(j);
    out << "  " << std::left << std::setw(16) << name << std::right << " P " << m.label_precision[j] << "  R "
        << m.label_recall[j] << "\n";
  }
  if (m.silhouette) out << "  silhouette " << *m.silhouette << "\n";
  if (m.spearman_sigma_noise) out << "  spearman(|sigma|, noise) " << *m.spearman_sigma_noise << "\n";
  out << std::defaultfloat << std::setprecision(6);
}

/// report.json (machine-readable) and report.txt (table) under `dir`.
inline void write_train_report(const std::filesystem::path& dir, const TrainConfig& cfg, const TrainResult& res,
                               const std::vector<std::string>& label_names) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["config"] = config_to_json(cfg);
  j["best_epoch"] = res.best_epoch;
  j["best_val_mif1"] = res.best_mif1;
  j["steps"] = res.steps;
  j["queue_push_calls"] = res.queue_push_calls;
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : res.epochs) {
    nlohmann::json ej;
    ej["epoch"] = e.epoch;
    ej["lr"] = e.lr;
    ej["seconds"] = e.seconds;
    ej["loss"] = {{"cls", e.mean_loss.cls}, {"ocl", e.mean_loss.ocl}, {"scl", e.mean_loss.scl},
                  {"dir", e.mean_loss.dir}, {"total", e.mean_loss.total}};
    ej["val"] = e.val ? metrics_to_json(*e.val) : nlohmann::json(nullptr);
    epochs.push_back(std::move(ej));
  }
  j["epochs"] = std::move(epochs);
  std::ofstream(dir / "report.json") << j.dump(2) << "\n";

  std::ofstream txt(dir / "report.txt");
  txt << std::left << std::setw(7) << "epoch" << std::right << std::setw(10) << "total" << std::setw(10) << "cls"
      << std::setw(10) << "scl" << std::setw(10) << "ocl" << std::setw(10) << "dir" << std::setw(10) << "val Acc"
      << std::setw(10) << "val P" << std::setw(10) << "val R" << std::setw(10) << "val miF1" << "\n";
  txt << std::fixed << std::setprecision(4);
  for (const auto& e : res.epochs) {
    txt << std::left << std::setw(7) << e.epoch << std::right << std::setw(10) << e.mean_loss.total << std::setw(10)
        << e.mean_loss.cls << std::setw(10) << e.mean_loss.scl << std::setw(10) << e.mean_loss.ocl << std::setw(10)
        << e.mean_loss.dir;
    if (e.val) {
      txt << std::setw(10) << e.val->acc << std::setw(10) << e.val->precision << std::setw(10) << e.val->recall
          << std::setw(10) << e.val->mif1;
    }
    txt << "\n";
  }
  txt << "best epoch " << res.best_epoch << "\n";
  if (!res.epochs.empty() && res.epochs[static_cast<std::size_t>(res.best_epoch - 1)].val) {
    txt << "\n";
    write_metrics_table(txt, "validation at best epoch", *res.epochs[static_cast<std::size_t>(res.best_epoch - 1)].val,
                        label_names);
  }
}

}  // namespace lddu
