#pragma once

// Run configuration. The file form is a flat JSON object whose keys are the
// dotted names below; unknown keys are rejected.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "lddu/calibration.hpp"
#include "lddu/encoder.hpp"

namespace lddu {

struct TrainConfig {
  EncoderConfig encoder;
  EmotionSpaceConfig emotion_space;
  LatentConfig scl;
  FusionConfig fusion;
  OclConfig ocl;

  double lambda = 0.1;  // L_ocl weight
  double beta = 0.8;    // L_scl weight
  double gamma = 0.1;   // L_dir weight
  double lr = 2e-5;
  int epochs = 30;
  int batch_size = 128;
  double warmup = 0.1;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  std::string eval_split = "val";

  void validate() const {
    if (lambda < 0.0 || beta < 0.0 || gamma < 0.0) throw ConfigError("loss weights lambda, beta, gamma must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (warmup < 0.0 || warmup > 1.0) throw ConfigError("train.warmup must lie in [0, 1]");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("train.threshold must lie in (0, 1)");
    encoder.validate();
    emotion_space.validate();
    scl.validate();
    fusion.validate();
    ocl.validate();
  }

  /// Contrastive loss is active (and the queue is fed) only with beta > 0.
  bool scl_active() const { return scl.scl_enabled && beta > 0.0; }
  bool ocl_active() const { return ocl.enabled && lambda > 0.0; }
};

namespace config_detail {

using nlohmann::json;

template <typename F>
void visit(TrainConfig& c, F&& f) {
  f("encoder.layers.v", c.encoder.layers[0]);
  f("encoder.layers.a", c.encoder.layers[1]);
  f("encoder.layers.t", c.encoder.layers[2]);
  f("encoder.width", c.encoder.width);
  f("encoder.heads", c.encoder.heads);
  f("encoder.ffn", c.encoder.ffn);
  f("encoder.dropout", c.encoder.dropout);
  f("encoder.max_len", c.encoder.max_len);
  f("emotion_space.d_h", c.emotion_space.d_h);
  f("emotion_space.proj_dim", c.emotion_space.proj_dim);
  f("emotion_space.label_dim", c.emotion_space.label_dim);
  f("emotion_space.info_hidden", c.emotion_space.info_hidden);
  f("esm.enabled", c.emotion_space.esm_enabled);
  f("scl.tau", c.scl.tau);
  f("scl.queue_size", c.scl.queue_size);
  f("scl.enabled", c.scl.scl_enabled);
  f("scl.use_mu_only", c.scl.use_mu_only);
  f("scl.use_sigma_only", c.scl.use_sigma_only);
  f("scl.cross_modal_positives", c.scl.cross_modal_positives);
  f("fusion.swap_gate", c.fusion.swap_gate);
  f("fusion.cls_hidden", c.fusion.cls_hidden);
  f("cls.drop_mu", c.fusion.drop_mu);
  f("cls.drop_sigma", c.fusion.drop_sigma);
  f("ocl.enabled", c.ocl.enabled);
  f("ocl.only_sr", c.ocl.only_sr);
  f("ocl.only_dr", c.ocl.only_dr);
  f("ocl.with_ds", c.ocl.with_ds);
  f("ocl.temperature", c.ocl.temperature);
  f("train.lambda", c.lambda);
  f("train.beta", c.beta);
  f("train.gamma", c.gamma);
  f("train.lr", c.lr);
  f("train.epochs", c.epochs);
  f("train.batch_size", c.batch_size);
  f("train.warmup", c.warmup);
  f("train.weight_decay", c.weight_decay);
  f("train.seed", c.seed);
  f("train.threshold", c.threshold);
  f("train.eval_split", c.eval_split);
}

}  // namespace config_detail

inline nlohmann::json config_to_json(const TrainConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  TrainConfig copy = cfg;
  config_detail::visit(copy, [&](const char* key, auto& field) { j[key] = field; });
  return j;
}

/// Applies the keys present in `j` on top of `base`.
inline TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  if (!j.is_object()) throw FormatError("config must be a flat JSON object");
  std::size_t matched = 0;
  config_detail::visit(base, [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    ++matched;
    try {
      field = j.at(key).get<std::decay_t<decltype(field)>>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  });
  if (matched != j.size()) {
    TrainConfig probe;
    for (const auto& [key, _] : j.items()) {
      bool known = false;
      config_detail::visit(probe, [&](const char* k, auto&) { known = known || key == k; });
      if (!known) throw ConfigError("unknown config key '" + key + "'");
    }
  }
  base.validate();
  return base;
}

inline TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt config " + path.string() + ": " + e.what());
  }
  TrainConfig cfg = config_from_json(j);
  if (const char* env = std::getenv("LDDU_SEED")) {
    try {
      cfg.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("LDDU_SEED is not an unsigned integer: ") + env);
    }
  }
  return cfg;
}

}  // namespace lddu
