#pragma once

// Dataset files, validation, batching and the planted-structure generator.
//
// On-disk layout of a dataset root:
//
//   manifest.json   {"name", "q", "label_names", "dims": {"visual","audio","text"},
//                    "aligned", "splits": {"train": [ids...], "val": [...], ...}}
//   <split>.jsonl   one JSON object per line:
//                   {"id", "labels": [0/1 x q], "visual": [[...] x s_v],
//                    "audio": [[...] x s_a], "text": [[...] x s_t],
//                    "meta": {"noise": eps, "intensity": [x q]}}   (meta optional)
//
// Numbers are written in shortest round-trip decimal form, so write -> load is
// exact.

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "lddu/tensor.hpp"

namespace lddu {

enum class Modality : int { Visual = 0, Audio = 1, Text = 2 };
inline constexpr int kNumModalities = 3;
inline constexpr std::array<Modality, 3> kModalities{Modality::Visual, Modality::Audio, Modality::Text};

inline const char* modality_name(Modality m) {
  switch (m) {
    case Modality::Visual:
      return "visual";
    case Modality::Audio:
      return "audio";
    case Modality::Text:
      return "text";
  }
  return "?";
}

inline const char* modality_short(Modality m) {
  static constexpr const char* names[] = {"v", "a", "t"};
  return names[static_cast<int>(m)];
}

struct SampleMeta {
  std::optional<double> noise;   // planted per-sample noise level
  std::vector<double> intensity;  // planted per-label intensity (0 where inactive)
};

struct MultimodalSample {
  std::string id;
  std::array<Matrix, 3> features;  // [s_m x d_m] per modality
  std::vector<int> labels;
  SampleMeta meta;

  const Matrix& modality(Modality m) const { return features[static_cast<int>(m)]; }
};

struct DatasetManifest {
  std::string name;
  int q = 0;
  std::vector<std::string> label_names;
  std::array<int, 3> dims{0, 0, 0};
  std::map<std::string, std::vector<std::string>> splits;
  bool aligned = false;
};

inline void validate_sample(const MultimodalSample& s, int q, const std::array<int, 3>& dims) {
  const std::string where = "sample '" + s.id + "'";
  if (static_cast<int>(s.labels.size()) != q) {
    throw ValidationError(where + ": expected " + std::to_string(q) + " labels, got " +
                          std::to_string(s.labels.size()));
  }
  for (int y : s.labels)
    if (y != 0 && y != 1) throw ValidationError(where + ": labels must be 0 or 1");
  for (Modality m : kModalities) {
    const Matrix& x = s.modality(m);
    if (x.rows() < 1) throw ValidationError(where + ": empty " + modality_name(m) + " sequence");
    if (x.cols() != dims[static_cast<int>(m)]) {
      throw ValidationError(where + ": " + modality_name(m) + " has " + std::to_string(x.cols()) +
                            " columns, manifest declares " + std::to_string(dims[static_cast<int>(m)]));
    }
    if (!x.allFinite()) throw ValidationError(where + ": non-finite " + modality_name(m) + " feature");
  }
}

namespace io {

using nlohmann::json;

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw FormatError(what + ": expected nested array");
  const Index rows = static_cast<Index>(j.size());
  Index cols = rows > 0 && j[0].is_array() ? static_cast<Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const json& r = j[static_cast<std::size_t>(i)];
    if (!r.is_array()) throw FormatError(what + ": row " + std::to_string(i) + " is not an array");
    if (static_cast<Index>(r.size()) != cols) {
      throw ValidationError(what + ": ragged rows (" + std::to_string(r.size()) + " vs " + std::to_string(cols) + ")");
    }
    for (Index c = 0; c < cols; ++c) {
      const json& v = r[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw FormatError(what + ": non-numeric entry");
      m(i, c) = v.get<double>();
    }
  }
  return m;
}

inline json sample_to_json(const MultimodalSample& s) {
  json j;
  j["id"] = s.id;
  j["labels"] = s.labels;
  for (Modality m : kModalities) j[modality_name(m)] = matrix_to_json(s.modality(m));
  if (s.meta.noise || !s.meta.intensity.empty()) {
    json meta = json::object();
    if (s.meta.noise) meta["noise"] = *s.meta.noise;
    if (!s.meta.intensity.empty()) meta["intensity"] = s.meta.intensity;
    j["meta"] = std::move(meta);
  }
  return j;
}

inline MultimodalSample sample_from_json(const json& j) {
  MultimodalSample s;
  if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) throw FormatError("record without string id");
  s.id = j["id"].get<std::string>();
  const std::string where = "sample '" + s.id + "'";
  if (!j.contains("labels") || !j["labels"].is_array()) throw FormatError(where + ": missing labels");
  for (const json& v : j["labels"]) {
    if (!v.is_number()) throw FormatError(where + ": non-numeric label");
    const double y = v.get<double>();
    if (y != 0.0 && y != 1.0) throw ValidationError(where + ": labels must be 0 or 1");
    s.labels.push_back(static_cast<int>(y));
  }
  for (Modality m : kModalities) {
    if (!j.contains(modality_name(m))) throw FormatError(where + ": missing " + modality_name(m));
    s.features[static_cast<int>(m)] = matrix_from_json(j[modality_name(m)], where + " " + modality_name(m));
  }
  if (j.contains("meta") && j["meta"].is_object()) {
    const json& meta = j["meta"];
    if (meta.contains("noise")) s.meta.noise = meta["noise"].get<double>();
    if (meta.contains("intensity")) s.meta.intensity = meta["intensity"].get<std::vector<double>>();
  }
  return s;
}

inline json manifest_to_json(const DatasetManifest& m) {
  json j;
  j["name"] = m.name;
  j["q"] = m.q;
  j["label_names"] = m.label_names;
  j["dims"] = {{"visual", m.dims[0]}, {"audio", m.dims[1]}, {"text", m.dims[2]}};
  j["aligned"] = m.aligned;
  json splits = json::object();
  for (const auto& [name, ids] : m.splits) splits[name] = ids;
  j["splits"] = std::move(splits);
  return j;
}

inline DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  try {
    m.name = j.at("name").get<std::string>();
    m.q = j.at("q").get<int>();
    m.label_names = j.at("label_names").get<std::vector<std::string>>();
    const json& d = j.at("dims");
    m.dims = {d.at("visual").get<int>(), d.at("audio").get<int>(), d.at("text").get<int>()};
    m.aligned = j.value("aligned", false);
    for (const auto& [name, ids] : j.at("splits").items()) m.splits[name] = ids.get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt manifest: ") + e.what());
  }
  if (m.q <= 0) throw ValidationError("manifest: q must be positive");
  if (static_cast<int>(m.label_names.size()) != m.q) {
    throw ValidationError("manifest: label_names has " + std::to_string(m.label_names.size()) + " entries, q = " +
                          std::to_string(m.q));
  }
  for (int d : m.dims)
    if (d <= 0) throw ValidationError("manifest: feature dimensions must be positive");
  return m;
}

}  // namespace io

/// Manifest plus all samples, addressable by id or by global index. Global
/// indices follow manifest split order (alphabetical split name, then file order).
class Dataset {
 public:
  Dataset() = default;
  Dataset(DatasetManifest manifest, std::vector<MultimodalSample> samples) : manifest_(std::move(manifest)) {
    for (auto& s : samples) {
      validate_sample(s, manifest_.q, manifest_.dims);
      if (by_id_.count(s.id)) throw ValidationError("duplicate sample id '" + s.id + "'");
      by_id_[s.id] = samples_.size();
      samples_.push_back(std::move(s));
    }
    std::set<std::string> seen;
    for (const auto& [split, ids] : manifest_.splits) {
      for (const auto& id : ids) {
        if (!by_id_.count(id)) throw ValidationError("split '" + split + "' references unknown id '" + id + "'");
        if (!seen.insert(id).second) throw ValidationError("id '" + id + "' appears in more than one split");
      }
    }
  }

  const DatasetManifest& manifest() const { return manifest_; }
  int q() const { return manifest_.q; }
  std::size_t size() const { return samples_.size(); }

  const MultimodalSample& sample(const std::string& id) const { return samples_[index_of(id)]; }
  const MultimodalSample& sample(std::size_t index) const {
    if (index >= samples_.size()) throw LookupError("sample index out of range: " + std::to_string(index));
    return samples_[index];
  }
  std::size_t index_of(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw LookupError("unknown sample id '" + id + "'");
    return it->second;
  }

  const std::vector<std::string>& split(const std::string& name) const {
    auto it = manifest_.splits.find(name);
    if (it == manifest_.splits.end()) throw LookupError("unknown split '" + name + "'");
    return it->second;
  }
  bool has_split(const std::string& name) const { return manifest_.splits.count(name) != 0; }

 private:
  DatasetManifest manifest_;
  std::vector<MultimodalSample> samples_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

inline void write_dataset(const std::filesystem::path& root, const DatasetManifest& manifest,
                          const std::vector<MultimodalSample>& samples) {
  std::filesystem::create_directories(root);
  std::unordered_map<std::string, const MultimodalSample*> by_id;
  for (const auto& s : samples) by_id[s.id] = &s;
  {
    std::ofstream out(root / "manifest.json");
    if (!out) throw FormatError("cannot write " + (root / "manifest.json").string());
    out << io::manifest_to_json(manifest).dump(2) << "\n";
  }
  for (const auto& [split, ids] : manifest.splits) {
    std::ofstream out(root / (split + ".jsonl"));
    if (!out) throw FormatError("cannot write split file for " + split);
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw LookupError("split '" + split + "' references unknown id '" + id + "'");
      out << io::sample_to_json(*it->second).dump() << "\n";
    }
  }
}

inline Dataset load_dataset(const std::filesystem::path& root) {
  const auto manifest_path = root / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("missing manifest: " + manifest_path.string());
  io::json mj;
  try {
    in >> mj;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt manifest " + manifest_path.string() + ": " + e.what());
  }
  DatasetManifest manifest = io::manifest_from_json(mj);

  std::vector<MultimodalSample> samples;
  for (const auto& [split, ids] : manifest.splits) {
    const auto path = root / (split + ".jsonl");
    std::ifstream sf(path);
    if (!sf) {
      if (ids.empty()) continue;
      throw FormatError("missing split file: " + path.string());
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(sf, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      io::json rec;
      try {
        rec = io::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
      samples.push_back(io::sample_from_json(rec));
    }
  }
  return Dataset(std::move(manifest), std::move(samples));
}

/// Padded features of one modality across a batch.
struct ModalityBlock {
  std::vector<Matrix> frames;           // per sample [max_len x d], zero padded
  std::vector<std::vector<bool>> mask;  // per sample, true at valid positions
  std::vector<int> lengths;
  int max_len = 0;
};

struct Batch {
  std::vector<std::string> ids;
  std::vector<std::size_t> indices;  // global dataset indices
  std::array<ModalityBlock, 3> blocks;
  Matrix labels;  // [s_B x q]

  std::size_t size() const { return ids.size(); }
  const ModalityBlock& block(Modality m) const { return blocks[static_cast<int>(m)]; }
};

/// Builds one padded batch. Sequences longer than max_seq_len keep their first
/// max_seq_len frames; max_seq_len <= 0 disables truncation.
inline Batch make_batch(const Dataset& data, const std::vector<std::string>& ids, int max_seq_len = 0) {
  if (ids.empty()) throw ValidationError("make_batch: empty batch");
  Batch b;
  b.labels = Matrix::Zero(static_cast<Index>(ids.size()), data.q());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::size_t gi = data.index_of(ids[i]);
    const MultimodalSample& s = data.sample(gi);
    b.ids.push_back(s.id);
    b.indices.push_back(gi);
    for (int j = 0; j < data.q(); ++j) b.labels(static_cast<Index>(i), j) = s.labels[static_cast<std::size_t>(j)];
  }
  for (Modality m : kModalities) {
    ModalityBlock& blk = b.blocks[static_cast<int>(m)];
    for (const auto& id : b.ids) {
      int len = static_cast<int>(data.sample(id).modality(m).rows());
      if (max_seq_len > 0) len = std::min(len, max_seq_len);
      blk.lengths.push_back(len);
      blk.max_len = std::max(blk.max_len, len);
    }
    const Index d = data.manifest().dims[static_cast<int>(m)];
    for (std::size_t i = 0; i < b.ids.size(); ++i) {
      const Matrix& x = data.sample(b.ids[i]).modality(m);
      const int len = blk.lengths[i];
      Matrix padded = Matrix::Zero(blk.max_len, d);
      padded.topRows(len) = x.topRows(len);
      blk.frames.push_back(std::move(padded));
      std::vector<bool> mask(static_cast<std::size_t>(blk.max_len), false);
      std::fill(mask.begin(), mask.begin() + len, true);
      blk.mask.push_back(std::move(mask));
    }
  }
  return b;
}

/// Splits `split` into batches. Order depends only on (seed, shuffle); the
/// last batch may be smaller.
inline std::vector<Batch> make_batches(const Dataset& data, const std::vector<std::string>& split, int batch_size,
                                       std::uint64_t seed, bool shuffle, int max_seq_len = 0) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::vector<std::string> order = split;
  for (const auto& id : order) (void)data.index_of(id);
  if (shuffle) {
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    out.push_back(make_batch(data, std::vector<std::string>(order.begin() + static_cast<long>(start),
                                                            order.begin() + static_cast<long>(end)),
                             max_seq_len));
  }
  return out;
}

struct SynthConfig {
  int n = 2000;
  int q = 4;
  std::array<int, 3> dims{8, 8, 8};
  std::array<int, 3> seq_len_min{6, 8, 4};
  std::array<int, 3> seq_len_max{12, 16, 10};
  double noise_low = 0.1;
  double noise_high = 1.0;
  std::vector<double> label_marginals;  // empty: 0.35 for every label
  double intensity_low = 0.5;
  double intensity_high = 1.5;
  double train_fraction = 0.7;
  double val_fraction = 0.15;
  std::uint64_t seed = 0;
  std::string name = "synthetic";
};

struct SyntheticData {
  DatasetManifest manifest;
  std::vector<MultimodalSample> samples;
  std::array<std::vector<Vector>, 3> directions;  // [modality][label] unit vectors
};

/// Planted generator. For every (modality, label) a unit direction is drawn once;
/// each frame of a sample is the intensity-weighted sum of its active labels'
/// directions plus isotropic Gaussian noise scaled by the sample's noise level.
inline SyntheticData generate_synthetic(const SynthConfig& cfg) {
  if (cfg.n <= 0) throw ConfigError("synthetic: n must be positive");
  if (cfg.q <= 0) throw ConfigError("synthetic: q must be positive");
  if (cfg.noise_low < 0.0 || cfg.noise_low > cfg.noise_high) throw ConfigError("synthetic: need 0 <= noise_low <= noise_high");
  if (cfg.intensity_low > cfg.intensity_high) throw ConfigError("synthetic: intensity_low > intensity_high");
  std::vector<double> marg = cfg.label_marginals;
  if (marg.empty()) marg.assign(static_cast<std::size_t>(cfg.q), 0.35);
  if (static_cast<int>(marg.size()) != cfg.q) throw ConfigError("synthetic: label_marginals must have q entries");
  for (double p : marg)
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("synthetic: label marginals must lie in (0, 1)");
  for (int m = 0; m < 3; ++m) {
    if (cfg.dims[m] <= 0) throw ConfigError("synthetic: dims must be positive");
    if (cfg.seq_len_min[m] < 1 || cfg.seq_len_min[m] > cfg.seq_len_max[m]) {
      throw ConfigError("synthetic: need 1 <= seq_len_min <= seq_len_max");
    }
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SyntheticData out;
  for (int m = 0; m < 3; ++m) {
    for (int j = 0; j < cfg.q; ++j) {
      Vector g(cfg.dims[m]);
      for (Index k = 0; k < g.size(); ++k) g(k) = gauss(rng);
      out.directions[m].push_back(g / g.norm());
    }
  }

  const int width = static_cast<int>(std::to_string(cfg.n - 1).size());
  for (int i = 0; i < cfg.n; ++i) {
    MultimodalSample s;
    std::ostringstream id;
    id << "s" << std::setw(width) << std::setfill('0') << i;
    s.id = id.str();
    s.labels.resize(static_cast<std::size_t>(cfg.q));
    s.meta.intensity.assign(static_cast<std::size_t>(cfg.q), 0.0);
    for (int j = 0; j < cfg.q; ++j) s.labels[static_cast<std::size_t>(j)] = unit(rng) < marg[static_cast<std::size_t>(j)] ? 1 : 0;
    const double eps = cfg.noise_low + (cfg.noise_high - cfg.noise_low) * unit(rng);
    s.meta.noise = eps;
    for (int j = 0; j < cfg.q; ++j) {
      const double a = cfg.intensity_low + (cfg.intensity_high - cfg.intensity_low) * unit(rng);
      if (s.labels[static_cast<std::size_t>(j)] == 1) s.meta.intensity[static_cast<std::size_t>(j)] = a;
    }
    for (int m = 0; m < 3; ++m) {
      const int span = cfg.seq_len_max[m] - cfg.seq_len_min[m] + 1;
      const int len = cfg.seq_len_min[m] + static_cast<int>(unit(rng) * span) % span;
      Vector base = Vector::Zero(cfg.dims[m]);
      for (int j = 0; j < cfg.q; ++j) base += s.meta.intensity[static_cast<std::size_t>(j)] * out.directions[m][static_cast<std::size_t>(j)];
      Matrix x(len, cfg.dims[m]);
      for (int r = 0; r < len; ++r) {
        for (int c = 0; c < cfg.dims[m]; ++c) {
          const double z = gauss(rng);
          x(r, c) = base(c) + (eps > 0.0 ? eps * z : 0.0);
        }
      }
      s.features[static_cast<std::size_t>(m)] = std::move(x);
    }
    out.samples.push_back(std::move(s));
  }

  DatasetManifest& man = out.manifest;
  man.name = cfg.name;
  man.q = cfg.q;
  for (int j = 0; j < cfg.q; ++j) man.label_names.push_back("emotion_" + std::to_string(j));
  man.dims = cfg.dims;
  man.aligned = cfg.seq_len_min == cfg.seq_len_max && cfg.seq_len_min[0] == cfg.seq_len_min[1] &&
                cfg.seq_len_min[1] == cfg.seq_len_min[2];
  const int n_train = static_cast<int>(std::lround(cfg.train_fraction * cfg.n));
  const int n_val = static_cast<int>(std::lround(cfg.val_fraction * cfg.n));
  auto& train = man.splits["train"];
  auto& val = man.splits["val"];
  auto& test = man.splits["test"];
  for (int i = 0; i < cfg.n; ++i) {
    const std::string& id = out.samples[static_cast<std::size_t>(i)].id;
    if (i < n_train) {
      train.push_back(id);
    } else if (i < n_train + n_val) {
      val.push_back(id);
    } else {
      test.push_back(id);
    }
  }
  return out;
}

inline void generate_synthetic_to_disk(const SynthConfig& cfg, const std::filesystem::path& root) {
  SyntheticData data = generate_synthetic(cfg);
  write_dataset(root, data.manifest, data.samples);
}

}  // namespace lddu
