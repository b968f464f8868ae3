// lddu: command-line driver for data generation, training and evaluation.

#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "lddu/lddu.hpp"

namespace fs = std::filesystem;

namespace {

lddu::Dataset open_data(const std::string& override_root, const lddu::Checkpoint& ckpt) {
  const std::string root = override_root.empty() ? ckpt.data_root : override_root;
  if (root.empty()) throw lddu::ConfigError("checkpoint records no dataset path; pass --data");
  return lddu::load_dataset(root);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal multi-label emotion recognition with latent emotional distributions"};
  app.require_subcommand(1);

  lddu::SynthConfig synth;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "Write a planted-structure synthetic dataset");
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--n", synth.n, "Number of samples");
  gen->add_option("--q", synth.q, "Number of labels");
  gen->add_option("--seed", synth.seed, "Generator seed");
  gen->add_option("--noise-low", synth.noise_low, "Lower bound of per-sample noise");
  gen->add_option("--noise-high", synth.noise_high, "Upper bound of per-sample noise");
  gen->add_option("--dims", synth.dims, "Feature widths for visual, audio, text")->expected(3);
  gen->add_option("--seq-min", synth.seq_len_min, "Minimum sequence length per modality")->expected(3);
  gen->add_option("--seq-max", synth.seq_len_max, "Maximum sequence length per modality")->expected(3);
  gen->add_option("--marginals", synth.label_marginals, "Per-label positive rates");
  gen->add_option("--name", synth.name, "Dataset name");

  std::string data_dir, config_file, out_dir;
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--data", data_dir, "Dataset directory")->required();
  tr->add_option("--config", config_file, "Flat JSON config file");
  tr->add_option("--out", out_dir, "Output directory for checkpoint and reports")->required();

  std::string ckpt_file, split = "test", emb_out, data_override;
  double threshold = 0.5;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  ev->add_option("--ckpt", ckpt_file, "Checkpoint file")->required();
  ev->add_option("--split", split, "Split name");
  ev->add_option("--threshold", threshold, "Label decision threshold");
  ev->add_option("--data", data_override, "Dataset directory (defaults to the one recorded at training)");
  std::string json_out;
  ev->add_option("--json", json_out, "Also write the report as JSON to this file");

  auto* ex = app.add_subcommand("export-embeddings", "Write distribution vectors of positive labels as CSV");
  ex->add_option("--ckpt", ckpt_file, "Checkpoint file")->required();
  ex->add_option("--split", split, "Split name");
  ex->add_option("--out", emb_out, "Output CSV file")->required();
  ex->add_option("--data", data_override, "Dataset directory (defaults to the one recorded at training)");

  auto* cr = app.add_subcommand("calib-report", "Per-sample |sigma|, d and r with rank correlations");
  cr->add_option("--ckpt", ckpt_file, "Checkpoint file")->required();
  cr->add_option("--split", split, "Split name");
  cr->add_option("--data", data_override, "Dataset directory (defaults to the one recorded at training)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      lddu::generate_synthetic_to_disk(synth, gen_out);
      std::cout << "wrote " << synth.n << " samples to " << gen_out << "\n";
    } else if (*tr) {
      lddu::TrainConfig cfg;
      if (!config_file.empty()) {
        cfg = lddu::load_config(config_file);
      } else if (const char* env = std::getenv("LDDU_SEED")) {
        cfg.seed = std::stoull(env);
      }
      const lddu::Dataset data = lddu::load_dataset(data_dir);
      lddu::TrainOptions opt;
      opt.out_dir = out_dir;
      opt.data_root = fs::absolute(data_dir).string();
      opt.log = &std::cout;
      const lddu::TrainResult res = lddu::train(cfg, data, opt);
      lddu::write_train_report(out_dir, cfg, res, data.manifest().label_names);
      std::cout << "best epoch " << res.best_epoch << ", checkpoint " << res.checkpoint.string() << "\n";
    } else if (*ev) {
      const lddu::Checkpoint ckpt = lddu::load_checkpoint(ckpt_file);
      const lddu::Dataset data = open_data(data_override, ckpt);
      const lddu::MetricsReport m = lddu::evaluate(*ckpt.model, data, split, threshold);
      lddu::write_metrics_table(std::cout, "split " + split, m, ckpt.label_names);
      if (!json_out.empty()) std::ofstream(json_out) << lddu::metrics_to_json(m).dump(2) << "\n";
    } else if (*ex) {
      const lddu::Checkpoint ckpt = lddu::load_checkpoint(ckpt_file);
      const lddu::Dataset data = open_data(data_override, ckpt);
      const std::size_t n = lddu::export_embeddings(*ckpt.model, data, split, emb_out);
      std::cout << "wrote " << n << " records to " << emb_out << "\n";
    } else if (*cr) {
      const lddu::Checkpoint ckpt = lddu::load_checkpoint(ckpt_file);
      const lddu::Dataset data = open_data(data_override, ckpt);
      lddu::write_calib_report(std::cout, lddu::calib_report(*ckpt.model, ckpt.tracker, data, split));
    }
  } catch (const lddu::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
