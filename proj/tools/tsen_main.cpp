#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tsen/analysis.hpp"
#include "tsen/checkpoint.hpp"
#include "tsen/config.hpp"
#include "tsen/dataset.hpp"
#include "tsen/errors.hpp"
#include "tsen/train.hpp"

namespace fs = std::filesystem;
using namespace tsen;

namespace {

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out.good()) throw IoError("failed writing '" + path.string() + "'");
}

// Creates the output directory and drops the normalized config echo into it.
void prepare_output_dir(const ExperimentConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) {
    throw IoError("cannot create output directory '" + cfg.output_dir +
                  "': " + ec.message());
  }
  write_text_file(fs::path(cfg.output_dir) / "config.json",
                  config_to_json(cfg).dump(2) + "\n");
}

std::vector<int> all_indices(const Dataset& data) {
  std::vector<int> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  return idx;
}

// run_experiment wrapper that writes per-repetition reports and (optionally)
// checkpoints into the output directory.
ExperimentSummary run_and_save(const ExperimentConfig& cfg, const Dataset& data,
                               bool checkpoint_all_reps) {
  const std::string variant = to_string(cfg.model.variant);
  const fs::path out(cfg.output_dir);
  return run_experiment(
      cfg.model, data, cfg.train, cfg.seed,
      [&](int rep, const TrainReport& report, const ModelParams& params) {
        const std::string stem = variant + "_rep" + std::to_string(rep);
        write_text_file(out / ("report_" + stem + ".json"),
                        report_to_json(report) + "\n");
        if (checkpoint_all_reps || rep == 0) {
          save_checkpoint(params, (out / ("checkpoint_" + stem + ".json")).string());
        }
      });
}

int cmd_gen_data(const std::string& out_dir, int graphs, int nodes,
                 double signal, std::uint64_t seed, double threshold) {
  Dataset data = generate_synthetic(graphs, nodes, signal, seed, threshold);
  const fs::path manifest = write_dataset(data, out_dir);
  std::printf("wrote %zu graphs (%d nodes, signal %g, seed %llu)\n",
              data.size(), nodes, signal, static_cast<unsigned long long>(seed));
  std::printf("manifest: %s\n", manifest.string().c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& variant,
              int jobs) {
  ExperimentConfig cfg = parse_config(config_path);
  if (!variant.empty()) cfg.model.variant = variant_from_string(variant);
  if (jobs > 0) cfg.train.jobs = jobs;
  prepare_output_dir(cfg);

  Dataset data = load_config_dataset(cfg);
  std::printf("dataset '%s': %zu graphs, %lld features, %d classes\n",
              data.name.c_str(), data.size(),
              static_cast<long long>(data.feature_dim()), data.class_count);

  ExperimentSummary summary = run_and_save(cfg, data, /*checkpoint_all_reps=*/true);
  const std::string csv = summary_csv_header() + "\n" + summary_csv_row(summary) + "\n";
  write_text_file(fs::path(cfg.output_dir) / "summary.csv", csv);
  write_text_file(fs::path(cfg.output_dir) / "summary.txt",
                  summary_table_text({summary}));
  std::printf("%s", summary_table_text({summary}).c_str());
  return 0;
}

int cmd_ablate(const std::string& config_path, int jobs) {
  ExperimentConfig cfg = parse_config(config_path);
  if (jobs > 0) cfg.train.jobs = jobs;
  prepare_output_dir(cfg);

  Dataset data = load_config_dataset(cfg);
  std::vector<ExperimentSummary> summaries;
  for (Variant v : all_variants()) {
    cfg.model.variant = v;
    std::printf("-- %s\n", to_string(v).c_str());
    summaries.push_back(run_and_save(cfg, data, /*checkpoint_all_reps=*/false));
  }

  std::string csv = summary_csv_header() + "\n";
  for (const auto& s : summaries) csv += summary_csv_row(s) + "\n";
  write_text_file(fs::path(cfg.output_dir) / "summary.csv", csv);
  write_text_file(fs::path(cfg.output_dir) / "summary.txt",
                  summary_table_text(summaries));
  std::printf("%s", summary_table_text(summaries).c_str());
  return 0;
}

int cmd_cka(const std::string& config_path,
            const std::vector<std::string>& checkpoints,
            std::vector<int> layers, const std::string& kernel_name,
            double rbf_multiplier) {
  ExperimentConfig cfg = parse_config(config_path);
  prepare_output_dir(cfg);
  const CkaKernel kernel = cka_kernel_from_string(kernel_name);

  Dataset data = load_config_dataset(cfg);
  std::vector<ModelParams> loaded;
  loaded.reserve(checkpoints.size());
  std::vector<std::pair<std::string, const ModelParams*>> models;
  for (const std::string& path : checkpoints) {
    loaded.push_back(load_checkpoint(path));
    std::string tag = to_string(loaded.back().config.variant);
    int duplicates = 0;
    for (const auto& [existing, _] : models) {
      if (existing == tag || existing.rfind(tag + "#", 0) == 0) ++duplicates;
    }
    if (duplicates > 0) tag += "#" + std::to_string(duplicates + 1);
    models.emplace_back(tag, nullptr);
  }
  for (std::size_t i = 0; i < loaded.size(); ++i) models[i].second = &loaded[i];

  if (layers.empty()) layers = {1, 2};
  CkaTable table = cka_model_table(models, data, all_indices(data), layers,
                                   kernel, rbf_multiplier);

  const fs::path out(cfg.output_dir);
  write_text_file(out / "cka.csv", cka_table_csv(table));
  write_text_file(out / "cka.txt", cka_table_text(table));
  nlohmann::json meta{{"kernel", to_string(kernel)},
                      {"estimator", "unbiased-hsic"},
                      {"rbf_multiplier", rbf_multiplier},
                      {"graphs", data.size()},
                      {"layers", layers}};
  write_text_file(out / "cka_meta.json", meta.dump(2) + "\n");
  std::printf("%s", cka_table_text(table).c_str());
  return 0;
}

int cmd_sweep(const std::string& config_path, std::vector<double> thresholds,
              int jobs) {
  ExperimentConfig cfg = parse_config(config_path);
  if (jobs > 0) cfg.train.jobs = jobs;
  prepare_output_dir(cfg);
  if (thresholds.empty()) thresholds = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};

  Dataset data = load_config_dataset(cfg);
  SweepTable table =
      threshold_sweep(data, thresholds, cfg.model, cfg.train, cfg.seed);

  const fs::path out(cfg.output_dir);
  write_text_file(out / "sweep.csv", sweep_table_csv(table));
  write_text_file(out / "sweep.txt", sweep_table_text(table));
  std::printf("%s", sweep_table_text(table).c_str());
  return 0;
}

int cmd_export_emb(const std::string& checkpoint_path,
                   const std::string& config_path, const std::string& out_csv,
                   int layer) {
  ExperimentConfig cfg = parse_config(config_path);
  Dataset data = load_config_dataset(cfg);
  ModelParams params = load_checkpoint(checkpoint_path);

  RepresentationMatrix rep =
      extract_representations(params, data, all_indices(data), layer);
  std::vector<int> labels;
  labels.reserve(data.size());
  for (const Graph& g : data.graphs) labels.push_back(g.label);
  export_embeddings(rep.values, labels, {}, out_csv);
  std::printf("wrote %lldx%lld embeddings to %s\n",
              static_cast<long long>(rep.values.rows()),
              static_cast<long long>(rep.values.cols()), out_csv.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TSEN graph-transformer: training, ablations, and analyses"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  std::string gen_out;
  int gen_graphs = 400, gen_nodes = 50;
  double gen_signal = 0.8, gen_threshold = 0.2;
  std::uint64_t gen_seed = 7;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--graphs", gen_graphs, "Number of graphs (even)");
  gen->add_option("--nodes", gen_nodes, "Nodes per graph");
  gen->add_option("--signal", gen_signal, "Planted signal strength in [0,1]");
  gen->add_option("--seed", gen_seed, "Generation seed");
  gen->add_option("--threshold", gen_threshold, "Edge binarization threshold");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one variant");
  std::string train_config, train_variant;
  int train_jobs = 0;
  train_cmd->add_option("--config", train_config, "Experiment config JSON")->required();
  train_cmd->add_option("--variant", train_variant,
                        "Override the config's model variant");
  train_cmd->add_option("--jobs", train_jobs, "Worker threads (default 1)");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Run the full variant ablation");
  std::string ablate_config;
  int ablate_jobs = 0;
  ablate->add_option("--config", ablate_config, "Experiment config JSON")->required();
  ablate->add_option("--jobs", ablate_jobs, "Worker threads (default 1)");

  // cka
  auto* cka_cmd = app.add_subcommand("cka", "Pairwise CKA between checkpoints");
  std::string cka_config, cka_kernel = "linear";
  std::vector<std::string> cka_checkpoints;
  std::vector<int> cka_layers;
  double cka_mult = 1.0;
  cka_cmd->add_option("--config", cka_config, "Experiment config JSON")->required();
  cka_cmd->add_option("--checkpoints", cka_checkpoints, "Checkpoint files (>= 2)")
      ->required()
      ->expected(2, -1);
  cka_cmd->add_option("--layers", cka_layers, "Readout layers (default: 1 2)");
  cka_cmd->add_option("--kernel", cka_kernel, "linear or rbf");
  cka_cmd->add_option("--rbf-multiplier", cka_mult,
                      "Bandwidth multiplier on the median distance");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Binarization threshold sweep");
  std::string sweep_config;
  std::vector<double> sweep_thresholds;
  int sweep_jobs = 0;
  sweep_cmd->add_option("--config", sweep_config, "Experiment config JSON")->required();
  sweep_cmd->add_option("--thresholds", sweep_thresholds,
                        "Comma-separated thresholds (default 0,0.1,...,0.5)")
      ->delimiter(',');
  sweep_cmd->add_option("--jobs", sweep_jobs, "Worker threads (default 1)");

  // export-emb
  auto* exp = app.add_subcommand("export-emb", "Export graph embeddings to CSV");
  std::string exp_checkpoint, exp_config, exp_out;
  int exp_layer = kFinalLayer;
  exp->add_option("--checkpoint", exp_checkpoint, "Checkpoint file")->required();
  exp->add_option("--config", exp_config, "Experiment config JSON")->required();
  exp->add_option("--out", exp_out, "Output CSV path")->required();
  exp->add_option("--layer", exp_layer,
                  "Readout layer (default: final concatenated representation)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // bad invocation is a configuration error
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_data(gen_out, gen_graphs, gen_nodes, gen_signal, gen_seed,
                          gen_threshold);
    }
    if (train_cmd->parsed()) return cmd_train(train_config, train_variant, train_jobs);
    if (ablate->parsed()) return cmd_ablate(ablate_config, ablate_jobs);
    if (cka_cmd->parsed()) {
      return cmd_cka(cka_config, cka_checkpoints, cka_layers, cka_kernel, cka_mult);
    }
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_config, sweep_thresholds, sweep_jobs);
    if (exp->parsed()) {
      return cmd_export_emb(exp_checkpoint, exp_config, exp_out, exp_layer);
    }
    std::fprintf(stderr, "error: no subcommand selected\n");
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 5;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
