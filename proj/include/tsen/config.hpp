#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "tsen/dataset.hpp"
#include "tsen/model.hpp"
#include "tsen/train.hpp"

namespace tsen {

/// The `dataset` section of an experiment config: either a manifest to
/// ingest or parameters for the synthetic generator.
struct DatasetConfig {
  std::string source;        // "manifest" or "synthetic" (required)
  std::string path;          // manifest CSV (manifest source only)
  double threshold = 0.2;    // edge binarization threshold
  int class_count = 0;       // 0 = infer from labels
  std::string name;          // display name; defaulted per source
  int graphs = 400;          // synthetic source only ...
  int nodes = 50;
  double signal = 0.8;
  std::uint64_t seed = 7;    // generation seed, independent of the run seed
};

/// One experiment = dataset + model + training recipe + output directory +
/// base seed. Parsed from a JSON file with sections `dataset`, `model`,
/// `train`, `output` and a top-level `seed`.
struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
};

/// Parses and fully validates a config file; unknown keys and out-of-range
/// values are rejected with the offending key path in the message. The
/// TSEN_SEED environment variable, when set, overrides the base seed.
ExperimentConfig parse_config(const std::string& path);

/// Validation core behind parse_config (no file, no environment).
ExperimentConfig config_from_json(const nlohmann::json& j);

/// Normalized echo: every field explicit, suitable for re-parsing.
nlohmann::json config_to_json(const ExperimentConfig& config);

nlohmann::json model_config_to_json(const ModelConfig& config);

/// `prefix` names the enclosing section in error messages ("model.").
ModelConfig model_config_from_json(const nlohmann::json& j,
                                   const std::string& prefix);

/// Materializes the dataset a config describes (generation or ingestion).
Dataset load_config_dataset(const ExperimentConfig& config);

}  // namespace tsen
