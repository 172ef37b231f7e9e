#include "tsen/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "tsen/errors.hpp"

namespace tsen {

using nlohmann::json;

namespace {

const json& section(const json& j, const std::string& key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) {
    throw ConfigError("config: section '" + key + "' must be a JSON object");
  }
  return j.at(key);
}

void reject_unknown(const json& obj, const std::string& prefix,
                    std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("config: unknown key '" + prefix + key + "'");
    }
  }
}

double get_number(const json& obj, const std::string& prefix,
                  const std::string& key, double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) {
    throw ConfigError("config: '" + prefix + key + "' must be a number");
  }
  return v.get<double>();
}

int get_int(const json& obj, const std::string& prefix, const std::string& key,
            int fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) {
    throw ConfigError("config: '" + prefix + key + "' must be an integer");
  }
  return v.get<int>();
}

std::uint64_t get_u64(const json& obj, const std::string& prefix,
                      const std::string& key, std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer() ||
      (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    throw ConfigError("config: '" + prefix + key +
                      "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::string get_string(const json& obj, const std::string& prefix,
                       const std::string& key, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) {
    throw ConfigError("config: '" + prefix + key + "' must be a string");
  }
  return v.get<std::string>();
}

bool get_bool(const json& obj, const std::string& prefix, const std::string& key,
              bool fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean()) {
    throw ConfigError("config: '" + prefix + key + "' must be a boolean");
  }
  return v.get<bool>();
}

}  // namespace

ModelConfig model_config_from_json(const json& j, const std::string& prefix) {
  reject_unknown(j, prefix,
                 {"variant", "num_layers", "hidden_dim", "num_heads", "ffn_dim",
                  "dropout_transformer", "dropout_mlp", "mlp_hidden",
                  "conv_activation", "ffn_activation", "include_input_readout"});
  ModelConfig m;
  try {
    m.variant = variant_from_string(get_string(j, prefix, "variant", "TSEN"));
    m.conv_activation = activation_from_string(
        get_string(j, prefix, "conv_activation", "tanh"));
    m.ffn_activation =
        activation_from_string(get_string(j, prefix, "ffn_activation", "gelu"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config: " + prefix + "*_activation: " + e.what());
  }
  m.num_layers = get_int(j, prefix, "num_layers", m.num_layers);
  m.hidden_dim = get_int(j, prefix, "hidden_dim", m.hidden_dim);
  m.num_heads = get_int(j, prefix, "num_heads", m.num_heads);
  m.ffn_dim = get_int(j, prefix, "ffn_dim", m.ffn_dim);
  m.dropout_transformer =
      get_number(j, prefix, "dropout_transformer", m.dropout_transformer);
  m.dropout_mlp = get_number(j, prefix, "dropout_mlp", m.dropout_mlp);
  m.mlp_hidden = get_int(j, prefix, "mlp_hidden", m.mlp_hidden);
  m.include_input_readout =
      get_bool(j, prefix, "include_input_readout", m.include_input_readout);
  m.validate();  // messages already carry the "model." prefix
  return m;
}

json model_config_to_json(const ModelConfig& m) {
  return json{{"variant", to_string(m.variant)},
              {"num_layers", m.num_layers},
              {"hidden_dim", m.hidden_dim},
              {"num_heads", m.num_heads},
              {"ffn_dim", m.ffn_dim},
              {"dropout_transformer", m.dropout_transformer},
              {"dropout_mlp", m.dropout_mlp},
              {"mlp_hidden", m.mlp_hidden},
              {"conv_activation", to_string(m.conv_activation)},
              {"ffn_activation", to_string(m.ffn_activation)},
              {"include_input_readout", m.include_input_readout}};
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  reject_unknown(j, "", {"dataset", "model", "train", "output", "seed"});

  ExperimentConfig cfg;
  cfg.seed = get_u64(j, "", "seed", 0);

  // dataset ------------------------------------------------------------------
  const json& ds = section(j, "dataset");
  reject_unknown(ds, "dataset.",
                 {"source", "path", "threshold", "class_count", "name", "graphs",
                  "nodes", "signal", "seed"});
  DatasetConfig& d = cfg.dataset;
  d.source = get_string(ds, "dataset.", "source", "");
  if (d.source.empty()) {
    throw ConfigError(
        "config: missing 'dataset.source' (\"manifest\" or \"synthetic\")");
  }
  if (d.source != "manifest" && d.source != "synthetic") {
    throw ConfigError("config: 'dataset.source' must be \"manifest\" or "
                      "\"synthetic\", got \"" + d.source + "\"");
  }
  d.path = get_string(ds, "dataset.", "path", "");
  if (d.source == "manifest" && d.path.empty()) {
    throw ConfigError("config: 'dataset.path' is required for a manifest source");
  }
  d.threshold = get_number(ds, "dataset.", "threshold", d.threshold);
  if (!(d.threshold >= 0.0 && d.threshold < 1.0)) {
    throw ConfigError("config: 'dataset.threshold' must lie in [0, 1), got " +
                      std::to_string(d.threshold));
  }
  d.class_count = get_int(ds, "dataset.", "class_count", d.class_count);
  if (d.class_count != 0 && d.class_count < 2) {
    throw ConfigError(
        "config: 'dataset.class_count' must be 0 (infer) or >= 2, got " +
        std::to_string(d.class_count));
  }
  d.name = get_string(ds, "dataset.", "name", "");
  d.graphs = get_int(ds, "dataset.", "graphs", d.graphs);
  d.nodes = get_int(ds, "dataset.", "nodes", d.nodes);
  d.signal = get_number(ds, "dataset.", "signal", d.signal);
  d.seed = get_u64(ds, "dataset.", "seed", d.seed);
  if (d.source == "synthetic") {
    if (d.graphs < 2 || d.graphs % 2 != 0) {
      throw ConfigError("config: 'dataset.graphs' must be a positive even "
                        "count, got " + std::to_string(d.graphs));
    }
    if (d.nodes < 4) {
      throw ConfigError("config: 'dataset.nodes' must be >= 4, got " +
                        std::to_string(d.nodes));
    }
    if (!(d.signal >= 0.0 && d.signal <= 1.0)) {
      throw ConfigError("config: 'dataset.signal' must lie in [0, 1], got " +
                        std::to_string(d.signal));
    }
  }

  // model ---------------------------------------------------------------------
  cfg.model = model_config_from_json(section(j, "model"), "model.");

  // train ---------------------------------------------------------------------
  const json& tr = section(j, "train");
  reject_unknown(tr, "train.",
                 {"epochs", "batch_size", "repetitions", "base_lr",
                  "weight_decay", "warmup_steps", "beta1", "beta2", "eps",
                  "jobs", "verbose"});
  TrainConfig& t = cfg.train;
  t.epochs = get_int(tr, "train.", "epochs", t.epochs);
  if (t.epochs < 0) {
    throw ConfigError("config: 'train.epochs' must be >= 0, got " +
                      std::to_string(t.epochs));
  }
  t.batch_size = get_int(tr, "train.", "batch_size", t.batch_size);
  if (t.batch_size < 1) {
    throw ConfigError("config: 'train.batch_size' must be >= 1, got " +
                      std::to_string(t.batch_size));
  }
  t.repetitions = get_int(tr, "train.", "repetitions", t.repetitions);
  if (t.repetitions < 1) {
    throw ConfigError("config: 'train.repetitions' must be >= 1, got " +
                      std::to_string(t.repetitions));
  }
  t.optim.base_lr = get_number(tr, "train.", "base_lr", t.optim.base_lr);
  if (!(t.optim.base_lr > 0.0)) {
    throw ConfigError("config: 'train.base_lr' must be > 0");
  }
  t.optim.weight_decay =
      get_number(tr, "train.", "weight_decay", t.optim.weight_decay);
  if (t.optim.weight_decay < 0.0) {
    throw ConfigError("config: 'train.weight_decay' must be >= 0");
  }
  t.optim.warmup_steps = get_int(tr, "train.", "warmup_steps", t.optim.warmup_steps);
  if (t.optim.warmup_steps < 0) {
    throw ConfigError("config: 'train.warmup_steps' must be >= 0");
  }
  t.optim.beta1 = get_number(tr, "train.", "beta1", t.optim.beta1);
  t.optim.beta2 = get_number(tr, "train.", "beta2", t.optim.beta2);
  if (!(t.optim.beta1 >= 0.0 && t.optim.beta1 < 1.0) ||
      !(t.optim.beta2 >= 0.0 && t.optim.beta2 < 1.0)) {
    throw ConfigError("config: 'train.beta1'/'train.beta2' must lie in [0, 1)");
  }
  t.optim.eps = get_number(tr, "train.", "eps", t.optim.eps);
  if (!(t.optim.eps > 0.0)) {
    throw ConfigError("config: 'train.eps' must be > 0");
  }
  t.jobs = get_int(tr, "train.", "jobs", t.jobs);
  if (t.jobs < 1) {
    throw ConfigError("config: 'train.jobs' must be >= 1, got " +
                      std::to_string(t.jobs));
  }
  t.verbose = get_bool(tr, "train.", "verbose", t.verbose);
  t.seed = cfg.seed;

  // output --------------------------------------------------------------------
  const json& out = section(j, "output");
  reject_unknown(out, "output.", {"dir"});
  cfg.output_dir = get_string(out, "output.", "dir", cfg.output_dir);
  if (cfg.output_dir.empty()) {
    throw ConfigError("config: 'output.dir' must be a non-empty path");
  }
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json ds{{"source", cfg.dataset.source},
          {"threshold", cfg.dataset.threshold},
          {"class_count", cfg.dataset.class_count},
          {"name", cfg.dataset.name}};
  if (cfg.dataset.source == "manifest") {
    ds["path"] = cfg.dataset.path;
  } else {
    ds["graphs"] = cfg.dataset.graphs;
    ds["nodes"] = cfg.dataset.nodes;
    ds["signal"] = cfg.dataset.signal;
    ds["seed"] = cfg.dataset.seed;
  }
  json tr{{"epochs", cfg.train.epochs},
          {"batch_size", cfg.train.batch_size},
          {"repetitions", cfg.train.repetitions},
          {"base_lr", cfg.train.optim.base_lr},
          {"weight_decay", cfg.train.optim.weight_decay},
          {"warmup_steps", cfg.train.optim.warmup_steps},
          {"beta1", cfg.train.optim.beta1},
          {"beta2", cfg.train.optim.beta2},
          {"eps", cfg.train.optim.eps},
          {"jobs", cfg.train.jobs},
          {"verbose", cfg.train.verbose}};
  return json{{"dataset", ds},
              {"model", model_config_to_json(cfg.model)},
              {"train", tr},
              {"output", {{"dir", cfg.output_dir}}},
              {"seed", cfg.seed}};
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  ExperimentConfig cfg = config_from_json(j);
  if (const char* env = std::getenv("TSEN_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') {
      throw ConfigError("TSEN_SEED must be a non-negative integer, got '" +
                        std::string(env) + "'");
    }
    cfg.seed = static_cast<std::uint64_t>(v);
    cfg.train.seed = cfg.seed;
  }
  return cfg;
}

Dataset load_config_dataset(const ExperimentConfig& cfg) {
  Dataset data;
  if (cfg.dataset.source == "synthetic") {
    data = generate_synthetic(cfg.dataset.graphs, cfg.dataset.nodes,
                              cfg.dataset.signal, cfg.dataset.seed,
                              cfg.dataset.threshold);
  } else {
    data = load_dataset(cfg.dataset.path, cfg.dataset.threshold,
                        cfg.dataset.class_count);
  }
  if (!cfg.dataset.name.empty()) data.name = cfg.dataset.name;
  return data;
}

}  // namespace tsen
