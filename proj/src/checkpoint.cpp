#include "tsen/checkpoint.hpp"

#include <fstream>

#include "json.hpp"
#include "tsen/config.hpp"
#include "tsen/errors.hpp"

namespace tsen {

using nlohmann::json;

void save_checkpoint(const ModelParams& params, const std::string& path) {
  json leaves = json::object();
  params.for_each([&](const std::string& name, const Tensor& t) {
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(t.size()));
    const Matrix& m = t.value();
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) values.push_back(m(i, j));
    }
    leaves[name] = {{"rows", t.rows()}, {"cols", t.cols()}, {"values", values}};
  });
  json j{{"format_version", kCheckpointFormatVersion},
         {"model", model_config_to_json(params.config)},
         {"feature_dim", params.feature_dim},
         {"class_count", params.class_count},
         {"params", leaves}};

  std::ofstream out(path);
  if (!out) throw IoError("cannot open checkpoint '" + path + "' for writing");
  out << j.dump(1) << "\n";
  if (!out.good()) throw IoError("failed writing checkpoint '" + path + "'");
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw IoError("checkpoint '" + path + "': " + e.what());
  }

  if (!j.contains("format_version") || !j["format_version"].is_number_integer()) {
    throw IoError("checkpoint '" + path + "': missing format_version");
  }
  const int version = j["format_version"].get<int>();
  if (version != kCheckpointFormatVersion) {
    throw IoError("checkpoint '" + path + "': unsupported format_version " +
                  std::to_string(version));
  }
  if (!j.contains("model") || !j.contains("feature_dim") ||
      !j.contains("class_count") || !j.contains("params")) {
    throw IoError("checkpoint '" + path + "': missing required sections");
  }

  const ModelConfig config = model_config_from_json(j["model"], "model.");
  const int feature_dim = j["feature_dim"].get<int>();
  const int class_count = j["class_count"].get<int>();

  const json& leaves = j["params"];
  if (!leaves.is_object()) {
    throw IoError("checkpoint '" + path + "': 'params' must be an object");
  }

  // Build a correctly shaped skeleton, then overwrite every leaf from file.
  ModelParams params = init_params(config, feature_dim, class_count, 0);
  std::size_t filled = 0;
  const auto fill = [&](const std::string& name, Tensor& t) {
    if (!leaves.contains(name)) {
      throw IoError("checkpoint '" + path + "': missing parameter '" + name +
                    "'");
    }
    const json& leaf = leaves.at(name);
    const Index rows = leaf.at("rows").get<Index>();
    const Index cols = leaf.at("cols").get<Index>();
    if (rows != t.rows() || cols != t.cols()) {
      throw IoError("checkpoint '" + path + "': parameter '" + name +
                    "' has shape " + std::to_string(rows) + "x" +
                    std::to_string(cols) + ", expected " +
                    std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
    }
    const auto& values = leaf.at("values");
    if (!values.is_array() || static_cast<Index>(values.size()) != rows * cols) {
      throw IoError("checkpoint '" + path + "': parameter '" + name +
                    "' has wrong value count");
    }
    Matrix& m = t.value();
    std::size_t k = 0;
    for (Index i = 0; i < rows; ++i) {
      for (Index jc = 0; jc < cols; ++jc) m(i, jc) = values[k++].get<double>();
    }
    ++filled;
  };
  try {
    params.for_each(fill);
  } catch (const json::exception& e) {
    throw IoError("checkpoint '" + path + "': " + e.what());
  }
  if (filled != leaves.size()) {
    throw IoError("checkpoint '" + path + "': file contains " +
                  std::to_string(leaves.size()) + " parameters, model expects " +
                  std::to_string(filled));
  }
  return params;
}

}  // namespace tsen
