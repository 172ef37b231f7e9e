#include "tsen/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "tsen/errors.hpp"

namespace tsen {

namespace {

std::string strfmt(const char* fmt, ...) {
  char buf[256];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return std::string(buf);
}

// Pads `s` to `width` columns (left-aligned).
std::string pad(const std::string& s, std::size_t width) {
  std::string out = s;
  if (out.size() < width) out.append(width - out.size(), ' ');
  return out;
}

}  // namespace

CkaKernel cka_kernel_from_string(const std::string& name) {
  if (name == "linear") return CkaKernel::linear;
  if (name == "rbf") return CkaKernel::rbf;
  throw ConfigError("unknown CKA kernel '" + name +
                    "' (expected \"linear\" or \"rbf\")");
}

std::string to_string(CkaKernel k) {
  return k == CkaKernel::linear ? "linear" : "rbf";
}

// --- representations -----------------------------------------------------------

RepresentationMatrix extract_representations(const ModelParams& params,
                                             const Dataset& data,
                                             const std::vector<int>& indices,
                                             int layer,
                                             const std::string& model_tag) {
  const ModelConfig& cfg = params.config;
  const int min_layer = cfg.include_input_readout ? 0 : 1;
  if (layer != kFinalLayer && (layer < min_layer || layer > cfg.num_layers)) {
    throw ConfigError("representation layer " + std::to_string(layer) +
                      " out of range [" + std::to_string(min_layer) + ", " +
                      std::to_string(cfg.num_layers) + "]");
  }
  if (indices.empty()) {
    throw std::invalid_argument("extract_representations: empty index list");
  }

  RepresentationMatrix rep;
  rep.model_tag = model_tag;
  rep.layer = layer;
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const Graph& g = data.graphs.at(static_cast<std::size_t>(indices[r]));
    ForwardResult fwd = forward_full(g, params, /*training=*/false);
    const Tensor& row =
        layer == kFinalLayer
            ? fwd.representation
            : fwd.readouts.at(static_cast<std::size_t>(
                  cfg.include_input_readout ? layer : layer - 1));
    if (r == 0) rep.values.resize(static_cast<Index>(indices.size()), row.cols());
    rep.values.row(static_cast<Index>(r)) = row.value().row(0);
  }
  return rep;
}

// --- CKA -----------------------------------------------------------------------

namespace {

Matrix gram_matrix(const Matrix& x, CkaKernel kernel, double rbf_multiplier) {
  if (kernel == CkaKernel::linear) return x * x.transpose();

  const Index n = x.rows();
  const Eigen::VectorXd sq = x.rowwise().squaredNorm();
  Matrix d2 = (-2.0 * (x * x.transpose())).eval();
  d2.colwise() += sq;
  d2.rowwise() += sq.transpose();
  d2 = d2.cwiseMax(0.0);  // clamp the rounding negatives on the diagonal

  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) dists.push_back(std::sqrt(d2(i, j)));
  }
  std::sort(dists.begin(), dists.end());
  const std::size_t m = dists.size();
  const double median = m % 2 == 1 ? dists[m / 2]
                                   : 0.5 * (dists[m / 2 - 1] + dists[m / 2]);
  const double sigma = median * rbf_multiplier;
  if (!(sigma > 0.0)) {
    throw NumericError("cka: rbf bandwidth is zero (rows are identical)");
  }
  return (-d2 / (2.0 * sigma * sigma)).array().exp().matrix();
}

// Unbiased HSIC estimator (zero-diagonal Gram form). Expectation is exactly
// zero for independent inputs, where the naive double-centered tr(Kc Lc)
// form keeps an O(d/n) offset that would swamp small similarities.
double hsic_unbiased(const Matrix& k, const Matrix& l) {
  const Index n = k.rows();
  Matrix kt = k;
  Matrix lt = l;
  kt.diagonal().setZero();
  lt.diagonal().setZero();
  const double nn = static_cast<double>(n);
  const double t1 = kt.cwiseProduct(lt).sum();
  const double t2 = kt.sum() * lt.sum() / ((nn - 1.0) * (nn - 2.0));
  const double t3 =
      2.0 * (kt.rowwise().sum().cwiseProduct(lt.rowwise().sum())).sum() /
      (nn - 2.0);
  return (t1 + t2 - t3) / (nn * (nn - 3.0));
}

}  // namespace

double cka(const Matrix& x, const Matrix& y, CkaKernel kernel,
           double rbf_multiplier) {
  if (x.rows() != y.rows()) {
    throw std::invalid_argument("cka: row counts differ: " +
                                std::to_string(x.rows()) + " vs " +
                                std::to_string(y.rows()));
  }
  if (x.rows() < 4) {
    // the unbiased estimator divides by n (n - 3)
    throw std::invalid_argument("cka: need at least 4 rows, got " +
                                std::to_string(x.rows()));
  }
  if (!x.allFinite() || !y.allFinite()) {
    throw NumericError("cka: non-finite representation entries");
  }
  if (rbf_multiplier <= 0.0) {
    throw ConfigError("cka: rbf_multiplier must be > 0");
  }

  const Matrix kx = gram_matrix(x, kernel, rbf_multiplier);
  const Matrix ky = gram_matrix(y, kernel, rbf_multiplier);
  const double hxx = hsic_unbiased(kx, kx);
  const double hyy = hsic_unbiased(ky, ky);
  if (!(hxx > 0.0) || !(hyy > 0.0)) {
    throw NumericError("cka: zero-variance representation, similarity undefined");
  }
  const double value = hsic_unbiased(kx, ky) / std::sqrt(hxx * hyy);
  // estimator noise can stray a hair outside [0, 1]; the similarity itself
  // cannot
  return std::min(1.0, std::max(0.0, value));
}

double cka(const RepresentationMatrix& x, const RepresentationMatrix& y,
           CkaKernel kernel, double rbf_multiplier) {
  return cka(x.values, y.values, kernel, rbf_multiplier);
}

CkaTable cka_model_table(
    const std::vector<std::pair<std::string, const ModelParams*>>& models,
    const Dataset& data, const std::vector<int>& indices,
    const std::vector<int>& layers, CkaKernel kernel, double rbf_multiplier) {
  if (models.size() < 2) {
    throw std::invalid_argument("cka_model_table: need at least two models");
  }
  if (layers.empty()) {
    throw std::invalid_argument("cka_model_table: empty layer list");
  }

  // One extraction per (model, layer), reused across pairs.
  std::vector<std::vector<RepresentationMatrix>> reps(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    for (int layer : layers) {
      reps[m].push_back(extract_representations(*models[m].second, data,
                                                indices, layer,
                                                models[m].first));
    }
  }

  CkaTable table;
  table.kernel = to_string(kernel);
  table.layers = layers;
  for (std::size_t a = 0; a < models.size(); ++a) {
    for (std::size_t b = a + 1; b < models.size(); ++b) {
      CkaTable::Row row;
      row.model_a = models[a].first;
      row.model_b = models[b].first;
      for (std::size_t li = 0; li < layers.size(); ++li) {
        row.values.push_back(cka(reps[a][li], reps[b][li], kernel, rbf_multiplier));
      }
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

std::string cka_table_csv(const CkaTable& table) {
  std::string out = "model_a,model_b";
  for (int layer : table.layers) out += ",layer" + std::to_string(layer);
  out += "\n";
  for (const auto& row : table.rows) {
    out += row.model_a + "," + row.model_b;
    for (double v : row.values) out += strfmt(",%.4f", v);
    out += "\n";
  }
  return out;
}

std::string cka_table_text(const CkaTable& table) {
  std::string out = "CKA similarity (" + table.kernel + " kernel)\n";
  out += pad("pair", 24);
  for (int layer : table.layers) out += pad("layer " + std::to_string(layer), 10);
  out += "\n";
  for (const auto& row : table.rows) {
    out += pad(row.model_a + " / " + row.model_b, 24);
    for (double v : row.values) out += pad(strfmt("%.4f", v), 10);
    out += "\n";
  }
  return out;
}

// --- embedding export ------------------------------------------------------------

void export_embeddings(const Matrix& representation,
                       const std::vector<int>& labels,
                       const std::vector<std::string>& ids,
                       const std::string& path) {
  const Index n = representation.rows();
  if (static_cast<Index>(labels.size()) != n) {
    throw DataError("export_embeddings: " + std::to_string(labels.size()) +
                    " labels for " + std::to_string(n) + " rows");
  }
  if (!ids.empty() && static_cast<Index>(ids.size()) != n) {
    throw DataError("export_embeddings: " + std::to_string(ids.size()) +
                    " ids for " + std::to_string(n) + " rows");
  }

  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "graph_id,label";
  for (Index j = 0; j < representation.cols(); ++j) out << ",e" << j;
  out << "\n";
  char buf[40];
  for (Index i = 0; i < n; ++i) {
    out << (ids.empty() ? std::to_string(i) : ids[static_cast<std::size_t>(i)]);
    out << "," << labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < representation.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", representation(i, j));
      out << "," << buf;
    }
    out << "\n";
  }
  if (!out.good()) throw IoError("failed writing '" + path + "'");
}

// --- threshold sweep --------------------------------------------------------------

Dataset rebuild_with_threshold(const Dataset& data, double threshold) {
  Dataset rebuilt;
  rebuilt.class_count = data.class_count;
  rebuilt.name = data.name;
  rebuilt.source = data.source;
  rebuilt.generation_seed = data.generation_seed;
  rebuilt.graphs.reserve(data.graphs.size());
  for (const Graph& g : data.graphs) {
    rebuilt.graphs.push_back(build_graph(g.features, threshold, g.label));
  }
  return rebuilt;
}

SweepTable threshold_sweep(const Dataset& data,
                           const std::vector<double>& thresholds,
                           const ModelConfig& model_config,
                           const TrainConfig& train_config,
                           std::uint64_t base_seed) {
  if (thresholds.empty()) {
    throw ConfigError("threshold_sweep: empty threshold list");
  }
  for (double t : thresholds) {
    if (!(t >= 0.0 && t < 1.0)) {
      throw ConfigError("threshold_sweep: threshold " + std::to_string(t) +
                        " outside [0, 1)");
    }
  }

  SweepTable table;
  for (double threshold : thresholds) {
    Dataset rebuilt = rebuild_with_threshold(data, threshold);
    double edges = 0.0;
    for (const Graph& g : rebuilt.graphs) {
      edges += static_cast<double>(edge_count(g.adjacency));
    }
    edges /= static_cast<double>(rebuilt.graphs.size());

    ExperimentSummary summary =
        run_experiment(model_config, rebuilt, train_config, base_seed);
    SweepRow row;
    row.threshold = threshold;
    row.acc_mean = summary.acc_mean;
    row.acc_std = summary.acc_std;
    row.f1_mean = summary.f1_mean;
    row.f1_std = summary.f1_std;
    row.mean_edges = edges;
    table.rows.push_back(row);
  }
  return table;
}

std::string sweep_table_csv(const SweepTable& table) {
  std::string out = "threshold,acc_mean,acc_std,f1_mean,f1_std,mean_edges\n";
  for (const auto& r : table.rows) {
    out += strfmt("%g,%.2f,%.2f,%.2f,%.2f,%.2f\n", r.threshold,
                  100.0 * r.acc_mean, 100.0 * r.acc_std, 100.0 * r.f1_mean,
                  100.0 * r.f1_std, r.mean_edges);
  }
  return out;
}

std::string sweep_table_text(const SweepTable& table) {
  std::string out = pad("threshold", 12) + pad("accuracy", 16) + pad("f1", 16) +
                    "mean edges\n";
  for (const auto& r : table.rows) {
    out += pad(strfmt("%g", r.threshold), 12) +
           pad(format_mean_std(r.acc_mean, r.acc_std), 16) +
           pad(format_mean_std(r.f1_mean, r.f1_std), 16) +
           strfmt("%.2f", r.mean_edges) + "\n";
  }
  return out;
}

// --- summary rendering --------------------------------------------------------------

std::string summary_csv_header() {
  return "variant,dataset,acc_mean,acc_std,f1_mean,f1_std";
}

std::string summary_csv_row(const ExperimentSummary& s) {
  return s.variant + "," + s.dataset +
         strfmt(",%.2f,%.2f,%.2f,%.2f", 100.0 * s.acc_mean, 100.0 * s.acc_std,
                100.0 * s.f1_mean, 100.0 * s.f1_std);
}

std::string summary_table_text(const std::vector<ExperimentSummary>& summaries) {
  std::string out =
      pad("variant", 12) + pad("dataset", 20) + pad("accuracy", 16) + "f1\n";
  for (const auto& s : summaries) {
    out += pad(s.variant, 12) + pad(s.dataset, 20) +
           pad(format_mean_std(s.acc_mean, s.acc_std), 16) +
           format_mean_std(s.f1_mean, s.f1_std) + "\n";
  }
  return out;
}

}  // namespace tsen
