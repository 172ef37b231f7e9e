#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tsen/dataset.hpp"
#include "tsen/model.hpp"
#include "tsen/train.hpp"

namespace tsen {

/// Layer selector for extract_representations: readout t (0 = raw-feature
/// readout when enabled, 1..num_layers = encoded layers) or the final
/// concatenated representation.
inline constexpr int kFinalLayer = -1;

enum class CkaKernel { linear, rbf };

CkaKernel cka_kernel_from_string(const std::string& name);
std::string to_string(CkaKernel k);

/// One row per graph: the layer-t readout h_t, or h_G for kFinalLayer.
struct RepresentationMatrix {
  Matrix values;
  std::string model_tag;
  int layer = kFinalLayer;
};

/// Evaluation-mode representations of the listed graphs. Repeated extraction
/// is bit-identical. Throws ConfigError when `layer` is out of range for the
/// model configuration.
RepresentationMatrix extract_representations(const ModelParams& params,
                                             const Dataset& data,
                                             const std::vector<int>& indices,
                                             int layer,
                                             const std::string& model_tag = "");

/// Centered kernel alignment between two representation sets with equal row
/// counts (>= 4):
///   CKA = HSIC(Kx, Ky) / sqrt(HSIC(Kx, Kx) * HSIC(Ky, Ky))
/// using the unbiased HSIC estimator, so unrelated representations score
/// near 0 regardless of the embedding width. The RBF kernel uses
/// exp(-d^2 / (2 sigma^2)) with sigma = (median pairwise Euclidean distance
/// of that input) * rbf_multiplier. Throws NumericError when a side has zero
/// variance (similarity undefined).
double cka(const Matrix& x, const Matrix& y, CkaKernel kernel,
           double rbf_multiplier = 1.0);

double cka(const RepresentationMatrix& x, const RepresentationMatrix& y,
           CkaKernel kernel, double rbf_multiplier = 1.0);

/// Pairwise CKA of several models' per-layer readouts over one graph list.
struct CkaTable {
  struct Row {
    std::string model_a, model_b;
    std::vector<double> values;  // one per entry of `layers`
  };
  std::string kernel;
  std::vector<int> layers;
  std::vector<Row> rows;  // all unordered pairs, input order
};

CkaTable cka_model_table(
    const std::vector<std::pair<std::string, const ModelParams*>>& models,
    const Dataset& data, const std::vector<int>& indices,
    const std::vector<int>& layers, CkaKernel kernel,
    double rbf_multiplier = 1.0);

std::string cka_table_csv(const CkaTable& table);
std::string cka_table_text(const CkaTable& table);

/// CSV export of a representation matrix with header
/// `graph_id,label,e0..e{d-1}`; values use exact round-trip formatting.
/// `ids` may be empty (row numbers are used). Length mismatches are rejected
/// before anything is written.
void export_embeddings(const Matrix& representation,
                       const std::vector<int>& labels,
                       const std::vector<std::string>& ids,
                       const std::string& path);

/// Re-binarizes every graph of `data` at `threshold` (features carry the raw
/// correlation rows, so the graph structure can be rebuilt losslessly).
Dataset rebuild_with_threshold(const Dataset& data, double threshold);

struct SweepRow {
  double threshold = 0.0;
  double acc_mean = 0.0, acc_std = 0.0;
  double f1_mean = 0.0, f1_std = 0.0;
  double mean_edges = 0.0;  // undirected edges per graph at this threshold
};

struct SweepTable {
  std::vector<SweepRow> rows;
};

/// For each threshold: rebuild the graphs, run a full run_experiment, and
/// report metric mean/std plus the mean edge count.
SweepTable threshold_sweep(const Dataset& data,
                           const std::vector<double>& thresholds,
                           const ModelConfig& model_config,
                           const TrainConfig& train_config,
                           std::uint64_t base_seed);

std::string sweep_table_csv(const SweepTable& table);
std::string sweep_table_text(const SweepTable& table);

/// `variant,dataset,acc_mean,acc_std,f1_mean,f1_std` (percentages).
std::string summary_csv_header();
std::string summary_csv_row(const ExperimentSummary& summary);
std::string summary_table_text(const std::vector<ExperimentSummary>& summaries);

}  // namespace tsen
