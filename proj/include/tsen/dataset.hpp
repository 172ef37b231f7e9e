#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tsen/graph.hpp"

namespace tsen {

enum class DatasetSource { ingested, synthetic };

struct Dataset {
  std::vector<Graph> graphs;
  int class_count = 0;
  std::string name;
  DatasetSource source = DatasetSource::ingested;
  std::optional<std::uint64_t> generation_seed;

  std::size_t size() const { return graphs.size(); }
  Index feature_dim() const {
    return graphs.empty() ? 0 : graphs.front().feature_dim();
  }
};

/// Disjoint train/val/test index lists covering the dataset. Sizes follow
/// floor(0.8 N) / floor(0.1 N) / remainder.
struct SplitPlan {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
  std::uint64_t seed = 0;
};

/// Plain-text n x n matrix: n rows of comma-separated decimals, no header.
Matrix read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);

/// Loads the dataset described by a manifest CSV with header
/// `subject_id,matrix_file,label`; matrix paths are resolved against the
/// manifest's directory. Graphs are built with `threshold` in manifest row
/// order. `class_count` = 0 infers max(label)+1; otherwise labels outside
/// [0, class_count) are rejected, naming the offending subject.
Dataset load_dataset(const std::filesystem::path& manifest_path,
                     double threshold, int class_count = 0);

/// Writes one matrix CSV per graph (the node-feature matrix, i.e. the raw
/// connectivity) plus a manifest, producing a directory loadable by
/// load_dataset. Returns the manifest path.
std::filesystem::path write_dataset(const Dataset& dataset,
                                    const std::filesystem::path& dir);

/// Two balanced classes of synthetic correlation matrices with planted
/// block structure; class 0 carries two coarse communities, class 1 a chain
/// of five finer ones. `signal` in [0, 1] scales the planted correlation
/// strength (0 = pure noise, classes indistinguishable). Matrices are
/// Pearson correlations of latent time series, hence valid and PSD.
/// Deterministic under `seed`. Graphs are built at `threshold`.
Dataset generate_synthetic(int n_graphs, int n_nodes, double signal,
                           std::uint64_t seed, double threshold = 0.2);

/// Uniformly random 80/10/10 split, deterministic under `seed`.
SplitPlan split_dataset(const Dataset& dataset, std::uint64_t seed);

}  // namespace tsen
