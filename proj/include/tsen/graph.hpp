#pragma once

#include "tsen/tensor.hpp"

namespace tsen {

/// Whole graph as consumed by the model: binarized edges, the normalized
/// Laplacian cached at construction, and the weighted connectivity rows kept
/// as node features.
struct Graph {
  Index n = 0;
  Matrix adjacency;  // n x n, binary, symmetric, zero diagonal
  Matrix laplacian;  // I - D^{-1/2} A D^{-1/2}
  Matrix features;   // n x s node features (s == n for connectivity input)
  int label = 0;

  Index feature_dim() const { return features.cols(); }
};

/// L = I - D^{-1/2} A D^{-1/2}. Isolated nodes use the d^{-1/2} = 0
/// convention, leaving their Laplacian row/column equal to the identity's.
/// Throws DataError when A is not symmetric/binary/zero-diagonal.
Matrix normalized_laplacian(const Matrix& adjacency);

/// Edge rule a_ij = 1 iff corr_ij > threshold and i != j. Decisions are made
/// on the upper triangle and mirrored, so the output is exactly symmetric.
Matrix binarize(const Matrix& corr, double threshold);

/// Builds a Graph from a correlation matrix: edges binarized at `threshold`,
/// node features kept as the full weighted rows (diagonal included).
Graph build_graph(const Matrix& corr, double threshold, int label);

/// Number of undirected edges.
Index edge_count(const Matrix& adjacency);

}  // namespace tsen
