#include "tsen/graph.hpp"

#include <cmath>
#include <string>

#include "tsen/errors.hpp"

namespace tsen {

Matrix normalized_laplacian(const Matrix& adjacency) {
  const Index n = adjacency.rows();
  if (adjacency.cols() != n) {
    throw DataError("normalized_laplacian: adjacency must be square, got (" +
                    std::to_string(n) + "x" + std::to_string(adjacency.cols()) +
                    ")");
  }
  for (Index i = 0; i < n; ++i) {
    if (adjacency(i, i) != 0.0) {
      throw DataError("normalized_laplacian: nonzero diagonal at node " +
                      std::to_string(i));
    }
    for (Index j = i + 1; j < n; ++j) {
      const double a = adjacency(i, j);
      if (a != 0.0 && a != 1.0) {
        throw DataError("normalized_laplacian: non-binary entry " +
                        std::to_string(a) + " at (" + std::to_string(i) + "," +
                        std::to_string(j) + ")");
      }
      if (a != adjacency(j, i)) {
        throw DataError("normalized_laplacian: asymmetric at (" +
                        std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }

  Eigen::VectorXd inv_sqrt_deg(n);
  for (Index i = 0; i < n; ++i) {
    const double d = adjacency.row(i).sum();
    inv_sqrt_deg(i) = d > 0.0 ? 1.0 / std::sqrt(d) : 0.0;
  }
  Matrix lap = Matrix::Identity(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (adjacency(i, j) != 0.0) {
        lap(i, j) -= inv_sqrt_deg(i) * inv_sqrt_deg(j);
      }
    }
  }
  return lap;
}

Matrix binarize(const Matrix& corr, double threshold) {
  const Index n = corr.rows();
  if (corr.cols() != n) {
    throw DataError("binarize: matrix must be square, got (" +
                    std::to_string(n) + "x" + std::to_string(corr.cols()) + ")");
  }
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      if (std::abs(corr(i, j) - corr(j, i)) > 1e-9) {
        throw DataError("binarize: matrix asymmetric at (" + std::to_string(i) +
                        "," + std::to_string(j) + ")");
      }
      if (std::abs(corr(i, j)) > 1.0 + 1e-12) {
        throw DataError("binarize: entry outside [-1, 1] at (" +
                        std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }
  Matrix a = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      if (corr(i, j) > threshold) {
        a(i, j) = 1.0;
        a(j, i) = 1.0;
      }
    }
  }
  return a;
}

Graph build_graph(const Matrix& corr, double threshold, int label) {
  Graph g;
  g.n = corr.rows();
  g.adjacency = binarize(corr, threshold);
  g.laplacian = normalized_laplacian(g.adjacency);
  g.features = corr;
  g.label = label;
  return g;
}

Index edge_count(const Matrix& adjacency) {
  Index count = 0;
  for (Index i = 0; i < adjacency.rows(); ++i) {
    for (Index j = i + 1; j < adjacency.cols(); ++j) {
      if (adjacency(i, j) != 0.0) ++count;
    }
  }
  return count;
}

}  // namespace tsen
