#include "tsen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "tsen/errors.hpp"
#include "tsen/rng.hpp"

namespace tsen {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

double parse_double(const std::string& s, const std::string& where) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    throw DataError(where + ": non-numeric value '" + s + "'");
  }
  return v;
}

}  // namespace

Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open matrix file " + path.string());

  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    std::vector<double> row;
    row.reserve(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
      row.push_back(parse_double(
          fields[j], path.string() + " row " + std::to_string(rows.size() + 1)));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DataError(path.string() + ": row " + std::to_string(rows.size() + 1) +
                      " has " + std::to_string(row.size()) + " values, expected " +
                      std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path.string() + ": empty matrix file");

  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return m;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write matrix file " + path.string());
  char buf[32];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      // %.17g round-trips doubles exactly
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      out << buf << (j + 1 < m.cols() ? "," : "");
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& manifest_path,
                     double threshold, int class_count) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest " + manifest_path.string());

  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != "subject_id,matrix_file,label") {
    throw DataError(manifest_path.string() +
                    ": expected header 'subject_id,matrix_file,label'");
  }
  const auto base_dir = manifest_path.parent_path();

  Dataset ds;
  ds.name = manifest_path.stem().string();
  ds.source = DatasetSource::ingested;
  int max_label = -1;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 3) {
      throw DataError(manifest_path.string() + ": malformed row '" + line + "'");
    }
    const std::string& subject = fields[0];
    const auto matrix_path = base_dir / fields[1];
    int label = 0;
    try {
      std::size_t pos = 0;
      label = std::stoi(fields[2], &pos);
      if (pos != fields[2].size()) throw std::invalid_argument(fields[2]);
    } catch (const std::exception&) {
      throw DataError("subject '" + subject + "': bad label '" + fields[2] + "'");
    }
    if (label < 0 || (class_count > 0 && label >= class_count)) {
      throw DataError("subject '" + subject + "': label " + std::to_string(label) +
                      " outside declared class set");
    }
    try {
      ds.graphs.push_back(build_graph(read_matrix_csv(matrix_path), threshold, label));
    } catch (const DataError& e) {
      throw DataError("subject '" + subject + "': " + e.what());
    }
    max_label = std::max(max_label, label);
  }
  if (ds.graphs.empty()) {
    throw DataError(manifest_path.string() + ": manifest lists no subjects");
  }
  for (const Graph& g : ds.graphs) {
    if (g.feature_dim() != ds.graphs.front().feature_dim()) {
      throw DataError(manifest_path.string() +
                      ": graphs disagree on feature dimension");
    }
  }
  ds.class_count = class_count > 0 ? class_count : max_label + 1;
  return ds;
}

std::filesystem::path write_dataset(const Dataset& dataset,
                                    const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string());

  const auto manifest_path = dir / "manifest.csv";
  std::ofstream manifest(manifest_path);
  if (!manifest) throw IoError("cannot write manifest " + manifest_path.string());
  manifest << "subject_id,matrix_file,label\n";
  char name[64];
  for (std::size_t g = 0; g < dataset.graphs.size(); ++g) {
    std::snprintf(name, sizeof(name), "matrix_%04zu.csv", g);
    write_matrix_csv(dir / name, dataset.graphs[g].features);
    std::snprintf(name, sizeof(name), "g%04zu,matrix_%04zu.csv,%d", g, g,
                  dataset.graphs[g].label);
    manifest << name << '\n';
  }
  if (!manifest) throw IoError("write failed for " + manifest_path.string());
  return manifest_path;
}

namespace {

// Planted factor layouts. Class 0: two coarse independent communities.
// Class 1: five finer communities coupled in a ring, giving the class a
// mid-scale correlation structure on top of the fine blocks.
constexpr int kTimePoints = 100;
constexpr double kMaxBlockCorrelation = 0.75;
// Share of a node's common variance carried by its community-pair factor.
// Kept well under the within-community share so the coupling is a faint,
// second-order trace rather than a block you can spot in a row mean.
constexpr double kPairShare = 0.15;

// Factor loadings for node i: list of (factor, weight), normalized to unit norm.
std::vector<std::pair<int, double>> node_loadings(int cls, int node, int n_nodes,
                                                  int& n_factors) {
  // Four contiguous communities with one latent factor each (0..3), plus two
  // pair factors (4, 5) shared by coupled communities. Class 0 couples
  // (0,1) and (2,3); class 1 couples (0,2) and (1,3). Every node carries the
  // same loading split either way, so the two classes match in all per-node
  // marginals (row means, degrees) and differ only in WHICH communities
  // co-fluctuate — a relational signal rather than a profile signal.
  n_factors = 6;
  const int community = std::min(3, node * 4 / n_nodes);
  const int pair_factor = 4 + (cls == 0 ? community / 2 : community % 2);
  return {{community, std::sqrt(1.0 - kPairShare)},
          {pair_factor, std::sqrt(kPairShare)}};
}

Matrix synthetic_correlation(int cls, int n_nodes, double signal, Rng& rng) {
  const double rho = signal * kMaxBlockCorrelation;
  const double factor_scale = std::sqrt(rho);
  const double noise_scale = std::sqrt(1.0 - rho);

  int n_factors = 0;
  std::vector<std::vector<std::pair<int, double>>> loadings(n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    loadings[static_cast<std::size_t>(i)] = node_loadings(cls, i, n_nodes, n_factors);
  }

  Matrix factors(kTimePoints, n_factors);
  for (Index t = 0; t < factors.rows(); ++t) {
    for (Index b = 0; b < factors.cols(); ++b) factors(t, b) = rng.normal();
  }
  Matrix series(kTimePoints, n_nodes);
  for (Index t = 0; t < series.rows(); ++t) {
    for (Index i = 0; i < series.cols(); ++i) {
      double common = 0.0;
      for (const auto& [b, w] : loadings[static_cast<std::size_t>(i)]) {
        common += w * factors(t, b);
      }
      series(t, i) = factor_scale * common + noise_scale * rng.normal();
    }
  }

  // Pearson correlation of the node series, computed from standardized columns.
  for (Index i = 0; i < series.cols(); ++i) {
    auto col = series.col(i);
    const double mu = col.mean();
    col.array() -= mu;
    const double sd = std::sqrt(col.squaredNorm() / kTimePoints);
    col /= sd;
  }
  Matrix corr = (series.transpose() * series) / static_cast<double>(kTimePoints);
  corr = ((corr + Matrix(corr.transpose())) * 0.5).eval();  // exact symmetry
  for (Index i = 0; i < corr.rows(); ++i) corr(i, i) = 1.0;
  return corr;
}

}  // namespace

Dataset generate_synthetic(int n_graphs, int n_nodes, double signal,
                           std::uint64_t seed, double threshold) {
  if (n_graphs <= 0 || n_graphs % 2 != 0) {
    throw DataError("generate_synthetic: n_graphs must be positive and even, got " +
                    std::to_string(n_graphs));
  }
  if (n_nodes < 4) {
    throw DataError("generate_synthetic: n_nodes must be >= 4, got " +
                    std::to_string(n_nodes));
  }
  if (signal < 0.0 || signal > 1.0) {
    throw DataError("generate_synthetic: signal must be in [0, 1], got " +
                    std::to_string(signal));
  }

  Dataset ds;
  ds.name = "synthetic";
  ds.source = DatasetSource::synthetic;
  ds.generation_seed = seed;
  ds.class_count = 2;
  ds.graphs.reserve(static_cast<std::size_t>(n_graphs));
  for (int g = 0; g < n_graphs; ++g) {
    const int cls = g % 2;
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(g));
    Matrix corr = synthetic_correlation(cls, n_nodes, signal, rng);
    ds.graphs.push_back(build_graph(corr, threshold, cls));
  }
  return ds;
}

SplitPlan split_dataset(const Dataset& dataset, std::uint64_t seed) {
  const int n = static_cast<int>(dataset.size());
  if (n < 10) {
    throw DataError("split_dataset: need at least 10 graphs, got " +
                    std::to_string(n));
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const int n_train = static_cast<int>(std::floor(0.8 * n));
  const int n_val = static_cast<int>(std::floor(0.1 * n));
  SplitPlan plan;
  plan.seed = seed;
  plan.train.assign(order.begin(), order.begin() + n_train);
  plan.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  plan.test.assign(order.begin() + n_train + n_val, order.end());
  return plan;
}

}  // namespace tsen
