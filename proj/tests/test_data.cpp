#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <fstream>
#include <set>

#include "doctest.h"
#include "testutil.hpp"
#include "tsen/checkpoint.hpp"
#include "tsen/config.hpp"
#include "tsen/dataset.hpp"
#include "tsen/errors.hpp"
#include "tsen/graph.hpp"

using namespace tsen;
using tsen::testing::max_abs_diff;
using tsen::testing::random_correlation;
using tsen::testing::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  REQUIRE(out.good());
  out << text;
}

}  // namespace

TEST_CASE("normalized Laplacian: hand-computed path and triangle graphs") {
  const double s2 = 1.0 / std::sqrt(2.0);

  // path 0-1-2: degrees (1, 2, 1)
  Matrix path(3, 3);
  path << 0, 1, 0, 1, 0, 1, 0, 1, 0;
  Matrix lp = normalized_laplacian(path);
  Matrix lp_expected(3, 3);
  lp_expected << 1, -s2, 0, -s2, 1, -s2, 0, -s2, 1;
  CHECK(max_abs_diff(lp, lp_expected) < 1e-15);

  // triangle: all degrees 2, off-diagonal -1/2
  Matrix tri(3, 3);
  tri << 0, 1, 1, 1, 0, 1, 1, 1, 0;
  Matrix lt = normalized_laplacian(tri);
  Matrix lt_expected(3, 3);
  lt_expected << 1, -0.5, -0.5, -0.5, 1, -0.5, -0.5, -0.5, 1;
  CHECK(max_abs_diff(lt, lt_expected) < 1e-15);
}

TEST_CASE("normalized Laplacian: isolated nodes keep identity rows") {
  // edge 0-1 plus isolated node 2: the d^{-1/2} = 0 convention leaves the
  // isolated row/column untouched instead of producing NaN
  Matrix a(3, 3);
  a << 0, 1, 0, 1, 0, 0, 0, 0, 0;
  Matrix l = normalized_laplacian(a);
  Matrix expected(3, 3);
  expected << 1, -1, 0, -1, 1, 0, 0, 0, 1;
  CHECK(max_abs_diff(l, expected) < 1e-15);
  CHECK(l.allFinite());

  // empty graph degenerates to the identity
  Matrix none = Matrix::Zero(4, 4);
  CHECK(max_abs_diff(normalized_laplacian(none), Matrix::Identity(4, 4)) == 0.0);
}

TEST_CASE("normalized Laplacian: input validation") {
  Matrix diag(2, 2);
  diag << 1, 0, 0, 0;
  CHECK_THROWS_AS(normalized_laplacian(diag), DataError);

  Matrix nonbinary(2, 2);
  nonbinary << 0, 0.5, 0.5, 0;
  CHECK_THROWS_AS(normalized_laplacian(nonbinary), DataError);

  Matrix asym(2, 2);
  asym << 0, 1, 0, 0;
  CHECK_THROWS_AS(normalized_laplacian(asym), DataError);

  CHECK_THROWS_AS(normalized_laplacian(Matrix::Zero(2, 3)), DataError);
}

TEST_CASE("normalized Laplacian: symmetric, eigenvalues within [0, 2]") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 4 + static_cast<Index>(rng.uniform_int(12));
    Matrix corr = random_correlation(n, rng);
    Matrix adj = binarize(corr, 0.2);
    Matrix l = normalized_laplacian(adj);
    CHECK(max_abs_diff(l, l.transpose()) < 1e-14);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(l);
    REQUIRE(es.info() == Eigen::Success);
    CHECK(es.eigenvalues().minCoeff() > -1e-12);
    CHECK(es.eigenvalues().maxCoeff() < 2.0 + 1e-12);
  }
}

TEST_CASE("binarize: strict threshold rule, exact symmetry, zero diagonal") {
  Matrix corr(3, 3);
  corr << 1.0, 0.2, 0.7, 0.2, 1.0, -0.4, 0.7, -0.4, 1.0;

  Matrix a = binarize(corr, 0.2);
  CHECK(a(0, 1) == 0.0);  // equal to threshold: no edge (strict >)
  CHECK(a(0, 2) == 1.0);
  CHECK(a(1, 2) == 0.0);  // negative correlation
  CHECK(a(0, 0) == 0.0);  // unit diagonal never becomes a self-loop
  CHECK(max_abs_diff(a, a.transpose()) == 0.0);

  CHECK(edge_count(a) == 1);
  Matrix all = binarize(corr, -1.0);  // everything above -1
  CHECK(edge_count(all) == 3);

  Matrix asym(2, 2);
  asym << 1.0, 0.3, 0.2, 1.0;
  CHECK_THROWS_AS(binarize(asym, 0.2), DataError);
  Matrix big(2, 2);
  big << 1.0, 1.5, 1.5, 1.0;
  CHECK_THROWS_AS(binarize(big, 0.2), DataError);
}

TEST_CASE("build_graph keeps weighted rows as features") {
  Rng rng(32);
  Matrix corr = random_correlation(6, rng);
  Graph g = build_graph(corr, 0.3, 1);
  CHECK(g.n == 6);
  CHECK(g.label == 1);
  CHECK(g.feature_dim() == 6);
  CHECK(max_abs_diff(g.features, corr) == 0.0);
  CHECK(max_abs_diff(g.adjacency, binarize(corr, 0.3)) == 0.0);
  CHECK(max_abs_diff(g.laplacian, normalized_laplacian(g.adjacency)) == 0.0);
}

TEST_CASE("matrix CSV round trip preserves doubles exactly") {
  TempDir tmp;
  Rng rng(33);
  Matrix m = tsen::testing::random_matrix(7, 5, rng);
  m(0, 0) = 1.0 / 3.0;
  m(1, 1) = -1e-17;
  m(2, 2) = 12345678.87654321;

  const auto path = tmp.file("m.csv");
  write_matrix_csv(path, m);
  Matrix back = read_matrix_csv(path);
  REQUIRE(back.rows() == 7);
  REQUIRE(back.cols() == 5);
  CHECK(max_abs_diff(m, back) == 0.0);  // bit-exact via round-trip formatting
}

TEST_CASE("matrix CSV rejects malformed input") {
  TempDir tmp;
  const auto ragged = tmp.file("ragged.csv");
  spit(ragged, "1,2,3\n4,5\n");
  CHECK_THROWS_AS(read_matrix_csv(ragged), DataError);

  const auto alpha = tmp.file("alpha.csv");
  spit(alpha, "1,x\n3,4\n");
  CHECK_THROWS_AS(read_matrix_csv(alpha), DataError);

  const auto empty = tmp.file("empty.csv");
  spit(empty, "");
  CHECK_THROWS_AS(read_matrix_csv(empty), DataError);

  CHECK_THROWS_AS(read_matrix_csv(tmp.file("missing.csv")), DataError);
}

TEST_CASE("manifest loading: labels, order, inference, validation") {
  TempDir tmp;
  Rng rng(34);
  for (int i = 0; i < 4; ++i) {
    write_matrix_csv(tmp.file("g" + std::to_string(i) + ".csv"),
                     random_correlation(5, rng));
  }
  spit(tmp.file("manifest.csv"),
       "subject_id,matrix_file,label\n"
       "s0,g0.csv,0\n"
       "s1,g1.csv,1\n"
       "s2,g2.csv,0\n"
       "s3,g3.csv,1\n");

  Dataset d = load_dataset(tmp.file("manifest.csv"), 0.2);
  CHECK(d.size() == 4);
  CHECK(d.class_count == 2);  // inferred max(label) + 1
  CHECK(d.graphs[1].label == 1);
  CHECK(d.graphs[2].label == 0);
  CHECK(d.feature_dim() == 5);
  CHECK(d.source == DatasetSource::ingested);

  // explicit class_count rejects out-of-range labels, naming the subject
  CHECK_THROWS_WITH_AS(load_dataset(tmp.file("manifest.csv"), 0.2, 1),
                       doctest::Contains("s1"), DataError);

  spit(tmp.file("bad_header.csv"), "id,file,y\ns0,g0.csv,0\n");
  CHECK_THROWS_AS(load_dataset(tmp.file("bad_header.csv"), 0.2), DataError);

  spit(tmp.file("bad_label.csv"),
       "subject_id,matrix_file,label\ns0,g0.csv,zero\n");
  CHECK_THROWS_AS(load_dataset(tmp.file("bad_label.csv"), 0.2), DataError);

  CHECK_THROWS_AS(load_dataset(tmp.file("nope.csv"), 0.2), DataError);
}

TEST_CASE("write_dataset / load_dataset round trip") {
  TempDir tmp;
  Dataset d = generate_synthetic(12, 8, 0.8, /*seed=*/5);
  const auto manifest = write_dataset(d, tmp.file("out"));
  Dataset back = load_dataset(manifest, 0.2, d.class_count);

  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.graphs[i].label == d.graphs[i].label);
    CHECK(max_abs_diff(back.graphs[i].features, d.graphs[i].features) == 0.0);
    CHECK(max_abs_diff(back.graphs[i].adjacency, d.graphs[i].adjacency) == 0.0);
  }
}

TEST_CASE("synthetic generator: shape, balance, validity, determinism") {
  Dataset d = generate_synthetic(20, 16, 0.8, /*seed=*/42);
  CHECK(d.size() == 20);
  CHECK(d.class_count == 2);
  CHECK(d.source == DatasetSource::synthetic);
  REQUIRE(d.generation_seed.has_value());
  CHECK(*d.generation_seed == 42);

  int ones = 0;
  for (const Graph& g : d.graphs) {
    ones += g.label;
    REQUIRE(g.n == 16);
    CHECK(g.feature_dim() == 16);
    // valid correlation matrix: symmetric, unit diagonal, entries in [-1, 1]
    CHECK(max_abs_diff(g.features, g.features.transpose()) < 1e-12);
    for (Index i = 0; i < g.n; ++i) {
      CHECK(g.features(i, i) == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(g.features.maxCoeff() <= 1.0 + 1e-12);
    CHECK(g.features.minCoeff() >= -1.0 - 1e-12);
  }
  CHECK(ones == 10);  // balanced classes

  Dataset d2 = generate_synthetic(20, 16, 0.8, 42);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(max_abs_diff(d.graphs[i].features, d2.graphs[i].features) == 0.0);
  }
  Dataset d3 = generate_synthetic(20, 16, 0.8, 43);
  CHECK(max_abs_diff(d.graphs[0].features, d3.graphs[0].features) > 1e-6);

  CHECK_THROWS_AS(generate_synthetic(9, 16, 0.8, 1), DataError);   // odd
  CHECK_THROWS_AS(generate_synthetic(20, 3, 0.8, 1), DataError);   // tiny
  CHECK_THROWS_AS(generate_synthetic(20, 16, 1.5, 1), DataError);  // signal
}

TEST_CASE("synthetic generator: planted structure is relational, not marginal") {
  // Four equal communities; the classes couple them in different pairs:
  // class 0 ties (0,1) and (2,3), class 1 ties (0,2) and (1,3). Node-level
  // marginals must therefore match across classes, while specific
  // cross-community blocks light up classwise.
  const int n = 20;  // communities are {0..4}, {5..9}, {10..14}, {15..19}
  Dataset d = generate_synthetic(40, n, 1.0, 9);
  auto community = [&](Index i) { return static_cast<int>(i) * 4 / n; };

  // Mean correlation over cell groups, accumulated per class.
  double within[2] = {0, 0}, pair01[2] = {0, 0}, pair02[2] = {0, 0};
  double offdiag[2] = {0, 0};
  int wn[2] = {0, 0}, p01n[2] = {0, 0}, p02n[2] = {0, 0}, on[2] = {0, 0};
  for (const Graph& g : d.graphs) {
    const int c = g.label;
    for (Index i = 0; i < g.n; ++i) {
      for (Index j = i + 1; j < g.n; ++j) {
        const double v = g.features(i, j);
        offdiag[c] += v;
        ++on[c];
        const int ci = community(i), cj = community(j);
        if (ci == cj) {
          within[c] += v;
          ++wn[c];
        } else if (ci == 0 && cj == 1) {
          pair01[c] += v;
          ++p01n[c];
        } else if (ci == 0 && cj == 2) {
          pair02[c] += v;
          ++p02n[c];
        }
      }
    }
  }
  for (int c = 0; c < 2; ++c) {
    within[c] /= wn[c];
    pair01[c] /= p01n[c];
    pair02[c] /= p02n[c];
    offdiag[c] /= on[c];
  }

  // Same global mean correlation: the classes are marginally matched.
  CHECK(std::abs(offdiag[0] - offdiag[1]) < 0.01);
  // Same within-community strength, and it dominates everything else.
  CHECK(std::abs(within[0] - within[1]) < 0.02);
  CHECK(within[0] > pair01[0] + 0.3);
  // The coupled block is hot exactly where the class says it should be
  // (expected coupled mean at full signal is near 0.11, uncoupled near 0).
  CHECK(pair01[0] > pair02[0] + 0.07);  // class 0 ties communities 0 and 1
  CHECK(pair02[1] > pair01[1] + 0.07);  // class 1 ties communities 0 and 2
}

TEST_CASE("split sizes follow floor(0.8N) / floor(0.1N) / remainder") {
  Dataset d = generate_synthetic(974, 4, 0.5, 3, 0.2);
  SplitPlan plan = split_dataset(d, 17);
  CHECK(plan.train.size() == 779);
  CHECK(plan.val.size() == 97);
  CHECK(plan.test.size() == 98);

  // disjoint cover of all graphs
  std::set<int> seen;
  for (int i : plan.train) seen.insert(i);
  for (int i : plan.val) seen.insert(i);
  for (int i : plan.test) seen.insert(i);
  CHECK(seen.size() == 974);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 973);

  // deterministic under the seed, different across seeds
  SplitPlan again = split_dataset(d, 17);
  CHECK(again.train == plan.train);
  CHECK(again.test == plan.test);
  SplitPlan other = split_dataset(d, 18);
  CHECK(other.train != plan.train);

  Dataset tiny = generate_synthetic(8, 4, 0.5, 3);
  CHECK_THROWS_AS(split_dataset(tiny, 1), DataError);
}

TEST_CASE("config: minimal synthetic file with defaults") {
  TempDir tmp;
  spit(tmp.file("cfg.json"), R"({
    "dataset": {"source": "synthetic"},
    "model": {},
    "train": {},
    "output": {"dir": "results"}
  })");
  ExperimentConfig cfg = parse_config(tmp.file("cfg.json").string());
  CHECK(cfg.dataset.source == "synthetic");
  CHECK(cfg.dataset.graphs == 400);
  CHECK(cfg.dataset.nodes == 50);
  CHECK(cfg.dataset.signal == 0.8);
  CHECK(cfg.dataset.threshold == 0.2);
  CHECK(cfg.model.variant == Variant::TSEN);
  CHECK(cfg.model.num_layers == 2);
  CHECK(cfg.model.hidden_dim == 64);
  CHECK(cfg.model.num_heads == 4);
  CHECK(cfg.model.effective_ffn_dim() == 256);
  CHECK(cfg.model.dropout_transformer == 0.1);
  CHECK(cfg.model.dropout_mlp == 0.5);
  CHECK(cfg.train.epochs == 300);
  CHECK(cfg.train.batch_size == 16);
  CHECK(cfg.train.repetitions == 5);
  CHECK(cfg.train.optim.base_lr == 1.0);
  CHECK(cfg.train.optim.weight_decay == 1e-4);
  CHECK(cfg.train.optim.warmup_steps == 1000);
  CHECK(cfg.train.optim.beta1 == 0.9);
  CHECK(cfg.train.optim.beta2 == 0.999);
  CHECK(cfg.output_dir == "results");
  CHECK(cfg.seed == 0);
}

TEST_CASE("config: rejection of unknown keys, bad types, bad ranges") {
  TempDir tmp;
  auto expect_config_error = [&](const std::string& body,
                                 const std::string& needle) {
    const auto p = tmp.file("bad.json");
    spit(p, body);
    CHECK_THROWS_WITH_AS(parse_config(p.string()), doctest::Contains(needle.c_str()),
                         ConfigError);
  };

  expect_config_error(R"({"dataset": {"source": "synthetic"}, "model": {},
                          "train": {}, "output": {"dir": "o"}, "extra": 1})",
                      "extra");
  expect_config_error(R"({"dataset": {"source": "synthetic", "thresold": 0.2},
                          "model": {}, "train": {}, "output": {"dir": "o"}})",
                      "thresold");
  expect_config_error(R"({"dataset": {"source": "synthetic"},
                          "model": {"num_heads": "four"}, "train": {},
                          "output": {"dir": "o"}})",
                      "model.num_heads");
  expect_config_error(R"({"dataset": {"source": "synthetic", "threshold": 1.0},
                          "model": {}, "train": {}, "output": {"dir": "o"}})",
                      "threshold");
  expect_config_error(R"({"dataset": {"source": "synthetic"}, "model": {},
                          "train": {"base_lr": 0}, "output": {"dir": "o"}})",
                      "base_lr");
  expect_config_error(R"({"dataset": {"source": "manifest"}, "model": {},
                          "train": {}, "output": {"dir": "o"}})",
                      "dataset.path");
  expect_config_error(R"({"dataset": {"source": "csv"}, "model": {},
                          "train": {}, "output": {"dir": "o"}})",
                      "source");

  // hidden_dim not divisible by heads is a model-level error
  expect_config_error(R"({"dataset": {"source": "synthetic"},
                          "model": {"hidden_dim": 30, "num_heads": 4},
                          "train": {}, "output": {"dir": "o"}})",
                      "model");

  const auto p = tmp.file("nonjson.json");
  spit(p, "not json at all {{{");
  CHECK_THROWS_AS(parse_config(p.string()), ConfigError);
  CHECK_THROWS_AS(parse_config((tmp.path() / "missing.json").string()), IoError);
}

TEST_CASE("config: TSEN_SEED environment override") {
  TempDir tmp;
  spit(tmp.file("cfg.json"), R"({
    "dataset": {"source": "synthetic"},
    "model": {}, "train": {}, "output": {"dir": "o"}, "seed": 5
  })");

  ExperimentConfig base = parse_config(tmp.file("cfg.json").string());
  CHECK(base.seed == 5);
  CHECK(base.train.seed == 5);

  setenv("TSEN_SEED", "99", 1);
  ExperimentConfig overridden = parse_config(tmp.file("cfg.json").string());
  CHECK(overridden.seed == 99);
  CHECK(overridden.train.seed == 99);

  setenv("TSEN_SEED", "12x", 1);
  CHECK_THROWS_AS(parse_config(tmp.file("cfg.json").string()), ConfigError);
  unsetenv("TSEN_SEED");
}

TEST_CASE("config: normalized echo reparses to the same configuration") {
  TempDir tmp;
  spit(tmp.file("cfg.json"), R"({
    "dataset": {"source": "synthetic", "graphs": 40, "nodes": 12,
                 "signal": 0.6, "seed": 11, "threshold": 0.25},
    "model": {"variant": "SBGCN_SA", "num_layers": 3, "hidden_dim": 32,
               "num_heads": 2},
    "train": {"epochs": 10, "batch_size": 4, "base_lr": 0.05,
               "warmup_steps": 20},
    "output": {"dir": "o"},
    "seed": 2
  })");
  ExperimentConfig cfg = parse_config(tmp.file("cfg.json").string());
  ExperimentConfig again = config_from_json(config_to_json(cfg));
  CHECK(again.dataset.graphs == 40);
  CHECK(again.dataset.threshold == 0.25);
  CHECK(again.model.variant == Variant::SBGCN_SA);
  CHECK(again.model.num_layers == 3);
  CHECK(again.model.hidden_dim == 32);
  CHECK(again.train.epochs == 10);
  CHECK(again.train.optim.base_lr == 0.05);
  CHECK(again.train.optim.warmup_steps == 20);
  CHECK(again.seed == 2);
  CHECK(config_to_json(again) == config_to_json(cfg));
}

TEST_CASE("config: load_config_dataset builds the configured dataset") {
  ExperimentConfig cfg;
  cfg.dataset.source = "synthetic";
  cfg.dataset.graphs = 12;
  cfg.dataset.nodes = 8;
  cfg.dataset.signal = 0.7;
  cfg.dataset.seed = 21;
  cfg.dataset.name = "smoke";
  Dataset d = load_config_dataset(cfg);
  CHECK(d.size() == 12);
  CHECK(d.name == "smoke");
  CHECK(d.feature_dim() == 8);
}

TEST_CASE("checkpoint: save/load round trip is value-exact") {
  TempDir tmp;
  ModelConfig mc;
  mc.variant = Variant::TSEN;
  mc.num_layers = 2;
  mc.hidden_dim = 16;
  mc.num_heads = 2;
  ModelParams p = init_params(mc, 10, 2, /*seed=*/7);

  const auto path = tmp.file("model.json").string();
  save_checkpoint(p, path);
  ModelParams q = load_checkpoint(path);

  CHECK(q.feature_dim == 10);
  CHECK(q.class_count == 2);
  CHECK(q.config.variant == Variant::TSEN);
  CHECK(q.config.hidden_dim == 16);
  CHECK(q.leaf_count() == p.leaf_count());

  std::vector<std::pair<std::string, Matrix>> original;
  p.for_each([&](const std::string& name, const Tensor& t) {
    original.emplace_back(name, t.value());
  });
  std::size_t i = 0;
  q.for_each([&](const std::string& name, const Tensor& t) {
    REQUIRE(i < original.size());
    CHECK(name == original[i].first);
    CHECK(max_abs_diff(t.value(), original[i].second) == 0.0);
    ++i;
  });
  CHECK(i == original.size());
}

TEST_CASE("checkpoint: malformed files are rejected as IoError") {
  TempDir tmp;
  CHECK_THROWS_AS(load_checkpoint((tmp.path() / "nope.json").string()), IoError);

  const auto garbled = tmp.file("garbled.json");
  spit(garbled, "{] not json");
  CHECK_THROWS_AS(load_checkpoint(garbled.string()), IoError);

  ModelConfig mc;
  mc.hidden_dim = 8;
  mc.num_heads = 2;
  ModelParams p = init_params(mc, 6, 2, 1);
  const auto good = tmp.file("good.json").string();
  save_checkpoint(p, good);

  // future format version
  {
    auto text = slurp(good);
    auto pos = text.find("\"format_version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, std::string("\"format_version\": 1").size(),
                 "\"format_version\": 2");
    const auto bad = tmp.file("version.json");
    spit(bad, text);
    CHECK_THROWS_AS(load_checkpoint(bad.string()), IoError);
  }

  // a missing parameter must be named in the error
  {
    auto text = slurp(good);
    auto pos = text.find("\"head.b2\"");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 9, "\"head.bX\"");
    const auto bad = tmp.file("renamed.json");
    spit(bad, text);
    CHECK_THROWS_WITH_AS(load_checkpoint(bad.string()),
                         doctest::Contains("head.b2"), IoError);
  }
}
