#include "tsen/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <memory>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "tsen/errors.hpp"

namespace tsen {

namespace {

// Stream tags keeping the trainer's random decisions independent of each
// other and of parameter initialization.
constexpr std::uint64_t kStreamShuffle = 0x73687566;  // "shuf"
constexpr std::uint64_t kStreamDropout = 0x64726f70;  // "drop"

}  // namespace

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const Matrix& z = logits.value();
  const Index b = z.rows(), c = z.cols();
  if (b < 1 || c < 1) {
    throw std::invalid_argument("cross_entropy: empty logits matrix");
  }
  if (static_cast<Index>(labels.size()) != b) {
    throw std::invalid_argument(
        "cross_entropy: " + std::to_string(labels.size()) + " labels for " +
        std::to_string(b) + " logit rows");
  }
  for (int label : labels) {
    if (label < 0 || label >= c) {
      throw std::invalid_argument("cross_entropy: label " +
                                  std::to_string(label) +
                                  " outside [0, " + std::to_string(c) + ")");
    }
  }
  if (!z.allFinite()) throw NumericError("cross_entropy: non-finite logits");

  Matrix probs(b, c);
  double total = 0.0;
  for (Index i = 0; i < b; ++i) {
    const double mx = z.row(i).maxCoeff();
    const Eigen::ArrayXd shifted = z.row(i).array() - mx;
    const double log_sum = std::log(shifted.exp().sum());
    probs.row(i) = (shifted - log_sum).exp().matrix();
    // Grouping the two large terms keeps the loss exact when logits are
    // huge but the gap is small.
    total += log_sum + (mx - z(i, labels[i]));
  }

  Tensor out(Matrix(Matrix::Constant(1, 1, total / static_cast<double>(b))));
  if (Tape* tape = Tape::joint({&logits})) {
    const int pz = Tape::node_of(logits);
    int id = tape->record_node(
        1, 1,
        [probs = std::move(probs), labels, pz, b](const Matrix& g, Tape& tp) {
          Matrix dz = probs;
          for (Index i = 0; i < dz.rows(); ++i) dz(i, labels[i]) -= 1.0;
          dz *= g(0, 0) / static_cast<double>(b);
          tp.add_grad(pz, dz);
        });
    Tape::bind(out, tape, id);
  }
  return out;
}

double lr_schedule(double base_lr, int warmup_steps, int step) {
  if (step < 1) {
    throw std::invalid_argument("lr_schedule: step is 1-based, got " +
                                std::to_string(step));
  }
  const double s = static_cast<double>(step);
  if (warmup_steps <= 0) return base_lr / std::sqrt(s);
  const double w = static_cast<double>(warmup_steps);
  return base_lr * std::min(s / w, std::sqrt(w / s));
}

// --- AdamW -------------------------------------------------------------------

AdamW::AdamW(std::vector<Tensor> leaves, AdamWConfig config)
    : leaves_(std::move(leaves)), config_(config) {
  if (!(config_.beta1 >= 0 && config_.beta1 < 1) ||
      !(config_.beta2 >= 0 && config_.beta2 < 1)) {
    throw ConfigError("AdamW: betas must lie in [0, 1)");
  }
  if (config_.eps <= 0) throw ConfigError("AdamW: eps must be > 0");
  if (config_.weight_decay < 0) throw ConfigError("AdamW: weight_decay must be >= 0");
  m_.reserve(leaves_.size());
  v_.reserve(leaves_.size());
  for (Tensor& t : leaves_) {
    // Marking leaves trainable up front also makes later concurrent forward
    // passes read-only with respect to the shared parameter storage.
    t.set_requires_grad(true);
    m_.push_back(Matrix::Zero(t.rows(), t.cols()));
    v_.push_back(Matrix::Zero(t.rows(), t.cols()));
  }
}

void AdamW::step() {
  ++step_;
  const double lr_t = lr_schedule(config_.base_lr, config_.warmup_steps, step_);
  const double bc1 = 1.0 - std::pow(config_.beta1, step_);
  const double bc2 = 1.0 - std::pow(config_.beta2, step_);
  for (std::size_t i = 0; i < leaves_.size(); ++i) {
    const Matrix& g = leaves_[i].grad();
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    Matrix& theta = leaves_[i].value();
    theta.array() -= lr_t * ((m_[i].array() / bc1) /
                                 ((v_[i].array() / bc2).sqrt() + config_.eps) +
                             config_.weight_decay * theta.array());
  }
}

void AdamW::zero_grad() {
  for (Tensor& t : leaves_) t.zero_grad();
}

double AdamW::current_lr() const {
  return step_ == 0 ? 0.0
                    : lr_schedule(config_.base_lr, config_.warmup_steps, step_);
}

// --- evaluation ----------------------------------------------------------------

Metrics evaluate(const ModelParams& params, const Dataset& data,
                 const std::vector<int>& indices) {
  if (indices.empty()) {
    throw std::invalid_argument("evaluate: empty index list");
  }
  long correct = 0, tp = 0, fp = 0, fn = 0;
  for (int idx : indices) {
    const Graph& g = data.graphs.at(static_cast<std::size_t>(idx));
    const int pred = predict(forward(g, params, /*training=*/false));
    if (pred == g.label) ++correct;
    if (pred == 1 && g.label == 1) ++tp;
    if (pred == 1 && g.label != 1) ++fp;
    if (pred != 1 && g.label == 1) ++fn;
  }
  Metrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
  const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  m.f1 = precision + recall > 0 ? 2.0 * precision * recall / (precision + recall)
                                : 0.0;
  return m;
}

// --- training loop ---------------------------------------------------------------

namespace {

// Runs fn(0..count-1), spreading slots over `jobs` threads. fn must not throw;
// exceptions are reported through the caller's per-slot exception slots.
void parallel_slots(std::size_t count, int jobs,
                    const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t s = 0; s < count; ++s) fn(s);
    return;
  }
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t s; (s = next.fetch_add(1)) < count;) fn(s);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

TrainReport train(ModelParams& params, const Dataset& data,
                  const SplitPlan& split, const TrainConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  params.config.validate();
  if (config.epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (config.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (config.jobs < 1) throw ConfigError("train.jobs must be >= 1");
  if (split.train.empty()) throw DataError("train: empty training split");
  if (split.val.empty()) throw DataError("train: empty validation split");
  if (split.test.empty()) throw DataError("train: empty test split");

  std::vector<Tensor> leaves;
  params.for_each([&](const std::string&, Tensor& t) { leaves.push_back(t); });
  AdamW optimizer(leaves, config.optim);

  TrainReport report;
  report.variant = to_string(params.config.variant);
  report.dataset = data.name;
  report.seed = config.seed;
  report.epochs_run = config.epochs;
  report.batch_size = config.batch_size;
  report.base_lr = config.optim.base_lr;
  report.weight_decay = config.optim.weight_decay;
  report.warmup_steps = config.optim.warmup_steps;

  ModelParams best = params.clone();
  double best_val = -1.0;
  int best_epoch = 0;
  int global_step = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<int> order = split.train;
    Rng shuffle_rng =
        Rng::stream(config.seed, kStreamShuffle, static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t bsz = std::min<std::size_t>(
          static_cast<std::size_t>(config.batch_size), order.size() - start);
      ++global_step;

      std::vector<std::unique_ptr<Tape>> tapes(bsz);
      std::vector<double> losses(bsz, 0.0);
      std::vector<std::exception_ptr> errors(bsz);

      parallel_slots(bsz, config.jobs, [&](std::size_t s) {
        try {
          const Graph& g = data.graphs.at(static_cast<std::size_t>(order[start + s]));
          auto tape = std::make_unique<Tape>();
          Rng drop_rng = Rng::stream(config.seed, kStreamDropout,
                                     static_cast<std::uint64_t>(global_step),
                                     static_cast<std::uint64_t>(s));
          Tensor loss = cross_entropy(
              forward(g, params, /*training=*/true, &drop_rng, tape.get()),
              {g.label});
          losses[s] = loss(0, 0);
          tape->backward(loss, /*deposit=*/false);
          tapes[s] = std::move(tape);
        } catch (...) {
          errors[s] = std::current_exception();
        }
      });

      const std::string where = "epoch " + std::to_string(epoch) + ", step " +
                                std::to_string(global_step);
      for (std::size_t s = 0; s < bsz; ++s) {
        if (errors[s]) {
          try {
            std::rethrow_exception(errors[s]);
          } catch (const NumericError& e) {
            throw NumericError("training diverged at " + where + ": " + e.what());
          }
          // anything else propagates as-is
        }
        if (!std::isfinite(losses[s])) {
          throw NumericError("training diverged at " + where +
                             ": non-finite loss");
        }
        epoch_loss += losses[s];
      }

      // Deposit per-graph gradients in batch order: the sum is bitwise
      // identical no matter how many worker threads computed the tapes.
      optimizer.zero_grad();
      const double inv_b = 1.0 / static_cast<double>(bsz);
      for (std::size_t s = 0; s < bsz; ++s) {
        for (Tensor& leaf : leaves) {
          leaf.grad() += inv_b * tapes[s]->grad_of(leaf);
        }
      }
      optimizer.step();
    }

    report.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    const Metrics val = evaluate(params, data, split.val);
    report.val_accuracy.push_back(val.accuracy);
    if (val.accuracy > best_val) {  // strict: earliest epoch wins ties
      best_val = val.accuracy;
      best = params.clone();
      best_epoch = epoch;
    }
    if (config.verbose) {
      std::fprintf(stderr, "[%s seed %llu] epoch %d/%d loss %.4f val %.4f\n",
                   report.variant.c_str(),
                   static_cast<unsigned long long>(config.seed), epoch,
                   config.epochs, report.train_loss.back(), val.accuracy);
    }
  }

  if (config.epochs > 0) {
    params = best;  // leave the caller's model at the selected snapshot
    report.best_epoch = best_epoch;
    report.best_val_accuracy = best_val;
  } else {
    report.best_epoch = 0;
    report.best_val_accuracy = evaluate(params, data, split.val).accuracy;
  }
  report.test = evaluate(params, data, split.test);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  return report;
}

// --- experiment aggregation ------------------------------------------------------

std::pair<double, double> mean_and_std(const std::vector<double>& values) {
  if (values.empty()) {
    throw std::invalid_argument("mean_and_std: empty sample");
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size()))};
}

std::string format_mean_std(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f±%.2f", 100.0 * mean, 100.0 * std);
  return std::string(buf);
}

ExperimentSummary run_experiment(const ModelConfig& model_config,
                                 const Dataset& data, const TrainConfig& config,
                                 std::uint64_t base_seed,
                                 const RepObserver& on_rep) {
  const int reps = config.repetitions;
  if (reps < 1) throw ConfigError("train.repetitions must be >= 1");
  model_config.validate();

  ExperimentSummary summary;
  summary.variant = to_string(model_config.variant);
  summary.dataset = data.name;

  std::vector<double> accs, f1s;
  for (int r = 0; r < reps; ++r) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(r);
    SplitPlan split = split_dataset(data, seed);
    ModelParams params =
        init_params(model_config, data.feature_dim(), data.class_count, seed);
    TrainConfig rep_config = config;
    rep_config.seed = seed;
    TrainReport report = train(params, data, split, rep_config);
    if (on_rep) on_rep(r, report, params);
    accs.push_back(report.test.accuracy);
    f1s.push_back(report.test.f1);
    summary.reports.push_back(std::move(report));
  }
  std::tie(summary.acc_mean, summary.acc_std) = mean_and_std(accs);
  std::tie(summary.f1_mean, summary.f1_std) = mean_and_std(f1s);
  return summary;
}

std::string report_to_json(const TrainReport& report) {
  nlohmann::json j;
  j["variant"] = report.variant;
  j["dataset"] = report.dataset;
  j["seed"] = report.seed;
  j["epochs_run"] = report.epochs_run;
  j["best_epoch"] = report.best_epoch;
  j["best_val_accuracy"] = report.best_val_accuracy;
  j["test"] = {{"accuracy", report.test.accuracy}, {"f1", report.test.f1}};
  j["train_loss"] = report.train_loss;
  j["val_accuracy"] = report.val_accuracy;
  j["wall_seconds"] = report.wall_seconds;
  j["config"] = {{"batch_size", report.batch_size},
                 {"base_lr", report.base_lr},
                 {"weight_decay", report.weight_decay},
                 {"warmup_steps", report.warmup_steps}};
  return j.dump(2);
}

}  // namespace tsen
