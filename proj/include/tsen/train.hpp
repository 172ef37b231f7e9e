#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsen/dataset.hpp"
#include "tsen/model.hpp"
#include "tsen/tensor.hpp"

namespace tsen {

/// Mean cross-entropy of a B x C logits matrix against integer labels,
/// computed through log-sum-exp so large logits cannot overflow. Returns a
/// 1 x 1 tensor; the backward rule is the fused (softmax - onehot) / B.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Noam-style schedule: base_lr * min(step / warmup, sqrt(warmup / step)) for
/// 1-based steps, i.e. linear warmup into inverse-square-root decay. A
/// warmup of 0 degenerates to pure inverse-square-root decay.
double lr_schedule(double base_lr, int warmup_steps, int step);

struct AdamWConfig {
  double base_lr = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  int warmup_steps = 1000;
};

/// AdamW with decoupled weight decay over a fixed list of parameter leaves:
///   m <- b1 m + (1-b1) g          v <- b2 v + (1-b2) g^2
///   theta <- theta - lr_t (m_hat / (sqrt(v_hat) + eps) + wd * theta)
/// where lr_t follows lr_schedule. step() consumes the gradients deposited in
/// each leaf's grad buffer; it does not clear them.
class AdamW {
 public:
  AdamW(std::vector<Tensor> leaves, AdamWConfig config);

  void step();
  void zero_grad();
  int step_count() const { return step_; }
  double current_lr() const;  // lr of the most recent step (0 before any)

 private:
  std::vector<Tensor> leaves_;
  std::vector<Matrix> m_, v_;
  AdamWConfig config_;
  int step_ = 0;
};

struct TrainConfig {
  int epochs = 300;
  int batch_size = 16;
  int repetitions = 5;
  AdamWConfig optim;
  std::uint64_t seed = 0;
  int jobs = 1;       // worker threads for per-graph gradient passes
  bool verbose = false;
};

struct Metrics {
  double accuracy = 0.0;
  double f1 = 0.0;  // binary F1 of class 1; 0 when precision+recall is 0
};

struct TrainReport {
  std::string variant;
  std::string dataset;
  std::uint64_t seed = 0;
  int epochs_run = 0;
  int best_epoch = 0;  // 1-based; 0 means the untrained initial parameters
  double best_val_accuracy = 0.0;
  Metrics test;
  std::vector<double> train_loss;    // mean per-example loss, one per epoch
  std::vector<double> val_accuracy;  // one per epoch
  double wall_seconds = 0.0;
  int batch_size = 0;                // config snapshot, for the JSON report
  double base_lr = 0.0;
  double weight_decay = 0.0;
  int warmup_steps = 0;
};

std::string report_to_json(const TrainReport& report);

/// Accuracy and F1 of `params` on the listed graphs (evaluation mode, no
/// dropout). Does not modify the parameters.
Metrics evaluate(const ModelParams& params, const Dataset& data,
                 const std::vector<int>& indices);

/// Minibatch training with AdamW and the warmup schedule. Per-epoch shuffle,
/// per-graph backward passes accumulated in batch order (bitwise identical
/// for any `jobs` value), model selection by best validation accuracy
/// (earliest epoch wins ties), final metrics from the selected snapshot on
/// the test split. `params` is left at the selected snapshot. Throws
/// NumericError if the loss stops being finite.
TrainReport train(ModelParams& params, const Dataset& data,
                  const SplitPlan& split, const TrainConfig& config);

struct ExperimentSummary {
  std::string variant;
  std::string dataset;
  std::vector<TrainReport> reports;
  double acc_mean = 0.0, acc_std = 0.0;
  double f1_mean = 0.0, f1_std = 0.0;
};

/// Repeats split/init/train `config.repetitions` times with seeds
/// base_seed + r and aggregates test metrics as mean and population standard
/// deviation. `on_rep`, when set, observes each repetition's report and
/// selected parameters (e.g. for checkpointing).
using RepObserver =
    std::function<void(int rep, const TrainReport&, const ModelParams&)>;

ExperimentSummary run_experiment(const ModelConfig& model_config,
                                 const Dataset& data, const TrainConfig& config,
                                 std::uint64_t base_seed,
                                 const RepObserver& on_rep = {});

/// "72.31±1.85": mean and population std of a fraction, rendered in percent.
std::string format_mean_std(double mean, double std);

/// Mean and population standard deviation of a sample.
std::pair<double, double> mean_and_std(const std::vector<double>& values);

}  // namespace tsen
