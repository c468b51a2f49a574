#pragma once

#include "dtnt/data.hpp"
#include "dtnt/model.hpp"

namespace dtnt {

struct Hyperparams {
  double max_lr = 2e-3;
  double weight_decay = 0.05;
  int epochs = 50;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  enum class Schedule { Constant, Cosine };
  Schedule schedule = Schedule::Cosine;  // cosine decay from max_lr to 0
  enum class LossKind { Rmse, CrossEntropy };
  LossKind loss = LossKind::Rmse;
  uint64_t seed = 0;

  void validate() const;
  double lr_at(int epoch) const;
};

struct ConfusionMatrix {
  uint64_t tp = 0, tn = 0, fp = 0, fn = 0;  // positive class = "sedan" (index 0)
  uint64_t total() const { return tp + tn + fp + fn; }
};

// Eq-style metrics; undefined ratios come back as quiet NaN, never 0
struct MetricsResult {
  double accuracy, precision, recall, f1;
};
MetricsResult metrics(const ConfusionMatrix& cm);

struct EpochStats {
  int epoch;  // 1-based
  double lr;
  double train_loss;
  double train_acc;
  double test_acc;
  double seconds;
};

// sqrt(mean((probs - onehot)^2)) over all N*C entries, differentiable
template <typename T>
Tensor<T> rmse_loss(const Tensor<T>& probs, const std::vector<int>& labels);

// -mean(log p[label]), the sanity-comparison alternative
template <typename T>
Tensor<T> cross_entropy_loss(const Tensor<T>& probs, const std::vector<int>& labels);

template <typename T> struct AdamWState {
  std::vector<std::vector<T>> m, v;
  int64_t step = 0;
};

// one decoupled-weight-decay Adam step over all params; consumes and clears
// gradients; aborts (throws) on a non-finite gradient, naming the tensor
template <typename T>
void adamw_step(std::vector<std::pair<std::string, Tensor<T>>>& params,
                AdamWState<T>& state, double lr_t, const Hyperparams& hp);

// sedan (class 0) is the positive class; any other label counts as negative
ConfusionMatrix tally_confusion(const std::vector<int>& labels,
                                const std::vector<int64_t>& predictions);

template <typename T>
ConfusionMatrix evaluate(Model<T>& model, const LabeledDataset& ds,
                         const NormStats& stats);

template <typename T> struct TrainResult {
  std::vector<EpochStats> history;
  NormStats stats;
  ConfusionMatrix final_confusion;
  Model<T> best;
  int best_epoch = 0;
  double best_test_acc = 0.0;
};

// invoked after every epoch; returning false stops training early
using EpochCallback = std::function<bool(const EpochStats&)>;

// Per-epoch loop: shuffle into batches, then per batch forward (train mode),
// loss, backward and one optimizer step; evaluates the test set after each
// epoch and keeps the best-accuracy snapshot. Deterministic given hp.seed.
template <typename T>
TrainResult<T> train(Model<T>& model, const LabeledDataset& train_set,
                     const LabeledDataset& test_set, const Hyperparams& hp,
                     double batch_fraction = 0.01, const EpochCallback& on_epoch = {});

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);
void write_confusion_csv(const std::string& path, const ConfusionMatrix& cm);

// worker cap from DTNT_THREADS (defaults to hardware concurrency)
int worker_threads();

}  // namespace dtnt
