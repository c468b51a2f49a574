#include "dtnt/train.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

namespace dtnt {

void Hyperparams::validate() const {
  if (!(max_lr > 0)) fail_value("hyperparams: max_lr must be positive");
  if (weight_decay < 0) fail_value("hyperparams: weight_decay must be nonnegative");
  if (epochs < 0) fail_value("hyperparams: epochs must be nonnegative");
  if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1))
    fail_value("hyperparams: betas must lie in (0,1)");
  if (!(adam_eps > 0)) fail_value("hyperparams: adam_eps must be positive");
}

double Hyperparams::lr_at(int epoch) const {
  if (schedule == Schedule::Constant) return max_lr;
  return max_lr * 0.5 *
         (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(epoch) /
                         static_cast<double>(epochs)));
}

MetricsResult metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) fail_value("metrics: empty confusion matrix");
  constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
  MetricsResult r{};
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  r.precision = cm.tp + cm.fp > 0
                    ? static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp)
                    : kNan;
  r.recall = cm.tp + cm.fn > 0
                 ? static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn)
                 : kNan;
  if (std::isnan(r.precision) || std::isnan(r.recall) || r.precision + r.recall == 0.0)
    r.f1 = kNan;
  else
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

namespace {

template <typename T>
Tensor<T> one_hot(const std::vector<int>& labels, int64_t classes) {
  Tensor<T> t = Tensor<T>::zeros({static_cast<int64_t>(labels.size()), classes});
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes)
      fail_value("label " + std::to_string(labels[i]) + " out of range for " +
                 std::to_string(classes) + " classes");
    t.data()[i * static_cast<size_t>(classes) + static_cast<size_t>(labels[i])] = T(1);
  }
  return t;
}

template <typename T>
void check_probs(const Tensor<T>& probs, const std::vector<int>& labels) {
  if (probs.rank() != 2 || probs.dim(0) != static_cast<int64_t>(labels.size()))
    fail_shape("loss: probs " + shape_str(probs.shape()) + " vs " +
               std::to_string(labels.size()) + " labels");
}

}  // namespace

template <typename T>
Tensor<T> rmse_loss(const Tensor<T>& probs, const std::vector<int>& labels) {
  check_probs(probs, labels);
  Tensor<T> target = one_hot<T>(labels, probs.dim(1));
  Tensor<T> diff = add(probs, scale(target, T(-1)));
  Tensor<T> mean = scale(sum_all(mul(diff, diff)), T(1) / static_cast<T>(probs.numel()));
  return sqrt_elem(mean);
}

template <typename T>
Tensor<T> cross_entropy_loss(const Tensor<T>& probs, const std::vector<int>& labels) {
  check_probs(probs, labels);
  const int64_t n = probs.dim(0), c = probs.dim(1);
  std::vector<Tensor<T>> picked;
  picked.reserve(static_cast<size_t>(n));
  Tensor<T> flat = reshape(probs, {n * c});
  for (int64_t i = 0; i < n; ++i)
    picked.push_back(slice(flat, 0, i * c + labels[static_cast<size_t>(i)], 1));
  Tensor<T> stacked = concat(picked, 0);
  return scale(sum_all(log_elem(stacked)), T(-1) / static_cast<T>(n));
}

template <typename T>
void adamw_step(std::vector<std::pair<std::string, Tensor<T>>>& params,
                AdamWState<T>& state, double lr_t, const Hyperparams& hp) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].second.data().size(), T(0));
      state.v[i].assign(params[i].second.data().size(), T(0));
    }
  }
  if (state.m.size() != params.size())
    fail_value("adamw: state tracks " + std::to_string(state.m.size()) +
               " tensors, got " + std::to_string(params.size()));
  // validate before mutating anything so an aborted step leaves params intact
  for (auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad())
      if (!std::isfinite(static_cast<double>(g)))
        fail_numeric("adamw: non-finite gradient in '" + name + "', step aborted");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = params[i].second;
    std::vector<T>& values = p.data();
    const std::vector<T> zero_grad;
    const std::vector<T>& g = p.has_grad() ? p.grad() : zero_grad;
    std::vector<T>& m = state.m[i];
    std::vector<T>& v = state.v[i];
    for (size_t j = 0; j < values.size(); ++j) {
      const double gj = g.empty() ? 0.0 : static_cast<double>(g[j]);
      const double mj = hp.beta1 * static_cast<double>(m[j]) + (1.0 - hp.beta1) * gj;
      const double vj = hp.beta2 * static_cast<double>(v[j]) + (1.0 - hp.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      // decoupled decay, separate from the adaptive step
      double pj = static_cast<double>(values[j]);
      pj -= lr_t * hp.weight_decay * pj;
      pj -= lr_t * mhat / (std::sqrt(vhat) + hp.adam_eps);
      values[j] = static_cast<T>(pj);
    }
    p.zero_grad();
  }
}

int worker_threads() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("DTNT_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1 && static_cast<unsigned>(cap) < hw) hw = static_cast<unsigned>(cap);
  }
  return static_cast<int>(hw);
}

namespace {

// deterministic fan-out: results land by index, reduction order is fixed
void parallel_for(size_t n, const std::function<void(size_t)>& body) {
  const int threads = worker_threads();
  if (threads <= 1 || n < 2) {
    for (size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  const int used = static_cast<int>(std::min<size_t>(static_cast<size_t>(threads), n));
  for (int t = 0; t < used; ++t)
    pool.emplace_back([&]() {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  for (std::thread& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

ConfusionMatrix tally_confusion(const std::vector<int>& labels,
                                const std::vector<int64_t>& predictions) {
  if (labels.size() != predictions.size())
    fail_value("tally: " + std::to_string(labels.size()) + " labels vs " +
               std::to_string(predictions.size()) + " predictions");
  ConfusionMatrix cm;
  for (size_t i = 0; i < labels.size(); ++i) {
    const bool actual_sedan = labels[i] == 0;
    const bool predicted_sedan = predictions[i] == 0;
    if (actual_sedan && predicted_sedan)
      ++cm.tp;
    else if (!actual_sedan && !predicted_sedan)
      ++cm.tn;
    else if (!actual_sedan && predicted_sedan)
      ++cm.fp;
    else
      ++cm.fn;
  }
  return cm;
}

template <typename T>
ConfusionMatrix evaluate(Model<T>& model, const LabeledDataset& ds,
                         const NormStats& stats) {
  if (ds.items.empty()) fail_value("evaluate: empty dataset");
  if (static_cast<int64_t>(ds.class_names.size()) != model.cfg.classes)
    fail_value("evaluate: model has " + std::to_string(model.cfg.classes) +
               " classes, dataset has " + std::to_string(ds.class_names.size()));
  std::vector<int64_t> predictions(ds.items.size());
  std::vector<int> labels(ds.items.size());
  parallel_for(ds.items.size(), [&](size_t i) {
    const Tensor<float>& img = ds.items[i].image;
    Tensor<float> std_img = standardize(img, stats);
    Tensor<T> input = Tensor<T>::zeros({1, img.dim(0), img.dim(1), img.dim(2)});
    for (size_t j = 0; j < std_img.data().size(); ++j)
      input.data()[j] = static_cast<T>(std_img.data()[j]);
    Tensor<T> probs = model_forward(model, input, Mode::Eval);
    predictions[i] = predict(probs);
    labels[i] = ds.items[i].label;
  });
  return tally_confusion(labels, predictions);
}

template <typename T>
TrainResult<T> train(Model<T>& model, const LabeledDataset& train_set,
                     const LabeledDataset& test_set, const Hyperparams& hp,
                     double batch_fraction, const EpochCallback& on_epoch) {
  hp.validate();
  if (train_set.items.empty() || test_set.items.empty())
    fail_value("train: empty dataset");
  if (static_cast<int64_t>(train_set.class_names.size()) != model.cfg.classes)
    fail_value("train: model has " + std::to_string(model.cfg.classes) +
               " classes, dataset has " + std::to_string(train_set.class_names.size()));

  TrainResult<T> result;
  result.stats = compute_norm_stats(train_set);

  std::vector<std::pair<std::string, Tensor<T>>> params;
  visit_params<T>(model, [&](const std::string& name, Tensor<T>& t) {
    params.emplace_back(name, t);
  });
  AdamWState<T> opt_state;

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = hp.lr_at(epoch);
    auto batches =
        make_batches(train_set, batch_fraction,
                     Rng::mix(hp.seed, 0xe90c0000ULL + static_cast<uint64_t>(epoch)));
    // batch norm cannot train on a single sample; fold a trailing singleton
    // into the previous batch so the epoch still covers every item once
    if (batches.size() > 1 && batches.back().size() == 1) {
      batches[batches.size() - 2].push_back(batches.back()[0]);
      batches.pop_back();
    }
    double loss_sum = 0.0;
    uint64_t correct = 0;
    for (size_t b = 0; b < batches.size(); ++b) {
      auto [batch, labels] = assemble_batch(train_set, batches[b], result.stats);
      Tensor<T> input = Tensor<T>::zeros(batch.shape());
      for (size_t j = 0; j < batch.data().size(); ++j)
        input.data()[j] = static_cast<T>(batch.data()[j]);

      Tape<T> tape;
      TapeScope<T> scope(tape);
      Tensor<T> probs = model_forward(model, input, Mode::Train);
      Tensor<T> loss = hp.loss == Hyperparams::LossKind::Rmse
                           ? rmse_loss(probs, labels)
                           : cross_entropy_loss(probs, labels);
      const double loss_value = static_cast<double>(loss.item());
      if (!std::isfinite(loss_value))
        fail_numeric("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                     " batch " + std::to_string(b + 1));
      loss_sum += loss_value * static_cast<double>(labels.size());
      for (size_t r = 0; r < labels.size(); ++r) {
        const T* pr = probs.data().data() + r * static_cast<size_t>(probs.dim(1));
        int64_t best = 0;
        for (int64_t c = 1; c < probs.dim(1); ++c)
          if (pr[c] > pr[best]) best = c;
        if (best == labels[r]) ++correct;
      }
      backward(loss);
      adamw_step(params, opt_state, lr, hp);
    }

    const ConfusionMatrix test_cm = evaluate(model, test_set, result.stats);
    const double test_acc = metrics(test_cm).accuracy;
    const auto t1 = std::chrono::steady_clock::now();
    EpochStats es;
    es.epoch = epoch + 1;
    es.lr = lr;
    es.train_loss = loss_sum / static_cast<double>(train_set.items.size());
    es.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.items.size());
    es.test_acc = test_acc;
    es.seconds = std::chrono::duration<double>(t1 - t0).count();
    result.history.push_back(es);
    result.final_confusion = test_cm;

    if (result.best_epoch == 0 || test_acc > result.best_test_acc) {
      result.best = clone_model(model);
      result.best_epoch = epoch + 1;
      result.best_test_acc = test_acc;
    }
    if (on_epoch && !on_epoch(es)) break;
  }
  return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
  std::ofstream os(path);
  if (!os) fail_io("cannot write '" + path + "'");
  os << "# dtnt-history-v1\n";
  os << "epoch,lr,train_loss,train_acc,test_acc,seconds\n";
  char buf[256];
  for (const EpochStats& e : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.6f,%.6f,%.3f\n", e.epoch, e.lr,
                  e.train_loss, e.train_acc, e.test_acc, e.seconds);
    os << buf;
  }
}

void write_confusion_csv(const std::string& path, const ConfusionMatrix& cm) {
  std::ofstream os(path);
  if (!os) fail_io("cannot write '" + path + "'");
  os << "# dtnt-confusion-v1\n";
  os << "tp,tn,fp,fn,accuracy,precision,recall,f1\n";
  const MetricsResult m = metrics(cm);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%llu,%llu,%llu,%llu,%.6f,%.6f,%.6f,%.6f\n",
                static_cast<unsigned long long>(cm.tp),
                static_cast<unsigned long long>(cm.tn),
                static_cast<unsigned long long>(cm.fp),
                static_cast<unsigned long long>(cm.fn), m.accuracy, m.precision, m.recall,
                m.f1);
  os << buf;
}

#define DTNT_INSTANTIATE_TRAIN(T)                                                      \
  template Tensor<T> rmse_loss<T>(const Tensor<T>&, const std::vector<int>&);          \
  template Tensor<T> cross_entropy_loss<T>(const Tensor<T>&, const std::vector<int>&); \
  template void adamw_step<T>(std::vector<std::pair<std::string, Tensor<T>>>&,         \
                              AdamWState<T>&, double, const Hyperparams&);             \
  template ConfusionMatrix evaluate<T>(Model<T>&, const LabeledDataset&,               \
                                       const NormStats&);                              \
  template TrainResult<T> train<T>(Model<T>&, const LabeledDataset&,                   \
                                   const LabeledDataset&, const Hyperparams&, double,  \
                                   const EpochCallback&);

DTNT_INSTANTIATE_TRAIN(float)
DTNT_INSTANTIATE_TRAIN(double)

#undef DTNT_INSTANTIATE_TRAIN

}  // namespace dtnt
