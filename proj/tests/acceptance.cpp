// Acceptance suite: one scaled-down, fully pinned check per criterion.
// Run all with no arguments or a single one with --criterion N.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dtnt/checkpoint.hpp"
#include "dtnt/cli.hpp"
#include "dtnt/fog.hpp"
#include "dtnt/gradcheck_suite.hpp"
#include "dtnt/train.hpp"

using namespace dtnt;
namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path path;
  explicit Scratch(const std::string& tag) {
    path = fs::temp_directory_path() / ("dtnt_acc_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Scratch() { fs::remove_all(path); }
  std::string str(const std::string& sub) const { return (path / sub).string(); }
};

std::vector<char> read_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail_io("cannot read '" + path + "'");
  return std::vector<char>(std::istreambuf_iterator<char>(is),
                           std::istreambuf_iterator<char>());
}

double elapsed_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. gradient fidelity for every primitive and the composed blocks
bool criterion_1(std::ostream& os) {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  for (const GradCheckEntry& e : run_gradcheck_suite()) {
    if (!e.passed()) {
      os << "  " << e.name << " max_err " << e.max_err << " exceeds " << e.threshold
         << "\n";
      ok = false;
    }
  }
  const double secs = elapsed_since(t0);
  os << "  gradcheck suite finished in " << format_fixed(secs, 1) << "s\n";
  if (secs >= 120.0) {
    os << "  exceeded the 2 minute budget\n";
    ok = false;
  }
  return ok;
}

// 2. fog model exactness and invariants
bool criterion_2(std::ostream& os) {
  bool ok = true;
  const double t = transmission(0.08, 8.0);
  const double oracle = static_cast<double>(expl(-0.64L));
  if (std::abs(t - oracle) >= 1e-12) {
    os << "  transmission(0.08, 8) off by " << std::abs(t - oracle) << "\n";
    ok = false;
  }

  Rng rng(20240801);
  for (int trial = 0; trial < 100 && ok; ++trial) {
    Tensor<float> img = Tensor<float>::zeros({1, 64, 64});
    for (float& v : img.data()) v = static_cast<float>(rng.uniform01());
    FogParams zero = FogParams::make(0.0, 64, 64);
    if (apply_fog(img, zero).image.data() != img.data()) {
      os << "  beta=0 is not the identity\n";
      ok = false;
    }
    Tensor<float> airlight = Tensor<float>::filled({1, 64, 64}, 0.5f);
    FogParams heavy = FogParams::make(kFogHeavy, 64, 64);
    if (apply_fog(airlight, heavy).image.data() != airlight.data()) {
      os << "  0.5 is not a fixed point\n";
      ok = false;
    }
    Tensor<float> fogged = apply_fog(img, heavy).image;
    for (size_t i = 0; i < img.data().size(); ++i) {
      if (std::abs(fogged.data()[i] - 0.5) > std::abs(img.data()[i] - 0.5) + 1e-7) {
        os << "  contraction violated at pixel " << i << "\n";
        ok = false;
        break;
      }
    }
  }
  return ok;
}

// 3. metric formulas equal brute-force tallies over random lists
bool criterion_3(std::ostream& os) {
  Rng rng(31337);
  for (int trial = 0; trial < 1000; ++trial) {
    const size_t n = 1 + rng.index(60);
    std::vector<int> labels;
    std::vector<int64_t> preds;
    for (size_t i = 0; i < n; ++i) {
      labels.push_back(static_cast<int>(rng.index(2)));
      preds.push_back(static_cast<int64_t>(rng.index(2)));
    }
    uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < n; ++i) {
      tp += labels[i] == 0 && preds[i] == 0;
      tn += labels[i] == 1 && preds[i] == 1;
      fp += labels[i] == 1 && preds[i] == 0;
      fn += labels[i] == 0 && preds[i] == 1;
    }
    const ConfusionMatrix cm = tally_confusion(labels, preds);
    if (cm.tp != tp || cm.tn != tn || cm.fp != fp || cm.fn != fn) {
      os << "  tally mismatch on trial " << trial << "\n";
      return false;
    }
    const MetricsResult m = metrics(cm);
    const auto close = [](double got, uint64_t num, uint64_t den) {
      return std::abs(got - static_cast<double>(num) / static_cast<double>(den)) < 1e-12;
    };
    if (!close(m.accuracy, tp + tn, n)) {
      os << "  accuracy mismatch on trial " << trial << "\n";
      return false;
    }
    if (tp + fp > 0 && !close(m.precision, tp, tp + fp)) {
      os << "  precision mismatch on trial " << trial << "\n";
      return false;
    }
    if (tp + fn > 0 && !close(m.recall, tp, tp + fn)) {
      os << "  recall mismatch on trial " << trial << "\n";
      return false;
    }
    if (tp + fp > 0 && tp + fn > 0 && tp > 0) {
      const double f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
      if (std::abs(m.f1 - f1) >= 1e-12) {
        os << "  f1 mismatch on trial " << trial << "\n";
        return false;
      }
    }
  }
  return true;
}

// 4. overfit smoke: 32 synthetic images to 100% train accuracy
bool criterion_4(std::ostream& os) {
  const auto t0 = std::chrono::steady_clock::now();
  // the whole 32-image set is the training set; it doubles as the monitor
  LabeledDataset corpus = synth_generate(16, 804);

  ModelConfig cfg = preset_config("tiny");
  cfg.seed = 804;
  Model<float> model = build_model<float>(cfg);

  Hyperparams hp;  // paper values: lr 2e-3, wd 0.05, AdamW, rmse
  hp.epochs = 200;
  hp.seed = 804;

  double best_train = 0.0;
  int reached_at = -1;
  TrainResult<float> result =
      train(model, corpus, corpus, hp, 0.25, [&](const EpochStats& e) {
        best_train = std::max(best_train, e.train_acc);
        if (e.train_acc >= 1.0 && reached_at < 0) {
          reached_at = e.epoch;
          return false;
        }
        return true;
      });
  const double secs = elapsed_since(t0);
  os << "  train accuracy " << format_fixed(best_train, 4) << " after "
     << result.history.size() << " epochs in " << format_fixed(secs, 1) << "s\n";
  if (reached_at < 0) {
    os << "  never reached 100% train accuracy within 200 epochs\n";
    return false;
  }
  if (secs >= 300.0) {
    os << "  exceeded the 5 minute budget\n";
    return false;
  }
  return true;
}

// 5. end-to-end desk experiment: clean training, fogged evaluation
bool criterion_5(std::ostream& os) {
  const auto t0 = std::chrono::steady_clock::now();
  LabeledDataset corpus = synth_generate(500, 805);
  auto [train_set, test_set] = split_dataset(corpus, {0.8, true, 805});

  ModelConfig cfg = preset_config("tiny");
  cfg.seed = 805;
  Model<float> model = build_model<float>(cfg);

  Hyperparams hp;
  hp.epochs = 20;
  hp.seed = 805;

  TrainResult<float> result = train(model, train_set, test_set, hp, 0.01);
  const double clean_acc = metrics(result.final_confusion).accuracy;

  LabeledDataset fogged = test_set;
  for (DataItem& item : fogged.items) {
    FogParams p = FogParams::make(kFogHeavy, item.image.dim(1), item.image.dim(2));
    item.image = apply_fog(item.image, p).image;
  }
  const double fog_acc = metrics(evaluate(model, fogged, result.stats)).accuracy;
  const double secs = elapsed_since(t0);
  os << "  clean test accuracy " << format_fixed(clean_acc, 4) << ", fog(0.24) "
     << format_fixed(fog_acc, 4) << ", decay "
     << format_fixed((clean_acc - fog_acc) * 100, 1) << "pp, " << format_fixed(secs, 1)
     << "s\n";
  bool ok = true;
  if (clean_acc < 0.90) {
    os << "  clean accuracy below 0.90\n";
    ok = false;
  }
  if (clean_acc - fog_acc > 0.15) {
    os << "  fog degradation above 15 percentage points\n";
    ok = false;
  }
  if (secs >= 1800.0) {
    os << "  exceeded the 30 minute budget\n";
    ok = false;
  }
  return ok;
}

// 6. byte-identical artifacts across two identically seeded runs
bool criterion_6(std::ostream& os) {
  Scratch scratch("det");
  const std::string corpus = scratch.str("corpus");
  {
    const char* argv[] = {"dtnt", "synth", "--n", "24", "--seed", "6", "--out",
                          corpus.c_str()};
    if (run_cli(8, argv) != 0) {
      os << "  synth failed\n";
      return false;
    }
  }
  auto run_once = [&](const std::string& out) {
    const char* argv[] = {"dtnt",     "train",          "--data",  corpus.c_str(),
                          "--preset", "tiny",           "--out",   out.c_str(),
                          "--seed",   "6",              "--epochs", "3",
                          "--batch-fraction", "0.25"};
    return run_cli(14, argv) == 0;
  };
  if (!run_once(scratch.str("a")) || !run_once(scratch.str("b"))) {
    os << "  training run failed\n";
    return false;
  }
  bool ok = true;
  for (const char* name : {"final.dtnt", "best.dtnt", "confusion.csv"}) {
    if (read_bytes(scratch.str("a") + "/" + name) !=
        read_bytes(scratch.str("b") + "/" + name)) {
      os << "  " << name << " differs between runs\n";
      ok = false;
    }
  }
  // history.csv carries measured wall time; compare with the volatile
  // seconds column masked out
  auto masked_history = [&](const std::string& run) {
    std::ifstream is(run + "/history.csv");
    std::string line, out;
    while (std::getline(is, line)) {
      const size_t comma = line.rfind(',');
      out += line.substr(0, comma);
      out += '\n';
    }
    return out;
  };
  if (masked_history(scratch.str("a")) != masked_history(scratch.str("b"))) {
    os << "  history.csv differs beyond the seconds column\n";
    ok = false;
  }
  return ok;
}

// 7. checkpoint round trip preserves the forward pass bit-exactly
bool criterion_7(std::ostream& os) {
  Scratch scratch("ckpt");
  ModelConfig cfg = preset_config("tiny");
  cfg.seed = 807;
  Model<float> model = build_model<float>(cfg);

  Rng rng(807);
  Tensor<float> warm = Tensor<float>::zeros({4, 1, 64, 64});
  for (float& v : warm.data()) v = static_cast<float>(rng.uniform(-1, 1));
  (void)model_forward(model, warm, Mode::Train);

  const std::string first = scratch.str("m.dtnt");
  const std::string second = scratch.str("m2.dtnt");
  save_checkpoint(model, first, {{"epoch", "7"}});
  std::map<std::string, std::string> meta;
  Model<float> loaded = load_checkpoint(first, &meta);
  save_checkpoint(loaded, second, meta);
  bool ok = true;
  if (read_bytes(first) != read_bytes(second)) {
    os << "  save-load-save is not byte stable\n";
    ok = false;
  }
  Tensor<float> probe = Tensor<float>::zeros({2, 1, 64, 64});
  for (float& v : probe.data()) v = static_cast<float>(rng.uniform(-1, 1));
  Tensor<float> a = model_forward(model, probe, Mode::Eval);
  Tensor<float> b = model_forward(loaded, probe, Mode::Eval);
  if (a.data() != b.data()) {
    os << "  forward differs after the round trip\n";
    ok = false;
  }
  return ok;
}

// 8. Selwyn-shaped batching arithmetic
bool criterion_8(std::ostream& os) {
  LabeledDataset selwyn;
  selwyn.class_names = {"sedan", "pickup"};
  for (int64_t i = 0; i < 3548; ++i)
    selwyn.items.push_back({Tensor<float>::zeros({1, 2, 2}), 0, "s" + std::to_string(i)});
  for (int64_t i = 0; i < 1067; ++i)
    selwyn.items.push_back({Tensor<float>::zeros({1, 2, 2}), 1, "p" + std::to_string(i)});

  LabeledDataset balanced = balance_classes(selwyn, 8);
  bool ok = true;
  if (balanced.items.size() != 2134) {
    os << "  balanced size " << balanced.items.size() << ", expected 2134\n";
    ok = false;
  }
  auto [train_set, test_set] = split_dataset(balanced, {0.8, false, 8});
  if (train_set.items.size() != 1707 || test_set.items.size() != 427) {
    os << "  split " << train_set.items.size() << "/" << test_set.items.size()
       << ", expected 1707/427\n";
    ok = false;
  }
  const auto batches = make_batches(train_set, 0.01, 8);
  if (batches.empty() || batches[0].size() != 17) {
    os << "  batch size " << (batches.empty() ? 0 : batches[0].size())
       << ", expected 17\n";
    ok = false;
  }
  if (batches.size() != 101 || batches.back().size() != 7) {
    os << "  " << batches.size() << " batches with final " << batches.back().size()
       << ", expected 101 with final 7\n";
    ok = false;
  }
  return ok;
}

struct Criterion {
  int number;
  const char* label;
  bool (*run)(std::ostream&);
};

const Criterion kCriteria[] = {
    {1, "gradient fidelity (primitives < 1e-6, composed blocks < 1e-4)", criterion_1},
    {2, "fog model exactness and airlight contraction", criterion_2},
    {3, "metric formulas equal brute-force tallies", criterion_3},
    {4, "overfit smoke: 32 images to 100% train accuracy", criterion_4},
    {5, "desk experiment: >= 90% clean accuracy, <= 15pp fog decay", criterion_5},
    {6, "determinism: byte-identical artifacts for equal seeds", criterion_6},
    {7, "checkpoint round trip is bit-exact", criterion_7},
    {8, "Selwyn-shaped balance/split/batch arithmetic", criterion_8},
};

}  // namespace

int main(int argc, char** argv) {
  set_debug_checks(false);  // acceptance measures release behaviour
  int only = 0;
  for (int i = 1; i < argc; ++i)
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[i + 1]);

  bool all_ok = true;
  for (const Criterion& c : kCriteria) {
    if (only != 0 && c.number != only) continue;
    std::ostringstream detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail << "  exception: " << e.what() << "\n";
    }
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << c.number << ": "
              << c.label << "\n"
              << detail.str();
    all_ok = all_ok && ok;
  }
  return all_ok ? 0 : 1;
}
