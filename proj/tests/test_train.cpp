#include <doctest.h>

#include <cmath>

#include "dtnt/train.hpp"
#include "naive_ref.hpp"

using namespace dtnt;

TEST_CASE("rmse loss hand values") {
  Tensor<double> exact = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
  CHECK(rmse_loss(exact, {0, 1}).item() == 0.0);

  Tensor<double> half = Tensor<double>::from({1, 2}, {0.5, 0.5});
  CHECK(rmse_loss(half, {0}).item() == doctest::Approx(0.5).epsilon(1e-15));

  // invariant under a consistent permutation of classes
  Tensor<double> probs = Tensor<double>::from({2, 2}, {0.7, 0.3, 0.2, 0.8});
  Tensor<double> swapped = Tensor<double>::from({2, 2}, {0.3, 0.7, 0.8, 0.2});
  CHECK(rmse_loss(probs, {0, 1}).item() ==
        doctest::Approx(rmse_loss(swapped, {1, 0}).item()).epsilon(1e-15));

  CHECK_THROWS_AS(rmse_loss(probs, {0}), std::invalid_argument);
}

TEST_CASE("rmse loss stays in [0,1] for binary softmax outputs") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.index(5));
    Tensor<double> logits = Tensor<double>::zeros({n, 2});
    for (double& v : logits.data()) v = rng.uniform(-8, 8);
    Tensor<double> probs = softmax(logits, 1);
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.index(2)));
    const double loss = rmse_loss(probs, labels).item();
    CHECK(loss >= 0.0);
    CHECK(loss <= 1.0);
    CHECK(loss > 0.0);  // softmax of finite logits is never exactly one-hot
  }
}

TEST_CASE("cross entropy alternative") {
  Tensor<double> probs = Tensor<double>::from({2, 2}, {0.9, 0.1, 0.25, 0.75});
  const double expected = -(std::log(0.9) + std::log(0.75)) / 2.0;
  CHECK(cross_entropy_loss(probs, {0, 1}).item() ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("adamw zero-gradient behaviour") {
  Hyperparams hp;
  hp.weight_decay = 0.0;
  std::vector<std::pair<std::string, Tensor<double>>> params;
  params.emplace_back("p", Tensor<double>::from({3}, {1.0, -2.0, 0.5}));
  params[0].second.set_requires_grad(true);
  AdamWState<double> state;
  adamw_step(params, state, 2e-3, hp);
  CHECK(params[0].second.data() == std::vector<double>{1.0, -2.0, 0.5});

  // with decay only, parameters shrink by exactly (1 - lr*wd) = 1 - 1e-4
  Hyperparams decay;
  decay.weight_decay = 0.05;
  std::vector<std::pair<std::string, Tensor<double>>> params2;
  params2.emplace_back("p", Tensor<double>::from({2}, {4.0, -8.0}));
  AdamWState<double> state2;
  adamw_step(params2, state2, 2e-3, decay);
  CHECK(params2[0].second.data()[0] == 4.0 * (1.0 - 1e-4));
  CHECK(params2[0].second.data()[1] == -8.0 * (1.0 - 1e-4));
}

TEST_CASE("adamw matches the scalar oracle over ten steps") {
  Hyperparams hp;  // defaults: paper values
  Rng rng(2);
  double oracle_p = 0.8;
  naive::ScalarAdamW oracle;
  std::vector<std::pair<std::string, Tensor<double>>> params;
  params.emplace_back("w", Tensor<double>::scalar(0.8));
  AdamWState<double> state;
  for (int step = 0; step < 10; ++step) {
    const double g = rng.uniform(-1, 1);
    params[0].second.grad()[0] = g;
    adamw_step(params, state, hp.max_lr, hp);
    oracle_p = oracle.step(oracle_p, g, hp.max_lr, hp.beta1, hp.beta2, hp.adam_eps,
                           hp.weight_decay);
    CHECK(params[0].second.data()[0] == doctest::Approx(oracle_p).epsilon(1e-12));
  }

  // wd = 0 reduces to plain Adam: trace equality against the same oracle
  Hyperparams adam = hp;
  adam.weight_decay = 0.0;
  double adam_p = -0.3;
  naive::ScalarAdamW oracle2;
  std::vector<std::pair<std::string, Tensor<double>>> params2;
  params2.emplace_back("w", Tensor<double>::scalar(-0.3));
  AdamWState<double> state2;
  Rng rng2(3);
  for (int step = 0; step < 10; ++step) {
    const double g = rng2.uniform(-1, 1);
    params2[0].second.grad()[0] = g;
    adamw_step(params2, state2, adam.max_lr, adam);
    adam_p = oracle2.step(adam_p, g, adam.max_lr, adam.beta1, adam.beta2, adam.adam_eps, 0.0);
    CHECK(params2[0].second.data()[0] == doctest::Approx(adam_p).epsilon(1e-12));
  }

  // constant gradient: the step magnitude approaches lr (sign-like update)
  Hyperparams cg = hp;
  cg.weight_decay = 0.0;
  std::vector<std::pair<std::string, Tensor<double>>> params3;
  params3.emplace_back("w", Tensor<double>::scalar(0.0));
  AdamWState<double> state3;
  double prev = 0.0;
  for (int step = 0; step < 200; ++step) {
    params3[0].second.grad()[0] = 0.5;
    adamw_step(params3, state3, cg.max_lr, cg);
    if (step > 150) {
      const double delta = prev - params3[0].second.data()[0];
      CHECK(delta == doctest::Approx(cg.max_lr).epsilon(0.05));
    }
    prev = params3[0].second.data()[0];
  }
}

TEST_CASE("adamw aborts on non-finite gradients") {
  Hyperparams hp;
  std::vector<std::pair<std::string, Tensor<double>>> params;
  params.emplace_back("stem.conv.w", Tensor<double>::scalar(1.0));
  params[0].second.grad()[0] = std::numeric_limits<double>::quiet_NaN();
  AdamWState<double> state;
  CHECK_THROWS_WITH_AS(adamw_step(params, state, 1e-3, hp),
                       doctest::Contains("stem.conv.w"), std::runtime_error);
  CHECK(params[0].second.data()[0] == 1.0);  // aborted before mutation
}

TEST_CASE("confusion tally oracles") {
  // perfect predictor on 3 sedans and 2 pickups
  ConfusionMatrix perfect = tally_confusion({0, 0, 0, 1, 1}, {0, 0, 0, 1, 1});
  CHECK(perfect.tp == 3);
  CHECK(perfect.tn == 2);
  CHECK(perfect.fp == 0);
  CHECK(perfect.fn == 0);

  // inverted predictor on the same items
  ConfusionMatrix inverted = tally_confusion({0, 0, 0, 1, 1}, {1, 1, 1, 0, 0});
  CHECK(inverted.tp == 0);
  CHECK(inverted.tn == 0);
  CHECK(inverted.fp == 2);
  CHECK(inverted.fn == 3);

  // fixed 10-item list, tallied by hand
  std::vector<int> labels = {0, 1, 0, 0, 1, 1, 0, 1, 0, 1};
  std::vector<int64_t> preds = {0, 1, 1, 0, 0, 1, 0, 1, 1, 0};
  ConfusionMatrix cm = tally_confusion(labels, preds);
  CHECK(cm.tp == 3);
  CHECK(cm.fn == 2);
  CHECK(cm.tn == 3);
  CHECK(cm.fp == 2);
  CHECK(cm.total() == 10);
}

TEST_CASE("metrics formulas") {
  MetricsResult even = metrics({1, 1, 1, 1});
  CHECK(even.accuracy == 0.5);
  CHECK(even.precision == 0.5);
  CHECK(even.recall == 0.5);
  CHECK(even.f1 == 0.5);

  MetricsResult ideal = metrics({7, 5, 0, 0});
  CHECK(ideal.accuracy == 1.0);
  CHECK(ideal.precision == 1.0);
  CHECK(ideal.recall == 1.0);
  CHECK(ideal.f1 == 1.0);

  MetricsResult mixed = metrics({3, 1, 1, 1});
  CHECK(mixed.accuracy == doctest::Approx(4.0 / 6.0).epsilon(1e-12));
  CHECK(mixed.precision == 0.75);
  CHECK(mixed.recall == 0.75);
  CHECK(mixed.f1 == doctest::Approx(0.75).epsilon(1e-12));

  // zero denominators surface as NaN sentinels, never silent zeros
  MetricsResult no_pos_pred = metrics({0, 4, 0, 3});
  CHECK(std::isnan(no_pos_pred.precision));
  CHECK(std::isnan(no_pos_pred.f1));
  MetricsResult no_pos = metrics({0, 4, 2, 0});
  CHECK(std::isnan(no_pos.recall));

  CHECK_THROWS_AS(metrics({0, 0, 0, 0}), std::invalid_argument);
}

TEST_CASE("metrics match a brute-force recomputation on random lists") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t n = 1 + rng.index(40);
    std::vector<int> labels;
    std::vector<int64_t> preds;
    for (size_t i = 0; i < n; ++i) {
      labels.push_back(static_cast<int>(rng.index(2)));
      preds.push_back(static_cast<int64_t>(rng.index(2)));
    }
    const ConfusionMatrix cm = tally_confusion(labels, preds);
    // brute force: recount from the raw pairs
    uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < n; ++i) {
      if (labels[i] == 0 && preds[i] == 0) ++tp;
      if (labels[i] == 1 && preds[i] == 1) ++tn;
      if (labels[i] == 1 && preds[i] == 0) ++fp;
      if (labels[i] == 0 && preds[i] == 1) ++fn;
    }
    REQUIRE(cm.tp == tp);
    REQUIRE(cm.tn == tn);
    REQUIRE(cm.fp == fp);
    REQUIRE(cm.fn == fn);
    const MetricsResult m = metrics(cm);
    CHECK(std::abs(m.accuracy - static_cast<double>(tp + tn) / static_cast<double>(n)) <
          1e-15);
    if (tp + fp > 0)
      CHECK(std::abs(m.precision - static_cast<double>(tp) / static_cast<double>(tp + fp)) <
            1e-15);
    if (tp + fn > 0)
      CHECK(std::abs(m.recall - static_cast<double>(tp) / static_cast<double>(tp + fn)) <
            1e-15);
    if (!std::isnan(m.f1)) {
      CHECK(m.f1 >= std::min(m.precision, m.recall) - 1e-15);
      CHECK(m.f1 <= std::max(m.precision, m.recall) + 1e-15);
    }
  }
}

TEST_CASE("evaluate with a rigged constant predictor") {
  ModelConfig cfg = preset_config("tiny");
  Model<float> model = build_model<float>(cfg);
  // zero the head and bias it toward pickup: every image predicts class 1
  std::fill(model.head.w.data().begin(), model.head.w.data().end(), 0.0f);
  model.head.b.data() = {0.0f, 5.0f};

  LabeledDataset ds = synth_generate(4, 1);
  NormStats stats = compute_norm_stats(ds);
  // warm the running stats with one training pass
  auto [batch, labels] = assemble_batch(ds, {0, 1, 4, 5}, stats);
  (void)model_forward(model, batch, Mode::Train);
  (void)labels;

  ConfusionMatrix cm = evaluate(model, ds, stats);
  CHECK(cm.tp == 0);
  CHECK(cm.fn == 4);  // sedans predicted pickup
  CHECK(cm.tn == 4);
  CHECK(cm.fp == 0);
}

TEST_CASE("lr schedule") {
  Hyperparams hp;
  hp.max_lr = 2e-3;
  hp.epochs = 50;
  CHECK(hp.lr_at(0) == 2e-3);
  CHECK(hp.lr_at(25) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(hp.lr_at(49) > 0.0);
  hp.schedule = Hyperparams::Schedule::Constant;
  CHECK(hp.lr_at(37) == 2e-3);
}

TEST_CASE("train determinism and the zero-epoch identity") {
  LabeledDataset corpus = synth_generate(8, 11);
  auto [train_set, test_set] = split_dataset(corpus, {0.75, true, 11});

  ModelConfig cfg = preset_config("tiny");
  cfg.seed = 11;
  Hyperparams hp;
  hp.epochs = 0;
  Model<float> model = build_model<float>(cfg);
  std::vector<float> before = model.stem_conv.data();
  TrainResult<float> zero = train(model, train_set, test_set, hp);
  CHECK(zero.history.empty());
  CHECK(model.stem_conv.data() == before);

  hp.epochs = 2;
  hp.seed = 5;
  Model<float> a = build_model<float>(cfg);
  Model<float> b = build_model<float>(cfg);
  TrainResult<float> ra = train(a, train_set, test_set, hp, 0.5);
  TrainResult<float> rb = train(b, train_set, test_set, hp, 0.5);
  REQUIRE(ra.history.size() == rb.history.size());
  for (size_t i = 0; i < ra.history.size(); ++i) {
    CHECK(ra.history[i].train_loss == rb.history[i].train_loss);
    CHECK(ra.history[i].train_acc == rb.history[i].train_acc);
    CHECK(ra.history[i].test_acc == rb.history[i].test_acc);
  }
  CHECK(a.stem_conv.data() == b.stem_conv.data());
  CHECK(a.head.w.data() == b.head.w.data());
}

TEST_CASE("train halts on a diverging run with coordinates in the error") {
  set_debug_checks(false);  // let the loss check be the one that reports
  LabeledDataset corpus = synth_generate(4, 2);
  auto [train_set, test_set] = split_dataset(corpus, {0.5, true, 2});
  ModelConfig cfg = preset_config("tiny");
  Model<float> model = build_model<float>(cfg);
  Hyperparams hp;
  hp.epochs = 30;
  hp.max_lr = 1e18;
  hp.schedule = Hyperparams::Schedule::Constant;
  try {
    (void)train(model, train_set, test_set, hp, 1.0);
    // divergence is expected with this lr; reaching here means it survived,
    // which would itself be a failure worth seeing
    CHECK(false);
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    const bool informative = what.find("epoch") != std::string::npos ||
                             what.find("adamw") != std::string::npos;
    CHECK(informative);
  }
  set_debug_checks(true);
}
