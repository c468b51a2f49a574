#include "dtnt/gradcheck_suite.hpp"

#include <cmath>
#include <ostream>

#include "dtnt/model.hpp"
#include "dtnt/train.hpp"

namespace dtnt {

namespace {

constexpr double kStep = 1e-5;
constexpr double kPrimitiveTol = 1e-6;
constexpr double kComposedTol = 1e-4;
constexpr int kInstances = 10;

using DTensor = Tensor<double>;
using Fn = std::function<DTensor(const DTensor&)>;

DTensor random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0,
                      double hi = 1.0) {
  DTensor t = DTensor::zeros(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// inputs bounded away from the relu kink so central differences are valid
DTensor random_tensor_off_zero(std::vector<int64_t> shape, Rng& rng) {
  DTensor t = DTensor::zeros(std::move(shape));
  for (double& v : t.data()) {
    const double mag = rng.uniform(0.1, 1.0);
    v = rng.uniform01() < 0.5 ? -mag : mag;
  }
  return t;
}

// random linear functional turning any output into a scalar
Fn project(const std::function<DTensor(const DTensor&)>& op, Rng& rng,
           const std::vector<int64_t>& out_shape) {
  DTensor coeff = random_tensor(out_shape, rng);
  return [op, coeff](const DTensor& x) { return sum_all(mul(op(x), coeff)); };
}

struct Check {
  std::string name;
  double threshold;
  // returns max err for one seeded instance
  std::function<double(uint64_t)> run;
};

double check_instance(const Fn& f, const DTensor& x) {
  return grad_check(f, x, kStep);
}

GradCheckEntry run_entry(const Check& c) {
  GradCheckEntry e{c.name, 0.0, c.threshold, kInstances};
  for (int i = 0; i < kInstances; ++i)
    e.max_err = std::max(e.max_err, c.run(Rng::mix(0xc0de, static_cast<uint64_t>(i))));
  return e;
}

// blocks are built with the training-time sigma-0.02 init; inflate the
// weights so a backward bug cannot hide below threshold behind tiny scales
void inflate(Tensor<double>& t, double factor = 25.0) {
  for (double& v : t.data()) v *= factor;
}
void inflate(LinearParams<double>& p) {
  inflate(p.w);
}
void inflate(MsaParams<double>& p) {
  inflate(p.q);
  inflate(p.k);
  inflate(p.v);
  inflate(p.out);
}
void inflate(MlpParams<double>& p) {
  inflate(p.fc1);
  inflate(p.fc2);
}
void inflate(TNTBlock<double>& b) {
  inflate(b.inner_msa);
  inflate(b.inner_mlp);
  inflate(b.word_to_sentence);
  inflate(b.outer_msa);
  inflate(b.outer_mlp);
}

std::vector<Check> build_checks() {
  std::vector<Check> checks;

  checks.push_back({"matmul", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    DTensor a = random_tensor({3, 4}, rng);
    DTensor b = random_tensor({4, 5}, rng);
    // alternate which operand is differentiated
    if (seed % 2 == 0) {
      Fn f = project([b](const DTensor& x) { return matmul(x, b); }, rng, {3, 5});
      return check_instance(f, a);
    }
    Fn f = project([a](const DTensor& x) { return matmul(a, x); }, rng, {3, 5});
    return check_instance(f, b);
  }});

  checks.push_back({"add", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    DTensor b = random_tensor({2, 3}, rng);
    Fn f = project([b](const DTensor& x) { return add(x, b); }, rng, {2, 3});
    return check_instance(f, random_tensor({2, 3}, rng));
  }});

  checks.push_back({"mul", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    DTensor b = random_tensor({2, 3}, rng);
    Fn f = project([b](const DTensor& x) { return mul(x, b); }, rng, {2, 3});
    return check_instance(f, random_tensor({2, 3}, rng));
  }});

  checks.push_back({"scale", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    const double s = rng.uniform(-2.0, 2.0);
    Fn f = project([s](const DTensor& x) { return scale(x, s); }, rng, {4});
    return check_instance(f, random_tensor({4}, rng));
  }});

  checks.push_back({"relu", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    Fn f = project([](const DTensor& x) { return relu(x); }, rng, {3, 3});
    return check_instance(f, random_tensor_off_zero({3, 3}, rng));
  }});

  checks.push_back({"gelu", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    Fn f = project([](const DTensor& x) { return gelu(x); }, rng, {3, 3});
    return check_instance(f, random_tensor({3, 3}, rng, -2.0, 2.0));
  }});

  checks.push_back({"sqrt", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    Fn f = project([](const DTensor& x) { return sqrt_elem(x); }, rng, {5});
    return check_instance(f, random_tensor({5}, rng, 0.5, 2.0));
  }});

  checks.push_back({"log", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    Fn f = project([](const DTensor& x) { return log_elem(x); }, rng, {5});
    return check_instance(f, random_tensor({5}, rng, 0.5, 2.0));
  }});

  checks.push_back({"sum", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    Fn f = [](const DTensor& x) { return sum_all(x); };
    return check_instance(f, random_tensor({2, 3}, rng));
  }});

  checks.push_back({"transpose", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    Fn f = project([](const DTensor& x) { return transpose2d(x); }, rng, {4, 3});
    return check_instance(f, random_tensor({3, 4}, rng));
  }});

  checks.push_back({"layer_norm", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    DTensor gamma = random_tensor({5}, rng, 0.5, 1.5);
    DTensor beta = random_tensor({5}, rng);
    DTensor x = random_tensor({3, 5}, rng);
    switch (seed % 3) {
      case 0: {
        Fn f = project([gamma, beta](const DTensor& v) {
          return layer_norm(v, gamma, beta, 1e-6);
        }, rng, {3, 5});
        return check_instance(f, x);
      }
      case 1: {
        Fn f = project([x, beta](const DTensor& v) {
          return layer_norm(x, v, beta, 1e-6);
        }, rng, {3, 5});
        return check_instance(f, gamma);
      }
      default: {
        Fn f = project([x, gamma](const DTensor& v) {
          return layer_norm(x, gamma, v, 1e-6);
        }, rng, {3, 5});
        return check_instance(f, beta);
      }
    }
  }});

  checks.push_back({"softmax", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    const int axis = seed % 2 == 0 ? 1 : 0;
    Fn f = project([axis](const DTensor& x) { return softmax(x, axis); }, rng, {3, 4});
    return check_instance(f, random_tensor({3, 4}, rng, -3.0, 3.0));
  }});

  checks.push_back({"conv2d", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    const int stride = seed % 3 == 0 ? 2 : 1;
    const int padding = seed % 2 == 0 ? 1 : 0;
    DTensor x = random_tensor({2, 2, 5, 5}, rng);
    DTensor k = random_tensor({3, 2, 3, 3}, rng);
    const int64_t ho = (5 + 2 * padding - 3) / stride + 1;
    std::vector<int64_t> out_shape{2, 3, ho, ho};
    if (seed % 2 == 0) {
      Fn f = project([k, stride, padding](const DTensor& v) {
        return conv2d(v, k, stride, padding);
      }, rng, out_shape);
      return check_instance(f, x);
    }
    Fn f = project([x, stride, padding](const DTensor& v) {
      return conv2d(x, v, stride, padding);
    }, rng, out_shape);
    return check_instance(f, k);
  }});

  checks.push_back({"avg_pool2d", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    Fn f = project([](const DTensor& x) { return avg_pool2d(x, 2, 2); }, rng, {2, 2, 2});
    return check_instance(f, random_tensor({2, 4, 4}, rng));
  }});

  checks.push_back({"batch_norm_train", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    DTensor gamma = random_tensor({3}, rng, 0.5, 1.5);
    DTensor beta = random_tensor({3}, rng);
    DTensor x = random_tensor({4, 3, 2, 2}, rng);
    if (seed % 2 == 0) {
      Fn f = project([gamma, beta](const DTensor& v) {
        BatchNormState<double> st;
        return batch_norm(v, gamma, beta, st, Mode::Train, 1e-6, 0.1);
      }, rng, {4, 3, 2, 2});
      return check_instance(f, x);
    }
    Fn f = project([x, beta](const DTensor& v) {
      BatchNormState<double> st;
      return batch_norm(x, v, beta, st, Mode::Train, 1e-6, 0.1);
    }, rng, {4, 3, 2, 2});
    return check_instance(f, gamma);
  }});

  checks.push_back({"batch_norm_eval", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    DTensor gamma = random_tensor({3}, rng, 0.5, 1.5);
    DTensor beta = random_tensor({3}, rng);
    BatchNormState<double> st;
    st.mean = {0.1, -0.2, 0.3};
    st.var = {1.1, 0.9, 1.3};
    Fn f = project([gamma, beta, st](const DTensor& v) mutable {
      return batch_norm(v, gamma, beta, st, Mode::Eval, 1e-6, 0.1);
    }, rng, {2, 3, 2, 2});
    return check_instance(f, random_tensor({2, 3, 2, 2}, rng));
  }});

  checks.push_back({"concat", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    DTensor other = random_tensor({2, 3}, rng);
    Fn f = project([other](const DTensor& x) {
      return concat<double>({x, other}, static_cast<int>(0));
    }, rng, {4, 3});
    return check_instance(f, random_tensor({2, 3}, rng));
  }});

  checks.push_back({"slice", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    Fn f = project([](const DTensor& x) { return slice(x, 1, 1, 2); }, rng, {3, 2});
    return check_instance(f, random_tensor({3, 4}, rng));
  }});

  checks.push_back({"reshape", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    Fn f = project([](const DTensor& x) { return reshape(x, {6}); }, rng, {6});
    return check_instance(f, random_tensor({2, 3}, rng));
  }});

  checks.push_back({"unfold", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    Fn f = project([](const DTensor& x) { return unfold_cells(x, 2, 2); }, rng, {4, 8});
    return check_instance(f, random_tensor({2, 4, 4}, rng));
  }});

  checks.push_back({"gather_rows", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    std::vector<int64_t> idx{2, 0, 1, 2};
    Fn f = project([idx](const DTensor& x) { return gather_rows(x, idx); }, rng, {4, 3});
    return check_instance(f, random_tensor({3, 3}, rng));
  }});

  checks.push_back({"tile_rows", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    Fn f = project([](const DTensor& x) { return tile_rows(x, 3); }, rng, {6, 2});
    return check_instance(f, random_tensor({2, 2}, rng));
  }});

  checks.push_back({"add_rows", kPrimitiveTol, [](uint64_t seed) {
    Rng rng(seed);
    DTensor x = random_tensor({3, 4}, rng);
    DTensor v = random_tensor({4}, rng);
    if (seed % 2 == 0) {
      Fn f = project([v](const DTensor& t) { return add_rows(t, v); }, rng, {3, 4});
      return check_instance(f, x);
    }
    Fn f = project([x](const DTensor& t) { return add_rows(x, t); }, rng, {3, 4});
    return check_instance(f, v);
  }});

  // composed blocks at toy widths
  checks.push_back({"msa_block", kComposedTol, [](uint64_t seed) {
    Rng rng(seed);
    MsaParams<double> p = make_msa<double>(8, 2, rng);
    inflate(p);
    Fn f = project([p](const DTensor& x) { return msa(x, p); }, rng, {3, 8});
    return check_instance(f, random_tensor({3, 8}, rng));
  }});

  checks.push_back({"mlp_block", kComposedTol, [](uint64_t seed) {
    Rng rng(seed);
    MlpParams<double> p = make_mlp<double>(6, 12, Activation::Relu, rng);
    inflate(p);
    Fn f = project([p](const DTensor& x) { return mlp(x, p); }, rng, {4, 6});
    return check_instance(f, random_tensor_off_zero({4, 6}, rng));
  }});

  checks.push_back({"embedding", kComposedTol, [](uint64_t seed) {
    Rng rng(seed);
    SentenceWordEmbedding<double> emb =
        make_embedding<double>(2, 8, 8, 4, 2, 12, 6, true, rng);
    inflate(emb.sentence_proj);
    inflate(emb.word_proj);
    DTensor cs = random_tensor({5, 12}, rng);
    DTensor cw = random_tensor({4, 4, 6}, rng);
    Fn f = [emb, cs, cw](const DTensor& x) {
      auto [sentences, words] = embed(x, emb);
      return add(sum_all(mul(sentences, cs)), sum_all(mul(words, cw)));
    };
    return check_instance(f, random_tensor({2, 8, 8}, rng));
  }});

  checks.push_back({"tnt_block", kComposedTol, [](uint64_t seed) {
    Rng rng(seed);
    SentenceWordEmbedding<double> emb =
        make_embedding<double>(1, 8, 4, 4, 2, 8, 4, true, rng);  // n=2, m=4
    TNTBlock<double> block = make_tnt_block<double>(emb, 2, 2, Activation::Relu, rng);
    inflate(block);
    DTensor words = random_tensor({2, 4, 4}, rng);
    DTensor sentences = random_tensor({3, 8}, rng);
    DTensor cs = random_tensor({3, 8}, rng);
    DTensor cw = random_tensor({2, 4, 4}, rng);
    if (seed % 2 == 0) {
      Fn f = [block, words, cs, cw](const DTensor& s) {
        auto [s2, w2] = tnt_forward(block, s, words);
        return add(sum_all(mul(s2, cs)), sum_all(mul(w2, cw)));
      };
      return check_instance(f, sentences);
    }
    Fn f = [block, sentences, cs, cw](const DTensor& w) {
      auto [s2, w2] = tnt_forward(block, sentences, w);
      return add(sum_all(mul(s2, cs)), sum_all(mul(w2, cw)));
    };
    return check_instance(f, words);
  }});

  checks.push_back({"dense_block", kComposedTol, [](uint64_t seed) {
    Rng rng(seed);
    DenseBlock<double> block = make_dense_block<double>(3, 2, 2, rng);
    for (DenseLayer<double>& l : block.layers) inflate(l.conv);
    Fn f = project([block](const DTensor& x) mutable {
      return dense_block_forward(block, x, Mode::Train);
    }, rng, {2, 7, 4, 4});
    return check_instance(f, random_tensor({2, 3, 4, 4}, rng));
  }});

  checks.push_back({"transition", kComposedTol, [](uint64_t seed) {
    Rng rng(seed);
    TransitionParams<double> p = make_transition<double>(6, rng);
    inflate(p.conv);
    Fn f = project([p](const DTensor& x) { return transition_forward(p, x); }, rng,
                   {2, 3, 2, 2});
    return check_instance(f, random_tensor({2, 6, 4, 4}, rng));
  }});

  checks.push_back({"classifier", kComposedTol, [](uint64_t seed) {
    Rng rng(seed);
    ClassifierHead<double> head = make_head<double>(8, 3, rng);
    inflate(head.w);
    Fn f = project([head](const DTensor& z) { return classify(head, z); }, rng, {3});
    return check_instance(f, random_tensor({8}, rng));
  }});

  checks.push_back({"full_tiny_model", kComposedTol, [](uint64_t seed) {
    Rng rng(seed);
    ModelConfig cfg = preset_config("tiny");
    cfg.seed = seed;
    Model<double> model = build_model<double>(cfg);
    DTensor input = random_tensor({2, 1, 64, 64}, rng);
    DTensor coeff = random_tensor({2, 2}, rng);
    std::vector<int> labels{0, 1};
    if (seed % 2 == 0) {
      // input gradient through the whole stack, sampled coordinates
      Fn f = [&model, labels](const DTensor& x) {
        Tensor<double> probs = model_forward(model, x, Mode::Train);
        return rmse_loss(probs, labels);
      };
      return grad_check(f, input, kStep, 16, seed);
    }
    // parameter gradient via the class token (checked on all 32 coords)
    DTensor token = model.embedding.class_token.clone_values();
    Fn f = [&model, input, coeff](const DTensor& t) {
      model.embedding.class_token = t;
      Tensor<double> probs = model_forward(model, input, Mode::Train);
      return sum_all(mul(probs, coeff));
    };
    return grad_check(f, token, kStep);
  }});

  return checks;
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite() {
  std::vector<GradCheckEntry> results;
  for (const Check& c : build_checks()) results.push_back(run_entry(c));
  return results;
}

bool gradcheck_report(std::ostream& os) {
  bool all_pass = true;
  for (const GradCheckEntry& e : run_gradcheck_suite()) {
    const bool ok = e.passed();
    all_pass = all_pass && ok;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-18s max_err %.3e  (threshold %.0e, %d instances)  %s\n",
                  e.name.c_str(), e.max_err, e.threshold, e.instances,
                  ok ? "ok" : "FAIL");
    os << buf;
  }
  return all_pass;
}

}  // namespace dtnt
