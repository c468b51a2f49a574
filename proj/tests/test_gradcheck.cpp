#include <doctest.h>

#include "dtnt/blocks.hpp"
#include "dtnt/ops.hpp"

using namespace dtnt;

namespace {

Tensor<double> random_dense(std::vector<int64_t> shape, uint64_t seed) {
  Rng rng(seed);
  Tensor<double> t = Tensor<double>::zeros(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-1, 1);
  return t;
}

}  // namespace

TEST_CASE("grad_check on identity is numerically exact") {
  auto f = [](const Tensor<double>& x) { return sum_all(x); };
  CHECK(grad_check(f, random_dense({4}, 1), 1e-5) < 1e-10);
}

TEST_CASE("grad_check on softmax") {
  Tensor<double> coeff = random_dense({3, 4}, 2);
  auto f = [coeff](const Tensor<double>& x) {
    return sum_all(mul(softmax(x, 1), coeff));
  };
  CHECK(grad_check(f, random_dense({3, 4}, 3), 1e-5) < 1e-6);
}

TEST_CASE("grad_check on a toy TNT block") {
  Rng rng(4);
  SentenceWordEmbedding<double> emb = make_embedding<double>(1, 8, 4, 4, 2, 8, 4, true, rng);
  TNTBlock<double> block = make_tnt_block<double>(emb, 2, 2, Activation::Relu, rng);
  Tensor<double> words = random_dense({2, 4, 4}, 5);
  Tensor<double> cs = random_dense({3, 8}, 6);
  Tensor<double> cw = random_dense({2, 4, 4}, 7);
  auto f = [&](const Tensor<double>& s) {
    auto [s2, w2] = tnt_forward(block, s, words);
    return add(sum_all(mul(s2, cs)), sum_all(mul(w2, cw)));
  };
  CHECK(grad_check(f, random_dense({3, 8}, 8), 1e-5) < 1e-4);
}

TEST_CASE("grad_check rejects non-scalar functions") {
  auto f = [](const Tensor<double>& x) { return mul(x, x); };
  CHECK_THROWS_AS(grad_check(f, random_dense({3}, 9), 1e-5), std::invalid_argument);
}

TEST_CASE("grad_check coordinate subsetting is still a bound") {
  Tensor<double> coeff = random_dense({6, 6}, 10);
  auto f = [coeff](const Tensor<double>& x) { return sum_all(mul(gelu(x), coeff)); };
  Tensor<double> x = random_dense({6, 6}, 11);
  const double full = grad_check(f, x, 1e-5);
  const double sampled = grad_check(f, x, 1e-5, 8, 12);
  CHECK(sampled <= full + 1e-15);
  CHECK(full < 1e-6);
}
