#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dtnt/ops.hpp"

using namespace dtnt;

namespace {

Tensor<double> identity_matrix(int64_t n) {
  Tensor<double> t = Tensor<double>::zeros({n, n});
  for (int64_t i = 0; i < n; ++i) t.data()[i * n + i] = 1.0;
  return t;
}

Tensor<double> random_dense(std::vector<int64_t> shape, uint64_t seed, double lo = -1,
                            double hi = 1) {
  Rng rng(seed);
  Tensor<double> t = Tensor<double>::zeros(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("matmul basics") {
  Tensor<double> b = random_dense({3, 5}, 11);
  Tensor<double> out = matmul(identity_matrix(3), b);
  CHECK(out.data() == b.data());

  CHECK(matmul(Tensor<double>::from({1, 2}, {1, 2}),
               Tensor<double>::from({2, 1}, {3, 4}))
            .item() == doctest::Approx(11).epsilon(1e-15));

  Tensor<double> zeros = Tensor<double>::zeros({2, 3});
  Tensor<double> any = random_dense({3, 4}, 12);
  Tensor<double> annihilated = matmul(zeros, any);
  for (double v : annihilated.data()) CHECK(v == 0.0);

  CHECK_THROWS_WITH_AS(matmul(Tensor<double>::zeros({2, 3}), Tensor<double>::zeros({2, 3})),
                       doctest::Contains("[2x3]"), std::invalid_argument);
}

TEST_CASE("elementwise family") {
  Tensor<double> r = relu(Tensor<double>::from({3}, {-1, 0, 2}));
  CHECK(r.data() == std::vector<double>{0, 0, 2});

  Tensor<double> x = random_dense({4}, 13);
  Tensor<double> same = add(x, Tensor<double>::zeros({4}));
  CHECK(same.data() == x.data());

  CHECK(gelu(Tensor<double>::from({1}, {0.0})).item() == 0.0);

  Tensor<double> b = random_dense({4}, 14);
  CHECK(elementwise<double>("mul", x, &b).data() == mul(x, b).data());
  CHECK_THROWS_WITH_AS(elementwise<double>("frobnicate", x),
                       doctest::Contains("unknown op tag"), std::invalid_argument);
  CHECK_THROWS_AS(add(x, Tensor<double>::zeros({5})), std::invalid_argument);
  CHECK_THROWS_AS(elementwise<double>("add", x), std::invalid_argument);
}

TEST_CASE("layer_norm") {
  Tensor<double> gamma = Tensor<double>::filled({4}, 1.0);
  Tensor<double> beta = Tensor<double>::zeros({4});
  Tensor<double> flat = layer_norm(Tensor<double>::filled({1, 4}, 5.0), gamma, beta, 1e-8);
  for (double v : flat.data()) CHECK(v == doctest::Approx(0).epsilon(1e-10));

  Tensor<double> two = layer_norm(Tensor<double>::from({1, 2}, {1, 3}),
                                  Tensor<double>::filled({2}, 1.0),
                                  Tensor<double>::zeros({2}), 1e-14);
  CHECK(two.data()[0] == doctest::Approx(-1).epsilon(1e-6));
  CHECK(two.data()[1] == doctest::Approx(1).epsilon(1e-6));

  // gamma 0 absorbs everything into beta
  Tensor<double> x = random_dense({3, 4}, 15);
  Tensor<double> beta2 = random_dense({4}, 16);
  Tensor<double> absorbed = layer_norm(x, Tensor<double>::zeros({4}), beta2, 1e-8);
  for (int64_t r = 0; r < 3; ++r)
    for (int64_t j = 0; j < 4; ++j) CHECK(absorbed.data()[r * 4 + j] == beta2.data()[j]);

  CHECK_THROWS_AS(layer_norm(x, Tensor<double>::zeros({5}), beta, 1e-8),
                  std::invalid_argument);
  CHECK_THROWS_AS(layer_norm(x, gamma, beta, 0.0), std::invalid_argument);
}

TEST_CASE("softmax") {
  Tensor<double> half = softmax(Tensor<double>::from({2}, {0, 0}), 0);
  CHECK(half.data()[0] == 0.5);
  CHECK(half.data()[1] == 0.5);

  Tensor<double> big = softmax(Tensor<double>::from({2}, {1000, 1000}), 0);
  CHECK(big.data()[0] == 0.5);
  CHECK(all_finite(big));

  Tensor<double> uneven = softmax(Tensor<double>::from({2}, {0.0, std::log(3.0)}), 0);
  CHECK(uneven.data()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(uneven.data()[1] == doctest::Approx(0.75).epsilon(1e-12));

  // sums to one along the reduced axis for magnitudes up to 1e4
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Tensor<double> x = random_dense({4, 5}, 100 + seed, -1e4, 1e4);
    for (int axis : {0, 1}) {
      Tensor<double> y = softmax(x, axis);
      const int64_t L = y.dim(axis);
      const int64_t inner = axis == 1 ? 1 : 5;
      const int64_t outer = y.numel() / (L * inner);
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t in = 0; in < inner; ++in) {
          double sum = 0;
          for (int64_t l = 0; l < L; ++l) sum += y.data()[o * L * inner + l * inner + in];
          CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
    }
  }
  CHECK_THROWS_AS(softmax(half, 3), std::invalid_argument);
}

TEST_CASE("conv2d") {
  // 1x1 all-ones kernel sums channels; single channel in means identity
  Tensor<double> x = random_dense({1, 4, 4}, 17);
  Tensor<double> k1 = Tensor<double>::filled({1, 1, 1, 1}, 1.0);
  CHECK(conv2d(x, k1, 1, 0).data() == x.data());

  Tensor<double> hand =
      conv2d(Tensor<double>::from({1, 2, 2}, {1, 2, 3, 4}),
             Tensor<double>::filled({1, 1, 2, 2}, 1.0), 1, 0);
  CHECK(hand.shape() == std::vector<int64_t>{1, 1, 1});
  CHECK(hand.item() == 10.0);

  Tensor<double> zk = Tensor<double>::zeros({2, 1, 3, 3});
  Tensor<double> dark = conv2d(x, zk, 1, 1);
  for (double v : dark.data()) CHECK(v == 0.0);

  // spatial arithmetic: H' = (H + 2p - kh)/stride + 1
  Tensor<double> strided = conv2d(random_dense({2, 5, 5}, 18),
                                  random_dense({3, 2, 3, 3}, 19), 2, 1);
  CHECK(strided.shape() == std::vector<int64_t>{3, 3, 3});

  CHECK_THROWS_WITH_AS(conv2d(Tensor<double>::zeros({1, 2, 2}),
                              Tensor<double>::zeros({1, 1, 4, 4}), 1, 0),
                       doctest::Contains("larger than padded input"),
                       std::invalid_argument);
}

TEST_CASE("avg_pool2d") {
  Tensor<double> c = Tensor<double>::filled({2, 4, 4}, 3.5);
  Tensor<double> pooled_const = avg_pool2d(c, 2, 2);
  for (double v : pooled_const.data()) CHECK(v == 3.5);

  Tensor<double> mean = avg_pool2d(Tensor<double>::from({1, 2, 2}, {1, 3, 5, 7}), 2, 2);
  CHECK(mean.item() == 4.0);

  // stride == window tiles partition the input: totals agree
  Tensor<double> x = random_dense({1, 6, 6}, 20);
  Tensor<double> pooled = avg_pool2d(x, 3, 3);
  double lhs = 0, rhs = 0;
  for (double v : x.data()) lhs += v;
  for (double v : pooled.data()) rhs += v * 9.0;
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));

  CHECK_THROWS_AS(avg_pool2d(Tensor<double>::zeros({1, 2, 2}), 3, 1),
                  std::invalid_argument);
}

TEST_CASE("batch_norm") {
  Tensor<double> gamma = Tensor<double>::filled({3}, 1.0);
  Tensor<double> beta = Tensor<double>::zeros({3});

  Tensor<double> x = random_dense({4, 3, 2, 2}, 21);
  BatchNormState<double> st;
  Tensor<double> y = batch_norm(x, gamma, beta, st, Mode::Train, 1e-12, 0.1);
  for (int64_t c = 0; c < 3; ++c) {
    double mean = 0;
    for (int64_t n = 0; n < 4; ++n)
      for (int64_t i = 0; i < 4; ++i) mean += y.data()[(n * 3 + c) * 4 + i];
    CHECK(std::abs(mean / 16.0) < 1e-9);
  }

  BatchNormState<double> ident;
  ident.mean = {0, 0, 0};
  ident.var = {1, 1, 1};
  Tensor<double> same = batch_norm(x, gamma, beta, ident, Mode::Eval, 1e-12, 0.1);
  for (size_t i = 0; i < x.data().size(); ++i)
    CHECK(same.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-9));

  // momentum 1.0 leaves the running stats equal to the latest batch stats
  BatchNormState<double> fresh;
  batch_norm(x, gamma, beta, fresh, Mode::Train, 1e-12, 1.0);
  for (int64_t c = 0; c < 3; ++c) {
    double mean = 0;
    for (int64_t n = 0; n < 4; ++n)
      for (int64_t i = 0; i < 4; ++i) mean += x.data()[(n * 3 + c) * 4 + i];
    mean /= 16.0;
    CHECK(fresh.mean[static_cast<size_t>(c)] == doctest::Approx(mean).epsilon(1e-12));
    double var = 0;
    for (int64_t n = 0; n < 4; ++n)
      for (int64_t i = 0; i < 4; ++i) {
        const double d = x.data()[(n * 3 + c) * 4 + i] - mean;
        var += d * d;
      }
    var /= 15.0;  // running stats use the unbiased estimate
    CHECK(fresh.var[static_cast<size_t>(c)] == doctest::Approx(var).epsilon(1e-12));
  }

  BatchNormState<double> st1;
  CHECK_THROWS_WITH_AS(batch_norm(random_dense({1, 3, 2, 2}, 22), gamma, beta, st1,
                                  Mode::Train, 1e-12, 0.1),
                       doctest::Contains("batch size >= 2"), std::invalid_argument);
}

TEST_CASE("concat and slice") {
  Tensor<double> single = random_dense({2, 3}, 23);
  CHECK(concat<double>({single}, 0).data() == single.data());

  Tensor<double> joined = concat<double>({Tensor<double>::from({2}, {1, 2}),
                                          Tensor<double>::from({1}, {3})}, 0);
  CHECK(joined.data() == std::vector<double>{1, 2, 3});

  // channel concat of k maps with c channels gives k*c channels
  std::vector<Tensor<double>> maps;
  for (uint64_t i = 0; i < 3; ++i) maps.push_back(random_dense({1, 2, 4, 4}, 30 + i));
  CHECK(concat(maps, 1).dim(1) == 6);

  // concat then slice recovers each input exactly
  for (int axis : {0, 1, 2}) {
    Tensor<double> a = random_dense({2, 3, 4}, 40 + axis);
    Tensor<double> b = random_dense({2, 3, 4}, 50 + axis);
    Tensor<double> cat = concat<double>({a, b}, axis);
    CHECK(slice(cat, axis, 0, a.dim(axis)).data() == a.data());
    CHECK(slice(cat, axis, a.dim(axis), b.dim(axis)).data() == b.data());
  }

  CHECK_THROWS_AS(concat<double>({random_dense({2, 3}, 60), random_dense({2, 4}, 61)}, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(slice(single, 0, 1, 5), std::invalid_argument);
}

TEST_CASE("reshape and unfold") {
  Tensor<double> x = random_dense({3, 8}, 70);
  Tensor<double> back = reshape(reshape(x, {4, 6}), {3, 8});
  CHECK(back.data() == x.data());

  Tensor<double> img = random_dense({1, 64, 64}, 71);
  Tensor<double> patches = unfold_cells(img, 16, 16);
  CHECK(patches.shape() == std::vector<int64_t>{16, 256});

  Tensor<double> block = random_dense({1, 4, 4}, 72);
  CHECK(unfold_cells(block, 4, 4).shape() == std::vector<int64_t>{1, 16});
  CHECK(unfold_cells(block, 4, 4).data() == block.data());

  // unfold composed with its inverse re-indexing is the exact identity
  Tensor<double> multi = random_dense({2, 6, 6}, 73);
  Tensor<double> cells = unfold_cells(multi, 3, 3);
  Tensor<double> restored = Tensor<double>::zeros({2, 6, 6});
  for (int64_t gy = 0; gy < 2; ++gy)
    for (int64_t gx = 0; gx < 2; ++gx)
      for (int64_t c = 0; c < 2; ++c)
        for (int64_t iy = 0; iy < 3; ++iy)
          for (int64_t ix = 0; ix < 3; ++ix)
            restored.data()[c * 36 + (gy * 3 + iy) * 6 + gx * 3 + ix] =
                cells.data()[(gy * 2 + gx) * 18 + (c * 3 + iy) * 3 + ix];
  CHECK(restored.data() == multi.data());

  CHECK_THROWS_AS(unfold_cells(img, 7, 7), std::invalid_argument);
  CHECK_THROWS_AS(reshape(x, {5, 5}), std::invalid_argument);
}

TEST_CASE("gather, tile, add_rows, transpose") {
  Tensor<double> x = random_dense({3, 2}, 80);
  Tensor<double> g = gather_rows(x, {2, 0});
  CHECK(g.data()[0] == x.data()[4]);
  CHECK(g.data()[2] == x.data()[0]);

  Tensor<double> t = tile_rows(x, 2);
  CHECK(t.shape() == std::vector<int64_t>{6, 2});
  CHECK(std::vector<double>(t.data().begin(), t.data().begin() + 6) == x.data());

  Tensor<double> v = Tensor<double>::from({2}, {10, 20});
  Tensor<double> ar = add_rows(x, v);
  CHECK(ar.data()[0] == x.data()[0] + 10);
  CHECK(ar.data()[5] == x.data()[5] + 20);

  Tensor<double> tr = transpose2d(x);
  CHECK(tr.shape() == std::vector<int64_t>{2, 3});
  CHECK(tr.data()[1] == x.data()[2]);

  CHECK_THROWS_AS(gather_rows(x, {3}), std::invalid_argument);
}

TEST_CASE("backward basics") {
  // sum: gradient is all ones
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    Tensor<double> x = random_dense({2, 3}, 90);
    x.set_requires_grad(true);
    Tensor<double> loss = sum_all(x);
    backward(loss);
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  // dot(x, x): gradient is 2x
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    Tensor<double> x = random_dense({5}, 91);
    x.set_requires_grad(true);
    Tensor<double> loss = sum_all(mul(x, x));
    backward(loss);
    for (size_t i = 0; i < 5; ++i)
      CHECK(x.grad()[i] == doctest::Approx(2 * x.data()[i]).epsilon(1e-14));
  }
  // reuse of one tensor accumulates both paths
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    Tensor<double> x = random_dense({3}, 92);
    x.set_requires_grad(true);
    Tensor<double> loss = sum_all(add(x, x));
    backward(loss);
    for (double g : x.grad()) CHECK(g == 2.0);
  }
  // error paths
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    Tensor<double> x = random_dense({3}, 93);
    x.set_requires_grad(true);
    Tensor<double> y = mul(x, x);
    CHECK_THROWS_AS(backward(y), std::invalid_argument);  // non-scalar
  }
  {
    Tensor<double> lone = Tensor<double>::scalar(1.0);
    lone.set_requires_grad(true);
    CHECK_THROWS_WITH_AS(backward(lone), doctest::Contains("without a recorded forward"),
                         std::invalid_argument);
  }
}

TEST_CASE("finite guard and csv dump") {
  CHECK(debug_checks_enabled());
  Tensor<double> inf = Tensor<double>::filled({2}, 1e308);
  CHECK_THROWS_AS(add(inf, inf), std::runtime_error);

  std::ostringstream os;
  to_csv(Tensor<double>::from({2, 2}, {1, 2, 3, 4}), os);
  CHECK(os.str() == "shape,2,2\n1,2\n3,4\n");
}
