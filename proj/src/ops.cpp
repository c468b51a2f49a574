#include "dtnt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <ostream>

namespace dtnt {

namespace {

bool g_debug_checks =
#ifdef NDEBUG
    false;
#else
    true;
#endif

template <typename T>
bool should_record(std::initializer_list<const Tensor<T>*> inputs) {
  if (!Tape<T>::current()) return false;
  for (const Tensor<T>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename T> void check_finite(const Tensor<T>& t, const char* op) {
  if (!g_debug_checks) return;
  for (T v : t.data())
    if (!std::isfinite(static_cast<double>(v)))
      fail_numeric(std::string(op) + " produced a non-finite value");
}

template <typename T>
void record(std::function<void()> fn) {
  Tape<T>::current()->record(std::move(fn));
}

template <typename T> std::vector<T>* grad_if_needed(Tensor<T>& t) {
  return t.requires_grad() ? &t.grad() : nullptr;
}

}  // namespace

bool debug_checks_enabled() { return g_debug_checks; }
void set_debug_checks(bool on) { g_debug_checks = on; }

std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

template <typename T> bool all_finite(const Tensor<T>& t) {
  for (T v : t.data())
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    fail_shape("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> y = Tensor<T>::zeros({m, n});
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* py = y.data().data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t p = 0; p < k; ++p) {
      const T aip = pa[i * k + p];
      const T* brow = pb + p * n;
      T* yrow = py + i * n;
      for (int64_t j = 0; j < n; ++j) yrow[j] += aip * brow[j];
    }
  check_finite(y, "matmul");
  if (should_record<T>({&a, &b})) {
    y.set_requires_grad(true);
    Tensor<T> ac = a, bc = b, yc = y;
    record<T>([ac, bc, yc, m, k, n]() mutable {
      if (!yc.has_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      if (ac.requires_grad()) {
        std::vector<T>& ga = ac.grad();
        const T* pb = bc.data().data();
        for (int64_t i = 0; i < m; ++i)
          for (int64_t p = 0; p < k; ++p) {
            T s = 0;
            const T* gyr = gy.data() + i * n;
            const T* br = pb + p * n;
            for (int64_t j = 0; j < n; ++j) s += gyr[j] * br[j];
            ga[i * k + p] += s;
          }
      }
      if (bc.requires_grad()) {
        std::vector<T>& gb = bc.grad();
        const T* pa = ac.data().data();
        for (int64_t i = 0; i < m; ++i)
          for (int64_t p = 0; p < k; ++p) {
            const T aip = pa[i * k + p];
            const T* gyr = gy.data() + i * n;
            T* gbr = gb.data() + p * n;
            for (int64_t j = 0; j < n; ++j) gbr[j] += aip * gyr[j];
          }
      }
    });
  }
  return y;
}

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    fail_shape("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> y = a.clone_values();
  const std::vector<T>& vb = b.data();
  std::vector<T>& vy = y.data();
  for (size_t i = 0; i < vy.size(); ++i) vy[i] += vb[i];
  check_finite(y, "add");
  if (should_record<T>({&a, &b})) {
    y.set_requires_grad(true);
    Tensor<T> ac = a, bc = b, yc = y;
    record<T>([ac, bc, yc]() mutable {
      if (!yc.has_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      if (ac.requires_grad()) {
        std::vector<T>& ga = ac.grad();
        for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
      }
      if (bc.requires_grad()) {
        std::vector<T>& gb = bc.grad();
        for (size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
      }
    });
  }
  return y;
}

template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    fail_shape("mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> y = a.clone_values();
  const std::vector<T>& vb = b.data();
  std::vector<T>& vy = y.data();
  for (size_t i = 0; i < vy.size(); ++i) vy[i] *= vb[i];
  check_finite(y, "mul");
  if (should_record<T>({&a, &b})) {
    y.set_requires_grad(true);
    Tensor<T> ac = a, bc = b, yc = y;
    record<T>([ac, bc, yc]() mutable {
      if (!yc.has_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      if (ac.requires_grad()) {
        std::vector<T>& ga = ac.grad();
        const std::vector<T>& vb = bc.data();
        for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * vb[i];
      }
      if (bc.requires_grad()) {
        std::vector<T>& gb = bc.grad();
        const std::vector<T>& va = ac.data();
        for (size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * va[i];
      }
    });
  }
  return y;
}

template <typename T> Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> y = a.clone_values();
  for (T& v : y.data()) v *= s;
  check_finite(y, "scale");
  if (should_record<T>({&a})) {
    y.set_requires_grad(true);
    Tensor<T> ac = a, yc = y;
    record<T>([ac, yc, s]() mutable {
      if (!yc.has_grad() || !ac.requires_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      std::vector<T>& ga = ac.grad();
      for (size_t i = 0; i < gy.size(); ++i) ga[i] += s * gy[i];
    });
  }
  return y;
}

template <typename T> Tensor<T> relu(const Tensor<T>& a) {
  Tensor<T> y = a.clone_values();
  for (T& v : y.data())
    if (v < T(0)) v = T(0);
  if (should_record<T>({&a})) {
    y.set_requires_grad(true);
    Tensor<T> ac = a, yc = y;
    record<T>([ac, yc]() mutable {
      if (!yc.has_grad() || !ac.requires_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      const std::vector<T>& va = ac.data();
      std::vector<T>& ga = ac.grad();
      for (size_t i = 0; i < gy.size(); ++i)
        if (va[i] > T(0)) ga[i] += gy[i];
    });
  }
  return y;
}

template <typename T> Tensor<T> gelu(const Tensor<T>& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  Tensor<T> y = a.clone_values();
  for (T& v : y.data()) {
    double x = static_cast<double>(v);
    v = static_cast<T>(0.5 * x * (1.0 + std::erf(x * kInvSqrt2)));
  }
  check_finite(y, "gelu");
  if (should_record<T>({&a})) {
    y.set_requires_grad(true);
    Tensor<T> ac = a, yc = y;
    record<T>([ac, yc]() mutable {
      if (!yc.has_grad() || !ac.requires_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      const std::vector<T>& va = ac.data();
      std::vector<T>& ga = ac.grad();
      for (size_t i = 0; i < gy.size(); ++i) {
        double x = static_cast<double>(va[i]);
        double d = 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
                   x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
        ga[i] += gy[i] * static_cast<T>(d);
      }
    });
  }
  return y;
}

template <typename T> Tensor<T> sqrt_elem(const Tensor<T>& a) {
  for (T v : a.data())
    if (v < T(0)) fail_value("sqrt of negative value");
  Tensor<T> y = a.clone_values();
  for (T& v : y.data()) v = std::sqrt(v);
  check_finite(y, "sqrt");
  if (should_record<T>({&a})) {
    y.set_requires_grad(true);
    Tensor<T> ac = a, yc = y;
    record<T>([ac, yc]() mutable {
      if (!yc.has_grad() || !ac.requires_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      const std::vector<T>& vy = yc.data();
      std::vector<T>& ga = ac.grad();
      for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] / (T(2) * vy[i]);
    });
  }
  return y;
}

template <typename T> Tensor<T> log_elem(const Tensor<T>& a) {
  for (T v : a.data())
    if (v <= T(0)) fail_value("log of non-positive value");
  Tensor<T> y = a.clone_values();
  for (T& v : y.data()) v = std::log(v);
  check_finite(y, "log");
  if (should_record<T>({&a})) {
    y.set_requires_grad(true);
    Tensor<T> ac = a, yc = y;
    record<T>([ac, yc]() mutable {
      if (!yc.has_grad() || !ac.requires_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      const std::vector<T>& va = ac.data();
      std::vector<T>& ga = ac.grad();
      for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] / va[i];
    });
  }
  return y;
}

template <typename T> Tensor<T> sum_all(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.data()) s += v;
  Tensor<T> y = Tensor<T>::scalar(s);
  check_finite(y, "sum");
  if (should_record<T>({&a})) {
    y.set_requires_grad(true);
    Tensor<T> ac = a, yc = y;
    record<T>([ac, yc]() mutable {
      if (!yc.has_grad() || !ac.requires_grad()) return;
      const T g = yc.grad_view()[0];
      std::vector<T>& ga = ac.grad();
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
  }
  return y;
}

template <typename T> Tensor<T> transpose2d(const Tensor<T>& a) {
  if (a.rank() != 2) fail_shape("transpose2d: rank-2 expected, got " + shape_str(a.shape()));
  const int64_t m = a.dim(0), n = a.dim(1);
  Tensor<T> y = Tensor<T>::zeros({n, m});
  const T* pa = a.data().data();
  T* py = y.data().data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) py[j * m + i] = pa[i * n + j];
  if (should_record<T>({&a})) {
    y.set_requires_grad(true);
    Tensor<T> ac = a, yc = y;
    record<T>([ac, yc, m, n]() mutable {
      if (!yc.has_grad() || !ac.requires_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      std::vector<T>& ga = ac.grad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) ga[i * n + j] += gy[j * m + i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> elementwise(std::string_view op, const Tensor<T>& a, const Tensor<T>* b, T s) {
  auto need_b = [&]() -> const Tensor<T>& {
    if (!b) fail_value("elementwise " + std::string(op) + " needs a second operand");
    return *b;
  };
  if (op == "add") return add(a, need_b());
  if (op == "mul") return mul(a, need_b());
  if (op == "relu") return relu(a);
  if (op == "gelu") return gelu(a);
  if (op == "scale") return scale(a, s);
  fail_value("unknown op tag '" + std::string(op) + "'");
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps) {
  if (x.rank() < 1) fail_shape("layer_norm: input must have rank >= 1");
  const int64_t d = x.shape().back();
  if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d)
    fail_shape("layer_norm: last axis " + std::to_string(d) + " vs gamma " +
               shape_str(gamma.shape()) + ", beta " + shape_str(beta.shape()));
  if (!(eps > T(0))) fail_value("layer_norm: eps must be positive");
  const int64_t rows = x.numel() / d;
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  // saved for backward
  std::vector<T> xhat(static_cast<size_t>(rows * d));
  std::vector<T> inv_std(static_cast<size_t>(rows));
  const T* px = x.data().data();
  const T* pg = gamma.data().data();
  const T* pb = beta.data().data();
  T* py = y.data().data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* row = px + r * d;
    T mean = 0;
    for (int64_t i = 0; i < d; ++i) mean += row[i];
    mean /= static_cast<T>(d);
    T var = 0;
    for (int64_t i = 0; i < d; ++i) {
      T c = row[i] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    T inv = T(1) / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (int64_t i = 0; i < d; ++i) {
      T xh = (row[i] - mean) * inv;
      xhat[r * d + i] = xh;
      py[r * d + i] = pg[i] * xh + pb[i];
    }
  }
  check_finite(y, "layer_norm");
  if (should_record<T>({&x, &gamma, &beta})) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, gc = gamma, bc = beta, yc = y;
    record<T>([xc, gc, bc, yc, xhat = std::move(xhat), inv_std = std::move(inv_std),
               rows, d]() mutable {
      if (!yc.has_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      const T* pg = gc.data().data();
      if (gc.requires_grad()) {
        std::vector<T>& gg = gc.grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t i = 0; i < d; ++i) gg[i] += gy[r * d + i] * xhat[r * d + i];
      }
      if (bc.requires_grad()) {
        std::vector<T>& gb = bc.grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t i = 0; i < d; ++i) gb[i] += gy[r * d + i];
      }
      if (xc.requires_grad()) {
        std::vector<T>& gx = xc.grad();
        for (int64_t r = 0; r < rows; ++r) {
          T sum_g = 0, sum_gx = 0;
          for (int64_t i = 0; i < d; ++i) {
            T g = gy[r * d + i] * pg[i];
            sum_g += g;
            sum_gx += g * xhat[r * d + i];
          }
          const T mg = sum_g / static_cast<T>(d);
          const T mgx = sum_gx / static_cast<T>(d);
          const T inv = inv_std[r];
          for (int64_t i = 0; i < d; ++i) {
            T g = gy[r * d + i] * pg[i];
            gx[r * d + i] += inv * (g - mg - xhat[r * d + i] * mgx);
          }
        }
      }
    });
  }
  return y;
}

template <typename T> Tensor<T> softmax(const Tensor<T>& x, int axis) {
  if (axis < 0 || static_cast<size_t>(axis) >= x.rank())
    fail_shape("softmax: axis " + std::to_string(axis) + " out of range for " +
               shape_str(x.shape()));
  const auto& shape = x.shape();
  const int64_t L = shape[axis];
  int64_t inner = 1;
  for (size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const int64_t outer = x.numel() / (L * inner);
  Tensor<T> y = x.clone_values();
  T* py = y.data().data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t in = 0; in < inner; ++in) {
      T* base = py + o * L * inner + in;
      T mx = base[0];
      for (int64_t l = 1; l < L; ++l) mx = std::max(mx, base[l * inner]);
      T sum = 0;
      for (int64_t l = 0; l < L; ++l) {
        T e = std::exp(base[l * inner] - mx);
        base[l * inner] = e;
        sum += e;
      }
      for (int64_t l = 0; l < L; ++l) base[l * inner] /= sum;
    }
  check_finite(y, "softmax");
  if (should_record<T>({&x})) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, yc = y;
    record<T>([xc, yc, L, inner, outer]() mutable {
      if (!yc.has_grad() || !xc.requires_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      const std::vector<T>& vy = yc.data();
      std::vector<T>& gx = xc.grad();
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t in = 0; in < inner; ++in) {
          const int64_t b = o * L * inner + in;
          T dot = 0;
          for (int64_t l = 0; l < L; ++l) dot += gy[b + l * inner] * vy[b + l * inner];
          for (int64_t l = 0; l < L; ++l)
            gx[b + l * inner] += vy[b + l * inner] * (gy[b + l * inner] - dot);
        }
    });
  }
  return y;
}

namespace {

struct ConvDims {
  int64_t n, ci, h, w, co, kh, kw, ho, wo;
  bool batched;
};

template <typename T>
ConvDims conv_dims(const Tensor<T>& x, const Tensor<T>& k, int stride, int padding) {
  if (k.rank() != 4) fail_shape("conv2d: kernel must be [Cout,Cin,kh,kw], got " +
                                shape_str(k.shape()));
  if (stride < 1) fail_value("conv2d: stride must be >= 1");
  if (padding < 0) fail_value("conv2d: padding must be >= 0");
  ConvDims d{};
  d.batched = x.rank() == 4;
  if (!d.batched && x.rank() != 3)
    fail_shape("conv2d: input must be [C,H,W] or [N,C,H,W], got " + shape_str(x.shape()));
  d.n = d.batched ? x.dim(0) : 1;
  d.ci = x.dim(d.batched ? 1 : 0);
  d.h = x.dim(d.batched ? 2 : 1);
  d.w = x.dim(d.batched ? 3 : 2);
  d.co = k.dim(0);
  d.kh = k.dim(2);
  d.kw = k.dim(3);
  if (k.dim(1) != d.ci)
    fail_shape("conv2d: input channels " + std::to_string(d.ci) + " vs kernel " +
               shape_str(k.shape()));
  if (d.kh > d.h + 2 * padding || d.kw > d.w + 2 * padding)
    fail_shape("conv2d: kernel " + shape_str(k.shape()) + " larger than padded input " +
               shape_str(x.shape()) + " with padding " + std::to_string(padding));
  d.ho = (d.h + 2 * padding - d.kh) / stride + 1;
  d.wo = (d.w + 2 * padding - d.kw) / stride + 1;
  return d;
}

// valid output range along one axis for a fixed kernel offset
inline void conv_span(int64_t in_extent, int64_t out_extent, int64_t koff, int stride,
                      int padding, int64_t& lo, int64_t& hi) {
  // need 0 <= o*stride - padding + koff <= in_extent-1
  int64_t num = padding - koff;
  lo = num <= 0 ? 0 : (num + stride - 1) / stride;
  hi = (in_extent - 1 + padding - koff) / stride;
  if (hi > out_extent - 1) hi = out_extent - 1;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& k, int stride, int padding) {
  ConvDims d = conv_dims(x, k, stride, padding);
  std::vector<int64_t> out_shape =
      d.batched ? std::vector<int64_t>{d.n, d.co, d.ho, d.wo}
                : std::vector<int64_t>{d.co, d.ho, d.wo};
  Tensor<T> y = Tensor<T>::zeros(out_shape);
  const T* px = x.data().data();
  const T* pk = k.data().data();
  T* py = y.data().data();
  const int64_t xplane = d.h * d.w, yplane = d.ho * d.wo;
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t co = 0; co < d.co; ++co) {
      T* yp = py + (n * d.co + co) * yplane;
      for (int64_t ci = 0; ci < d.ci; ++ci) {
        const T* xp = px + (n * d.ci + ci) * xplane;
        const T* kp = pk + (co * d.ci + ci) * d.kh * d.kw;
        for (int64_t kh = 0; kh < d.kh; ++kh) {
          int64_t ho_lo, ho_hi;
          conv_span(d.h, d.ho, kh, stride, padding, ho_lo, ho_hi);
          for (int64_t kw = 0; kw < d.kw; ++kw) {
            const T wgt = kp[kh * d.kw + kw];
            int64_t wo_lo, wo_hi;
            conv_span(d.w, d.wo, kw, stride, padding, wo_lo, wo_hi);
            for (int64_t ho = ho_lo; ho <= ho_hi; ++ho) {
              const T* xrow = xp + (ho * stride - padding + kh) * d.w - padding + kw;
              T* yrow = yp + ho * d.wo;
              for (int64_t wo = wo_lo; wo <= wo_hi; ++wo)
                yrow[wo] += wgt * xrow[wo * stride];
            }
          }
        }
      }
    }
  check_finite(y, "conv2d");
  if (should_record<T>({&x, &k})) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, kc = k, yc = y;
    record<T>([xc, kc, yc, d, stride, padding]() mutable {
      if (!yc.has_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      const int64_t xplane = d.h * d.w, yplane = d.ho * d.wo;
      if (kc.requires_grad()) {
        std::vector<T>& gk = kc.grad();
        const T* px = xc.data().data();
        for (int64_t n = 0; n < d.n; ++n)
          for (int64_t co = 0; co < d.co; ++co) {
            const T* gyp = gy.data() + (n * d.co + co) * yplane;
            for (int64_t ci = 0; ci < d.ci; ++ci) {
              const T* xp = px + (n * d.ci + ci) * xplane;
              T* gkp = gk.data() + (co * d.ci + ci) * d.kh * d.kw;
              for (int64_t kh = 0; kh < d.kh; ++kh) {
                int64_t ho_lo, ho_hi;
                conv_span(d.h, d.ho, kh, stride, padding, ho_lo, ho_hi);
                for (int64_t kw = 0; kw < d.kw; ++kw) {
                  int64_t wo_lo, wo_hi;
                  conv_span(d.w, d.wo, kw, stride, padding, wo_lo, wo_hi);
                  T s = 0;
                  for (int64_t ho = ho_lo; ho <= ho_hi; ++ho) {
                    const T* xrow = xp + (ho * stride - padding + kh) * d.w - padding + kw;
                    const T* gyr = gyp + ho * d.wo;
                    for (int64_t wo = wo_lo; wo <= wo_hi; ++wo)
                      s += gyr[wo] * xrow[wo * stride];
                  }
                  gkp[kh * d.kw + kw] += s;
                }
              }
            }
          }
      }
      if (xc.requires_grad()) {
        std::vector<T>& gx = xc.grad();
        const T* pk = kc.data().data();
        for (int64_t n = 0; n < d.n; ++n)
          for (int64_t co = 0; co < d.co; ++co) {
            const T* gyp = gy.data() + (n * d.co + co) * yplane;
            for (int64_t ci = 0; ci < d.ci; ++ci) {
              T* gxp = gx.data() + (n * d.ci + ci) * xplane;
              const T* kp = pk + (co * d.ci + ci) * d.kh * d.kw;
              for (int64_t kh = 0; kh < d.kh; ++kh) {
                int64_t ho_lo, ho_hi;
                conv_span(d.h, d.ho, kh, stride, padding, ho_lo, ho_hi);
                for (int64_t kw = 0; kw < d.kw; ++kw) {
                  const T wgt = kp[kh * d.kw + kw];
                  int64_t wo_lo, wo_hi;
                  conv_span(d.w, d.wo, kw, stride, padding, wo_lo, wo_hi);
                  for (int64_t ho = ho_lo; ho <= ho_hi; ++ho) {
                    T* gxrow = gxp + (ho * stride - padding + kh) * d.w - padding + kw;
                    const T* gyr = gyp + ho * d.wo;
                    for (int64_t wo = wo_lo; wo <= wo_hi; ++wo)
                      gxrow[wo * stride] += wgt * gyr[wo];
                  }
                }
              }
            }
          }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, int window, int stride) {
  const bool batched = x.rank() == 4;
  if (!batched && x.rank() != 3)
    fail_shape("avg_pool2d: input must be [C,H,W] or [N,C,H,W], got " +
               shape_str(x.shape()));
  if (window < 1 || stride < 1) fail_value("avg_pool2d: window and stride must be >= 1");
  const int64_t n = batched ? x.dim(0) : 1;
  const int64_t c = x.dim(batched ? 1 : 0);
  const int64_t h = x.dim(batched ? 2 : 1);
  const int64_t w = x.dim(batched ? 3 : 2);
  if (window > h || window > w)
    fail_shape("avg_pool2d: window " + std::to_string(window) + " exceeds input " +
               shape_str(x.shape()));
  const int64_t ho = (h - window) / stride + 1;
  const int64_t wo = (w - window) / stride + 1;
  std::vector<int64_t> out_shape = batched ? std::vector<int64_t>{n, c, ho, wo}
                                           : std::vector<int64_t>{c, ho, wo};
  Tensor<T> y = Tensor<T>::zeros(out_shape);
  const T inv = T(1) / static_cast<T>(window * window);
  const T* px = x.data().data();
  T* py = y.data().data();
  for (int64_t p = 0; p < n * c; ++p) {
    const T* xp = px + p * h * w;
    T* yp = py + p * ho * wo;
    for (int64_t i = 0; i < ho; ++i)
      for (int64_t j = 0; j < wo; ++j) {
        T s = 0;
        for (int64_t a = 0; a < window; ++a)
          for (int64_t b = 0; b < window; ++b)
            s += xp[(i * stride + a) * w + j * stride + b];
        yp[i * wo + j] = s * inv;
      }
  }
  check_finite(y, "avg_pool2d");
  if (should_record<T>({&x})) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, yc = y;
    record<T>([xc, yc, n, c, h, w, ho, wo, window, stride, inv]() mutable {
      if (!yc.has_grad() || !xc.requires_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      std::vector<T>& gx = xc.grad();
      for (int64_t p = 0; p < n * c; ++p) {
        T* gxp = gx.data() + p * h * w;
        const T* gyp = gy.data() + p * ho * wo;
        for (int64_t i = 0; i < ho; ++i)
          for (int64_t j = 0; j < wo; ++j) {
            const T g = gyp[i * wo + j] * inv;
            for (int64_t a = 0; a < window; ++a)
              for (int64_t b = 0; b < window; ++b)
                gxp[(i * stride + a) * w + j * stride + b] += g;
          }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, Mode mode, T eps, T momentum) {
  if (x.rank() < 2) fail_shape("batch_norm: input must be [N,C,...], got " +
                               shape_str(x.shape()));
  const int64_t n = x.dim(0), c = x.dim(1);
  const int64_t spatial = x.numel() / (n * c);
  if (gamma.numel() != c || beta.numel() != c)
    fail_shape("batch_norm: " + std::to_string(c) + " channels vs gamma " +
               shape_str(gamma.shape()) + ", beta " + shape_str(beta.shape()));
  if (state.mean.empty()) {
    state.mean.assign(static_cast<size_t>(c), T(0));
    state.var.assign(static_cast<size_t>(c), T(1));
  }
  if (static_cast<int64_t>(state.mean.size()) != c)
    fail_shape("batch_norm: running stats sized " + std::to_string(state.mean.size()) +
               " vs " + std::to_string(c) + " channels");
  if (mode == Mode::Train && n < 2)
    fail_value("batch_norm: train mode needs batch size >= 2, got " + std::to_string(n));

  const int64_t m = n * spatial;
  std::vector<T> mean(static_cast<size_t>(c)), inv_std(static_cast<size_t>(c));
  if (mode == Mode::Train) {
    for (int64_t ch = 0; ch < c; ++ch) {
      double s = 0;
      for (int64_t b = 0; b < n; ++b) {
        const T* p = x.data().data() + (b * c + ch) * spatial;
        for (int64_t i = 0; i < spatial; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(m);
      double v = 0;
      for (int64_t b = 0; b < n; ++b) {
        const T* p = x.data().data() + (b * c + ch) * spatial;
        for (int64_t i = 0; i < spatial; ++i) {
          double dlt = p[i] - mu;
          v += dlt * dlt;
        }
      }
      const double var_b = v / static_cast<double>(m);  // biased, used to normalize
      mean[ch] = static_cast<T>(mu);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var_b + static_cast<double>(eps)));
      // running stats track the unbiased variance
      const double var_u = m > 1 ? v / static_cast<double>(m - 1) : var_b;
      const double mom = static_cast<double>(momentum);
      state.mean[ch] = static_cast<T>((1.0 - mom) * state.mean[ch] + mom * mu);
      state.var[ch] = static_cast<T>((1.0 - mom) * state.var[ch] + mom * var_u);
    }
  } else {
    for (int64_t ch = 0; ch < c; ++ch) {
      mean[ch] = state.mean[ch];
      inv_std[ch] = static_cast<T>(
          1.0 / std::sqrt(static_cast<double>(state.var[ch]) + static_cast<double>(eps)));
    }
  }

  Tensor<T> y = Tensor<T>::zeros(x.shape());
  const T* px = x.data().data();
  const T* pg = gamma.data().data();
  const T* pb = beta.data().data();
  T* py = y.data().data();
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* xp = px + (b * c + ch) * spatial;
      T* yp = py + (b * c + ch) * spatial;
      const T mu = mean[ch], inv = inv_std[ch], g = pg[ch], bt = pb[ch];
      for (int64_t i = 0; i < spatial; ++i) yp[i] = g * (xp[i] - mu) * inv + bt;
    }
  check_finite(y, "batch_norm");

  if (should_record<T>({&x, &gamma, &beta})) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, gc = gamma, bc = beta, yc = y;
    const bool train = mode == Mode::Train;
    record<T>([xc, gc, bc, yc, mean = std::move(mean), inv_std = std::move(inv_std), n, c,
               spatial, m, train]() mutable {
      if (!yc.has_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      const T* px = xc.data().data();
      const T* pg = gc.data().data();
      for (int64_t ch = 0; ch < c; ++ch) {
        const T mu = mean[ch], inv = inv_std[ch];
        T sum_g = 0, sum_gx = 0;
        for (int64_t b = 0; b < n; ++b) {
          const T* gyp = gy.data() + (b * c + ch) * spatial;
          const T* xp = px + (b * c + ch) * spatial;
          for (int64_t i = 0; i < spatial; ++i) {
            sum_g += gyp[i];
            sum_gx += gyp[i] * (xp[i] - mu) * inv;
          }
        }
        if (gc.requires_grad()) gc.grad()[ch] += sum_gx;
        if (bc.requires_grad()) bc.grad()[ch] += sum_g;
        if (xc.requires_grad()) {
          std::vector<T>& gx = xc.grad();
          const T g = pg[ch];
          if (train) {
            const T inv_m = T(1) / static_cast<T>(m);
            for (int64_t b = 0; b < n; ++b) {
              T* gxp = gx.data() + (b * c + ch) * spatial;
              const T* gyp = gy.data() + (b * c + ch) * spatial;
              const T* xp = px + (b * c + ch) * spatial;
              for (int64_t i = 0; i < spatial; ++i) {
                const T xh = (xp[i] - mu) * inv;
                gxp[i] += g * inv * (gyp[i] - sum_g * inv_m - xh * sum_gx * inv_m);
              }
            }
          } else {
            for (int64_t b = 0; b < n; ++b) {
              T* gxp = gx.data() + (b * c + ch) * spatial;
              const T* gyp = gy.data() + (b * c + ch) * spatial;
              for (int64_t i = 0; i < spatial; ++i) gxp[i] += g * inv * gyp[i];
            }
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) fail_shape("concat: no inputs");
  const size_t rank = parts[0].rank();
  if (axis < 0 || static_cast<size_t>(axis) >= rank)
    fail_shape("concat: axis " + std::to_string(axis) + " out of range");
  std::vector<int64_t> out_shape = parts[0].shape();
  for (size_t p = 1; p < parts.size(); ++p) {
    const auto& s = parts[p].shape();
    if (s.size() != rank) fail_shape("concat: rank mismatch");
    for (size_t i = 0; i < rank; ++i)
      if (static_cast<int>(i) != axis && s[i] != out_shape[i])
        fail_shape("concat: " + shape_str(parts[p].shape()) + " vs " +
                   shape_str(parts[0].shape()) + " along axis " + std::to_string(axis));
    out_shape[axis] += s[axis];
  }
  int64_t inner = 1;
  for (size_t i = axis + 1; i < rank; ++i) inner *= out_shape[i];
  int64_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[i];
  Tensor<T> y = Tensor<T>::zeros(out_shape);
  T* py = y.data().data();
  const int64_t out_stride = out_shape[axis] * inner;
  int64_t offset = 0;
  for (const Tensor<T>& part : parts) {
    const int64_t len = part.dim(axis) * inner;
    const T* pp = part.data().data();
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(py + o * out_stride + offset, pp + o * len,
                  static_cast<size_t>(len) * sizeof(T));
    offset += len;
  }
  bool any_grad = false;
  for (const Tensor<T>& p : parts)
    if (p.requires_grad()) any_grad = true;
  if (Tape<T>::current() && any_grad) {
    y.set_requires_grad(true);
    std::vector<Tensor<T>> pc = parts;
    Tensor<T> yc = y;
    record<T>([pc, yc, outer, inner, out_stride]() mutable {
      if (!yc.has_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      int64_t offset = 0;
      for (Tensor<T>& part : pc) {
        const int64_t plen = part.numel() / outer;
        if (part.requires_grad()) {
          std::vector<T>& gp = part.grad();
          for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < plen; ++i)
              gp[o * plen + i] += gy[o * out_stride + offset + i];
        }
        offset += plen;
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int64_t start, int64_t len) {
  if (axis < 0 || static_cast<size_t>(axis) >= x.rank())
    fail_shape("slice: axis " + std::to_string(axis) + " out of range");
  if (start < 0 || len <= 0 || start + len > x.dim(axis))
    fail_shape("slice: [" + std::to_string(start) + "," + std::to_string(start + len) +
               ") out of range for axis extent " + std::to_string(x.dim(axis)));
  std::vector<int64_t> out_shape = x.shape();
  out_shape[axis] = len;
  int64_t inner = 1;
  for (size_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape()[i];
  int64_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= x.shape()[i];
  const int64_t in_stride = x.dim(axis) * inner;
  const int64_t out_len = len * inner;
  Tensor<T> y = Tensor<T>::zeros(out_shape);
  const T* px = x.data().data();
  T* py = y.data().data();
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(py + o * out_len, px + o * in_stride + start * inner,
                static_cast<size_t>(out_len) * sizeof(T));
  if (should_record<T>({&x})) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, yc = y;
    record<T>([xc, yc, outer, inner, in_stride, out_len, start]() mutable {
      if (!yc.has_grad() || !xc.requires_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      std::vector<T>& gx = xc.grad();
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < out_len; ++i)
          gx[o * in_stride + start * inner + i] += gy[o * out_len + i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int64_t> new_shape) {
  int64_t n = 1;
  for (int64_t e : new_shape) {
    if (e <= 0) fail_shape("reshape: extent must be positive in " + shape_str(new_shape));
    n *= e;
  }
  if (n != x.numel())
    fail_shape("reshape: " + shape_str(x.shape()) + " to " + shape_str(new_shape) +
               " changes element count");
  Tensor<T> y = Tensor<T>::from(std::move(new_shape), x.data());
  if (should_record<T>({&x})) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, yc = y;
    record<T>([xc, yc]() mutable {
      if (!yc.has_grad() || !xc.requires_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      std::vector<T>& gx = xc.grad();
      for (size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> unfold_cells(const Tensor<T>& x, int cell_h, int cell_w) {
  if (x.rank() != 3) fail_shape("unfold: input must be [C,H,W], got " + shape_str(x.shape()));
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (cell_h <= 0 || cell_w <= 0 || h % cell_h != 0 || w % cell_w != 0)
    fail_shape("unfold: cells " + std::to_string(cell_h) + "x" + std::to_string(cell_w) +
               " do not divide " + shape_str(x.shape()));
  const int64_t gh = h / cell_h, gw = w / cell_w;
  const int64_t cells = gh * gw, cols = c * cell_h * cell_w;
  Tensor<T> y = Tensor<T>::zeros({cells, cols});
  const T* px = x.data().data();
  T* py = y.data().data();
  for (int64_t gy_ = 0; gy_ < gh; ++gy_)
    for (int64_t gx_ = 0; gx_ < gw; ++gx_) {
      T* row = py + (gy_ * gw + gx_) * cols;
      for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t iy = 0; iy < cell_h; ++iy)
          for (int64_t ix = 0; ix < cell_w; ++ix)
            row[(ch * cell_h + iy) * cell_w + ix] =
                px[ch * h * w + (gy_ * cell_h + iy) * w + gx_ * cell_w + ix];
    }
  if (should_record<T>({&x})) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, yc = y;
    record<T>([xc, yc, c, h, w, cell_h, cell_w, gh, gw, cols]() mutable {
      if (!yc.has_grad() || !xc.requires_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      std::vector<T>& gx = xc.grad();
      for (int64_t gy_ = 0; gy_ < gh; ++gy_)
        for (int64_t gx_ = 0; gx_ < gw; ++gx_) {
          const T* row = gy.data() + (gy_ * gw + gx_) * cols;
          for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t iy = 0; iy < cell_h; ++iy)
              for (int64_t ix = 0; ix < cell_w; ++ix)
                gx[ch * h * w + (gy_ * cell_h + iy) * w + gx_ * cell_w + ix] +=
                    row[(ch * cell_h + iy) * cell_w + ix];
        }
    });
  }
  return y;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<int64_t>& idx) {
  if (x.rank() != 2) fail_shape("gather_rows: input must be rank 2, got " +
                                shape_str(x.shape()));
  const int64_t r = x.dim(0), d = x.dim(1);
  for (int64_t i : idx)
    if (i < 0 || i >= r)
      fail_shape("gather_rows: index " + std::to_string(i) + " out of range [0," +
                 std::to_string(r) + ")");
  Tensor<T> y = Tensor<T>::zeros({static_cast<int64_t>(idx.size()), d});
  const T* px = x.data().data();
  T* py = y.data().data();
  for (size_t i = 0; i < idx.size(); ++i)
    std::memcpy(py + i * d, px + idx[i] * d, static_cast<size_t>(d) * sizeof(T));
  if (should_record<T>({&x})) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, yc = y;
    record<T>([xc, yc, idx, d]() mutable {
      if (!yc.has_grad() || !xc.requires_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      std::vector<T>& gx = xc.grad();
      for (size_t i = 0; i < idx.size(); ++i)
        for (int64_t j = 0; j < d; ++j) gx[idx[i] * d + j] += gy[i * d + j];
    });
  }
  return y;
}

template <typename T> Tensor<T> tile_rows(const Tensor<T>& x, int64_t times) {
  if (x.rank() != 2) fail_shape("tile_rows: input must be rank 2, got " +
                                shape_str(x.shape()));
  if (times < 1) fail_value("tile_rows: times must be >= 1");
  const int64_t r = x.dim(0), d = x.dim(1);
  Tensor<T> y = Tensor<T>::zeros({times * r, d});
  const T* px = x.data().data();
  T* py = y.data().data();
  for (int64_t t = 0; t < times; ++t)
    std::memcpy(py + t * r * d, px, static_cast<size_t>(r * d) * sizeof(T));
  if (should_record<T>({&x})) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, yc = y;
    record<T>([xc, yc, times, r, d]() mutable {
      if (!yc.has_grad() || !xc.requires_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      std::vector<T>& gx = xc.grad();
      for (int64_t t = 0; t < times; ++t)
        for (int64_t i = 0; i < r * d; ++i) gx[i] += gy[t * r * d + i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> add_rows(const Tensor<T>& x, const Tensor<T>& v) {
  if (x.rank() != 2 || v.rank() != 1 || v.dim(0) != x.dim(1))
    fail_shape("add_rows: " + shape_str(x.shape()) + " + " + shape_str(v.shape()));
  const int64_t r = x.dim(0), d = x.dim(1);
  Tensor<T> y = x.clone_values();
  const T* pv = v.data().data();
  T* py = y.data().data();
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < d; ++j) py[i * d + j] += pv[j];
  check_finite(y, "add_rows");
  if (should_record<T>({&x, &v})) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, vc = v, yc = y;
    record<T>([xc, vc, yc, r, d]() mutable {
      if (!yc.has_grad()) return;
      const std::vector<T>& gy = yc.grad_view();
      if (xc.requires_grad()) {
        std::vector<T>& gx = xc.grad();
        for (size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
      }
      if (vc.requires_grad()) {
        std::vector<T>& gv = vc.grad();
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < d; ++j) gv[j] += gy[i * d + j];
      }
    });
  }
  return y;
}

template <typename T> void backward(Tensor<T>& loss) {
  if (loss.numel() != 1)
    fail_shape("backward: loss must be scalar, got " + shape_str(loss.shape()));
  Tape<T>* tape = Tape<T>::current();
  if (!tape || tape->empty())
    fail_value("backward without a recorded forward pass");
  loss.grad()[0] = T(1);
  tape->replay_reverse();
  tape->clear();
}

double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                  Tensor<double> x, double step, int64_t coord_budget,
                  uint64_t subset_seed) {
  // analytic gradient
  Tensor<double> xa = x.clone_values();
  xa.set_requires_grad(true);
  std::vector<double> analytic;
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    Tensor<double> y = f(xa);
    if (y.numel() != 1) fail_shape("grad_check: f must return a scalar");
    if (!all_finite(y)) fail_numeric("grad_check: non-finite function value");
    backward(y);
    analytic = xa.has_grad() ? xa.grad() : std::vector<double>(x.numel(), 0.0);
  }

  std::vector<int64_t> coords(static_cast<size_t>(x.numel()));
  std::iota(coords.begin(), coords.end(), 0);
  if (coord_budget > 0 && coord_budget < x.numel()) {
    Rng rng(Rng::mix(subset_seed, 0x67c0ffee));
    rng.shuffle(coords);
    coords.resize(static_cast<size_t>(coord_budget));
  }

  double max_err = 0.0;
  for (int64_t i : coords) {
    Tensor<double> xp = x.clone_values();
    xp.data()[i] += step;
    Tensor<double> xm = x.clone_values();
    xm.data()[i] -= step;
    const double fp = f(xp).item();
    const double fm = f(xm).item();
    if (!std::isfinite(fp) || !std::isfinite(fm))
      fail_numeric("grad_check: non-finite intermediate at coordinate " +
                   std::to_string(i));
    const double numeric = (fp - fm) / (2.0 * step);
    const double a = analytic[i];
    const double err =
        std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    max_err = std::max(max_err, err);
  }
  return max_err;
}

template <typename T> void to_csv(const Tensor<T>& t, std::ostream& os) {
  os << "shape";
  for (int64_t e : t.shape()) os << ',' << e;
  os << '\n';
  const int64_t last = t.shape().back();
  const auto& v = t.data();
  for (int64_t i = 0; i < t.numel(); i += last) {
    for (int64_t j = 0; j < last; ++j) {
      if (j) os << ',';
      os << v[i + j];
    }
    os << '\n';
  }
}

#define DTNT_INSTANTIATE_OPS(T)                                                        \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                    \
  template Tensor<T> relu<T>(const Tensor<T>&);                                        \
  template Tensor<T> gelu<T>(const Tensor<T>&);                                        \
  template Tensor<T> sqrt_elem<T>(const Tensor<T>&);                                   \
  template Tensor<T> log_elem<T>(const Tensor<T>&);                                    \
  template Tensor<T> sum_all<T>(const Tensor<T>&);                                     \
  template Tensor<T> transpose2d<T>(const Tensor<T>&);                                 \
  template Tensor<T> elementwise<T>(std::string_view, const Tensor<T>&,                \
                                    const Tensor<T>*, T);                              \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&,                 \
                                   const Tensor<T>&, T);                               \
  template Tensor<T> softmax<T>(const Tensor<T>&, int);                                \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, int, int);          \
  template Tensor<T> avg_pool2d<T>(const Tensor<T>&, int, int);                        \
  template Tensor<T> batch_norm<T>(const Tensor<T>&, const Tensor<T>&,                 \
                                   const Tensor<T>&, BatchNormState<T>&, Mode, T, T);  \
  template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, int);                    \
  template Tensor<T> slice<T>(const Tensor<T>&, int, int64_t, int64_t);                \
  template Tensor<T> reshape<T>(const Tensor<T>&, std::vector<int64_t>);               \
  template Tensor<T> unfold_cells<T>(const Tensor<T>&, int, int);                      \
  template Tensor<T> gather_rows<T>(const Tensor<T>&, const std::vector<int64_t>&);    \
  template Tensor<T> tile_rows<T>(const Tensor<T>&, int64_t);                          \
  template Tensor<T> add_rows<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template void backward<T>(Tensor<T>&);                                               \
  template void to_csv<T>(const Tensor<T>&, std::ostream&);                            \
  template bool all_finite<T>(const Tensor<T>&);

DTNT_INSTANTIATE_OPS(float)
DTNT_INSTANTIATE_OPS(double)

#undef DTNT_INSTANTIATE_OPS

}  // namespace dtnt
