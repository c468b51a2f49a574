#pragma once

#include <functional>
#include <iosfwd>
#include <string_view>

#include "dtnt/tensor.hpp"

namespace dtnt {

// Reverse-mode primitives. Every op validates shapes, computes the forward
// value eagerly and, when a tape is active and an input requires grad,
// records its backward closure. No implicit broadcasting except scale().

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> gelu(const Tensor<T>& a);
template <typename T> Tensor<T> sqrt_elem(const Tensor<T>& a);
template <typename T> Tensor<T> log_elem(const Tensor<T>& a);
template <typename T> Tensor<T> sum_all(const Tensor<T>& a);
template <typename T> Tensor<T> transpose2d(const Tensor<T>& a);

// tag-dispatched front for the pointwise family; b only for add/mul, s only
// for scale. Unknown tags are rejected.
template <typename T>
Tensor<T> elementwise(std::string_view op, const Tensor<T>& a,
                      const Tensor<T>* b = nullptr, T s = T(0));

// normalizes the last axis to mean 0 / var 1, then gamma * x + beta
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps);

template <typename T> Tensor<T> softmax(const Tensor<T>& x, int axis);

// cross-correlation, x is [Cin,H,W] or [N,Cin,H,W], k is [Cout,Cin,kh,kw]
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& k, int stride, int padding);

// average pooling, x is [C,H,W] or [N,C,H,W]
template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, int window, int stride);

// running statistics live outside the autodiff graph; they are stored in the
// working precision so checkpoints round-trip bit-exactly
template <typename T> struct BatchNormState {
  std::vector<T> mean;
  std::vector<T> var;
};

enum class Mode { Train, Eval };

// x is [N,C,...]; batch statistics in Train mode (N >= 2 required), running
// statistics in Eval mode. Running stats update: r = (1-momentum) r + momentum b.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, BatchNormState<T>& state, Mode mode,
                     T eps, T momentum);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int64_t start, int64_t len);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int64_t> new_shape);

// splits [C,H,W] into an exact grid of ch x cw cells; row g holds cell g
// (row-major over the grid) flattened channel-major. Pure re-indexing.
template <typename T>
Tensor<T> unfold_cells(const Tensor<T>& x, int cell_h, int cell_w);

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<int64_t>& idx);

template <typename T> Tensor<T> tile_rows(const Tensor<T>& x, int64_t times);

// adds v to every row of x ([R,d] + [d])
template <typename T>
Tensor<T> add_rows(const Tensor<T>& x, const Tensor<T>& v);

// replays the active tape in reverse from a scalar loss, then clears it
template <typename T> void backward(Tensor<T>& loss);

// max over coordinates of |analytic - numeric| / max(1,|analytic|,|numeric|)
// using central differences on f (which must return a scalar tensor).
// coord_budget < numel samples a deterministic random coordinate subset,
// which keeps checks on large inputs inside their runtime budget.
double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                  Tensor<double> x, double step, int64_t coord_budget = -1,
                  uint64_t subset_seed = 0);

// debug dump: first line "shape,<e0>,<e1>,...", then values row-major, one
// line per trailing-axis group
template <typename T> void to_csv(const Tensor<T>& t, std::ostream& os);

template <typename T> bool all_finite(const Tensor<T>& t);

}  // namespace dtnt
