#include "dtnt/fog.hpp"

#include <algorithm>
#include <cmath>

namespace dtnt {

FogParams FogParams::make(double beta, int64_t rows, int64_t cols) {
  if (beta < 0) fail_value("fog: beta must be nonnegative, got " + std::to_string(beta));
  if (rows < 1 || cols < 1) fail_value("fog: image must be at least 1x1");
  FogParams p;
  p.beta = beta;
  p.rows = rows;
  p.cols = cols;
  p.center_i = static_cast<double>(rows - 1) / 2.0;
  p.center_j = static_cast<double>(cols - 1) / 2.0;
  return p;
}

double fog_distance(double i, double j, const FogParams& p) {
  if (i < 0 || i >= static_cast<double>(p.rows) || j < 0 ||
      j >= static_cast<double>(p.cols))
    fail_value("fog: pixel (" + std::to_string(i) + "," + std::to_string(j) +
               ") outside " + std::to_string(p.rows) + "x" + std::to_string(p.cols));
  const double di = i - p.center_i, dj = j - p.center_j;
  return -0.04 * std::sqrt(di * di + dj * dj) +
         std::sqrt(static_cast<double>(std::max(p.rows, p.cols)));
}

double transmission(double beta, double d) {
  if (beta < 0) fail_value("fog: beta must be nonnegative");
  return std::exp(-beta * d);
}

FogResult apply_fog(const Tensor<float>& image, const FogParams& p) {
  const bool has_channels = image.rank() == 3;
  if (!has_channels && image.rank() != 2)
    fail_shape("fog: image must be [H,W] or [C,H,W], got " + shape_str(image.shape()));
  const int64_t c = has_channels ? image.dim(0) : 1;
  const int64_t h = image.dim(has_channels ? 1 : 0);
  const int64_t w = image.dim(has_channels ? 2 : 1);
  if (h != p.rows || w != p.cols)
    fail_shape("fog: image " + shape_str(image.shape()) + " vs params " +
               std::to_string(p.rows) + "x" + std::to_string(p.cols));
  for (float v : image.data())
    if (v < -1e-6f || v > 1.0f + 1e-6f)
      fail_value("fog: input must be normalized to [0,1], found " + std::to_string(v));

  FogResult res;
  res.image = Tensor<float>::zeros(image.shape());
  std::vector<double> t_row(static_cast<size_t>(w));
  const float* src = image.data().data();
  float* dst = res.image.data().data();
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      double t = transmission(p.beta, fog_distance(static_cast<double>(i),
                                                   static_cast<double>(j), p));
      if (t < 0.0 || t > 1.0) {
        ++res.transmission_clamps;
        t = std::clamp(t, 0.0, 1.0);
      }
      t_row[static_cast<size_t>(j)] = t;
    }
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t j = 0; j < w; ++j) {
        const int64_t at = ch * h * w + i * w + j;
        // algebraically V*t + 0.5*(1-t); this form keeps 0.5 an exact fixed
        // point and beta=0 the exact identity
        double v = 0.5 + (static_cast<double>(src[at]) - 0.5) * t_row[static_cast<size_t>(j)];
        if (v < 0.0 || v > 1.0) {
          ++res.pixel_clamps;
          v = std::clamp(v, 0.0, 1.0);
        }
        dst[at] = static_cast<float>(v);
      }
  }
  return res;
}

}  // namespace dtnt
