#pragma once

#include "dtnt/tensor.hpp"

namespace dtnt {

// Synthetic fog severities used throughout the evaluation harness.
inline constexpr double kFogLight = 0.08;
inline constexpr double kFogMedium = 0.16;
inline constexpr double kFogHeavy = 0.24;

struct FogParams {
  double beta = 0.0;    // scattering coefficient, >= 0
  int64_t rows = 0;     // N_R
  int64_t cols = 0;     // N_C
  double center_i = 0;  // i0, defaults to (N_R-1)/2 with 0-based pixels
  double center_j = 0;  // j0

  static FogParams make(double beta, int64_t rows, int64_t cols);
};

// d = -0.04 * sqrt((i-i0)^2 + (j-j0)^2) + sqrt(max(N_R, N_C));
// i and j may be fractional but must lie inside the image
double fog_distance(double i, double j, const FogParams& p);

// t_d = exp(-beta * d)
double transmission(double beta, double d);

struct FogResult {
  Tensor<float> image;
  int64_t transmission_clamps = 0;  // t_d outside [0,1] before clamping
  int64_t pixel_clamps = 0;         // outputs clamped back into [0,1]
  int64_t clamp_count() const { return transmission_clamps + pixel_clamps; }
};

// Pixelwise blend toward airlight 0.5: v' = v * t_d + 0.5 * (1 - t_d).
// Input values must lie in [0,1] (1e-6 tolerance); multi-channel images are
// processed identically per channel. Deterministic.
FogResult apply_fog(const Tensor<float>& image, const FogParams& p);

}  // namespace dtnt
