#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dtnt/tensor.hpp"

namespace dtnt {

// 8-bit image, interleaved row-major, 1 (gray) or 3 (RGB) channels
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<uint8_t> pixels;
};

ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);

// ingest: divide by 255 into a planar [C,H,W] tensor
Tensor<float> image_to_tensor(const ImageU8& img);

// export: multiply by 255 with round-half-up, clamped to [0,255]
ImageU8 tensor_to_image(const Tensor<float>& t);

}  // namespace dtnt
