#pragma once

#include <cstdint>
#include <vector>

#include "ghostsim/errors.hpp"

namespace ghostsim {

/// RGB image of linear intensities, nominally in [0,1]. Row-major,
/// interleaved channels: index = (y*width + x)*3 + c.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0.0) {}

  double& at(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  size_t size() const { return data.size(); }
  bool same_dims(const Image& o) const { return width == o.width && height == o.height; }
};

/// Hard clamp of every channel to [0,1].
Image clip01(Image img);

/// 8-bit quantization: round(255*v)/255 per channel, after clamping.
Image quantize8(Image img);

/// Quantized bytes, round(255*clamp(v)); used for checksums and PPM export.
std::vector<uint8_t> to_bytes(const Image& img);

/// FNV-1a over the quantized bytes; stable across platforms.
uint64_t image_checksum(const Image& img);

}  // namespace ghostsim
