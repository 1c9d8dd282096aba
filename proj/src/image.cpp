#include "ghostsim/image.hpp"

#include <algorithm>
#include <cmath>

namespace ghostsim {

Image clip01(Image img) {
  for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
  return img;
}

Image quantize8(Image img) {
  for (double& v : img.data) v = std::round(255.0 * std::clamp(v, 0.0, 1.0)) / 255.0;
  return img;
}

std::vector<uint8_t> to_bytes(const Image& img) {
  std::vector<uint8_t> out(img.data.size());
  for (size_t i = 0; i < img.data.size(); ++i)
    out[i] = static_cast<uint8_t>(std::round(255.0 * std::clamp(img.data[i], 0.0, 1.0)));
  return out;
}

uint64_t image_checksum(const Image& img) {
  uint64_t h = 0xCBF29CE484222325ULL;
  auto mixin = [&h](uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  };
  mixin(static_cast<uint64_t>(img.width));
  mixin(static_cast<uint64_t>(img.height));
  for (uint8_t byte : to_bytes(img)) {
    h ^= byte;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace ghostsim
