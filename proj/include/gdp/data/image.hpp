#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gdp::data {

// Interleaved RGB, row-major, values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> rgb;

  Image() = default;
  Image(int h, int w, double fill = 0.0) : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3, fill) {}

  double& at(int y, int x, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  friend bool operator==(const Image&, const Image&) = default;
};

// Rounds every channel to the nearest multiple of 1/255 (the stored precision).
void quantize(Image& img);

// Lossless 8-bit PNG.
void save_png(const std::filesystem::path& path, const Image& img);
Image load_png(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const Image& img);

}  // namespace gdp::data
