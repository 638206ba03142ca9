#include "gdp/data/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace gdp::data {

namespace {
std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

std::vector<std::uint8_t> to_bytes(const Image& img) {
  std::vector<std::uint8_t> bytes(img.rgb.size());
  std::transform(img.rgb.begin(), img.rgb.end(), bytes.begin(), to_byte);
  return bytes;
}

png_image describe(const Image& img) {
  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.width);
  pi.height = static_cast<png_uint_32>(img.height);
  pi.format = PNG_FORMAT_RGB;
  return pi;
}
}  // namespace

void quantize(Image& img) {
  for (double& v : img.rgb) v = to_byte(v) / 255.0;
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  const auto bytes = to_bytes(img);
  png_image pi = describe(img);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&pi, nullptr, &size, 0, bytes.data(), 0, nullptr))
    throw std::runtime_error(std::string("png encode failed: ") + pi.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&pi, out.data(), &size, 0, bytes.data(), 0, nullptr))
    throw std::runtime_error(std::string("png encode failed: ") + pi.message);
  out.resize(size);
  return out;
}

void save_png(const std::filesystem::path& path, const Image& img) {
  const auto encoded = encode_png(img);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(encoded.data()), static_cast<std::streamsize>(encoded.size()));
}

Image load_png(const std::filesystem::path& path) {
  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pi, path.string().c_str()))
    throw std::runtime_error("cannot read png " + path.string() + ": " + pi.message);
  pi.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, bytes.data(), 0, nullptr))
    throw std::runtime_error("cannot decode png " + path.string() + ": " + pi.message);
  Image img(static_cast<int>(pi.height), static_cast<int>(pi.width));
  for (std::size_t i = 0; i < bytes.size(); ++i) img.rgb[i] = bytes[i] / 255.0;
  return img;
}

}  // namespace gdp::data
