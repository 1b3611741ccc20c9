#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfn/errors.hpp"

namespace dfn {

// 8-bit grayscale raster, row-major.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int h, int w) : height(h), width(w) {
    if (h <= 0 || w <= 0) throw InputError("GrayImage: non-positive size");
    pixels.assign(static_cast<std::size_t>(h) * w, 0);
  }

  std::uint8_t at(int r, int c) const {
    return pixels[static_cast<std::size_t>(r) * width + c];
  }
  std::uint8_t& at(int r, int c) {
    return pixels[static_cast<std::size_t>(r) * width + c];
  }
};

// Reads a PGM (binary P5, 8-bit) or PNG (8-bit grayscale or RGB,
// non-interlaced) file. RGB collapses to luma with integer BT.601 weights:
// (77 r + 150 g + 29 b + 128) >> 8. Decode failures throw IoError naming the
// offending path.
GrayImage load_image(const std::string& path);

// Decode from memory; `origin` labels error messages.
GrayImage decode_image(const std::vector<std::uint8_t>& bytes, const std::string& origin);

void save_pgm(const GrayImage& img, const std::string& path);
void save_png(const GrayImage& img, const std::string& path);

std::vector<std::uint8_t> encode_pgm(const GrayImage& img);
std::vector<std::uint8_t> encode_png(const GrayImage& img);

}  // namespace dfn
