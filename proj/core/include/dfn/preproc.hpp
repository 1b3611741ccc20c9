#pragma once

#include <string>
#include <vector>

#include "dfn/image.hpp"
#include "dfn/rng.hpp"

namespace dfn {

// Single-channel float raster, row-major.
struct FloatPlane {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  FloatPlane() = default;
  FloatPlane(int h, int w) : height(h), width(w) {
    if (h <= 0 || w <= 0) throw InputError("FloatPlane: non-positive size");
    values.assign(static_cast<std::size_t>(h) * w, 0.0f);
  }
  float at(int r, int c) const {
    return values[static_cast<std::size_t>(r) * width + c];
  }
  float& at(int r, int c) {
    return values[static_cast<std::size_t>(r) * width + c];
  }
};

// The model input: gray, LBP and Gabor planes of identical extent, all values
// in [0,1].
struct ThreeChannelImage {
  FloatPlane gray, lbp, gabor;

  int side() const { return gray.height; }
  void validate() const;  // throws ShapeError / InputError on violations
};

struct LbpConfig {
  int neighbors = 8;  // only 8 supported; the code alphabet is P+2 = 10
  int radius = 1;
  // Neighbor sampling. Rounded-grid offsets (default) make the code map
  // exactly invariant under monotone intensity remaps; bilinear sampling of
  // the circle is available but interpolation breaks that exactness.
  bool bilinear_sampling = false;
};

struct GaborConfig {
  int kernel_size = 51;
  double theta = 11.55 * 3.14159265358979323846 / 180.0;  // radians
  double sigma = 8.0;
  double lambda = 16.0;
  double gamma = 0.5;
  double psi = 0.0;
};

struct AugmentConfig {
  int target_size = 224;
  double rotation_deg = 10.0;    // rotation drawn from ±this
  double translate_frac = 0.05;  // of image side, drawn from ±this
  double scale_lo = 0.9;
  double scale_hi = 1.1;
  double crop_pad_frac = 0.1;    // canvas padding before the random crop
};

struct PreprocConfig {
  LbpConfig lbp;
  GaborConfig gabor;
  int target_size = 224;
};

// Rotation-invariant uniform LBP codes, scaled by 1/(P+1) into [0,1].
// Interior pixels: threshold the P neighbors on the radius-R circle against
// the center with >=, then map patterns with <= 2 circular transitions to
// their popcount and the rest to P+1. Border pixels (distance < R from any
// edge) take the non-uniform code P+1.
FloatPlane compute_lbp_riu2(const GrayImage& img, const LbpConfig& cfg);

// Real Gabor kernel, kernel_size^2 coefficients row-major:
// exp(-(x'^2 + gamma^2 y'^2)/(2 sigma^2)) * cos(2 pi x'/lambda + psi)
// with (x', y') the theta-rotated coordinates centered at the midpoint.
std::vector<double> gabor_kernel(const GaborConfig& cfg);

// Same-size correlation of a float plane with the Gabor kernel, reflect
// padding (edge pixel included in the mirror). This is the pre-rescale
// response; it is linear in the input.
FloatPlane gabor_response(const FloatPlane& img, const GaborConfig& cfg);

// Normalizes pixels to [0,1], correlates, then affinely rescales the
// response to [0,1] by its own min/max. Constant response maps to all 0.5.
FloatPlane gabor_filter(const GrayImage& img, const GaborConfig& cfg);

// Bilinear resize with half-pixel centers; exact copy when sizes match.
GrayImage resize_bilinear(const GrayImage& img, int out_height, int out_width);

// Full channel assembly: resize gray to target first, then compute LBP and
// Gabor at target scale. Rejects inputs smaller than 64 pixels per side
// (ingestion contract).
ThreeChannelImage assemble_channels(const GrayImage& img, const LbpConfig& lbp_cfg,
                                    const GaborConfig& gabor_cfg, int target_size = 224);
ThreeChannelImage assemble_channels(const GrayImage& img, const PreprocConfig& cfg);

// Training-time augmentation: one affine draw (rotation, translation,
// isotropic scale about the center) applied identically to all three planes,
// then a random crop from a crop_pad_frac-padded canvas. Zero ranges leave
// the image untouched.
ThreeChannelImage augment(const ThreeChannelImage& img, const AugmentConfig& cfg, Rng& rng);

// Pre-computed 3-channel cache blob: 16-byte header (magic "DFN3CH01",
// u16 height, u16 width, u32 reserved), then 3*H*W little-endian f32 values
// in plane order gray, lbp, gabor.
void write_cache_blob(const ThreeChannelImage& img, const std::string& path);
ThreeChannelImage read_cache_blob(const std::string& path);

}  // namespace dfn
