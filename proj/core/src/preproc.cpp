#include "dfn/preproc.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "dfn/bytes.hpp"

namespace dfn {

void ThreeChannelImage::validate() const {
  const FloatPlane* planes[3] = {&gray, &lbp, &gabor};
  for (const FloatPlane* p : planes) {
    if (p->height != gray.height || p->width != gray.width)
      throw ShapeError("ThreeChannelImage: plane extents differ");
    if (p->height <= 0 || p->width <= 0)
      throw ShapeError("ThreeChannelImage: empty plane");
    for (float v : p->values)
      if (!(v >= 0.0f && v <= 1.0f))
        throw InputError("ThreeChannelImage: value outside [0,1]");
  }
}

namespace {

void validate_lbp(const LbpConfig& cfg) {
  if (cfg.neighbors != 8)
    throw ConfigError("LbpConfig: only neighbors=8 supported");
  if (cfg.radius < 1) throw ConfigError("LbpConfig: radius must be >= 1");
}

void validate_gabor(const GaborConfig& cfg) {
  if (cfg.kernel_size < 3 || cfg.kernel_size % 2 == 0)
    throw ConfigError("GaborConfig: kernel_size must be odd and >= 3");
  if (!(cfg.sigma > 0.0) || !(cfg.lambda > 0.0))
    throw ConfigError("GaborConfig: sigma and lambda must be > 0");
}

inline int reflect_index(int i, int n) {
  // mirror including the edge sample: -1 -> 0, n -> n-1
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

// circular transitions in an 8-bit neighbor pattern
inline int transitions(unsigned bits, int p) {
  int t = 0;
  for (int k = 0; k < p; ++k) {
    const unsigned a = (bits >> k) & 1u;
    const unsigned b = (bits >> ((k + 1) % p)) & 1u;
    t += static_cast<int>(a ^ b);
  }
  return t;
}

inline float bilinear_at(const GrayImage& img, double y, double x) {
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0, fx = x - x0;
  auto px = [&](int r, int c) -> double {
    return img.at(std::clamp(r, 0, img.height - 1), std::clamp(c, 0, img.width - 1));
  };
  return static_cast<float>((1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                            fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1)));
}

}  // namespace

FloatPlane compute_lbp_riu2(const GrayImage& img, const LbpConfig& cfg) {
  validate_lbp(cfg);
  const int r = cfg.radius;
  if (img.height <= 2 * r || img.width <= 2 * r)
    throw InputError("compute_lbp_riu2: image extents must exceed 2*radius");

  const int p = cfg.neighbors;
  const float inv = 1.0f / static_cast<float>(p + 1);

  // neighbor offsets on the circle, k=0 pointing +x, counter-clockwise in
  // image coordinates (y grows downward)
  double oy[8], ox[8];
  int iy[8], ix[8];
  for (int k = 0; k < p; ++k) {
    const double a = 2.0 * 3.14159265358979323846 * k / p;
    ox[k] = r * std::cos(a);
    oy[k] = r * std::sin(a);
    ix[k] = static_cast<int>(std::lround(ox[k]));
    iy[k] = static_cast<int>(std::lround(oy[k]));
  }

  FloatPlane out(img.height, img.width);
  // border pixels carry the non-uniform code (p+1)/(p+1) = 1
  std::fill(out.values.begin(), out.values.end(), 1.0f);

  for (int y = r; y < img.height - r; ++y) {
    for (int x = r; x < img.width - r; ++x) {
      const std::uint8_t center = img.at(y, x);
      unsigned bits = 0;
      if (cfg.bilinear_sampling) {
        for (int k = 0; k < p; ++k) {
          const float v = bilinear_at(img, y + oy[k], x + ox[k]);
          if (v >= static_cast<float>(center)) bits |= 1u << k;
        }
      } else {
        for (int k = 0; k < p; ++k) {
          if (img.at(y + iy[k], x + ix[k]) >= center) bits |= 1u << k;
        }
      }
      int code;
      if (transitions(bits, p) <= 2) {
        code = static_cast<int>(std::popcount(bits));
      } else {
        code = p + 1;
      }
      out.at(y, x) = static_cast<float>(code) * inv;
    }
  }
  return out;
}

std::vector<double> gabor_kernel(const GaborConfig& cfg) {
  validate_gabor(cfg);
  const int ks = cfg.kernel_size;
  const int half = ks / 2;
  std::vector<double> k(static_cast<std::size_t>(ks) * ks);
  const double ct = std::cos(cfg.theta), st = std::sin(cfg.theta);
  const double two_pi = 2.0 * 3.14159265358979323846;
  for (int y = -half; y <= half; ++y) {
    for (int x = -half; x <= half; ++x) {
      const double xr = x * ct + y * st;
      const double yr = -x * st + y * ct;
      const double env = std::exp(-(xr * xr + cfg.gamma * cfg.gamma * yr * yr) /
                                  (2.0 * cfg.sigma * cfg.sigma));
      k[static_cast<std::size_t>(y + half) * ks + (x + half)] =
          env * std::cos(two_pi * xr / cfg.lambda + cfg.psi);
    }
  }
  return k;
}

FloatPlane gabor_response(const FloatPlane& img, const GaborConfig& cfg) {
  const auto kern = gabor_kernel(cfg);
  const int ks = cfg.kernel_size;
  const int half = ks / 2;
  const int h = img.height, w = img.width;

  // reflect-pad once; correlation then needs no index checks
  const int ph = h + 2 * half, pw = w + 2 * half;
  std::vector<double> padded(static_cast<std::size_t>(ph) * pw);
  for (int y = 0; y < ph; ++y) {
    const int sy = reflect_index(y - half, h);
    for (int x = 0; x < pw; ++x)
      padded[static_cast<std::size_t>(y) * pw + x] = img.at(sy, reflect_index(x - half, w));
  }

  FloatPlane out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      const double* krow = kern.data();
      for (int ky = 0; ky < ks; ++ky) {
        const double* prow = padded.data() + static_cast<std::size_t>(y + ky) * pw + x;
        for (int kx = 0; kx < ks; ++kx) acc += krow[kx] * prow[kx];
        krow += ks;
      }
      out.at(y, x) = static_cast<float>(acc);
    }
  }
  return out;
}

FloatPlane gabor_filter(const GrayImage& img, const GaborConfig& cfg) {
  FloatPlane norm(img.height, img.width);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    norm.values[i] = static_cast<float>(img.pixels[i]) / 255.0f;
  FloatPlane resp = gabor_response(norm, cfg);

  float lo = resp.values[0], hi = resp.values[0];
  for (float v : resp.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo < 1e-12f) {
    std::fill(resp.values.begin(), resp.values.end(), 0.5f);
    return resp;
  }
  const float inv = 1.0f / (hi - lo);
  for (float& v : resp.values) v = (v - lo) * inv;
  return resp;
}

GrayImage resize_bilinear(const GrayImage& img, int out_height, int out_width) {
  if (out_height <= 0 || out_width <= 0)
    throw InputError("resize_bilinear: non-positive output size");
  if (out_height == img.height && out_width == img.width) return img;

  GrayImage out(out_height, out_width);
  const double sy = static_cast<double>(img.height) / out_height;
  const double sx = static_cast<double>(img.width) / out_width;
  for (int y = 0; y < out_height; ++y) {
    const double src_y = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < out_width; ++x) {
      const double src_x = (x + 0.5) * sx - 0.5;
      const float v = bilinear_at(img, src_y, src_x);
      out.at(y, x) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return out;
}

ThreeChannelImage assemble_channels(const GrayImage& img, const LbpConfig& lbp_cfg,
                                    const GaborConfig& gabor_cfg, int target_size) {
  if (img.height < 64 || img.width < 64)
    throw InputError("assemble_channels: image below 64x64 ingestion minimum (" +
                     std::to_string(img.height) + "x" + std::to_string(img.width) + ")");
  if (target_size < 64) throw ConfigError("assemble_channels: target_size below 64");

  const GrayImage resized = resize_bilinear(img, target_size, target_size);
  ThreeChannelImage out;
  out.gray = FloatPlane(target_size, target_size);
  for (std::size_t i = 0; i < resized.pixels.size(); ++i)
    out.gray.values[i] = static_cast<float>(resized.pixels[i]) / 255.0f;
  out.lbp = compute_lbp_riu2(resized, lbp_cfg);
  out.gabor = gabor_filter(resized, gabor_cfg);
  return out;
}

ThreeChannelImage assemble_channels(const GrayImage& img, const PreprocConfig& cfg) {
  return assemble_channels(img, cfg.lbp, cfg.gabor, cfg.target_size);
}

namespace {

float sample_plane_bilinear(const FloatPlane& p, double y, double x) {
  // zero outside the image; interior uses bilinear weights
  if (y <= -1.0 || x <= -1.0 || y >= p.height || x >= p.width) return 0.0f;
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0, fx = x - x0;
  auto px = [&](int r, int c) -> double {
    if (r < 0 || r >= p.height || c < 0 || c >= p.width) return 0.0;
    return p.at(r, c);
  };
  return static_cast<float>((1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                            fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1)));
}

}  // namespace

ThreeChannelImage augment(const ThreeChannelImage& img, const AugmentConfig& cfg, Rng& rng) {
  img.validate();
  const int side = img.side();
  if (img.gray.width != side) throw ShapeError("augment: input must be square");
  if (cfg.target_size <= 0) throw ConfigError("augment: bad target_size");
  if (cfg.scale_lo > cfg.scale_hi || cfg.scale_lo <= 0.0)
    throw ConfigError("augment: bad scale range");

  // one geometric draw shared by all planes; the draw order is part of the
  // reproducibility contract
  const double rot = (2.0 * rng.uniform() - 1.0) * cfg.rotation_deg * 3.14159265358979323846 / 180.0;
  const double tx = (2.0 * rng.uniform() - 1.0) * cfg.translate_frac * side;
  const double ty = (2.0 * rng.uniform() - 1.0) * cfg.translate_frac * side;
  const double sc = cfg.scale_lo + (cfg.scale_hi - cfg.scale_lo) * rng.uniform();

  const int pad = static_cast<int>(std::lround(side * cfg.crop_pad_frac));
  const int canvas = side + 2 * pad;
  const int max_off = canvas - cfg.target_size;
  if (max_off < 0) throw ConfigError("augment: target larger than padded canvas");
  const int off_y = max_off > 0 ? static_cast<int>(rng.uniform_int(0, max_off)) : 0;
  const int off_x = max_off > 0 ? static_cast<int>(rng.uniform_int(0, max_off)) : 0;

  const bool identity_affine = rot == 0.0 && tx == 0.0 && ty == 0.0 && sc == 1.0;
  const double c = (side - 1) / 2.0;
  const double cos_r = std::cos(rot), sin_r = std::sin(rot);

  ThreeChannelImage out;
  FloatPlane* dsts[3] = {&out.gray, &out.lbp, &out.gabor};
  const FloatPlane* srcs[3] = {&img.gray, &img.lbp, &img.gabor};
  for (int p = 0; p < 3; ++p) {
    *dsts[p] = FloatPlane(cfg.target_size, cfg.target_size);
    for (int y = 0; y < cfg.target_size; ++y) {
      for (int x = 0; x < cfg.target_size; ++x) {
        // crop offset into the padded canvas, then inverse affine into source
        const double cy = y + off_y - pad;
        const double cx = x + off_x - pad;
        double sy2 = cy, sx2 = cx;
        if (!identity_affine) {
          const double dy = cy - c - ty;
          const double dx = cx - c - tx;
          sx2 = (dx * cos_r + dy * sin_r) / sc + c;
          sy2 = (-dx * sin_r + dy * cos_r) / sc + c;
        }
        float v;
        if (sy2 == std::floor(sy2) && sx2 == std::floor(sx2)) {
          const int ry = static_cast<int>(sy2), rx = static_cast<int>(sx2);
          v = (ry >= 0 && ry < side && rx >= 0 && rx < side) ? srcs[p]->at(ry, rx) : 0.0f;
        } else {
          v = sample_plane_bilinear(*srcs[p], sy2, sx2);
        }
        dsts[p]->at(y, x) = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }
  return out;
}

void write_cache_blob(const ThreeChannelImage& img, const std::string& path) {
  img.validate();
  if (img.gray.height > 0xFFFF || img.gray.width > 0xFFFF)
    throw InputError("write_cache_blob: extents exceed u16");
  std::vector<std::uint8_t> out;
  out.reserve(16 + 3 * img.gray.values.size() * 4);
  const char magic[8] = {'D', 'F', 'N', '3', 'C', 'H', '0', '1'};
  out.insert(out.end(), magic, magic + 8);
  put_u16(out, static_cast<std::uint16_t>(img.gray.height));
  put_u16(out, static_cast<std::uint16_t>(img.gray.width));
  put_u32(out, 0);  // reserved
  for (const FloatPlane* p : {&img.gray, &img.lbp, &img.gabor})
    for (float v : p->values) put_f32(out, v);
  write_binary_file(path, out.data(), out.size());
}

ThreeChannelImage read_cache_blob(const std::string& path) {
  const auto bytes = read_binary_file(path);
  ByteReader r(bytes, path);
  const std::uint8_t* magic = r.take(8);
  if (std::memcmp(magic, "DFN3CH01", 8) != 0)
    throw IoError(path + ": not a channel cache blob");
  const int h = r.u16();
  const int w = r.u16();
  r.u32();  // reserved
  if (h == 0 || w == 0) throw IoError(path + ": empty blob extents");
  ThreeChannelImage img;
  FloatPlane* planes[3] = {&img.gray, &img.lbp, &img.gabor};
  for (FloatPlane* p : planes) {
    *p = FloatPlane(h, w);
    for (auto& v : p->values) v = r.f32();
  }
  if (r.remaining() != 0) throw IoError(path + ": trailing bytes in cache blob");
  return img;
}

}  // namespace dfn
