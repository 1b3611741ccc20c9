#include "dfn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <vector>

#include "dfn/errors.hpp"
#include "dfn/parallel.hpp"

namespace dfn {
namespace {

constexpr int kWarpGrid = 5;

void validate(const SynthConfig& cfg) {
  if (cfg.count_per_class < 1) throw ConfigError("synth: count_per_class must be >= 1");
  if (cfg.image_side < 64) throw ConfigError("synth: image_side must be >= 64");
  if (!(cfg.freq_lo > 0.0) || !(cfg.freq_hi >= cfg.freq_lo))
    throw ConfigError("synth: ridge frequency band must satisfy 0 < freq_lo <= freq_hi");
  if (cfg.delta < 0.0 || cfg.delta > 1.0) throw ConfigError("synth: delta must be in [0, 1]");
  if (cfg.orientation_smoothness < 0.0 || cfg.orientation_smoothness > 1.0)
    throw ConfigError("synth: orientation_smoothness must be in [0, 1]");
  if (cfg.sensors != 1 && cfg.sensors != 2) throw ConfigError("synth: sensors must be 1 or 2");
  if (cfg.materials != 1 && cfg.materials != 2)
    throw ConfigError("synth: materials must be 1 or 2");
  if (cfg.material_mix != 0 && cfg.material_mix != 1)
    throw ConfigError("synth: material_mix must be 0 or 1");
  if (!(cfg.train_fraction > 0.0) || cfg.train_fraction > 1.0)
    throw ConfigError("synth: train_fraction must be in (0, 1]");
}

// 3x3 mean with edge-clamped windows.
std::vector<double> box3(const std::vector<double>& src, int side) {
  std::vector<double> out(src.size());
  for (int y = 0; y < side; ++y) {
    const int y0 = std::max(0, y - 1), y1 = std::min(side - 1, y + 1);
    for (int x = 0; x < side; ++x) {
      const int x0 = std::max(0, x - 1), x1 = std::min(side - 1, x + 1);
      double sum = 0.0;
      for (int yy = y0; yy <= y1; ++yy)
        for (int xx = x0; xx <= x1; ++xx) sum += src[yy * side + xx];
      out[y * side + x] = sum / ((y1 - y0 + 1) * (x1 - x0 + 1));
    }
  }
  return out;
}

// Each pixel replaced by the mean of its 8x8 tile (partial tiles at edges).
std::vector<double> block8(const std::vector<double>& src, int side) {
  std::vector<double> out(src.size());
  for (int ty = 0; ty < side; ty += 8) {
    const int y1 = std::min(side, ty + 8);
    for (int tx = 0; tx < side; tx += 8) {
      const int x1 = std::min(side, tx + 8);
      double sum = 0.0;
      for (int y = ty; y < y1; ++y)
        for (int x = tx; x < x1; ++x) sum += src[y * side + x];
      const double mean = sum / ((y1 - ty) * (x1 - tx));
      for (int y = ty; y < y1; ++y)
        for (int x = tx; x < x1; ++x) out[y * side + x] = mean;
    }
  }
  return out;
}

}  // namespace

GrayImage generate_sample(const SynthConfig& cfg, int label, Rng& rng) {
  validate(cfg);
  if (label != 0 && label != 1) throw InputError("synth: label must be 0 (live) or 1 (fake)");
  const int side = cfg.image_side;

  // Pinned draw order, identical for both classes: frequency, orientation,
  // warp grid, speckle. The label never touches the rng.
  const double freq = rng.uniform(cfg.freq_lo, cfg.freq_hi);
  const double theta = rng.uniform(0.0, std::numbers::pi);
  double warp_grid[kWarpGrid * kWarpGrid];
  for (double& g : warp_grid) g = rng.normal();
  std::vector<double> speckle(static_cast<std::size_t>(side) * side);
  for (double& s : speckle) s = rng.normal();

  const double warp_amp = 4.0 * (1.0 - cfg.orientation_smoothness);
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double omega = 2.0 * std::numbers::pi * freq / side;

  double smooth_mix = 0.0, speckle_scale = 1.0, block_mix = 0.0;
  if (label == 1) {
    if (cfg.material_mix == 0) {
      smooth_mix = 0.6 * cfg.delta;
      speckle_scale = 1.0 - 0.7 * cfg.delta;
      block_mix = 0.35 * cfg.delta;
    } else {
      smooth_mix = 0.3 * cfg.delta;
      speckle_scale = 1.0 - 0.4 * cfg.delta;
      block_mix = 0.6 * cfg.delta;
    }
  }

  std::vector<double> img(static_cast<std::size_t>(side) * side);
  const double cell = static_cast<double>(side) / (kWarpGrid - 1);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      // Bilinear sample of the coarse warp grid.
      const double gy = std::min(y / cell, static_cast<double>(kWarpGrid - 1));
      const double gx = std::min(x / cell, static_cast<double>(kWarpGrid - 1));
      const int iy = std::min(static_cast<int>(gy), kWarpGrid - 2);
      const int ix = std::min(static_cast<int>(gx), kWarpGrid - 2);
      const double fy = gy - iy, fx = gx - ix;
      const double w00 = warp_grid[iy * kWarpGrid + ix];
      const double w01 = warp_grid[iy * kWarpGrid + ix + 1];
      const double w10 = warp_grid[(iy + 1) * kWarpGrid + ix];
      const double w11 = warp_grid[(iy + 1) * kWarpGrid + ix + 1];
      const double warp = (w00 * (1 - fx) + w01 * fx) * (1 - fy) + (w10 * (1 - fx) + w11 * fx) * fy;

      const double phase = omega * (x * cos_t + y * sin_t) + warp_amp * warp;
      const double ridge = std::sin(phase);
      img[y * static_cast<std::size_t>(side) + x] =
          0.5 + 0.35 * ridge + 0.09 * speckle_scale * speckle[y * static_cast<std::size_t>(side) + x];
    }
  }

  if (smooth_mix > 0.0) {
    const std::vector<double> smoothed = box3(img, side);
    for (std::size_t i = 0; i < img.size(); ++i)
      img[i] = (1.0 - smooth_mix) * img[i] + smooth_mix * smoothed[i];
  }
  if (block_mix > 0.0) {
    const std::vector<double> blocky = block8(img, side);
    for (std::size_t i = 0; i < img.size(); ++i)
      img[i] = (1.0 - block_mix) * img[i] + block_mix * blocky[i];
  }

  GrayImage out(side, side);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img[i], 0.0, 1.0);
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * v));
  }
  return out;
}

DatasetManifest generate_dataset(const SynthConfig& cfg) {
  validate(cfg);
  if (cfg.out_dir.empty()) throw ConfigError("synth: out_dir must be set");
  std::filesystem::create_directories(cfg.out_dir);

  struct Plan {
    SynthConfig sample_cfg;
    int label = 0;
    std::uint64_t seed = 0;
    ManifestEntry entry;
  };
  std::vector<Plan> plans;
  const double mid = (cfg.freq_lo + cfg.freq_hi) / 2.0;
  const int train_count =
      std::min(cfg.count_per_class,
               static_cast<int>(std::floor(cfg.count_per_class * cfg.train_fraction)));

  std::uint64_t index = 0;
  for (int s = 0; s < cfg.sensors; ++s) {
    for (int label = 0; label < 2; ++label) {
      for (int i = 0; i < cfg.count_per_class; ++i, ++index) {
        Plan p;
        p.sample_cfg = cfg;
        if (cfg.sensors == 2) {
          p.sample_cfg.freq_lo = (s == 0) ? cfg.freq_lo : mid;
          p.sample_cfg.freq_hi = (s == 0) ? mid : cfg.freq_hi;
        }
        const int mix = (cfg.materials == 2) ? (i % 2) : cfg.material_mix;
        p.sample_cfg.material_mix = mix;
        p.label = label;
        p.seed = Rng::derive_seed(cfg.seed, index);

        const char sensor_tag = static_cast<char>('A' + s);
        char name[64];
        std::snprintf(name, sizeof(name), "s%c_%s_%04d.pgm", sensor_tag,
                      label == 1 ? "fake" : "live", i);
        p.entry.path = name;
        p.entry.label = label;
        p.entry.sensor = std::string("sensor") + sensor_tag;
        p.entry.material = (label == 1) ? ("m" + std::to_string(mix + 1)) : "none";
        p.entry.year = cfg.year;
        p.entry.split = (i < train_count) ? "train" : "test";
        plans.push_back(std::move(p));
      }
    }
  }

  // Per-sample derived seeds keep generation order-free; files are written
  // inside the worker but named uniquely, so bytes never depend on timing.
  parallel_for(static_cast<std::int64_t>(plans.size()), [&](std::int64_t i) {
    Plan& p = plans[static_cast<std::size_t>(i)];
    Rng rng(p.seed);
    const GrayImage img = generate_sample(p.sample_cfg, p.label, rng);
    save_pgm(img, (std::filesystem::path(cfg.out_dir) / p.entry.path).string());
  });

  DatasetManifest relative;
  for (const auto& p : plans) relative.entries.push_back(p.entry);
  save_manifest(relative, (std::filesystem::path(cfg.out_dir) / "manifest.jsonl").string());

  DatasetManifest resolved = relative;
  for (auto& e : resolved.entries)
    e.path = (std::filesystem::path(cfg.out_dir) / e.path).string();
  return resolved;
}

}  // namespace dfn
