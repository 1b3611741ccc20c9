#pragma once

#include <cstdint>
#include <string>

#include "dfn/evaluation.hpp"
#include "dfn/image.hpp"
#include "dfn/rng.hpp"

namespace dfn {

// Desk-scale stand-in data: oriented sinusoidal ridge textures with pore
// speckle. The separability knob delta scales every live/fake difference;
// at delta = 0 the two classes draw from the identical generator, so any
// classifier is chance by construction.
struct SynthConfig {
  int count_per_class = 16;   // per sensor, per class
  int image_side = 224;
  double freq_lo = 20.0;      // ridge frequency band, cycles per image side
  double freq_hi = 30.0;
  // Higher = smoother orientation field. The ridge phase is warped by a
  // coarse random field with amplitude 4*(1 - orientation_smoothness) rad.
  double orientation_smoothness = 0.5;
  double delta = 1.0;         // live/fake separability in [0, 1]
  std::uint64_t seed = 0;
  int sensors = 1;            // 1 or 2; two sensors split the frequency band
  int materials = 1;          // 1 or 2; two spoof perturbation mixes
  int material_mix = 0;       // which mix generate_sample applies to fakes
  int year = 2015;
  double train_fraction = 0.75;
  std::string out_dir;        // generate_dataset target directory
};

// One image. The rng draw sequence is identical for both classes; the label
// only changes deterministic post-transforms, all scaled by delta (ridge
// smoothing, speckle variance reduction, blockiness).
GrayImage generate_sample(const SynthConfig& cfg, int label, Rng& rng);

// Writes PGM files plus manifest.jsonl into cfg.out_dir and returns the
// manifest with resolved paths. Per-sample seeds derive from cfg.seed, so
// regeneration is byte-identical regardless of worker count.
DatasetManifest generate_dataset(const SynthConfig& cfg);

}  // namespace dfn
