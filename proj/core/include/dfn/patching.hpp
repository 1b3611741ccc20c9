#pragma once

#include <utility>
#include <vector>

#include "dfn/preproc.hpp"
#include "dfn/tensor.hpp"

namespace dfn {

struct PatchGridConfig {
  int patch_size = 56;
  int stride = 42;
  // final anchor is clamped to image_side - patch_size so the grid always
  // reaches the right/bottom edge
};

// Overlapping square patches cut from a three-channel image on a regular
// grid. `packed` holds all patches as one [n,3,p,p] tensor in scan order
// (row anchors outer, column anchors inner); `positions` are the matching
// (row,col) top-left corners.
template <typename S>
struct PatchSetT {
  TensorPtrT<S> packed;
  std::vector<std::pair<int, int>> positions;
  int count = 0;
  int patch_size = 0;

  // copy of patch i as a standalone [3,p,p] tensor
  TensorPtrT<S> patch(int i) const;
};

using PatchSet = PatchSetT<float>;

// Per-axis anchor offsets: multiples of stride, plus a final anchor at
// image_side - patch_size when the multiples stop short of it.
std::vector<int> patch_positions(int image_side, const PatchGridConfig& cfg);

template <typename S>
PatchSetT<S> extract_patches(const ThreeChannelImage& img, const PatchGridConfig& cfg);

// The full image as a [3,side,side] tensor (plane order gray, lbp, gabor).
template <typename S>
TensorPtrT<S> image_to_tensor(const ThreeChannelImage& img);

}  // namespace dfn
