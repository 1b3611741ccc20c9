#include "dfn/patching.hpp"

namespace dfn {

std::vector<int> patch_positions(int image_side, const PatchGridConfig& cfg) {
  if (cfg.patch_size <= 0 || cfg.stride <= 0)
    throw ConfigError("patch_positions: patch_size and stride must be positive");
  if (cfg.patch_size > image_side)
    throw InputError("patch_positions: patch_size " + std::to_string(cfg.patch_size) +
                     " exceeds image side " + std::to_string(image_side));
  if (cfg.stride > 2 * cfg.patch_size)
    throw ConfigError("patch_positions: stride must be <= 2*patch_size");

  const int last = image_side - cfg.patch_size;
  std::vector<int> anchors;
  for (int a = 0; a <= last; a += cfg.stride) anchors.push_back(a);
  if (anchors.back() != last) anchors.push_back(last);
  return anchors;
}

template <typename S>
TensorPtrT<S> PatchSetT<S>::patch(int i) const {
  if (i < 0 || i >= count) throw InputError("PatchSet::patch: index out of range");
  const std::int64_t per = static_cast<std::int64_t>(3) * patch_size * patch_size;
  auto t = make_tensor<S>({3, patch_size, patch_size});
  std::copy(packed->data.begin() + i * per, packed->data.begin() + (i + 1) * per,
            t->data.begin());
  return t;
}

template <typename S>
PatchSetT<S> extract_patches(const ThreeChannelImage& img, const PatchGridConfig& cfg) {
  img.validate();
  const int side = img.side();
  if (img.gray.width != side) throw ShapeError("extract_patches: image must be square");

  const auto anchors = patch_positions(side, cfg);
  const int per_axis = static_cast<int>(anchors.size());
  const int n = per_axis * per_axis;
  const int p = cfg.patch_size;

  PatchSetT<S> set;
  set.count = n;
  set.patch_size = p;
  set.positions.reserve(static_cast<std::size_t>(n));
  set.packed = make_tensor<S>({n, 3, p, p});

  const FloatPlane* planes[3] = {&img.gray, &img.lbp, &img.gabor};
  S* dst = set.packed->data.data();
  for (int ay : anchors) {
    for (int ax : anchors) {
      set.positions.emplace_back(ay, ax);
      for (const FloatPlane* plane : planes) {
        for (int y = 0; y < p; ++y) {
          const float* src = plane->values.data() +
                             static_cast<std::size_t>(ay + y) * side + ax;
          for (int x = 0; x < p; ++x) dst[x] = static_cast<S>(src[x]);
          dst += p;
        }
      }
    }
  }
  return set;
}

template <typename S>
TensorPtrT<S> image_to_tensor(const ThreeChannelImage& img) {
  const int h = img.gray.height, w = img.gray.width;
  auto t = make_tensor<S>({3, h, w});
  const FloatPlane* planes[3] = {&img.gray, &img.lbp, &img.gabor};
  S* dst = t->data.data();
  for (const FloatPlane* plane : planes)
    for (float v : plane->values) *dst++ = static_cast<S>(v);
  return t;
}

template struct PatchSetT<float>;
template struct PatchSetT<double>;
template PatchSetT<float> extract_patches<float>(const ThreeChannelImage&, const PatchGridConfig&);
template PatchSetT<double> extract_patches<double>(const ThreeChannelImage&, const PatchGridConfig&);
template TensorPtrT<float> image_to_tensor<float>(const ThreeChannelImage&);
template TensorPtrT<double> image_to_tensor<double>(const ThreeChannelImage&);

}  // namespace dfn
