#pragma once

#include <cstdint>
#include <vector>

namespace usinr {

/// Row-major H x W image. `at(u, v)` addresses column u, row v.
template <class T>
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Raster() = default;
  Raster(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  T& at(int u, int v) { return data[static_cast<size_t>(v) * width + u]; }
  const T& at(int u, int v) const { return data[static_cast<size_t>(v) * width + u]; }
  bool contains(int u, int v) const { return u >= 0 && v >= 0 && u < width && v < height; }
  size_t size() const { return data.size(); }
  bool same_shape(const Raster& o) const { return width == o.width && height == o.height; }
  bool operator==(const Raster&) const = default;
};

/// Class ids: 0 background, 1 aorta.
using LabelRaster = Raster<std::uint8_t>;
/// 8-bit intensities; value / 255 lies in [0, 1].
using IntensityRaster = Raster<std::uint8_t>;

inline double intensity_value(std::uint8_t q) { return q / 255.0; }

inline size_t count_foreground(const LabelRaster& r) {
  size_t n = 0;
  for (auto x : r.data) n += (x != 0);
  return n;
}

}  // namespace usinr
