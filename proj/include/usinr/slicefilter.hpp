#pragma once

#include <limits>
#include <vector>

#include "usinr/phantom.hpp"
#include "usinr/raster.hpp"

namespace usinr {

struct SliceVerdict {
  int index = 0;
  bool accepted = false;
  double equivalent_radius_mm = 0.0;
  double running_estimate_mm = 0.0;
};

/// Keeps only the largest 4-connected foreground component. Ties go to the
/// component whose first pixel comes first in row-major order.
LabelRaster largest_connected_component(const LabelRaster& label);

/// Radius of the circle with the same area as the foreground.
double equivalent_radius(const LabelRaster& label, double pixel_spacing_mm);
double equivalent_radius(const LabelRaster& label, double spacing_u_mm, double spacing_v_mm);

/// Moving-average radius gate. The first `window` non-empty slices seed the
/// estimate and are accepted unconditionally; afterwards the estimate is the
/// mean of the last `window` accepted radii. Empty slices (radius 0) are
/// always rejected.
std::vector<SliceVerdict> gate_slices(const std::vector<double>& radii, int window,
                                      double rel_tolerance);

struct FilterParams {
  int window = 10;
  double rel_tolerance = 0.2;
  bool enabled = true;
};

struct FilteredSweep {
  std::vector<LabelRaster> labels;  // largest component per frame
  std::vector<SliceVerdict> verdicts;
};

/// Largest component + radius gate over every frame of a sweep. When
/// `params.enabled` is false the labels pass through untouched and every
/// slice is accepted.
FilteredSweep filter_sweep(const SweepBundle& sweep, const FilterParams& params);

}  // namespace usinr
