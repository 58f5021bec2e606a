#include "usinr/slicefilter.hpp"

#include <cmath>
#include <deque>
#include <numbers>
#include <numeric>

namespace usinr {

LabelRaster largest_connected_component(const LabelRaster& label) {
  const int w = label.width;
  const int h = label.height;
  std::vector<int> comp(label.size(), -1);
  std::vector<size_t> sizes;
  std::vector<int> stack;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const int seed = v * w + u;
      if (!label.data[seed] || comp[seed] >= 0) continue;
      const int id = static_cast<int>(sizes.size());
      size_t n = 0;
      stack.assign(1, seed);
      comp[seed] = id;
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        ++n;
        const int pu = p % w;
        const int pv = p / w;
        const int nu[] = {pu - 1, pu + 1, pu, pu};
        const int nv[] = {pv, pv, pv - 1, pv + 1};
        for (int k = 0; k < 4; ++k) {
          if (!label.contains(nu[k], nv[k])) continue;
          const int q = nv[k] * w + nu[k];
          if (label.data[q] && comp[q] < 0) {
            comp[q] = id;
            stack.push_back(q);
          }
        }
      }
      sizes.push_back(n);
    }
  }
  LabelRaster out(w, h, 0);
  if (sizes.empty()) return out;
  // Components are numbered in scan order of their first pixel, so the first
  // maximum is the tie-break winner.
  int best = 0;
  for (size_t i = 1; i < sizes.size(); ++i)
    if (sizes[i] > sizes[best]) best = static_cast<int>(i);
  for (size_t i = 0; i < comp.size(); ++i) out.data[i] = comp[i] == best ? 1 : 0;
  return out;
}

double equivalent_radius(const LabelRaster& label, double pixel_spacing_mm) {
  return equivalent_radius(label, pixel_spacing_mm, pixel_spacing_mm);
}

double equivalent_radius(const LabelRaster& label, double spacing_u_mm, double spacing_v_mm) {
  const double area = count_foreground(label) * spacing_u_mm * spacing_v_mm;
  return std::sqrt(area / std::numbers::pi);
}

std::vector<SliceVerdict> gate_slices(const std::vector<double>& radii, int window,
                                      double rel_tolerance) {
  if (window < 1) throw DataError("gate_slices: window must be at least 1");
  std::vector<SliceVerdict> out;
  out.reserve(radii.size());
  std::deque<double> recent;  // last `window` accepted radii
  int seeded = 0;
  for (size_t i = 0; i < radii.size(); ++i) {
    SliceVerdict verdict;
    verdict.index = static_cast<int>(i);
    verdict.equivalent_radius_mm = radii[i];
    const double estimate =
        recent.empty() ? 0.0 : std::accumulate(recent.begin(), recent.end(), 0.0) / recent.size();
    verdict.running_estimate_mm = estimate;
    if (radii[i] <= 0.0) {
      verdict.accepted = false;
    } else if (seeded < window) {
      verdict.accepted = true;
      ++seeded;
    } else {
      verdict.accepted = std::abs(radii[i] - estimate) <= rel_tolerance * estimate;
    }
    if (verdict.accepted) {
      recent.push_back(radii[i]);
      if (static_cast<int>(recent.size()) > window) recent.pop_front();
    }
    out.push_back(verdict);
  }
  return out;
}

FilteredSweep filter_sweep(const SweepBundle& sweep, const FilterParams& params) {
  FilteredSweep out;
  const double su = sweep.probe.lateral_spacing_mm();
  const double sv = sweep.probe.axial_spacing_mm();
  std::vector<double> radii;
  for (const auto& f : sweep.frames) {
    out.labels.push_back(params.enabled ? largest_connected_component(f.label) : f.label);
    radii.push_back(equivalent_radius(out.labels.back(), su, sv));
  }
  if (params.enabled) {
    out.verdicts = gate_slices(radii, params.window, params.rel_tolerance);
  } else {
    for (size_t i = 0; i < radii.size(); ++i)
      out.verdicts.push_back({static_cast<int>(i), true, radii[i], radii[i]});
  }
  return out;
}

}  // namespace usinr
