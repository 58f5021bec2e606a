#pragma once

#include <vector>

#include "usinr/phantom.hpp"

namespace usinr {

struct GatingResult {
  std::vector<double> ap_signal;
  std::vector<int> minima_indices;
  std::vector<int> selected_indices;
  bool flat = false;  // signal too flat to carry a breathing cycle; all frames selected
};

/// Anteroposterior coordinate of each frame's image origin, in acquisition order.
std::vector<double> extract_ap_signal(const SweepBundle& sweep);

/// Interior local minima with prominence >= min_prominence_mm, thinned so that
/// kept minima are at least min_separation_frames apart (deeper minima win).
/// Plateaus report their first index.
std::vector<int> find_local_minima(const std::vector<double>& signal, double min_prominence_mm,
                                   int min_separation_frames);

/// Prominence of the minimum at `i`: rise to the lower of the two enclosing maxima.
double minimum_prominence(const std::vector<double>& signal, int i);

/// Frames whose signal lies within `band_mm` of a minimum and between the two
/// maxima enclosing it. Sorted and unique.
std::vector<int> select_exhale_frames(const std::vector<double>& signal,
                                      const std::vector<int>& minima, double band_mm);
std::vector<int> select_exhale_frames(const SweepBundle& sweep, const std::vector<int>& minima,
                                      double band_mm);

/// Dominant period in samples from the first autocorrelation peak, or 0 when none.
int dominant_period(const std::vector<double>& signal);

/// Negative values mean "derive from the signal" (see gate_sweep).
struct GatingParams {
  double band_mm = -1.0;            // default 10% of peak-to-peak
  double min_prominence_mm = -1.0;  // default 20% of peak-to-peak
  int min_separation_frames = -1;   // default half the dominant period, else 5
  double flat_tolerance_mm = 1.0;   // peak-to-peak below this selects every frame
};

/// Full exhale gating of a sweep with defaults resolved from the signal.
GatingResult gate_sweep(const SweepBundle& sweep, const GatingParams& params);
GatingResult gate_signal(const std::vector<double>& signal, const GatingParams& params);

}  // namespace usinr
