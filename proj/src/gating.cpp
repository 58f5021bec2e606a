#include "usinr/gating.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace usinr {

std::vector<double> extract_ap_signal(const SweepBundle& sweep) {
  std::vector<double> s;
  s.reserve(sweep.frames.size());
  for (const auto& f : sweep.frames) s.push_back(f.pose(kApAxis, 3));
  return s;
}

double minimum_prominence(const std::vector<double>& signal, int i) {
  const int n = static_cast<int>(signal.size());
  const double v = signal[i];
  double left = v;
  for (int j = i - 1; j >= 0 && signal[j] >= v; --j) left = std::max(left, signal[j]);
  double right = v;
  for (int j = i + 1; j < n && signal[j] >= v; ++j) right = std::max(right, signal[j]);
  return std::min(left, right) - v;
}

std::vector<int> find_local_minima(const std::vector<double>& signal, double min_prominence_mm,
                                   int min_separation_frames) {
  if (min_prominence_mm < 0.0) throw DataError("find_local_minima: prominence must be >= 0");
  if (min_separation_frames < 1) throw DataError("find_local_minima: separation must be >= 1");
  const int n = static_cast<int>(signal.size());
  std::vector<int> candidates;
  for (int i = 1; i < n - 1;) {
    if (signal[i] < signal[i - 1]) {
      int j = i;
      while (j + 1 < n && signal[j + 1] == signal[i]) ++j;
      if (j + 1 < n && signal[j + 1] > signal[i]) candidates.push_back(i);
      i = j + 1;
    } else {
      ++i;
    }
  }
  std::vector<int> prominent;
  for (int i : candidates) {
    const double p = minimum_prominence(signal, i);
    if (p > 0.0 && p >= min_prominence_mm) prominent.push_back(i);
  }
  // Deepest first; ties by index.
  std::vector<int> order = prominent;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return signal[a] < signal[b]; });
  std::vector<int> kept;
  for (int i : order) {
    bool ok = true;
    for (int k : kept)
      if (std::abs(k - i) < min_separation_frames) ok = false;
    if (ok) kept.push_back(i);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

std::vector<int> select_exhale_frames(const std::vector<double>& signal,
                                      const std::vector<int>& minima, double band_mm) {
  const int n = static_cast<int>(signal.size());
  std::vector<char> take(n, 0);
  std::vector<int> sorted = minima;
  std::sort(sorted.begin(), sorted.end());
  for (size_t k = 0; k < sorted.size(); ++k) {
    const int m = sorted[k];
    const int lo = k == 0 ? 0 : sorted[k - 1];
    const int hi = k + 1 == sorted.size() ? n - 1 : sorted[k + 1];
    // The outermost minima own the signal up to its ends.
    int left = k == 0 ? 0 : m;
    if (k > 0)
      for (int j = m; j >= lo; --j)
        if (signal[j] > signal[left]) left = j;
    int right = k + 1 == sorted.size() ? n - 1 : m;
    if (k + 1 < sorted.size())
      for (int j = m; j <= hi; ++j)
        if (signal[j] > signal[right]) right = j;
    const double limit = signal[m] + band_mm;
    for (int j = left; j <= right; ++j)
      if (signal[j] <= limit) take[j] = 1;
  }
  std::vector<int> out;
  for (int i = 0; i < n; ++i)
    if (take[i]) out.push_back(i);
  return out;
}

std::vector<int> select_exhale_frames(const SweepBundle& sweep, const std::vector<int>& minima,
                                      double band_mm) {
  return select_exhale_frames(extract_ap_signal(sweep), minima, band_mm);
}

int dominant_period(const std::vector<double>& signal) {
  const int n = static_cast<int>(signal.size());
  if (n < 4) return 0;
  const double mean = std::accumulate(signal.begin(), signal.end(), 0.0) / n;
  std::vector<double> ac(n / 2 + 1, 0.0);
  for (int lag = 0; lag <= n / 2; ++lag) {
    double acc = 0.0;
    for (int i = 0; i + lag < n; ++i) acc += (signal[i] - mean) * (signal[i + lag] - mean);
    ac[lag] = acc / (n - lag);
  }
  if (ac[0] <= 0.0) return 0;
  int lag = 1;
  while (lag <= n / 2 && ac[lag] > 0.0) ++lag;  // first zero crossing
  int best = 0;
  double best_val = 0.0;
  for (; lag < n / 2; ++lag) {
    if (ac[lag] > ac[lag - 1] && ac[lag] >= ac[lag + 1] && ac[lag] > best_val) {
      best = lag;
      best_val = ac[lag];
      break;
    }
  }
  return best;
}

GatingResult gate_signal(const std::vector<double>& signal, const GatingParams& params) {
  GatingResult res;
  res.ap_signal = signal;
  const int n = static_cast<int>(signal.size());
  if (n == 0) return res;
  const auto [lo, hi] = std::minmax_element(signal.begin(), signal.end());
  const double ptp = *hi - *lo;
  if (ptp <= params.flat_tolerance_mm) {
    res.flat = true;
    res.selected_indices.resize(n);
    std::iota(res.selected_indices.begin(), res.selected_indices.end(), 0);
    return res;
  }
  const double band = params.band_mm >= 0.0 ? params.band_mm : 0.1 * ptp;
  const double prominence = params.min_prominence_mm >= 0.0 ? params.min_prominence_mm : 0.2 * ptp;
  int separation = params.min_separation_frames;
  if (separation < 1) {
    const int period = dominant_period(signal);
    separation = period >= 2 ? period / 2 : 5;
  }
  res.minima_indices = find_local_minima(signal, prominence, separation);
  res.selected_indices = select_exhale_frames(signal, res.minima_indices, band);
  return res;
}

GatingResult gate_sweep(const SweepBundle& sweep, const GatingParams& params) {
  return gate_signal(extract_ap_signal(sweep), params);
}

}  // namespace usinr
