#pragma once
// Slow reference implementations used only by the tests.

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "usinr/raster.hpp"

namespace oracle {

// 4-connected components by BFS. Returns per-pixel component id (-1 background)
// and the component sizes, numbered in row-major discovery order.
inline std::vector<int> components(const usinr::LabelRaster& r, std::vector<int>& sizes) {
  std::vector<int> id(r.size(), -1);
  sizes.clear();
  for (int v = 0; v < r.height; ++v)
    for (int u = 0; u < r.width; ++u) {
      if (!r.at(u, v) || id[v * r.width + u] >= 0) continue;
      const int c = static_cast<int>(sizes.size());
      sizes.push_back(0);
      std::deque<std::pair<int, int>> q{{u, v}};
      id[v * r.width + u] = c;
      while (!q.empty()) {
        auto [x, y] = q.front();
        q.pop_front();
        ++sizes[c];
        const int nb[4][2] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
        for (auto& n : nb) {
          if (!r.contains(n[0], n[1]) || !r.at(n[0], n[1]) || id[n[1] * r.width + n[0]] >= 0) continue;
          id[n[1] * r.width + n[0]] = c;
          q.push_back({n[0], n[1]});
        }
      }
    }
  return id;
}

inline int component_count(const usinr::LabelRaster& r) {
  std::vector<int> sizes;
  components(r, sizes);
  return static_cast<int>(sizes.size());
}

// Keeps the largest component; the first discovered wins ties.
inline usinr::LabelRaster largest_component(const usinr::LabelRaster& r) {
  std::vector<int> sizes;
  const auto id = components(r, sizes);
  usinr::LabelRaster out(r.width, r.height, 0);
  if (sizes.empty()) return out;
  const int best = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (size_t i = 0; i < id.size(); ++i) out.data[i] = id[i] == best ? 1 : 0;
  return out;
}

// Hull vertices as the points p for which some other pair forms an edge with
// every point on one side: O(n^3) brute force over candidate edges.
inline std::vector<int> hull_vertices(const std::vector<Eigen::Vector2d>& p) {
  const int n = static_cast<int>(p.size());
  std::vector<char> on(n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j || (p[i] - p[j]).norm() == 0.0) continue;
      bool left = true;
      for (int k = 0; k < n && left; ++k) {
        if (k == i || k == j) continue;
        const Eigen::Vector2d a = p[j] - p[i], b = p[k] - p[i];
        const double cr = a.x() * b.y() - a.y() * b.x();
        if (cr < 0.0) left = false;
        // collinear points strictly beyond the segment disqualify it
        if (cr == 0.0 && (b.dot(a) < 0.0 || b.dot(a) > a.dot(a))) left = false;
      }
      if (left) on[i] = on[j] = 1;
    }
  // Drop points lying in the interior of hull edges.
  std::vector<int> out;
  for (int i = 0; i < n; ++i) {
    if (!on[i]) continue;
    bool interior = false;
    for (int a = 0; a < n && !interior; ++a)
      for (int b = 0; b < n && !interior; ++b) {
        if (!on[a] || !on[b] || a == i || b == i || a == b) continue;
        const Eigen::Vector2d e = p[b] - p[a], f = p[i] - p[a];
        if (std::abs(e.x() * f.y() - e.y() * f.x()) < 1e-12 && f.dot(e) > 0.0 && f.dot(e) < e.dot(e))
          interior = true;
      }
    if (!interior) out.push_back(i);
  }
  return out;
}

// Exhaustive max-min selection: at each step try every candidate.
inline std::vector<int> fps(const std::vector<Eigen::Vector3d>& p, size_t n, int seed) {
  std::vector<int> chosen{seed};
  while (chosen.size() < n) {
    int best = -1;
    double best_d = -1.0;
    for (int i = 0; i < static_cast<int>(p.size()); ++i) {
      double dmin = std::numeric_limits<double>::infinity();
      for (int c : chosen) dmin = std::min(dmin, (p[i] - p[c]).norm());
      if (dmin > best_d) {
        best_d = dmin;
        best = i;
      }
    }
    chosen.push_back(best);
  }
  return chosen;
}

}  // namespace oracle
