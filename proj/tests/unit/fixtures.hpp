#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "usinr/recon.hpp"

namespace fixtures {

inline std::vector<usinr::Vec3> fibonacci_sphere(int n, double r, const usinr::Vec3& c = usinr::Vec3::Zero()) {
  std::vector<usinr::Vec3> pts;
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double rho = std::sqrt(1.0 - z * z);
    pts.push_back(c + r * usinr::Vec3(rho * std::cos(golden * i), rho * std::sin(golden * i), z));
  }
  return pts;
}

// Signed field r - |p - c| on a grid covering the sphere with `pad` spacings of margin.
inline usinr::ScalarField sphere_field(double r, double spacing, double pad = 3.0) {
  usinr::ScalarField f;
  f.grid = usinr::GridSpec::covering(usinr::Vec3::Constant(-r - pad), usinr::Vec3::Constant(r + pad), spacing);
  f.values.resize(f.grid.point_count());
  for (int k = 0; k < f.grid.dims[2]; ++k)
    for (int j = 0; j < f.grid.dims[1]; ++j)
      for (int i = 0; i < f.grid.dims[0]; ++i) f.values[f.grid.index(i, j, k)] = r - f.grid.point(i, j, k).norm();
  return f;
}

// Subdivided icosahedron projected onto a sphere.
inline usinr::TriangleMesh icosphere(int levels, double r = 1.0) {
  using usinr::Vec3;
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  usinr::TriangleMesh m;
  m.vertices = {Vec3(-1, t, 0), Vec3(1, t, 0), Vec3(-1, -t, 0), Vec3(1, -t, 0), Vec3(0, -1, t), Vec3(0, 1, t),
                Vec3(0, -1, -t), Vec3(0, 1, -t), Vec3(t, 0, -1), Vec3(t, 0, 1), Vec3(-t, 0, -1), Vec3(-t, 0, 1)};
  m.triangles = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                 {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
                 {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
  for (auto& v : m.vertices) v = v.normalized() * r;
  for (int l = 0; l < levels; ++l) {
    std::vector<std::array<int, 3>> next;
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      m.vertices.push_back((0.5 * (m.vertices[a] + m.vertices[b])).normalized() * r);
      const int id = static_cast<int>(m.vertices.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    for (const auto& tr : m.triangles) {
      const int a = midpoint(tr[0], tr[1]), b = midpoint(tr[1], tr[2]), c = midpoint(tr[2], tr[0]);
      next.push_back({tr[0], a, c});
      next.push_back({tr[1], b, a});
      next.push_back({tr[2], c, b});
      next.push_back({a, b, c});
    }
    m.triangles = std::move(next);
  }
  return m;
}

}  // namespace fixtures
