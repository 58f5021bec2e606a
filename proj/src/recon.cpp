#include "usinr/recon.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "usinr/error.hpp"

namespace usinr {

void LabeledPointCloud::validate() const {
  if (aorta_probability.size() != points.size())
    throw DataError("point cloud: probability count does not match point count");
  for (double p : aorta_probability)
    if (!(p >= 0.0 && p <= 1.0)) throw DataError("point cloud: probability outside [0, 1]");
  if (!normals.empty()) {
    if (normals.size() != points.size()) throw DataError("point cloud: normal count mismatch");
    for (const auto& n : normals)
      if (std::abs(n.norm() - 1.0) > 1e-6) throw DataError("point cloud: normal not unit length");
  }
}

bool trilinear_stencil(const GridSpec& grid, const Vec3& p, std::array<size_t, 8>& nodes,
                       std::array<double, 8>& weights) {
  int base[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    const double t = (p[a] - grid.origin[a]) / grid.spacing;
    if (!(t >= 0.0 && t <= grid.dims[a] - 1)) return false;
    base[a] = std::min(static_cast<int>(std::floor(t)), std::max(grid.dims[a] - 2, 0));
    frac[a] = grid.dims[a] > 1 ? t - base[a] : 0.0;
  }
  for (int c = 0; c < 8; ++c) {
    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    const int i = std::min(base[0] + dx, grid.dims[0] - 1);
    const int j = std::min(base[1] + dy, grid.dims[1] - 1);
    const int k = std::min(base[2] + dz, grid.dims[2] - 1);
    nodes[c] = grid.index(i, j, k);
    weights[c] = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) *
                 (dz ? frac[2] : 1.0 - frac[2]);
  }
  return true;
}

double ScalarField::sample(const Vec3& p) const {
  Vec3 q = p;
  for (int a = 0; a < 3; ++a)
    q[a] = std::clamp(q[a], grid.origin[a], grid.origin[a] + grid.spacing * (grid.dims[a] - 1));
  std::array<size_t, 8> nodes;
  std::array<double, 8> w;
  trilinear_stencil(grid, q, nodes, w);
  double acc = 0.0;
  for (int c = 0; c < 8; ++c) acc += w[c] * values[nodes[c]];
  return acc;
}

void ScalarField::validate() const {
  if (!(grid.spacing > 0.0)) throw DataError("field: spacing must be positive");
  if (values.size() != grid.point_count()) throw DataError("field: value count does not match grid");
  for (double v : values)
    if (!std::isfinite(v)) throw DataError("field: non-finite value");
}

void TriangleMesh::validate() const {
  const int n = static_cast<int>(vertices.size());
  for (const auto& t : triangles)
    for (int i : t)
      if (i < 0 || i >= n) throw DataError("mesh: triangle index out of range");
  if (!normals.empty() && normals.size() != vertices.size())
    throw DataError("mesh: normal count does not match vertex count");
}

std::vector<std::vector<int>> TriangleMesh::vertex_neighbors() const {
  std::vector<std::vector<int>> nb(vertices.size());
  for (const auto& t : triangles)
    for (int e = 0; e < 3; ++e) {
      nb[t[e]].push_back(t[(e + 1) % 3]);
      nb[t[e]].push_back(t[(e + 2) % 3]);
    }
  for (auto& v : nb) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return nb;
}

std::vector<Vec3> TriangleMesh::compute_vertex_normals() const {
  std::vector<Vec3> n(vertices.size(), Vec3::Zero());
  for (const auto& t : triangles) {
    const Vec3 fn = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
    for (int i : t) n[i] += fn;
  }
  for (auto& v : n) {
    const double len = v.norm();
    v = len > 0.0 ? Vec3(v / len) : Vec3(0.0, 0.0, 1.0);
  }
  return n;
}

namespace {

std::map<std::pair<int, int>, int> edge_counts(const TriangleMesh& m) {
  std::map<std::pair<int, int>, int> count;
  for (const auto& t : m.triangles)
    for (int e = 0; e < 3; ++e) {
      int a = t[e], b = t[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      ++count[{a, b}];
    }
  return count;
}

}  // namespace

bool TriangleMesh::is_closed() const {
  if (triangles.empty()) return false;
  for (const auto& [edge, n] : edge_counts(*this))
    if (n != 2) return false;
  return true;
}

long TriangleMesh::euler_characteristic() const {
  return static_cast<long>(vertices.size()) - static_cast<long>(edge_counts(*this).size()) +
         static_cast<long>(triangles.size());
}

LabeledPointCloud extract_aorta_points(const GridSpec& grid, const std::vector<double>& probability,
                                       double threshold) {
  if (probability.size() != grid.point_count())
    throw DataError("extract_aorta_points: volume does not match grid");
  LabeledPointCloud cloud;
  for (int k = 0; k < grid.dims[2]; ++k)
    for (int j = 0; j < grid.dims[1]; ++j)
      for (int i = 0; i < grid.dims[0]; ++i) {
        const double p = probability[grid.index(i, j, k)];
        if (p > threshold || (threshold <= 0.0 && p >= threshold)) {
          cloud.points.push_back(grid.point(i, j, k));
          cloud.aorta_probability.push_back(p);
        }
      }
  if (cloud.points.empty())
    throw DataError("extract_aorta_points: no grid point above threshold (training failed?)");
  return cloud;
}

LabeledPointCloud extract_aorta_points(const PredictedVolume& volume, double threshold) {
  return extract_aorta_points(volume.grid, volume.aorta_probability, threshold);
}

std::vector<int> convex_hull_2d(const std::vector<Eigen::Vector2d>& pts) {
  const int n = static_cast<int>(pts.size());
  if (n < 3) return {};
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (pts[a].x() != pts[b].x()) return pts[a].x() < pts[b].x();
    if (pts[a].y() != pts[b].y()) return pts[a].y() < pts[b].y();
    return a < b;
  });
  auto cross = [&](int o, int a, int b) {
    return (pts[a].x() - pts[o].x()) * (pts[b].y() - pts[o].y()) -
           (pts[a].y() - pts[o].y()) * (pts[b].x() - pts[o].x());
  };
  std::vector<int> hull(2 * n);
  int k = 0;
  for (int i = 0; i < n; ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], idx[i]) <= 0.0) --k;
    hull[k++] = idx[i];
  }
  for (int i = n - 2, lower = k + 1; i >= 0; --i) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], idx[i]) <= 0.0) --k;
    hull[k++] = idx[i];
  }
  hull.resize(std::max(k - 1, 0));
  if (hull.size() < 3) return {};
  return hull;
}

std::array<Vec3, 2> plane_basis(const Vec3& axis) {
  const Vec3 a = axis.normalized();
  const Vec3 helper = std::abs(a.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 e1 = (helper - helper.dot(a) * a).normalized();
  return {e1, a.cross(e1)};
}

long slab_of(const Vec3& p, const Vec3& axis, double thickness) {
  return static_cast<long>(std::floor(p.dot(axis.normalized()) / thickness));
}

LabeledPointCloud slice_boundary_hull(const LabeledPointCloud& cloud, double slab_thickness_mm,
                                      const Vec3& sweep_axis) {
  if (cloud.points.empty()) throw DataError("slice_boundary_hull: empty cloud");
  if (!(slab_thickness_mm > 0.0)) throw DataError("slice_boundary_hull: thickness must be positive");
  const auto basis = plane_basis(sweep_axis);
  std::map<long, std::vector<int>> slabs;
  for (size_t i = 0; i < cloud.points.size(); ++i)
    slabs[slab_of(cloud.points[i], sweep_axis, slab_thickness_mm)].push_back(static_cast<int>(i));
  LabeledPointCloud out;
  for (const auto& [slab, members] : slabs) {
    if (members.size() < 3) continue;
    std::vector<Eigen::Vector2d> flat;
    flat.reserve(members.size());
    for (int i : members)
      flat.emplace_back(cloud.points[i].dot(basis[0]), cloud.points[i].dot(basis[1]));
    for (int h : convex_hull_2d(flat)) {
      out.points.push_back(cloud.points[members[h]]);
      out.aorta_probability.push_back(cloud.aorta_probability[members[h]]);
    }
  }
  return out;
}

std::vector<int> furthest_point_sampling(const std::vector<Vec3>& points, size_t n,
                                         size_t seed_index) {
  if (n > points.size()) throw DataError("furthest_point_sampling: n exceeds the point count");
  if (n == 0) return {};
  if (seed_index >= points.size()) throw DataError("furthest_point_sampling: seed out of range");
  std::vector<int> chosen;
  chosen.reserve(n);
  std::vector<double> dist(points.size(), std::numeric_limits<double>::infinity());
  size_t current = seed_index;
  for (size_t s = 0; s < n; ++s) {
    chosen.push_back(static_cast<int>(current));
    dist[current] = -1.0;
    size_t next = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < points.size(); ++i) {
      if (dist[i] < 0.0) continue;
      const double d = (points[i] - points[current]).squaredNorm();
      if (d < dist[i]) dist[i] = d;
      if (dist[i] > best) {
        best = dist[i];
        next = i;
      }
    }
    current = next;
  }
  return chosen;
}

std::vector<Vec3> estimate_normals(const std::vector<Vec3>& points,
                                   const NormalEstimationParams& params) {
  const int n = static_cast<int>(points.size());
  if (params.k < 2) throw DataError("estimate_normals: k must be at least 2");
  if (n < params.k + 1) throw DataError("estimate_normals: need at least k + 1 points");
  const Vec3 axis = params.sweep_axis.normalized();

  std::map<long, std::pair<Vec3, int>> slab_sum;
  std::vector<long> slab(n);
  for (int i = 0; i < n; ++i) {
    slab[i] = slab_of(points[i], axis, params.slab_thickness_mm);
    auto& s = slab_sum[slab[i]];
    if (s.second == 0) s.first.setZero();
    s.first += points[i];
    ++s.second;
  }

  std::vector<Vec3> normals(n);
  std::vector<std::pair<double, int>> d2(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) d2[j] = {(points[j] - points[i]).squaredNorm(), j};
    // k neighbours besides the point itself.
    std::nth_element(d2.begin(), d2.begin() + params.k, d2.end());
    Vec3 mean = Vec3::Zero();
    for (int m = 0; m <= params.k; ++m) mean += points[d2[m].second];
    mean /= params.k + 1;
    Mat3 cov = Mat3::Zero();
    for (int m = 0; m <= params.k; ++m) {
      const Vec3 q = points[d2[m].second] - mean;
      cov += q * q.transpose();
    }
    const auto& s = slab_sum[slab[i]];
    const Vec3 centroid = s.first / s.second;
    Vec3 radial = points[i] - centroid;
    radial -= radial.dot(axis) * axis;

    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const auto& ev = eig.eigenvalues();  // ascending
    Vec3 normal;
    if (ev[2] <= 0.0 || ev[1] <= 1e-12 * ev[2]) {
      normal = radial.norm() > 0.0 ? Vec3(radial.normalized()) : Vec3(plane_basis(axis)[0]);
    } else {
      normal = eig.eigenvectors().col(0).normalized();
    }
    const double side = normal.dot(points[i] - centroid);
    if (std::abs(side) <= 1e-12 * (points[i] - centroid).norm()) {
      // no preferred side (planar slab): make the dominant component positive
      int big = 0;
      normal.cwiseAbs().maxCoeff(&big);
      if (normal[big] < 0.0) normal = -normal;
    } else if (side < 0.0) {
      normal = -normal;
    }
    normals[i] = normal;
  }
  return normals;
}

namespace {

double sample_label(const LabelRaster& label, double u, double v) {
  if (!(u >= -0.5 && v >= -0.5 && u <= label.width - 0.5 && v <= label.height - 0.5)) return 0.0;
  u = std::clamp(u, 0.0, label.width - 1.0);
  v = std::clamp(v, 0.0, label.height - 1.0);
  const int u0 = std::min(static_cast<int>(std::floor(u)), label.width - 2);
  const int v0 = std::min(static_cast<int>(std::floor(v)), label.height - 2);
  const double fu = u - u0;
  const double fv = v - v0;
  return (1 - fu) * (1 - fv) * label.at(u0, v0) + fu * (1 - fv) * label.at(u0 + 1, v0) +
         (1 - fu) * fv * label.at(u0, v0 + 1) + fu * fv * label.at(u0 + 1, v0 + 1);
}

}  // namespace

BaselineResult baseline_compound(const std::vector<CompoundFrame>& frames, const GridSpec& grid,
                                 const BaselineParams& params) {
  if (frames.size() < 2) throw DataError("baseline_compound: need at least two frames");
  const size_t nf = frames.size();
  const Vec3 first = frames.front().pose.topRightCorner<3, 1>();
  const Vec3 last = frames.back().pose.topRightCorner<3, 1>();
  const Vec3 sweep = last - first;

  struct Plane {
    Vec3 normal;
    double offset;
    Mat4 image_from_world;
  };
  std::vector<Plane> planes;
  for (const auto& f : frames) {
    if (!f.label) throw DataError("baseline_compound: frame without label");
    if (!(std::abs(f.pose.topLeftCorner<3, 3>().determinant()) > 1e-12))
      throw DataError("baseline_compound: singular frame pose");
    const Vec3 cu = f.pose.block<3, 1>(0, 0);
    const Vec3 cv = f.pose.block<3, 1>(0, 1);
    Vec3 n = cu.cross(cv).normalized();
    if (n.dot(sweep) < 0.0) n = -n;
    const Vec3 o = f.pose.topRightCorner<3, 1>();
    planes.push_back({n, n.dot(o), f.pose.inverse()});
  }

  BaselineResult res;
  res.blended.grid = grid;
  res.blended.values.assign(grid.point_count(), 0.0);
  const double end_tolerance = 0.5 * grid.spacing;
  for (int k = 0; k < grid.dims[2]; ++k)
    for (int j = 0; j < grid.dims[1]; ++j)
      for (int i = 0; i < grid.dims[0]; ++i) {
        const Vec3 p = grid.point(i, j, k);
        int behind = -1, ahead = -1;
        double d_behind = -std::numeric_limits<double>::infinity();
        double d_ahead = std::numeric_limits<double>::infinity();
        for (size_t f = 0; f < nf; ++f) {
          const double d = planes[f].normal.dot(p) - planes[f].offset;
          if (d <= 0.0 && d > d_behind) {
            d_behind = d;
            behind = static_cast<int>(f);
          } else if (d > 0.0 && d < d_ahead) {
            d_ahead = d;
            ahead = static_cast<int>(f);
          }
        }
        auto value_of = [&](int f) {
          const Vec3 uvw = transform_point(planes[f].image_from_world, p);
          return sample_label(*frames[f].label, uvw[0], uvw[1]);
        };
        double value = 0.0;
        if (behind >= 0 && ahead >= 0) {
          const double gap = d_ahead - d_behind;
          if (gap <= params.max_gap_mm) {
            value = (d_ahead * value_of(behind) - d_behind * value_of(ahead)) / gap;
          } else {
            value = value_of(-d_behind <= d_ahead ? behind : ahead);
          }
        } else if (behind >= 0 && -d_behind <= end_tolerance) {
          value = value_of(behind);
        } else if (ahead >= 0 && d_ahead <= end_tolerance) {
          value = value_of(ahead);
        }
        res.blended.values[grid.index(i, j, k)] = value;
      }
  res.binary.grid = grid;
  res.binary.values.resize(res.blended.values.size());
  for (size_t i = 0; i < res.binary.values.size(); ++i)
    res.binary.values[i] = res.blended.values[i] > params.threshold ? 1.0 : 0.0;
  res.mesh = marching_cubes(res.binary, 0.5);
  return res;
}

}  // namespace usinr
