#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "usinr/phantom.hpp"
#include "usinr/recon.hpp"
#include "usinr/reconstruction.hpp"

using namespace usinr;

namespace {

double radial_worst(const TriangleMesh& m, double r, const Vec3& c = Vec3::Zero()) {
  double w = 0.0;
  for (const auto& v : m.vertices) w = std::max(w, std::abs((v - c).norm() - r));
  return w;
}

}  // namespace

TEST_CASE("aorta point extraction") {
  GridSpec g = GridSpec::covering(Vec3(-15, 0, -15), Vec3(15, 40, 15), 0.5);
  std::vector<double> prob(g.point_count(), 0.0);
  CHECK_THROWS_AS(extract_aorta_points(g, prob, 0.5), DataError);
  size_t want = 0;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        const Vec3 p = g.point(i, j, k);
        if (std::hypot(p.x(), p.z()) < 10.0) prob[g.index(i, j, k)] = 0.9;
      }
  const auto cloud = extract_aorta_points(g, prob, 0.5);
  const double expected = M_PI * 100.0 * 40.0 / (0.5 * 0.5 * 0.5);
  CHECK(std::abs(cloud.size() - expected) < 0.05 * expected);
  CHECK(extract_aorta_points(g, prob, 0.0).size() >= cloud.size());
  std::vector<double> small(g.point_count(), 0.1);
  CHECK(extract_aorta_points(g, small, 0.0).size() == g.point_count());
  (void)want;
}

TEST_CASE("convex hull basics") {
  std::vector<Eigen::Vector2d> sq{{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}};
  auto h = convex_hull_2d(sq);
  std::set<int> hs(h.begin(), h.end());
  CHECK(hs == std::set<int>{0, 1, 2, 3});
  std::vector<Eigen::Vector2d> line{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  CHECK(convex_hull_2d(line).empty());
  std::vector<Eigen::Vector2d> edge{{0, 0}, {2, 0}, {1, 0}, {1, 1}};
  h = convex_hull_2d(edge);
  hs = std::set<int>(h.begin(), h.end());
  CHECK(hs == std::set<int>{0, 1, 3});
}

TEST_CASE("convex hull matches the brute-force oracle") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Eigen::Vector2d> pts;
    while (pts.size() < 100) {
      Eigen::Vector2d p(u(rng), u(rng));
      if (trial % 2 == 0 && p.norm() > 1.0) continue;  // disc
      pts.push_back(p);
    }
    const auto got = convex_hull_2d(pts);
    auto want = oracle::hull_vertices(pts);
    std::set<int> g(got.begin(), got.end()), w(want.begin(), want.end());
    CHECK(g == w);
    // counter-clockwise
    double area = 0.0;
    for (size_t i = 0; i < got.size(); ++i) {
      const auto& a = pts[got[i]];
      const auto& b = pts[got[(i + 1) % got.size()]];
      area += a.x() * b.y() - a.y() * b.x();
    }
    CHECK(area > 0.0);
  }
}

TEST_CASE("slab hulls") {
  LabeledPointCloud c;
  // two slabs of a square with an interior point each, plus a collinear slab
  for (double y : {0.2, 5.2}) {
    for (auto [x, z] : std::vector<std::pair<double, double>>{{0, 0}, {4, 0}, {4, 4}, {0, 4}, {2, 2}}) {
      c.points.emplace_back(x, y, z);
      c.aorta_probability.push_back(1.0);
    }
  }
  for (int i = 0; i < 4; ++i) {
    c.points.emplace_back(i, 10.3, i);
    c.aorta_probability.push_back(1.0);
  }
  const auto b = slice_boundary_hull(c, 1.0);
  CHECK(b.size() == 8);
  for (const auto& p : b.points) CHECK_FALSE((std::abs(p.x() - 2) < 1e-12 && std::abs(p.z() - 2) < 1e-12));
}

TEST_CASE("furthest point sampling") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec3> pts(50);
    for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
    for (size_t n = 1; n <= 3; ++n) CHECK(furthest_point_sampling(pts, n, 0) == oracle::fps(pts, n, 0));
    CHECK(furthest_point_sampling(pts, 1, 7) == std::vector<int>{7});
    auto all = furthest_point_sampling(pts, 50);
    std::sort(all.begin(), all.end());
    for (int i = 0; i < 50; ++i) CHECK(all[i] == i);
    CHECK_THROWS_AS(furthest_point_sampling(pts, 51), DataError);
  }
  // ties go to the lowest index
  std::vector<Vec3> sym{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(-1, 0, 0)};
  CHECK(furthest_point_sampling(sym, 2) == std::vector<int>{0, 1});
}

TEST_CASE("normals on a cylinder") {
  std::vector<Vec3> pts;
  for (int j = 0; j < 40; ++j)
    for (int a = 0; a < 60; ++a) {
      const double t = 2.0 * M_PI * a / 60.0;
      pts.emplace_back(10.0 * std::cos(t), 0.5 * j, 10.0 * std::sin(t));
    }
  NormalEstimationParams p;
  p.slab_thickness_mm = 1.0;
  const auto n = estimate_normals(pts, p);
  int good = 0;
  for (size_t i = 0; i < pts.size(); ++i) {
    const Vec3 radial = Vec3(pts[i].x(), 0, pts[i].z()).normalized();
    good += n[i].dot(radial) > std::cos(5.0 * M_PI / 180.0);
  }
  CHECK(good >= 0.95 * pts.size());
}

TEST_CASE("normals on a plane are consistently oriented") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) pts.emplace_back(i, j, 0.0);
  const auto n = estimate_normals(pts, {});
  for (const auto& v : n) CHECK(v.z() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("normals on a spherical cap with k = n - 1") {
  // Every point sees the whole sample, so all share one PCA plane: only a cap
  // narrower than 10 degrees can satisfy the bound. The slab centroid sits on
  // the cap side, so orientation is not tested here, only the axis.
  std::vector<Vec3> pts;
  for (const auto& p : fixtures::fibonacci_sphere(20000, 20.0))
    if (p.x() > 20.0 * std::cos(9.0 * M_PI / 180.0)) pts.push_back(p);
  REQUIRE(pts.size() > 20);
  NormalEstimationParams params;
  params.k = static_cast<int>(pts.size()) - 1;
  params.slab_thickness_mm = 100.0;
  const auto n = estimate_normals(pts, params);
  for (size_t i = 0; i < pts.size(); ++i)
    CHECK(std::abs(n[i].dot(pts[i].normalized())) > std::cos(10.0 * M_PI / 180.0));
}

TEST_CASE("poisson reconstruction of a sphere") {
  const auto pts = fixtures::fibonacci_sphere(2000, 20.0);
  std::vector<Vec3> nrm;
  for (const auto& p : pts) nrm.push_back(p.normalized());
  PoissonParams pp;
  const auto r = poisson_reconstruct(pts, nrm, pp);
  CHECK(r.relative_residual <= 1e-8);
  for (size_t i = 1; i < r.residual_history.size(); ++i)
    CHECK(r.residual_history[i] <= r.residual_history[i - 1] * (1.0 + 1e-12));
  const auto mesh = marching_cubes(r.field, r.iso_value);
  REQUIRE(mesh.vertices.size() > 100);
  CHECK(radial_worst(mesh, 20.0) < 1.5);
  CHECK(mesh.is_closed());

  std::vector<Vec3> flipped;
  for (const auto& v : nrm) flipped.push_back(-v);
  const auto f = poisson_reconstruct(pts, flipped, pp);
  double worst = 0.0;
  for (size_t i = 0; i < f.field.values.size(); ++i)
    worst = std::max(worst, std::abs(f.field.values[i] + r.field.values[i]));
  CHECK(worst < 1e-6);
  CHECK(std::abs(f.iso_value + r.iso_value) < 1e-6);

  CHECK_THROWS_AS(poisson_reconstruct({}, {}, pp), DataError);
  PoissonParams tight = pp;
  tight.max_iters = 2;
  CHECK_THROWS_AS(poisson_reconstruct(pts, nrm, tight), NumericError);
}

TEST_CASE("marching cubes") {
  const auto f = fixtures::sphere_field(10.0, 1.0);
  const auto m = marching_cubes(f, 0.0);
  CHECK(radial_worst(m, 10.0) < 1.0);
  CHECK(m.is_closed());
  CHECK(m.euler_characteristic() == 2);
  // outward winding
  const auto vn = m.compute_vertex_normals();
  for (size_t i = 0; i < m.vertices.size(); ++i) CHECK(vn[i].dot(m.vertices[i]) > 0.0);

  ScalarField c = f;
  std::fill(c.values.begin(), c.values.end(), 1.0);
  CHECK(marching_cubes(c, 0.5).vertices.empty());
  CHECK(marching_cubes(f, 1e6).vertices.empty());

  ScalarField box;
  box.grid = GridSpec::covering(Vec3(0, 0, 0), Vec3(10, 10, 10), 1.0);
  box.values.assign(box.grid.point_count(), 0.0);
  for (int k = 3; k <= 6; ++k)
    for (int j = 2; j <= 8; ++j)
      for (int i = 4; i <= 5; ++i) box.values[box.grid.index(i, j, k)] = 1.0;
  const auto bm = marching_cubes(box, 0.5);
  CHECK(bm.is_closed());
  CHECK(bm.euler_characteristic() == 2);
}

TEST_CASE("marching cubes table cases are closed on random binary fields") {
  std::mt19937_64 rng(7);
  std::bernoulli_distribution b(0.5);
  for (int trial = 0; trial < 20; ++trial) {
    ScalarField f;
    f.grid = GridSpec::covering(Vec3(0, 0, 0), Vec3(9, 9, 9), 1.0);
    f.values.assign(f.grid.point_count(), 0.0);
    for (int k = 1; k < 9; ++k)
      for (int j = 1; j < 9; ++j)
        for (int i = 1; i < 9; ++i) f.values[f.grid.index(i, j, k)] = b(rng) ? 1.0 : 0.0;
    const auto m = marching_cubes(f, 0.5);
    CHECK(m.is_closed());
  }
}

TEST_CASE("baseline compounding interpolates between discs") {
  const auto phantom = PhantomSpec::straight_tube(Vec3(0, 0, -35), 150.0, 10.0);
  ProbeGeometry g;
  const Mat4 cal = calibration_matrix(g);
  std::vector<LabelRaster> labels;
  std::vector<CompoundFrame> frames;
  for (double y : {20.0, 25.0}) labels.push_back(render_slice(phantom, probe_pose(g, 0, y, 0), g, 0, 1).label);
  frames.push_back({probe_pose(g, 0, 20.0, 0).matrix() * cal, &labels[0]});
  frames.push_back({probe_pose(g, 0, 25.0, 0).matrix() * cal, &labels[1]});
  const GridSpec grid = GridSpec::covering(Vec3(-15, 20, -50), Vec3(15, 25, -20), 0.5);
  const auto r = baseline_compound(frames, grid, {});
  size_t inside = 0, agree = 0;
  for (int k = 0; k < grid.dims[2]; ++k)
    for (int j = 0; j < grid.dims[1]; ++j)
      for (int i = 0; i < grid.dims[0]; ++i) {
        const Vec3 p = grid.point(i, j, k);
        const bool want = std::hypot(p.x(), p.z() + 35.0) < 10.0;
        const bool got = r.binary.values[grid.index(i, j, k)] > 0.5;
        inside += want;
        agree += want == got;
      }
  CHECK(double(agree) / grid.point_count() > 0.97);
  CHECK(inside > 0);
  CHECK(r.mesh.vertices.size() > 0);
}

TEST_CASE("baseline with a repeated frame extrudes the label") {
  LabelRaster l(20, 20, 0);
  for (int v = 5; v < 15; ++v)
    for (int u = 5; u < 15; ++u) l.at(u, v) = 1;
  std::vector<CompoundFrame> frames;
  for (int s = 0; s < 5; ++s) {
    Mat4 pose = Mat4::Identity();
    // image u -> x, v -> z, planes stacked along y
    pose << 1, 0, 0, 0, 0, 0, -1, double(s), 0, 1, 0, 0, 0, 0, 0, 1;
    frames.push_back({pose, &l});
  }
  const GridSpec grid = GridSpec::covering(Vec3(0, 0, 0), Vec3(19, 4, 19), 1.0);
  const auto r = baseline_compound(frames, grid, {});
  for (int k = 0; k < grid.dims[2]; ++k)
    for (int j = 0; j < grid.dims[1]; ++j)
      for (int i = 0; i < grid.dims[0]; ++i)
        CHECK(r.blended.values[grid.index(i, j, k)] == doctest::Approx(l.at(i, k)));

  Mat4 flat = frames[0].pose;
  flat.col(2).setZero();
  frames[0].pose = flat;
  CHECK_THROWS_AS(baseline_compound(frames, grid, {}), DataError);
}

TEST_CASE("mesh helpers") {
  const auto ico = fixtures::icosphere(2);
  CHECK(ico.is_closed());
  CHECK(ico.euler_characteristic() == 2);
  for (const auto& nb : ico.vertex_neighbors()) CHECK((nb.size() == 5 || nb.size() == 6));
  TriangleMesh bad = ico;
  bad.triangles.push_back({0, 1, 100000});
  CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("training frame selection") {
  std::vector<int> all(12);
  for (int i = 0; i < 12; ++i) all[i] = i;
  CHECK(every_nth(all, 3) == std::vector<int>{0, 3, 6, 9});
  CHECK_THROWS_AS(every_nth(all, 0), ConfigError);
  // frames 3 and 4 rejected: the accepted stride fills the gap they leave
  const std::vector<int> accepted{0, 1, 2, 5, 6, 7, 8, 9, 10, 11};
  CHECK(select_training_frames(all, accepted, 3) == std::vector<int>{0, 3, 5, 6, 8, 9, 11});
  CHECK(select_training_frames(all, all, 3) == every_nth(all, 3));
  CHECK(select_training_frames(all, all, 1) == all);
}
