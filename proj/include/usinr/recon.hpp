#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "usinr/geometry.hpp"
#include "usinr/inr.hpp"
#include "usinr/raster.hpp"

namespace usinr {

struct LabeledPointCloud {
  std::vector<Vec3> points;
  std::vector<double> aorta_probability;
  std::vector<Vec3> normals;  // empty until estimated

  size_t size() const { return points.size(); }
  bool has_normals() const { return !normals.empty(); }
  /// Throws DataError on length mismatch, probabilities outside [0, 1] or non-unit normals.
  void validate() const;
};

/// Values on the nodes of a regular grid.
struct ScalarField {
  GridSpec grid;
  std::vector<double> values;

  double at(int i, int j, int k) const { return values[grid.index(i, j, k)]; }
  /// Trilinear interpolation, clamped to the grid.
  double sample(const Vec3& p) const;
  void validate() const;
};

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Vec3> normals;  // optional per-vertex normals

  /// Throws DataError for out-of-range indices.
  void validate() const;
  /// Sorted unique 1-ring neighbours per vertex.
  std::vector<std::vector<int>> vertex_neighbors() const;
  /// Area-weighted vertex normals following the triangle winding.
  std::vector<Vec3> compute_vertex_normals() const;
  /// True when every undirected edge borders exactly two triangles.
  bool is_closed() const;
  /// V - E + F.
  long euler_characteristic() const;
};

/// Grid points whose aorta probability exceeds `threshold`. Throws DataError when none do.
LabeledPointCloud extract_aorta_points(const PredictedVolume& volume, double threshold = 0.5);
LabeledPointCloud extract_aorta_points(const GridSpec& grid, const std::vector<double>& probability,
                                       double threshold = 0.5);

/// Andrew's monotone chain. Returns hull vertex indices counter-clockwise with
/// collinear points dropped; empty when fewer than three non-collinear points.
std::vector<int> convex_hull_2d(const std::vector<Eigen::Vector2d>& pts);

/// Orthonormal pair spanning the plane perpendicular to `axis`.
std::array<Vec3, 2> plane_basis(const Vec3& axis);

/// Slab index of a point along `axis` for slabs of the given thickness.
long slab_of(const Vec3& p, const Vec3& axis, double thickness);

/// Per-slab 2D convex hull of the cloud projected onto the slab plane. Returns
/// the hull vertices (original 3D points); slabs with < 3 points or degenerate
/// hulls are skipped.
LabeledPointCloud slice_boundary_hull(const LabeledPointCloud& cloud, double slab_thickness_mm,
                                      const Vec3& sweep_axis = Vec3::UnitY());

/// Greedy max-min subset starting at `seed_index`, ties to the lowest index.
/// Throws DataError if n exceeds the point count.
std::vector<int> furthest_point_sampling(const std::vector<Vec3>& points, size_t n,
                                         size_t seed_index = 0);

struct NormalEstimationParams {
  int k = 16;
  Vec3 sweep_axis = Vec3::UnitY();
  double slab_thickness_mm = 2.0;
};

/// PCA normals over k nearest neighbours, flipped to point away from the
/// centroid of the point's slab. Collinear neighbourhoods fall back to the
/// radial direction from that centroid.
std::vector<Vec3> estimate_normals(const std::vector<Vec3>& points,
                                   const NormalEstimationParams& params = {});

struct PoissonParams {
  double grid_resolution_mm = 1.0;
  double cg_tolerance = 1e-8;
  int max_iters = -1;  // default 10 x largest grid dimension
  int padding_cells = 12;
};

struct PoissonResult {
  ScalarField field;  // indicator, larger inside
  double iso_value = 0.0;
  int iterations = 0;
  double relative_residual = 0.0;
  std::vector<double> residual_history;  // relative residual per iteration, starting at 1
};

/// Splats the normals onto the grid, takes the divergence and solves the
/// Neumann Poisson problem with a conjugate-residual iteration (the
/// minimum-residual member of the conjugate gradient family). Throws
/// DataError without points and NumericError on non-convergence.
PoissonResult poisson_reconstruct(const std::vector<Vec3>& points, const std::vector<Vec3>& normals,
                                  const PoissonParams& params = {});

/// Marching cubes over the 256-case table. Values above `iso` are inside; faces
/// wind outward. Vertices are shared per grid edge.
TriangleMesh marching_cubes(const ScalarField& field, double iso);

/// The 256-entry triangulation table: for each corner-sign case, a list of edge
/// index triples (corner c sits at (c&1, c>>1&1, c>>2&1)).
const std::array<std::vector<std::array<int, 3>>, 256>& marching_cubes_table();
/// Corner pair of each of the 12 cube edges.
const std::array<std::array<int, 2>, 12>& marching_cubes_edges();

/// One tracked slice for compounding: world <- image affine and a binary label.
struct CompoundFrame {
  Mat4 pose;
  const LabelRaster* label = nullptr;
};

struct BaselineParams {
  double max_gap_mm = 5.0;
  double threshold = 0.5;
};

struct BaselineResult {
  ScalarField blended;  // interpolated label in [0, 1]
  ScalarField binary;   // thresholded
  TriangleMesh mesh;
};

/// Conventional compounding: each voxel blends the bilinearly sampled labels of
/// the two frame planes bracketing it, linearly by plane distance. Gaps wider
/// than max_gap take the nearest frame's value instead.
BaselineResult baseline_compound(const std::vector<CompoundFrame>& frames, const GridSpec& grid,
                                 const BaselineParams& params = {});

/// Trilinear weights of p over the 8 nodes around it. Returns false outside the grid.
bool trilinear_stencil(const GridSpec& grid, const Vec3& p, std::array<size_t, 8>& nodes,
                       std::array<double, 8>& weights);

}  // namespace usinr
