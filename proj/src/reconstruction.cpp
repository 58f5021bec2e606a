#include "usinr/reconstruction.hpp"

#include <algorithm>
#include <limits>

#include "usinr/error.hpp"

namespace usinr {

namespace {

void grow(Box& b, const Vec3& p) {
  b.lo = b.lo.cwiseMin(p);
  b.hi = b.hi.cwiseMax(p);
}

Box empty_box() {
  const double inf = std::numeric_limits<double>::infinity();
  return {Vec3::Constant(inf), Vec3::Constant(-inf)};
}

void check_frames(const SweepBundle& sweep, const std::vector<LabelRaster>& labels,
                  const std::vector<int>& frames) {
  if (labels.size() != sweep.frames.size())
    throw DataError("label count does not match the sweep's frame count");
  for (int f : frames)
    if (f < 0 || f >= static_cast<int>(sweep.frames.size())) throw DataError("frame index out of range");
}

}  // namespace

Box label_roi(const SweepBundle& sweep, const std::vector<LabelRaster>& labels,
              const std::vector<int>& frames, double margin_mm) {
  check_frames(sweep, labels, frames);
  Box b = empty_box();
  bool any = false;
  for (int f : frames) {
    const auto& lab = labels[f];
    for (int v = 0; v < lab.height; ++v)
      for (int u = 0; u < lab.width; ++u)
        if (lab.at(u, v)) {
          grow(b, image_to_world(sweep.frames[f].pose, u, v));
          any = true;
        }
  }
  if (!any) throw DataError("roi: no foreground in the selected frames");
  b.lo.array() -= margin_mm;
  b.hi.array() += margin_mm;
  return b;
}

Box frame_extent(const SweepBundle& sweep, const std::vector<int>& frames) {
  Box b = empty_box();
  for (int f : frames) {
    const auto& fr = sweep.frames.at(f);
    const double uw = fr.intensity.width - 1, vh = fr.intensity.height - 1;
    for (double u : {0.0, uw})
      for (double v : {0.0, vh}) grow(b, image_to_world(fr.pose, u, v));
  }
  if (frames.empty()) throw DataError("frame_extent: no frames");
  return b;
}

std::vector<int> every_nth(const std::vector<int>& indices, int n) {
  if (n < 1) throw ConfigError("frame stride must be >= 1");
  std::vector<int> out;
  for (size_t i = 0; i < indices.size(); i += n) out.push_back(indices[i]);
  return out;
}

std::vector<int> select_training_frames(const std::vector<int>& candidates, const std::vector<int>& accepted,
                                        int n) {
  std::vector<int> out = every_nth(candidates, n);
  for (int f : every_nth(accepted, n)) out.push_back(f);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<SliceSamples> training_slices(const SweepBundle& sweep, const std::vector<LabelRaster>& labels,
                                          const std::vector<char>& semantic_valid,
                                          const std::vector<int>& frames, const Normalizer& normalizer) {
  check_frames(sweep, labels, frames);
  if (semantic_valid.size() != sweep.frames.size())
    throw DataError("semantic validity count does not match the sweep's frame count");
  std::vector<SliceSamples> out;
  out.reserve(frames.size());
  for (int f : frames) {
    const auto& fr = sweep.frames[f];
    const auto& lab = labels[f];
    if (!lab.same_shape(fr.intensity)) throw DataError("label and intensity rasters differ in shape");
    SliceSamples s;
    const int n = fr.intensity.width * fr.intensity.height;
    s.coords.resize(3, n);
    s.intensity.resize(n);
    s.labels.resize(n);
    s.semantic_valid = semantic_valid[f] != 0;
    int i = 0;
    for (int v = 0; v < fr.intensity.height; ++v)
      for (int u = 0; u < fr.intensity.width; ++u, ++i) {
        s.coords.col(i) = normalizer.normalize(image_to_world(fr.pose, u, v));
        s.intensity[i] = intensity_value(fr.intensity.at(u, v));
        s.labels[i] = lab.at(u, v) ? 1 : 0;
      }
    out.push_back(std::move(s));
  }
  return out;
}

void surface_from_cloud(InrSurface& out, const SurfaceParams& params, const Vec3& sweep_axis) {
  const double slab = params.slab_thickness_mm > 0.0 ? params.slab_thickness_mm : 2.0 * params.sampling_resolution_mm;
  LabeledPointCloud hull = slice_boundary_hull(out.cloud, slab, sweep_axis);
  if (hull.size() == 0) throw DataError("surface: no slab produced a hull");
  const size_t n = std::min(params.fps_count, hull.size());
  const auto keep = furthest_point_sampling(hull.points, n);
  out.boundary = {};
  for (int i : keep) {
    out.boundary.points.push_back(hull.points[i]);
    out.boundary.aorta_probability.push_back(hull.aorta_probability[i]);
  }
  NormalEstimationParams np;
  np.k = std::min<int>(params.normal_k, static_cast<int>(out.boundary.size()) - 1);
  np.sweep_axis = sweep_axis;
  np.slab_thickness_mm = slab;
  out.boundary.normals = estimate_normals(out.boundary.points, np);
  PoissonParams pp = params.poisson;
  pp.grid_resolution_mm = params.resolution_mm;
  out.poisson = poisson_reconstruct(out.boundary.points, out.boundary.normals, pp);
  out.mesh = marching_cubes(out.poisson.field, out.poisson.iso_value);
  out.mesh.normals = out.mesh.compute_vertex_normals();
}

InrSurface inr_surface(const InrModel& model, const Box& roi, const SurfaceParams& params,
                       const Vec3& sweep_axis) {
  InrSurface out;
  out.volume = predict_grid(model, roi.lo, roi.hi, params.sampling_resolution_mm);
  out.cloud = extract_aorta_points(out.volume, params.probability_threshold);
  surface_from_cloud(out, params, sweep_axis);
  return out;
}

BaselineResult baseline_from_frames(const SweepBundle& sweep, const std::vector<LabelRaster>& labels,
                                    const std::vector<int>& frames, const GridSpec& grid,
                                    const BaselineParams& params) {
  check_frames(sweep, labels, frames);
  std::vector<CompoundFrame> cf;
  for (int f : frames) cf.push_back({sweep.frames[f].pose, &labels[f]});
  return baseline_compound(cf, grid, params);
}

}  // namespace usinr
