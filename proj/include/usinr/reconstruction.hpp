#pragma once

#include <vector>

#include "usinr/inr.hpp"
#include "usinr/phantom.hpp"
#include "usinr/recon.hpp"
#include "usinr/slicefilter.hpp"

namespace usinr {

struct Box {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();
};

/// World bounding box of the foreground pixels of the given frames, grown by `margin_mm`.
/// Throws DataError when none of the labels has foreground.
Box label_roi(const SweepBundle& sweep, const std::vector<LabelRaster>& labels,
              const std::vector<int>& frames, double margin_mm);

/// World bounding box of every pixel of the given frames.
Box frame_extent(const SweepBundle& sweep, const std::vector<int>& frames);

/// Every n-th entry starting with the first.
std::vector<int> every_nth(const std::vector<int>& indices, int n);

/// Training frames: every n-th candidate frame, plus every n-th accepted one so
/// rejected slices do not open gaps in the semantic supervision. Sorted, unique.
std::vector<int> select_training_frames(const std::vector<int>& candidates, const std::vector<int>& accepted,
                                        int n);

/// One training slice per frame; intensity from the B-mode raster, labels from
/// `labels`, semantic supervision only where `semantic_valid` holds.
std::vector<SliceSamples> training_slices(const SweepBundle& sweep, const std::vector<LabelRaster>& labels,
                                          const std::vector<char>& semantic_valid,
                                          const std::vector<int>& frames, const Normalizer& normalizer);

struct SurfaceParams {
  double resolution_mm = 1.0;           // Poisson and marching-cubes grid
  double sampling_resolution_mm = 0.5;  // dense prediction grid for the point cloud
  double probability_threshold = 0.5;
  double slab_thickness_mm = 0.0;  // 0 -> 2 x sampling resolution
  size_t fps_count = 4096;
  int normal_k = 16;
  PoissonParams poisson;
};

struct InrSurface {
  PredictedVolume volume;
  LabeledPointCloud cloud;     // grid points above the probability threshold
  LabeledPointCloud boundary;  // slab hull vertices after furthest point sampling, with normals
  PoissonResult poisson;
  TriangleMesh mesh;
};

/// predict_grid -> threshold -> slab hulls -> FPS -> normals -> Poisson -> marching cubes.
InrSurface inr_surface(const InrModel& model, const Box& roi, const SurfaceParams& params,
                       const Vec3& sweep_axis = Vec3::UnitY());

/// Poisson surface from a labelled point cloud (the part of inr_surface after prediction).
void surface_from_cloud(InrSurface& out, const SurfaceParams& params, const Vec3& sweep_axis);

/// Conventional compounding of the given frames' labels on the ROI grid.
BaselineResult baseline_from_frames(const SweepBundle& sweep, const std::vector<LabelRaster>& labels,
                                    const std::vector<int>& frames, const GridSpec& grid,
                                    const BaselineParams& params);

}  // namespace usinr
