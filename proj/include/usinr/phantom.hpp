#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "usinr/geometry.hpp"
#include "usinr/raster.hpp"

namespace usinr {

// World axes used throughout: x transverse, y longitudinal (sweep direction),
// z anteroposterior (anterior positive, so depth below the skin is -z).
inline constexpr int kApAxis = 2;
inline constexpr int kLongitudinalAxis = 1;
inline constexpr int kTransverseAxis = 0;

/// Gaussian radius bulge along the centerline, used for the aneurysm scenario.
struct GaussianBulge {
  double peak_radius_mm = 17.0;
  double center_arclength_mm = 75.0;
  double sigma_mm = 12.0;
};

struct CenterlineProjection {
  double arclength_mm = 0.0;
  double distance_mm = 0.0;
  bool beyond_ends = false;  // projection clamped to an end point
};

/// Synthetic vessel: a tube of varying radius around a polyline centerline,
/// with flat end caps.
struct PhantomSpec {
  std::vector<Vec3> centerline;
  double base_radius_mm = 10.0;
  std::optional<GaussianBulge> bulge;
  double background_intensity = 0.55;
  double vessel_intensity = 0.12;
  double speckle_sigma = 0.08;
  Vec3 extent_min{-60.0, -20.0, -110.0};
  Vec3 extent_max{60.0, 170.0, 10.0};

  /// Straight tube along +y starting at `start`.
  static PhantomSpec straight_tube(const Vec3& start, double length_mm, double radius_mm);
  /// Tube whose transverse coordinate follows x = x0 + amplitude sin(2 pi (y - y0) / wavelength),
  /// sampled as a polyline every `step_mm`.
  static PhantomSpec curved_tube(const Vec3& start, double length_mm, double radius_mm,
                                 double amplitude_mm, double wavelength_mm, double step_mm = 1.0);

  /// Throws DataError on an empty centerline, non-positive radii or a tube leaving the extent.
  void validate() const;

  double length_mm() const;
  double radius_at(double arclength_mm) const;
  CenterlineProjection project(const Vec3& p) const;
  bool inside(const Vec3& p) const;
  /// Centerline point at the given arclength (clamped to the ends).
  Vec3 point_at(double arclength_mm) const;
  /// Analytic volume of the tube in mm^3 (radius profile integrated along the centerline).
  double volume_mm3() const;
};

/// Rigid anteroposterior breathing motion with a raised-cosine waveform.
struct BreathingModel {
  double amplitude_mm = 8.0;  // peak to peak
  double period_s = 4.0;
  double phase_rad = 0.0;

  void validate() const;
};

/// (amplitude/2)(1 - cos(2 pi t / period + phase)): 0 at exhale, amplitude at inhale.
double breathing_displacement(const BreathingModel& model, double t_s);

enum class CorruptionMode : std::uint8_t { none = 0, dropout = 1, spurious_blob = 2, dilation_error = 3 };

std::string to_string(CorruptionMode m);
CorruptionMode corruption_mode_from_string(const std::string& s);

struct CorruptionSpec {
  double fraction_corrupted = 0.0;
  std::vector<CorruptionMode> modes{CorruptionMode::dropout, CorruptionMode::spurious_blob,
                                    CorruptionMode::dilation_error};
  double dilation_factor = 1.5;
  /// Spurious blobs get a radius drawn from this range times the vessel's equivalent radius.
  double blob_scale_min = 1.4;
  double blob_scale_max = 2.0;
  std::uint64_t rng_seed = 7;

  void validate() const;
};

struct CorruptionResult {
  LabelRaster label;
  bool corrupted = false;
  CorruptionMode mode = CorruptionMode::none;
};

/// With probability fraction_corrupted applies one uniformly chosen mode.
CorruptionResult corrupt_segmentation(const LabelRaster& label, const CorruptionSpec& spec,
                                      int slice_index, std::mt19937_64& rng);

/// Per-slice generator derived from (seed, slice index); stable across runs.
std::mt19937_64 slice_rng(std::uint64_t seed, int slice_index, std::uint64_t stream);

enum class AcquisitionMode { breath_hold, free_breathing };

std::string to_string(AcquisitionMode m);
AcquisitionMode acquisition_mode_from_string(const std::string& s);

/// Visual-servo sweep parameters.
struct NavParams {
  double gain = 0.5;
  double step_cap_mm = 3.0;
  double longitudinal_step_mm = 1.0;
  double frame_interval_s = 0.1;
  int max_frames = 400;
  /// Button threshold as a fraction of the breathing amplitude.
  double hold_threshold_fraction = 0.05;
  /// Initial probe position (x transverse, y longitudinal) in world mm.
  double start_x_mm = 0.0;
  double start_y_mm = 0.5;

  void validate() const;
};

struct TrackedFrame {
  int index = 0;
  double timestamp_s = 0.0;
  /// world <- image, calibration included (affine, not rigid).
  Mat4 pose = Mat4::Identity();
  IntensityRaster intensity;
  LabelRaster label;
};

/// Evaluation-only ground truth recorded by the simulator; the pipeline never
/// reads it when making decisions.
struct FrameTruth {
  double displacement_mm = 0.0;
  bool corrupted = false;
  CorruptionMode mode = CorruptionMode::none;
};

struct SweepBundle {
  std::vector<TrackedFrame> frames;
  ProbeGeometry probe;
  AcquisitionMode mode = AcquisitionMode::breath_hold;
  BreathingModel breathing;
  bool hit_frame_cap = false;
  std::vector<FrameTruth> truth;  // parallel to frames when produced by the simulator

  /// Throws DataError when the bundle violates its invariants.
  void validate() const;
};

/// Probe orientation used by the simulator: image lateral axis along -x,
/// image normal along +y, depth along -z.
Mat3 probe_orientation();

/// Rigid probe pose whose image origin sits at (x - w/2 mirrored, y, ap) and whose
/// image top row lies at anteroposterior height `ap_mm`.
RigidTransform probe_pose(const ProbeGeometry& g, double x_mm, double y_mm, double ap_mm);

struct RenderedSlice {
  IntensityRaster intensity;
  LabelRaster label;
};

/// Renders one slice. Each pixel's world point is shifted by -displacement along
/// the anteroposterior axis before the inside-tube test (the phantom moves with
/// the probe). Deterministic given `seed`.
RenderedSlice render_slice(const PhantomSpec& spec, const RigidTransform& plane_pose,
                           const ProbeGeometry& g, double displacement_mm, std::uint64_t seed);

/// Kinematic visual-servo sweep over the phantom.
SweepBundle simulate_sweep(const PhantomSpec& spec, const ProbeGeometry& g, const NavParams& nav,
                           const BreathingModel& model, const CorruptionSpec& corruption,
                           AcquisitionMode mode, std::uint64_t seed);

}  // namespace usinr
