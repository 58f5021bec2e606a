#include "usinr/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace usinr {

namespace {

struct SegmentHit {
  double t = 0.0;
  double dist2 = 0.0;
};

SegmentHit closest_on_segment(const Vec3& a, const Vec3& b, const Vec3& p) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  const double tc = std::clamp(t, 0.0, 1.0);
  return {t, (a + tc * ab - p).squaredNorm()};
}

std::vector<double> cumulative_lengths(const std::vector<Vec3>& pts) {
  std::vector<double> s(pts.size(), 0.0);
  for (size_t i = 1; i < pts.size(); ++i) s[i] = s[i - 1] + (pts[i] - pts[i - 1]).norm();
  return s;
}

}  // namespace

PhantomSpec PhantomSpec::straight_tube(const Vec3& start, double length_mm, double radius_mm) {
  PhantomSpec spec;
  spec.centerline = {start, start + Vec3(0.0, length_mm, 0.0)};
  spec.base_radius_mm = radius_mm;
  return spec;
}

PhantomSpec PhantomSpec::curved_tube(const Vec3& start, double length_mm, double radius_mm,
                                     double amplitude_mm, double wavelength_mm, double step_mm) {
  PhantomSpec spec;
  spec.base_radius_mm = radius_mm;
  const int n = std::max(1, static_cast<int>(std::ceil(length_mm / step_mm)));
  for (int i = 0; i <= n; ++i) {
    const double y = length_mm * i / n;
    const double x = amplitude_mm * std::sin(2.0 * std::numbers::pi * y / wavelength_mm);
    spec.centerline.push_back(start + Vec3(x, y, 0.0));
  }
  return spec;
}

void PhantomSpec::validate() const {
  if (centerline.size() < 2) throw DataError("phantom: centerline needs at least two points");
  if (!(base_radius_mm > 0.0)) throw DataError("phantom: radius must be positive");
  if (bulge && !(bulge->peak_radius_mm > 0.0 && bulge->sigma_mm > 0.0))
    throw DataError("phantom: bulge radius and sigma must be positive");
  if (speckle_sigma < 0.0) throw DataError("phantom: speckle_sigma must be non-negative");
  for (double level : {background_intensity, vessel_intensity})
    if (level < 0.0 || level > 1.0) throw DataError("phantom: intensity levels must lie in [0, 1]");
  const double rmax = std::max(base_radius_mm, bulge ? bulge->peak_radius_mm : 0.0);
  for (const auto& p : centerline) {
    for (int k = 0; k < 3; ++k) {
      if (p[k] - rmax < extent_min[k] || p[k] + rmax > extent_max[k])
        throw DataError("phantom: vessel does not fit inside the extent");
    }
  }
}

double PhantomSpec::length_mm() const { return cumulative_lengths(centerline).back(); }

double PhantomSpec::radius_at(double s) const {
  if (!bulge) return base_radius_mm;
  const double z = (s - bulge->center_arclength_mm) / bulge->sigma_mm;
  return base_radius_mm + (bulge->peak_radius_mm - base_radius_mm) * std::exp(-0.5 * z * z);
}

CenterlineProjection PhantomSpec::project(const Vec3& p) const {
  CenterlineProjection best;
  double best_d2 = std::numeric_limits<double>::infinity();
  double s0 = 0.0;
  const size_t nseg = centerline.size() - 1;
  for (size_t i = 0; i < nseg; ++i) {
    const Vec3& a = centerline[i];
    const Vec3& b = centerline[i + 1];
    const double len = (b - a).norm();
    const SegmentHit hit = closest_on_segment(a, b, p);
    if (hit.dist2 < best_d2) {
      best_d2 = hit.dist2;
      const double tc = std::clamp(hit.t, 0.0, 1.0);
      best.arclength_mm = s0 + tc * len;
      best.beyond_ends = (i == 0 && hit.t < 0.0) || (i == nseg - 1 && hit.t > 1.0);
    }
    s0 += len;
  }
  best.distance_mm = std::sqrt(best_d2);
  return best;
}

bool PhantomSpec::inside(const Vec3& p) const {
  const CenterlineProjection pr = project(p);
  return !pr.beyond_ends && pr.distance_mm < radius_at(pr.arclength_mm);
}

Vec3 PhantomSpec::point_at(double s) const {
  const auto cum = cumulative_lengths(centerline);
  if (s <= 0.0) return centerline.front();
  for (size_t i = 1; i < centerline.size(); ++i) {
    if (s <= cum[i]) {
      const double len = cum[i] - cum[i - 1];
      const double t = len > 0.0 ? (s - cum[i - 1]) / len : 0.0;
      return centerline[i - 1] + t * (centerline[i] - centerline[i - 1]);
    }
  }
  return centerline.back();
}

double PhantomSpec::volume_mm3() const {
  // Simpson over arclength of pi r(s)^2.
  const double len = length_mm();
  const int n = 2 * std::max(1, static_cast<int>(std::ceil(len)));
  const double h = len / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double r = radius_at(i * h);
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * std::numbers::pi * r * r;
  }
  return acc * h / 3.0;
}

void BreathingModel::validate() const {
  if (!(amplitude_mm >= 0.0)) throw DataError("breathing: amplitude must be non-negative");
  if (!(period_s > 0.0)) throw DataError("breathing: period must be positive");
}

double breathing_displacement(const BreathingModel& model, double t_s) {
  return 0.5 * model.amplitude_mm *
         (1.0 - std::cos(2.0 * std::numbers::pi * t_s / model.period_s + model.phase_rad));
}

std::string to_string(CorruptionMode m) {
  switch (m) {
    case CorruptionMode::none: return "none";
    case CorruptionMode::dropout: return "dropout";
    case CorruptionMode::spurious_blob: return "spurious_blob";
    case CorruptionMode::dilation_error: return "dilation_error";
  }
  return "none";
}

CorruptionMode corruption_mode_from_string(const std::string& s) {
  if (s == "none") return CorruptionMode::none;
  if (s == "dropout") return CorruptionMode::dropout;
  if (s == "spurious_blob") return CorruptionMode::spurious_blob;
  if (s == "dilation_error") return CorruptionMode::dilation_error;
  throw DataError("unknown corruption mode '" + s + "'");
}

void CorruptionSpec::validate() const {
  if (!(fraction_corrupted >= 0.0 && fraction_corrupted <= 1.0))
    throw DataError("corruption: fraction must lie in [0, 1]");
  if (fraction_corrupted > 0.0 && modes.empty()) throw DataError("corruption: no modes enabled");
  if (!(dilation_factor > 0.0)) throw DataError("corruption: dilation factor must be positive");
  if (!(blob_scale_min > 0.0 && blob_scale_max >= blob_scale_min))
    throw DataError("corruption: invalid blob scale range");
}

std::mt19937_64 slice_rng(std::uint64_t seed, int slice_index, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(slice_index), static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

namespace {

struct Centroid {
  double u = 0.0;
  double v = 0.0;
  size_t count = 0;
};

Centroid label_centroid(const LabelRaster& label) {
  Centroid c;
  for (int v = 0; v < label.height; ++v)
    for (int u = 0; u < label.width; ++u)
      if (label.at(u, v)) {
        c.u += u;
        c.v += v;
        ++c.count;
      }
  if (c.count) {
    c.u /= c.count;
    c.v /= c.count;
  }
  return c;
}

LabelRaster dilate_about_centroid(const LabelRaster& label, double factor) {
  const Centroid c = label_centroid(label);
  LabelRaster out(label.width, label.height, 0);
  if (!c.count) return out;
  for (int v = 0; v < label.height; ++v)
    for (int u = 0; u < label.width; ++u) {
      const int su = static_cast<int>(std::lround(c.u + (u - c.u) / factor));
      const int sv = static_cast<int>(std::lround(c.v + (v - c.v) / factor));
      if (label.contains(su, sv) && label.at(su, sv)) out.at(u, v) = 1;
    }
  return out;
}

LabelRaster add_spurious_blob(const LabelRaster& label, const CorruptionSpec& spec,
                              std::mt19937_64& rng) {
  // Blocked = foreground plus its 4-neighbours, so the blob stays a separate component.
  LabelRaster blocked = label;
  for (int v = 0; v < label.height; ++v)
    for (int u = 0; u < label.width; ++u)
      if (label.at(u, v)) {
        const int du[] = {1, -1, 0, 0};
        const int dv[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k)
          if (label.contains(u + du[k], v + dv[k])) blocked.at(u + du[k], v + dv[k]) = 1;
      }
  const double eq = std::sqrt(count_foreground(label) / std::numbers::pi);
  std::uniform_real_distribution<double> scale(spec.blob_scale_min, spec.blob_scale_max);
  double radius = (eq > 0.0 ? eq : 6.0) * scale(rng);
  while (radius >= 2.0) {
    const int ri = static_cast<int>(std::ceil(radius));
    if (2 * ri + 1 <= label.width && 2 * ri + 1 <= label.height) {
      std::uniform_int_distribution<int> cu(ri, label.width - 1 - ri);
      std::uniform_int_distribution<int> cv(ri, label.height - 1 - ri);
      for (int attempt = 0; attempt < 200; ++attempt) {
        const int u0 = cu(rng);
        const int v0 = cv(rng);
        bool ok = true;
        for (int v = v0 - ri; v <= v0 + ri && ok; ++v)
          for (int u = u0 - ri; u <= u0 + ri && ok; ++u)
            if ((u - u0) * (u - u0) + (v - v0) * (v - v0) <= radius * radius && blocked.at(u, v))
              ok = false;
        if (!ok) continue;
        LabelRaster out = label;
        for (int v = v0 - ri; v <= v0 + ri; ++v)
          for (int u = u0 - ri; u <= u0 + ri; ++u)
            if ((u - u0) * (u - u0) + (v - v0) * (v - v0) <= radius * radius) out.at(u, v) = 1;
        return out;
      }
    }
    radius *= 0.8;
  }
  return label;
}

}  // namespace

CorruptionResult corrupt_segmentation(const LabelRaster& label, const CorruptionSpec& spec,
                                      int /*slice_index*/, std::mt19937_64& rng) {
  CorruptionResult res{label, false, CorruptionMode::none};
  if (spec.fraction_corrupted <= 0.0 || spec.modes.empty()) return res;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) >= spec.fraction_corrupted) return res;
  std::uniform_int_distribution<size_t> pick(0, spec.modes.size() - 1);
  const CorruptionMode mode = spec.modes[pick(rng)];
  switch (mode) {
    case CorruptionMode::dropout:
      res.label = LabelRaster(label.width, label.height, 0);
      break;
    case CorruptionMode::spurious_blob:
      res.label = add_spurious_blob(label, spec, rng);
      break;
    case CorruptionMode::dilation_error:
      res.label = dilate_about_centroid(label, spec.dilation_factor);
      break;
    case CorruptionMode::none:
      return res;
  }
  res.corrupted = true;
  res.mode = mode;
  return res;
}

std::string to_string(AcquisitionMode m) {
  return m == AcquisitionMode::breath_hold ? "breath_hold" : "free_breathing";
}

AcquisitionMode acquisition_mode_from_string(const std::string& s) {
  if (s == "breath_hold") return AcquisitionMode::breath_hold;
  if (s == "free_breathing") return AcquisitionMode::free_breathing;
  throw DataError("unknown acquisition mode '" + s + "' (expected breath_hold|free_breathing)");
}

void NavParams::validate() const {
  if (!(gain >= 0.0)) throw DataError("nav: gain must be non-negative");
  if (!(step_cap_mm > 0.0)) throw DataError("nav: step cap must be positive");
  if (!(longitudinal_step_mm > 0.0)) throw DataError("nav: longitudinal step must be positive");
  if (!(frame_interval_s > 0.0)) throw DataError("nav: frame interval must be positive");
  if (max_frames < 2) throw DataError("nav: max_frames must be at least 2");
  if (!(hold_threshold_fraction >= 0.0)) throw DataError("nav: hold threshold must be non-negative");
}

void SweepBundle::validate() const {
  probe.validate();
  if (frames.size() < 2) throw DataError("bundle: at least two frames required");
  for (size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    if (!f.intensity.same_shape(f.label)) throw DataError("bundle: raster shapes differ");
    if (f.label.width != probe.image_width_px || f.label.height != probe.image_height_px)
      throw DataError("bundle: raster shape does not match probe geometry");
    for (auto x : f.label.data)
      if (x > 1) throw DataError("bundle: label values must be 0 or 1");
    if (!f.pose.allFinite() || f.pose(3, 0) != 0.0 || f.pose(3, 1) != 0.0 || f.pose(3, 2) != 0.0 ||
        f.pose(3, 3) != 1.0)
      throw DataError("bundle: frame pose is not affine");
    if (i > 0 && !(f.timestamp_s > frames[i - 1].timestamp_s))
      throw DataError("bundle: timestamps must be strictly increasing");
  }
  if (!truth.empty() && truth.size() != frames.size())
    throw DataError("bundle: ground truth does not match frame count");
}

Mat3 probe_orientation() {
  Mat3 r = Mat3::Zero();
  r(0, 0) = -1.0;
  r(1, 1) = 1.0;
  r(2, 2) = -1.0;
  return r;
}

RigidTransform probe_pose(const ProbeGeometry& g, double x_mm, double y_mm, double ap_mm) {
  return RigidTransform::from_rotation_translation(
      probe_orientation(), Vec3(x_mm, y_mm, ap_mm - g.height_offset_mm()));
}

RenderedSlice render_slice(const PhantomSpec& spec, const RigidTransform& plane_pose,
                           const ProbeGeometry& g, double displacement_mm, std::uint64_t seed) {
  const Mat4 world_from_image = plane_pose.matrix() * calibration_matrix(g);
  RenderedSlice out{IntensityRaster(g.image_width_px, g.image_height_px, 0),
                    LabelRaster(g.image_width_px, g.image_height_px, 0)};
  std::mt19937_64 rng = slice_rng(seed, 0, 2);
  std::normal_distribution<double> speckle(0.0, 1.0);
  for (int v = 0; v < g.image_height_px; ++v) {
    for (int u = 0; u < g.image_width_px; ++u) {
      Vec3 p = image_to_world(world_from_image, u, v);
      p[kApAxis] -= displacement_mm;
      const bool in = spec.inside(p);
      out.label.at(u, v) = in ? 1 : 0;
      double value = in ? spec.vessel_intensity : spec.background_intensity;
      if (spec.speckle_sigma > 0.0) value += spec.speckle_sigma * speckle(rng);
      value = std::clamp(value, 0.0, 1.0);
      out.intensity.at(u, v) = static_cast<std::uint8_t>(std::lround(value * 255.0));
    }
  }
  return out;
}

SweepBundle simulate_sweep(const PhantomSpec& spec, const ProbeGeometry& g, const NavParams& nav,
                           const BreathingModel& model, const CorruptionSpec& corruption,
                           AcquisitionMode mode, std::uint64_t seed) {
  spec.validate();
  g.validate();
  nav.validate();
  model.validate();
  corruption.validate();

  SweepBundle bundle;
  bundle.probe = g;
  bundle.mode = mode;
  bundle.breathing = model;

  const Mat4 cal = calibration_matrix(g);
  const double hold_threshold = model.amplitude_mm * nav.hold_threshold_fraction;
  // The button may stay released for a while; bound the idle ticks as well.
  const long max_ticks = 1000L * nav.max_frames;

  double x = nav.start_x_mm;
  double y = nav.start_y_mm;
  bool reached_end = false;
  for (long tick = 0; tick < max_ticks && static_cast<int>(bundle.frames.size()) < nav.max_frames;
       ++tick) {
    const double t = tick * nav.frame_interval_s;
    const double disp = breathing_displacement(model, t);
    if (mode == AcquisitionMode::breath_hold && disp > hold_threshold) continue;  // robot halts

    const int index = static_cast<int>(bundle.frames.size());
    const RigidTransform pose = probe_pose(g, x, y, disp);
    RenderedSlice slice = render_slice(spec, pose, g, disp, seed ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
    if (count_foreground(slice.label) == 0) {
      reached_end = true;
      break;
    }
    std::mt19937_64 rng = slice_rng(corruption.rng_seed, index, 1);
    CorruptionResult seg = corrupt_segmentation(slice.label, corruption, index, rng);

    TrackedFrame frame;
    frame.index = index;
    frame.timestamp_s = t;
    frame.pose = pose.matrix() * cal;
    frame.intensity = std::move(slice.intensity);
    frame.label = seg.label;

    const Centroid c = label_centroid(seg.label);
    if (c.count) {
      const Vec3 target = image_to_world(frame.pose, c.u, c.v);
      const double err = target[kTransverseAxis] - x;
      x += std::clamp(nav.gain * err, -nav.step_cap_mm, nav.step_cap_mm);
    }
    y += nav.longitudinal_step_mm;

    bundle.frames.push_back(std::move(frame));
    bundle.truth.push_back({disp, seg.corrupted, seg.mode});
  }
  if (bundle.frames.empty()) throw DataError("simulate: initial probe pose does not see the vessel");
  bundle.hit_frame_cap = !reached_end;
  return bundle;
}

}  // namespace usinr
