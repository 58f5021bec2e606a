#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "usinr/error.hpp"

namespace usinr {

using Mat4 = Eigen::Matrix<double, 4, 4, Eigen::RowMajor>;
using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

/// Proper rigid motion in homogeneous form. Translation is in mm.
///
/// The upper-left 3x3 block is orthonormal with determinant +1 and the last
/// row is exactly (0, 0, 0, 1); construction fails otherwise.
class RigidTransform {
 public:
  static constexpr double kOrthonormalTolerance = 1e-9;

  RigidTransform() : m_(Mat4::Identity()) {}

  /// Throws DataError if `m` is not a proper rigid transform.
  explicit RigidTransform(const Mat4& m);

  static RigidTransform identity() { return RigidTransform(); }
  static RigidTransform translation(const Vec3& t);
  static RigidTransform from_rotation_translation(const Mat3& r, const Vec3& t);

  /// Largest entry of |R^T R - I|.
  static double orthonormality_residual(const Mat4& m);
  static bool is_rigid(const Mat4& m);

  const Mat4& matrix() const { return m_; }
  Mat3 rotation() const { return m_.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return m_.topRightCorner<3, 1>(); }

  Vec3 apply(const Vec3& p) const { return rotation() * p + translation(); }
  RigidTransform inverse() const;
  RigidTransform operator*(const RigidTransform& other) const;

 private:
  Mat4 m_;
};

/// Convex probe description. Angles in radians, lengths in mm.
struct ProbeGeometry {
  double theta = 0.7;   // opening angle
  double r = 30.0;      // probe origin to tip
  double d = 100.0;     // imaging depth
  int image_width_px = 96;
  int image_height_px = 96;

  /// Throws DataError when any field violates 0 < theta < pi, r > 0, d > 0, W,H >= 2.
  void validate() const;

  double outer_radius() const { return d + r; }
  /// Lateral extent of the image in mm, w = 2 R sin(theta / 2).
  double width_mm() const;
  /// Tip-to-image-origin offset, h = r - r cos(theta / 2).
  double height_offset_mm() const;
  double lateral_spacing_mm() const { return width_mm() / image_width_px; }
  double axial_spacing_mm() const { return d / image_height_px; }
};

struct PixelCoord {
  int u = 0;  // column
  int v = 0;  // row
};

/// World <- end effector <- probe <- image, evaluated left to right.
/// `pti` may be any affine matrix (the pixel calibration scales to mm).
Mat4 compose_chain(const RigidTransform& wte, const RigidTransform& etp, const Mat4& pti);

/// Pixel (u, v) -> probe frame mm. Lateral x = (w/W) u - w/2, out-of-plane y = 0,
/// depth z = (d/H) v - h.
Mat4 calibration_matrix(const ProbeGeometry& g);

/// Applies an affine 4x4 to a 3D point.
Vec3 transform_point(const Mat4& m, const Vec3& p);

/// Maps continuous image coordinates (no bounds check) through pose * cal.
Vec3 image_to_world(const Mat4& world_from_image, double u, double v);

/// Maps a pixel through frame_pose * cal. Throws DataError for pixels outside
/// the W x H image described by `g`.
Vec3 pixel_to_world(const RigidTransform& frame_pose, const Mat4& cal, const ProbeGeometry& g,
                    PixelCoord p);

}  // namespace usinr
