#include "usinr/geometry.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace usinr {

RigidTransform::RigidTransform(const Mat4& m) : m_(m) {
  if (!is_rigid(m)) {
    std::ostringstream os;
    os << "not a rigid transform (orthonormality residual " << orthonormality_residual(m)
       << ", det " << m.topLeftCorner<3, 3>().determinant() << ")";
    throw DataError(os.str());
  }
}

RigidTransform RigidTransform::translation(const Vec3& t) {
  Mat4 m = Mat4::Identity();
  m.topRightCorner<3, 1>() = t;
  return RigidTransform(m);
}

RigidTransform RigidTransform::from_rotation_translation(const Mat3& r, const Vec3& t) {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = r;
  m.topRightCorner<3, 1>() = t;
  return RigidTransform(m);
}

double RigidTransform::orthonormality_residual(const Mat4& m) {
  const Mat3 r = m.topLeftCorner<3, 3>();
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
}

bool RigidTransform::is_rigid(const Mat4& m) {
  if (!m.allFinite()) return false;
  if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0) return false;
  if (orthonormality_residual(m) > kOrthonormalTolerance) return false;
  return m.topLeftCorner<3, 3>().determinant() > 0.0;
}

RigidTransform RigidTransform::inverse() const {
  const Mat3 rt = rotation().transpose();
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rt;
  m.topRightCorner<3, 1>() = -rt * translation();
  RigidTransform out;
  out.m_ = m;
  return out;
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  RigidTransform out;
  out.m_ = m_ * other.m_;
  out.m_.row(3) << 0.0, 0.0, 0.0, 1.0;
  return out;
}

void ProbeGeometry::validate() const {
  if (!(theta > 0.0 && theta < std::numbers::pi)) throw DataError("probe: theta must lie in (0, pi)");
  if (!(r > 0.0)) throw DataError("probe: r must be positive");
  if (!(d > 0.0)) throw DataError("probe: d must be positive");
  if (image_width_px < 2 || image_height_px < 2) throw DataError("probe: image must be at least 2x2");
}

double ProbeGeometry::width_mm() const { return 2.0 * outer_radius() * std::sin(theta / 2.0); }

double ProbeGeometry::height_offset_mm() const { return r - std::cos(theta / 2.0) * r; }

Mat4 compose_chain(const RigidTransform& wte, const RigidTransform& etp, const Mat4& pti) {
  const Mat4 we = wte.matrix() * etp.matrix();
  return we * pti;
}

Mat4 calibration_matrix(const ProbeGeometry& g) {
  g.validate();
  const double w = g.width_mm();
  const double h = g.height_offset_mm();
  Mat4 m;
  // clang-format off
  m << w / g.image_width_px, 0.0,                    0.0, -w / 2.0,
       0.0,                  0.0,                   -1.0,  0.0,
       0.0,                  g.d / g.image_height_px, 0.0, -h,
       0.0,                  0.0,                    0.0,  1.0;
  // clang-format on
  return m;
}

Vec3 transform_point(const Mat4& m, const Vec3& p) {
  return m.topLeftCorner<3, 3>() * p + m.topRightCorner<3, 1>();
}

Vec3 image_to_world(const Mat4& world_from_image, double u, double v) {
  return transform_point(world_from_image, Vec3(u, v, 0.0));
}

Vec3 pixel_to_world(const RigidTransform& frame_pose, const Mat4& cal, const ProbeGeometry& g,
                    PixelCoord p) {
  if (p.u < 0 || p.v < 0 || p.u >= g.image_width_px || p.v >= g.image_height_px) {
    std::ostringstream os;
    os << "pixel (" << p.u << ", " << p.v << ") outside " << g.image_width_px << "x"
       << g.image_height_px << " image";
    throw DataError(os.str());
  }
  const Mat4 world_from_image = frame_pose.matrix() * cal;
  return image_to_world(world_from_image, p.u, p.v);
}

}  // namespace usinr
