#include "flowins/geometry.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace flowins {

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error("CameraModel: focal lengths must be positive");
  if (!(cx >= 0.0 && cx < image_width) || !(cy >= 0.0 && cy < image_height))
    throw Error("CameraModel: principal point outside image");
  const Eigen::Matrix3d should_be_identity =
      R_imu_cam * R_imu_cam.transpose() - Eigen::Matrix3d::Identity();
  if (should_be_identity.norm() > 1e-9 || std::abs(R_imu_cam.determinant() - 1.0) > 1e-9)
    throw Error("CameraModel: R_imu_cam is not a proper rotation");
}

UnitQuaternion quat_multiply(const UnitQuaternion& a, const UnitQuaternion& b) {
  return canonical(hamilton(a, b));
}

UnitQuaternion quat_from_rate(const Eigen::Vector3d& omega, double dt) {
  if (dt < 0.0) throw Error("quat_from_rate: dt must be nonnegative");
  return canonical(quat_from_rotvec(Vec3T<double>{omega.x() * dt, omega.y() * dt, omega.z() * dt}));
}

Eigen::Vector3d rotate_vector(const UnitQuaternion& q, const Eigen::Vector3d& v) {
  return to_eigen(rotate(q, to_vec3(v)));
}

Eigen::Matrix3d rotation_matrix(const UnitQuaternion& q) {
  Eigen::Matrix3d R;
  R.col(0) = rotate_vector(q, Eigen::Vector3d::UnitX());
  R.col(1) = rotate_vector(q, Eigen::Vector3d::UnitY());
  R.col(2) = rotate_vector(q, Eigen::Vector3d::UnitZ());
  return R;
}

ProjectionMatrix make_projection(const CameraModel& cam, const Eigen::Matrix3d& R_cam_world,
                                 const Eigen::Vector3d& center) {
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
  K(0, 0) = cam.fx;
  K(1, 1) = cam.fy;
  K(0, 2) = cam.cx;
  K(1, 2) = cam.cy;
  ProjectionMatrix P;
  P.leftCols<3>() = K * R_cam_world.transpose();
  P.col(3) = -K * R_cam_world.transpose() * center;
  return P;
}

Eigen::Vector2d project(const ProjectionMatrix& P, const WorldPoint& p, double depth_epsilon) {
  const Eigen::Vector4d ph(p.x, p.y, p.z, p.w);
  const Eigen::Vector3d uvw = P * ph;
  if (!(uvw.z() > depth_epsilon))
    throw ProjectionError("project: homogeneous depth " + std::to_string(uvw.z()) +
                          " at or below epsilon");
  return {uvw.x() / uvw.z(), uvw.y() / uvw.z()};
}

Eigen::Vector3d camera_center(const ProjectionMatrix& P) {
  const Eigen::Matrix4d M = P.transpose() * P;
  double A[4][4], V[4][4];
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) A[i][j] = M(i, j);
  sym_eigen4(A, V);
  int imin = 0;
  for (int i = 1; i < 4; ++i)
    if (A[i][i] < A[imin][imin]) imin = i;
  if (std::abs(V[3][imin]) < 1e-12)
    throw NumericalError("camera_center: projection has center at infinity");
  return Eigen::Vector3d(V[0][imin], V[1][imin], V[2][imin]) / V[3][imin];
}

namespace {

Mat34T<double> to_mat34(const ProjectionMatrix& P) {
  Mat34T<double> out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) out.m[i][j] = P(i, j);
  return out;
}

}  // namespace

TriangulationResult triangulate(const ProjectionMatrix& P1, const ProjectionMatrix& P2,
                                const Eigen::Vector2d& px1, const Eigen::Vector2d& px2,
                                const TriangulationOptions& opts) {
  TriangulationResult res;
  const Eigen::Vector3d c1 = camera_center(P1);
  const Eigen::Vector3d c2 = camera_center(P2);
  res.report.baseline = (c1 - c2).norm();
  if (res.report.baseline < opts.baseline_epsilon) {
    res.degenerate = true;
    res.reason = DegeneracyReason::ZeroBaseline;
    return res;
  }
  const auto kr = triangulate_kernel(to_mat34(P1), to_mat34(P2), px1.x(), px1.y(),
                                     px2.x(), px2.y());
  res.report.sigma_smallest = kr.sigma4;
  res.report.sigma_second_smallest = kr.sigma3;
  // Rows are unit-normalized, so sigma values are scale-free; a vanishing
  // second-smallest value means a (near) two-dimensional null space.
  if (kr.sigma3 < opts.sigma_ratio_min * kr.sigma4 || kr.sigma3 < 1e-9) {
    res.degenerate = true;
    res.reason = DegeneracyReason::IllConditioned;
    return res;
  }
  if (kr.at_infinity) {
    res.degenerate = true;
    res.reason = DegeneracyReason::PointAtInfinity;
    return res;
  }
  res.point = WorldPoint{kr.point.x, kr.point.y, kr.point.z, 1.0};
  return res;
}

TriangulationResult triangulate_from_poses(const CameraModel& cam, const BodyPose& pose1,
                                           const BodyPose& pose2, const Eigen::Vector2d& px1,
                                           const Eigen::Vector2d& px2,
                                           const TriangulationOptions& opts) {
  TriangulationResult res;
  const Vec3T<double> c1 = camera_center_from_pose(cam, to_vec3(pose1.p), pose1.q);
  const Vec3T<double> c2 = camera_center_from_pose(cam, to_vec3(pose2.p), pose2.q);
  res.report.baseline = std::sqrt((c1 - c2).squared_norm());
  if (res.report.baseline < opts.baseline_epsilon) {
    res.degenerate = true;
    res.reason = DegeneracyReason::ZeroBaseline;
    return res;
  }
  const Mat34T<double> P1 = projection_from_pose(cam, to_vec3(pose1.p), pose1.q);
  const Mat34T<double> P2 = projection_from_pose(cam, to_vec3(pose2.p), pose2.q);
  const auto kr = triangulate_kernel(P1, P2, px1.x(), px1.y(), px2.x(), px2.y());
  res.report.sigma_smallest = kr.sigma4;
  res.report.sigma_second_smallest = kr.sigma3;
  if (kr.sigma3 < opts.sigma_ratio_min * kr.sigma4 || kr.sigma3 < 1e-9) {
    res.degenerate = true;
    res.reason = DegeneracyReason::IllConditioned;
    return res;
  }
  if (kr.at_infinity) {
    res.degenerate = true;
    res.reason = DegeneracyReason::PointAtInfinity;
    return res;
  }
  res.point = WorldPoint{kr.point.x, kr.point.y, kr.point.z, 1.0};
  return res;
}

ProjectionMatrix projection_for_pose(const CameraModel& cam, const BodyPose& pose) {
  const Mat34T<double> P = projection_from_pose(cam, to_vec3(pose.p), pose.q);
  ProjectionMatrix out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) out(i, j) = P.m[i][j];
  return out;
}

Eigen::Vector3d camera_center_for_pose(const CameraModel& cam, const BodyPose& pose) {
  return to_eigen(camera_center_from_pose(cam, to_vec3(pose.p), pose.q));
}

TriangulationJacobian triangulate_pose_jacobian(const CameraModel& cam,
                                                const BodyPose& pose1,
                                                const BodyPose& pose2,
                                                const Eigen::Vector2d& px1,
                                                const Eigen::Vector2d& px2,
                                                const TriangulationOptions& opts) {
  using D = Dual<18>;
  TriangulationJacobian out;

  const Vec3T<D> p1{D::variable(pose1.p.x(), 0), D::variable(pose1.p.y(), 1),
                    D::variable(pose1.p.z(), 2)};
  const QuatT<D> q1{D::variable(pose1.q.w, 3), D::variable(pose1.q.x, 4),
                    D::variable(pose1.q.y, 5), D::variable(pose1.q.z, 6)};
  const Vec3T<D> p2{D::variable(pose2.p.x(), 7), D::variable(pose2.p.y(), 8),
                    D::variable(pose2.p.z(), 9)};
  const QuatT<D> q2{D::variable(pose2.q.w, 10), D::variable(pose2.q.x, 11),
                    D::variable(pose2.q.y, 12), D::variable(pose2.q.z, 13)};
  const D u1 = D::variable(px1.x(), 14);
  const D v1 = D::variable(px1.y(), 15);
  const D u2 = D::variable(px2.x(), 16);
  const D v2 = D::variable(px2.y(), 17);

  const Vec3T<double> c1 = camera_center_from_pose(cam, to_vec3(pose1.p), pose1.q);
  const Vec3T<double> c2 = camera_center_from_pose(cam, to_vec3(pose2.p), pose2.q);
  out.report.baseline = std::sqrt((c1 - c2).squared_norm());
  if (out.report.baseline < opts.baseline_epsilon) {
    out.degenerate = true;
    out.reason = DegeneracyReason::ZeroBaseline;
    return out;
  }

  const Mat34T<D> P1 = projection_from_pose(cam, p1, q1);
  const Mat34T<D> P2 = projection_from_pose(cam, p2, q2);
  const auto kr = triangulate_kernel(P1, P2, u1, v1, u2, v2);
  out.report.sigma_smallest = value_of(kr.sigma4);
  out.report.sigma_second_smallest = value_of(kr.sigma3);
  if (value_of(kr.sigma3) < opts.sigma_ratio_min * value_of(kr.sigma4) ||
      value_of(kr.sigma3) < 1e-9) {
    out.degenerate = true;
    out.reason = DegeneracyReason::IllConditioned;
    return out;
  }
  if (kr.at_infinity) {
    out.degenerate = true;
    out.reason = DegeneracyReason::PointAtInfinity;
    return out;
  }
  out.point = {kr.point.x.v, kr.point.y.v, kr.point.z.v};
  out.J.row(0) = kr.point.x.d.transpose();
  out.J.row(1) = kr.point.y.d.transpose();
  out.J.row(2) = kr.point.z.d.transpose();
  return out;
}

}  // namespace flowins
