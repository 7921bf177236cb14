#pragma once

#include <Eigen/Core>
#include <cmath>

#include "flowins/dual.hpp"
#include "flowins/errors.hpp"

namespace flowins {

// ---------------------------------------------------------------------------
// Small templated kernels. These are instantiated with double for plain
// evaluation and with Dual<N> when a Jacobian of the surrounding computation
// is needed.
// ---------------------------------------------------------------------------

template <typename T>
struct Vec3T {
  T x{}, y{}, z{};

  Vec3T() = default;
  Vec3T(T xx, T yy, T zz) : x(xx), y(yy), z(zz) {}

  Vec3T operator+(const Vec3T& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3T operator-(const Vec3T& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3T operator*(const T& s) const { return {x * s, y * s, z * s}; }
  T dot(const Vec3T& o) const { return x * o.x + y * o.y + z * o.z; }
  T squared_norm() const { return dot(*this); }
};

/// Quaternion with scalar-first component order (w, x, y, z).
template <typename T>
struct QuatT {
  T w{}, x{}, y{}, z{};

  QuatT() : w(1.0) {}
  QuatT(T ww, T xx, T yy, T zz) : w(ww), x(xx), y(yy), z(zz) {}

  QuatT conjugate() const { return {w, -x, -y, -z}; }
  T squared_norm() const { return w * w + x * x + y * y + z * z; }
};

/// Hamilton product, no renormalization.
template <typename T>
QuatT<T> hamilton(const QuatT<T>& a, const QuatT<T>& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

template <typename T>
QuatT<T> normalized(const QuatT<T>& q) {
  using std::sqrt;
  const T inv = 1.0 / sqrt(q.squared_norm());
  return {q.w * inv, q.x * inv, q.y * inv, q.z * inv};
}

/// Unit norm with w >= 0 (double-cover representative).
template <typename T>
QuatT<T> canonical(const QuatT<T>& q) {
  QuatT<T> n = normalized(q);
  if (n.w < 0.0) return {-n.w, -n.x, -n.y, -n.z};
  return n;
}

/// Rotation quaternion for a rotation vector theta (axis * angle).
/// Series expansion in |theta|^2 below 1e-8 keeps the zero-rotation case
/// smooth for the tangent computation.
template <typename T>
QuatT<T> quat_from_rotvec(const Vec3T<T>& theta) {
  using std::sqrt;
  using std::sin;
  using std::cos;
  const T t2 = theta.squared_norm();
  T w, k;
  if (value_of(t2) < 1e-16) {
    w = 1.0 - t2 * (1.0 / 8.0) + t2 * t2 * (1.0 / 384.0);
    k = 0.5 - t2 * (1.0 / 48.0) + t2 * t2 * (1.0 / 3840.0);
  } else {
    const T angle = sqrt(t2);
    w = cos(angle * 0.5);
    k = sin(angle * 0.5) / angle;
  }
  return {w, k * theta.x, k * theta.y, k * theta.z};
}

/// Homogeneous (quadratic) rotation matrix applied to v. Exact rotation for
/// unit q; scales by |q|^2 otherwise, which cancels under dehomogenization.
template <typename T>
Vec3T<T> rotate(const QuatT<T>& q, const Vec3T<T>& v) {
  const T ww = q.w * q.w, xx = q.x * q.x, yy = q.y * q.y, zz = q.z * q.z;
  const T wx = q.w * q.x, wy = q.w * q.y, wz = q.w * q.z;
  const T xy = q.x * q.y, xz = q.x * q.z, yz = q.y * q.z;
  return {(ww + xx - yy - zz) * v.x + 2.0 * (xy - wz) * v.y + 2.0 * (xz + wy) * v.z,
          2.0 * (xy + wz) * v.x + (ww - xx + yy - zz) * v.y + 2.0 * (yz - wx) * v.z,
          2.0 * (xz - wy) * v.x + 2.0 * (yz + wx) * v.y + (ww - xx - yy + zz) * v.z};
}

/// Inverse rotation (conjugate sandwich).
template <typename T>
Vec3T<T> rotate_inverse(const QuatT<T>& q, const Vec3T<T>& v) {
  return rotate(q.conjugate(), v);
}

// ---------------------------------------------------------------------------
// Domain types (double-facing).
// ---------------------------------------------------------------------------

using UnitQuaternion = QuatT<double>;

/// Homogeneous world point. `w` is 1 after dehomogenization.
struct WorldPoint {
  double x{0.0}, y{0.0}, z{0.0};
  double w{1.0};

  Eigen::Vector3d xyz() const { return {x, y, z}; }
};

/// Pinhole intrinsics plus IMU-to-camera extrinsics.
/// R_imu_cam maps IMU-frame vectors into the camera frame; t_imu_cam is the
/// IMU origin expressed in the camera frame.
struct CameraModel {
  double fx{0.0}, fy{0.0};
  double cx{0.0}, cy{0.0};
  int image_width{0}, image_height{0};
  Eigen::Matrix3d R_imu_cam{Eigen::Matrix3d::Identity()};
  Eigen::Vector3d t_imu_cam{Eigen::Vector3d::Zero()};

  void validate() const;
};

using ProjectionMatrix = Eigen::Matrix<double, 3, 4>;

/// 3x4 projection in kernel form.
template <typename T>
struct Mat34T {
  T m[3][4]{};
};

/// K [R^T | -R^T c] for a body pose (p, q) composed with the IMU-to-camera
/// extrinsics. q is the body-to-world orientation. With the homogeneous
/// rotation form the whole matrix scales by |q|^2, which cancels under
/// dehomogenization.
template <typename T>
Mat34T<T> projection_from_pose(const CameraModel& cam, const Vec3T<T>& p,
                               const QuatT<T>& q) {
  // World-to-camera rotation R_cw = R_imu_cam * R(q)^T, built row-wise:
  // row_i(R_cw)^T = R(q) * row_i(R_imu_cam)^T.
  Vec3T<T> rows[3];
  for (int i = 0; i < 3; ++i) {
    const Vec3T<T> b(cam.R_imu_cam(i, 0), cam.R_imu_cam(i, 1), cam.R_imu_cam(i, 2));
    rows[i] = rotate(q, b);
  }
  // Camera-frame point: x_cam = R_cw (x_w - p) + t_imu_cam. The extrinsic
  // translation is scaled by |q|^2 to match the homogeneous rotation scale.
  const T n2 = q.squared_norm();
  T tcol[3];
  for (int i = 0; i < 3; ++i) {
    tcol[i] = cam.t_imu_cam(i) * n2 - rows[i].dot(p);
  }

  const double K[3][3] = {{cam.fx, 0.0, cam.cx}, {0.0, cam.fy, cam.cy}, {0.0, 0.0, 1.0}};
  const T Rcw[3][3] = {{rows[0].x, rows[0].y, rows[0].z},
                       {rows[1].x, rows[1].y, rows[1].z},
                       {rows[2].x, rows[2].y, rows[2].z}};
  Mat34T<T> out;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      out.m[i][j] = K[i][0] * Rcw[0][j] + K[i][1] * Rcw[1][j] + K[i][2] * Rcw[2][j];
    }
    out.m[i][3] = K[i][0] * tcol[0] + K[i][1] * tcol[1] + K[i][2] * tcol[2];
  }
  return out;
}

/// Camera center in world coordinates for a body pose with extrinsics.
template <typename T>
Vec3T<T> camera_center_from_pose(const CameraModel& cam, const Vec3T<T>& p,
                                 const QuatT<T>& q) {
  const Eigen::Vector3d c_imu = -cam.R_imu_cam.transpose() * cam.t_imu_cam;
  const Vec3T<T> ci(T(c_imu.x()), T(c_imu.y()), T(c_imu.z()));
  const T n2 = q.squared_norm();
  Vec3T<T> r = rotate(q, ci);
  return {p.x + r.x / n2, p.y + r.y / n2, p.z + r.z / n2};
}

/// Homogeneous projection: returns (numerator_u, numerator_v, depth).
template <typename T>
void project_h(const Mat34T<T>& P, const Vec3T<T>& p, T out[3]) {
  for (int i = 0; i < 3; ++i) {
    out[i] = P.m[i][0] * p.x + P.m[i][1] * p.y + P.m[i][2] * p.z + P.m[i][3];
  }
}

// ---------------------------------------------------------------------------
// 4x4 symmetric eigendecomposition (cyclic Jacobi).
// ---------------------------------------------------------------------------

/// Eigen-decomposition of a symmetric 4x4 via cyclic Jacobi rotations.
/// Deterministic: fixed rotation order, convergence on the value part plus
/// one settling sweep for the tangents. Eigenvalues are not sorted; V holds
/// eigenvectors in columns.
template <typename T>
void sym_eigen4(T A[4][4], T V[4][4]) {
  using std::sqrt;
  using std::sin;
  using std::cos;
  using std::atan2;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) V[i][j] = (i == j) ? T(1.0) : T(0.0);

  double scale = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) scale += value_of(A[i][j]) * value_of(A[i][j]);
  const double tol = 1e-30 * scale;

  bool final_sweep = false;
  for (int sweep = 0; sweep < 30; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) off += 2.0 * value_of(A[i][j]) * value_of(A[i][j]);
    if (off <= tol) {
      if (final_sweep) break;
      final_sweep = true;  // one more sweep settles the tangent part
    }
    for (int p = 0; p < 3; ++p) {
      for (int q = p + 1; q < 4; ++q) {
        const T apq = A[p][q];
        if (value_of(apq) == 0.0) {
          // Zero pivot with possibly nonzero tangent: the atan2 form below
          // still yields the correct tangent rotation, so fall through
          // unless the gap is also zero (rotation undefined, skip).
          if (value_of(A[q][q] - A[p][p]) == 0.0) continue;
        }
        const T theta = 0.5 * atan2(2.0 * apq, A[q][q] - A[p][p]);
        const T c = cos(theta);
        const T s = sin(theta);
        // B = G^T A G with G the (p,q) rotation.
        for (int k = 0; k < 4; ++k) {
          const T akp = A[k][p], akq = A[k][q];
          A[k][p] = c * akp - s * akq;
          A[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < 4; ++k) {
          const T apk = A[p][k], aqk = A[q][k];
          A[p][k] = c * apk - s * aqk;
          A[q][k] = s * apk + c * aqk;
        }
        for (int k = 0; k < 4; ++k) {
          const T vkp = V[k][p], vkq = V[k][q];
          V[k][p] = c * vkp - s * vkq;
          V[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Triangulation.
// ---------------------------------------------------------------------------

enum class DegeneracyReason {
  None,
  ZeroBaseline,     ///< camera centers closer than baseline_epsilon
  IllConditioned,   ///< two smallest singular values too close
  PointAtInfinity,  ///< homogeneous weight of the solution vanishes
  BehindCamera,     ///< negative depth in one of the views
};

struct ConditioningReport {
  double sigma_second_smallest{0.0};
  double sigma_smallest{0.0};
  double baseline{0.0};
};

struct TriangulationOptions {
  double baseline_epsilon = 1e-4;   // m
  double sigma_ratio_min = 10.0;    // reject if sigma3 < ratio * sigma4
  double depth_epsilon = 1e-6;      // homogeneous depth for projections
};

template <typename T>
struct TriangulationKernelResult {
  Vec3T<T> point;
  T sigma3{};  // second smallest singular value of the normalized system
  T sigma4{};  // smallest
  bool at_infinity{false};
};

/// Solve the stacked two-view system for the homogeneous world point: build
/// the 4x4 epipolar matrix from rows (u P3 - P1, v P3 - P2) of both views,
/// row-normalize, and take the eigenvector of A^T A for the smallest
/// eigenvalue. Degeneracy decisions are left to the caller.
template <typename T>
TriangulationKernelResult<T> triangulate_kernel(const Mat34T<T>& P1,
                                                const Mat34T<T>& P2,
                                                const T& u1, const T& v1,
                                                const T& u2, const T& v2) {
  using std::sqrt;
  T rows[4][4];
  for (int j = 0; j < 4; ++j) {
    rows[0][j] = u1 * P1.m[2][j] - P1.m[0][j];
    rows[1][j] = v1 * P1.m[2][j] - P1.m[1][j];
    rows[2][j] = u2 * P2.m[2][j] - P2.m[0][j];
    rows[3][j] = v2 * P2.m[2][j] - P2.m[1][j];
  }
  // Pixel rows and metric rows differ by orders of magnitude; normalize so
  // the smallest singular vector is meaningful.
  for (int i = 0; i < 4; ++i) {
    T n2 = rows[i][0] * rows[i][0];
    for (int j = 1; j < 4; ++j) n2 += rows[i][j] * rows[i][j];
    const T inv = 1.0 / sqrt(n2);
    for (int j = 0; j < 4; ++j) rows[i][j] = rows[i][j] * inv;
  }
  T AtA[4][4];
  for (int i = 0; i < 4; ++i) {
    for (int j = i; j < 4; ++j) {
      T s = rows[0][i] * rows[0][j];
      for (int k = 1; k < 4; ++k) s += rows[k][i] * rows[k][j];
      AtA[i][j] = s;
      AtA[j][i] = s;
    }
  }
  T V[4][4];
  sym_eigen4(AtA, V);

  int i_min = 0, i_second = 1;
  double lmin = value_of(AtA[0][0]);
  for (int i = 1; i < 4; ++i) {
    if (value_of(AtA[i][i]) < lmin) {
      lmin = value_of(AtA[i][i]);
      i_min = i;
    }
  }
  double lsecond = 0.0;
  bool first = true;
  for (int i = 0; i < 4; ++i) {
    if (i == i_min) continue;
    if (first || value_of(AtA[i][i]) < lsecond) {
      lsecond = value_of(AtA[i][i]);
      i_second = i;
      first = false;
    }
  }

  TriangulationKernelResult<T> out;
  const T l4 = AtA[i_min][i_min];
  const T l3 = AtA[i_second][i_second];
  out.sigma4 = sqrt(value_of(l4) > 0.0 ? l4 : T(0.0));
  out.sigma3 = sqrt(value_of(l3) > 0.0 ? l3 : T(0.0));

  const T hw = V[3][i_min];
  T hnorm2 = V[0][i_min] * V[0][i_min];
  for (int k = 1; k < 4; ++k) hnorm2 += V[k][i_min] * V[k][i_min];
  if (value_of(hw) * value_of(hw) < 1e-24 * value_of(hnorm2)) {
    out.at_infinity = true;
    return out;
  }
  const T invw = 1.0 / hw;
  out.point = {V[0][i_min] * invw, V[1][i_min] * invw, V[2][i_min] * invw};
  return out;
}

// ---------------------------------------------------------------------------
// Public operations (double-facing).
// ---------------------------------------------------------------------------

/// Hamilton product of two unit quaternions, canonical (w >= 0) result.
UnitQuaternion quat_multiply(const UnitQuaternion& a, const UnitQuaternion& b);

/// Rotation quaternion for rotating at rate omega [rad/s] over dt seconds.
UnitQuaternion quat_from_rate(const Eigen::Vector3d& omega, double dt);

/// Rotate v by q (body-to-world for a body-to-world q).
Eigen::Vector3d rotate_vector(const UnitQuaternion& q, const Eigen::Vector3d& v);

/// 3x3 rotation matrix of a unit quaternion.
Eigen::Matrix3d rotation_matrix(const UnitQuaternion& q);

/// K [R^T | -R^T c] from intrinsics and a *camera* pose (center c, camera-to
/// -world rotation R). Used by tests that compose the matrix explicitly; the
/// state-driven path goes through projection_from_pose.
ProjectionMatrix make_projection(const CameraModel& cam, const Eigen::Matrix3d& R_cam_world,
                                 const Eigen::Vector3d& center);

/// Dehomogenized pixel coordinates. Throws ProjectionError when the
/// homogeneous depth is at or below depth_epsilon.
Eigen::Vector2d project(const ProjectionMatrix& P, const WorldPoint& p,
                        double depth_epsilon = 1e-6);

/// Camera center of an arbitrary rank-3 projection matrix (null vector).
Eigen::Vector3d camera_center(const ProjectionMatrix& P);

struct TriangulationResult {
  WorldPoint point;
  ConditioningReport report;
  bool degenerate{false};
  DegeneracyReason reason{DegeneracyReason::None};
};

/// Two-view triangulation of a pixel correspondence. Never throws; inspect
/// `degenerate`.
TriangulationResult triangulate(const ProjectionMatrix& P1, const ProjectionMatrix& P2,
                                const Eigen::Vector2d& px1, const Eigen::Vector2d& px2,
                                const TriangulationOptions& opts = {});

/// Camera pose for the pose-level triangulation Jacobian.
struct BodyPose {
  Eigen::Vector3d p{Eigen::Vector3d::Zero()};
  UnitQuaternion q;
};

struct TriangulationJacobian {
  Eigen::Vector3d point{Eigen::Vector3d::Zero()};
  /// d point / d (p1[3], q1[4], p2[3], q2[4], px1[2], px2[2])
  Eigen::Matrix<double, 3, 18> J{Eigen::Matrix<double, 3, 18>::Zero()};
  ConditioningReport report;
  bool degenerate{false};
  DegeneracyReason reason{DegeneracyReason::None};
};

/// Derivative of the dehomogenized triangulated point with respect to both
/// body poses and both pixel observations, obtained by forward-mode
/// differentiation through the entire solve (including the eigen step).
TriangulationJacobian triangulate_pose_jacobian(const CameraModel& cam,
                                                const BodyPose& pose1,
                                                const BodyPose& pose2,
                                                const Eigen::Vector2d& px1,
                                                const Eigen::Vector2d& px2,
                                                const TriangulationOptions& opts = {});

/// Same solve as triangulate(), but with the projections built from body
/// poses and the camera extrinsics.
TriangulationResult triangulate_from_poses(const CameraModel& cam, const BodyPose& pose1,
                                           const BodyPose& pose2, const Eigen::Vector2d& px1,
                                           const Eigen::Vector2d& px2,
                                           const TriangulationOptions& opts = {});

/// Projection matrix of a body pose composed with the camera extrinsics.
ProjectionMatrix projection_for_pose(const CameraModel& cam, const BodyPose& pose);

/// World-frame camera center of a body pose composed with the extrinsics.
Eigen::Vector3d camera_center_for_pose(const CameraModel& cam, const BodyPose& pose);

// Interop helpers.
inline Vec3T<double> to_vec3(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }
inline Eigen::Vector3d to_eigen(const Vec3T<double>& v) { return {v.x, v.y, v.z}; }

}  // namespace flowins
