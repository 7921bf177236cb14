#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "flowins/errors.hpp"
#include "flowins/geometry.hpp"

namespace flowins {

inline constexpr int kStateDim = 26;

using StateVector = Eigen::Matrix<double, kStateDim, 1>;
using StateMatrix = Eigen::Matrix<double, kStateDim, kStateDim>;

/// Fixed state layout.
namespace idx {
inline constexpr int p = 0;    ///< position (3)
inline constexpr int v = 3;    ///< velocity (3)
inline constexpr int q = 6;    ///< orientation quaternion, w first (4)
inline constexpr int ba = 10;  ///< accelerometer bias (3)
inline constexpr int bw = 13;  ///< gyroscope bias (3)
inline constexpr int ta = 16;  ///< accelerometer scale (3)
inline constexpr int pm = 19;  ///< augmented past position (3)
inline constexpr int qm = 22;  ///< augmented past quaternion (4)
}  // namespace idx

/// Filter state: 26-dim mean and covariance over (p, v, q, b_a, b_w, T_a,
/// p_minus, q_minus). The quaternion covariance is carried over the four
/// components directly, with renormalization of the mean after each step.
struct StateEstimate {
  StateVector m;
  StateMatrix P;

  StateEstimate() {
    m.setZero();
    m[idx::q] = 1.0;
    m[idx::qm] = 1.0;
    m.segment<3>(idx::ta).setOnes();
    P = StateMatrix::Identity();
  }

  Eigen::Vector3d position() const { return m.segment<3>(idx::p); }
  Eigen::Vector3d velocity() const { return m.segment<3>(idx::v); }
  Eigen::Vector3d accel_bias() const { return m.segment<3>(idx::ba); }
  Eigen::Vector3d gyro_bias() const { return m.segment<3>(idx::bw); }
  Eigen::Vector3d accel_scale() const { return m.segment<3>(idx::ta); }
  Eigen::Vector3d past_position() const { return m.segment<3>(idx::pm); }

  UnitQuaternion orientation() const {
    return {m[idx::q], m[idx::q + 1], m[idx::q + 2], m[idx::q + 3]};
  }
  UnitQuaternion past_orientation() const {
    return {m[idx::qm], m[idx::qm + 1], m[idx::qm + 2], m[idx::qm + 3]};
  }

  void set_orientation(const UnitQuaternion& q) {
    m[idx::q] = q.w;
    m[idx::q + 1] = q.x;
    m[idx::q + 2] = q.y;
    m[idx::q + 3] = q.z;
  }
  void set_past_orientation(const UnitQuaternion& q) {
    m[idx::qm] = q.w;
    m[idx::qm + 1] = q.x;
    m[idx::qm + 2] = q.y;
    m[idx::qm + 3] = q.z;
  }

  void renormalize_quaternions() {
    m.segment<4>(idx::q).normalize();
    m.segment<4>(idx::qm).normalize();
  }

  void symmetrize() { P = ((P + P.transpose()) * 0.5).eval(); }

  /// Cheap invariants: unit quaternions and covariance symmetry.
  void check_basic(double quat_tol = 1e-9) const {
    if (std::abs(m.segment<4>(idx::q).norm() - 1.0) > quat_tol ||
        std::abs(m.segment<4>(idx::qm).norm() - 1.0) > quat_tol)
      throw CovarianceNotPSD("state quaternion not unit norm");
    const double scale = P.norm();
    if ((P - P.transpose()).norm() > 1e-10 * std::max(scale, 1e-300))
      throw CovarianceNotPSD("state covariance not symmetric");
  }

  double min_covariance_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<StateMatrix> es(P, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

  /// Full invariant check including positive semidefiniteness.
  void check_psd() const {
    check_basic();
    const double scale = P.norm();
    if (min_covariance_eigenvalue() < -1e-10 * std::max(scale, 1e-300))
      throw CovarianceNotPSD("state covariance has a negative eigenvalue");
  }
};

/// Copy the current pose (p, q) into the augmented slots, with exact
/// cross-covariances for the equality and a nugget on the new diagonal.
/// This is the uninformative-prior limit of the pose augmentation update,
/// valid when the augmented block is uncorrelated with the rest (i.e. right
/// after a forgetting step).
inline void clone_pose_into_augmented(StateEstimate& x, double nugget) {
  constexpr int core = 19;
  const int sel[7] = {idx::p, idx::p + 1, idx::p + 2, idx::q, idx::q + 1, idx::q + 2,
                      idx::q + 3};

  x.m.segment<3>(idx::pm) = x.m.segment<3>(idx::p);
  x.m.segment<4>(idx::qm) = x.m.segment<4>(idx::q);

  const Eigen::Matrix<double, core, core> Pcc = x.P.topLeftCorner<core, core>();
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < core; ++j) {
      x.P(core + i, j) = Pcc(sel[i], j);
      x.P(j, core + i) = Pcc(j, sel[i]);
    }
    for (int j = 0; j < 7; ++j) {
      x.P(core + i, core + j) = Pcc(sel[i], sel[j]) + (i == j ? nugget : 0.0);
    }
  }
}

}  // namespace flowins
