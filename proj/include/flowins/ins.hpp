#pragma once

#include <Eigen/Core>
#include <vector>

#include "flowins/dual.hpp"
#include "flowins/state.hpp"

namespace flowins {

struct ImuSample {
  double t{0.0};                                       ///< s
  Eigen::Vector3d a_tilde{Eigen::Vector3d::Zero()};    ///< specific force, m/s^2
  Eigen::Vector3d w_tilde{Eigen::Vector3d::Zero()};    ///< angular rate, rad/s
};

/// How the multiplicative accelerometer scale is applied to the raw input.
enum class AccelCorrectionMode {
  InverseScaleAfterBias,  ///< a = diag(T_a)^{-1} (a_tilde - b_a)
  ScaleThenBias,          ///< a = diag(T_a) a_tilde - b_a
};

struct ProcessNoiseConfig {
  Eigen::Vector3d sigma_a{1e-3, 1e-3, 1e-3};  ///< accel noise PSD diagonal, (m/s^2)^2 s
  Eigen::Vector3d sigma_w{1e-5, 1e-5, 1e-5};  ///< gyro noise PSD diagonal, (rad/s)^2 s
  Eigen::Vector3d gravity{0.0, 0.0, -9.81};   ///< m/s^2, ENU
  AccelCorrectionMode accel_mode{AccelCorrectionMode::InverseScaleAfterBias};

  void validate() const {
    if (sigma_a.minCoeff() <= 0.0 || sigma_w.minCoeff() <= 0.0)
      throw Error("ProcessNoiseConfig: noise diagonals must be positive");
  }
};

/// Strapdown mechanization over one step, templated for forward-mode
/// differentiation. The noise terms enter beside the corrected inputs:
/// epsilon_a inside the rotation with the specific force, epsilon_w through
/// the rate quaternion. Euler integration, with the orientation updated
/// before the velocity rotation.
template <typename T>
void mechanize_kernel(const T m[kStateDim], const Vec3T<T>& eps_a, const Vec3T<T>& eps_w,
                      const ImuSample& imu, double dt, const ProcessNoiseConfig& cfg,
                      T out[kStateDim]) {
  const Vec3T<T> p{m[idx::p], m[idx::p + 1], m[idx::p + 2]};
  const Vec3T<T> v{m[idx::v], m[idx::v + 1], m[idx::v + 2]};
  const QuatT<T> q{m[idx::q], m[idx::q + 1], m[idx::q + 2], m[idx::q + 3]};
  const Vec3T<T> ba{m[idx::ba], m[idx::ba + 1], m[idx::ba + 2]};
  const Vec3T<T> bw{m[idx::bw], m[idx::bw + 1], m[idx::bw + 2]};
  const Vec3T<T> ta{m[idx::ta], m[idx::ta + 1], m[idx::ta + 2]};

  const Vec3T<T> w_corr{imu.w_tilde.x() - bw.x + eps_w.x, imu.w_tilde.y() - bw.y + eps_w.y,
                        imu.w_tilde.z() - bw.z + eps_w.z};
  // Product of unit quaternions; the mean is renormalized outside of f so
  // the linearization stays that of the printed dynamics.
  const QuatT<T> q_new =
      hamilton(q, quat_from_rotvec(Vec3T<T>{w_corr.x * dt, w_corr.y * dt, w_corr.z * dt}));

  Vec3T<T> a_corr;
  if (cfg.accel_mode == AccelCorrectionMode::InverseScaleAfterBias) {
    a_corr = {(imu.a_tilde.x() - ba.x) / ta.x + eps_a.x,
              (imu.a_tilde.y() - ba.y) / ta.y + eps_a.y,
              (imu.a_tilde.z() - ba.z) / ta.z + eps_a.z};
  } else {
    a_corr = {imu.a_tilde.x() * ta.x - ba.x + eps_a.x,
              imu.a_tilde.y() * ta.y - ba.y + eps_a.y,
              imu.a_tilde.z() * ta.z - ba.z + eps_a.z};
  }

  const Vec3T<T> a_world = rotate(q_new, a_corr);
  const Vec3T<T> v_new{v.x + (a_world.x - cfg.gravity.x()) * dt,
                       v.y + (a_world.y - cfg.gravity.y()) * dt,
                       v.z + (a_world.z - cfg.gravity.z()) * dt};
  const Vec3T<T> p_new{p.x + v.x * dt, p.y + v.y * dt, p.z + v.z * dt};

  out[idx::p] = p_new.x;
  out[idx::p + 1] = p_new.y;
  out[idx::p + 2] = p_new.z;
  out[idx::v] = v_new.x;
  out[idx::v + 1] = v_new.y;
  out[idx::v + 2] = v_new.z;
  out[idx::q] = q_new.w;
  out[idx::q + 1] = q_new.x;
  out[idx::q + 2] = q_new.y;
  out[idx::q + 3] = q_new.z;
  // Bias, scale and augmented pose states have constant dynamics.
  for (int i = idx::ba; i < kStateDim; ++i) out[i] = m[i];
}

/// Propagate the state mean through the mechanization equations with an
/// explicit process-noise realization (zero for the nominal prediction).
StateVector mechanize_noisy(const StateVector& m, const ImuSample& imu, double dt,
                            const ProcessNoiseConfig& cfg, const Eigen::Vector3d& eps_a,
                            const Eigen::Vector3d& eps_w);

/// Nominal mechanization (zero noise). Throws NonpositiveDt.
StateVector mechanize(const StateVector& m, const ImuSample& imu, double dt,
                      const ProcessNoiseConfig& cfg);

struct PredictJacobians {
  StateMatrix F_x;
  Eigen::Matrix<double, kStateDim, 6> F_eps;
};

/// Jacobians of the mechanization with respect to the state and the noise,
/// evaluated at the given mean.
PredictJacobians mechanize_jacobians(const StateVector& m, const ImuSample& imu, double dt,
                                     const ProcessNoiseConfig& cfg);

/// EKF prediction: mean through mechanize, covariance through the
/// linearization, Q_k = blkdiag(Sigma_a dt, Sigma_w dt). Quaternions are
/// renormalized and the covariance re-symmetrized.
/// If validate_input is set, the input covariance is checked for positive
/// semidefiniteness (costs an eigen-decomposition). jac_out, when given,
/// receives the linearization used (for smoother histories).
StateEstimate ekf_predict(const StateEstimate& x, const ImuSample& imu, double dt,
                          const ProcessNoiseConfig& cfg, bool validate_input = false,
                          PredictJacobians* jac_out = nullptr);

/// Priors for the stationary initializer (diagonal scales).
struct InitPriors {
  double sigma_p = 1e-6;      ///< m; the origin is anchored by definition
  double sigma_v = 1e-3;      ///< m/s
  double sigma_att = 1e-2;    ///< quaternion components
  double yaw_inflation = 100.0;
  double sigma_ba = 0.1;      ///< m/s^2
  double sigma_bw = 0.01;     ///< rad/s
  double sigma_ta = 0.05;
  double nugget = 1e-12;      ///< augmented-pose equality nugget
  double min_duration = 2.0;  ///< s
  double accel_std_threshold = 0.3;  ///< m/s^2, standstill detector
  double gyro_std_threshold = 0.05;  ///< rad/s
};

/// Standstill initialization: gyro bias from the mean rate, roll/pitch from
/// the mean specific-force direction against gravity (yaw unobservable and
/// set to zero), the along-gravity accelerometer bias component absorbed
/// into b_a. Throws NotStationary if the window is too short or too noisy.
StateEstimate initialize_stationary(const std::vector<ImuSample>& samples,
                                    const ProcessNoiseConfig& cfg,
                                    const InitPriors& priors = {});

}  // namespace flowins
