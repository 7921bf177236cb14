#include "flowins/ins.hpp"

#include <cmath>

namespace flowins {

StateVector mechanize_noisy(const StateVector& m, const ImuSample& imu, double dt,
                            const ProcessNoiseConfig& cfg, const Eigen::Vector3d& eps_a,
                            const Eigen::Vector3d& eps_w) {
  StateVector out;
  double min[kStateDim], mout[kStateDim];
  for (int i = 0; i < kStateDim; ++i) min[i] = m[i];
  mechanize_kernel(min, to_vec3(eps_a), to_vec3(eps_w), imu, dt, cfg, mout);
  for (int i = 0; i < kStateDim; ++i) out[i] = mout[i];
  return out;
}

StateVector mechanize(const StateVector& m, const ImuSample& imu, double dt,
                      const ProcessNoiseConfig& cfg) {
  if (!(dt > 0.0)) throw NonpositiveDt();
  return mechanize_noisy(m, imu, dt, cfg, Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero());
}

PredictJacobians mechanize_jacobians(const StateVector& m, const ImuSample& imu, double dt,
                                     const ProcessNoiseConfig& cfg) {
  using D = Dual<kStateDim + 6>;
  D min[kStateDim], mout[kStateDim];
  for (int i = 0; i < kStateDim; ++i) min[i] = D::variable(m[i], i);
  const Vec3T<D> eps_a{D::variable(0.0, kStateDim + 0), D::variable(0.0, kStateDim + 1),
                       D::variable(0.0, kStateDim + 2)};
  const Vec3T<D> eps_w{D::variable(0.0, kStateDim + 3), D::variable(0.0, kStateDim + 4),
                       D::variable(0.0, kStateDim + 5)};
  mechanize_kernel(min, eps_a, eps_w, imu, dt, cfg, mout);

  PredictJacobians J;
  for (int i = 0; i < kStateDim; ++i) {
    J.F_x.row(i) = mout[i].d.head<kStateDim>().transpose();
    J.F_eps.row(i) = mout[i].d.tail<6>().transpose();
  }
  return J;
}

StateEstimate ekf_predict(const StateEstimate& x, const ImuSample& imu, double dt,
                          const ProcessNoiseConfig& cfg, bool validate_input,
                          PredictJacobians* jac_out) {
  if (!(dt > 0.0)) throw NonpositiveDt();
  if (validate_input) x.check_psd();

  StateEstimate out = x;
  out.m = mechanize(x.m, imu, dt, cfg);
  const PredictJacobians J = mechanize_jacobians(x.m, imu, dt, cfg);
  if (jac_out) *jac_out = J;

  Eigen::Matrix<double, 6, 6> Q = Eigen::Matrix<double, 6, 6>::Zero();
  Q.diagonal().head<3>() = cfg.sigma_a * dt;
  Q.diagonal().tail<3>() = cfg.sigma_w * dt;

  out.P = J.F_x * x.P * J.F_x.transpose() + J.F_eps * Q * J.F_eps.transpose();
  out.symmetrize();
  // Only q moved; q_minus must remain bit-identical.
  out.m.segment<4>(idx::q).normalize();
  return out;
}

namespace {

/// Shortest-arc unit quaternion rotating unit vector `from` onto `to`.
/// The rotation axis is orthogonal to both, so aligning the measured
/// gravity direction leaves yaw at zero.
UnitQuaternion shortest_arc(const Eigen::Vector3d& from, const Eigen::Vector3d& to) {
  const double w = 1.0 + from.dot(to);
  if (w < 1e-12) {
    // Antiparallel: rotate half a turn about any orthogonal axis.
    Eigen::Vector3d axis = from.cross(Eigen::Vector3d::UnitX());
    if (axis.squaredNorm() < 1e-12) axis = from.cross(Eigen::Vector3d::UnitY());
    axis.normalize();
    return {0.0, axis.x(), axis.y(), axis.z()};
  }
  const Eigen::Vector3d xyz = from.cross(to);
  return normalized(UnitQuaternion{w, xyz.x(), xyz.y(), xyz.z()});
}

}  // namespace

StateEstimate initialize_stationary(const std::vector<ImuSample>& samples,
                                    const ProcessNoiseConfig& cfg, const InitPriors& priors) {
  if (samples.size() < 2) throw NotStationary("standstill window has too few samples");
  const double duration = samples.back().t - samples.front().t;
  if (duration < priors.min_duration)
    throw NotStationary("standstill window shorter than " +
                        std::to_string(priors.min_duration) + " s");

  Eigen::Vector3d a_mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d w_mean = Eigen::Vector3d::Zero();
  for (const ImuSample& s : samples) {
    a_mean += s.a_tilde;
    w_mean += s.w_tilde;
  }
  const double n = static_cast<double>(samples.size());
  a_mean /= n;
  w_mean /= n;

  Eigen::Vector3d a_var = Eigen::Vector3d::Zero();
  Eigen::Vector3d w_var = Eigen::Vector3d::Zero();
  for (const ImuSample& s : samples) {
    a_var += (s.a_tilde - a_mean).cwiseAbs2();
    w_var += (s.w_tilde - w_mean).cwiseAbs2();
  }
  a_var /= n;
  w_var /= n;
  if (std::sqrt(a_var.maxCoeff()) > priors.accel_std_threshold ||
      std::sqrt(w_var.maxCoeff()) > priors.gyro_std_threshold)
    throw NotStationary("sample variance exceeds the standstill threshold");

  // At standstill the mechanization requires a_corrected = R(q)^T g, so the
  // measured direction is aligned with the configured gravity vector.
  const Eigen::Vector3d g = cfg.gravity;
  const double a_norm = a_mean.norm();
  if (a_norm < 1e-6) throw NotStationary("zero mean specific force at standstill");
  const UnitQuaternion q0 = shortest_arc(a_mean / a_norm, g.normalized());

  // Only the along-gravity magnitude discrepancy is identifiable; it goes to
  // b_a, the orthogonal part stays in attitude.
  const Eigen::Vector3d b_a = (1.0 - g.norm() / a_norm) * a_mean;

  StateEstimate x;
  x.m.setZero();
  x.m.segment<3>(idx::ba) = b_a;
  x.m.segment<3>(idx::bw) = w_mean;
  x.m.segment<3>(idx::ta).setOnes();
  x.set_orientation(q0);

  x.P.setZero();
  x.P.block<3, 3>(idx::p, idx::p) = priors.sigma_p * priors.sigma_p * Eigen::Matrix3d::Identity();
  x.P.block<3, 3>(idx::v, idx::v) = priors.sigma_v * priors.sigma_v * Eigen::Matrix3d::Identity();
  // Quaternion block: isotropic prior plus an inflated world-yaw direction
  // (unobservable from a single static pose).
  Eigen::Vector4d yaw_dir;
  {
    const UnitQuaternion zq = hamilton(UnitQuaternion{0, 0, 0, 1}, q0);
    yaw_dir << zq.w, zq.x, zq.y, zq.z;
    yaw_dir.normalize();
  }
  const double s2 = priors.sigma_att * priors.sigma_att;
  x.P.block<4, 4>(idx::q, idx::q) =
      s2 * Eigen::Matrix4d::Identity() +
      (priors.yaw_inflation * priors.yaw_inflation - 1.0) * s2 * yaw_dir * yaw_dir.transpose();
  x.P.block<3, 3>(idx::ba, idx::ba) =
      priors.sigma_ba * priors.sigma_ba * Eigen::Matrix3d::Identity();
  x.P.block<3, 3>(idx::bw, idx::bw) =
      priors.sigma_bw * priors.sigma_bw * Eigen::Matrix3d::Identity();
  x.P.block<3, 3>(idx::ta, idx::ta) =
      priors.sigma_ta * priors.sigma_ta * Eigen::Matrix3d::Identity();

  clone_pose_into_augmented(x, priors.nugget);
  return x;
}

}  // namespace flowins
