#include <doctest.h>

#include <Eigen/Dense>
#include <cstring>
#include <random>

#include "flowins/ins.hpp"

using namespace flowins;

namespace {

ProcessNoiseConfig default_cfg() {
  ProcessNoiseConfig cfg;
  cfg.sigma_a = Eigen::Vector3d::Constant(2.5e-3);
  cfg.sigma_w = Eigen::Vector3d::Constant(1e-5);
  return cfg;
}

StateEstimate random_state(std::mt19937& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  StateEstimate x;
  for (int i = 0; i < kStateDim; ++i) x.m[i] = n(rng);
  x.m.segment<3>(idx::ta) = Eigen::Vector3d::Ones() + 0.05 * x.m.segment<3>(idx::ta);
  x.m.segment<4>(idx::q).normalize();
  x.m.segment<4>(idx::qm).normalize();
  Eigen::Matrix<double, kStateDim, kStateDim> A;
  for (int i = 0; i < kStateDim; ++i)
    for (int j = 0; j < kStateDim; ++j) A(i, j) = 0.1 * n(rng);
  x.P = A * A.transpose() + 0.01 * StateMatrix::Identity();
  return x;
}

ImuSample random_imu(std::mt19937& rng, double t) {
  std::normal_distribution<double> n(0.0, 1.0);
  ImuSample s;
  s.t = t;
  s.a_tilde = Eigen::Vector3d(n(rng), n(rng), 9.81 + n(rng));
  s.w_tilde = 0.3 * Eigen::Vector3d(n(rng), n(rng), n(rng));
  return s;
}

// Analytic circular motion at constant yaw rate: closed-form oracle for the
// mechanization round trip.
struct CircleTruth {
  double speed, omega;
  Eigen::Vector3d position(double t) const {
    return {speed / omega * std::sin(omega * t), speed / omega * (1.0 - std::cos(omega * t)),
            0.0};
  }
  Eigen::Vector3d velocity(double t) const {
    return {speed * std::cos(omega * t), speed * std::sin(omega * t), 0.0};
  }
  Eigen::Vector3d accel(double t) const {
    return {-speed * omega * std::sin(omega * t), speed * omega * std::cos(omega * t), 0.0};
  }
  UnitQuaternion attitude(double t) const {
    return quat_from_rate({0.0, 0.0, omega}, t);
  }
  ImuSample imu_at(double t, const Eigen::Vector3d& g) const {
    ImuSample s;
    s.t = t;
    // Inverse of the mechanization velocity update.
    s.a_tilde = rotation_matrix(attitude(t)).transpose() * (accel(t) + g);
    s.w_tilde = {0.0, 0.0, omega};
    return s;
  }
};

double integrate_circle_error(double dt, double duration) {
  const ProcessNoiseConfig cfg = default_cfg();
  const CircleTruth truth{1.0, 0.1};
  StateVector m = StateEstimate().m;
  m.segment<3>(idx::v) = truth.velocity(0.0);
  const int steps = static_cast<int>(std::round(duration / dt));
  for (int k = 1; k <= steps; ++k) {
    const double t = k * dt;
    m = mechanize(m, truth.imu_at(t, cfg.gravity), dt, cfg);
  }
  return (m.segment<3>(idx::p) - truth.position(steps * dt)).norm();
}

}  // namespace

TEST_CASE("mechanize holds still under gravity cancellation") {
  const ProcessNoiseConfig cfg = default_cfg();
  std::mt19937 rng(3);
  for (int i = 0; i < 20; ++i) {
    StateEstimate x;
    std::normal_distribution<double> n(0.0, 1.0);
    UnitQuaternion q = normalized(UnitQuaternion{n(rng), n(rng), n(rng), n(rng)});
    x.set_orientation(q);
    ImuSample s;
    s.a_tilde = rotation_matrix(q).transpose() * cfg.gravity;
    s.w_tilde.setZero();
    const StateVector out = mechanize(x.m, s, 0.01, cfg);
    CHECK((out.segment<3>(idx::p) - x.m.segment<3>(idx::p)).norm() < 1e-12);
    CHECK((out.segment<3>(idx::v) - x.m.segment<3>(idx::v)).norm() < 1e-12);
    CHECK((out.segment<4>(idx::q) - x.m.segment<4>(idx::q)).norm() < 1e-12);
  }
}

TEST_CASE("mechanize free fall gains -g dt") {
  const ProcessNoiseConfig cfg = default_cfg();
  StateEstimate x;
  ImuSample s;  // zero specific force
  const double dt = 0.02;
  const StateVector out = mechanize(x.m, s, dt, cfg);
  CHECK((out.segment<3>(idx::v) - (-cfg.gravity * dt)).norm() == 0.0);
}

TEST_CASE("mechanize nonpositive dt") {
  const ProcessNoiseConfig cfg = default_cfg();
  StateEstimate x;
  CHECK_THROWS_AS(mechanize(x.m, ImuSample{}, 0.0, cfg), NonpositiveDt);
  CHECK_THROWS_AS(ekf_predict(x, ImuSample{}, -0.1, cfg), NonpositiveDt);
}

TEST_CASE("mechanize tracks a closed-form circle at 100 Hz") {
  CHECK(integrate_circle_error(0.01, 10.0) < 1e-2);
}

TEST_CASE("halving dt shrinks the integration error by >= 1.9x") {
  const double e1 = integrate_circle_error(0.01, 10.0);
  const double e2 = integrate_circle_error(0.005, 10.0);
  CHECK(e1 / e2 >= 1.9);
}

TEST_CASE("mechanize applies the corrected inputs") {
  ProcessNoiseConfig cfg = default_cfg();
  StateEstimate x;
  x.m.segment<3>(idx::ba) = Eigen::Vector3d(0.1, -0.2, 0.05);
  x.m.segment<3>(idx::bw) = Eigen::Vector3d(0.01, 0.02, -0.03);
  x.m.segment<3>(idx::ta) = Eigen::Vector3d(1.02, 0.98, 1.01);

  // Inputs that correct back to the standstill condition.
  ImuSample s;
  s.a_tilde = x.m.segment<3>(idx::ta).asDiagonal() *
                  (rotation_matrix(x.orientation()).transpose() * cfg.gravity) +
              x.m.segment<3>(idx::ba);
  s.w_tilde = x.m.segment<3>(idx::bw);
  const StateVector out = mechanize(x.m, s, 0.01, cfg);
  CHECK((out.segment<3>(idx::v)).norm() < 1e-12);
  CHECK((out.segment<4>(idx::q) - x.m.segment<4>(idx::q)).norm() < 1e-12);

  // The alternative correction mode applies the scale to the raw input.
  cfg.accel_mode = AccelCorrectionMode::ScaleThenBias;
  ImuSample s2;
  s2.a_tilde = x.m.segment<3>(idx::ta).cwiseInverse().asDiagonal() *
               (rotation_matrix(x.orientation()).transpose() * cfg.gravity +
                x.m.segment<3>(idx::ba));
  s2.w_tilde = x.m.segment<3>(idx::bw);
  const StateVector out2 = mechanize(x.m, s2, 0.01, cfg);
  CHECK((out2.segment<3>(idx::v)).norm() < 1e-12);
}

TEST_CASE("constant-dynamics blocks are bit-identical after prediction") {
  const ProcessNoiseConfig cfg = default_cfg();
  std::mt19937 rng(5);
  for (int i = 0; i < 10; ++i) {
    const StateEstimate x = random_state(rng);
    const StateEstimate out = ekf_predict(x, random_imu(rng, 0.0), 0.01, cfg);
    CHECK(std::memcmp(x.m.segment<3>(idx::ba).data(), out.m.segment<3>(idx::ba).data(),
                      3 * sizeof(double)) == 0);
    CHECK(std::memcmp(x.m.segment<3>(idx::bw).data(), out.m.segment<3>(idx::bw).data(),
                      3 * sizeof(double)) == 0);
    CHECK(std::memcmp(x.m.segment<3>(idx::ta).data(), out.m.segment<3>(idx::ta).data(),
                      3 * sizeof(double)) == 0);
    CHECK(std::memcmp(x.m.segment<3>(idx::pm).data(), out.m.segment<3>(idx::pm).data(),
                      3 * sizeof(double)) == 0);
    // q_minus passes through the normalization; it is already unit so the
    // values must still be identical bits.
    CHECK(std::memcmp(x.m.segment<4>(idx::qm).data(), out.m.segment<4>(idx::qm).data(),
                      4 * sizeof(double)) == 0);
  }
}

TEST_CASE("prediction Jacobians match central finite differences") {
  const ProcessNoiseConfig cfg = default_cfg();
  std::mt19937 rng(7);
  const double h = 1e-6;
  for (int i = 0; i < 100; ++i) {
    const StateEstimate x = random_state(rng);
    const ImuSample s = random_imu(rng, 0.0);
    const double dt = std::uniform_real_distribution<double>(0.002, 0.05)(rng);
    const PredictJacobians J = mechanize_jacobians(x.m, s, dt, cfg);

    StateMatrix fd_x;
    for (int k = 0; k < kStateDim; ++k) {
      StateVector mp = x.m, mm = x.m;
      mp[k] += h;
      mm[k] -= h;
      fd_x.col(k) = (mechanize(mp, s, dt, cfg) - mechanize(mm, s, dt, cfg)) / (2.0 * h);
    }
    CHECK((J.F_x - fd_x).norm() / fd_x.norm() < 1e-4);

    Eigen::Matrix<double, kStateDim, 6> fd_e;
    for (int k = 0; k < 6; ++k) {
      Eigen::Vector3d ea = Eigen::Vector3d::Zero(), ew = Eigen::Vector3d::Zero();
      Eigen::Vector3d eam = Eigen::Vector3d::Zero(), ewm = Eigen::Vector3d::Zero();
      if (k < 3) {
        ea[k] = h;
        eam[k] = -h;
      } else {
        ew[k - 3] = h;
        ewm[k - 3] = -h;
      }
      fd_e.col(k) = (mechanize_noisy(x.m, s, dt, cfg, ea, ew) -
                     mechanize_noisy(x.m, s, dt, cfg, eam, ewm)) /
                    (2.0 * h);
    }
    CHECK((J.F_eps - fd_e).norm() / fd_e.norm() < 1e-4);

    // Augmented states do not move in prediction: exact identity rows.
    for (int r = idx::pm; r < kStateDim; ++r) {
      for (int c = 0; c < kStateDim; ++c) {
        CHECK(J.F_x(r, c) == (r == c ? 1.0 : 0.0));
      }
    }
  }
}

TEST_CASE("zero-noise limit reduces the prediction to F P F^T") {
  ProcessNoiseConfig cfg = default_cfg();
  cfg.sigma_a.setConstant(1e-300);
  cfg.sigma_w.setConstant(1e-300);
  std::mt19937 rng(11);
  const StateEstimate x = random_state(rng);
  const ImuSample s = random_imu(rng, 0.0);
  const StateEstimate out = ekf_predict(x, s, 0.01, cfg);
  const PredictJacobians J = mechanize_jacobians(x.m, s, 0.01, cfg);
  const StateMatrix expect = ((J.F_x * x.P * J.F_x.transpose()).eval() +
                              (J.F_x * x.P * J.F_x.transpose()).transpose().eval()) *
                             0.5;
  CHECK((out.P - expect).norm() < 1e-12 * expect.norm());
}

TEST_CASE("prediction keeps quaternions unit and covariance healthy") {
  const ProcessNoiseConfig cfg = default_cfg();
  std::mt19937 rng(13);
  StateEstimate x = random_state(rng);
  for (int k = 0; k < 200; ++k) {
    x = ekf_predict(x, random_imu(rng, k * 0.01), 0.01, cfg);
    CHECK(std::abs(x.m.segment<4>(idx::q).norm() - 1.0) < 1e-9);
    x.check_basic();
  }
  x.check_psd();
}

TEST_CASE("covariance trace is non-decreasing at standstill") {
  const ProcessNoiseConfig cfg = default_cfg();
  StateEstimate x;
  x.P = 0.1 * StateMatrix::Identity();
  ImuSample s;
  s.a_tilde = cfg.gravity;  // identity attitude standstill input
  double prev = x.P.trace();
  for (int k = 0; k < 50; ++k) {
    x = ekf_predict(x, s, 0.01, cfg);
    CHECK(x.P.trace() >= prev);
    prev = x.P.trace();
  }
}

TEST_CASE("ekf_predict validates a broken input covariance on request") {
  const ProcessNoiseConfig cfg = default_cfg();
  StateEstimate x;
  x.P(0, 0) = -1.0;
  CHECK_THROWS_AS(ekf_predict(x, ImuSample{}, 0.01, cfg, true), CovarianceNotPSD);
}

namespace {

std::vector<ImuSample> standstill_samples(const ProcessNoiseConfig& cfg,
                                          const UnitQuaternion& attitude,
                                          const Eigen::Vector3d& ba, const Eigen::Vector3d& bw,
                                          double noise_a, double noise_w, double duration,
                                          unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<ImuSample> out;
  const double dt = 0.01;
  const Eigen::Vector3d a_true = rotation_matrix(attitude).transpose() * cfg.gravity;
  for (double t = 0.0; t < duration; t += dt) {
    ImuSample s;
    s.t = t;
    s.a_tilde = a_true + ba + noise_a * Eigen::Vector3d(n(rng), n(rng), n(rng));
    s.w_tilde = bw + noise_w * Eigen::Vector3d(n(rng), n(rng), n(rng));
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("stationary init on perfect level data") {
  const ProcessNoiseConfig cfg = default_cfg();
  const auto samples = standstill_samples(cfg, UnitQuaternion{1, 0, 0, 0},
                                          Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero(),
                                          0.0, 0.0, 5.0, 1);
  const StateEstimate x = initialize_stationary(samples, cfg);
  CHECK(x.m[idx::q] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(x.m.segment<3>(idx::ba).norm() < 1e-12);
  CHECK(x.m.segment<3>(idx::bw).norm() < 1e-12);
  CHECK((x.m.segment<3>(idx::p)).norm() == 0.0);
  CHECK((x.m.segment<3>(idx::pm)).norm() == 0.0);
  CHECK((x.m.segment<4>(idx::qm) - x.m.segment<4>(idx::q)).norm() == 0.0);
  x.check_psd();
}

TEST_CASE("stationary init recovers a known gyro bias within 3 sigma") {
  const ProcessNoiseConfig cfg = default_cfg();
  const Eigen::Vector3d bw_true(0.01, -0.02, 0.005);
  const double noise_w = 0.005;
  const double duration = 5.0;
  const auto samples = standstill_samples(cfg, UnitQuaternion{1, 0, 0, 0},
                                          Eigen::Vector3d::Zero(), bw_true, 0.02, noise_w,
                                          duration, 2);
  const StateEstimate x = initialize_stationary(samples, cfg);
  const double sigma = noise_w / std::sqrt(static_cast<double>(samples.size()));
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(x.m[idx::bw + i] - bw_true[i]) < 3.0 * sigma);
}

TEST_CASE("stationary init recovers a 20 degree roll within 0.1 degree") {
  const ProcessNoiseConfig cfg = default_cfg();
  const double roll = 20.0 * M_PI / 180.0;
  const UnitQuaternion truth = quat_from_rate({roll, 0.0, 0.0}, 1.0);
  const auto samples = standstill_samples(cfg, truth, Eigen::Vector3d::Zero(),
                                          Eigen::Vector3d::Zero(), 0.01, 0.001, 5.0, 3);
  const StateEstimate x = initialize_stationary(samples, cfg);
  const Eigen::Matrix3d R_est = rotation_matrix(x.orientation());
  const Eigen::Matrix3d R_true = rotation_matrix(truth);
  // Small-angle attitude error: |R1 - R2|_F ~ sqrt(2) * angle.
  CHECK((R_est - R_true).norm() < std::sqrt(2.0) * 0.1 * M_PI / 180.0);
}

TEST_CASE("stationary init absorbs the along-gravity accel bias") {
  const ProcessNoiseConfig cfg = default_cfg();
  const Eigen::Vector3d ba_true(0.0, 0.0, -0.3);  // along gravity at identity
  const auto samples = standstill_samples(cfg, UnitQuaternion{1, 0, 0, 0}, ba_true,
                                          Eigen::Vector3d::Zero(), 0.0, 0.0, 5.0, 4);
  const StateEstimate x = initialize_stationary(samples, cfg);
  CHECK((x.m.segment<3>(idx::ba) - ba_true).norm() < 1e-9);
  CHECK(std::abs(x.m[idx::q] - 1.0) < 1e-12);
}

TEST_CASE("stationary init rejects short or moving windows") {
  const ProcessNoiseConfig cfg = default_cfg();
  auto samples = standstill_samples(cfg, UnitQuaternion{1, 0, 0, 0}, Eigen::Vector3d::Zero(),
                                    Eigen::Vector3d::Zero(), 0.0, 0.0, 1.0, 5);
  CHECK_THROWS_AS(initialize_stationary(samples, cfg), NotStationary);

  samples = standstill_samples(cfg, UnitQuaternion{1, 0, 0, 0}, Eigen::Vector3d::Zero(),
                               Eigen::Vector3d::Zero(), 1.5, 0.3, 5.0, 6);
  CHECK_THROWS_AS(initialize_stationary(samples, cfg), NotStationary);
}
