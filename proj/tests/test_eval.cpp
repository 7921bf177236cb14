#include <doctest.h>

#include <Eigen/Dense>
#include <filesystem>
#include <random>

#include "flowins/eval.hpp"
#include "flowins/simulator.hpp"

using namespace flowins;

namespace {

TrajectoryEstimate track_from_positions(const std::vector<Eigen::Vector3d>& ps, double dt = 0.1,
                                        const std::string& label = "track") {
  TrajectoryEstimate traj;
  traj.label = label;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    StateVector m = StateVector::Zero();
    m.segment<3>(idx::p) = ps[i];
    m[idx::q] = 1.0;
    m[idx::qm] = 1.0;
    m.segment<3>(idx::ta).setOnes();
    traj.t.push_back(i * dt);
    traj.mean.push_back(m);
  }
  return traj;
}

TrajectoryEstimate wiggly_track(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Eigen::Vector3d> ps;
  for (int i = 0; i < n; ++i) {
    const double t = 0.1 * i;
    ps.emplace_back(10.0 * std::cos(0.3 * t) + 0.2 * g(rng), 7.0 * std::sin(0.4 * t),
                    0.5 * std::sin(0.2 * t) + 0.1 * g(rng));
  }
  return track_from_positions(ps);
}

TrajectoryEstimate transform_track(const TrajectoryEstimate& traj, const Eigen::Matrix3d& R,
                                   const Eigen::Vector3d& t) {
  TrajectoryEstimate out = traj;
  for (auto& m : out.mean) m.segment<3>(idx::p) = R * m.segment<3>(idx::p) + t;
  return out;
}

double track_rmse_under(const TrajectoryEstimate& est, const TrajectoryEstimate& truth,
                        const Eigen::Matrix3d& R, const Eigen::Vector3d& t) {
  std::vector<Eigen::Vector3d> pe, pt;
  matched_positions(est, truth, pe, pt);
  double sum = 0.0;
  for (std::size_t i = 0; i < pe.size(); ++i) sum += (R * pe[i] + t - pt[i]).squaredNorm();
  return std::sqrt(sum / pe.size());
}

}  // namespace

TEST_CASE("procrustes recovers an exact rigid transform") {
  const TrajectoryEstimate truth = wiggly_track(100, 3);
  const Eigen::Matrix3d R = rotation_matrix(quat_from_rate({0.0, 0.0, M_PI / 2}, 1.0));
  const Eigen::Vector3d t(5.0, -2.0, 1.0);
  // est = R truth + t; alignment must invert it.
  const TrajectoryEstimate est = transform_track(truth, R, t);
  const ProcrustesResult res = procrustes_align(est, truth);
  CHECK(rmse(res.aligned, truth) < 1e-9);
  CHECK((res.rotation - R.transpose()).norm() < 1e-9);
}

TEST_CASE("procrustes on identical tracks is the identity") {
  const TrajectoryEstimate truth = wiggly_track(60, 5);
  const ProcrustesResult res = procrustes_align(truth, truth);
  CHECK((res.rotation - Eigen::Matrix3d::Identity()).norm() < 1e-9);
  CHECK(res.translation.norm() < 1e-9);
}

TEST_CASE("procrustes is idempotent") {
  const TrajectoryEstimate truth = wiggly_track(80, 7);
  TrajectoryEstimate est = wiggly_track(80, 8);
  const ProcrustesResult first = procrustes_align(est, truth);
  const ProcrustesResult second = procrustes_align(first.aligned, truth);
  CHECK((second.rotation - Eigen::Matrix3d::Identity()).norm() < 1e-9);
  CHECK(second.translation.norm() < 1e-9);
}

TEST_CASE("procrustes matches a numerical optimizer under noise") {
  std::mt19937 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  const TrajectoryEstimate truth = wiggly_track(120, 9);
  const Eigen::Matrix3d R_true = rotation_matrix(quat_from_rate({0.3, -0.5, 1.1}, 1.0));
  const Eigen::Vector3d t_true(3.0, 7.0, -2.0);
  TrajectoryEstimate est = transform_track(truth, R_true, t_true);
  const double sigma = 0.3;
  for (auto& m : est.mean)
    m.segment<3>(idx::p) += sigma * Eigen::Vector3d(g(rng), g(rng), g(rng));

  const ProcrustesResult res = procrustes_align(est, truth);
  const double closed = rmse(res.aligned, truth);

  // Gradient descent over (rotation vector, translation) from several
  // starts, including perturbations of the closed-form solution.
  const auto cost = [&](const Eigen::Matrix<double, 6, 1>& theta) {
    const Eigen::Vector3d rv = theta.head<3>();
    const Eigen::Matrix3d R = rotation_matrix(quat_from_rate(rv, 1.0));
    return track_rmse_under(est, truth, R, theta.tail<3>());
  };
  double best = std::numeric_limits<double>::infinity();
  const Eigen::AngleAxisd aa(res.rotation);
  Eigen::Matrix<double, 6, 1> closed_theta;
  closed_theta << aa.axis() * aa.angle(), res.translation;
  for (int start = 0; start < 4; ++start) {
    Eigen::Matrix<double, 6, 1> theta = closed_theta;
    if (start > 0)
      for (int i = 0; i < 6; ++i) theta[i] += 0.2 * g(rng);
    double step = 0.05;
    double f = cost(theta);
    for (int it = 0; it < 2000; ++it) {
      Eigen::Matrix<double, 6, 1> grad;
      const double h = 1e-7;
      for (int i = 0; i < 6; ++i) {
        Eigen::Matrix<double, 6, 1> tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        grad[i] = (cost(tp) - cost(tm)) / (2.0 * h);
      }
      const Eigen::Matrix<double, 6, 1> cand_theta = theta - step * grad;
      const double cand = cost(cand_theta);
      if (cand < f) {
        theta = cand_theta;
        f = cand;
        step *= 1.2;
      } else {
        step *= 0.5;
        if (step < 1e-12) break;
      }
    }
    best = std::min(best, f);
  }
  CHECK(closed <= best + 1e-6);
  CHECK(std::abs(closed - best) < 1e-6);
  // Per-axis noise sigma leaves a 3-D residual near sigma * sqrt(3), minus
  // the six rigidly absorbed degrees of freedom.
  CHECK(closed < 1.9 * sigma);
  CHECK(closed > 1.45 * sigma);
}

TEST_CASE("procrustes rejects degenerate inputs") {
  std::vector<Eigen::Vector3d> line;
  for (int i = 0; i < 10; ++i) line.emplace_back(i * 1.0, 2.0 * i, -i * 1.0);
  const TrajectoryEstimate a = track_from_positions(line);
  CHECK_THROWS_AS(procrustes_align(a, a), DegenerateAlignment);

  const TrajectoryEstimate two = track_from_positions({{0, 0, 0}, {1, 0, 0}});
  CHECK_THROWS_AS(procrustes_align(two, two), DegenerateAlignment);
}

TEST_CASE("rmse basics") {
  const TrajectoryEstimate truth = wiggly_track(50, 13);
  CHECK(rmse(truth, truth) == 0.0);

  const TrajectoryEstimate a =
      track_from_positions({{0, 0, 0}, {1, 0, 0}});
  const TrajectoryEstimate b =
      track_from_positions({{3, 0, 0}, {1, 4, 0}});
  CHECK(rmse(a, b) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
}

TEST_CASE("alignment never hurts the RMSE") {
  for (unsigned seed : {21u, 22u, 23u}) {
    const TrajectoryEstimate truth = wiggly_track(90, seed);
    TrajectoryEstimate est = wiggly_track(90, seed + 100);
    const double before = rmse(est, truth);
    const double after = rmse(procrustes_align(est, truth).aligned, truth);
    CHECK(after <= before + 1e-12);
  }
}

TEST_CASE("matched positions interpolate the denser track") {
  const TrajectoryEstimate coarse = track_from_positions(
      {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}, 1.0);
  std::vector<Eigen::Vector3d> fine_ps;
  for (int i = 0; i <= 20; ++i) fine_ps.emplace_back(0.1 * i, 0.0, 0.0);
  const TrajectoryEstimate fine = track_from_positions(fine_ps, 0.1);
  std::vector<Eigen::Vector3d> pa, pb;
  matched_positions(coarse, fine, pa, pb);
  REQUIRE(pa.size() == 3);
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK((pa[i] - pb[i]).norm() < 1e-12);
}

TEST_CASE("sparse subsampling keeps the strongest flow") {
  FlowField field;
  field.t1 = 0.0;
  field.t2 = 0.1;
  field.width = 100;
  field.height = 100;
  for (int i = 0; i < 100; ++i) {
    FlowPoint p;
    p.u1 = i % 10;
    p.v1 = i / 10;
    p.du = static_cast<double>(i);  // magnitude grows with index
    p.dv = 0.0;
    field.points.push_back(p);
  }
  const FlowField sparse = sparse_subsample(field, 30);
  CHECK(sparse.points.size() == 30);
  CHECK(sparse.provenance == FlowProvenance::sparse_subsample);
  for (const FlowPoint& p : sparse.points) CHECK(p.du >= 70.0);
}

TEST_CASE("uncertainty flattening uses the field median") {
  FlowField field;
  field.t1 = 0.0;
  field.t2 = 0.1;
  field.width = 10;
  field.height = 10;
  for (int i = 0; i < 5; ++i) {
    FlowPoint p;
    p.u1 = i;
    p.v1 = 0;
    p.var_du = 1.0 + i;  // 1..5, median 3
    p.var_dv = 10.0 + i;
    field.points.push_back(p);
  }
  const FlowField flat = flatten_uncertainty(field);
  for (const FlowPoint& p : flat.points) {
    CHECK(p.var_du == 3.0);
    CHECK(p.var_dv == 12.0);
  }
}

namespace {

SimDataset small_sim(std::uint64_t seed, double duration = 25.0) {
  SimOptions opts;
  opts.trajectory.kind = TrajectoryKind::Circle;
  opts.trajectory.duration = duration;
  opts.trajectory.speed = 2.0;
  opts.noise.accel_noise_std = 0.05;
  opts.noise.gyro_noise_std = 0.005;
  opts.noise.accel_bias = Eigen::Vector3d(0.05, -0.04, 0.03);
  opts.noise.gyro_bias = Eigen::Vector3d(0.008, -0.01, 0.006);
  opts.noise.flow_noise_std = 1.0;
  opts.noise.flow_var_reported = 1.0;
  opts.noise.gnss_std = 1.5;
  opts.noise.seed = seed;
  opts.n_landmarks = 2500;
  return simulate(opts);
}

SessionConfig base_session_config() {
  SessionConfig cfg;
  cfg.process.sigma_a.setConstant(0.05 * 0.05 * 100.0);
  cfg.process.sigma_w.setConstant(0.005 * 0.005 * 100.0);
  cfg.gate.max_points_per_update = 50;
  return cfg;
}

}  // namespace

TEST_CASE("ablation: the all-disabled row is exactly dead reckoning") {
  const SimDataset sim = small_sim(31);
  const SessionConfig cfg = base_session_config();
  const AblationResults results = run_ablation(sim.data, {AblationConfig{}}, cfg);
  REQUIRE(results.rows.size() == 1);

  // Hand-rolled dead reckoning from the same standstill initialization.
  std::vector<ImuSample> window;
  for (const ImuSample& s : sim.data.imu)
    if (s.t - sim.data.imu.front().t <= cfg.standstill_init_duration + 1e-12)
      window.push_back(s);
  StateEstimate x = initialize_stationary(window, cfg.process, cfg.init);
  double t = window.back().t;
  for (const ImuSample& s : sim.data.imu) {
    if (s.t <= t) continue;
    x = ekf_predict(x, s, s.t - t, cfg.process);
    t = s.t;
  }

  const FusionSession session(cfg);
  SessionConfig off = cfg;
  off.use_flow = false;
  off.use_gnss = false;
  const SessionResult run = FusionSession(off).run(sim.data);
  CHECK((run.final_state.m - x.m).norm() == 0.0);
  CHECK(run.points_accepted == 0);
  CHECK(run.gnss_accepted == 0);
}

TEST_CASE("ablation table is deterministic and flow plus gnss beats ins alone") {
  const SimDataset sim = small_sim(33);
  const SessionConfig cfg = base_session_config();
  std::vector<AblationConfig> rows(2);
  rows[1].use_gnss = true;
  rows[1].use_dense_flow = true;
  rows[1].use_flow_uncertainty = true;

  const AblationResults a = run_ablation(sim.data, rows, cfg);
  const AblationResults b = run_ablation(sim.data, rows, cfg);
  CHECK(a.to_csv() == b.to_csv());
  REQUIRE(a.rows.size() == 2);
  CHECK(a.rows[1].filter_rmse < a.rows[0].filter_rmse);
  CHECK(a.rows[1].points_accepted > 1000);
}

TEST_CASE("emit_plots writes one svg per row plus the table") {
  namespace fs = std::filesystem;
  const SimDataset sim = small_sim(35, 20.0);
  SessionConfig cfg = base_session_config();
  std::vector<AblationConfig> rows(1);
  rows[0].use_gnss = true;
  rows[0].use_dense_flow = true;
  rows[0].use_flow_uncertainty = true;
  const AblationResults results = run_ablation(sim.data, rows, cfg);

  const fs::path dir = fs::temp_directory_path() / "flowins_plots";
  fs::remove_all(dir);
  const std::vector<std::string> files = emit_plots(results, dir.string());
  CHECK(files.size() == 2);  // one plot + the table
  for (const std::string& f : files) CHECK(fs::exists(f));

  const AblationResults empty;
  CHECK_THROWS_AS(emit_plots(empty, dir.string()), Error);
}
