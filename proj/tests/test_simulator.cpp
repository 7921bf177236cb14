#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "flowins/simulator.hpp"

using namespace flowins;

namespace {

TrajectorySpec circle_spec(double duration = 65.0, double speed = 2.0) {
  TrajectorySpec spec;
  spec.kind = TrajectoryKind::Circle;
  spec.duration = duration;
  spec.speed = speed;
  spec.standstill_duration = 5.0;
  spec.ramp_duration = 3.0;
  return spec;
}

NoiseSpec clean_noise() {
  NoiseSpec n;
  n.accel_noise_std = 0.0;
  n.gyro_noise_std = 0.0;
  n.flow_noise_std = 0.0;
  n.gnss_std = 0.0;
  return n;
}

}  // namespace

TEST_CASE("circle truth has exact centripetal acceleration at full speed") {
  const TrajectorySpec spec = circle_spec();
  const GroundTruth truth = generate_truth(spec);
  const double radius = spec.speed * spec.moving_time() / (2.0 * M_PI);
  // Sample well after the ramp.
  const TruthSample& s = truth.samples[3000];
  CHECK(s.v.norm() == doctest::Approx(spec.speed).epsilon(1e-12));
  CHECK(s.a.norm() == doctest::Approx(spec.speed * spec.speed / radius).epsilon(1e-12));
  CHECK(s.a.dot(s.v) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(s.omega_body.z() == doctest::Approx(spec.speed / radius).epsilon(1e-12));
}

TEST_CASE("straight truth has zero acceleration and rates at cruise") {
  TrajectorySpec spec = circle_spec();
  spec.kind = TrajectoryKind::Straight;
  const GroundTruth truth = generate_truth(spec);
  const TruthSample& s = truth.samples[2000];
  CHECK(s.a.norm() == 0.0);
  CHECK(s.omega_body.norm() == 0.0);
  CHECK(s.v.x() == doctest::Approx(spec.speed).epsilon(1e-12));
}

TEST_CASE("truth is at rest during the standstill window") {
  const GroundTruth truth = generate_truth(circle_spec());
  for (int i = 0; i < 400; ++i) {
    CHECK(truth.samples[i].v.norm() == 0.0);
    CHECK(truth.samples[i].a.norm() == 0.0);
    CHECK(truth.samples[i].omega_body.norm() == 0.0);
  }
}

TEST_CASE("closed-loop specs start and end at the same pose") {
  for (const TrajectoryKind kind : {TrajectoryKind::Circle, TrajectoryKind::FigureEight}) {
    TrajectorySpec spec = circle_spec();
    spec.kind = kind;
    const GroundTruth truth = generate_truth(spec);
    const TruthSample& a = truth.samples.front();
    const TruthSample& b = truth.samples.back();
    CHECK((a.p - b.p).norm() < 1e-9);
    const double qdot = a.q.w * b.q.w + a.q.x * b.q.x + a.q.y * b.q.y + a.q.z * b.q.z;
    CHECK(std::abs(qdot) > 1.0 - 1e-9);
  }
}

TEST_CASE("waypoint splines pass through their waypoints") {
  TrajectorySpec spec = circle_spec(45.0);
  spec.kind = TrajectoryKind::RecordedWaypoints;
  spec.waypoints = {{0, 0, 0}, {10, 0, 0}, {10, 10, 1}, {0, 10, 0}};
  const GroundTruth truth = generate_truth(spec);
  // Start pinned at the first waypoint.
  CHECK((truth.samples.front().p - spec.waypoints.front()).norm() < 1e-9);
  CHECK((truth.samples.back().p - spec.waypoints.back()).norm() < 1e-6);
  // Velocity stays finite and the trajectory is smooth.
  for (std::size_t i = 1; i < truth.samples.size(); ++i) {
    const double dv =
        (truth.samples[i].v - truth.samples[i - 1].v).norm() * truth.spec.imu_rate;
    CHECK(dv < 50.0);  // bounded acceleration
  }
}

TEST_CASE("noiseless bias-free IMU mechanizes back to the truth") {
  const TrajectorySpec spec = circle_spec(65.0, 2.0);
  const GroundTruth truth = generate_truth(spec);
  const NoiseSpec noise = clean_noise();
  const std::vector<ImuSample> imu = synthesize_imu(truth, noise);
  const ProcessNoiseConfig cfg = process_noise_for(noise, spec.imu_rate);

  StateVector m = StateEstimate().m;
  m.segment<3>(idx::p) = truth.samples[0].p;
  m.segment<3>(idx::v) = truth.samples[0].v;
  m[idx::q] = truth.samples[0].q.w;
  m[idx::q + 1] = truth.samples[0].q.x;
  m[idx::q + 2] = truth.samples[0].q.y;
  m[idx::q + 3] = truth.samples[0].q.z;

  for (std::size_t i = 1; i < imu.size(); ++i) {
    m = mechanize(m, imu[i], imu[i].t - imu[i - 1].t, cfg);
  }
  CHECK((m.segment<3>(idx::p) - truth.samples.back().p).norm() < 0.05);
}

TEST_CASE("standstill IMU reads the gravity reaction constant") {
  const GroundTruth truth = generate_truth(circle_spec());
  const std::vector<ImuSample> imu = synthesize_imu(truth, clean_noise());
  const Eigen::Vector3d g(0.0, 0.0, -9.81);
  for (int i = 0; i < 300; ++i) {
    const Eigen::Matrix3d R = rotation_matrix(truth.samples[i].q);
    CHECK((imu[i].a_tilde - R.transpose() * g).norm() < 1e-12);
    CHECK(imu[i].w_tilde.norm() == 0.0);
  }
}

TEST_CASE("accel-bias-only drift grows quadratically") {
  TrajectorySpec spec = circle_spec(40.0);
  spec.standstill_duration = 30.0;  // stay at rest; drift comes from the bias
  spec.duration = 35.0;
  NoiseSpec noise = clean_noise();
  noise.accel_bias = Eigen::Vector3d(0.05, -0.03, 0.02);
  const GroundTruth truth = generate_truth(spec);
  const std::vector<ImuSample> imu = synthesize_imu(truth, noise);
  const ProcessNoiseConfig cfg = process_noise_for(noise, spec.imu_rate);

  StateVector m = StateEstimate().m;
  double err_half = 0.0, err_full = 0.0;
  const std::size_t half = 1500, full = 3000;  // 15 s and 30 s
  for (std::size_t i = 1; i <= full; ++i) {
    m = mechanize(m, imu[i], imu[i].t - imu[i - 1].t, cfg);
    if (i == half) err_half = (m.segment<3>(idx::p) - truth.samples[half].p).norm();
  }
  err_full = (m.segment<3>(idx::p) - truth.samples[full].p).norm();
  const double exponent = std::log2(err_full / err_half);
  CHECK(exponent > 1.8);
  CHECK(exponent < 2.2);
}

TEST_CASE("zero camera motion produces zero flow") {
  const GroundTruth truth = generate_truth(circle_spec());
  const CameraModel cam = make_default_camera(15.0);
  const WorldModel world = generate_world(truth, cam, 2000, 0, 50.0, 2.0, 30.0, 7);
  // Frame pair 0 -> 1 lies inside the standstill window.
  const SyntheticFlow flow = synthesize_flow(truth, world, cam, clean_noise(), 0);
  REQUIRE(flow.field.points.size() > 100);
  for (const FlowPoint& p : flow.field.points) {
    CHECK(p.du == 0.0);
    CHECK(p.dv == 0.0);
  }
}

namespace {

GroundTruth two_pose_truth(const TruthSample& a, const TruthSample& b) {
  GroundTruth truth;
  truth.spec.kind = TrajectoryKind::Straight;
  truth.spec.imu_rate = 10.0;
  truth.spec.frame_rate = 10.0;
  truth.spec.duration = 0.2;
  truth.samples = {a, b};
  return truth;
}

}  // namespace

TEST_CASE("pure roll about the optical axis gives tangential flow") {
  // Camera with zero pitch: the optical axis is body x.
  const CameraModel cam = make_default_camera(0.0);
  TruthSample s1;
  s1.t = 0.0;
  TruthSample s2;
  s2.t = 0.1;
  const double droll = 0.02;  // rad about the optical axis
  s2.q = quat_from_rate({droll / 0.1, 0.0, 0.0}, 0.1);
  const GroundTruth truth = two_pose_truth(s1, s2);

  WorldModel world;
  SubstreamRng rng(5, 9);
  for (int i = 0; i < 500; ++i) {
    const double depth = rng.uniform(3.0, 20.0);
    world.landmarks.push_back(WorldPoint{depth, -depth * rng.uniform(-0.4, 0.4),
                                         depth * rng.uniform(-0.5, 0.5), 1.0});
  }

  const SyntheticFlow flow = synthesize_flow(truth, world, cam, clean_noise(), 0);
  REQUIRE(flow.field.points.size() > 50);
  const double expected_scale = 2.0 * std::sin(droll / 2.0);
  for (const FlowPoint& p : flow.field.points) {
    const Eigen::Vector2d radial(p.u1 - cam.cx, p.v1 - cam.cy);
    const Eigen::Vector2d delta(p.du, p.dv);
    if (radial.norm() < 20.0) continue;
    // Magnitude proportional to the pixel radius, direction tangential.
    CHECK(delta.norm() == doctest::Approx(expected_scale * radial.norm()).epsilon(1e-6));
    const Eigen::Vector2d mid = radial + 0.5 * delta;  // chord bisector is radial
    CHECK(std::abs(delta.dot(mid.normalized())) < 1e-6 * radial.norm());
  }
}

TEST_CASE("pure forward translation radiates from the focus of expansion") {
  const CameraModel cam = make_default_camera(0.0);
  TruthSample s1;
  s1.t = 0.0;
  TruthSample s2;
  s2.t = 0.1;
  s2.p = Eigen::Vector3d(0.3, 0.0, 0.0);  // along the optical axis (body x)
  const GroundTruth truth = two_pose_truth(s1, s2);

  WorldModel world;
  SubstreamRng rng(6, 9);
  for (int i = 0; i < 500; ++i) {
    const double depth = rng.uniform(3.0, 20.0);
    world.landmarks.push_back(WorldPoint{depth, -depth * rng.uniform(-0.4, 0.4),
                                         depth * rng.uniform(-0.5, 0.5), 1.0});
  }

  const SyntheticFlow flow = synthesize_flow(truth, world, cam, clean_noise(), 0);
  REQUIRE(flow.field.points.size() > 50);
  for (const FlowPoint& p : flow.field.points) {
    const Eigen::Vector2d radial(p.u1 - cam.cx, p.v1 - cam.cy);
    if (radial.norm() < 20.0) continue;
    const Eigen::Vector2d delta(p.du, p.dv);
    // Flow points away from the principal point along the radial direction.
    const double cross = radial.x() * delta.y() - radial.y() * delta.x();
    CHECK(std::abs(cross) < 1e-6 * radial.norm() * std::max(delta.norm(), 1e-12));
    CHECK(delta.dot(radial) > 0.0);
  }
}

TEST_CASE("gnss synthesis: noiseless fixes round-trip to the truth") {
  const GroundTruth truth = generate_truth(circle_spec());
  const EnuOrigin origin{60.17, 24.94, 12.0};
  const std::vector<GnssFix> fixes = synthesize_gnss(truth, origin, clean_noise());
  // One fix per second of session.
  CHECK(fixes.size() == static_cast<std::size_t>(truth.spec.duration) + 1);
  for (std::size_t i = 0; i < fixes.size(); ++i) {
    const Eigen::Vector3d enu = wgs_to_enu(fixes[i], origin);
    const Eigen::Vector3d want = truth.samples[i * 100].p;
    CHECK((enu - want).norm() < 1e-6);
  }
}

TEST_CASE("gnss radius reports 2 sigma") {
  const GroundTruth truth = generate_truth(circle_spec());
  NoiseSpec noise = clean_noise();
  noise.gnss_std = 1.7;
  const std::vector<GnssFix> fixes = synthesize_gnss(truth, {60, 24, 0}, noise);
  for (const GnssFix& f : fixes) CHECK(f.accuracy_radius == 2.0 * 1.7);
}

TEST_CASE("simulate is deterministic for a fixed seed") {
  SimOptions opts;
  opts.trajectory = circle_spec(20.0, 2.0);
  opts.trajectory.duration = 20.0;
  opts.noise.seed = 42;
  opts.noise.outlier_fraction = 0.1;
  opts.n_landmarks = 500;
  const SimDataset a = simulate(opts);
  const SimDataset b = simulate(opts);
  REQUIRE(a.data.imu.size() == b.data.imu.size());
  for (std::size_t i = 0; i < a.data.imu.size(); ++i) {
    CHECK(a.data.imu[i].a_tilde == b.data.imu[i].a_tilde);
    CHECK(a.data.imu[i].w_tilde == b.data.imu[i].w_tilde);
  }
  REQUIRE(a.data.flow.size() == b.data.flow.size());
  for (std::size_t i = 0; i < a.data.flow.size(); ++i) {
    REQUIRE(a.data.flow[i].points.size() == b.data.flow[i].points.size());
    for (std::size_t j = 0; j < a.data.flow[i].points.size(); ++j) {
      CHECK(a.data.flow[i].points[j].du == b.data.flow[i].points[j].du);
      CHECK(a.data.flow[i].points[j].dv == b.data.flow[i].points[j].dv);
    }
    CHECK(a.outlier_masks[i] == b.outlier_masks[i]);
  }
  for (std::size_t i = 0; i < a.data.gnss.size(); ++i) {
    CHECK(a.data.gnss[i].lat == b.data.gnss[i].lat);
    CHECK(a.data.gnss[i].lon == b.data.gnss[i].lon);
  }
}

TEST_CASE("synthesized fields stay within bounds and well populated") {
  SimOptions opts;
  opts.trajectory = circle_spec(30.0, 2.0);
  opts.noise.seed = 11;
  opts.noise.outlier_fraction = 0.2;
  const SimDataset sim = simulate(opts);
  REQUIRE(!sim.data.flow.empty());
  for (const FlowField& f : sim.data.flow) {
    f.validate();  // bounds and positive variances
  }
  // Fields during cruise carry enough landmarks for a well-posed update.
  for (std::size_t i = 15; i < sim.data.flow.size(); ++i)
    CHECK(sim.data.flow[i].points.size() >= 100);
}

TEST_CASE("outlier fraction roughly matches the request") {
  SimOptions opts;
  opts.trajectory = circle_spec(40.0, 2.0);
  opts.noise.seed = 3;
  opts.noise.outlier_fraction = 0.2;
  const SimDataset sim = simulate(opts);
  std::size_t total = 0, outliers = 0;
  for (const auto& mask : sim.outlier_masks) {
    total += mask.size();
    for (bool b : mask) outliers += b ? 1 : 0;
  }
  REQUIRE(total > 1000);
  const double fraction = static_cast<double>(outliers) / total;
  CHECK(fraction > 0.17);
  CHECK(fraction < 0.23);
}

TEST_CASE("dataset writes load back through the manifest") {
  namespace fs = std::filesystem;
  SimOptions opts;
  opts.trajectory = circle_spec(15.0, 2.0);
  opts.trajectory.duration = 15.0;
  opts.noise.seed = 9;
  opts.n_landmarks = 300;
  const SimDataset sim = simulate(opts);
  const fs::path dir = fs::temp_directory_path() / "flowins_sim_ds";
  const std::string manifest = write_dataset(sim, dir.string(), "unit");
  const Dataset loaded = load_dataset(manifest);
  CHECK(loaded.imu.size() == sim.data.imu.size());
  CHECK(loaded.flow.size() == sim.data.flow.size());
  CHECK(loaded.gnss.size() == sim.data.gnss.size());
  REQUIRE(loaded.truth.has_value());
  CHECK(loaded.truth->size() == sim.data.truth->size());
  REQUIRE(loaded.manifest.origin.has_value());
  CHECK(loaded.manifest.origin->lat0 == opts.origin.lat0);
}

TEST_CASE("spec validation failures") {
  TrajectorySpec spec = circle_spec();
  spec.imu_rate = 105.0;  // not a multiple of frame_rate
  CHECK_THROWS_AS(generate_truth(spec), Error);
  spec = circle_spec();
  spec.duration = 6.0;
  CHECK_THROWS_AS(generate_truth(spec), Error);
  NoiseSpec noise;
  noise.outlier_fraction = 1.5;
  CHECK_THROWS_AS(noise.validate(), Error);
}
