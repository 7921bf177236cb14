#include "flowins/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>

namespace flowins {

void TrajectorySpec::validate() const {
  if (!(duration > 0.0) || !(imu_rate > 0.0) || !(frame_rate > 0.0))
    throw Error("TrajectorySpec: duration and rates must be positive");
  if (duration <= standstill_duration + ramp_duration)
    throw Error("TrajectorySpec: duration must exceed standstill plus ramp");
  const double ratio = imu_rate / frame_rate;
  if (std::abs(ratio - std::round(ratio)) > 1e-9)
    throw Error("TrajectorySpec: imu_rate must be an integer multiple of frame_rate");
  if (kind == TrajectoryKind::RecordedWaypoints) {
    if (waypoints.size() < 2) throw Error("TrajectorySpec: waypoints kind needs >= 2 points");
  } else if (!(speed > 0.0)) {
    throw Error("TrajectorySpec: speed must be positive");
  }
}

void NoiseSpec::validate() const {
  if (accel_noise_std < 0.0 || gyro_noise_std < 0.0 || flow_noise_std < 0.0 || gnss_std < 0.0)
    throw Error("NoiseSpec: standard deviations must be nonnegative");
  if (!(flow_var_reported > 0.0)) throw Error("NoiseSpec: reported flow variance must be positive");
  if (outlier_fraction < 0.0 || outlier_fraction > 1.0)
    throw Error("NoiseSpec: outlier fraction must be in [0, 1]");
  if (!(gnss_rate > 0.0)) throw Error("NoiseSpec: gnss rate must be positive");
}

namespace {

/// C2 time warp: the path parameter tau stays 0 during the standstill, ramps
/// up smoothly (quintic rate profile) and then advances at unit rate.
struct TimeWarp {
  double t0, tr;

  void eval(double t, double& tau, double& dtau, double& ddtau) const {
    const double s = t - t0;
    if (s <= 0.0) {
      tau = dtau = ddtau = 0.0;
    } else if (s < tr) {
      const double x = s / tr;
      const double x2 = x * x;
      dtau = x2 * x * (10.0 - 15.0 * x + 6.0 * x2);
      tau = tr * x2 * x2 * (2.5 - 3.0 * x + x2);
      ddtau = 30.0 * x2 * (1.0 - 2.0 * x + x2) / tr;
    } else {
      tau = s - 0.5 * tr;
      dtau = 1.0;
      ddtau = 0.0;
    }
  }
};

/// Planar parametric curve with analytic derivatives in the parameter.
struct Curve {
  virtual ~Curve() = default;
  virtual void eval(double phi, Eigen::Vector2d& c, Eigen::Vector2d& d1,
                    Eigen::Vector2d& d2) const = 0;
};

struct CircleCurve : Curve {
  double r;
  void eval(double phi, Eigen::Vector2d& c, Eigen::Vector2d& d1,
            Eigen::Vector2d& d2) const override {
    c = {r * std::sin(phi), r * (1.0 - std::cos(phi))};
    d1 = {r * std::cos(phi), r * std::sin(phi)};
    d2 = {-r * std::sin(phi), r * std::cos(phi)};
  }
};

struct EightCurve : Curve {
  double a;  // x amplitude; y amplitude is 2a
  void eval(double phi, Eigen::Vector2d& c, Eigen::Vector2d& d1,
            Eigen::Vector2d& d2) const override {
    c = {a * std::sin(2.0 * phi), 2.0 * a * std::sin(phi)};
    d1 = {2.0 * a * std::cos(2.0 * phi), 2.0 * a * std::cos(phi)};
    d2 = {-4.0 * a * std::sin(2.0 * phi), -2.0 * a * std::sin(phi)};
  }
};

double curve_length(const Curve& curve, double phi_end, int steps = 20000) {
  // Composite Simpson over the parameter.
  double sum = 0.0;
  Eigen::Vector2d c, d1, d2;
  const double h = phi_end / steps;
  for (int i = 0; i <= steps; ++i) {
    curve.eval(i * h, c, d1, d2);
    const double w = (i == 0 || i == steps) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    sum += w * d1.norm();
  }
  return sum * h / 3.0;
}

/// Natural cubic spline through points at integer knots, per axis.
struct Spline {
  std::vector<Eigen::Vector3d> pts;
  std::vector<Eigen::Vector3d> m2;  // second derivatives at knots

  void build() {
    const int n = static_cast<int>(pts.size());
    m2.assign(n, Eigen::Vector3d::Zero());
    if (n < 3) return;
    std::vector<Eigen::Vector3d> rhs(n, Eigen::Vector3d::Zero());
    std::vector<double> diag(n, 2.0), upper(n, 0.5);
    for (int i = 1; i < n - 1; ++i) rhs[i] = 6.0 * (pts[i + 1] - 2.0 * pts[i] + pts[i - 1]);
    // Thomas algorithm on the interior block (natural boundary: m2 = 0).
    std::vector<Eigen::Vector3d> d(n, Eigen::Vector3d::Zero());
    std::vector<double> c(n, 0.0);
    for (int i = 1; i < n - 1; ++i) {
      const double m = 4.0 - (i > 1 ? c[i - 1] : 0.0);
      c[i] = 1.0 / m;
      d[i] = (rhs[i] - (i > 1 ? d[i - 1] : Eigen::Vector3d::Zero().eval())) / m;
    }
    for (int i = n - 2; i >= 1; --i) m2[i] = d[i] - c[i] * m2[i + 1];
    (void)diag;
    (void)upper;
  }

  void eval(double u, Eigen::Vector3d& p, Eigen::Vector3d& d1, Eigen::Vector3d& d2) const {
    const int n = static_cast<int>(pts.size());
    const double umax = n - 1.0;
    const double uc = std::clamp(u, 0.0, umax - 1e-12);
    const int i = static_cast<int>(uc);
    const double x = uc - i;
    const Eigen::Vector3d &a = pts[i], &b = pts[i + 1], &ma = m2[i], &mb = m2[i + 1];
    p = a * (1.0 - x) + b * x +
        ((1.0 - x) * ((1.0 - x) * (1.0 - x) - 1.0) * ma + x * (x * x - 1.0) * mb) / 6.0;
    d1 = (b - a) + ((3.0 * (1.0 - x) * (1.0 - x) - 1.0) * (-ma) + (3.0 * x * x - 1.0) * mb) / 6.0;
    d2 = (1.0 - x) * ma + x * mb;
  }
};

UnitQuaternion yaw_quat(double psi) {
  return {std::cos(0.5 * psi), 0.0, 0.0, std::sin(0.5 * psi)};
}

}  // namespace

GroundTruth generate_truth(const TrajectorySpec& spec) {
  spec.validate();
  const TimeWarp warp{spec.standstill_duration, spec.ramp_duration};
  const double tau_total = spec.moving_time();

  GroundTruth truth;
  truth.spec = spec;

  // Planar curves: parameter phi advances linearly in tau so that the curve
  // closes after one period.
  std::unique_ptr<Curve> curve;
  double phi_rate = 0.0;  // d phi / d tau
  if (spec.kind == TrajectoryKind::Circle) {
    auto c = std::make_unique<CircleCurve>();
    c->r = spec.speed * tau_total / (2.0 * M_PI);
    phi_rate = spec.speed / c->r;
    curve = std::move(c);
  } else if (spec.kind == TrajectoryKind::FigureEight) {
    auto c = std::make_unique<EightCurve>();
    c->a = 1.0;
    const double unit_len = curve_length(*c, 2.0 * M_PI);
    c->a = spec.speed * tau_total / unit_len;
    phi_rate = 2.0 * M_PI / tau_total;
    curve = std::move(c);
  }

  Spline spline;
  double u_rate = 0.0;
  if (spec.kind == TrajectoryKind::RecordedWaypoints) {
    spline.pts = spec.waypoints;
    spline.build();
    u_rate = (spec.waypoints.size() - 1.0) / tau_total;
  }

  const int n = static_cast<int>(std::round(spec.duration * spec.imu_rate));
  truth.samples.reserve(n + 1);
  for (int i = 0; i <= n; ++i) {
    const double t = i / spec.imu_rate;
    double tau, dtau, ddtau;
    warp.eval(t, tau, dtau, ddtau);

    TruthSample s;
    s.t = t;
    if (spec.kind == TrajectoryKind::Straight) {
      const Eigen::Vector3d dir(1.0, 0.0, 0.0);
      s.p = dir * spec.speed * tau;
      s.v = dir * spec.speed * dtau;
      s.a = dir * spec.speed * ddtau;
      s.q = UnitQuaternion{1, 0, 0, 0};
      s.omega_body.setZero();
    } else if (spec.kind == TrajectoryKind::RecordedWaypoints) {
      Eigen::Vector3d p, d1, d2;
      spline.eval(tau * u_rate, p, d1, d2);
      s.p = p;
      s.v = d1 * (u_rate * dtau);
      s.a = d2 * (u_rate * dtau) * (u_rate * dtau) + d1 * (u_rate * ddtau);
      const double psi = std::atan2(d1.y(), d1.x());
      s.q = yaw_quat(psi);
      const double speed2 = d1.x() * d1.x() + d1.y() * d1.y();
      const double dpsi_du = speed2 > 1e-12 ? (d1.x() * d2.y() - d1.y() * d2.x()) / speed2 : 0.0;
      s.omega_body = {0.0, 0.0, dpsi_du * u_rate * dtau};
    } else {
      const double phi = phi_rate * tau;
      Eigen::Vector2d c, d1, d2;
      curve->eval(phi, c, d1, d2);
      const double dphi = phi_rate * dtau;
      const double ddphi = phi_rate * ddtau;
      s.p = {c.x(), c.y(), 0.0};
      s.v = {d1.x() * dphi, d1.y() * dphi, 0.0};
      s.a = {d2.x() * dphi * dphi + d1.x() * ddphi, d2.y() * dphi * dphi + d1.y() * ddphi, 0.0};
      const double psi = std::atan2(d1.y(), d1.x());
      s.q = yaw_quat(psi);
      const double speed2 = d1.squaredNorm();
      const double dpsi_dphi = (d1.x() * d2.y() - d1.y() * d2.x()) / speed2;
      s.omega_body = {0.0, 0.0, dpsi_dphi * dphi};
    }
    truth.samples.push_back(s);
  }
  return truth;
}

TrajectoryEstimate GroundTruth::as_trajectory() const {
  TrajectoryEstimate traj;
  traj.label = "truth";
  traj.t.reserve(samples.size());
  traj.mean.reserve(samples.size());
  for (const TruthSample& s : samples) {
    StateVector m = StateVector::Zero();
    m.segment<3>(idx::p) = s.p;
    m.segment<3>(idx::v) = s.v;
    m[idx::q] = s.q.w;
    m[idx::q + 1] = s.q.x;
    m[idx::q + 2] = s.q.y;
    m[idx::q + 3] = s.q.z;
    m.segment<3>(idx::ta).setOnes();
    m.segment<3>(idx::pm) = s.p;
    m[idx::qm] = s.q.w;
    m[idx::qm + 1] = s.q.x;
    m[idx::qm + 2] = s.q.y;
    m[idx::qm + 3] = s.q.z;
    traj.t.push_back(s.t);
    traj.mean.push_back(m);
  }
  return traj;
}

CameraModel make_default_camera(double pitch_deg) {
  CameraModel cam;
  cam.fx = 480.0;
  cam.fy = 480.0;
  cam.cx = 256.0;
  cam.cy = 341.5;
  cam.image_width = 512;
  cam.image_height = 683;
  // Base mapping: camera x = -body y (right), camera y = -body z (down),
  // camera z = body x (forward); then pitch the view down about camera x.
  Eigen::Matrix3d base;
  base << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  const double th = pitch_deg * M_PI / 180.0;
  Eigen::Matrix3d pitch;
  pitch << 1, 0, 0, 0, std::cos(th), -std::sin(th), 0, std::sin(th), std::cos(th);
  cam.R_imu_cam = pitch * base;
  cam.t_imu_cam.setZero();
  return cam;
}

WorldModel generate_world(const GroundTruth& truth, const CameraModel& cam, int n_landmarks,
                          int n_outlier_objects, double outlier_px, double depth_min,
                          double depth_max, std::uint64_t seed) {
  SubstreamRng rng(seed, 1);
  WorldModel world;
  world.landmarks.reserve(n_landmarks);

  const double xr = cam.image_width / (2.0 * cam.fx);
  const double yr = cam.image_height / (2.0 * cam.fy);
  for (int i = 0; i < n_landmarks; ++i) {
    // Uniform in the viewing frustum of a random pose along the corridor.
    const std::size_t si = rng.next_u64() % truth.samples.size();
    const TruthSample& s = truth.samples[si];
    const double depth = rng.uniform(depth_min, depth_max);
    const Eigen::Vector3d pc(depth * rng.uniform(-1.2 * xr, 1.2 * xr),
                             depth * rng.uniform(-1.2 * yr, 1.2 * yr), depth);
    const Eigen::Matrix3d R_wc = rotation_matrix(s.q) * cam.R_imu_cam.transpose();
    const Eigen::Vector3d c =
        s.p + rotation_matrix(s.q) * (-cam.R_imu_cam.transpose() * cam.t_imu_cam);
    const Eigen::Vector3d pw = R_wc * pc + c;
    world.landmarks.push_back(WorldPoint{pw.x(), pw.y(), pw.z(), 1.0});
  }

  const double frame_dt = 1.0 / truth.spec.frame_rate;
  for (int i = 0; i < n_outlier_objects; ++i) {
    // Velocity sized to displace ~outlier_px pixels at a representative depth.
    const double depth = rng.uniform(5.0, 15.0);
    const double speed = outlier_px * depth / (cam.fx * frame_dt);
    const double heading = rng.uniform(0.0, 2.0 * M_PI);
    world.outlier_objects.emplace_back(speed * std::cos(heading), speed * std::sin(heading),
                                       0.3 * speed * (rng.uniform() - 0.5));
  }
  return world;
}

std::vector<ImuSample> synthesize_imu(const GroundTruth& truth, const NoiseSpec& noise,
                                      const Eigen::Vector3d& gravity, AccelCorrectionMode mode) {
  noise.validate();
  SubstreamRng accel_rng(noise.seed, 2);
  SubstreamRng gyro_rng(noise.seed, 3);

  std::vector<ImuSample> out;
  out.reserve(truth.samples.size());
  for (const TruthSample& s : truth.samples) {
    const Eigen::Vector3d body_force = rotation_matrix(s.q).transpose() * (s.a + gravity);
    ImuSample m;
    m.t = s.t;
    if (mode == AccelCorrectionMode::InverseScaleAfterBias) {
      m.a_tilde = noise.accel_scale.asDiagonal() * body_force + noise.accel_bias +
                  noise.accel_noise_std * accel_rng.normal3();
    } else {
      m.a_tilde = noise.accel_scale.cwiseInverse().asDiagonal() *
                      (body_force + noise.accel_bias) +
                  noise.accel_noise_std * accel_rng.normal3();
    }
    m.w_tilde = s.omega_body + noise.gyro_bias + noise.gyro_noise_std * gyro_rng.normal3();
    out.push_back(m);
  }
  return out;
}

SyntheticFlow synthesize_flow(const GroundTruth& truth, const WorldModel& world,
                              const CameraModel& cam, const NoiseSpec& noise, int frame_index) {
  const int step = static_cast<int>(std::round(truth.spec.imu_rate / truth.spec.frame_rate));
  const std::size_t i1 = static_cast<std::size_t>(frame_index) * step;
  const std::size_t i2 = i1 + step;
  if (i2 >= truth.samples.size()) throw Error("synthesize_flow: frame index out of range");
  const TruthSample& s1 = truth.samples[i1];
  const TruthSample& s2 = truth.samples[i2];

  SubstreamRng rng(noise.seed, 0x100000000ULL + static_cast<std::uint64_t>(frame_index));

  const BodyPose pose1{s1.p, s1.q};
  const BodyPose pose2{s2.p, s2.q};
  const ProjectionMatrix P1 = projection_for_pose(cam, pose1);
  const ProjectionMatrix P2 = projection_for_pose(cam, pose2);
  const double dt = s2.t - s1.t;

  SyntheticFlow out;
  out.field.t1 = s1.t;
  out.field.t2 = s2.t;
  out.field.width = cam.image_width;
  out.field.height = cam.image_height;
  out.field.provenance = FlowProvenance::synthetic;

  const auto visible = [&](const Eigen::Vector3d& uvw, Eigen::Vector2d& px) {
    if (uvw.z() < 0.5) return false;  // minimum depth for a meaningful match
    px = {uvw.x() / uvw.z(), uvw.y() / uvw.z()};
    return px.x() >= 0.0 && px.x() < cam.image_width && px.y() >= 0.0 &&
           px.y() < cam.image_height;
  };

  for (std::size_t li = 0; li < world.landmarks.size(); ++li) {
    const WorldPoint& lm = world.landmarks[li];
    const Eigen::Vector4d ph(lm.x, lm.y, lm.z, 1.0);
    Eigen::Vector2d px1, px2;
    if (!visible(P1 * ph, px1) || !visible(P2 * ph, px2)) continue;

    bool outlier = false;
    if (noise.outlier_fraction > 0.0 && rng.uniform() < noise.outlier_fraction &&
        !world.outlier_objects.empty()) {
      const Eigen::Vector3d vel =
          world.outlier_objects[rng.next_u64() % world.outlier_objects.size()];
      const Eigen::Vector4d moved(lm.x + vel.x() * dt, lm.y + vel.y() * dt,
                                  lm.z + vel.z() * dt, 1.0);
      const Eigen::Vector3d uvw = P2 * moved;
      if (uvw.z() > 0.5) {
        px2 = {uvw.x() / uvw.z(), uvw.y() / uvw.z()};
        outlier = true;
      }
    }

    FlowPoint p;
    p.u1 = px1.x();
    p.v1 = px1.y();
    p.du = px2.x() - px1.x() + noise.flow_noise_std * rng.normal();
    p.dv = px2.y() - px1.y() + noise.flow_noise_std * rng.normal();
    p.var_du = noise.flow_var_reported;
    p.var_dv = noise.flow_var_reported;
    out.field.points.push_back(p);
    out.outlier_mask.push_back(outlier);
    out.landmark_index.push_back(static_cast<int>(li));
  }
  return out;
}

std::vector<GnssFix> synthesize_gnss(const GroundTruth& truth, const EnuOrigin& origin,
                                     const NoiseSpec& noise) {
  const double ratio = truth.spec.imu_rate / noise.gnss_rate;
  const int step = static_cast<int>(std::round(ratio));
  if (std::abs(ratio - step) > 1e-9 || step <= 0)
    throw Error("synthesize_gnss: imu_rate must be an integer multiple of gnss_rate");

  SubstreamRng rng(noise.seed, 4);
  std::vector<GnssFix> out;
  const double radius = noise.gnss_std > 0.0 ? 2.0 * noise.gnss_std : 1e-6;
  for (std::size_t i = 0; i < truth.samples.size(); i += step) {
    const TruthSample& s = truth.samples[i];
    const Eigen::Vector3d noisy = s.p + noise.gnss_std * rng.normal3();
    out.push_back(enu_to_wgs(s.t, noisy, radius, origin));
  }
  return out;
}

SimDataset simulate(const SimOptions& opts) {
  SimOptions o = opts;
  if (o.camera.image_width == 0) o.camera = make_default_camera(o.trajectory.camera_pitch_deg);
  o.camera.validate();
  o.trajectory.validate();
  o.noise.validate();

  SimDataset sim;
  sim.truth = generate_truth(o.trajectory);
  sim.world = generate_world(sim.truth, o.camera, o.n_landmarks, o.n_outlier_objects,
                             o.outlier_px, o.landmark_depth_min, o.landmark_depth_max,
                             o.noise.seed);

  sim.data.manifest.name = "synthetic";
  sim.data.manifest.camera = o.camera;
  sim.data.manifest.origin = o.origin;
  sim.data.imu = synthesize_imu(sim.truth, o.noise);
  sim.data.gnss = synthesize_gnss(sim.truth, o.origin, o.noise);

  const int step = static_cast<int>(std::round(o.trajectory.imu_rate / o.trajectory.frame_rate));
  const int n_frames = static_cast<int>((sim.truth.samples.size() - 1) / step);
  for (int k = 0; k + 1 <= n_frames; ++k) {
    SyntheticFlow flow = synthesize_flow(sim.truth, sim.world, o.camera, o.noise, k);
    sim.data.flow.push_back(std::move(flow.field));
    sim.outlier_masks.push_back(std::move(flow.outlier_mask));
  }
  sim.data.truth = sim.truth.as_trajectory();
  return sim;
}

std::string write_dataset(const SimDataset& sim, const std::string& out_dir,
                          const std::string& name) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path base(out_dir);

  DatasetManifest manifest = sim.data.manifest;
  manifest.name = name;
  manifest.imu_path = "imu.csv";
  manifest.gnss_path = sim.data.gnss.empty() ? "" : "gnss.csv";
  manifest.flow_path = sim.data.flow.empty() ? "" : "flow.bin";
  manifest.truth_path = sim.data.truth ? "truth.csv" : "";

  write_imu_csv((base / "imu.csv").string(), sim.data.imu);
  if (!sim.data.gnss.empty()) write_gnss_csv((base / "gnss.csv").string(), sim.data.gnss);
  if (!sim.data.flow.empty()) write_flow_file((base / "flow.bin").string(), sim.data.flow);
  if (sim.data.truth) write_trajectory_csv((base / "truth.csv").string(), *sim.data.truth);
  const std::string manifest_path = (base / "manifest.txt").string();
  write_manifest(manifest_path, manifest);
  return manifest_path;
}

ProcessNoiseConfig process_noise_for(const NoiseSpec& noise, double imu_rate,
                                     const Eigen::Vector3d& gravity) {
  ProcessNoiseConfig cfg;
  cfg.sigma_a.setConstant(std::max(noise.accel_noise_std * noise.accel_noise_std, 1e-12) *
                          imu_rate);
  cfg.sigma_w.setConstant(std::max(noise.gyro_noise_std * noise.gyro_noise_std, 1e-12) *
                          imu_rate);
  cfg.gravity = gravity;
  return cfg;
}

}  // namespace flowins
