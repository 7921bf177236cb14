#pragma once

#include <cstdint>
#include <vector>

#include "flowins/flowio.hpp"

namespace flowins {

// ---------------------------------------------------------------------------
// Counter-based PRNG with splittable substreams (one per sensor / frame), so
// dataset synthesis is reproducible regardless of generation order.
// ---------------------------------------------------------------------------

class SubstreamRng {
 public:
  SubstreamRng(std::uint64_t seed, std::uint64_t stream)
      : state_(seed ^ (0xD2B74407B1CE6E93ULL * (stream + 1))) {
    next_u64();
    next_u64();
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in (0, 1].
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (pairs cached).
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    cached_ = r * std::sin(2.0 * M_PI * u2);
    have_cached_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  Eigen::Vector3d normal3() {
    const double a = normal(), b = normal(), c = normal();
    return {a, b, c};
  }

 private:
  std::uint64_t state_;
  double cached_{0.0};
  bool have_cached_{false};
};

// ---------------------------------------------------------------------------
// Trajectory and noise specification.
// ---------------------------------------------------------------------------

enum class TrajectoryKind { Circle, FigureEight, Straight, RecordedWaypoints };

struct TrajectorySpec {
  TrajectoryKind kind{TrajectoryKind::Circle};
  double duration{125.0};          ///< s, total session including standstill
  double speed{3.0};               ///< m/s along the path
  double imu_rate{100.0};          ///< Hz
  double frame_rate{10.0};         ///< Hz
  double camera_pitch_deg{15.0};   ///< downward pitch of the camera
  double standstill_duration{5.0}; ///< s, initial bias-calibration window
  double ramp_duration{3.0};       ///< s, smooth speed-up after standstill
  std::vector<Eigen::Vector3d> waypoints;  ///< RecordedWaypoints only

  void validate() const;

  /// Integrated path parameter (seconds of full-speed motion) at the end.
  double moving_time() const { return duration - standstill_duration - 0.5 * ramp_duration; }
};

struct NoiseSpec {
  double accel_noise_std{0.05};  ///< m/s^2 per sample
  double gyro_noise_std{0.005};  ///< rad/s per sample
  Eigen::Vector3d accel_bias{Eigen::Vector3d::Zero()};   ///< m/s^2
  Eigen::Vector3d gyro_bias{Eigen::Vector3d::Zero()};    ///< rad/s
  Eigen::Vector3d accel_scale{Eigen::Vector3d::Ones()};  ///< multiplicative
  double flow_noise_std{1.0};      ///< px, true noise added
  double flow_var_reported{1.0};   ///< px^2, variance written to the field
  double gnss_std{1.0};            ///< m per axis
  double gnss_rate{1.0};           ///< Hz
  double outlier_fraction{0.0};    ///< [0, 1]
  std::uint64_t seed{0};

  void validate() const;
};

/// Static landmarks plus moving-object velocities that generate flow
/// outliers.
struct WorldModel {
  std::vector<WorldPoint> landmarks;
  std::vector<Eigen::Vector3d> outlier_objects;  ///< velocities, m/s
};

struct TruthSample {
  double t{0.0};
  Eigen::Vector3d p{Eigen::Vector3d::Zero()};
  Eigen::Vector3d v{Eigen::Vector3d::Zero()};
  Eigen::Vector3d a{Eigen::Vector3d::Zero()};      ///< world-frame acceleration
  UnitQuaternion q;                                ///< body to world
  Eigen::Vector3d omega_body{Eigen::Vector3d::Zero()};  ///< rad/s
};

struct GroundTruth {
  TrajectorySpec spec;
  std::vector<TruthSample> samples;  ///< at imu_rate

  const TruthSample& at_index(std::size_t i) const { return samples.at(i); }
  TrajectoryEstimate as_trajectory() const;
};

/// Sample the analytic trajectory (exact derivatives, no numerical
/// differentiation) at the IMU rate.
GroundTruth generate_truth(const TrajectorySpec& spec);

/// Default portrait camera at the reduced network resolution, pitched down
/// by the given angle, body-frame x forward / y left / z up.
CameraModel make_default_camera(double pitch_deg);

/// Landmarks drawn uniformly in a viewing-frustum corridor along the
/// trajectory within the given depth range, plus moving-object velocities
/// sized to displace roughly outlier_px pixels between frames.
WorldModel generate_world(const GroundTruth& truth, const CameraModel& cam, int n_landmarks,
                          int n_outlier_objects, double outlier_px, double depth_min,
                          double depth_max, std::uint64_t seed);

/// Inverse of the mechanization input corrections, so that noise- and
/// bias-free synthesis mechanizes back to the truth exactly.
std::vector<ImuSample> synthesize_imu(const GroundTruth& truth, const NoiseSpec& noise,
                                      const Eigen::Vector3d& gravity = {0.0, 0.0, -9.81},
                                      AccelCorrectionMode mode =
                                          AccelCorrectionMode::InverseScaleAfterBias);

struct SyntheticFlow {
  FlowField field;
  std::vector<bool> outlier_mask;     ///< per point
  std::vector<int> landmark_index;    ///< per point
};

/// Flow for the frame pair (frame_index, frame_index + 1): projected
/// displacement of every landmark visible in both frames plus Gaussian
/// noise; a seeded fraction of points replaced by moving-object flow.
SyntheticFlow synthesize_flow(const GroundTruth& truth, const WorldModel& world,
                              const CameraModel& cam, const NoiseSpec& noise, int frame_index);

std::vector<GnssFix> synthesize_gnss(const GroundTruth& truth, const EnuOrigin& origin,
                                     const NoiseSpec& noise);

// ---------------------------------------------------------------------------
// Whole-session synthesis.
// ---------------------------------------------------------------------------

struct SimOptions {
  TrajectorySpec trajectory;
  NoiseSpec noise;
  CameraModel camera;  ///< default-constructed -> built from camera_pitch_deg
  EnuOrigin origin{60.17, 24.94, 12.0};
  int n_landmarks{4000};
  int n_outlier_objects{8};
  double outlier_px{50.0};
  double landmark_depth_min{2.0};
  double landmark_depth_max{30.0};
};

struct SimDataset {
  Dataset data;  ///< streams + camera/origin manifest (paths unset)
  GroundTruth truth;
  WorldModel world;
  std::vector<std::vector<bool>> outlier_masks;  ///< parallel to data.flow
};

SimDataset simulate(const SimOptions& opts);

/// Write the dataset in the flowio formats plus manifest under out_dir.
std::string write_dataset(const SimDataset& sim, const std::string& out_dir,
                          const std::string& name);

/// Filter process-noise settings matched to the per-sample synthesis noise:
/// Q = Sigma dt must equal the per-sample variance.
ProcessNoiseConfig process_noise_for(const NoiseSpec& noise, double imu_rate,
                                     const Eigen::Vector3d& gravity = {0.0, 0.0, -9.81});

}  // namespace flowins
