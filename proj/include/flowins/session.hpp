#pragma once

#include <optional>

#include "flowins/flow_fusion.hpp"
#include "flowins/flowio.hpp"
#include "flowins/smoother.hpp"

namespace flowins {

/// How much linearization history a session keeps.
enum class HistoryMode {
  None,    ///< filter only, no smoothing possible
  Events,  ///< composed transitions between measurement events (exact for the
           ///< linearized system, hundredfold smaller than Full)
  Full,    ///< one record per IMU step
};

struct SessionConfig {
  ProcessNoiseConfig process;
  GatingConfig gate;
  FlowFusionConfig fusion;
  GnssUpdateConfig gnss;
  InitPriors init;
  bool use_flow{true};
  bool use_gnss{true};
  HistoryMode history{HistoryMode::Events};
  double history_min_interval{0.1};      ///< s between records in Events mode
  double standstill_init_duration{5.0};  ///< s of leading data for bias calibration
  bool monitor_covariance{false};        ///< eigenvalue check after every step
};

struct SessionResult {
  FilterHistory history;
  TrajectoryEstimate filter_traj;
  StateEstimate final_state;
  EnuOrigin origin;
  bool origin_set{false};

  // Counters.
  int imu_steps{0};
  int flow_fields{0};          ///< fields processed through the update
  int flow_fields_skipped{0};  ///< pose stamp mismatch or disabled
  int points_accepted{0};
  int points_gated{0};
  int points_degenerate{0};
  int gnss_accepted{0};
  int gnss_rejected{0};

  /// Per processed field: index into the dataset flow stream plus report.
  std::vector<std::pair<std::size_t, FieldReport>> field_reports;

  // Covariance health over the run (only tracked with monitor_covariance).
  double worst_min_eig_rel{0.0};    ///< most negative min-eig / |P|
  double worst_asymmetry_rel{0.0};  ///< largest |P - P^T| / |P|
};

/// Drives the filter over a time-aligned dataset: IMU predictions, per-point
/// flow updates with pose-pair bookkeeping, and GNSS position updates.
/// A session instance is single-caller.
class FusionSession {
 public:
  explicit FusionSession(const SessionConfig& cfg) : cfg_(cfg) {}

  /// Initialize from the leading standstill window of the dataset.
  SessionResult run(const Dataset& data) const;

  /// Run with an explicit initial state whose augmented pose is stamped at
  /// t_init (for truth-initialized experiments).
  SessionResult run(const Dataset& data, const StateEstimate& init_state, double t_init) const;

 private:
  SessionResult drive(const Dataset& data, const StateEstimate& init_state, double t_init) const;

  SessionConfig cfg_;
};

}  // namespace flowins
