#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "flowins/trajectory.hpp"

namespace flowins {

enum class HistoryTag : std::uint8_t { Init = 0, Imu = 1, Flow = 2, Gnss = 3, Forget = 4, Augment = 5 };

/// One filter step: the transition from the previous record's filtered
/// state, the prediction it produced, and the filtered result after any
/// measurement at this step. Pure predictions have m_filt == m_pred.
/// Measurement and pose-bookkeeping events are stored with F = I and
/// m_pred/P_pred equal to the previous filtered state.
struct HistoryRecord {
  double t{0.0};
  HistoryTag tag{HistoryTag::Init};
  Eigen::MatrixXd F;
  Eigen::VectorXd m_pred;
  Eigen::MatrixXd P_pred;
  Eigen::VectorXd m_filt;
  Eigen::MatrixXd P_filt;
};

struct FilterHistory {
  int state_dim{0};
  bool quaternion_layout{false};  ///< 26-dim INS layout; renormalize after smoothing
  std::vector<HistoryRecord> records;

  void validate() const;
};

struct SmootherOptions {
  double jitter{1e-12};  ///< regularization added when a predicted covariance is singular
};

struct SmootherStats {
  int regularized_steps{0};  ///< predictions that needed jitter
  int smoothing_steps{0};    ///< backward steps through real dynamics
  int event_steps{0};        ///< identity-dynamics pass-through steps
};

struct SmoothedStates {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> mean;
  std::vector<Eigen::MatrixXd> cov;
};

/// Backward Rauch-Tung-Striebel recursion over the stored linearizations,
/// dimension generic. Measurement and pose-bookkeeping records are treated
/// as identity-dynamics steps: the smoothed state passes through unchanged
/// (their effect is already inside the filtered records). Singular predicted
/// covariances are regularized with jitter and counted.
SmoothedStates rts_smooth_records(const FilterHistory& hist, const SmootherOptions& opts = {},
                                  SmootherStats* stats = nullptr);

/// Smoothed trajectory for the INS state layout: one entry per distinct
/// timestamp (the last record wins), quaternions renormalized and
/// sign-aligned to the filtered track.
TrajectoryEstimate rts_smooth(const FilterHistory& hist, const SmootherOptions& opts = {},
                              SmootherStats* stats = nullptr);

/// Filtered trajectory extracted from the history (last record per
/// timestamp).
TrajectoryEstimate filtered_trajectory(const FilterHistory& hist);

}  // namespace flowins
