#pragma once

#include <Eigen/Core>
#include <utility>

#include "flowins/flow_types.hpp"
#include "flowins/geometry.hpp"
#include "flowins/kalman.hpp"
#include "flowins/state.hpp"

namespace flowins {

/// Pose-pair bookkeeping and triangulation settings of the flow update.
struct FlowFusionConfig {
  TriangulationOptions triangulation;
  double sigma_p0{1e3};   ///< forgetting prior on the augmented position, m
  double sigma_q0{1e1};   ///< forgetting prior on the augmented quaternion
  double nugget{1e-12};   ///< equality-measurement nugget of the augmentation
  /// Innovation directions with less variance than this (px^2) are treated
  /// as uninformative; the epipolar-line direction of the per-point model
  /// is structurally such a direction.
  double innovation_floor{1e-3};
};

/// Camera projections of the augmented (frame 1) and current (frame 2)
/// poses, composed with the IMU-to-camera extrinsics.
std::pair<ProjectionMatrix, ProjectionMatrix> camera_matrices(const StateEstimate& x,
                                                              const CameraModel& cam);

struct ResidualInternals {
  Eigen::Vector3d point{Eigen::Vector3d::Zero()};  ///< triangulated world point
  Eigen::Vector2d predicted_flow{Eigen::Vector2d::Zero()};
  ConditioningReport report;
};

struct ResidualResult {
  bool ok{false};
  DegeneracyReason reason{DegeneracyReason::None};
  Eigen::Vector2d residual{Eigen::Vector2d::Zero()};  ///< h(m, delta)
  ResidualInternals internals;
};

/// Measurement function h: triangulate the point implied by the flow under
/// the current pose pair, reproject through both cameras, difference the
/// dehomogenized pixels and subtract the observed flow.
ResidualResult flow_residual(const StateEstimate& x, const FlowPoint& fp,
                             const CameraModel& cam, const TriangulationOptions& opts = {});

struct FlowJacobians {
  ResidualResult residual;
  Eigen::Matrix<double, 2, kStateDim> H_x{Eigen::Matrix<double, 2, kStateDim>::Zero()};
  Eigen::Matrix2d H_r{Eigen::Matrix2d::Zero()};
};

/// Residual plus derivatives with respect to the state and the flow noise,
/// by forward-mode differentiation through the whole measurement function
/// (triangulation included).
FlowJacobians flow_residual_jacobians(const StateEstimate& x, const FlowPoint& fp,
                                      const CameraModel& cam,
                                      const TriangulationOptions& opts = {});

struct UpdateReport {
  enum class Outcome { Accepted, Gated, Degenerate };
  Outcome outcome{Outcome::Degenerate};
  DegeneracyReason reason{DegeneracyReason::None};
  double chi2{0.0};
  Eigen::Vector2d innovation{Eigen::Vector2d::Zero()};
  Eigen::Matrix2d S{Eigen::Matrix2d::Zero()};
  ConditioningReport conditioning;
};

/// Single-point EKF update (Joseph form, chi-square gated). Degenerate
/// geometry rejects the point; a singular innovation covariance is a hard
/// error.
StateEstimate ekf_update_flow_point(const StateEstimate& x, const FlowPoint& fp,
                                    const CameraModel& cam, const GatingConfig& gate,
                                    const FlowFusionConfig& cfg = {},
                                    UpdateReport* report = nullptr);

struct FieldReport {
  int considered{0};  ///< points selected by stride/cap
  int accepted{0};
  int gated{0};
  int degenerate{0};
  std::vector<int> point_index;                 ///< into field.points
  std::vector<UpdateReport::Outcome> outcome;   ///< parallel to point_index
};

/// Sequential per-point updates over a strided, capped subset in
/// deterministic row-major order, re-linearizing after every accepted
/// point.
StateEstimate process_flow_field(const StateEstimate& x, const FlowField& field,
                                 const CameraModel& cam, const GatingConfig& gate,
                                 const FlowFusionConfig& cfg = {},
                                 FieldReport* report = nullptr);

/// Pose forgetting: linear Kalman prediction with A = blkdiag(I19, 0) and
/// Q = blkdiag(0, sigma_p0^2 I3, sigma_q0^2 I4). The augmented mean is
/// zeroed (including the quaternion; augmentation restores the unit-norm
/// invariant).
StateEstimate forget_pose(const StateEstimate& x, double sigma_p0, double sigma_q0);

/// Pose augmentation: equality measurement p_minus = p, q_minus = q in the
/// uninformative-prior limit (exact state cloning with a nugget on the new
/// diagonal). Requires forget_pose since the last augmentation.
StateEstimate augment_pose(const StateEstimate& x, double nugget);

/// process_flow_field, then forget_pose, then augment_pose: after the call
/// the state carries the newest frame pose as the augmented pose for the
/// next pair.
StateEstimate frame_pair_cycle(const StateEstimate& x, const FlowField& field,
                               const CameraModel& cam, const GatingConfig& gate,
                               const FlowFusionConfig& cfg = {}, FieldReport* report = nullptr);

}  // namespace flowins
