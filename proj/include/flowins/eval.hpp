#pragma once

#include <string>
#include <vector>

#include "flowins/session.hpp"

namespace flowins {

/// One fusion combination of the ablation study.
struct AblationConfig {
  bool use_gnss{false};
  bool use_dense_flow{false};
  bool use_sparse_flow{false};
  bool use_flow_uncertainty{false};

  void validate() const {
    if (use_dense_flow && use_sparse_flow)
      throw Error("AblationConfig: dense and sparse flow are mutually exclusive");
  }

  std::string label() const;
};

/// The six fusion combinations of the study: INS alone, +GNSS, +sparse,
/// +dense+uncertainty, +GNSS+sparse, +GNSS+dense+uncertainty.
std::vector<AblationConfig> standard_ablation_rows();

struct ProcrustesResult {
  TrajectoryEstimate aligned;
  Eigen::Matrix3d rotation{Eigen::Matrix3d::Identity()};
  Eigen::Vector3d translation{Eigen::Vector3d::Zero()};
};

/// Matched position pairs on common timestamps: the sparser track keeps its
/// stamps, the denser one is linearly interpolated onto them.
void matched_positions(const TrajectoryEstimate& a, const TrajectoryEstimate& b,
                       std::vector<Eigen::Vector3d>& pa, std::vector<Eigen::Vector3d>& pb);

/// Rigid (rotation + translation, no scale) least squares alignment of the
/// estimate onto the truth, closed form via the cross-covariance SVD with a
/// reflection guard. Throws DegenerateAlignment for fewer than 3
/// non-collinear common points.
ProcrustesResult procrustes_align(const TrajectoryEstimate& est,
                                  const TrajectoryEstimate& truth);

/// Root mean squared 3-D position error over common timestamps.
double rmse(const TrajectoryEstimate& est, const TrajectoryEstimate& truth);

struct AblationRow {
  AblationConfig config;
  double filter_rmse{0.0};             ///< procrustes aligned
  double smoother_rmse{0.0};           ///< procrustes aligned
  double filter_rmse_unaligned{0.0};
  double smoother_rmse_unaligned{0.0};
  int points_accepted{0};
  int points_gated{0};
  int points_degenerate{0};
  TrajectoryEstimate filter_aligned;
  TrajectoryEstimate smoother_aligned;
};

struct AblationResults {
  std::vector<AblationRow> rows;
  TrajectoryEstimate truth;
  std::vector<Eigen::Vector3d> gnss_enu;   ///< fix positions in the truth frame
  std::vector<double> gnss_radius;

  std::string to_csv() const;
};

/// Filter + smoother over the same dataset for every configuration; RMSE
/// against the dataset truth after rigid alignment (and unaligned, for the
/// absolutely anchored GNSS rows).
AblationResults run_ablation(const Dataset& data, const std::vector<AblationConfig>& configs,
                             const SessionConfig& base);

/// Dense field reduced to the strongest-parallax points (largest flow
/// magnitude), the image-free stand-in for sparse feature tracking.
FlowField sparse_subsample(const FlowField& field, int max_points = 30);

/// Heteroscedastic weighting disabled: every variance replaced by the field
/// median (per component).
FlowField flatten_uncertainty(const FlowField& field);

/// One SVG track overlay per row (estimate vs truth vs GNSS circles) plus a
/// CSV table. Returns the written paths; throws Error when there are no
/// rows.
std::vector<std::string> emit_plots(const AblationResults& results, const std::string& out_dir);

}  // namespace flowins
