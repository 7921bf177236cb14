#pragma once

#include <Eigen/Dense>

#include "flowins/state.hpp"

namespace flowins {

struct UpdateOutcome {
  bool accepted{false};
  double chi2{0.0};
  int rank{0};  ///< informative innovation directions retained
};

/// Joseph-form EKF update with an innovation gate.
///
/// The caller supplies the innovation v = z - h(m) and the effective
/// measurement covariance R_eff (for measurement models with a noise
/// Jacobian this is H_r R H_r^T). When gate_chi2 > 0 the update is applied
/// only if v^T S^-1 v <= gate_chi2.
///
/// S^-1 is evaluated as a guarded pseudo-inverse: eigendirections below the
/// floor carry no usable information and are excluded from both the test
/// statistic and the gain. The per-point flow model is rank deficient along
/// the epipolar line (depth absorbs any perturbation there), leaving an
/// eigenvalue that is pure linearization residue; abs_floor sets the scale
/// (squared measurement units) below which a direction is treated as
/// uninformative. The Joseph form keeps the covariance consistent for this
/// (suboptimal-gain) update. Throws SingularInnovation when S has no
/// positive eigenvalue at all.
template <int M>
UpdateOutcome joseph_update(StateEstimate& x, const Eigen::Matrix<double, M, kStateDim>& H,
                            const Eigen::Matrix<double, M, M>& R_eff,
                            const Eigen::Matrix<double, M, 1>& innovation, double gate_chi2,
                            double abs_floor = 0.0) {
  using MatS = Eigen::Matrix<double, M, M>;
  const MatS S = H * x.P * H.transpose() + R_eff;
  const Eigen::SelfAdjointEigenSolver<MatS> es(S);
  if (es.info() != Eigen::Success || !es.eigenvalues().allFinite() ||
      !(es.eigenvalues().maxCoeff() > 0.0))
    throw SingularInnovation("innovation covariance has no positive eigenvalue");

  const double floor = std::max(abs_floor, 1e-10 * es.eigenvalues().maxCoeff());
  MatS S_pinv = MatS::Zero();
  UpdateOutcome out;
  for (int i = 0; i < M; ++i) {
    if (es.eigenvalues()[i] > floor) {
      S_pinv += es.eigenvectors().col(i) * es.eigenvectors().col(i).transpose() /
                es.eigenvalues()[i];
      ++out.rank;
    }
  }
  if (out.rank == 0) {
    out.accepted = false;
    return out;
  }
  out.chi2 = innovation.dot(S_pinv * innovation);
  if (gate_chi2 > 0.0 && out.chi2 > gate_chi2) {
    out.accepted = false;
    return out;
  }

  const Eigen::Matrix<double, kStateDim, M> K = x.P * H.transpose() * S_pinv;
  const StateMatrix D = StateMatrix::Identity() - K * H;
  x.m += K * innovation;
  x.P = D * x.P * D.transpose() + K * R_eff * K.transpose();
  x.symmetrize();
  out.accepted = true;
  return out;
}

}  // namespace flowins
