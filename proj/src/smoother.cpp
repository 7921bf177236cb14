#include "flowins/smoother.hpp"

#include <Eigen/Dense>

#include "flowins/errors.hpp"
#include "flowins/state.hpp"

namespace flowins {

void FilterHistory::validate() const {
  if (records.empty()) throw Error("FilterHistory: empty");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const HistoryRecord& r = records[i];
    if (r.m_filt.size() != state_dim || r.m_pred.size() != state_dim)
      throw Error("FilterHistory: record dimension mismatch");
    if (i > 0 && r.t < records[i - 1].t)
      throw Error("FilterHistory: records not chronological");
  }
}

SmoothedStates rts_smooth_records(const FilterHistory& hist, const SmootherOptions& opts,
                                  SmootherStats* stats) {
  hist.validate();
  SmootherStats local;
  SmootherStats& st = stats ? *stats : local;
  st = SmootherStats{};

  const int n = static_cast<int>(hist.records.size());
  SmoothedStates out;
  out.t.resize(n);
  out.mean.resize(n);
  out.cov.resize(n);

  out.t[n - 1] = hist.records[n - 1].t;
  out.mean[n - 1] = hist.records[n - 1].m_filt;
  out.cov[n - 1] = hist.records[n - 1].P_filt;

  for (int k = n - 2; k >= 0; --k) {
    const HistoryRecord& cur = hist.records[k];
    const HistoryRecord& next = hist.records[k + 1];
    out.t[k] = cur.t;

    const Eigen::VectorXd dm = out.mean[k + 1] - next.m_pred;
    const Eigen::MatrixXd dP = out.cov[k + 1] - next.P_pred;

    const bool dynamics_step = next.tag == HistoryTag::Imu || next.tag == HistoryTag::Forget;
    if (!dynamics_step) {
      // Identity-dynamics pass-through (measurement updates and the pose
      // augmentation): the gain is exactly I, so no solve is performed
      // against the often near-singular predicted covariance.
      ++st.event_steps;
      out.mean[k] = cur.m_filt + dm;
      out.cov[k] = cur.P_filt + dP;
    } else {
      ++st.smoothing_steps;
      Eigen::MatrixXd P_pred = next.P_pred;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(P_pred);
      Eigen::MatrixXd G;
      bool ok = ldlt.info() == Eigen::Success;
      if (ok) {
        // G = P_filt F^T P_pred^-1, via P_pred X = F P_filt.
        G = ldlt.solve(next.F * cur.P_filt).transpose();
        ok = G.allFinite();
      }
      if (!ok) {
        ++st.regularized_steps;
        P_pred += opts.jitter * Eigen::MatrixXd::Identity(hist.state_dim, hist.state_dim);
        ldlt.compute(P_pred);
        if (ldlt.info() != Eigen::Success)
          throw NumericalError("rts_smooth: predicted covariance singular despite jitter");
        G = ldlt.solve(next.F * cur.P_filt).transpose();
        if (!G.allFinite())
          throw NumericalError("rts_smooth: smoother gain not finite despite jitter");
      }
      out.mean[k] = cur.m_filt + G * dm;
      out.cov[k] = cur.P_filt + G * dP * G.transpose();
    }
    out.cov[k] = (0.5 * (out.cov[k] + out.cov[k].transpose())).eval();
  }
  return out;
}

namespace {

void align_quaternion_sign(Eigen::Ref<Eigen::Vector4d> q, const Eigen::Vector4d& reference) {
  if (q.dot(reference) < 0.0) q = -q;
}

}  // namespace

TrajectoryEstimate rts_smooth(const FilterHistory& hist, const SmootherOptions& opts,
                              SmootherStats* stats) {
  if (hist.state_dim != kStateDim)
    throw Error("rts_smooth: expected the INS state layout");
  const SmoothedStates s = rts_smooth_records(hist, opts, stats);

  TrajectoryEstimate traj;
  traj.label = "smoother";
  for (std::size_t k = 0; k < s.t.size(); ++k) {
    StateVector m = s.mean[k];
    if (hist.quaternion_layout) {
      m.segment<4>(idx::q).normalize();
      m.segment<4>(idx::qm).normalize();
      align_quaternion_sign(m.segment<4>(idx::q),
                            hist.records[k].m_filt.segment<4>(idx::q));
      align_quaternion_sign(m.segment<4>(idx::qm),
                            hist.records[k].m_filt.segment<4>(idx::qm));
    }
    if (!traj.t.empty() && traj.t.back() == s.t[k]) {
      traj.mean.back() = m;
      traj.cov.back() = s.cov[k];
    } else {
      traj.t.push_back(s.t[k]);
      traj.mean.push_back(m);
      traj.cov.push_back(s.cov[k]);
    }
  }
  return traj;
}

TrajectoryEstimate filtered_trajectory(const FilterHistory& hist) {
  hist.validate();
  if (hist.state_dim != kStateDim)
    throw Error("filtered_trajectory: expected the INS state layout");
  TrajectoryEstimate traj;
  traj.label = "filter";
  for (const HistoryRecord& r : hist.records) {
    if (!traj.t.empty() && traj.t.back() == r.t) {
      traj.mean.back() = r.m_filt;
      traj.cov.back() = r.P_filt;
    } else {
      traj.t.push_back(r.t);
      traj.mean.push_back(r.m_filt);
      traj.cov.push_back(r.P_filt);
    }
  }
  return traj;
}

}  // namespace flowins
