#include "flowins/session.hpp"

#include <cmath>

namespace flowins {

namespace {

constexpr double kStampTolerance = 1e-9;  // s, pose-stamp vs frame-time match

void monitor(const StateEstimate& x, SessionResult& res) {
  const double scale = std::max(x.P.norm(), 1e-300);
  res.worst_asymmetry_rel =
      std::max(res.worst_asymmetry_rel, (x.P - x.P.transpose()).norm() / scale);
  res.worst_min_eig_rel =
      std::min(res.worst_min_eig_rel, x.min_covariance_eigenvalue() / scale);
}

}  // namespace

SessionResult FusionSession::run(const Dataset& data) const {
  if (data.imu.empty()) throw DataError("session: dataset has no IMU samples");
  const double t_begin = data.imu.front().t;
  std::vector<ImuSample> window;
  for (const ImuSample& s : data.imu) {
    if (s.t - t_begin <= cfg_.standstill_init_duration + 1e-12) window.push_back(s);
  }
  const StateEstimate init = initialize_stationary(window, cfg_.process, cfg_.init);
  return drive(data, init, window.back().t);
}

SessionResult FusionSession::run(const Dataset& data, const StateEstimate& init_state,
                                 double t_init) const {
  return drive(data, init_state, t_init);
}

SessionResult FusionSession::drive(const Dataset& data, const StateEstimate& init_state,
                                   double t_init) const {
  SessionResult res;
  StateEstimate x = init_state;
  double t_state = t_init;
  double pose_stamp = t_init;  // time the augmented pose refers to

  if (data.manifest.origin) {
    res.origin = *data.manifest.origin;
    res.origin_set = true;
  }

  res.history.state_dim = kStateDim;
  res.history.quaternion_layout = true;
  const bool keep_history = cfg_.history != HistoryMode::None;

  const auto push_record = [&](double t, HistoryTag tag, const Eigen::MatrixXd& F,
                               const StateEstimate& pred, const StateEstimate& filt) {
    if (!keep_history) return;
    HistoryRecord rec;
    rec.t = t;
    rec.tag = tag;
    rec.F = F;
    rec.m_pred = pred.m;
    rec.P_pred = pred.P;
    rec.m_filt = filt.m;
    rec.P_filt = filt.P;
    res.history.records.push_back(std::move(rec));
  };

  push_record(t_init, HistoryTag::Init, Eigen::MatrixXd(), x, x);

  // Composed transition since the last stored record (Events mode).
  StateMatrix F_prod = StateMatrix::Identity();
  bool pending_imu = false;

  const auto flush_composite = [&](double t) {
    if (cfg_.history == HistoryMode::Events && pending_imu) {
      push_record(t, HistoryTag::Imu, F_prod, x, x);
      F_prod.setIdentity();
      pending_imu = false;
    }
  };

  const std::vector<StreamEvent> events = align_streams(data);
  for (const StreamEvent& ev : events) {
    if (ev.t <= t_init + kStampTolerance && ev.type == EventType::Imu) continue;

    switch (ev.type) {
      case EventType::Imu: {
        const ImuSample& s = data.imu[ev.index];
        const double dt = s.t - t_state;
        if (!(dt > 0.0)) continue;
        PredictJacobians jac;
        x = ekf_predict(x, s, dt, cfg_.process, false, &jac);
        t_state = s.t;
        ++res.imu_steps;
        if (cfg_.history == HistoryMode::Full) {
          push_record(s.t, HistoryTag::Imu, jac.F_x, x, x);
        } else if (cfg_.history == HistoryMode::Events) {
          F_prod = jac.F_x * F_prod;
          pending_imu = true;
          // Keep the trajectory sampled even between measurement events.
          if (keep_history &&
              t_state - res.history.records.back().t >= cfg_.history_min_interval - 1e-12)
            flush_composite(t_state);
        }
        if (cfg_.monitor_covariance) monitor(x, res);
        break;
      }
      case EventType::Flow: {
        if (!cfg_.use_flow) break;
        const FlowField& field = data.flow[ev.index];
        if (field.t2 <= t_init + kStampTolerance) break;
        if (std::abs(field.t2 - t_state) > kStampTolerance) {
          // No IMU sample at the frame time; the state cannot be stamped for
          // this pair, so neither the update nor the bookkeeping applies.
          ++res.flow_fields_skipped;
          break;
        }
        flush_composite(t_state);

        const bool bracket_ok = std::abs(field.t1 - pose_stamp) <= kStampTolerance;
        if (bracket_ok) {
          FieldReport report;
          const StateEstimate pre = x;
          x = process_flow_field(x, field, data.manifest.camera, cfg_.gate, cfg_.fusion,
                                 &report);
          ++res.flow_fields;
          res.points_accepted += report.accepted;
          res.points_gated += report.gated;
          res.points_degenerate += report.degenerate;
          res.field_reports.emplace_back(ev.index, std::move(report));
          push_record(t_state, HistoryTag::Flow, Eigen::MatrixXd(), pre, x);
          if (cfg_.monitor_covariance) monitor(x, res);
        } else {
          ++res.flow_fields_skipped;
        }

        // Pose bookkeeping keeps the newest frame pose for the next pair.
        // Forgetting is a genuine linear prediction: its transition (zero
        // block on the augmented pose) is stored so the smoother's backward
        // pass cuts information flow from the new pose to the old one.
        {
          x = forget_pose(x, cfg_.fusion.sigma_p0, cfg_.fusion.sigma_q0);
          StateMatrix A_forget = StateMatrix::Identity();
          A_forget.block<7, 7>(idx::pm, idx::pm).setZero();
          push_record(t_state, HistoryTag::Forget, A_forget, x, x);
          const StateEstimate pre_augment = x;
          x = augment_pose(x, cfg_.fusion.nugget);
          push_record(t_state, HistoryTag::Augment, Eigen::MatrixXd(), pre_augment, x);
          pose_stamp = field.t2;
          if (cfg_.monitor_covariance) monitor(x, res);
        }
        break;
      }
      case EventType::Gnss: {
        if (!cfg_.use_gnss) break;
        const GnssFix& fix = data.gnss[ev.index];
        if (!res.origin_set) {
          // First fix of the session anchors the local frame.
          res.origin = EnuOrigin{fix.lat, fix.lon, fix.alt};
          res.origin_set = true;
        }
        if (fix.t <= t_init + kStampTolerance) break;
        flush_composite(t_state);
        const StateEstimate pre = x;
        const GnssUpdateResult r = ekf_update_gnss(x, fix, res.origin, cfg_.gnss);
        if (r.accepted) {
          x = r.state;
          ++res.gnss_accepted;
          push_record(t_state, HistoryTag::Gnss, Eigen::MatrixXd(), pre, x);
          if (cfg_.monitor_covariance) monitor(x, res);
        } else {
          ++res.gnss_rejected;
        }
        break;
      }
    }
  }
  flush_composite(t_state);

  if (keep_history) res.filter_traj = filtered_trajectory(res.history);
  res.filter_traj.label = "filter";
  res.final_state = x;
  return res;
}

}  // namespace flowins
