#include "flowins/flow_fusion.hpp"

#include <algorithm>
#include <numeric>

#include "flowins/dual.hpp"

namespace flowins {

namespace {

template <typename T>
struct PosePair {
  Vec3T<T> p, pm;
  QuatT<T> q, qm;
};

/// h(x, delta) for one point, templated for forward-mode differentiation.
/// Returns false on degenerate geometry; on success h_out carries the
/// residual and internals the triangulated point and conditioning.
template <typename T>
bool residual_kernel(const PosePair<T>& pose, const CameraModel& cam, double u1, double v1,
                     const T& du, const T& dv, const TriangulationOptions& opts, T h_out[2],
                     Vec3T<T>* point_out, ConditioningReport* report,
                     DegeneracyReason* reason) {
  const Vec3T<double> c1 = camera_center_from_pose(
      cam, Vec3T<double>{value_of(pose.pm.x), value_of(pose.pm.y), value_of(pose.pm.z)},
      QuatT<double>{value_of(pose.qm.w), value_of(pose.qm.x), value_of(pose.qm.y),
                    value_of(pose.qm.z)});
  const Vec3T<double> c2 = camera_center_from_pose(
      cam, Vec3T<double>{value_of(pose.p.x), value_of(pose.p.y), value_of(pose.p.z)},
      QuatT<double>{value_of(pose.q.w), value_of(pose.q.x), value_of(pose.q.y),
                    value_of(pose.q.z)});
  report->baseline = std::sqrt((c1 - c2).squared_norm());
  if (report->baseline < opts.baseline_epsilon) {
    *reason = DegeneracyReason::ZeroBaseline;
    return false;
  }

  const Mat34T<T> P1 = projection_from_pose(cam, pose.pm, pose.qm);
  const Mat34T<T> P2 = projection_from_pose(cam, pose.p, pose.q);
  const T u2 = u1 + du;
  const T v2 = v1 + dv;

  const auto kr = triangulate_kernel(P1, P2, T(u1), T(v1), u2, v2);
  report->sigma_smallest = value_of(kr.sigma4);
  report->sigma_second_smallest = value_of(kr.sigma3);
  if (value_of(kr.sigma3) < opts.sigma_ratio_min * value_of(kr.sigma4) ||
      value_of(kr.sigma3) < 1e-9) {
    *reason = DegeneracyReason::IllConditioned;
    return false;
  }
  if (kr.at_infinity) {
    *reason = DegeneracyReason::PointAtInfinity;
    return false;
  }

  T uvw1[3], uvw2[3];
  project_h(P1, kr.point, uvw1);
  project_h(P2, kr.point, uvw2);
  // Static scenes put the point in front of both cameras; anything else is
  // an impossible correspondence.
  if (!(value_of(uvw1[2]) > opts.depth_epsilon) || !(value_of(uvw2[2]) > opts.depth_epsilon)) {
    *reason = DegeneracyReason::BehindCamera;
    return false;
  }

  // Predicted flow with dehomogenization before differencing.
  const T pu1 = uvw1[0] / uvw1[2];
  const T pv1 = uvw1[1] / uvw1[2];
  const T pu2 = uvw2[0] / uvw2[2];
  const T pv2 = uvw2[1] / uvw2[2];
  h_out[0] = (pu2 - pu1) - du;
  h_out[1] = (pv2 - pv1) - dv;
  if (point_out) *point_out = kr.point;
  *reason = DegeneracyReason::None;
  return true;
}

PosePair<double> pose_pair_of(const StateEstimate& x) {
  PosePair<double> pose;
  pose.p = to_vec3(x.position());
  pose.pm = to_vec3(x.past_position());
  pose.q = x.orientation();
  pose.qm = x.past_orientation();
  return pose;
}

}  // namespace

std::pair<ProjectionMatrix, ProjectionMatrix> camera_matrices(const StateEstimate& x,
                                                              const CameraModel& cam) {
  const BodyPose pose1{x.past_position(), x.past_orientation()};
  const BodyPose pose2{x.position(), x.orientation()};
  return {projection_for_pose(cam, pose1), projection_for_pose(cam, pose2)};
}

ResidualResult flow_residual(const StateEstimate& x, const FlowPoint& fp,
                             const CameraModel& cam, const TriangulationOptions& opts) {
  ResidualResult res;
  double h[2];
  Vec3T<double> point;
  res.ok = residual_kernel(pose_pair_of(x), cam, fp.u1, fp.v1, fp.du, fp.dv, opts, h, &point,
                           &res.internals.report, &res.reason);
  if (!res.ok) return res;
  res.residual = {h[0], h[1]};
  res.internals.point = to_eigen(point);
  res.internals.predicted_flow = res.residual + Eigen::Vector2d(fp.du, fp.dv);
  return res;
}

FlowJacobians flow_residual_jacobians(const StateEstimate& x, const FlowPoint& fp,
                                      const CameraModel& cam,
                                      const TriangulationOptions& opts) {
  using D = Dual<16>;
  FlowJacobians out;

  PosePair<D> pose;
  pose.p = {D::variable(x.m[idx::p], 0), D::variable(x.m[idx::p + 1], 1),
            D::variable(x.m[idx::p + 2], 2)};
  pose.q = {D::variable(x.m[idx::q], 3), D::variable(x.m[idx::q + 1], 4),
            D::variable(x.m[idx::q + 2], 5), D::variable(x.m[idx::q + 3], 6)};
  pose.pm = {D::variable(x.m[idx::pm], 7), D::variable(x.m[idx::pm + 1], 8),
             D::variable(x.m[idx::pm + 2], 9)};
  pose.qm = {D::variable(x.m[idx::qm], 10), D::variable(x.m[idx::qm + 1], 11),
             D::variable(x.m[idx::qm + 2], 12), D::variable(x.m[idx::qm + 3], 13)};
  const D du = D::variable(fp.du, 14);  // additive noise r enters with delta
  const D dv = D::variable(fp.dv, 15);

  D h[2];
  Vec3T<D> point;
  out.residual.ok = residual_kernel(pose, cam, fp.u1, fp.v1, du, dv, opts, h, &point,
                                    &out.residual.internals.report, &out.residual.reason);
  if (!out.residual.ok) return out;

  out.residual.residual = {h[0].v, h[1].v};
  out.residual.internals.point = {point.x.v, point.y.v, point.z.v};
  out.residual.internals.predicted_flow =
      out.residual.residual + Eigen::Vector2d(fp.du, fp.dv);

  const int state_cols[14] = {idx::p,  idx::p + 1,  idx::p + 2,  idx::q,  idx::q + 1,
                              idx::q + 2, idx::q + 3, idx::pm, idx::pm + 1, idx::pm + 2,
                              idx::qm, idx::qm + 1, idx::qm + 2, idx::qm + 3};
  for (int r = 0; r < 2; ++r) {
    for (int k = 0; k < 14; ++k) out.H_x(r, state_cols[k]) = h[r].d[k];
    out.H_r(r, 0) = h[r].d[14];
    out.H_r(r, 1) = h[r].d[15];
  }
  return out;
}

StateEstimate ekf_update_flow_point(const StateEstimate& x, const FlowPoint& fp,
                                    const CameraModel& cam, const GatingConfig& gate,
                                    const FlowFusionConfig& cfg, UpdateReport* report) {
  if (fp.u1 < 0.0 || fp.u1 >= cam.image_width || fp.v1 < 0.0 || fp.v1 >= cam.image_height)
    throw Error("ekf_update_flow_point: flow point outside image bounds");

  UpdateReport local;
  UpdateReport& rep = report ? *report : local;

  const FlowJacobians J = flow_residual_jacobians(x, fp, cam, cfg.triangulation);
  rep.conditioning = J.residual.internals.report;
  if (!J.residual.ok) {
    rep.outcome = UpdateReport::Outcome::Degenerate;
    rep.reason = J.residual.reason;
    return x;
  }

  const Eigen::Matrix2d R = Eigen::Vector2d(fp.var_du, fp.var_dv).asDiagonal();
  const Eigen::Matrix2d R_eff = J.H_r * R * J.H_r.transpose();
  const Eigen::Vector2d innovation = -J.residual.residual;

  StateEstimate out = x;
  rep.S = J.H_x * x.P * J.H_x.transpose() + R_eff;
  rep.innovation = innovation;
  const UpdateOutcome o = joseph_update<2>(out, J.H_x, R_eff, innovation,
                                           gate.chi2_threshold, cfg.innovation_floor);
  rep.chi2 = o.chi2;
  if (o.rank == 0) {
    // No informative innovation direction survived the floor.
    rep.outcome = UpdateReport::Outcome::Degenerate;
    rep.reason = DegeneracyReason::IllConditioned;
    return x;
  }
  if (!o.accepted) {
    rep.outcome = UpdateReport::Outcome::Gated;
    return x;
  }
  rep.outcome = UpdateReport::Outcome::Accepted;
  out.renormalize_quaternions();
  return out;
}

StateEstimate process_flow_field(const StateEstimate& x, const FlowField& field,
                                 const CameraModel& cam, const GatingConfig& gate,
                                 const FlowFusionConfig& cfg, FieldReport* report) {
  gate.validate();
  FieldReport local;
  FieldReport& rep = report ? *report : local;
  rep = FieldReport{};

  // Deterministic row-major processing order.
  std::vector<int> order(field.points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const FlowPoint& pa = field.points[a];
    const FlowPoint& pb = field.points[b];
    if (pa.v1 != pb.v1) return pa.v1 < pb.v1;
    return pa.u1 < pb.u1;
  });

  // Stride so that at most max_points_per_update survive.
  std::size_t stride = static_cast<std::size_t>(std::max(gate.subsample_stride, 1));
  if (gate.max_points_per_update > 0) {
    const std::size_t strided = (order.size() + stride - 1) / stride;
    if (strided > static_cast<std::size_t>(gate.max_points_per_update)) {
      stride = (order.size() + gate.max_points_per_update - 1) /
               static_cast<std::size_t>(gate.max_points_per_update);
    }
  }

  StateEstimate state = x;
  for (std::size_t i = 0; i < order.size(); i += stride) {
    const int pi = order[i];
    UpdateReport ur;
    state = ekf_update_flow_point(state, field.points[pi], cam, gate, cfg, &ur);
    ++rep.considered;
    rep.point_index.push_back(pi);
    rep.outcome.push_back(ur.outcome);
    switch (ur.outcome) {
      case UpdateReport::Outcome::Accepted:
        ++rep.accepted;
        break;
      case UpdateReport::Outcome::Gated:
        ++rep.gated;
        break;
      case UpdateReport::Outcome::Degenerate:
        ++rep.degenerate;
        break;
    }
  }
  return state;
}

StateEstimate forget_pose(const StateEstimate& x, double sigma_p0, double sigma_q0) {
  StateEstimate out = x;
  out.m.segment<7>(idx::pm).setZero();
  out.P.block<7, kStateDim>(idx::pm, 0).setZero();
  out.P.block<kStateDim, 7>(0, idx::pm).setZero();
  out.P.block<3, 3>(idx::pm, idx::pm) = sigma_p0 * sigma_p0 * Eigen::Matrix3d::Identity();
  out.P.block<4, 4>(idx::qm, idx::qm) = sigma_q0 * sigma_q0 * Eigen::Matrix4d::Identity();
  return out;
}

StateEstimate augment_pose(const StateEstimate& x, double nugget) {
  // Equality measurement (p - p_minus, q - q_minus) = 0 in the
  // uninformative-prior limit of the forgotten block: the Kalman update
  // reduces to cloning the pose into the augmented slots with exact
  // cross-covariances. A finite-sigma evaluation would perturb the core
  // marginal at order |P|^2 / sigma^2, far above nugget scale. The
  // quaternion sign alignment is vacuous here (q_minus was zeroed by the
  // forgetting step).
  StateEstimate out = x;
  clone_pose_into_augmented(out, nugget);
  return out;
}

StateEstimate frame_pair_cycle(const StateEstimate& x, const FlowField& field,
                               const CameraModel& cam, const GatingConfig& gate,
                               const FlowFusionConfig& cfg, FieldReport* report) {
  StateEstimate state = process_flow_field(x, field, cam, gate, cfg, report);
  state = forget_pose(state, cfg.sigma_p0, cfg.sigma_q0);
  state = augment_pose(state, cfg.nugget);
  return state;
}

}  // namespace flowins
