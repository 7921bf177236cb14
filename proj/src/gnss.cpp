#include "flowins/gnss.hpp"

#include <cmath>

#include "flowins/kalman.hpp"

namespace flowins {

namespace {
constexpr double kEarthRadius = 6371000.0;  // m, spherical model
constexpr double kDegToRad = M_PI / 180.0;
}  // namespace

Eigen::Vector3d wgs_to_enu(const GnssFix& fix, const EnuOrigin& origin) {
  const double east =
      (fix.lon - origin.lon0) * kDegToRad * kEarthRadius * std::cos(origin.lat0 * kDegToRad);
  const double north = (fix.lat - origin.lat0) * kDegToRad * kEarthRadius;
  const double up = fix.alt - origin.alt0;
  return {east, north, up};
}

GnssFix enu_to_wgs(double t, const Eigen::Vector3d& enu, double accuracy_radius,
                   const EnuOrigin& origin) {
  GnssFix fix;
  fix.t = t;
  fix.lat = origin.lat0 + enu.y() / (kEarthRadius * kDegToRad);
  fix.lon = origin.lon0 + enu.x() / (kEarthRadius * kDegToRad * std::cos(origin.lat0 * kDegToRad));
  fix.alt = origin.alt0 + enu.z();
  fix.accuracy_radius = accuracy_radius;
  return fix;
}

GnssUpdateResult ekf_update_gnss(const StateEstimate& x, const GnssFix& fix,
                                 const EnuOrigin& origin, const GnssUpdateConfig& cfg) {
  fix.validate();
  GnssUpdateResult res;
  res.state = x;

  const Eigen::Vector3d y = wgs_to_enu(fix, origin);
  const double sigma = fix.accuracy_radius / 2.0;

  if (cfg.horizontal_only) {
    Eigen::Matrix<double, 2, kStateDim> H = Eigen::Matrix<double, 2, kStateDim>::Zero();
    H(0, idx::p) = 1.0;
    H(1, idx::p + 1) = 1.0;
    const Eigen::Matrix2d R = sigma * sigma * Eigen::Matrix2d::Identity();
    const Eigen::Vector2d v = y.head<2>() - x.m.segment<2>(idx::p);
    const UpdateOutcome o = joseph_update<2>(res.state, H, R, v, cfg.chi2_threshold_2d);
    res.accepted = o.accepted;
    res.chi2 = o.chi2;
  } else {
    Eigen::Matrix<double, 3, kStateDim> H = Eigen::Matrix<double, 3, kStateDim>::Zero();
    H(0, idx::p) = 1.0;
    H(1, idx::p + 1) = 1.0;
    H(2, idx::p + 2) = 1.0;
    Eigen::Matrix3d R = sigma * sigma * Eigen::Matrix3d::Identity();
    R(2, 2) *= cfg.altitude_sigma_factor * cfg.altitude_sigma_factor;
    const Eigen::Vector3d v = y - x.m.segment<3>(idx::p);
    const UpdateOutcome o = joseph_update<3>(res.state, H, R, v, cfg.chi2_threshold_3d);
    res.accepted = o.accepted;
    res.chi2 = o.chi2;
  }
  return res;
}

}  // namespace flowins
