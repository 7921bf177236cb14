#pragma once

#include <Eigen/Core>

#include "flowins/state.hpp"

namespace flowins {

struct GnssFix {
  double t{0.0};                ///< s
  double lat{0.0}, lon{0.0};    ///< deg
  double alt{0.0};              ///< m
  double accuracy_radius{1.0};  ///< m, ~95% horizontal bound

  void validate() const {
    if (std::abs(lat) > 90.0 || std::abs(lon) > 180.0)
      throw Error("GnssFix: coordinates out of range");
    if (!(accuracy_radius > 0.0)) throw Error("GnssFix: accuracy radius must be positive");
  }
};

/// Local tangent-plane anchor, fixed for a session.
struct EnuOrigin {
  double lat0{0.0}, lon0{0.0};  ///< deg
  double alt0{0.0};             ///< m
};

/// Spherical-Earth local tangent conversion. Adequate at walking-loop scale
/// where ellipsoidal corrections stay below a centimeter.
Eigen::Vector3d wgs_to_enu(const GnssFix& fix, const EnuOrigin& origin);

/// Inverse of wgs_to_enu (used by the synthetic data generator).
GnssFix enu_to_wgs(double t, const Eigen::Vector3d& enu, double accuracy_radius,
                   const EnuOrigin& origin);

struct GnssUpdateConfig {
  bool horizontal_only{false};
  double chi2_threshold_3d{7.815};  ///< chi-square, 3 dof, 95%
  double chi2_threshold_2d{5.991};  ///< chi-square, 2 dof, 95%
  double altitude_sigma_factor{3.0};
};

struct GnssUpdateResult {
  StateEstimate state;
  bool accepted{false};
  double chi2{0.0};
};

/// Position measurement update in ENU. The accuracy radius is read as a
/// 2-sigma horizontal bound (sigma = radius / 2), altitude noise inflated by
/// altitude_sigma_factor. Joseph form, chi-square gated.
GnssUpdateResult ekf_update_gnss(const StateEstimate& x, const GnssFix& fix,
                                 const EnuOrigin& origin, const GnssUpdateConfig& cfg = {});

}  // namespace flowins
