#pragma once

#include <cstdint>
#include <vector>

#include "flowins/errors.hpp"

namespace flowins {

enum class FlowProvenance : std::uint8_t {
  dense_network,     ///< full per-pixel field from a flow network
  sparse_subsample,  ///< strongest-parallax subset of a dense field
  synthetic,         ///< projected from the simulator world
};

/// One flow observation: pixel location in frame 1, flow to frame 2, and
/// per-component variances.
struct FlowPoint {
  double u1{0.0}, v1{0.0};        ///< px
  double du{0.0}, dv{0.0};        ///< px
  double var_du{1.0}, var_dv{1.0};  ///< px^2
};

/// Flow observations for one frame pair.
struct FlowField {
  double t1{0.0}, t2{0.0};  ///< s
  int width{0}, height{0};  ///< px
  std::vector<FlowPoint> points;
  FlowProvenance provenance{FlowProvenance::synthetic};

  void validate() const {
    if (!(t2 > t1)) throw Error("FlowField: t2 must be after t1");
    for (const FlowPoint& p : points) {
      if (p.u1 < 0.0 || p.u1 >= width || p.v1 < 0.0 || p.v1 >= height)
        throw Error("FlowField: point outside image bounds");
      if (!(p.var_du > 0.0) || !(p.var_dv > 0.0))
        throw Error("FlowField: variances must be positive");
    }
  }
};

/// Innovation-gate and point-budget settings for per-point flow updates.
struct GatingConfig {
  double chi2_threshold{5.991};   ///< chi-square, 2 dof, 95%
  int max_points_per_update{200};
  int subsample_stride{1};

  void validate() const {
    if (!(chi2_threshold > 0.0)) throw Error("GatingConfig: chi2 threshold must be positive");
    if (subsample_stride < 1) throw Error("GatingConfig: stride must be >= 1");
  }
};

}  // namespace flowins
