#pragma once

#include <string>
#include <vector>

#include "flowins/state.hpp"

namespace flowins {

/// Time-stamped sequence of state means (and optionally covariances), used
/// for filter/smoother outputs and simulated ground truth.
struct TrajectoryEstimate {
  std::vector<double> t;
  std::vector<StateVector> mean;
  std::vector<StateMatrix> cov;  ///< may be empty
  std::string label;

  std::size_t size() const { return t.size(); }

  void validate() const {
    if (mean.size() != t.size()) throw Error("TrajectoryEstimate: size mismatch");
    for (std::size_t i = 1; i < t.size(); ++i)
      if (!(t[i] > t[i - 1])) throw Error("TrajectoryEstimate: timestamps not increasing");
  }

  Eigen::Vector3d position(std::size_t i) const { return mean[i].segment<3>(idx::p); }
};

}  // namespace flowins
