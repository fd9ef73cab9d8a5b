#pragma once

#include "dfcausal/common.hpp"

#include <string>
#include <vector>

namespace dfc {

/// Sampled multivariate observations: one row per time step, one column per component.
struct TimeSeries {
  Matrix values;
  std::vector<std::string> names;
  std::vector<Subsystem> subsystems;

  [[nodiscard]] Eigen::Index length() const { return values.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return values.cols(); }

  /// Shape, finiteness and subsystem checks. Length limits are enforced by the estimators.
  void validate() const;

  [[nodiscard]] const Subsystem& group(const std::string& name) const {
    return find_subsystem(subsystems, name);
  }
};

/// Default names c0..c(d-1).
[[nodiscard]] std::vector<std::string> default_names(int d);

}  // namespace dfc
