#include "dfcausal/time_series.hpp"

namespace dfc {

void TimeSeries::validate() const {
  const auto d = static_cast<int>(values.cols());
  if (d == 0) fail(ErrorKind::Precondition, "time series has no components");
  if (names.size() != static_cast<std::size_t>(d))
    fail(ErrorKind::Precondition, "time series has " + std::to_string(d) + " columns but " +
                                      std::to_string(names.size()) + " names");
  if (!values.allFinite()) {
    for (Eigen::Index r = 0; r < values.rows(); ++r)
      for (Eigen::Index c = 0; c < values.cols(); ++c)
        if (!std::isfinite(values(r, c)))
          fail(ErrorKind::Precondition, "non-finite value at row " + std::to_string(r) +
                                            ", column '" + names[static_cast<std::size_t>(c)] + "'");
  }
  validate_subsystems(d, subsystems, false);
}

std::vector<std::string> default_names(int d) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) out.push_back("c" + std::to_string(i));
  return out;
}

}  // namespace dfc
