#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dfc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Failure categories. The CLI maps each one onto a fixed exit code.
enum class ErrorKind {
  Usage,             ///< malformed request (bad flag, bad config field)
  Precondition,      ///< input violates a documented precondition
  Divergence,        ///< unstable dynamics, series does not converge
  InsufficientData,  ///< too few samples survive selection
  Ambiguous,         ///< estimation finished but cannot commit to an answer
  Io,                ///< file could not be read or written
  Parse,             ///< file content could not be interpreted
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by Monte Carlo and spread estimators when selection leaves too few samples.
class InsufficientDataError : public Error {
 public:
  InsufficientDataError(const std::string& what, double effective_count)
      : Error(ErrorKind::InsufficientData, what), effective_count_(effective_count) {}
  [[nodiscard]] double effective_count() const noexcept { return effective_count_; }

 private:
  double effective_count_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

/// Warnings (for example a pseudo-inverse fallback) go through a replaceable sink.
/// The default sink writes one line to stderr.
using WarningSink = std::function<void(const std::string&)>;
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

/// A named group of component indices (for example "x" -> {0, 1}).
struct Subsystem {
  std::string name;
  std::vector<int> components;
  bool operator==(const Subsystem&) const = default;
};

/// Checks that groups are disjoint, in range and (if `require_cover`) cover 0..d-1.
void validate_subsystems(int d, const std::vector<Subsystem>& groups, bool require_cover);

[[nodiscard]] const Subsystem& find_subsystem(const std::vector<Subsystem>& groups,
                                              const std::string& name);

/// Runs fn(i) for i in [0, n) on up to `workers` threads (0 means hardware concurrency).
/// Each index is processed exactly once; the first exception is rethrown on the caller.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

[[nodiscard]] unsigned default_workers();

/// Formats a double with 12 significant digits in a locale independent way.
[[nodiscard]] std::string format_number(double value);

}  // namespace dfc
