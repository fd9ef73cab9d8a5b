#pragma once

#include "dfcausal/common.hpp"
#include "dfcausal/gaussian_engine.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dfc {

enum class WindowShape { Uniform, Gaussian };

[[nodiscard]] std::string to_string(WindowShape shape);
[[nodiscard]] WindowShape window_shape_from_string(const std::string& text);

/// x_{n-lag, component} is held near `target` by a window of standard deviation window_sd.
/// A uniform window has half-width window_sd * sqrt(3).
struct PastConstraint {
  int lag = 1;
  int component = 0;
  double target = 0.0;
  double window_sd = 0.0;
  WindowShape shape = WindowShape::Gaussian;
  bool operator==(const PastConstraint&) const = default;
};

struct ConstraintSet {
  std::vector<PastConstraint> constraints;

  [[nodiscard]] std::size_t size() const { return constraints.size(); }
  [[nodiscard]] bool empty() const { return constraints.empty(); }
  [[nodiscard]] int max_lag() const;
  [[nodiscard]] Vector targets() const;
  /// lag >= 1, component in range, window_sd >= 0 (or > 0 when require_positive_window),
  /// no repeated (lag, component) pair.
  void validate(int d, bool require_positive_window) const;
  bool operator==(const ConstraintSet&) const = default;
};

struct BackwardMap {
  Matrix H;               ///< Q^{-1}
  double condition_number;  ///< 2-norm condition number of Q
};

/// H = Q^{-1}. Rejects Q with condition number above 1e12.
[[nodiscard]] BackwardMap backward_map(const LinearSystemSpec& spec);

struct PastConstraintMatrices {
  Matrix R;       ///< row (k, a) is row a of H^k
  Matrix C_zeta;  ///< covariance of the accumulated backward noise
  Matrix C_K;     ///< C_zeta + diag(window_sd^2)
};

/// Backward-noise covariance: C_zeta[(k,a),(l,b)] = sum_{m<min(k,l)} (H^{k-m} S S^T H^{T,l-m})_{ab}.
[[nodiscard]] PastConstraintMatrices past_constraint_matrices(const LinearSystemSpec& spec,
                                                              const ConstraintSet& cs);

/// Present-state belief from the backward-map formulation:
/// C_x^{-1} = C^{-1} + R^T C_K^{-1} R and mean = C_x R^T C_K^{-1} z.
/// A singular C_K is handed to degenerate_condition.
[[nodiscard]] GaussianBelief constrained_present(const LinearSystemSpec& spec,
                                                 const ConstraintSet& cs);

/// Exact Gaussian conditioning of x_n on the windowed past coordinates, using only
/// stationarity: Cov(x_n, x_{n-k}) = Q^k C. Uniform windows enter through their variance.
[[nodiscard]] GaussianBelief exact_joint_conditioning(const LinearSystemSpec& spec,
                                                      const ConstraintSet& cs);

/// Same, with a precomputed stationary covariance.
[[nodiscard]] GaussianBelief exact_joint_conditioning(const LinearSystemSpec& spec,
                                                      const Matrix& C, const ConstraintSet& cs);

struct McOptions {
  unsigned workers = 0;
  int bootstrap_resamples = 200;
  double min_effective = 100.0;
};

struct McEstimate {
  Vector mean;
  Matrix cov;
  Vector mean_se;
  Matrix cov_se;
  double effective_count = 0.0;  ///< Kish effective sample size of the weights
  std::size_t retained = 0;      ///< samples with nonzero weight
};

/// Monte Carlo oracle. Each sample draws x_{n-K} from the stationary law, runs K
/// steps of the recursion, and weights x_n by the window criterion on the lagged
/// coordinates (indicator for uniform windows, Gaussian weight otherwise).
/// Samples are generated in fixed chunks with derived seeds and merged in chunk
/// order, so the result does not depend on the worker count.
[[nodiscard]] McEstimate mc_conditional(const LinearSystemSpec& spec, const ConstraintSet& cs,
                                        std::size_t n_samples, std::uint64_t seed,
                                        const McOptions& options = {});

struct CrossCheckRow {
  std::string lag_set;  ///< for example "1-2"
  double sigma_w;
  double max_rel_diff_cov;
  double rel_diff_mean;
};

/// Compares constrained_present with exact_joint_conditioning. For each max lag L in
/// `max_lags` every component of `components` is constrained at lags 1..L with the
/// given targets (one per component).
[[nodiscard]] std::vector<CrossCheckRow> cross_check(const LinearSystemSpec& spec,
                                                     const std::vector<int>& components,
                                                     const std::vector<double>& targets,
                                                     const std::vector<int>& max_lags,
                                                     const std::vector<double>& sigma_ws);

}  // namespace dfc
