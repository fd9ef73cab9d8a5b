#pragma once

#include "dfcausal/common.hpp"
#include "dfcausal/time_series.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dfc {

/// The linear recursion x_n = Q x_{n-1} + S xi_n with named components and groups.
///
/// validate() checks shapes and the subsystem partition. Stability is checked by
/// every operation that needs it (stationary covariance, sampling, the example
/// builder and JSON loading), so an unstable spec can be held and reported on.
struct LinearSystemSpec {
  Matrix Q;
  Matrix S;
  std::vector<std::string> names;
  std::vector<Subsystem> subsystems;

  [[nodiscard]] int dim() const { return static_cast<int>(Q.rows()); }
  void validate() const;
};

/// How the z subsystem feeds x and y in the example system.
enum class Coupling {
  Matched,         ///< z_0 -> (x_0, y_0) and z_1 -> (x_1, y_1): a full-rank drive
  FirstComponent,  ///< z_0 -> all four x and y components (single nonzero column)
};

struct ExampleParams {
  double sigma = 0.01;
  double phi_x = 0.5;
  double phi_y = 0.3;
  double phi_z = 0.4;
  double alpha_x = 1.0 - 1e-4;
  double alpha_y = 1.0 - 1e-4;
  double alpha_z = 1.0 - 1e-4;
  double g = 0.1;
  Coupling coupling = Coupling::Matched;

  [[nodiscard]] static ExampleParams stochastic();
  [[nodiscard]] static ExampleParams deterministic();
  /// "stochastic" or "deterministic"; anything else is a usage error.
  [[nodiscard]] static ExampleParams preset(const std::string& name);

  void validate() const;
};

struct GaussianBelief {
  Vector mean;
  Matrix cov;

  /// Symmetry to 1e-12 relative and eigenvalues >= -1e-10 * largest.
  void check() const;
};

struct LinearObservation {
  Matrix R;          ///< M x d constraint rows
  Vector z;          ///< M targets
  Matrix noise_cov;  ///< M x M, the combined intrinsic plus window covariance
};

[[nodiscard]] LinearSystemSpec build_example_system(const ExampleParams& params);

/// Largest eigenvalue magnitude.
[[nodiscard]] double spectral_radius(const Matrix& Q);

/// Throws Divergence (naming the offending magnitude) unless spectral_radius(Q) < 1.
void require_stable(const Matrix& Q, ErrorKind kind = ErrorKind::Divergence);

/// Solves C = Q C Q^T + S S^T.
///
/// Uses the doubling form of the fixed-point iteration: after k rounds the
/// iterate equals the series sum over the first 2^k terms of Q^n S S^T Q^T^n,
/// so slow modes (|lambda| close to 1) converge in tens of rounds instead of
/// millions. Stops when the relative change falls below 1e-14.
[[nodiscard]] Matrix stationary_covariance(const LinearSystemSpec& spec);

/// Residual ||C - Q C Q^T - S S^T||_max / ||C||_max.
[[nodiscard]] double lyapunov_residual(const LinearSystemSpec& spec, const Matrix& C);

/// Information-form update C_x^{-1} = C^{-1} + R^T N^{-1} R, mean = C_x R^T N^{-1} z.
[[nodiscard]] GaussianBelief condition_on_linear_observation(const Matrix& prior_cov,
                                                             const LinearObservation& obs);

/// Same update with the intrinsic and window covariances passed separately.
/// Only their sum enters, so swapping the two gives a bit-identical result.
[[nodiscard]] GaussianBelief condition_on_linear_observation(const Matrix& prior_cov,
                                                             const Matrix& R, const Vector& z,
                                                             const Matrix& intrinsic_cov,
                                                             const Matrix& window_cov);

/// Sharp-constraint limit R x = z.
///
/// With K = C R^T (R C R^T)^{-1} the result is mean = K z and cov = P C P^T,
/// where P = I - K R is the projector that annihilates the constraint rows
/// (R P = 0) along the directions C R^T. For C = I this is the orthogonal
/// projector and mean = R^T (R R^T)^{-1} z.
[[nodiscard]] GaussianBelief degenerate_condition(const Matrix& prior_cov, const Matrix& R,
                                                  const Vector& z);

/// Simulates n_steps after discarding burn_in steps from x = 0. Deterministic given seed.
[[nodiscard]] TimeSeries sample_trajectory(const LinearSystemSpec& spec, std::size_t n_steps,
                                           std::uint64_t seed, std::size_t burn_in = 10000);

/// Inverse of SPD matrix A. Uses Cholesky; if the condition number exceeds 1e12
/// (or the factorization fails) falls back to an eigenvalue-clipped pseudo-inverse
/// and emits a warning naming `what`.
[[nodiscard]] Matrix spd_inverse(const Matrix& A, const std::string& what);

}  // namespace dfc
