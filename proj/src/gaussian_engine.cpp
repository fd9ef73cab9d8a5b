#include "dfcausal/gaussian_engine.hpp"

#include "dfcausal/rng.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace dfc {

namespace {

double max_abs(const Matrix& A) { return A.size() == 0 ? 0.0 : A.cwiseAbs().maxCoeff(); }

Matrix symmetrize(const Matrix& A) { return 0.5 * (A + A.transpose()); }

void require_square(const Matrix& A, const char* what) {
  if (A.rows() != A.cols())
    fail(ErrorKind::Precondition, std::string(what) + " must be square, got " +
                                      std::to_string(A.rows()) + "x" + std::to_string(A.cols()));
}

void require_finite(const Matrix& A, const char* what) {
  if (!A.allFinite()) fail(ErrorKind::Precondition, std::string(what) + " has non-finite entries");
}

}  // namespace

void LinearSystemSpec::validate() const {
  require_square(Q, "Q");
  if (Q.rows() == 0) fail(ErrorKind::Precondition, "Q is empty");
  if (S.rows() != Q.rows())
    fail(ErrorKind::Precondition, "S must have " + std::to_string(Q.rows()) + " rows, got " +
                                      std::to_string(S.rows()));
  require_finite(Q, "Q");
  require_finite(S, "S");
  if (names.size() != static_cast<std::size_t>(Q.rows()))
    fail(ErrorKind::Precondition, "expected " + std::to_string(Q.rows()) + " component names");
  // Groups are optional; when present they must partition the components.
  validate_subsystems(dim(), subsystems, !subsystems.empty());
}

ExampleParams ExampleParams::stochastic() { return ExampleParams{}; }

ExampleParams ExampleParams::deterministic() {
  ExampleParams p;
  p.sigma = 5e-4;
  p.alpha_x = p.alpha_y = p.alpha_z = 1.0 - 1e-6;
  p.g = 0.3;
  return p;
}

ExampleParams ExampleParams::preset(const std::string& name) {
  if (name == "stochastic") return stochastic();
  if (name == "deterministic") return deterministic();
  fail(ErrorKind::Usage, "unknown preset '" + name + "' (expected stochastic or deterministic)");
}

void ExampleParams::validate() const {
  const std::pair<const char*, double> alphas[] = {
      {"alpha_x", alpha_x}, {"alpha_y", alpha_y}, {"alpha_z", alpha_z}};
  for (const auto& [name, a] : alphas)
    if (!(a > 0.0 && a < 1.0))
      fail(ErrorKind::Precondition, std::string(name) + " must lie in (0, 1), got " +
                                        format_number(a));
  for (double v : {sigma, phi_x, phi_y, phi_z, g})
    if (!std::isfinite(v)) fail(ErrorKind::Precondition, "example parameters must be finite");
  if (!(sigma > 0.0)) fail(ErrorKind::Precondition, "sigma must be positive");
}

void GaussianBelief::check() const {
  const Eigen::Index d = cov.rows();
  if (cov.cols() != d || mean.size() != d)
    fail(ErrorKind::Precondition, "belief mean/cov dimensions disagree");
  if (!cov.allFinite() || !mean.allFinite())
    fail(ErrorKind::Precondition, "belief has non-finite entries");
  if (d == 0) return;
  const double scale = max_abs(cov);
  if (max_abs(cov - cov.transpose()) > 1e-12 * scale)
    fail(ErrorKind::Precondition, "belief covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(cov), Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  if (ev.minCoeff() < -1e-10 * std::max(ev.maxCoeff(), 0.0))
    fail(ErrorKind::Precondition, "belief covariance is not positive semidefinite (min eigenvalue " +
                                      format_number(ev.minCoeff()) + ")");
}

LinearSystemSpec build_example_system(const ExampleParams& p) {
  p.validate();
  Matrix Q = Matrix::Zero(6, 6);
  const double angles[3] = {p.phi_x, p.phi_y, p.phi_z};
  const double alphas[3] = {p.alpha_x, p.alpha_y, p.alpha_z};
  for (int b = 0; b < 3; ++b) {
    const double c = alphas[b] * std::cos(angles[b]);
    const double s = alphas[b] * std::sin(angles[b]);
    Q(2 * b, 2 * b) = c;
    Q(2 * b, 2 * b + 1) = -s;
    Q(2 * b + 1, 2 * b) = s;
    Q(2 * b + 1, 2 * b + 1) = c;
  }
  if (p.coupling == Coupling::Matched) {
    Q(0, 4) = Q(2, 4) = p.g;
    Q(1, 5) = Q(3, 5) = p.g;
  } else {
    for (int r = 0; r < 4; ++r) Q(r, 4) = p.g;
  }
  LinearSystemSpec spec;
  spec.Q = Q;
  spec.S = p.sigma * Matrix::Identity(6, 6);
  spec.names = {"x0", "x1", "y0", "y1", "z0", "z1"};
  spec.subsystems = {{"x", {0, 1}}, {"y", {2, 3}}, {"z", {4, 5}}};
  require_stable(spec.Q, ErrorKind::Precondition);
  return spec;
}

double spectral_radius(const Matrix& Q) {
  require_square(Q, "Q");
  if (Q.rows() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(Q, false);
  if (es.info() != Eigen::Success) fail(ErrorKind::Precondition, "eigenvalue computation failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

void require_stable(const Matrix& Q, ErrorKind kind) {
  const double rho = spectral_radius(Q);
  if (!(rho < 1.0)) {
    std::ostringstream os;
    os.precision(17);
    os << "unstable dynamics: spectral radius of Q is " << rho
       << " (an eigenvalue has magnitude >= 1, so the stationary covariance diverges)";
    fail(kind, os.str());
  }
}

Matrix stationary_covariance(const LinearSystemSpec& spec) {
  spec.validate();
  require_stable(spec.Q, ErrorKind::Divergence);
  const Matrix P = spec.S * spec.S.transpose();
  Matrix C = P;
  Matrix A = spec.Q;
  // Round k adds the terms 2^k .. 2^{k+1}-1 of the series: C <- C + A C A^T, A <- A^2.
  for (int round = 0; round < 200; ++round) {
    const Matrix increment = A * C * A.transpose();
    C += increment;
    A = A * A;
    const double change = max_abs(increment);
    if (change == 0.0 || change < 1e-14 * max_abs(C)) return symmetrize(C);
  }
  fail(ErrorKind::Divergence, "stationary covariance series did not converge in 2^200 terms");
}

double lyapunov_residual(const LinearSystemSpec& spec, const Matrix& C) {
  const Matrix r = C - spec.Q * C * spec.Q.transpose() - spec.S * spec.S.transpose();
  const double scale = max_abs(C);
  return scale == 0.0 ? max_abs(r) : max_abs(r) / scale;
}

Matrix spd_inverse(const Matrix& A, const std::string& what) {
  const Eigen::Index n = A.rows();
  if (n == 0) return Matrix(0, 0);
  const Matrix sym = symmetrize(A);
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  const Vector& ev = es.eigenvalues();
  const double top = ev.maxCoeff();
  const double bottom = ev.minCoeff();
  if (top > 0.0 && bottom > 0.0 && top / bottom <= 1e12) {
    Eigen::LLT<Matrix> llt(sym);
    if (llt.info() == Eigen::Success) return symmetrize(llt.solve(Matrix::Identity(n, n)));
  }
  warn(what + ": condition number " + format_number(bottom > 0.0 ? top / bottom : INFINITY) +
       " exceeds 1e12, using eigenvalue-clipped pseudo-inverse");
  Vector inv = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (ev(i) > 1e-12 * top) inv(i) = 1.0 / ev(i);
  const Matrix& V = es.eigenvectors();
  return symmetrize(V * inv.asDiagonal() * V.transpose());
}

namespace {

// Smallest over largest eigenvalue of a symmetric matrix (<= 0 means singular or indefinite).
double inverse_condition(const Matrix& A) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(A), Eigen::EigenvaluesOnly);
  const double top = es.eigenvalues().maxCoeff();
  if (!(top > 0.0)) return 0.0;
  return es.eigenvalues().minCoeff() / top;
}

}  // namespace

GaussianBelief condition_on_linear_observation(const Matrix& prior_cov,
                                               const LinearObservation& obs) {
  require_square(prior_cov, "prior covariance");
  const Eigen::Index d = prior_cov.rows();
  const Eigen::Index M = obs.R.rows();
  if (M == 0) return {Vector::Zero(d), prior_cov};
  if (obs.R.cols() != d || obs.z.size() != M || obs.noise_cov.rows() != M ||
      obs.noise_cov.cols() != M)
    fail(ErrorKind::Precondition, "observation dimensions do not match the prior");
  for (Eigen::Index i = 0; i < M; ++i)
    if (obs.R.row(i).cwiseAbs().maxCoeff() == 0.0)
      fail(ErrorKind::Precondition, "constraint row " + std::to_string(i) + " is zero");
  if (inverse_condition(prior_cov) <= 1e-15)
    fail(ErrorKind::Precondition, "prior covariance is singular or not positive definite");
  if (inverse_condition(obs.noise_cov) <= 1e-15)
    fail(ErrorKind::Precondition,
         "observation noise covariance is singular; use degenerate_condition for sharp constraints");
  const Matrix prior_inv = spd_inverse(prior_cov, "prior covariance");
  const Matrix noise_inv = spd_inverse(obs.noise_cov, "observation noise covariance");
  const Matrix RtNinv = obs.R.transpose() * noise_inv;
  const Matrix precision = prior_inv + RtNinv * obs.R;
  GaussianBelief out;
  out.cov = spd_inverse(precision, "posterior precision");
  out.mean = out.cov * (RtNinv * obs.z);
  return out;
}

GaussianBelief condition_on_linear_observation(const Matrix& prior_cov, const Matrix& R,
                                               const Vector& z, const Matrix& intrinsic_cov,
                                               const Matrix& window_cov) {
  if (intrinsic_cov.rows() != window_cov.rows() || intrinsic_cov.cols() != window_cov.cols())
    fail(ErrorKind::Precondition, "intrinsic and window covariances differ in shape");
  return condition_on_linear_observation(prior_cov, LinearObservation{R, z, intrinsic_cov + window_cov});
}

GaussianBelief degenerate_condition(const Matrix& prior_cov, const Matrix& R, const Vector& z) {
  require_square(prior_cov, "prior covariance");
  const Eigen::Index d = prior_cov.rows();
  const Eigen::Index M = R.rows();
  if (M == 0) return {Vector::Zero(d), prior_cov};
  if (R.cols() != d || z.size() != M)
    fail(ErrorKind::Precondition, "constraint dimensions do not match the prior");
  if (M > d)
    fail(ErrorKind::Precondition, "more constraint rows (" + std::to_string(M) +
                                      ") than state dimensions (" + std::to_string(d) + ")");
  Eigen::JacobiSVD<Matrix> svd(R);
  const Vector& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(M - 1) < 1e-12 * sv(0))
    fail(ErrorKind::Precondition, "constraint rows are linearly dependent");
  const Matrix CRt = prior_cov * R.transpose();
  const Matrix G = R * CRt;
  Eigen::LDLT<Matrix> ldlt(symmetrize(G));
  if (ldlt.info() != Eigen::Success || inverse_condition(G) <= 1e-15)
    fail(ErrorKind::Precondition, "prior covariance is singular along the constraint rows");
  const Matrix K = ldlt.solve(CRt.transpose()).transpose();  // C R^T G^{-1}
  const Matrix P = Matrix::Identity(d, d) - K * R;
  GaussianBelief out;
  out.mean = K * z;
  out.cov = symmetrize(P * prior_cov * P.transpose());
  return out;
}

TimeSeries sample_trajectory(const LinearSystemSpec& spec, std::size_t n_steps, std::uint64_t seed,
                             std::size_t burn_in) {
  spec.validate();
  if (n_steps == 0) fail(ErrorKind::Precondition, "n_steps must be positive");
  require_stable(spec.Q, ErrorKind::Precondition);
  const Eigen::Index d = spec.Q.rows();
  const Eigen::Index m = spec.S.cols();
  Rng rng(seed);

  // Start from a draw of the stationary law so slow modes need no long transient.
  const Matrix C = stationary_covariance(spec);
  Eigen::SelfAdjointEigenSolver<Matrix> es(C);
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Vector u(d);
  for (Eigen::Index i = 0; i < d; ++i) u(i) = rng.normal();
  Vector x = es.eigenvectors() * root.cwiseProduct(u);

  TimeSeries ts;
  ts.values.resize(static_cast<Eigen::Index>(n_steps), d);
  ts.names = spec.names;
  ts.subsystems = spec.subsystems;
  Vector xi(m), next(d);
  const std::size_t total = burn_in + n_steps;
  for (std::size_t t = 0; t < total; ++t) {
    for (Eigen::Index i = 0; i < m; ++i) xi(i) = rng.normal();
    next.noalias() = spec.Q * x;
    next.noalias() += spec.S * xi;
    x.swap(next);
    if (t >= burn_in) ts.values.row(static_cast<Eigen::Index>(t - burn_in)) = x.transpose();
  }
  return ts;
}

}  // namespace dfc
