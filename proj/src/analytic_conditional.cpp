#include "dfcausal/analytic_conditional.hpp"

#include "dfcausal/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

namespace dfc {

std::string to_string(WindowShape shape) {
  return shape == WindowShape::Uniform ? "uniform" : "gaussian";
}

WindowShape window_shape_from_string(const std::string& text) {
  if (text == "uniform") return WindowShape::Uniform;
  if (text == "gaussian") return WindowShape::Gaussian;
  fail(ErrorKind::Usage, "unknown window shape '" + text + "' (expected uniform or gaussian)");
}

int ConstraintSet::max_lag() const {
  int k = 0;
  for (const auto& c : constraints) k = std::max(k, c.lag);
  return k;
}

Vector ConstraintSet::targets() const {
  Vector z(static_cast<Eigen::Index>(constraints.size()));
  for (std::size_t i = 0; i < constraints.size(); ++i)
    z(static_cast<Eigen::Index>(i)) = constraints[i].target;
  return z;
}

void ConstraintSet::validate(int d, bool require_positive_window) const {
  std::set<std::pair<int, int>> seen;
  for (const auto& c : constraints) {
    const std::string where =
        "constraint (lag " + std::to_string(c.lag) + ", component " + std::to_string(c.component) + ")";
    if (c.lag < 1) fail(ErrorKind::Precondition, where + ": lag must be >= 1");
    if (c.component < 0 || c.component >= d)
      fail(ErrorKind::Precondition, where + ": component out of range");
    if (!std::isfinite(c.target)) fail(ErrorKind::Precondition, where + ": target must be finite");
    if (!std::isfinite(c.window_sd) || c.window_sd < 0.0 ||
        (require_positive_window && c.window_sd == 0.0))
      fail(ErrorKind::Precondition, where + (require_positive_window
                                                 ? ": window_sd must be positive"
                                                 : ": window_sd must be non-negative"));
    if (!seen.emplace(c.lag, c.component).second)
      fail(ErrorKind::Precondition, where + " appears twice");
  }
}

BackwardMap backward_map(const LinearSystemSpec& spec) {
  spec.validate();
  Eigen::JacobiSVD<Matrix> svd(spec.Q);
  const Vector& sv = svd.singularValues();
  const double smallest = sv(sv.size() - 1);
  const double cond = smallest > 0.0 ? sv(0) / smallest : INFINITY;
  if (!(cond <= 1e12))
    fail(ErrorKind::Precondition, "Q is numerically singular (condition number " +
                                      format_number(cond) +
                                      "); the dynamics are not reversible, so no backward map exists");
  return {spec.Q.fullPivLu().inverse(), cond};
}

namespace {

std::vector<Matrix> powers(const Matrix& A, int up_to) {
  std::vector<Matrix> p;
  p.reserve(static_cast<std::size_t>(up_to) + 1);
  p.push_back(Matrix::Identity(A.rows(), A.cols()));
  for (int k = 1; k <= up_to; ++k) p.push_back(p.back() * A);
  return p;
}

double max_abs(const Matrix& A) { return A.size() == 0 ? 0.0 : A.cwiseAbs().maxCoeff(); }

bool is_singular(const Matrix& A) {
  if (A.rows() == 0) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (A + A.transpose()), Eigen::EigenvaluesOnly);
  const double top = es.eigenvalues().maxCoeff();
  return !(top > 0.0) || es.eigenvalues().minCoeff() <= 1e-15 * top;
}

}  // namespace

PastConstraintMatrices past_constraint_matrices(const LinearSystemSpec& spec,
                                                const ConstraintSet& cs) {
  spec.validate();
  cs.validate(spec.dim(), false);
  const auto d = static_cast<Eigen::Index>(spec.dim());
  const auto M = static_cast<Eigen::Index>(cs.size());
  PastConstraintMatrices out{Matrix(M, d), Matrix::Zero(M, M), Matrix::Zero(M, M)};
  if (M == 0) return out;
  const Matrix H = backward_map(spec).H;
  const auto Hp = powers(H, cs.max_lag());
  const Matrix P = spec.S * spec.S.transpose();
  for (Eigen::Index i = 0; i < M; ++i) {
    const auto& ci = cs.constraints[static_cast<std::size_t>(i)];
    out.R.row(i) = Hp[static_cast<std::size_t>(ci.lag)].row(ci.component);
  }
  for (Eigen::Index i = 0; i < M; ++i) {
    const auto& ci = cs.constraints[static_cast<std::size_t>(i)];
    for (Eigen::Index j = i; j < M; ++j) {
      const auto& cj = cs.constraints[static_cast<std::size_t>(j)];
      double sum = 0.0;
      for (int m = 0; m < std::min(ci.lag, cj.lag); ++m) {
        const Matrix& Hk = Hp[static_cast<std::size_t>(ci.lag - m)];
        const Matrix& Hl = Hp[static_cast<std::size_t>(cj.lag - m)];
        sum += Hk.row(ci.component) * P * Hl.row(cj.component).transpose();
      }
      out.C_zeta(i, j) = out.C_zeta(j, i) = sum;
    }
  }
  out.C_K = out.C_zeta;
  for (Eigen::Index i = 0; i < M; ++i) {
    const double w = cs.constraints[static_cast<std::size_t>(i)].window_sd;
    out.C_K(i, i) += w * w;
  }
  return out;
}

GaussianBelief constrained_present(const LinearSystemSpec& spec, const ConstraintSet& cs) {
  const Matrix C = stationary_covariance(spec);
  if (cs.empty()) return {Vector::Zero(C.rows()), C};
  const auto mats = past_constraint_matrices(spec, cs);
  const Vector z = cs.targets();
  if (is_singular(mats.C_K)) return degenerate_condition(C, mats.R, z);
  return condition_on_linear_observation(C, LinearObservation{mats.R, z, mats.C_K});
}

GaussianBelief exact_joint_conditioning(const LinearSystemSpec& spec, const ConstraintSet& cs) {
  return exact_joint_conditioning(spec, stationary_covariance(spec), cs);
}

GaussianBelief exact_joint_conditioning(const LinearSystemSpec& spec, const Matrix& C,
                                        const ConstraintSet& cs) {
  spec.validate();
  cs.validate(spec.dim(), false);
  const auto d = C.rows();
  if (cs.empty()) return {Vector::Zero(d), C};
  const auto M = static_cast<Eigen::Index>(cs.size());
  const auto Qp = powers(spec.Q, cs.max_lag());
  // Cov(x_{n-k}, x_{n-l}) = Q^{l-k} C for k <= l, and its transpose otherwise.
  auto lagged_cov = [&](int k, int l, int a, int b) {
    if (k <= l) return (Qp[static_cast<std::size_t>(l - k)].row(a) * C.col(b))(0, 0);
    return (Qp[static_cast<std::size_t>(k - l)].row(b) * C.col(a))(0, 0);
  };
  Matrix X(d, M);  // Cov(x_n, constrained coordinates)
  Matrix B(M, M);  // covariance of the constrained coordinates plus window variance
  for (Eigen::Index i = 0; i < M; ++i) {
    const auto& ci = cs.constraints[static_cast<std::size_t>(i)];
    X.col(i) = Qp[static_cast<std::size_t>(ci.lag)] * C.col(ci.component);
    for (Eigen::Index j = 0; j < M; ++j) {
      const auto& cj = cs.constraints[static_cast<std::size_t>(j)];
      B(i, j) = lagged_cov(ci.lag, cj.lag, ci.component, cj.component);
    }
    B(i, i) += ci.window_sd * ci.window_sd;
  }
  const Matrix Binv = spd_inverse(B, "constrained-coordinate covariance");
  const Matrix gain = X * Binv;
  GaussianBelief out;
  out.mean = gain * cs.targets();
  const Matrix cov = C - gain * X.transpose();
  out.cov = 0.5 * (cov + cov.transpose());
  return out;
}

McEstimate mc_conditional(const LinearSystemSpec& spec, const ConstraintSet& cs,
                          std::size_t n_samples, std::uint64_t seed, const McOptions& options) {
  spec.validate();
  cs.validate(spec.dim(), true);
  if (n_samples < 10000) fail(ErrorKind::Precondition, "mc_conditional needs at least 1e4 samples");
  const auto d = static_cast<Eigen::Index>(spec.dim());
  const auto m = spec.S.cols();
  const Matrix C = stationary_covariance(spec);
  Eigen::SelfAdjointEigenSolver<Matrix> es(C);
  const Matrix root =
      es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  const int K = cs.max_lag();

  constexpr std::size_t kChunk = 1 << 16;
  const std::size_t n_chunks = (n_samples + kChunk - 1) / kChunk;
  struct ChunkOut {
    std::vector<double> weights;
    std::vector<double> states;  // d values per retained sample
  };
  std::vector<ChunkOut> chunks(n_chunks);
  constexpr double kMinLogWeight = -690.0;

  parallel_for(n_chunks, options.workers, [&](std::size_t c) {
    Rng rng(derive_seed(seed, c));
    const std::size_t begin = c * kChunk;
    const std::size_t end = std::min(n_samples, begin + kChunk);
    Vector u(d), x(d), next(d), xi(m);
    auto& out = chunks[c];
    for (std::size_t s = begin; s < end; ++s) {
      for (Eigen::Index i = 0; i < d; ++i) u(i) = rng.normal();
      x.noalias() = root * u;  // x_{n-K}
      double log_w = 0.0;
      bool keep = true;
      for (int lag = K;; --lag) {
        for (const auto& con : cs.constraints) {
          if (con.lag != lag) continue;
          const double dev = x(con.component) - con.target;
          if (con.shape == WindowShape::Gaussian) {
            log_w -= dev * dev / (2.0 * con.window_sd * con.window_sd);
          } else if (std::abs(dev) > con.window_sd * std::sqrt(3.0)) {
            keep = false;
          }
        }
        if (lag == 0) break;
        for (Eigen::Index i = 0; i < m; ++i) xi(i) = rng.normal();
        next.noalias() = spec.Q * x;
        next.noalias() += spec.S * xi;
        x.swap(next);
      }
      if (!keep || log_w < kMinLogWeight) continue;
      out.weights.push_back(std::exp(log_w));
      out.states.insert(out.states.end(), x.data(), x.data() + d);
    }
  });

  std::size_t total = 0;
  for (const auto& ch : chunks) total += ch.weights.size();
  Vector w(static_cast<Eigen::Index>(total));
  Matrix X(d, static_cast<Eigen::Index>(total));
  {
    Eigen::Index col = 0;
    for (const auto& ch : chunks) {
      for (std::size_t i = 0; i < ch.weights.size(); ++i, ++col) {
        w(col) = ch.weights[i];
        X.col(col) = Eigen::Map<const Vector>(ch.states.data() + i * static_cast<std::size_t>(d), d);
      }
    }
  }
  const double sum_w = w.sum();
  const double ess = sum_w > 0.0 ? sum_w * sum_w / w.squaredNorm() : 0.0;
  if (!(ess >= options.min_effective))
    throw InsufficientDataError("only " + format_number(ess) +
                                    " effective samples survive the constraint window (need " +
                                    format_number(options.min_effective) + ")",
                                ess);

  // Weighted mean and covariance with the reliability-weight (unbiased) normalization.
  auto moments = [](const Matrix& S, const Vector& wt, Vector& mean, Matrix& cov) {
    const double v1 = wt.sum();
    const double v2 = wt.squaredNorm();
    mean = S * wt / v1;
    const Matrix centered = S.colwise() - mean;
    cov = centered * wt.asDiagonal() * centered.transpose() / (v1 - v2 / v1);
    cov = 0.5 * (cov + cov.transpose());
  };

  McEstimate est;
  moments(X, w, est.mean, est.cov);
  est.effective_count = ess;
  est.retained = total;

  const int B = std::max(options.bootstrap_resamples, 2);
  Rng boot(derive_seed(seed ^ 0xB0075EEDULL, n_chunks));
  Vector mean_sum = Vector::Zero(d), mean_sq = Vector::Zero(d);
  Matrix cov_sum = Matrix::Zero(d, d), cov_sq = Matrix::Zero(d, d);
  Matrix Xb(d, static_cast<Eigen::Index>(total));
  Vector wb(static_cast<Eigen::Index>(total));
  for (int b = 0; b < B; ++b) {
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(total); ++i) {
      const auto k = static_cast<Eigen::Index>(boot.below(total));
      Xb.col(i) = X.col(k);
      wb(i) = w(k);
    }
    Vector mb;
    Matrix cb;
    moments(Xb, wb, mb, cb);
    mean_sum += mb;
    mean_sq += mb.cwiseProduct(mb);
    cov_sum += cb;
    cov_sq += cb.cwiseProduct(cb);
  }
  const double nb = static_cast<double>(B);
  est.mean_se = ((mean_sq - mean_sum.cwiseProduct(mean_sum) / nb) / (nb - 1.0)).cwiseMax(0.0).cwiseSqrt();
  est.cov_se = ((cov_sq - cov_sum.cwiseProduct(cov_sum) / nb) / (nb - 1.0)).cwiseMax(0.0).cwiseSqrt();
  return est;
}

std::vector<CrossCheckRow> cross_check(const LinearSystemSpec& spec,
                                       const std::vector<int>& components,
                                       const std::vector<double>& targets,
                                       const std::vector<int>& max_lags,
                                       const std::vector<double>& sigma_ws) {
  if (targets.size() != components.size())
    fail(ErrorKind::Precondition, "cross_check needs one target per component");
  const Matrix C = stationary_covariance(spec);
  std::vector<CrossCheckRow> rows;
  for (int L : max_lags) {
    if (L < 1) fail(ErrorKind::Precondition, "cross_check lags must be >= 1");
    for (double sw : sigma_ws) {
      ConstraintSet cs;
      for (int k = 1; k <= L; ++k)
        for (std::size_t a = 0; a < components.size(); ++a)
          cs.constraints.push_back({k, components[a], targets[a], sw, WindowShape::Gaussian});
      const auto paper = constrained_present(spec, cs);
      const auto exact = exact_joint_conditioning(spec, C, cs);
      CrossCheckRow row;
      row.lag_set = L == 1 ? "1" : "1-" + std::to_string(L);
      row.sigma_w = sw;
      row.max_rel_diff_cov = max_abs(paper.cov - exact.cov) / max_abs(exact.cov);
      const double dm = (paper.mean - exact.mean).norm();
      const double scale = exact.mean.norm();
      row.rel_diff_mean = scale > 0.0 ? dm / scale : (dm == 0.0 ? 0.0 : INFINITY);
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace dfc
