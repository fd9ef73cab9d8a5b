// Acceptance checks, one line per criterion.
//
//   dfcausal_acceptance [--criterion N] [--cli PATH] [--data PATH] [--work DIR]
//
// Exit status: 0 when every selected criterion passes, 1 on any failure, and 77
// (the ctest skip code) when the only selected criterion is blocked by missing input.

#include "dfcausal/analytic_conditional.hpp"
#include "dfcausal/causal_verdict.hpp"
#include "dfcausal/data_io.hpp"
#include "dfcausal/df_estimator.hpp"
#include "dfcausal/rng.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace dfc;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kLyapunovTol = 1e-10;
constexpr double kLyapunovSeconds = 1.0;
constexpr double kScalarRelTol = 1e-12;
constexpr double kOracleSe = 3.0;
constexpr std::size_t kOracleSamples = 1000000;
constexpr double kOracleSeconds = 120.0;
constexpr double kScalarCrossTol = 1e-8;
constexpr double kZeroEigRel = 1e-9;
constexpr int kSeeds = 10;
constexpr int kSeedsRequired = 9;
constexpr std::uint64_t kReferenceSeed = 1;
constexpr std::size_t kSteps = 1000000;
constexpr double kDfSeconds = 600.0;
constexpr int kBlocksZ = 1, kBlocksXY = 2, kBlocksJoint = 3;

enum class Outcome { Pass, Fail, Blocked };

struct Line {
  Outcome outcome;
  std::string detail;
};

struct Context {
  std::string cli;
  std::string data;
  fs::path work;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Line lyapunov(const Context&) {
  std::ostringstream os;
  bool ok = true;
  for (const std::string preset : {"stochastic", "deterministic"}) {
    const auto spec = build_example_system(ExampleParams::preset(preset));
    const auto t0 = std::chrono::steady_clock::now();
    const Matrix C = stationary_covariance(spec);
    const double t = seconds_since(t0);
    const double r = lyapunov_residual(spec, C);
    ok = ok && r < kLyapunovTol && t < kLyapunovSeconds;
    os << preset << " residual " << fmt("%.2e", r) << " in " << fmt("%.3f", t) << " s; ";
  }
  return {ok ? Outcome::Pass : Outcome::Fail, os.str()};
}

Line scalar_closed_forms(const Context&) {
  double worst = 0.0;
  auto rel = [&](double got, double want) {
    worst = std::max(worst, std::abs(got - want) / std::abs(want));
  };
  for (double c : {0.3, 1.0, 7.5})
    for (double w : {1e-4, 0.2, 3.0}) {
      LinearObservation obs{Matrix::Ones(1, 1), Vector::Zero(1), Matrix::Constant(1, 1, w)};
      rel(condition_on_linear_observation(Matrix::Constant(1, 1, c), obs).cov(0, 0), c * w / (c + w));
    }
  for (double alpha : {0.3, 0.7, 0.95})
    for (double sigma : {0.1, 1.0})
      for (double w : {0.01, 0.5, 2.0}) {
        LinearSystemSpec spec;
        spec.Q = Matrix::Constant(1, 1, alpha);
        spec.S = Matrix::Constant(1, 1, sigma);
        spec.names = {"v"};
        ConstraintSet cs{{PastConstraint{1, 0, 0.0, w, WindowShape::Gaussian}}};
        const double inv = (1 - alpha * alpha) / (sigma * sigma) +
                           1.0 / (alpha * alpha) / (w * w + sigma * sigma / (alpha * alpha));
        rel(1.0 / constrained_present(spec, cs).cov(0, 0), inv);
      }
  return {worst < kScalarRelTol ? Outcome::Pass : Outcome::Fail,
          "worst relative deviation " + fmt("%.2e", worst)};
}

Line oracle(const Context&) {
  const auto spec = build_example_system(ExampleParams::stochastic());
  ConstraintSet cs;
  for (int a : {4, 5}) cs.constraints.push_back({1, a, 0.0, 0.01, WindowShape::Gaussian});
  const auto t0 = std::chrono::steady_clock::now();
  const auto exact = exact_joint_conditioning(spec, cs);
  const auto mc = mc_conditional(spec, cs, kOracleSamples, kReferenceSeed);
  const double t = seconds_since(t0);
  double worst = 0.0;
  const Eigen::Index d = exact.mean.size();
  for (Eigen::Index i = 0; i < d; ++i) {
    worst = std::max(worst, std::abs(mc.mean(i) - exact.mean(i)) / mc.mean_se(i));
    for (Eigen::Index j = 0; j < d; ++j)
      worst = std::max(worst, std::abs(mc.cov(i, j) - exact.cov(i, j)) / mc.cov_se(i, j));
  }
  const bool ok = worst <= kOracleSe && t < kOracleSeconds;
  return {ok ? Outcome::Pass : Outcome::Fail,
          "largest deviation " + fmt("%.2f", worst) + " SE over " + std::to_string(d + d * d) +
              " entries, effective samples " + fmt("%.0f", mc.effective_count) + ", " +
              fmt("%.1f", t) + " s"};
}

Line cross_check_report(const Context& ctx) {
  const auto spec = build_example_system(ExampleParams::stochastic());
  const auto rows = cross_check(spec, {4, 5}, {0.0, 0.0}, {1, 2, 3, 4}, {1e-3, 1e-2, 1e-1});
  const fs::path report = ctx.work / "cross_check.csv";
  fs::create_directories(ctx.work);
  write_text(report, cross_check_to_csv(rows));
  const bool report_ok = rows.size() == 12 && fs::exists(report);

  // d = 1, lag 1: the backward-map formula against exact conditioning.
  double d1 = 0.0;
  for (double w : {1e-3, 1e-2, 1e-1}) {
    LinearSystemSpec s;
    s.Q = Matrix::Constant(1, 1, 0.9);
    s.S = Matrix::Constant(1, 1, 0.1);
    s.names = {"v"};
    ConstraintSet cs{{PastConstraint{1, 0, 0.2, w, WindowShape::Gaussian}}};
    const double a = constrained_present(s, cs).cov(0, 0);
    const double b = exact_joint_conditioning(s, cs).cov(0, 0);
    d1 = std::max(d1, std::abs(a - b) / b);
  }

  // Sharp-constraint limit: M independent constraint rows leave exactly M zero eigenvalues.
  // One component from each group; z alone evolves autonomously, so its two
  // components at two lags would span only a two-dimensional row space.
  const Matrix C = stationary_covariance(spec);
  bool rank_ok = true;
  std::ostringstream ranks;
  for (int L = 1; L <= 3; ++L) {
    ConstraintSet cs;
    for (int k = 1; k <= L; ++k)
      for (int a : {0, 2, 4}) cs.constraints.push_back({k, a, 0.1, 0.0, WindowShape::Gaussian});
    const auto m = past_constraint_matrices(spec, cs);
    if (m.R.rows() > C.rows()) break;
    const auto b = degenerate_condition(C, m.R, cs.targets());
    Eigen::SelfAdjointEigenSolver<Matrix> es(b.cov);
    const double top = es.eigenvalues().cwiseAbs().maxCoeff();
    int zeros = 0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
      zeros += std::abs(es.eigenvalues()(i)) <= kZeroEigRel * std::max(top, C.cwiseAbs().maxCoeff());
    rank_ok = rank_ok && zeros == m.R.rows();
    ranks << "M=" << m.R.rows() << ":" << zeros << " ";
  }
  const bool ok = report_ok && rank_ok && d1 < kScalarCrossTol;
  std::string detail = std::string("report ") + (report_ok ? "written" : "missing") + " (" +
                       std::to_string(rows.size()) + " rows); zero eigenvalues " + ranks.str() +
                       "; d=1 lag-1 relative difference " + fmt("%.3e", d1) +
                       (d1 < kScalarCrossTol ? "" : " exceeds 1e-8 (the two formulas differ at finite windows)");
  return {ok ? Outcome::Pass : Outcome::Fail, detail};
}

struct SeedResult {
  int z = -1, x = -1, y = -1, xy = -1;
  bool clean = true;
  [[nodiscard]] bool correct() const {
    return clean && z == kBlocksZ && x == kBlocksXY && y == kBlocksXY && xy == kBlocksJoint;
  }
};

SeedResult df_run(const std::string& preset, std::uint64_t seed) {
  const auto spec = build_example_system(ExampleParams::preset(preset));
  const auto ts = sample_trajectory(spec, kSteps, seed);
  const auto grid = make_grid(1e-4, 1.0, 6);
  SeedResult r;
  auto run = [&](const ConstraintScheme& scheme, int& out) {
    CurveOptions co;
    co.seed = seed;
    try {
      const auto res = estimate_df(ts, scheme, grid, 4, co);
      out = res.estimate.df_blocks;
      r.clean = r.clean && !res.estimate.ambiguous && !res.estimate.lower_bound;
    } catch (const Error&) {
      r.clean = false;
    }
  };
  run(own_lag_scheme(ts, "z", 4), r.z);
  run(own_lag_scheme(ts, "x", 4), r.x);
  run(own_lag_scheme(ts, "y", 4), r.y);
  run(mixed_scheme(ts, "x", "y", 4), r.xy);
  return r;
}

Line df_recovery(const Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::ostringstream os;
  for (const std::string preset : {"stochastic", "deterministic"}) {
    int correct = 0;
    bool reference_ok = false;
    for (int s = 1; s <= kSeeds; ++s) {
      const auto r = df_run(preset, static_cast<std::uint64_t>(s));
      std::fprintf(stderr, "  %s seed %2d: df_z=%d df_x=%d df_y=%d df_xy=%d%s  (%.0f s)\n",
                   preset.c_str(), s, 2 * r.z, 2 * r.x, 2 * r.y, 2 * r.xy,
                   r.clean ? "" : " [flagged]", seconds_since(t0));
      correct += r.correct();
      if (static_cast<std::uint64_t>(s) == kReferenceSeed) reference_ok = r.correct();
    }
    ok = ok && reference_ok && correct >= kSeedsRequired;
    os << preset << " " << correct << "/" << kSeeds << " seeds (reference "
       << (reference_ok ? "exact" : "wrong") << "); ";
  }
  const double t = seconds_since(t0);
  ok = ok && t < kDfSeconds;
  os << fmt("%.0f", t) << " s";
  return {ok ? Outcome::Pass : Outcome::Fail, os.str()};
}

Line verdicts(const Context&) {
  bool ok = true;
  std::ostringstream os;
  for (const std::string preset : {"stochastic", "deterministic"}) {
    const auto ts = sample_trajectory(build_example_system(ExampleParams::preset(preset)), kSteps,
                                      kReferenceSeed);
    PairConfig cfg;
    cfg.curve.seed = kReferenceSeed;
    const auto xy = analyze_pair(ts, "x", "y", cfg);
    const auto xz = analyze_pair(ts, "x", "z", cfg);
    const bool good = xy.verdict.relation == Relation::CommonDriver &&
                      xz.verdict.relation == Relation::YDrivesX;
    ok = ok && good;
    os << preset << ": (x,y) " << to_string(xy.verdict.relation) << " orders "
       << xy.verdict.orders.o_x << "," << xy.verdict.orders.o_y << "," << xy.verdict.orders.o_j
       << "; (x,z) " << to_string(xz.verdict.relation) << " orders " << xz.verdict.orders.o_x << ","
       << xz.verdict.orders.o_y << "," << xz.verdict.orders.o_j << "; ";
  }
  // Exhaustive enumeration of the decision table.
  int checked = 0, violations = 0;
  for (int ox = 0; ox <= 6; ++ox)
    for (int oy = 0; oy <= 6; ++oy)
      for (int oj = std::max(ox, oy); oj <= ox + oy; ++oj) {
        const int sum = ox + oy;
        const int matches = (ox < oj && oy < oj && oj == sum) + (ox < oy && oy == oj && oj < sum) +
                            (oy < ox && ox == oj && oj < sum) + (ox == oy && oy == oj && oj < sum) +
                            (ox < oj && oy < oj && oj < sum);
        const bool undetermined = verdict({ox, oy, oj, 1}).relation == Relation::Undetermined;
        violations += matches > 1 || undetermined != (matches == 0);
        ++checked;
      }
  ok = ok && violations == 0;
  os << "table: " << checked << " triples, " << violations << " violations";
  return {ok ? Outcome::Pass : Outcome::Fail, os.str()};
}

Line chicken_egg(const Context& ctx) {
  if (ctx.data.empty() || !fs::exists(ctx.data))
    return {Outcome::Blocked, "dataset " + (ctx.data.empty() ? std::string("<none>") : ctx.data) +
                                  " not present; see data/README.md"};
  const auto raw = load_csv(ctx.data, true);
  const auto grid = make_grid(0.1, 2.0, 6);
  const auto rep = chicken_egg_pipeline(raw, grid);
  fs::create_directories(ctx.work);
  write_text(ctx.work / "chickenegg_panels.csv", chicken_egg_panels_csv(rep));
  bool counts_fall = true;
  for (const auto* probe : {&rep.egg_to_chicken, &rep.chicken_to_egg})
    for (std::size_t i = 1; i < probe->points.size(); ++i)
      counts_fall = counts_fall && probe->points[i].n_selected <= probe->points[i - 1].n_selected;
  const bool ok = rep.egg_to_chicken.status == ProbeStatus::Detected &&
                  rep.chicken_to_egg.status != ProbeStatus::Detected && counts_fall;
  return {ok ? Outcome::Pass : Outcome::Fail,
          "direction '" + rep.direction + "' (egg->chicken " + to_string(rep.egg_to_chicken.status) +
              ", chicken->egg " + to_string(rep.chicken_to_egg.status) + "), counts " +
              (counts_fall ? "non-increasing" : "not monotone")};
}

int run_command(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
  return rc;
}

bool same_tree(const fs::path& a, const fs::path& b, std::size_t& files) {
  files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    if (!fs::exists(b / rel) || read_text(e.path()) != read_text(b / rel)) return false;
    ++files;
  }
  std::size_t other = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) other += e.is_regular_file();
  return other == files && files > 0;
}

Line properties(const Context& ctx) {
  std::ostringstream os;
  bool ok = true;
  Rng rng(8);

  // Loewner order of nested exact conditioning.
  int loewner_bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 1 + static_cast<int>(rng.below(6));
    LinearSystemSpec spec;
    spec.Q.resize(d, d);
    spec.S.resize(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        spec.Q(i, j) = rng.normal();
        spec.S(i, j) = rng.normal() * 0.5;
      }
    spec.Q *= (0.3 + 0.65 * rng.uniform()) / spectral_radius(spec.Q);
    spec.names = default_names(d);
    const Matrix C = stationary_covariance(spec);
    ConstraintSet all, part;
    for (int k = 1; k <= 2; ++k)
      for (int a = 0; a < d; ++a)
        if (rng.uniform() < 0.6) {
          const PastConstraint c{k, a, rng.normal(), 0.05 + rng.uniform(), WindowShape::Gaussian};
          all.constraints.push_back(c);
          if (rng.uniform() < 0.5) part.constraints.push_back(c);
        }
    const Matrix diff = exact_joint_conditioning(spec, C, part).cov - exact_joint_conditioning(spec, C, all).cov;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (diff + diff.transpose()));
    loewner_bad += es.eigenvalues().minCoeff() < -1e-10 * C.cwiseAbs().maxCoeff();
  }
  ok = ok && loewner_bad == 0;
  os << "Loewner " << (100 - loewner_bad) << "/100; ";

  // Intrinsic and window covariances enter only through their sum.
  bool swap_equal = true;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + trial % 4, m = 1 + trial % d;
    Matrix A(d, d), R(m, d), B(m, m), W = Matrix::Zero(m, m);
    Vector z(m);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) A(i, j) = rng.normal();
    for (int i = 0; i < m; ++i) {
      z(i) = rng.normal();
      W(i, i) = 0.01 + rng.uniform();
      for (int j = 0; j < d; ++j) R(i, j) = rng.normal();
      for (int j = 0; j < m; ++j) B(i, j) = rng.normal();
    }
    const Matrix C = A * A.transpose() + Matrix::Identity(d, d);
    const Matrix N = B * B.transpose() + 0.1 * Matrix::Identity(m, m);
    const auto a = condition_on_linear_observation(C, R, z, N, W);
    const auto b = condition_on_linear_observation(C, R, z, W, N);
    swap_equal = swap_equal && a.mean == b.mean && a.cov == b.cov;
  }
  ok = ok && swap_equal;
  os << "window/noise swap " << (swap_equal ? "bit-equal" : "differs") << "; ";

  // Scale equivariance of the estimator (lambda = 2, uniform windows, pooled cells).
  {
    const auto spec = build_example_system(ExampleParams::stochastic());
    const auto ts = sample_trajectory(spec, 200000, 3);
    TimeSeries scaled = ts;
    scaled.values *= 2.0;
    const auto grid = make_grid(1e-3, 1.0, 6);
    std::vector<double> grid2;
    for (double s : grid) grid2.push_back(2.0 * s);
    const auto a = estimate_df(ts, own_lag_scheme(ts, "z", 2), grid, 2);
    const auto b = estimate_df(scaled, own_lag_scheme(scaled, "z", 2), grid2, 2);
    bool equal = a.estimate.df == b.estimate.df;
    for (std::size_t c = 0; c < a.family.curves.size(); ++c)
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& p = a.family.curves[c].points[i];
        const auto& q = b.family.curves[c].points[i];
        equal = equal && p.n_selected == q.n_selected && p.sigma_est.has_value() == q.sigma_est.has_value() &&
                (!p.sigma_est || *q.sigma_est == 2.0 * *p.sigma_est);
      }
    ok = ok && equal;
    os << "scale equivariance " << (equal ? "exact" : "broken") << "; ";
  }

  // Normalization idempotence.
  double idem = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Matrix x(60, 2);
    for (int i = 0; i < 60; ++i) {
      x(i, 0) = 1e3 + 50.0 * rng.normal();
      x(i, 1) = 1e-3 * rng.normal();
    }
    const Matrix once = normalize_unit_variance(x, {"a", "b"});
    idem = std::max(idem, (normalize_unit_variance(once, {"a", "b"}) - once).cwiseAbs().maxCoeff());
  }
  ok = ok && idem < 1e-12;
  os << "normalize idempotence " << fmt("%.1e", idem) << "; ";

  // CLI outputs are byte-identical across repeated runs with the same seed.
  if (ctx.cli.empty() || !fs::exists(ctx.cli)) {
    ok = false;
    os << "CLI not found";
  } else {
    bool same = true;
    std::size_t total = 0;
    for (const std::string& args :
         {std::string("simulate --preset stochastic --steps 20000 --seed 7"),
          std::string("curves --preset deterministic --steps 20000 --seed 7 --target z --n-max 2 "
                      "--grid-min 1e-3"),
          std::string("analytic --preset stochastic --lags 1,2 --sigma-w 0.01,0.1")}) {
      const fs::path a = ctx.work / "repro_a", b = ctx.work / "repro_b";
      fs::remove_all(a);
      fs::remove_all(b);
      const int ra = run_command(ctx.cli + " " + args + " --workers 2 --out " + a.string());
      const int rb = run_command(ctx.cli + " " + args + " --workers 1 --out " + b.string());
      std::size_t files = 0;
      const bool eq = ra == 0 && rb == 0 && same_tree(a, b, files);
      same = same && eq;
      total += files;
    }
    ok = ok && same;
    os << "CLI reruns " << (same ? "byte-identical" : "differ") << " (" << total << " files)";
  }
  return {ok ? Outcome::Pass : Outcome::Fail, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  int only = 0;
  Context ctx;
  std::string work = (fs::temp_directory_path() / "dfcausal_acceptance").string();
  app.add_option("--criterion", only, "run a single criterion (1-8); 0 runs all")->check(CLI::Range(0, 8));
  app.add_option("--cli", ctx.cli, "path to the dfcausal executable");
  app.add_option("--data", ctx.data, "chicken-egg CSV");
  app.add_option("--work", work, "scratch directory");
  CLI11_PARSE(app, argc, argv);
  ctx.work = work;
  if (only) ctx.work /= "c" + std::to_string(only);
  set_warning_sink([](const std::string&) {});

  const std::vector<std::pair<const char*, std::function<Line(const Context&)>>> criteria{
      {"Lyapunov correctness", lyapunov},
      {"scalar closed forms", scalar_closed_forms},
      {"Monte Carlo oracle agreement", oracle},
      {"backward-map cross-check", cross_check_report},
      {"df recovery", df_recovery},
      {"verdicts", verdicts},
      {"chicken-egg direction", chicken_egg},
      {"property suites", properties},
  };
  int failed = 0, blocked = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && static_cast<int>(i) + 1 != only) continue;
    ++ran;
    Line line;
    try {
      line = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      line = {Outcome::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = line.outcome == Outcome::Pass ? "PASS" : line.outcome == Outcome::Fail ? "FAIL" : "BLOCKED";
    std::printf("criterion %zu %-30s %-7s %s\n", i + 1, criteria[i].first, tag, line.detail.c_str());
    std::fflush(stdout);
    failed += line.outcome == Outcome::Fail;
    blocked += line.outcome == Outcome::Blocked;
  }
  if (failed) return 1;
  if (blocked && blocked == ran) return 77;
  return 0;
}
