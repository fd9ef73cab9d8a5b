#include <doctest.h>

#include "dfcausal/df_estimator.hpp"
#include "dfcausal/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>

using namespace dfc;

namespace {

TimeSeries iid_series(Eigen::Index n, int d, std::uint64_t seed) {
  Rng rng(seed);
  TimeSeries ts;
  ts.values.resize(n, d);
  for (Eigen::Index t = 0; t < n; ++t)
    for (int j = 0; j < d; ++j) ts.values(t, j) = rng.normal();
  ts.names = default_names(d);
  std::vector<int> all(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) all[static_cast<std::size_t>(j)] = j;
  if (d % 2 == 0) {
    std::vector<int> a(all.begin(), all.begin() + d / 2), b(all.begin() + d / 2, all.end());
    ts.subsystems = {{"a", a}, {"b", b}};
  } else {
    ts.subsystems = {{"a", all}};
  }
  return ts;
}

// One million steps of each preset, simulated once per test binary.
const TimeSeries& example_series(const std::string& preset) {
  static std::map<std::string, TimeSeries> cache;
  auto it = cache.find(preset);
  if (it == cache.end())
    it = cache.emplace(preset, sample_trajectory(build_example_system(ExampleParams::preset(preset)),
                                                 1000000, 1))
             .first;
  return it->second;
}

double slope_between(const DfCurve& c, double lo, double hi) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (const auto& p : c.points) {
    if (p.sigma_w < lo * (1 - 1e-9) || p.sigma_w > hi * (1 + 1e-9) || !p.sigma_est) continue;
    const double x = std::log(p.sigma_w), y = std::log(*p.sigma_est);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

DfCurve synthetic_curve(int n, const std::vector<double>& grid, double level, double power) {
  DfCurve c;
  c.n_constr = n;
  for (double s : grid) {
    const double v = level * std::pow(s / grid.front(), power);
    c.points.push_back({s, v, 0.01 * v, 10000});
  }
  return c;
}

}  // namespace

TEST_CASE("grid construction and validation") {
  const auto g = make_grid(1e-4, 1.0, 6);
  REQUIRE(g.size() == 25);
  CHECK(g.front() == doctest::Approx(1.0));
  CHECK(g.back() == doctest::Approx(1e-4));
  CHECK_NOTHROW(validate_grid(g));
  CHECK_THROWS_AS(validate_grid({}), Error);
  CHECK_THROWS_AS(validate_grid(make_grid(1e-1, 1.0, 6)), Error);  // one decade
  CHECK_THROWS_AS(validate_grid(make_grid(1e-3, 1.0, 4)), Error);  // too sparse
  auto rising = g;
  std::reverse(rising.begin(), rising.end());
  CHECK_THROWS_AS(validate_grid(rising), Error);
  CHECK_THROWS_AS((void)make_grid(1.0, 0.1, 6), Error);
}

TEST_CASE("selection basics") {
  const auto ts = iid_series(500, 2, 3);
  const auto none = select_conditioned(ts, {}, 0.5, WindowShape::Uniform);
  CHECK(none.count() == 500);
  const std::vector<PastPair> pair{{2, 0, 0.0}};
  const auto wide = select_conditioned(ts, pair, 1e6, WindowShape::Uniform);
  CHECK(wide.count() == 498);
  CHECK(wide.indices.front() == 2);
  const auto wide_g = select_conditioned(ts, pair, 1e6, WindowShape::Gaussian);
  CHECK(wide_g.count() == 498);
  CHECK(*std::min_element(wide_g.weights.begin(), wide_g.weights.end()) > 1.0 - 1e-10);
  CHECK(wide_g.effective_count() == doctest::Approx(498.0));

  const auto narrow = select_conditioned(ts, pair, 0.1, WindowShape::Uniform);
  for (auto t : narrow.indices) CHECK(std::abs(ts.values(static_cast<Eigen::Index>(t) - 2, 0)) <= 0.1 * std::sqrt(3.0));

  CHECK_THROWS_AS((void)select_conditioned(ts, {{0, 0, 0.0}}, 0.1, WindowShape::Uniform), Error);
  CHECK_THROWS_AS((void)select_conditioned(ts, {{1, 5, 0.0}}, 0.1, WindowShape::Uniform), Error);
  CHECK_THROWS_AS((void)select_conditioned(ts, {{1, 0, 0.0}}, 0.0, WindowShape::Uniform), Error);
  CHECK_THROWS_AS((void)select_conditioned(ts, {{500, 0, 0.0}}, 0.1, WindowShape::Uniform), Error);
}

TEST_CASE("selected fraction of the z-pair box matches the stationary Gaussian probability") {
  // The z pair is a damped rotation with isotropic noise, so its stationary law is
  // N(0, c I) and the box probability factorizes.
  const auto spec = build_example_system(ExampleParams::stochastic());
  const Matrix C = stationary_covariance(spec);
  const double h = 0.1 * std::sqrt(3.0);
  const double p = std::erf(h / std::sqrt(2.0 * C(4, 4))) * std::erf(h / std::sqrt(2.0 * C(5, 5)));
  // Slow mixing makes within-series errors hard to estimate, so independent runs supply the SE.
  const int runs = 10;
  std::vector<double> fr;
  for (int r = 0; r < runs; ++r) {
    const auto ts = sample_trajectory(spec, 200000, 100 + static_cast<std::uint64_t>(r));
    const auto sel = select_conditioned(ts, {{1, 4, 0.0}, {1, 5, 0.0}}, 0.1, WindowShape::Uniform);
    fr.push_back(static_cast<double>(sel.count()) / static_cast<double>(ts.length() - 1));
  }
  double m = 0, v = 0;
  for (double f : fr) m += f;
  m /= runs;
  for (double f : fr) v += (f - m) * (f - m);
  const double se = std::sqrt(v / (runs - 1) / runs);
  CAPTURE(m);
  CAPTURE(p);
  CHECK(std::abs(m - p) <= 3.0 * se);
}

TEST_CASE("conditional spread on independent data") {
  const auto ts = iid_series(200000, 2, 8);
  SpreadOptions opt;
  opt.seed = 4;
  for (auto shape : {WindowShape::Uniform, WindowShape::Gaussian}) {
    const auto e = conditional_spread(ts, {{1, 0, 0.3}, {2, 1, -0.2}}, 0.2, shape, {0, 1}, opt);
    REQUIRE(e.sigma);
    CAPTURE(to_string(shape));
    CHECK(std::abs(*e.sigma - 1.0) <= 3.0 * e.std_error);
    CHECK(e.std_error > 0.0);
    CHECK_FALSE(e.low_confidence);
  }
  const auto pooled = pooled_conditional_spread(ts, {{1, 0, 0.0}, {1, 1, 0.0}}, 0.05, {0, 1}, opt);
  REQUIRE(pooled.sigma);
  CHECK(std::abs(*pooled.sigma - 1.0) <= 3.0 * pooled.std_error);
}

TEST_CASE("conditional spread small cases") {
  TimeSeries ts;
  ts.values.resize(6, 1);
  ts.values << 0.0, 1.0, 3.0, 0.0, 1.0, 5.0;
  ts.names = {"v"};
  ts.subsystems = {{"v", {0}}};
  // Lag-1 value inside [-0.5, 0.5] (sigma_w = 0.5/sqrt 3): rows 1 and 4 (values 1, 1).
  const double w = 0.5 / std::sqrt(3.0);
  auto e = conditional_spread(ts, {{1, 0, 0.0}}, w, WindowShape::Uniform, {0});
  CHECK(e.n_selected == 2);
  REQUIRE(e.sigma);
  CHECK(*e.sigma == 0.0);
  CHECK(e.low_confidence);
  // Lag-1 value near 1: rows 2 and 5 (values 3, 5), sd sqrt(2).
  e = conditional_spread(ts, {{1, 0, 1.0}}, w, WindowShape::Uniform, {0});
  REQUIRE(e.sigma);
  CHECK(*e.sigma == doctest::Approx(std::sqrt(2.0)));
  // Nothing selected: no estimate, no exception.
  e = conditional_spread(ts, {{1, 0, 100.0}}, w, WindowShape::Uniform, {0});
  CHECK(e.n_selected == 0);
  CHECK_FALSE(e.sigma.has_value());

  // Reliability-weighted variance: sum w (x - m)^2 / (V1 - V2 / V1).
  TimeSeries g;
  g.values.resize(3, 1);
  g.values << 0.0, 2.0, 4.0;
  g.names = {"v"};
  g.subsystems = {{"v", {0}}};
  const auto ge = conditional_spread(g, {{1, 0, 0.0}}, 1.0, WindowShape::Gaussian, {0});
  const double w1 = 1.0, w2 = std::exp(-2.0);
  const double V1 = w1 + w2, V2 = w1 * w1 + w2 * w2;
  const double mean = (w1 * 2.0 + w2 * 4.0) / V1;
  const double var = (w1 * (2.0 - mean) * (2.0 - mean) + w2 * (4.0 - mean) * (4.0 - mean)) / (V1 - V2 / V1);
  REQUIRE(ge.sigma);
  CHECK(*ge.sigma == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
  CHECK(ge.n_selected == static_cast<std::size_t>(std::floor(V1 * V1 / V2)));
}

TEST_CASE("unconstrained z spread equals the stationary value") {
  const auto spec = build_example_system(ExampleParams::stochastic());
  const Matrix C = stationary_covariance(spec);
  const double expected = std::sqrt(0.5 * (C(4, 4) + C(5, 5)));
  const int runs = 10;
  std::vector<double> est;
  for (int r = 0; r < runs; ++r) {
    const auto ts = sample_trajectory(spec, 200000, 300 + static_cast<std::uint64_t>(r));
    SpreadOptions opt;
    opt.bootstrap_resamples = 0;
    est.push_back(*conditional_spread(ts, {}, 1.0, WindowShape::Uniform, {4, 5}, opt).sigma);
  }
  double m = 0, v = 0;
  for (double e : est) m += e;
  m /= runs;
  for (double e : est) v += (e - m) * (e - m);
  const double se = std::sqrt(v / (runs - 1) / runs);
  CAPTURE(m);
  CAPTURE(expected);
  CHECK(std::abs(m - expected) <= 3.0 * se);
}

TEST_CASE("deterministic z spread shrinks in proportion to the window") {
  const auto& ts = example_series("deterministic");
  const std::vector<PastPair> block{{1, 4, 0.0}, {1, 5, 0.0}};
  DfCurve c;
  for (double s : make_grid(1e-3, 1e-2, 6)) {
    const auto e = pooled_conditional_spread(ts, block, s, {4, 5});
    c.points.push_back({s, e.sigma, e.std_error, e.n_selected});
  }
  const double slope = slope_between(c, 1e-3, 1e-2);
  CAPTURE(slope);
  CHECK(std::abs(slope - 1.0) <= 0.15);
}

TEST_CASE("pooled spread is exactly scale equivariant") {
  const auto ts = iid_series(20000, 2, 12);
  TimeSeries scaled = ts;
  const double lambda = 4.0;  // a power of two keeps cell boundaries exact
  scaled.values *= lambda;
  const auto a = pooled_conditional_spread(ts, {{1, 0, 0.1}}, 0.03, {0, 1});
  const auto b = pooled_conditional_spread(scaled, {{1, 0, lambda * 0.1}}, lambda * 0.03, {0, 1});
  REQUIRE(a.sigma);
  CHECK(*b.sigma == lambda * *a.sigma);
  CHECK(a.n_selected == b.n_selected);
  CHECK(b.std_error == doctest::Approx(lambda * a.std_error).epsilon(1e-12));
}

TEST_CASE("schemes") {
  const auto ts = iid_series(1000, 4, 1);
  const auto own = own_lag_scheme(ts, "a", 3);
  CHECK(own.target_components == std::vector<int>{0, 1});
  REQUIRE(own.blocks.size() == 3);
  CHECK(own.blocks[2][1] == PastPair{3, 1, 0.0});
  CHECK(own.block_size() == 2);
  CHECK(own.active_pairs(2).size() == 4);
  CHECK_THROWS_AS((void)own.active_pairs(4), Error);

  const auto mixed = mixed_scheme(ts, "a", "b", 3);
  CHECK(mixed.target_components == std::vector<int>{0, 1, 2, 3});
  CHECK(mixed.blocks[0][0] == PastPair{1, 2, 0.0});
  CHECK(mixed.blocks[1][0] == PastPair{1, 0, 0.0});
  CHECK(mixed.blocks[2][0] == PastPair{2, 0, 0.0});

  const auto med = own_lag_scheme(ts, "a", 1, TargetMode::Median);
  CHECK(med.blocks[0][0].target != 0.0);

  ConstraintScheme bad = own;
  bad.window_shape = WindowShape::Gaussian;
  CHECK_THROWS_AS(bad.validate(4), Error);  // pooled needs uniform
  bad = own;
  bad.blocks[1].pop_back();
  CHECK_THROWS_AS(bad.validate(4), Error);
  bad = own;
  std::swap(bad.blocks[0], bad.blocks[1]);
  CHECK_THROWS_AS(bad.validate(4), Error);

  TimeSeries uneven = iid_series(1000, 3, 1);
  uneven.subsystems = {{"a", {0}}, {"b", {1, 2}}};
  CHECK_THROWS_AS((void)mixed_scheme(uneven, "a", "b", 2), Error);
  CHECK(binning_from_string("fixed") == Binning::Fixed);
  CHECK_THROWS_AS((void)binning_from_string("bucket"), Error);
}

TEST_CASE("curve family structure") {
  const auto ts = iid_series(5000, 2, 6);
  const auto grid = make_grid(1e-2, 1.0, 6);
  const auto scheme = own_lag_scheme(ts, "a", 2);

  SUBCASE("N_max = 0 gives one flat curve") {
    const auto fam = curve_family(ts, scheme, grid, 0);
    REQUIRE(fam.curves.size() == 1);
    const auto& first = fam.curves[0].points.front();
    for (const auto& p : fam.curves[0].points) {
      CHECK(p.sigma_est == first.sigma_est);
      CHECK(p.n_selected == first.n_selected);
    }
    CHECK(fam.curves[0].points.size() == grid.size());
  }
  SUBCASE("fixed bins: sparse tail is empty and counts never grow") {
    ConstraintScheme fixed = scheme;
    fixed.binning = Binning::Fixed;
    const auto fam = curve_family(ts, fixed, grid, 2);
    for (const auto& c : fam.curves) {
      REQUIRE(c.points.size() == grid.size());
      for (std::size_t i = 1; i < c.points.size(); ++i) {
        CHECK(c.points[i].sigma_w < c.points[i - 1].sigma_w);
        CHECK(c.points[i].n_selected <= c.points[i - 1].n_selected);
      }
    }
    // With two lagged coordinates and 5000 points the narrowest bins select nothing.
    CHECK_FALSE(fam.curves[2].points.back().sigma_est.has_value());
    CHECK(fam.curves[2].points.back().n_selected == 0);
  }
  SUBCASE("worker count does not change the result") {
    CurveOptions one;
    one.workers = 1;
    one.seed = 9;
    CurveOptions many = one;
    many.workers = 4;
    CHECK(curve_family(ts, scheme, grid, 2, one) == curve_family(ts, scheme, grid, 2, many));
    CurveOptions other = one;
    other.seed = 10;
    CHECK_FALSE(curve_family(ts, scheme, grid, 2, one) == curve_family(ts, scheme, grid, 2, other));
  }
  SUBCASE("preconditions") {
    CHECK_THROWS_AS((void)curve_family(iid_series(99, 2, 1), scheme, grid, 1), Error);
    CHECK_THROWS_AS((void)curve_family(ts, scheme, grid, 3), Error);
    CHECK_THROWS_AS((void)curve_family(ts, scheme, {1.0, 0.5}, 1), Error);
  }
}

TEST_CASE("classification of synthetic curves") {
  const auto grid = make_grid(1e-4, 1.0, 6);
  SUBCASE("flat levels form clusters above a shared floor") {
    DfCurveFamily fam;
    fam.block_size = 2;
    const std::vector<double> levels{1.0, 0.5, 0.1, 0.1, 0.1};
    for (int n = 0; n < 5; ++n) fam.curves.push_back(synthetic_curve(n, grid, levels[static_cast<std::size_t>(n)], 0.0));
    const auto rep = classify_plateaus(fam);
    CHECK(rep.floor.members == std::vector<int>{2, 3, 4});
    CHECK(rep.floor.level == doctest::Approx(0.1));
    REQUIRE(rep.above_floor.size() == 2);
    CHECK(rep.above_floor[0].members == std::vector<int>{0});
    CHECK(rep.above_floor[0].level == doctest::Approx(1.0));
    CHECK(rep.above_floor[1].members == std::vector<int>{1});
    for (const auto& cc : rep.curves) CHECK(cc.kind == CurveKind::Plateau);
    const auto est = infer_df(rep, 2);
    CHECK(est.df_blocks == 2);
    CHECK(est.df == 4);
    CHECK_FALSE(est.ambiguous);
    CHECK_FALSE(est.lower_bound);
  }
  SUBCASE("slope-one curves vanish") {
    DfCurveFamily fam;
    for (int n = 0; n < 3; ++n) fam.curves.push_back(synthetic_curve(n, grid, 1.0 / (n + 1), 1.0));
    const auto rep = classify_plateaus(fam);
    for (const auto& cc : rep.curves) {
      CHECK(cc.kind == CurveKind::Vanishing);
      CHECK(cc.level == 0.0);
      CHECK(cc.slope == doctest::Approx(1.0));
    }
  }
  SUBCASE("deterministic pattern: flat N=0, vanishing N>=1") {
    DfCurveFamily fam;
    fam.curves.push_back(synthetic_curve(0, grid, 0.7, 0.0));
    fam.curves.push_back(synthetic_curve(1, grid, 0.3, 1.0));
    fam.curves.push_back(synthetic_curve(2, grid, 0.2, 1.0));
    const auto est = infer_df(classify_plateaus(fam), 2);
    CHECK(est.df == 2);
    CHECK(est.noise_floor == 0.0);
  }
  SUBCASE("floor reached only at the last curve is a lower bound") {
    DfCurveFamily fam;
    fam.curves.push_back(synthetic_curve(0, grid, 1.0, 0.0));
    fam.curves.push_back(synthetic_curve(1, grid, 0.5, 0.0));
    fam.curves.push_back(synthetic_curve(2, grid, 0.1, 0.0));
    const auto est = infer_df(classify_plateaus(fam), 1);
    CHECK(est.df == 2);
    CHECK(est.lower_bound);
  }
  SUBCASE("all intermediate slopes abort as ambiguous") {
    DfCurveFamily fam;
    for (int n = 0; n < 3; ++n) fam.curves.push_back(synthetic_curve(n, grid, 1.0, 0.45));
    try {
      (void)classify_plateaus(fam);
      FAIL("expected an exception");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Ambiguous);
      CHECK(std::string(e.what()).find("grid") != std::string::npos);
    }
  }
  SUBCASE("curves without usable points are reported") {
    DfCurveFamily fam;
    fam.curves.push_back(synthetic_curve(0, grid, 1.0, 0.0));
    fam.curves.push_back(synthetic_curve(1, grid, 0.1, 0.0));
    DfCurve empty;
    empty.n_constr = 2;
    for (double s : grid) empty.points.push_back({s, std::nullopt, 0.0, 0});
    fam.curves.push_back(empty);
    const auto rep = classify_plateaus(fam);
    CHECK(rep.curves[2].kind == CurveKind::Unusable);
    CHECK_FALSE(rep.notes.empty());
  }
  SUBCASE("option validation") {
    DfCurveFamily fam;
    fam.curves.push_back(synthetic_curve(0, grid, 1.0, 0.0));
    PlateauOptions bad;
    bad.merge_rel_tol = 1.5;
    CHECK_THROWS_AS((void)classify_plateaus(fam, bad), Error);
    bad = PlateauOptions{};
    bad.slope_threshold = 0.9;
    CHECK_THROWS_AS((void)classify_plateaus(fam, bad), Error);
  }
}

TEST_CASE("independent data has no degrees of freedom") {
  const auto ts = iid_series(200000, 2, 21);
  const auto r = estimate_df(ts, own_lag_scheme(ts, "a", 2), make_grid(1e-2, 1.0, 6), 2);
  CHECK(r.estimate.df == 0);
  CHECK(r.report.floor.members == std::vector<int>{0, 1, 2});
  CHECK(r.report.above_floor.empty());
}

TEST_CASE("deterministic z: flat unconstrained line, proportional constrained lines") {
  const auto& ts = example_series("deterministic");
  const auto r = estimate_df(ts, own_lag_scheme(ts, "z", 2), make_grid(1e-4, 1.0, 6), 2);
  REQUIRE(r.report.curves.size() == 3);
  CHECK(r.report.curves[0].kind == CurveKind::Plateau);
  // Above the intrinsic noise (5e-4) the constrained lines fall in proportion to the window.
  for (int n = 1; n <= 2; ++n) {
    CAPTURE(n);
    CHECK(std::abs(slope_between(r.family.curves[static_cast<std::size_t>(n)], 1e-3, 1e-2) - 1.0) <= 0.15);
    CHECK(std::abs(slope_between(r.family.curves[static_cast<std::size_t>(n)], 1e-2, 1e-1) - 1.0) <= 0.15);
  }
  CHECK(r.estimate.df == 2);
  CHECK(r.estimate.df_blocks == 1);
  CHECK_FALSE(r.estimate.ambiguous);
}

TEST_CASE("stochastic x: three flattened levels and an analytic floor") {
  const auto& ts = example_series("stochastic");
  const auto grid = make_grid(1e-4, 1.0, 6);
  const auto r = estimate_df(ts, own_lag_scheme(ts, "x", 3), grid, 3);
  CHECK(r.report.curves[0].kind == CurveKind::Plateau);
  CHECK(r.report.curves[1].kind == CurveKind::Plateau);
  REQUIRE(r.report.above_floor.size() == 2);
  // Three distinct levels: N=0, N=1 and the floor, each well separated from the next.
  CHECK(r.report.above_floor[0].level > 2.0 * r.report.above_floor[1].level);
  CHECK(r.report.above_floor[1].level > 2.0 * r.report.floor.upper);
  CHECK(r.estimate.df == 4);

  // Analytic sigma_w -> 0 level of each floor line, from exact conditioning on the x pairs.
  const auto spec = build_example_system(ExampleParams::stochastic());
  const Matrix C = stationary_covariance(spec);
  double analytic = 0.0;
  int members = 0;
  for (int n : r.report.floor.members) {
    ConstraintSet cs;
    for (int k = 1; k <= n; ++k)
      for (int a : {0, 1}) cs.constraints.push_back({k, a, 0.0, 1e-7, WindowShape::Uniform});
    const auto b = exact_joint_conditioning(spec, C, cs);
    analytic += std::sqrt(0.5 * (b.cov(0, 0) + b.cov(1, 1)));
    ++members;
  }
  analytic /= members;
  CAPTURE(r.report.floor.upper);
  CAPTURE(analytic);
  CHECK(std::abs(r.report.floor.upper / analytic - 1.0) < 0.10);
}
