#include "dfcausal/df_estimator.hpp"

#include "dfcausal/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace dfc {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

int max_lag(const std::vector<PastPair>& active) {
  int k = 0;
  for (const auto& p : active) k = std::max(k, p.lag);
  return k;
}

void check_pairs(const TimeSeries& series, const std::vector<PastPair>& active, double sigma_w) {
  const auto d = static_cast<int>(series.dim());
  for (const auto& p : active) {
    if (p.lag < 1) fail(ErrorKind::Precondition, "constraint lag must be >= 1");
    if (p.component < 0 || p.component >= d)
      fail(ErrorKind::Precondition, "constraint component " + std::to_string(p.component) +
                                        " out of range");
    if (!std::isfinite(p.target)) fail(ErrorKind::Precondition, "constraint target must be finite");
  }
  if (max_lag(active) >= series.length())
    fail(ErrorKind::Precondition, "largest constraint lag must be shorter than the series");
  if (!(sigma_w > 0.0) || !std::isfinite(sigma_w))
    fail(ErrorKind::Precondition, "sigma_w must be positive and finite");
}

void check_targets(const TimeSeries& series, const std::vector<int>& targets) {
  if (targets.empty()) fail(ErrorKind::Precondition, "no target components");
  for (int c : targets)
    if (c < 0 || c >= series.dim())
      fail(ErrorKind::Precondition, "target component " + std::to_string(c) + " out of range");
}

// Root-mean-square over components of the weighted sample standard deviation.
// Unweighted when `weights` is empty (n - 1 denominator).
double rms_spread(const Matrix& values, const std::vector<int>& targets,
                  const std::vector<std::size_t>& idx, const std::vector<double>& weights) {
  double total_var = 0.0;
  const bool weighted = !weights.empty();
  double v1 = 0.0, v2 = 0.0;
  if (weighted) {
    for (double w : weights) {
      v1 += w;
      v2 += w * w;
    }
  } else {
    v1 = static_cast<double>(idx.size());
  }
  for (int c : targets) {
    const double* col = values.col(c).data();
    double mean = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) mean += (weighted ? weights[i] : 1.0) * col[idx[i]];
    mean /= v1;
    double ss = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const double dev = col[idx[i]] - mean;
      ss += (weighted ? weights[i] : 1.0) * dev * dev;
    }
    total_var += weighted ? ss / (v1 - v2 / v1) : ss / (v1 - 1.0);
  }
  return std::sqrt(total_var / static_cast<double>(targets.size()));
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Integer cell index of a value already scaled to cell units (round half up).
// Avoids a libm floor call in the hot loop.
inline std::int64_t cell_of(double v) {
  const double t = v + 0.5;
  auto c = static_cast<std::int64_t>(t);
  if (static_cast<double>(c) > t) --c;
  return c;
}

struct PooledScratch {
  std::vector<std::uint64_t> keys, part_key, slot_key;
  std::vector<double> part_val, acc;
  std::vector<std::uint32_t> slot_n;
};

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::string to_string(Binning binning) { return binning == Binning::Fixed ? "fixed" : "pooled"; }

Binning binning_from_string(const std::string& text) {
  if (text == "fixed") return Binning::Fixed;
  if (text == "pooled") return Binning::Pooled;
  fail(ErrorKind::Usage, "unknown binning '" + text + "' (expected fixed or pooled)");
}

double Selection::effective_count() const {
  if (weights.empty()) return static_cast<double>(indices.size());
  double s = 0.0, s2 = 0.0;
  for (double w : weights) {
    s += w;
    s2 += w * w;
  }
  return s2 > 0.0 ? s * s / s2 : 0.0;
}

Selection select_conditioned(const TimeSeries& series, const std::vector<PastPair>& active,
                             double sigma_w, WindowShape shape) {
  check_pairs(series, active, sigma_w);
  const auto n = static_cast<std::size_t>(series.length());
  const auto K = static_cast<std::size_t>(max_lag(active));
  Selection sel;
  const double half = sigma_w * kSqrt3;
  const double inv2var = 1.0 / (2.0 * sigma_w * sigma_w);
  for (std::size_t t = K; t < n; ++t) {
    if (shape == WindowShape::Uniform) {
      bool ok = true;
      for (const auto& p : active) {
        const double v = series.values(static_cast<Eigen::Index>(t) - p.lag, p.component);
        if (std::abs(v - p.target) > half) {
          ok = false;
          break;
        }
      }
      if (ok) sel.indices.push_back(t);
    } else {
      double log_w = 0.0;
      for (const auto& p : active) {
        const double dev = series.values(static_cast<Eigen::Index>(t) - p.lag, p.component) - p.target;
        log_w -= dev * dev * inv2var;
      }
      const double w = std::exp(log_w);
      if (w >= 1e-300) {
        sel.indices.push_back(t);
        sel.weights.push_back(w);
      }
    }
  }
  return sel;
}

SpreadEstimate conditional_spread(const TimeSeries& series, const std::vector<PastPair>& active,
                                  double sigma_w, WindowShape shape,
                                  const std::vector<int>& target_components,
                                  const SpreadOptions& options) {
  check_targets(series, target_components);
  const Selection sel = select_conditioned(series, active, sigma_w, shape);
  SpreadEstimate out;
  const std::size_t count = sel.count();
  out.n_selected = shape == WindowShape::Uniform
                       ? count
                       : static_cast<std::size_t>(std::floor(sel.effective_count()));
  out.low_confidence = out.n_selected < options.min_count;
  if (count < 2 || (shape == WindowShape::Gaussian && sel.effective_count() <= 1.0 + 1e-9))
    return out;
  out.sigma = rms_spread(series.values, target_components, sel.indices, sel.weights);

  const std::size_t m = std::min(count, options.bootstrap_max_points);
  if (m < 2 || options.bootstrap_resamples < 2) return out;
  Rng rng(options.seed);
  std::vector<double> stats;
  stats.reserve(static_cast<std::size_t>(options.bootstrap_resamples));
  std::vector<std::size_t> idx(m);
  std::vector<double> w;
  for (int b = 0; b < options.bootstrap_resamples; ++b) {
    w.clear();
    for (std::size_t i = 0; i < m; ++i) {
      const auto k = static_cast<std::size_t>(rng.below(count));
      idx[i] = sel.indices[k];
      if (!sel.weights.empty()) w.push_back(sel.weights[k]);
    }
    if (!w.empty()) {
      double s = 0.0, s2 = 0.0;
      for (double x : w) {
        s += x;
        s2 += x * x;
      }
      if (s * s / s2 <= 1.0 + 1e-9) continue;
    }
    stats.push_back(rms_spread(series.values, target_components, idx, w));
  }
  out.std_error = sample_sd(stats) * std::sqrt(static_cast<double>(m) / static_cast<double>(count));
  return out;
}

SpreadEstimate pooled_conditional_spread(const TimeSeries& series,
                                         const std::vector<PastPair>& active, double sigma_w,
                                         const std::vector<int>& target_components,
                                         const SpreadOptions& options) {
  if (active.empty())
    return conditional_spread(series, active, sigma_w, WindowShape::Uniform, target_components,
                              options);
  check_targets(series, target_components);
  check_pairs(series, active, sigma_w);
  const auto n = static_cast<std::size_t>(series.length());
  const auto K = static_cast<std::size_t>(max_lag(active));
  const std::size_t count = n - K;
  if (count > 0xFFFFFFFFULL) fail(ErrorKind::Precondition, "series too long for pooled binning");
  const double inv_width = 1.0 / (2.0 * kSqrt3 * sigma_w);

  // Cell key: hash of the integer cell coordinates (cells of width 2*sqrt(3)*sigma_w
  // centred on the targets). Odd multipliers plus a final mix make collisions
  // between distinct cells negligible (about n^2 / 2^65).
  // Scratch buffers are kept per thread: the curve grid calls this many times
  // on series of the same length.
  thread_local PooledScratch ws;
  auto& keys = ws.keys;
  keys.assign(count, 0);
  for (std::size_t j = 0; j < active.size(); ++j) {
    const auto& p = active[j];
    const std::uint64_t mult = mix64(0x2545F4914F6CDD1DULL + j) | 1ULL;
    const double* col = series.values.col(p.component).data() + (K - static_cast<std::size_t>(p.lag));
    const double shift = p.target * inv_width;
    for (std::size_t i = 0; i < count; ++i)
      keys[i] += static_cast<std::uint64_t>(cell_of(col[i] * inv_width - shift)) * mult;
  }

  // Group rows by cell in two cache-friendly stages: a single partition pass on
  // the top bits of the mixed key, then a small open-addressing table per
  // partition. Per cell we accumulate sums of deviations from the cell's first
  // member, which keeps the sum of squares free of cancellation.
  const std::size_t T = target_components.size();
  std::vector<const double*> cols;
  for (int c : target_components) cols.push_back(series.values.col(c).data() + K);
  constexpr int kPartBits = 10;
  constexpr std::size_t kParts = std::size_t{1} << kPartBits;
  std::vector<std::size_t> head(kParts + 1, 0);
  for (auto& k : keys) {
    k = mix64(k);
    ++head[(k >> (64 - kPartBits)) + 1];
  }
  for (std::size_t b = 0; b < kParts; ++b) head[b + 1] += head[b];
  auto& part_key = ws.part_key;
  auto& part_val = ws.part_val;
  part_key.resize(count);
  part_val.resize(count * T);
  {
    std::vector<std::size_t> pos(head.begin(), head.end() - 1);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t q = pos[keys[i] >> (64 - kPartBits)]++;
      part_key[q] = keys[i];
      for (std::size_t t = 0; t < T; ++t) part_val[q * T + t] = cols[t][i];
    }
  }
  // Per partition: slot_n counts members, and acc holds, per slot and target
  // component, the first member's value followed by the running sum and sum of
  // squares of deviations from it.
  auto& slot_key = ws.slot_key;
  auto& slot_n = ws.slot_n;
  auto& acc = ws.acc;
  std::vector<std::pair<double, double>> cell_stats;  // (sum of squares, dof)
  double total_ss = 0.0, total_dof = 0.0;
  for (std::size_t b = 0; b < kParts; ++b) {
    const std::size_t lo = head[b], hi = head[b + 1];
    if (hi - lo < 2) continue;
    std::size_t cap = 16;
    while (cap < 2 * (hi - lo)) cap <<= 1;
    const std::size_t mask = cap - 1;
    slot_key.resize(cap);
    slot_n.assign(cap, 0);
    acc.resize(cap * 3 * T);
    for (std::size_t q = lo; q < hi; ++q) {
      const std::uint64_t k = part_key[q];
      std::size_t h = static_cast<std::size_t>(k) & mask;
      while (slot_n[h] != 0 && slot_key[h] != k) h = (h + 1) & mask;
      const double* v = &part_val[q * T];
      double* a = &acc[h * 3 * T];
      if (slot_n[h]++ == 0) {
        slot_key[h] = k;
        for (std::size_t t = 0; t < T; ++t) {
          a[3 * t] = v[t];
          a[3 * t + 1] = 0.0;
          a[3 * t + 2] = 0.0;
        }
        continue;
      }
      for (std::size_t t = 0; t < T; ++t) {
        const double dv = v[t] - a[3 * t];
        a[3 * t + 1] += dv;
        a[3 * t + 2] += dv * dv;
      }
    }
    for (std::size_t h = 0; h < cap; ++h) {
      const std::size_t nc = slot_n[h];
      if (nc < 2) continue;
      const double* a = &acc[h * 3 * T];
      double ss = 0.0;
      for (std::size_t t = 0; t < T; ++t)
        ss += std::max(0.0, a[3 * t + 2] - a[3 * t + 1] * a[3 * t + 1] / static_cast<double>(nc));
      cell_stats.emplace_back(ss, static_cast<double>(nc - 1));
      total_ss += ss;
      total_dof += static_cast<double>(nc - 1);
    }
  }
  SpreadEstimate out;
  out.n_selected = static_cast<std::size_t>(total_dof);
  out.low_confidence = out.n_selected < options.min_count;
  if (total_dof < 1.0) return out;
  const double Td = static_cast<double>(T);
  out.sigma = std::sqrt(total_ss / (total_dof * Td));

  const std::size_t G = cell_stats.size();
  if (G >= 30 && options.bootstrap_resamples >= 2) {
    // Cells are the resampling units (m-out-of-n when there are many of them).
    const std::size_t m = std::min(G, options.bootstrap_max_cells);
    Rng rng(options.seed);
    std::vector<double> stats;
    stats.reserve(static_cast<std::size_t>(options.bootstrap_resamples));
    for (int r = 0; r < options.bootstrap_resamples; ++r) {
      double ss = 0.0, dof = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const auto k = static_cast<std::size_t>(rng.below(G));
        ss += cell_stats[k].first;
        dof += cell_stats[k].second;
      }
      stats.push_back(std::sqrt(ss / (dof * Td)));
    }
    out.std_error = sample_sd(stats) * std::sqrt(static_cast<double>(m) / static_cast<double>(G));
  } else {
    // Too few cells to resample: normal-theory standard error of a pooled sd.
    out.std_error = *out.sigma / std::sqrt(2.0 * total_dof * Td);
  }
  return out;
}

int ConstraintScheme::block_size() const {
  return blocks.empty() ? static_cast<int>(target_components.size())
                        : static_cast<int>(blocks.front().size());
}

std::vector<PastPair> ConstraintScheme::active_pairs(int n_blocks) const {
  if (n_blocks < 0 || n_blocks > static_cast<int>(blocks.size()))
    fail(ErrorKind::Precondition, "scheme has " + std::to_string(blocks.size()) +
                                      " blocks, requested " + std::to_string(n_blocks));
  std::vector<PastPair> out;
  for (int b = 0; b < n_blocks; ++b)
    out.insert(out.end(), blocks[static_cast<std::size_t>(b)].begin(),
               blocks[static_cast<std::size_t>(b)].end());
  return out;
}

void ConstraintScheme::validate(int d) const {
  if (target_components.empty()) fail(ErrorKind::Precondition, "scheme has no target components");
  std::set<int> seen_targets;
  for (int c : target_components) {
    if (c < 0 || c >= d) fail(ErrorKind::Precondition, "scheme target component out of range");
    if (!seen_targets.insert(c).second)
      fail(ErrorKind::Precondition, "scheme target component repeated");
  }
  if (binning == Binning::Pooled && window_shape != WindowShape::Uniform)
    fail(ErrorKind::Usage, "pooled binning requires uniform windows");
  std::set<std::pair<int, int>> seen;
  std::map<int, int> last_lag;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& block = blocks[b];
    if (block.empty()) fail(ErrorKind::Precondition, "scheme block " + std::to_string(b) + " is empty");
    if (block.size() != blocks.front().size())
      fail(ErrorKind::Precondition, "scheme blocks must all have the same size");
    for (const auto& p : block) {
      if (p.lag < 1 || p.component < 0 || p.component >= d || !std::isfinite(p.target))
        fail(ErrorKind::Precondition, "scheme block " + std::to_string(b) + " has an invalid pair");
      if (!seen.emplace(p.lag, p.component).second)
        fail(ErrorKind::Precondition, "scheme repeats (lag " + std::to_string(p.lag) +
                                          ", component " + std::to_string(p.component) + ")");
      auto it = last_lag.find(p.component);
      if (it != last_lag.end() && p.lag <= it->second)
        fail(ErrorKind::Precondition, "scheme lags must increase along the blocks for component " +
                                          std::to_string(p.component));
      last_lag[p.component] = p.lag;
    }
  }
}

namespace {

double column_target(const TimeSeries& series, int c, TargetMode mode) {
  if (mode == TargetMode::Zero) return 0.0;
  std::vector<double> v(series.values.col(c).data(),
                        series.values.col(c).data() + series.length());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double med = v[mid];
  if (v.size() % 2 == 0) {
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (med + lower);
  }
  return med;
}

std::vector<PastPair> lag_block(const TimeSeries& series, const std::vector<int>& comps, int lag,
                                TargetMode mode) {
  std::vector<PastPair> block;
  for (int c : comps) block.push_back({lag, c, column_target(series, c, mode)});
  return block;
}

}  // namespace

ConstraintScheme own_lag_scheme(const TimeSeries& series, const std::string& group, int n_max,
                                TargetMode targets) {
  if (n_max < 0) fail(ErrorKind::Precondition, "n_max must be non-negative");
  const auto& g = series.group(group);
  ConstraintScheme s;
  s.target_group = group;
  s.target_components = g.components;
  for (int k = 1; k <= n_max; ++k) s.blocks.push_back(lag_block(series, g.components, k, targets));
  return s;
}

ConstraintScheme mixed_scheme(const TimeSeries& series, const std::string& group_x,
                              const std::string& group_y, int n_max, TargetMode targets) {
  if (n_max < 0) fail(ErrorKind::Precondition, "n_max must be non-negative");
  const auto& gx = series.group(group_x);
  const auto& gy = series.group(group_y);
  if (gx.components.size() != gy.components.size())
    fail(ErrorKind::Precondition, "joint scheme needs groups of equal size ('" + group_x + "' has " +
                                      std::to_string(gx.components.size()) + ", '" + group_y +
                                      "' has " + std::to_string(gy.components.size()) + ")");
  ConstraintScheme s;
  s.target_group = group_x + "+" + group_y;
  s.target_components = gx.components;
  s.target_components.insert(s.target_components.end(), gy.components.begin(), gy.components.end());
  if (n_max >= 1) s.blocks.push_back(lag_block(series, gy.components, 1, targets));
  for (int k = 1; k < n_max; ++k) s.blocks.push_back(lag_block(series, gx.components, k, targets));
  return s;
}

std::vector<double> make_grid(double min, double max, int points_per_decade) {
  if (!(min > 0.0) || !(max > min) || !std::isfinite(max) || points_per_decade < 1)
    fail(ErrorKind::Usage, "grid needs 0 < min < max and points_per_decade >= 1");
  const double decades = std::log10(max / min);
  const auto steps = static_cast<int>(std::floor(decades * points_per_decade + 1e-9));
  std::vector<double> grid;
  for (int i = 0; i <= steps; ++i)
    grid.push_back(max * std::pow(10.0, -static_cast<double>(i) / points_per_decade));
  return grid;
}

void validate_grid(const std::vector<double>& grid) {
  if (grid.size() < 2) fail(ErrorKind::Precondition, "sigma_w grid needs at least two points");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0) || !std::isfinite(grid[i]))
      fail(ErrorKind::Precondition, "sigma_w grid values must be positive and finite");
    if (i > 0 && !(grid[i] < grid[i - 1]))
      fail(ErrorKind::Precondition, "sigma_w grid must be strictly decreasing");
  }
  const double decades = std::log10(grid.front() / grid.back());
  if (decades < 2.0 - 1e-9)
    fail(ErrorKind::Precondition, "sigma_w grid must span at least two decades");
  if (static_cast<double>(grid.size() - 1) / decades < 6.0 - 1e-9)
    fail(ErrorKind::Precondition, "sigma_w grid needs at least 6 points per decade");
}

DfCurveFamily curve_family(const TimeSeries& series, const ConstraintScheme& scheme,
                           const std::vector<double>& sigma_w_grid, int n_constr_max,
                           const CurveOptions& options) {
  series.validate();
  if (series.length() < kMinSeriesLength)
    fail(ErrorKind::Precondition, "series has " + std::to_string(series.length()) +
                                      " rows; df estimation needs at least " +
                                      std::to_string(kMinSeriesLength));
  scheme.validate(static_cast<int>(series.dim()));
  if (n_constr_max < 0 || n_constr_max > static_cast<int>(scheme.blocks.size()))
    fail(ErrorKind::Precondition, "n_constr_max must lie in 0.." + std::to_string(scheme.blocks.size()));
  validate_grid(sigma_w_grid);

  DfCurveFamily family;
  family.target_group = scheme.target_group;
  family.block_size = scheme.block_size();
  family.window_shape = scheme.window_shape;
  family.binning = scheme.binning;
  const std::size_t G = sigma_w_grid.size();
  for (int N = 0; N <= n_constr_max; ++N) {
    DfCurve c;
    c.n_constr = N;
    c.points.resize(G);
    family.curves.push_back(std::move(c));
  }
  // With no constraints the selection is the whole series, so the N = 0 value
  // does not depend on the bin width: compute it once and copy it along the grid.
  auto evaluate = [&](int N, std::size_t i, std::uint64_t seed_index) {
    SpreadOptions so = options.spread;
    so.seed = derive_seed(options.seed, seed_index);
    const auto active = scheme.active_pairs(N);
    const double sw = sigma_w_grid[i];
    const SpreadEstimate est =
        scheme.binning == Binning::Pooled
            ? pooled_conditional_spread(series, active, sw, scheme.target_components, so)
            : conditional_spread(series, active, sw, scheme.window_shape, scheme.target_components, so);
    auto& pt = family.curves[static_cast<std::size_t>(N)].points[i];
    pt.sigma_w = sw;
    pt.sigma_est = est.sigma;
    pt.std_error = est.std_error;
    pt.n_selected = est.n_selected;
  };
  evaluate(0, 0, 0);
  for (std::size_t i = 1; i < G; ++i) {
    family.curves[0].points[i] = family.curves[0].points[0];
    family.curves[0].points[i].sigma_w = sigma_w_grid[i];
  }
  parallel_for(static_cast<std::size_t>(n_constr_max), options.workers, [&](std::size_t c) {
    const int N = static_cast<int>(c) + 1;
    int sparse = 0;
    for (std::size_t i = 0; i < G; ++i) {
      if (options.sparse_stop > 0 && sparse >= options.sparse_stop) {
        family.curves[static_cast<std::size_t>(N)].points[i].sigma_w = sigma_w_grid[i];
        continue;
      }
      evaluate(N, i, static_cast<std::size_t>(N) * G + i);
      const auto& pt = family.curves[static_cast<std::size_t>(N)].points[i];
      sparse = pt.n_selected < options.spread.min_count ? sparse + 1 : 0;
    }
  });
  return family;
}

std::string to_string(CurveKind kind) {
  switch (kind) {
    case CurveKind::Plateau: return "plateau";
    case CurveKind::Vanishing: return "vanishing";
    case CurveKind::Ambiguous: return "ambiguous";
    case CurveKind::Unusable: return "unusable";
  }
  return "unusable";
}

namespace {

struct Fit {
  double slope = 0.0;
  double A = 0.0;
  double var_A = 0.0;
  double kappa = 0.0;
};

// Ordinary least squares slope of log sigma on log sigma_w, and the weighted fit
// sigma^2 = A + kappa * sigma_w^2 with kappa >= 0.
Fit fit_curve(const std::vector<const CurvePoint*>& pts) {
  Fit f;
  const auto n = static_cast<double>(pts.size());
  double mx = 0.0, my = 0.0;
  for (const auto* p : pts) {
    mx += std::log(p->sigma_w);
    my += std::log(*p->sigma_est);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto* p : pts) {
    const double dx = std::log(p->sigma_w) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(*p->sigma_est) - my);
  }
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;

  bool have_se = true;
  for (const auto* p : pts)
    if (!(p->std_error > 0.0)) have_se = false;
  double S = 0.0, Sx = 0.0, Sy = 0.0, Sxx = 0.0, Sxy = 0.0;
  std::vector<double> xs, ys, ws;
  for (const auto* p : pts) {
    const double x = p->sigma_w * p->sigma_w;
    const double y = *p->sigma_est * *p->sigma_est;
    const double sd_y = 2.0 * *p->sigma_est * p->std_error;
    const double w = have_se ? 1.0 / (sd_y * sd_y) : 1.0;
    xs.push_back(x);
    ys.push_back(y);
    ws.push_back(w);
    S += w;
    Sx += w * x;
    Sy += w * y;
    Sxx += w * x * x;
    Sxy += w * x * y;
  }
  const double det = S * Sxx - Sx * Sx;
  double A = Sy / S, kappa = 0.0, var_A = 1.0 / S;
  if (det > 0.0) {
    const double k = (S * Sxy - Sx * Sy) / det;
    if (k > 0.0) {
      kappa = k;
      A = (Sxx * Sy - Sx * Sxy) / det;
      var_A = Sxx / det;
    }
  }
  if (!have_se) {
    // Residual-based scale when no standard errors are available.
    double rss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double r = ys[i] - A - kappa * xs[i];
      rss += ws[i] * r * r;
    }
    const double dof = std::max(1.0, n - (kappa > 0.0 ? 2.0 : 1.0));
    var_A *= rss / dof;
  }
  f.A = A;
  f.kappa = kappa;
  f.var_A = var_A;
  return f;
}

struct Item {
  int n;
  double lo;
  double hi;
  double level;
  double se;
  bool point_level;                       // plateau with a measured level
  std::vector<const CurvePoint*> usable;  // decreasing sigma_w
};

// Ratio of the two lines at the narrowest width both measured, or 1 if none.
double ratio_at_common_width(const Item& a, const Item& b) {
  for (auto ia = a.usable.rbegin(); ia != a.usable.rend(); ++ia)
    for (const auto* pb : b.usable)
      if (std::abs(pb->sigma_w - (*ia)->sigma_w) <= 1e-12 * (*ia)->sigma_w) {
        const double va = *(*ia)->sigma_est, vb = *pb->sigma_est;
        return std::max(va, vb) / std::min(va, vb);
      }
  return 1.0;
}

bool floor_compatible(const Item& a, const Item& b, const PlateauOptions& options) {
  const double stretch = 1.0 / (1.0 - options.merge_rel_tol);
  if (!(a.lo <= b.hi * stretch && b.lo <= a.hi * stretch)) return false;
  if (a.point_level && b.point_level) return true;
  return ratio_at_common_width(a, b) <= options.line_ratio_max;
}

}  // namespace

PlateauReport classify_plateaus(const DfCurveFamily& family, const PlateauOptions& options) {
  if (!(options.merge_rel_tol > 0.0 && options.merge_rel_tol < 1.0))
    fail(ErrorKind::Usage, "merge tolerance must lie in (0, 1)");
  if (!(options.slope_threshold < options.vanish_slope))
    fail(ErrorKind::Usage, "slope threshold must be below the vanishing slope");
  PlateauReport report;
  std::vector<Item> items;
  bool any_unambiguous = false;
  for (const auto& curve : family.curves) {
    CurveClass cc;
    cc.n_constr = curve.n_constr;
    std::vector<const CurvePoint*> usable;
    for (const auto& p : curve.points)
      if (p.sigma_est && *p.sigma_est > 0.0 && p.n_selected >= options.min_count) usable.push_back(&p);
    if (usable.empty()) {
      cc.note = "no usable points";
      report.curves.push_back(cc);
      continue;
    }
    double s_min = usable.front()->sigma_w;
    for (const auto* p : usable) s_min = std::min(s_min, p->sigma_w);
    std::vector<const CurvePoint*> window;
    for (const auto* p : usable)
      if (p->sigma_w <= s_min * 10.0 * (1.0 + 1e-9)) window.push_back(p);
    std::sort(window.begin(), window.end(),
              [](const CurvePoint* a, const CurvePoint* b) { return a->sigma_w > b->sigma_w; });
    cc.n_points = static_cast<int>(window.size());
    cc.fit_min_sigma_w = s_min;
    cc.fit_max_sigma_w = window.front()->sigma_w;
    if (cc.n_points < options.min_points) {
      cc.note = "fewer than " + std::to_string(options.min_points) +
                " usable points in the smallest decade";
      report.curves.push_back(cc);
      continue;
    }
    const Fit fit = fit_curve(window);
    cc.slope = fit.slope;
    double mean = 0.0;
    for (const auto* p : window) mean += *p->sigma_est;
    cc.mean_level = mean / static_cast<double>(window.size());
    cc.upper = *window.back()->sigma_est;
    const double extrapolated = fit.A > 0.0 ? std::sqrt(fit.A) : 0.0;
    const double sd_A = std::sqrt(std::max(fit.var_A, 0.0));
    if (fit.slope < options.slope_threshold) {
      cc.kind = CurveKind::Plateau;
      cc.positive_level = true;
      cc.level = extrapolated > 0.0 ? extrapolated : cc.mean_level;
      any_unambiguous = true;
    } else if (fit.slope >= options.vanish_slope) {
      cc.kind = CurveKind::Vanishing;
      cc.positive_level = false;
      cc.level = 0.0;
      any_unambiguous = true;
    } else {
      // Still falling at the smallest usable width: the limit is only known to
      // lie between zero and the last measured value.
      cc.kind = CurveKind::Ambiguous;
      cc.positive_level = false;
      cc.level = 0.0;
      cc.note = "intermediate slope; level bounded above by the smallest-width value";
    }
    cc.level_se = cc.positive_level && cc.level > 0.0 ? sd_A / (2.0 * cc.level) : std::sqrt(sd_A);
    report.curves.push_back(cc);
    std::sort(usable.begin(), usable.end(),
              [](const CurvePoint* a, const CurvePoint* b) { return a->sigma_w > b->sigma_w; });
    if (cc.positive_level)
      items.push_back({cc.n_constr, cc.level, cc.level, cc.level, cc.level_se, true, usable});
    else
      items.push_back({cc.n_constr, 0.0, cc.upper, 0.0, cc.level_se, false, usable});
  }
  if (items.empty())
    fail(ErrorKind::Ambiguous,
         "no curve has enough usable points in its smallest decade; extend the sigma_w grid or "
         "supply a longer series");
  if (!any_unambiguous)
    fail(ErrorKind::Ambiguous,
         "every curve has an intermediate slope; refine the sigma_w grid toward smaller widths or "
         "supply a longer series");

  // Floor: chain from the lowest line through compatible levels.
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    if (a.lo != b.lo) return a.lo < b.lo;
    return a.hi != b.hi ? a.hi < b.hi : a.n < b.n;
  });
  std::vector<bool> in_floor(items.size(), false);
  in_floor[0] = true;
  for (bool grew = true; grew;) {
    grew = false;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (in_floor[i]) continue;
      for (std::size_t j = 0; j < items.size(); ++j)
        if (in_floor[j] && floor_compatible(items[i], items[j], options)) {
          in_floor[i] = grew = true;
          break;
        }
    }
  }
  double floor_sum = 0.0, floor_upper = 0.0;
  int floor_positive = 0;
  std::vector<Item> rest;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (in_floor[i]) {
      report.floor.members.push_back(items[i].n);
      floor_upper += items[i].hi;
      if (items[i].level > 0.0) {
        floor_sum += items[i].level;
        ++floor_positive;
      }
    } else {
      rest.push_back(items[i]);
      // A falling line outside the floor is represented by its last measured value.
      if (!rest.back().point_level) rest.back().level = rest.back().hi;
    }
  }
  std::sort(report.floor.members.begin(), report.floor.members.end());
  report.floor.level = floor_positive > 0 ? floor_sum / floor_positive : 0.0;
  report.floor.upper = floor_upper / static_cast<double>(report.floor.members.size());

  // Above the floor: merge only lines that agree within tolerance and within the SE band.
  std::sort(rest.begin(), rest.end(),
            [](const Item& a, const Item& b) { return a.level > b.level; });
  std::vector<int> cluster_of(rest.size(), -1);
  int clusters = 0;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    if (cluster_of[i] >= 0) continue;
    cluster_of[i] = clusters;
    for (bool grew = true; grew;) {
      grew = false;
      for (std::size_t j = 0; j < rest.size(); ++j) {
        if (cluster_of[j] >= 0) continue;
        for (std::size_t k = 0; k < rest.size(); ++k) {
          if (cluster_of[k] != clusters) continue;
          const double diff = std::abs(rest[j].level - rest[k].level);
          const double within_tol = options.merge_rel_tol * std::max(rest[j].level, rest[k].level);
          const double band = options.se_multiplier * std::hypot(rest[j].se, rest[k].se);
          if (diff <= within_tol && diff <= band) {
            cluster_of[j] = clusters;
            grew = true;
            break;
          }
        }
      }
    }
    ++clusters;
  }
  for (int c = 0; c < clusters; ++c) {
    PlateauCluster pc;
    double sum = 0.0, upper = 0.0;
    for (std::size_t i = 0; i < rest.size(); ++i)
      if (cluster_of[i] == c) {
        pc.members.push_back(rest[i].n);
        sum += rest[i].level;
        upper += rest[i].hi;
      }
    pc.level = sum / static_cast<double>(pc.members.size());
    pc.upper = upper / static_cast<double>(pc.members.size());
    std::sort(pc.members.begin(), pc.members.end());
    report.above_floor.push_back(pc);
  }
  for (const auto& cc : report.curves)
    if (cc.kind == CurveKind::Unusable)
      report.notes.push_back("curve N=" + std::to_string(cc.n_constr) + " unusable: " + cc.note);
  return report;
}

DfEstimate infer_df(const PlateauReport& report, int block_size) {
  if (block_size < 1) fail(ErrorKind::Precondition, "block size must be positive");
  if (report.floor.members.empty()) fail(ErrorKind::Precondition, "plateau report has no floor");
  DfEstimate est;
  est.block_size = block_size;
  est.df_blocks = report.floor.members.front();
  est.df = est.df_blocks * block_size;
  est.cross_check_blocks = static_cast<int>(report.above_floor.size());
  for (const auto& c : report.above_floor) est.plateau_levels.push_back(c.level);
  est.noise_floor = report.floor.level;
  std::vector<std::string> notes = report.notes;

  int max_classified = -1;
  for (const auto& cc : report.curves)
    if (cc.kind != CurveKind::Unusable) max_classified = std::max(max_classified, cc.n_constr);
  if (est.df_blocks == max_classified && max_classified > 0 && report.floor.members.size() == 1) {
    est.lower_bound = true;
    notes.push_back("only the last classified curve (N=" + std::to_string(max_classified) +
                    ") reaches the floor; df is a lower bound");
  }
  if (est.cross_check_blocks != est.df_blocks) {
    est.ambiguous = true;
    notes.push_back("floor count (" + std::to_string(est.df_blocks) + " blocks) disagrees with " +
                    std::to_string(est.cross_check_blocks) + " distinct plateau clusters above the floor");
  }
  for (const auto& cc : report.curves) {
    const bool floor_member = std::find(report.floor.members.begin(), report.floor.members.end(),
                                        cc.n_constr) != report.floor.members.end();
    if (cc.kind != CurveKind::Unusable && cc.n_constr > est.df_blocks && !floor_member)
      notes.push_back("curve N=" + std::to_string(cc.n_constr) + " lies above the floor although N=" +
                      std::to_string(est.df_blocks) + " reaches it");
    if (cc.kind == CurveKind::Ambiguous)
      notes.push_back("curve N=" + std::to_string(cc.n_constr) + ": " + cc.note);
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < notes.size(); ++i) os << (i ? "; " : "") << notes[i];
  est.confidence_notes = os.str();
  return est;
}

DfResult estimate_df(const TimeSeries& series, const ConstraintScheme& scheme,
                     const std::vector<double>& sigma_w_grid, int n_constr_max,
                     const CurveOptions& curve_options, const PlateauOptions& plateau_options) {
  DfResult r;
  r.family = curve_family(series, scheme, sigma_w_grid, n_constr_max, curve_options);
  r.report = classify_plateaus(r.family, plateau_options);
  r.estimate = infer_df(r.report, r.family.block_size);
  return r;
}

}  // namespace dfc
