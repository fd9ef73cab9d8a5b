#include "dfcausal/causal_verdict.hpp"

#include "dfcausal/rng.hpp"

#include <algorithm>
#include <cmath>

namespace dfc {

std::string to_string(Relation relation) {
  switch (relation) {
    case Relation::Independent: return "Independent";
    case Relation::XDrivesY: return "XDrivesY";
    case Relation::YDrivesX: return "YDrivesX";
    case Relation::Bidirectional: return "Bidirectional";
    case Relation::CommonDriver: return "CommonDriver";
    case Relation::Undetermined: return "Undetermined";
  }
  return "Undetermined";
}

std::string to_string(ProbeStatus status) {
  switch (status) {
    case ProbeStatus::Detected: return "detected";
    case ProbeStatus::NotDetected: return "not-detected";
    case ProbeStatus::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

CausalVerdict verdict(const OrderTriple& t) {
  CausalVerdict v;
  v.orders = t;
  const int ox = t.o_x, oy = t.o_y, oj = t.o_j, sum = t.o_x + t.o_y;
  if (ox < 0 || oy < 0 || oj < 0) {
    v.notes = "orders must be non-negative";
    return v;
  }
  if (oj < std::max(ox, oy) || oj > sum) {
    v.notes = "joint order " + std::to_string(oj) + " outside [max(o_x, o_y), o_x + o_y] = [" +
              std::to_string(std::max(ox, oy)) + ", " + std::to_string(sum) + "]";
    return v;
  }
  if (ox < oj && oy < oj && oj == sum) {
    v.relation = Relation::Independent;
  } else if (ox < oy && oy == oj && oj < sum) {
    v.relation = Relation::XDrivesY;
  } else if (oy < ox && ox == oj && oj < sum) {
    v.relation = Relation::YDrivesX;
  } else if (ox == oy && oy == oj && oj < sum) {
    v.relation = Relation::Bidirectional;
  } else if (ox < oj && oy < oj && oj < sum) {
    v.relation = Relation::CommonDriver;
  } else {
    v.notes = "order triple matches no decision row";
  }
  return v;
}

namespace {

DfResult run_estimate(const TimeSeries& series, const ConstraintScheme& scheme,
                      const PairConfig& config, std::uint64_t stream, std::string& notes) {
  DfResult r;
  CurveOptions co = config.curve;
  co.seed = derive_seed(config.curve.seed, stream);
  r.family = curve_family(series, scheme, config.sigma_w_grid, config.n_constr_max, co);
  try {
    r.report = classify_plateaus(r.family, config.plateau);
    r.estimate = infer_df(r.report, r.family.block_size);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Ambiguous) throw;
    r.estimate.ambiguous = true;
    r.estimate.block_size = r.family.block_size;
    r.estimate.confidence_notes = e.what();
  }
  auto add = [&](const std::string& s) { notes += (notes.empty() ? "" : "; ") + s; };
  if (r.estimate.ambiguous)
    add(scheme.target_group + " estimate ambiguous: " + r.estimate.confidence_notes);
  else if (r.estimate.lower_bound)
    add(scheme.target_group + " estimate is only a lower bound");
  return r;
}

}  // namespace

PairAnalysis analyze_pair(const TimeSeries& series, const std::string& group_x,
                          const std::string& group_y, const PairConfig& config) {
  series.validate();
  if (group_x == group_y) fail(ErrorKind::Precondition, "analyze_pair needs two different groups");
  PairAnalysis out;
  out.group_x = group_x;
  out.group_y = group_y;
  auto tune = [&](ConstraintScheme s) {
    s.window_shape = config.window_shape;
    s.binning = config.binning;
    return s;
  };
  const auto sx = tune(own_lag_scheme(series, group_x, config.n_constr_max, config.targets));
  const auto sy = tune(own_lag_scheme(series, group_y, config.n_constr_max, config.targets));
  const auto sj = tune(mixed_scheme(series, group_x, group_y, config.n_constr_max, config.targets));
  std::string notes;
  out.x = run_estimate(series, sx, config, 1, notes);
  out.y = run_estimate(series, sy, config, 2, notes);
  out.joint = run_estimate(series, sj, config, 3, notes);

  OrderTriple t{out.x.estimate.df_blocks, out.y.estimate.df_blocks, out.joint.estimate.df_blocks,
                out.x.family.block_size};
  if (!notes.empty()) {
    out.verdict.orders = t;
    out.verdict.relation = Relation::Undetermined;
    out.verdict.notes = notes;
    return out;
  }
  if (out.y.family.block_size != t.unit || out.joint.family.block_size != t.unit) {
    out.verdict.orders = t;
    out.verdict.notes = "block sizes differ between the three estimations";
    return out;
  }
  out.verdict = verdict(t);
  return out;
}

ProbeReport driving_probe(const TimeSeries& series, const std::string& source_group,
                          const std::string& target_group, const std::vector<double>& sigma_w_grid,
                          const ProbeOptions& options) {
  series.validate();
  if (source_group == target_group)
    fail(ErrorKind::Precondition, "driving_probe needs two different groups");
  const auto& src = series.group(source_group);
  const auto& tgt = series.group(target_group);
  if (series.length() < 3) fail(ErrorKind::Precondition, "series too short for a lag-1 probe");
  if (sigma_w_grid.empty()) fail(ErrorKind::Precondition, "empty bin grid");
  for (double s : sigma_w_grid)
    if (!(s > 0.0) || !std::isfinite(s))
      fail(ErrorKind::Precondition, "bin widths must be positive and finite");

  ProbeReport rep;
  rep.source = source_group;
  rep.target = target_group;
  std::vector<PastPair> active;
  for (int c : src.components) active.push_back({1, c, 0.0});
  SpreadOptions so;
  so.min_count = options.min_count;
  so.bootstrap_resamples = options.bootstrap_resamples;
  so.seed = derive_seed(options.seed, 0);
  rep.unconditional_target_sd =
      conditional_spread(series, {}, 1.0, WindowShape::Uniform, tgt.components, so).sigma.value_or(0.0);
  rep.unconditional_source_sd =
      conditional_spread(series, {}, 1.0, WindowShape::Uniform, src.components, so).sigma.value_or(0.0);

  bool any_usable = false;
  bool detected = false;
  for (std::size_t i = 0; i < sigma_w_grid.size(); ++i) {
    ProbePoint p;
    p.sigma_w = sigma_w_grid[i];
    so.seed = derive_seed(options.seed, 2 * i + 1);
    const auto t = conditional_spread(series, active, p.sigma_w, WindowShape::Uniform, tgt.components, so);
    so.seed = derive_seed(options.seed, 2 * i + 2);
    const auto s = conditional_spread(series, active, p.sigma_w, WindowShape::Uniform, src.components, so);
    p.n_selected = t.n_selected;
    p.target_sd = t.sigma;
    p.target_se = t.std_error;
    p.source_sd = s.sigma;
    p.source_se = s.std_error;
    if (p.n_selected >= options.min_count && p.target_sd) {
      any_usable = true;
      const double drop = rep.unconditional_target_sd - *p.target_sd;
      if (p.target_se > 0.0) {
        const double z = drop / p.target_se;
        if (!rep.strongest_sigma_w || z > rep.strongest_drop_se) {
          rep.strongest_sigma_w = p.sigma_w;
          rep.strongest_drop_se = z;
        }
        if (drop > options.se_multiplier * p.target_se) detected = true;
      }
    }
    rep.points.push_back(p);
  }
  rep.status = !any_usable ? ProbeStatus::Inconclusive
                           : (detected ? ProbeStatus::Detected : ProbeStatus::NotDetected);
  return rep;
}

}  // namespace dfc
