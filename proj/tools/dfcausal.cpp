// dfcausal: command-line front end for simulation, df curves, df estimation,
// pairwise verdicts, analytic conditioning and the chicken-egg pipeline.

#include "json_config.hpp"

#include "dfcausal/analytic_conditional.hpp"
#include "dfcausal/causal_verdict.hpp"
#include "dfcausal/data_io.hpp"
#include "dfcausal/df_estimator.hpp"
#include "dfcausal/gaussian_engine.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace dfc;

namespace {

struct GlobalOpts {
  std::uint64_t seed = 1;
  std::string out = "dfcausal_out";
  bool json = false;
  unsigned workers = 0;
};

// Where the series comes from: a simulated system or a CSV file.
struct SourceOpts {
  std::string preset;
  std::string spec_file;
  std::string params_file;
  std::string coupling;
  std::size_t steps = 1000000;
  std::size_t burn_in = 10000;
  std::string input;
  bool no_header = false;
  std::vector<std::string> drop;
  bool difference = false;
  bool normalize = false;
  std::vector<std::string> groups;
};

struct EstimationOpts {
  double grid_min = 1e-4;
  double grid_max = 1.0;
  int ppd = 6;
  std::vector<double> grid;
  int n_max = 4;
  std::string window = "uniform";
  std::string binning = "pooled";
  std::string targets = "zero";
  int bootstrap = 200;
  std::size_t min_count = 30;
  int sparse_stop = 2;
  double slope = 0.2;
  double vanish = 0.7;
  double merge = 0.15;
  double se_mult = 3.0;
  double line_ratio = 2.0;
};

// ---------------------------------------------------------------------------
// Option registration

void add_system_source(CLI::App* app, SourceOpts& s) {
  auto* preset = app->add_option("--preset", s.preset, "example system: stochastic or deterministic")
                     ->check(CLI::IsMember({"stochastic", "deterministic"}));
  auto* spec = app->add_option("--spec", s.spec_file, "JSON system spec (Q, S, names, subsystems)");
  auto* params = app->add_option("--params", s.params_file, "JSON example parameters");
  preset->excludes(spec);
  spec->excludes(params);
  app->add_option("--coupling", s.coupling, "override the example coupling")
      ->check(CLI::IsMember({"matched", "first_component"}))
      ->excludes(spec);
}

void add_series_source(CLI::App* app, SourceOpts& s) {
  add_system_source(app, s);
  app->add_option("--steps", s.steps, "simulated steps")->capture_default_str();
  app->add_option("--burn-in", s.burn_in, "discarded steps before recording")->capture_default_str();
  auto* input = app->add_option("--input", s.input, "CSV series (one column per component)");
  input->excludes("--preset")->excludes("--spec")->excludes("--params");
  app->add_flag("--no-header", s.no_header, "CSV has no header row")->needs(input);
  app->add_option("--drop", s.drop, "CSV columns to ignore")->needs(input);
  app->add_flag("--difference", s.difference, "use first differences of the CSV columns")->needs(input);
  app->add_flag("--normalize", s.normalize, "demean and scale CSV columns to unit variance")
      ->needs(input);
  app->add_option("--group", s.groups,
                  "group definition name=col,col (columns by name or index); "
                  "default: one group per column")
      ->needs(input);
}

void add_estimation(CLI::App* app, EstimationOpts& e) {
  app->add_option("--grid-min", e.grid_min, "narrowest window")->capture_default_str();
  app->add_option("--grid-max", e.grid_max, "widest window")->capture_default_str();
  app->add_option("--ppd", e.ppd, "grid points per decade")->capture_default_str();
  app->add_option("--grid", e.grid, "explicit decreasing window list (overrides min/max/ppd)")
      ->delimiter(',');
  app->add_option("--n-max", e.n_max, "largest number of constraint blocks")->capture_default_str();
  app->add_option("--window", e.window, "window shape")
      ->check(CLI::IsMember({"uniform", "gaussian"}))
      ->capture_default_str();
  app->add_option("--binning", e.binning, "bin layout")
      ->check(CLI::IsMember({"pooled", "fixed"}))
      ->capture_default_str();
  app->add_option("--targets", e.targets, "constraint targets")
      ->check(CLI::IsMember({"zero", "median"}))
      ->capture_default_str();
  app->add_option("--bootstrap", e.bootstrap, "bootstrap resamples")->capture_default_str();
  app->add_option("--min-count", e.min_count, "fewest selected points for a usable estimate")
      ->capture_default_str();
  app->add_option("--sparse-stop", e.sparse_stop,
                  "stop a curve after this many consecutive sparse widths (0: never)")
      ->capture_default_str();
  app->add_option("--slope-threshold", e.slope, "largest log-log slope of a plateau")
      ->capture_default_str();
  app->add_option("--vanish-slope", e.vanish, "smallest log-log slope of a vanishing line")
      ->capture_default_str();
  app->add_option("--merge-tol", e.merge, "relative tolerance for merging levels")
      ->capture_default_str();
  app->add_option("--se-mult", e.se_mult, "standard-error multiplier for level agreement")
      ->capture_default_str();
  app->add_option("--line-ratio", e.line_ratio,
                  "largest ratio between a falling line and the floor it joins")
      ->capture_default_str();
}

// ---------------------------------------------------------------------------
// Helpers

Json parse_json_file(const std::string& path) {
  const std::string text = read_text(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, path + ": " + e.what());
  }
}

LinearSystemSpec resolve_spec(const SourceOpts& s) {
  if (!s.spec_file.empty()) return spec_from_json(parse_json_file(s.spec_file));
  ExampleParams p = !s.params_file.empty()
                        ? params_from_json(parse_json_file(s.params_file))
                        : ExampleParams::preset(s.preset.empty() ? "stochastic" : s.preset);
  if (s.coupling == "matched") p.coupling = Coupling::Matched;
  if (s.coupling == "first_component") p.coupling = Coupling::FirstComponent;
  return build_example_system(p);
}

int column_index(const std::vector<std::string>& names, const std::string& token) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == token) return static_cast<int>(i);
  try {
    std::size_t used = 0;
    const int idx = std::stoi(token, &used);
    if (used == token.size() && idx >= 0 && idx < static_cast<int>(names.size())) return idx;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::Usage, "unknown column '" + token + "'");
}

std::vector<Subsystem> parse_groups(const std::vector<std::string>& defs,
                                    const std::vector<std::string>& names) {
  std::vector<Subsystem> groups;
  if (defs.empty()) {
    for (std::size_t i = 0; i < names.size(); ++i)
      groups.push_back({names[i], {static_cast<int>(i)}});
    return groups;
  }
  for (const auto& def : defs) {
    const auto eq = def.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == def.size())
      fail(ErrorKind::Usage, "group definition '" + def + "' must look like name=col,col");
    Subsystem g{def.substr(0, eq), {}};
    std::string rest = def.substr(eq + 1);
    std::size_t start = 0;
    while (start <= rest.size()) {
      const auto comma = rest.find(',', start);
      const auto token = rest.substr(start, comma == std::string::npos ? std::string::npos
                                                                       : comma - start);
      g.components.push_back(column_index(names, token));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

TimeSeries resolve_series(const SourceOpts& s, std::uint64_t seed) {
  if (s.input.empty()) return sample_trajectory(resolve_spec(s), s.steps, seed, s.burn_in);
  RawTable table = load_csv(s.input, !s.no_header);
  for (const auto& col : s.drop) table = drop_column(table, col);
  if (s.difference) table.values = difference(table.values);
  if (s.normalize) table.values = normalize_unit_variance(table.values, table.names);
  TimeSeries ts;
  ts.values = table.values;
  ts.names = table.names;
  ts.subsystems = parse_groups(s.groups, table.names);
  ts.validate();
  return ts;
}

std::vector<double> resolve_grid(const EstimationOpts& e) {
  return e.grid.empty() ? make_grid(e.grid_min, e.grid_max, e.ppd) : e.grid;
}

CurveOptions curve_options(const EstimationOpts& e, const GlobalOpts& g) {
  CurveOptions c;
  c.workers = g.workers;
  c.seed = g.seed;
  c.sparse_stop = e.sparse_stop;
  c.spread.bootstrap_resamples = e.bootstrap;
  c.spread.min_count = e.min_count;
  return c;
}

PlateauOptions plateau_options(const EstimationOpts& e) {
  PlateauOptions p;
  p.slope_threshold = e.slope;
  p.vanish_slope = e.vanish;
  p.merge_rel_tol = e.merge;
  p.se_multiplier = e.se_mult;
  p.line_ratio_max = e.line_ratio;
  p.min_count = e.min_count;
  return p;
}

TargetMode target_mode(const std::string& s) { return s == "median" ? TargetMode::Median : TargetMode::Zero; }

std::string file_label(const std::string& name) {
  std::string out;
  for (char c : name) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-') ? c : '_';
  return out.empty() ? "series" : out;
}

fs::path prepare_out(const GlobalOpts& g) {
  const fs::path dir(g.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Options that change results. Output location, output style and the thread
// count are left out so that reruns with different settings compare equal.
Json resolved_config(const CLI::App& app) {
  static const std::vector<std::string> skip = {"help", "config", "out", "json", "workers", "version"};
  Json j = Json::object();
  for (const CLI::Option* opt : app.get_options({})) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (std::find(skip.begin(), skip.end(), name) != skip.end()) continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      j[name] = r.size() == 1 ? Json(r.front()) : Json(r);
    } else if (!opt->get_default_str().empty()) {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

void write_provenance(const fs::path& dir, const CLI::App& app, const CLI::App& sub,
                      const GlobalOpts& g) {
  Json config = resolved_config(app);
  config[sub.get_name()] = resolved_config(sub);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(fnv1a(config.dump())));
  Json p;
  p["tool"] = "dfcausal";
  p["version"] = DFCAUSAL_VERSION;
  p["command"] = sub.get_name();
  p["seed"] = g.seed;
  p["config_hash"] = hash;
  p["config"] = config;
  write_text(dir / "provenance.json", dump_json(p));
}

void emit(const GlobalOpts& g, const Json& report, const std::string& human) {
  if (g.json)
    std::cout << dump_json(report);
  else
    std::cout << human;
}

std::string summarize_family(const DfCurveFamily& fam) {
  std::string s = "target " + fam.target_group + ", block size " + std::to_string(fam.block_size) +
                  ", " + to_string(fam.window_shape) + " windows, " + to_string(fam.binning) +
                  " bins\n";
  for (const auto& c : fam.curves) {
    int usable = 0;
    const CurvePoint* last = nullptr;
    for (const auto& p : c.points)
      if (p.sigma_est) {
        ++usable;
        last = &p;
      }
    s += "  N=" + std::to_string(c.n_constr) + ": " + std::to_string(usable) + " usable widths";
    if (last)
      s += ", narrowest " + format_number(last->sigma_w) + " -> spread " +
           format_number(*last->sigma_est) + " (n=" + std::to_string(last->n_selected) + ")";
    s += "\n";
  }
  return s;
}

std::string summarize_df(const DfEstimate& e) {
  std::string s = "df = " + std::to_string(e.df) + " (" + std::to_string(e.df_blocks) +
                  " blocks of " + std::to_string(e.block_size) + ")";
  if (e.lower_bound) s += ", lower bound";
  if (e.ambiguous) s += ", ambiguous";
  s += "\n";
  if (!e.confidence_notes.empty()) s += "  " + e.confidence_notes + "\n";
  return s;
}

std::string describe(Relation r, const std::string& x, const std::string& y) {
  switch (r) {
    case Relation::Independent: return x + " and " + y + " independent";
    case Relation::XDrivesY: return x + " -> " + y;
    case Relation::YDrivesX: return y + " -> " + x;
    case Relation::Bidirectional: return x + " <-> " + y;
    case Relation::CommonDriver: return "common driver of " + x + " and " + y;
    case Relation::Undetermined: break;
  }
  return "undetermined";
}

ConstraintScheme build_scheme(const TimeSeries& ts, const std::string& scheme_file,
                              const std::string& target, const std::string& with,
                              const EstimationOpts& e) {
  if (!scheme_file.empty()) {
    auto scheme = scheme_from_json(parse_json_file(scheme_file));
    scheme.validate(static_cast<int>(ts.dim()));
    return scheme;
  }
  if (target.empty()) fail(ErrorKind::Usage, "--target (or --scheme) is required");
  auto scheme = with.empty() ? own_lag_scheme(ts, target, e.n_max, target_mode(e.targets))
                             : mixed_scheme(ts, target, with, e.n_max, target_mode(e.targets));
  scheme.window_shape = window_shape_from_string(e.window);
  scheme.binning = binning_from_string(e.binning);
  return scheme;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return 1;
    case ErrorKind::Precondition:
    case ErrorKind::Divergence:
    case ErrorKind::InsufficientData: return 2;
    case ErrorKind::Ambiguous: return 3;
    case ErrorKind::Io:
    case ErrorKind::Parse: return 4;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Degrees-of-freedom estimation and causal verdicts for linear stochastic systems",
               "dfcausal"};
  app.set_version_flag("--version", DFCAUSAL_VERSION);
  app.config_formatter(std::make_shared<cli::JsonConfig>());
  app.set_config("--config", "", "JSON config file; command-line flags override it");
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_flag("--json", g.json, "print the report as JSON on stdout");
  app.add_option("--workers", g.workers, "worker threads (0: all cores)")->capture_default_str();

  // simulate
  SourceOpts sim_src;
  auto* sim = app.add_subcommand("simulate", "simulate a linear system and write the trajectory");
  add_system_source(sim, sim_src);
  sim->add_option("--steps", sim_src.steps, "recorded steps")->capture_default_str();
  sim->add_option("--burn-in", sim_src.burn_in, "discarded steps")->capture_default_str();

  // curves and df share the series and estimation options
  SourceOpts cur_src;
  EstimationOpts cur_est;
  std::string cur_target, cur_with, cur_scheme;
  auto* curves = app.add_subcommand("curves", "compute the df curve family for one target group");
  add_series_source(curves, cur_src);
  add_estimation(curves, cur_est);
  curves->add_option("--target", cur_target, "target group");
  curves->add_option("--with", cur_with, "second group for the joint (mixed) scheme");
  curves->add_option("--scheme", cur_scheme, "JSON constraint scheme (overrides --target)");

  SourceOpts df_src;
  EstimationOpts df_est;
  std::string df_target, df_with, df_scheme, df_curves;
  int df_block = 0;
  auto* dfc = app.add_subcommand("df", "estimate the degrees of freedom of one target group");
  add_series_source(dfc, df_src);
  add_estimation(dfc, df_est);
  dfc->add_option("--target", df_target, "target group");
  dfc->add_option("--with", df_with, "second group for the joint (mixed) scheme");
  dfc->add_option("--scheme", df_scheme, "JSON constraint scheme (overrides --target)");
  auto* df_curves_opt =
      dfc->add_option("--curves", df_curves, "read an exported curve family (.csv or .json)");
  df_curves_opt->excludes("--preset")->excludes("--spec")->excludes("--params")->excludes("--input");
  dfc->add_option("--block-size", df_block,
                  "components per block for a CSV curve family (default 1)")
      ->needs(df_curves_opt);

  // verdict
  SourceOpts ver_src;
  EstimationOpts ver_est;
  std::vector<std::string> pair;
  bool ver_probe = false;
  auto* ver = app.add_subcommand("verdict", "causal relation between two groups");
  add_series_source(ver, ver_src);
  add_estimation(ver, ver_est);
  ver->add_option("--pair", pair, "the two groups x y")->expected(2)->required();
  ver->add_flag("--probe", ver_probe, "also run the lag-1 driving probe in both directions");

  // analytic
  SourceOpts an_src;
  std::string an_group;
  std::vector<int> an_components, an_lags{1, 2, 3, 4};
  std::vector<double> an_sigma{1e-3, 1e-2, 1e-1}, an_targets;
  std::string an_window = "gaussian";
  std::size_t an_mc = 0;
  auto* an = app.add_subcommand("analytic", "closed-form present-state beliefs under past constraints");
  add_system_source(an, an_src);
  auto* an_group_opt = an->add_option("--group", an_group, "constrained group (default z, else all)");
  an->add_option("--components", an_components, "constrained component indices")
      ->delimiter(',')
      ->excludes(an_group_opt);
  an->add_option("--lags", an_lags, "largest lags to evaluate (each L constrains lags 1..L)")
      ->delimiter(',')
      ->capture_default_str();
  an->add_option("--sigma-w", an_sigma, "window standard deviations")
      ->delimiter(',')
      ->capture_default_str();
  an->add_option("--target-values", an_targets, "one target per constrained component (default 0)")
      ->delimiter(',');
  an->add_option("--window", an_window, "window shape")
      ->check(CLI::IsMember({"uniform", "gaussian"}))
      ->capture_default_str();
  an->add_option("--mc", an_mc, "Monte Carlo samples per entry (0: skip)")->capture_default_str();

  // chickenegg
  std::string ce_input;
  ChickenEggOptions ce;
  double ce_min = 0.1, ce_max = 2.0;
  int ce_ppd = 6;
  bool ce_no_demean = false;
  auto* chk = app.add_subcommand("chickenegg", "driving probe on the chicken and egg series");
  chk->add_option("--input", ce_input, "CSV with year, chicken and egg columns")->required();
  chk->add_option("--chicken-col", ce.chicken_column, "chicken column prefix")->capture_default_str();
  chk->add_option("--egg-col", ce.egg_column, "egg column prefix")->capture_default_str();
  chk->add_option("--drop", ce.drop, "column to ignore")->capture_default_str();
  chk->add_flag("--no-demean", ce_no_demean, "scale without subtracting the mean");
  chk->add_option("--grid-min", ce_min, "narrowest bin")->capture_default_str();
  chk->add_option("--grid-max", ce_max, "widest bin")->capture_default_str();
  chk->add_option("--ppd", ce_ppd, "grid points per decade")->capture_default_str();
  chk->add_option("--min-count", ce.probe.min_count, "fewest points in a usable bin")
      ->capture_default_str();
  chk->add_option("--se-mult", ce.probe.se_multiplier, "standard errors for a significant drop")
      ->capture_default_str();
  chk->add_option("--bootstrap", ce.probe.bootstrap_resamples, "bootstrap resamples")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::FileError& e) {
    std::cerr << "dfcausal: " << e.what() << "\n";
    return 4;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) {
      const auto spec = resolve_spec(sim_src);
      const Matrix C = stationary_covariance(spec);
      const double rho = spectral_radius(spec.Q);
      const auto ts = sample_trajectory(spec, sim_src.steps, g.seed, sim_src.burn_in);
      const auto dir = prepare_out(g);
      write_text(dir / "trajectory.csv", table_to_csv(ts.names, ts.values));
      write_text(dir / "spec.json", dump_json(to_json(spec)));
      write_provenance(dir, app, *sim, g);

      Json r;
      r["spectral_radius"] = number(rho);
      r["stationary_diagonal"] = Json::object();
      std::string human = "spectral radius " + format_number(rho) + "\nstationary variance:\n";
      for (int i = 0; i < spec.dim(); ++i) {
        r["stationary_diagonal"][spec.names[i]] = number(C(i, i));
        human += "  " + spec.names[i] + " " + format_number(C(i, i)) + "\n";
      }
      r["steps"] = sim_src.steps;
      human += "wrote " + std::to_string(sim_src.steps) + " steps to " +
               (dir / "trajectory.csv").string() + "\n";
      emit(g, r, human);
      return 0;
    }

    if (curves->parsed()) {
      const auto ts = resolve_series(cur_src, g.seed);
      const auto scheme = build_scheme(ts, cur_scheme, cur_target, cur_with, cur_est);
      const auto fam = curve_family(ts, scheme, resolve_grid(cur_est), cur_est.n_max,
                                    curve_options(cur_est, g));
      const auto dir = prepare_out(g);
      const std::string label = file_label(cur_with.empty() ? fam.target_group : cur_target + "_" + cur_with);
      export_curves(fam, dir / ("curves_" + label + ".csv"), ExportFormat::Csv);
      export_curves(fam, dir / ("curves_" + label + ".json"), ExportFormat::Json);
      write_provenance(dir, app, *curves, g);
      emit(g, to_json(fam), summarize_family(fam));
      return 0;
    }

    if (dfc->parsed()) {
      DfCurveFamily fam;
      std::string label;
      if (!df_curves.empty()) {
        const fs::path p(df_curves);
        if (p.extension() == ".json") {
          fam = family_from_json(parse_json_file(df_curves));
        } else {
          fam = curves_from_csv(read_text(p));
          fam.block_size = df_block > 0 ? df_block : 1;
          std::string stem = p.stem().string();
          if (stem.rfind("curves_", 0) == 0) stem = stem.substr(7);
          fam.target_group = df_target.empty() ? stem : df_target;
        }
        label = file_label(fam.target_group);
      } else {
        const auto ts = resolve_series(df_src, g.seed);
        const auto scheme = build_scheme(ts, df_scheme, df_target, df_with, df_est);
        fam = curve_family(ts, scheme, resolve_grid(df_est), df_est.n_max, curve_options(df_est, g));
        label = file_label(df_with.empty() ? fam.target_group : df_target + "_" + df_with);
      }
      const auto dir = prepare_out(g);
      if (df_curves.empty()) export_curves(fam, dir / ("curves_" + label + ".csv"), ExportFormat::Csv);
      write_provenance(dir, app, *dfc, g);
      const auto report = classify_plateaus(fam, plateau_options(df_est));
      const auto est = infer_df(report, fam.block_size);

      Json r;
      r["target"] = fam.target_group;
      r["estimate"] = to_json(est);
      r["plateaus"] = to_json(report);
      write_text(dir / "report.json", dump_json(r));
      emit(g, r, summarize_df(est));
      return est.ambiguous ? 3 : 0;
    }

    if (ver->parsed()) {
      const auto ts = resolve_series(ver_src, g.seed);
      PairConfig cfg;
      cfg.sigma_w_grid = resolve_grid(ver_est);
      cfg.n_constr_max = ver_est.n_max;
      cfg.curve = curve_options(ver_est, g);
      cfg.plateau = plateau_options(ver_est);
      cfg.window_shape = window_shape_from_string(ver_est.window);
      cfg.binning = binning_from_string(ver_est.binning);
      cfg.targets = target_mode(ver_est.targets);
      const auto a = analyze_pair(ts, pair[0], pair[1], cfg);

      const auto dir = prepare_out(g);
      const std::string lx = file_label(pair[0]), ly = file_label(pair[1]);
      export_curves(a.x.family, dir / ("curves_" + lx + ".csv"), ExportFormat::Csv);
      export_curves(a.y.family, dir / ("curves_" + ly + ".csv"), ExportFormat::Csv);
      export_curves(a.joint.family, dir / ("curves_" + lx + "_" + ly + ".csv"), ExportFormat::Csv);
      write_provenance(dir, app, *ver, g);

      Json r;
      r["x"] = pair[0];
      r["y"] = pair[1];
      r["verdict"] = to_json(a.verdict);
      r["description"] = describe(a.verdict.relation, pair[0], pair[1]);
      auto part = [](const DfResult& d) {
        Json j;
        j["estimate"] = to_json(d.estimate);
        j["plateaus"] = to_json(d.report);
        return j;
      };
      r["df_x"] = part(a.x);
      r["df_y"] = part(a.y);
      r["df_joint"] = part(a.joint);
      std::string human = pair[0] + ": " + summarize_df(a.x.estimate) + pair[1] + ": " +
                          summarize_df(a.y.estimate) + "joint: " + summarize_df(a.joint.estimate) +
                          "verdict: " + to_string(a.verdict.relation) + " (" +
                          describe(a.verdict.relation, pair[0], pair[1]) + ")\n";
      if (!a.verdict.notes.empty()) human += "  " + a.verdict.notes + "\n";
      if (ver_probe) {
        ProbeOptions po;
        po.min_count = ver_est.min_count;
        po.se_multiplier = ver_est.se_mult;
        po.bootstrap_resamples = ver_est.bootstrap;
        po.seed = g.seed;
        const auto xy = driving_probe(ts, pair[0], pair[1], cfg.sigma_w_grid, po);
        const auto yx = driving_probe(ts, pair[1], pair[0], cfg.sigma_w_grid, po);
        r["probe"] = {to_json(xy), to_json(yx)};
        human += "probe " + pair[0] + " -> " + pair[1] + ": " + to_string(xy.status) + "\n";
        human += "probe " + pair[1] + " -> " + pair[0] + ": " + to_string(yx.status) + "\n";
      }
      write_text(dir / "report.json", dump_json(r));
      emit(g, r, human);
      return a.verdict.relation == Relation::Undetermined ? 3 : 0;
    }

    if (an->parsed()) {
      const auto spec = resolve_spec(an_src);
      std::vector<int> comps = an_components;
      if (comps.empty()) {
        const std::string name =
            !an_group.empty() ? an_group
            : std::any_of(spec.subsystems.begin(), spec.subsystems.end(),
                          [](const Subsystem& s) { return s.name == "z"; })
                ? "z"
                : "";
        if (name.empty())
          for (int i = 0; i < spec.dim(); ++i) comps.push_back(i);
        else
          comps = find_subsystem(spec.subsystems, name).components;
      }
      std::vector<double> targets = an_targets;
      if (targets.empty()) targets.assign(comps.size(), 0.0);
      if (targets.size() != comps.size())
        fail(ErrorKind::Usage, "--target-values needs one value per constrained component");
      const auto shape = window_shape_from_string(an_window);
      const Matrix C = stationary_covariance(spec);

      McOptions mco;
      mco.workers = g.workers;
      Json entries = Json::array();
      std::string human = "constrained components:";
      for (int c : comps) human += " " + spec.names.at(c);
      human += "\n";
      for (int L : an_lags)
        for (double sw : an_sigma) {
          ConstraintSet cs;
          for (int k = 1; k <= L; ++k)
            for (std::size_t i = 0; i < comps.size(); ++i)
              cs.constraints.push_back({k, comps[i], targets[i], sw, shape});
          const auto backward = constrained_present(spec, cs);
          const auto exact = exact_joint_conditioning(spec, C, cs);
          Json e;
          e["max_lag"] = L;
          e["sigma_w"] = number(sw);
          e["constrained_present"] = to_json(backward);
          e["exact"] = to_json(exact);
          human += "L=" + std::to_string(L) + " sigma_w=" + format_number(sw) +
                   ": trace backward " + format_number(backward.cov.trace()) + ", exact " +
                   format_number(exact.cov.trace()) + "\n";
          if (an_mc > 0) {
            const auto mc = mc_conditional(spec, cs, an_mc, g.seed, mco);
            e["monte_carlo"] = to_json(mc);
            human += "  Monte Carlo trace " + format_number(mc.cov.trace()) + " (effective n " +
                     format_number(mc.effective_count) + ")\n";
          }
          entries.push_back(e);
        }
      const auto rows = cross_check(spec, comps, targets, an_lags, an_sigma);
      const auto dir = prepare_out(g);
      write_text(dir / "cross_check.csv", cross_check_to_csv(rows));
      Json r;
      r["components"] = comps;
      r["window"] = to_string(shape);
      r["stationary_covariance"] = to_json(GaussianBelief{Vector::Zero(spec.dim()), C})["cov"];
      r["entries"] = entries;
      write_text(dir / "beliefs.json", dump_json(r));
      write_provenance(dir, app, *an, g);
      emit(g, r, human + "cross-check table written to " + (dir / "cross_check.csv").string() + "\n");
      return 0;
    }

    if (chk->parsed()) {
      ce.demean = !ce_no_demean;
      ce.probe.seed = g.seed;
      const auto raw = load_csv(ce_input, true);
      const auto rep = chicken_egg_pipeline(raw, make_grid(ce_min, ce_max, ce_ppd), ce);
      const auto dir = prepare_out(g);
      write_text(dir / "panels.csv", chicken_egg_panels_csv(rep));
      const Json r = to_json(rep);
      write_text(dir / "report.json", dump_json(r));
      write_provenance(dir, app, *chk, g);
      emit(g, r,
           "rows after differencing: " + std::to_string(rep.n_rows) + "\negg -> chicken: " +
               to_string(rep.egg_to_chicken.status) + "\nchicken -> egg: " +
               to_string(rep.chicken_to_egg.status) + "\ndirection: " + rep.direction + "\n");
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "dfcausal: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "dfcausal: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "dfcausal: internal error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
