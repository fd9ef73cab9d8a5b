#include "dfcausal/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dfc {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  std::string out = s.substr(a, b - a);
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == sep) cells.emplace_back();
  return cells;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::string line;
  std::istringstream is(text);
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

bool parse_double(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

Json matrix_json(const Matrix& M, bool rounded) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(rounded ? number(M(r, c)) : Json(M(r, c)));
    rows.push_back(row);
  }
  return rows;
}

Json vector_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number(v(i)));
  return out;
}

[[noreturn]] void bad_field(const std::string& what) { fail(ErrorKind::Parse, "invalid JSON: " + what); }

template <typename T>
T get(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) bad_field(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    bad_field(std::string("field '") + key + "' has the wrong type");
  }
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get<T>(j, key);
}

Matrix matrix_from_json(const Json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_array()) bad_field(std::string("'") + key + "' must be a matrix");
  const Json& rows = j.at(key);
  const auto r = static_cast<Eigen::Index>(rows.size());
  if (r == 0) bad_field(std::string("'") + key + "' is empty");
  const auto c = static_cast<Eigen::Index>(rows.at(0).size());
  Matrix M(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const Json& row = rows.at(static_cast<std::size_t>(i));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c)
      bad_field(std::string("'") + key + "' rows have unequal length");
    for (Eigen::Index k = 0; k < c; ++k) {
      const Json& v = row.at(static_cast<std::size_t>(k));
      if (!v.is_number()) bad_field(std::string("'") + key + "' has a non-numeric entry");
      M(i, k) = v.get<double>();
    }
  }
  return M;
}

Json subsystems_json(const std::vector<Subsystem>& groups) {
  Json g = Json::object();
  for (const auto& s : groups) g[s.name] = s.components;
  return g;
}

std::vector<Subsystem> subsystems_from_json(const Json& j) {
  if (!j.is_object()) bad_field("'subsystems' must be an object");
  std::vector<Subsystem> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    try {
      out.push_back({it.key(), it.value().get<std::vector<int>>()});
    } catch (const nlohmann::json::exception&) {
      bad_field("subsystem '" + it.key() + "' must be a list of indices");
    }
  }
  return out;
}

}  // namespace

Json number(double value) {
  if (!std::isfinite(value)) return Json(nullptr);
  double rounded = 0.0;
  const std::string text = format_number(value);
  std::from_chars(text.data(), text.data() + text.size(), rounded);
  return Json(rounded);
}

std::string dump_json(const Json& value) { return value.dump(2) + "\n"; }

RawTable parse_csv(const std::string& text, bool has_header, const std::string& source) {
  RawTable t;
  t.source = source;
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  bool header_done = !has_header;
  const auto lines = lines_of(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (blank(lines[ln])) continue;
    const auto cells = split(lines[ln], ',');
    if (!header_done) {
      t.names = cells;
      width = cells.size();
      header_done = true;
      continue;
    }
    if (width == 0) width = cells.size();
    if (cells.size() != width)
      fail(ErrorKind::Parse, source + ": line " + std::to_string(ln + 1) + " has " +
                                 std::to_string(cells.size()) + " fields, expected " +
                                 std::to_string(width));
    std::vector<double> row(width);
    for (std::size_t c = 0; c < width; ++c) {
      if (!parse_double(cells[c], row[c]) || !std::isfinite(row[c]))
        fail(ErrorKind::Parse, source + ": line " + std::to_string(ln + 1) + ", column " +
                                   std::to_string(c + 1) + ": '" + cells[c] + "' is not a finite number");
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2)
    fail(ErrorKind::Parse, source + ": need at least two data rows, found " + std::to_string(rows.size()));
  if (!has_header) t.names = default_names(static_cast<int>(width));
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < width; ++c)
      t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return t;
}

RawTable load_csv(const std::filesystem::path& path, bool has_header) {
  return parse_csv(read_text(path), has_header, path.string());
}

std::string table_to_csv(const std::vector<std::string>& names, const Matrix& values) {
  if (static_cast<Eigen::Index>(names.size()) != values.cols())
    fail(ErrorKind::Precondition, "table has " + std::to_string(values.cols()) + " columns but " +
                                      std::to_string(names.size()) + " names");
  std::string out;
  for (std::size_t j = 0; j < names.size(); ++j) out += (j ? "," : "") + names[j];
  out += "\n";
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      if (j) out += ',';
      out += format_number(values(i, j));
    }
    out += '\n';
  }
  return out;
}

RawTable drop_column(const RawTable& table, const std::string& name) {
  const auto it = std::find(table.names.begin(), table.names.end(), name);
  if (it == table.names.end()) fail(ErrorKind::Precondition, "no column named '" + name + "'");
  const auto col = static_cast<Eigen::Index>(it - table.names.begin());
  RawTable out;
  out.source = table.source;
  out.names = table.names;
  out.names.erase(out.names.begin() + col);
  out.values.resize(table.values.rows(), table.values.cols() - 1);
  for (Eigen::Index c = 0, k = 0; c < table.values.cols(); ++c)
    if (c != col) out.values.col(k++) = table.values.col(c);
  return out;
}

Matrix difference(const Matrix& values) {
  if (values.rows() < 2) fail(ErrorKind::Precondition, "differencing needs at least two rows");
  const Eigen::Index n = values.rows() - 1;
  return values.bottomRows(n) - values.topRows(n);
}

Matrix normalize_unit_variance(const Matrix& values, const std::vector<std::string>& names,
                               bool demean) {
  if (values.rows() < 2) fail(ErrorKind::Precondition, "normalization needs at least two rows");
  Matrix out = values;
  const auto n = static_cast<double>(values.rows());
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    const double mean = values.col(c).mean();
    const double sd = std::sqrt((values.col(c).array() - mean).square().sum() / (n - 1.0));
    const std::string name = static_cast<std::size_t>(c) < names.size()
                                 ? names[static_cast<std::size_t>(c)]
                                 : "c" + std::to_string(c);
    if (!(sd > 0.0)) fail(ErrorKind::Precondition, "column '" + name + "' has zero variance");
    if (demean) out.col(c).array() -= mean;
    out.col(c) /= sd;
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  os << text;
  os.flush();
  if (!os) fail(ErrorKind::Io, "failed writing '" + path.string() + "'");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << is.rdbuf();
  if (is.bad()) fail(ErrorKind::Io, "failed reading '" + path.string() + "'");
  return ss.str();
}

std::string curves_to_csv(const DfCurveFamily& family) {
  std::string out = "n_constr,sigma_w,sigma_est,stderr,n_selected\n";
  for (const auto& c : family.curves)
    for (const auto& p : c.points)
      out += std::to_string(c.n_constr) + "," + format_number(p.sigma_w) + "," +
             (p.sigma_est ? format_number(*p.sigma_est) : std::string()) + "," +
             format_number(p.std_error) + "," + std::to_string(p.n_selected) + "\n";
  return out;
}

DfCurveFamily curves_from_csv(const std::string& text) {
  const auto lines = lines_of(text);
  std::size_t ln = 0;
  while (ln < lines.size() && blank(lines[ln])) ++ln;
  if (ln == lines.size() || trim(lines[ln]) != "n_constr,sigma_w,sigma_est,stderr,n_selected")
    fail(ErrorKind::Parse, "curve CSV must start with n_constr,sigma_w,sigma_est,stderr,n_selected");
  DfCurveFamily fam;
  for (++ln; ln < lines.size(); ++ln) {
    if (blank(lines[ln])) continue;
    const auto cells = split(lines[ln], ',');
    auto where = [&] { return "curve CSV line " + std::to_string(ln + 1); };
    if (cells.size() != 5) fail(ErrorKind::Parse, where() + ": expected 5 fields");
    double n = 0, sw = 0, se = 0, cnt = 0, est = 0;
    if (!parse_double(cells[0], n) || !parse_double(cells[1], sw) || !parse_double(cells[3], se) ||
        !parse_double(cells[4], cnt))
      fail(ErrorKind::Parse, where() + ": malformed number");
    CurvePoint p;
    p.sigma_w = sw;
    p.std_error = se;
    p.n_selected = static_cast<std::size_t>(cnt);
    if (!cells[2].empty()) {
      if (!parse_double(cells[2], est)) fail(ErrorKind::Parse, where() + ": malformed sigma_est");
      p.sigma_est = est;
    }
    const int N = static_cast<int>(n);
    if (fam.curves.empty() || fam.curves.back().n_constr != N) fam.curves.push_back({N, {}});
    fam.curves.back().points.push_back(p);
  }
  return fam;
}

void export_curves(const DfCurveFamily& family, const std::filesystem::path& path,
                   ExportFormat format) {
  write_text(path, format == ExportFormat::Csv ? curves_to_csv(family) : dump_json(to_json(family)));
}

Json to_json(const LinearSystemSpec& spec) {
  Json j;
  j["Q"] = matrix_json(spec.Q, false);
  j["S"] = matrix_json(spec.S, false);
  j["names"] = spec.names;
  j["subsystems"] = subsystems_json(spec.subsystems);
  return j;
}

LinearSystemSpec spec_from_json(const Json& j) {
  if (!j.is_object()) bad_field("system spec must be an object");
  LinearSystemSpec s;
  s.Q = matrix_from_json(j, "Q");
  s.S = matrix_from_json(j, "S");
  const int d = static_cast<int>(s.Q.rows());
  s.names = get_or<std::vector<std::string>>(j, "names", default_names(d));
  if (j.contains("subsystems")) {
    s.subsystems = subsystems_from_json(j.at("subsystems"));
  } else {
    for (int i = 0; i < d; ++i)
      s.subsystems.push_back({i < static_cast<int>(s.names.size()) ? s.names[static_cast<std::size_t>(i)]
                                                                     : "c" + std::to_string(i),
                              {i}});
  }
  s.validate();
  require_stable(s.Q, ErrorKind::Precondition);
  return s;
}

Json to_json(const ExampleParams& p) {
  Json j;
  j["sigma"] = p.sigma;
  j["phi_x"] = p.phi_x;
  j["phi_y"] = p.phi_y;
  j["phi_z"] = p.phi_z;
  j["alpha_x"] = p.alpha_x;
  j["alpha_y"] = p.alpha_y;
  j["alpha_z"] = p.alpha_z;
  j["g"] = p.g;
  j["coupling"] = p.coupling == Coupling::Matched ? "matched" : "first_component";
  return j;
}

ExampleParams params_from_json(const Json& j) {
  if (!j.is_object()) bad_field("example parameters must be an object");
  ExampleParams p;
  p.sigma = get<double>(j, "sigma");
  p.phi_x = get<double>(j, "phi_x");
  p.phi_y = get<double>(j, "phi_y");
  p.phi_z = get<double>(j, "phi_z");
  p.alpha_x = get<double>(j, "alpha_x");
  p.alpha_y = get<double>(j, "alpha_y");
  p.alpha_z = get<double>(j, "alpha_z");
  p.g = get<double>(j, "g");
  const auto coupling = get_or<std::string>(j, "coupling", "matched");
  if (coupling == "matched") p.coupling = Coupling::Matched;
  else if (coupling == "first_component") p.coupling = Coupling::FirstComponent;
  else bad_field("coupling must be 'matched' or 'first_component'");
  return p;
}

Json to_json(const ConstraintSet& cs) {
  Json a = Json::array();
  for (const auto& c : cs.constraints)
    a.push_back({{"lag", c.lag},
                 {"component", c.component},
                 {"target", c.target},
                 {"window_sd", c.window_sd},
                 {"shape", to_string(c.shape)}});
  return a;
}

ConstraintSet constraints_from_json(const Json& j) {
  if (!j.is_array()) bad_field("constraint set must be an array");
  ConstraintSet cs;
  for (const auto& e : j) {
    PastConstraint c;
    c.lag = get<int>(e, "lag");
    c.component = get<int>(e, "component");
    c.target = get_or<double>(e, "target", 0.0);
    c.window_sd = get<double>(e, "window_sd");
    c.shape = window_shape_from_string(get_or<std::string>(e, "shape", "gaussian"));
    cs.constraints.push_back(c);
  }
  return cs;
}

Json to_json(const ConstraintScheme& s) {
  Json j;
  j["target_group"] = s.target_group;
  j["target_components"] = s.target_components;
  Json blocks = Json::array();
  for (const auto& b : s.blocks) {
    Json block = Json::array();
    for (const auto& p : b)
      block.push_back({{"lag", p.lag}, {"component", p.component}, {"target", p.target}});
    blocks.push_back(block);
  }
  j["blocks"] = blocks;
  j["window_shape"] = to_string(s.window_shape);
  j["binning"] = to_string(s.binning);
  return j;
}

ConstraintScheme scheme_from_json(const Json& j) {
  if (!j.is_object()) bad_field("constraint scheme must be an object");
  ConstraintScheme s;
  s.target_group = get_or<std::string>(j, "target_group", "");
  s.target_components = get<std::vector<int>>(j, "target_components");
  if (!j.contains("blocks") || !j.at("blocks").is_array()) bad_field("'blocks' must be an array");
  for (const auto& b : j.at("blocks")) {
    if (!b.is_array()) bad_field("each block must be an array");
    std::vector<PastPair> block;
    for (const auto& p : b)
      block.push_back({get<int>(p, "lag"), get<int>(p, "component"), get_or<double>(p, "target", 0.0)});
    s.blocks.push_back(block);
  }
  s.window_shape = window_shape_from_string(get_or<std::string>(j, "window_shape", "uniform"));
  s.binning = binning_from_string(get_or<std::string>(j, "binning", "pooled"));
  return s;
}

Json to_json(const DfCurveFamily& f) {
  Json j;
  j["target_group"] = f.target_group;
  j["block_size"] = f.block_size;
  j["window_shape"] = to_string(f.window_shape);
  j["binning"] = to_string(f.binning);
  Json curves = Json::array();
  for (const auto& c : f.curves) {
    Json pts = Json::array();
    for (const auto& p : c.points)
      pts.push_back({{"sigma_w", number(p.sigma_w)},
                     {"sigma_est", p.sigma_est ? number(*p.sigma_est) : Json(nullptr)},
                     {"stderr", number(p.std_error)},
                     {"n_selected", p.n_selected}});
    curves.push_back({{"n_constr", c.n_constr}, {"points", pts}});
  }
  j["curves"] = curves;
  return j;
}

DfCurveFamily family_from_json(const Json& j) {
  if (!j.is_object()) bad_field("curve family must be an object");
  DfCurveFamily f;
  f.target_group = get_or<std::string>(j, "target_group", "");
  f.block_size = get_or<int>(j, "block_size", 1);
  f.window_shape = window_shape_from_string(get_or<std::string>(j, "window_shape", "uniform"));
  f.binning = binning_from_string(get_or<std::string>(j, "binning", "pooled"));
  if (!j.contains("curves") || !j.at("curves").is_array()) bad_field("'curves' must be an array");
  for (const auto& c : j.at("curves")) {
    DfCurve curve;
    curve.n_constr = get<int>(c, "n_constr");
    if (!c.contains("points") || !c.at("points").is_array()) bad_field("'points' must be an array");
    for (const auto& p : c.at("points")) {
      CurvePoint pt;
      pt.sigma_w = get<double>(p, "sigma_w");
      if (p.contains("sigma_est") && !p.at("sigma_est").is_null()) pt.sigma_est = get<double>(p, "sigma_est");
      pt.std_error = get_or<double>(p, "stderr", 0.0);
      pt.n_selected = get_or<std::size_t>(p, "n_selected", 0);
      curve.points.push_back(pt);
    }
    f.curves.push_back(curve);
  }
  return f;
}

Json to_json(const GaussianBelief& b) {
  return {{"mean", vector_json(b.mean)}, {"cov", matrix_json(b.cov, true)}};
}

Json to_json(const PlateauReport& r) {
  Json curves = Json::array();
  for (const auto& c : r.curves)
    curves.push_back({{"n_constr", c.n_constr},
                      {"kind", to_string(c.kind)},
                      {"slope", number(c.slope)},
                      {"level", number(c.level)},
                      {"level_se", number(c.level_se)},
                      {"mean_level", number(c.mean_level)},
                      {"upper", number(c.upper)},
                      {"positive_level", c.positive_level},
                      {"n_points", c.n_points},
                      {"fit_min_sigma_w", number(c.fit_min_sigma_w)},
                      {"fit_max_sigma_w", number(c.fit_max_sigma_w)},
                      {"note", c.note}});
  auto cluster = [](const PlateauCluster& c) {
    return Json{{"level", number(c.level)}, {"upper", number(c.upper)}, {"members", c.members}};
  };
  Json above = Json::array();
  for (const auto& c : r.above_floor) above.push_back(cluster(c));
  return {{"curves", curves}, {"floor", cluster(r.floor)}, {"above_floor", above}, {"notes", r.notes}};
}

Json to_json(const DfEstimate& e) {
  Json levels = Json::array();
  for (double v : e.plateau_levels) levels.push_back(number(v));
  return {{"df_blocks", e.df_blocks},
          {"block_size", e.block_size},
          {"df", e.df},
          {"cross_check_blocks", e.cross_check_blocks},
          {"plateau_levels", levels},
          {"noise_floor", number(e.noise_floor)},
          {"ambiguous", e.ambiguous},
          {"lower_bound", e.lower_bound},
          {"confidence_notes", e.confidence_notes}};
}

Json to_json(const CausalVerdict& v) {
  return {{"relation", to_string(v.relation)},
          {"orders", {{"o_x", v.orders.o_x}, {"o_y", v.orders.o_y}, {"o_j", v.orders.o_j}}},
          {"unit", v.orders.unit},
          {"evidence", Json::object()},
          {"notes", v.notes}};
}

Json to_json(const ProbeReport& r) {
  Json pts = Json::array();
  for (const auto& p : r.points)
    pts.push_back({{"sigma_w", number(p.sigma_w)},
                   {"n_selected", p.n_selected},
                   {"target_sd", p.target_sd ? number(*p.target_sd) : Json(nullptr)},
                   {"target_se", number(p.target_se)},
                   {"source_sd", p.source_sd ? number(*p.source_sd) : Json(nullptr)},
                   {"source_se", number(p.source_se)}});
  return {{"source", r.source},
          {"target", r.target},
          {"status", to_string(r.status)},
          {"unconditional_target_sd", number(r.unconditional_target_sd)},
          {"unconditional_source_sd", number(r.unconditional_source_sd)},
          {"strongest_sigma_w", r.strongest_sigma_w ? number(*r.strongest_sigma_w) : Json(nullptr)},
          {"strongest_drop_se", number(r.strongest_drop_se)},
          {"points", pts}};
}

Json to_json(const McEstimate& e) {
  return {{"mean", vector_json(e.mean)},
          {"cov", matrix_json(e.cov, true)},
          {"mean_se", vector_json(e.mean_se)},
          {"cov_se", matrix_json(e.cov_se, true)},
          {"effective_count", number(e.effective_count)},
          {"retained", e.retained}};
}

std::string cross_check_to_csv(const std::vector<CrossCheckRow>& rows) {
  std::string out = "lag_set,sigma_w,max_rel_diff_cov,rel_diff_mean\n";
  for (const auto& r : rows)
    out += r.lag_set + "," + format_number(r.sigma_w) + "," + format_number(r.max_rel_diff_cov) + "," +
           format_number(r.rel_diff_mean) + "\n";
  return out;
}

ChickenEggReport chicken_egg_pipeline(const RawTable& raw, const std::vector<double>& bin_grid,
                                      const ChickenEggOptions& options) {
  int chicken = -1, egg = -1;
  for (std::size_t c = 0; c < raw.names.size(); ++c) {
    const std::string name = lower(raw.names[c]);
    if (!options.drop.empty() && name == lower(options.drop)) continue;
    if (chicken < 0 && name.rfind(lower(options.chicken_column), 0) == 0) chicken = static_cast<int>(c);
    else if (egg < 0 && name.rfind(lower(options.egg_column), 0) == 0) egg = static_cast<int>(c);
  }
  if (chicken < 0 || egg < 0)
    fail(ErrorKind::Precondition, "could not identify the '" + options.chicken_column + "' and '" +
                                      options.egg_column + "' columns in " + raw.source);
  Matrix both(raw.values.rows(), 2);
  both.col(0) = raw.values.col(chicken);
  both.col(1) = raw.values.col(egg);
  const std::vector<std::string> names = {"chicken", "egg"};
  TimeSeries ts;
  ts.values = normalize_unit_variance(difference(both), names, options.demean);
  ts.names = names;
  ts.subsystems = {{"chicken", {0}}, {"egg", {1}}};

  ChickenEggReport rep;
  rep.chicken_column = raw.names[static_cast<std::size_t>(chicken)];
  rep.egg_column = raw.names[static_cast<std::size_t>(egg)];
  rep.n_rows = static_cast<std::size_t>(ts.length());
  ProbeOptions po = options.probe;
  rep.egg_to_chicken = driving_probe(ts, "egg", "chicken", bin_grid, po);
  po.seed = options.probe.seed + 1;
  rep.chicken_to_egg = driving_probe(ts, "chicken", "egg", bin_grid, po);
  const auto a = rep.egg_to_chicken.status;
  const auto b = rep.chicken_to_egg.status;
  if (a == ProbeStatus::Inconclusive || b == ProbeStatus::Inconclusive) rep.direction = "inconclusive";
  else if (a == ProbeStatus::Detected && b == ProbeStatus::Detected) rep.direction = "bidirectional";
  else if (a == ProbeStatus::Detected) rep.direction = "egg -> chicken";
  else if (b == ProbeStatus::Detected) rep.direction = "chicken -> egg";
  else rep.direction = "none";
  return rep;
}

std::string chicken_egg_panels_csv(const ChickenEggReport& report) {
  std::string out = "constrained,sigma_w,n_selected,sd_chicken,se_chicken,sd_egg,se_egg\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  for (const auto& p : report.chicken_to_egg.points)  // chicken held: source = chicken
    out += "chicken," + format_number(p.sigma_w) + "," + std::to_string(p.n_selected) + "," +
           opt(p.source_sd) + "," + format_number(p.source_se) + "," + opt(p.target_sd) + "," +
           format_number(p.target_se) + "\n";
  for (const auto& p : report.egg_to_chicken.points)  // egg held: source = egg
    out += "egg," + format_number(p.sigma_w) + "," + std::to_string(p.n_selected) + "," +
           opt(p.target_sd) + "," + format_number(p.target_se) + "," + opt(p.source_sd) + "," +
           format_number(p.source_se) + "\n";
  return out;
}

Json to_json(const ChickenEggReport& r) {
  return {{"chicken_column", r.chicken_column},
          {"egg_column", r.egg_column},
          {"n_rows", r.n_rows},
          {"direction", r.direction},
          {"egg_to_chicken", to_json(r.egg_to_chicken)},
          {"chicken_to_egg", to_json(r.chicken_to_egg)}};
}

}  // namespace dfc
