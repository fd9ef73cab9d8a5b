#pragma once

#include "dfcausal/causal_verdict.hpp"
#include "dfcausal/df_estimator.hpp"
#include "dfcausal/gaussian_engine.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace dfc {

using Json = nlohmann::ordered_json;

struct RawTable {
  std::vector<std::string> names;
  Matrix values;  ///< rows x columns
  std::string source;
};

/// Comma separated numbers. Blank lines are skipped; without a header the columns are c0, c1, ...
/// Throws Io when the file cannot be read and Parse (with row and column) on ragged
/// rows, non-numeric or non-finite cells, or fewer than two data rows.
[[nodiscard]] RawTable load_csv(const std::filesystem::path& path, bool has_header);
[[nodiscard]] RawTable parse_csv(const std::string& text, bool has_header,
                                 const std::string& source = "<memory>");

/// Header line plus one row per sample, numbers with 12 significant digits.
[[nodiscard]] std::string table_to_csv(const std::vector<std::string>& names, const Matrix& values);

/// Removes the named column (for example a year index).
[[nodiscard]] RawTable drop_column(const RawTable& table, const std::string& name);

/// First differences per column; n rows become n - 1.
[[nodiscard]] Matrix difference(const Matrix& values);

/// Divides each column by its sample standard deviation (n - 1 denominator),
/// subtracting the column mean first when demean is set.
[[nodiscard]] Matrix normalize_unit_variance(const Matrix& values,
                                             const std::vector<std::string>& names,
                                             bool demean = true);

/// Text of a curve family as CSV (n_constr,sigma_w,sigma_est,stderr,n_selected).
/// An absent estimate is written as an empty field.
[[nodiscard]] std::string curves_to_csv(const DfCurveFamily& family);
[[nodiscard]] DfCurveFamily curves_from_csv(const std::string& text);

enum class ExportFormat { Csv, Json };
void export_curves(const DfCurveFamily& family, const std::filesystem::path& path,
                   ExportFormat format);

/// Writes text with LF line endings; Io error naming the path on failure.
void write_text(const std::filesystem::path& path, const std::string& text);
[[nodiscard]] std::string read_text(const std::filesystem::path& path);

/// Serialized text of a JSON value: two-space indent, trailing newline.
[[nodiscard]] std::string dump_json(const Json& value);

// JSON mappings. The *_from_json functions throw Parse on missing or mistyped fields.
[[nodiscard]] Json to_json(const LinearSystemSpec& spec);
[[nodiscard]] LinearSystemSpec spec_from_json(const Json& j);
[[nodiscard]] Json to_json(const ExampleParams& params);
[[nodiscard]] ExampleParams params_from_json(const Json& j);
[[nodiscard]] Json to_json(const ConstraintSet& cs);
[[nodiscard]] ConstraintSet constraints_from_json(const Json& j);
[[nodiscard]] Json to_json(const ConstraintScheme& scheme);
[[nodiscard]] ConstraintScheme scheme_from_json(const Json& j);
[[nodiscard]] Json to_json(const DfCurveFamily& family);
[[nodiscard]] DfCurveFamily family_from_json(const Json& j);
[[nodiscard]] Json to_json(const GaussianBelief& belief);
[[nodiscard]] Json to_json(const PlateauReport& report);
[[nodiscard]] Json to_json(const DfEstimate& estimate);
[[nodiscard]] Json to_json(const CausalVerdict& verdict);
[[nodiscard]] Json to_json(const ProbeReport& report);
[[nodiscard]] Json to_json(const McEstimate& estimate);

/// Cross-check table (lag_set,sigma_w,max_rel_diff_cov,rel_diff_mean).
[[nodiscard]] std::string cross_check_to_csv(const std::vector<CrossCheckRow>& rows);

/// JSON number with 12 significant digits (so serialized output is bit-stable).
[[nodiscard]] Json number(double value);

struct ChickenEggOptions {
  std::string chicken_column = "chicken";
  std::string egg_column = "egg";
  std::string drop = "year";
  bool demean = true;
  ProbeOptions probe;
};

struct ChickenEggReport {
  std::string chicken_column;
  std::string egg_column;
  std::size_t n_rows = 0;  ///< rows after differencing
  ProbeReport egg_to_chicken;
  ProbeReport chicken_to_egg;
  std::string direction;  ///< "egg -> chicken", "chicken -> egg", "bidirectional", "none", "inconclusive"
};

/// Columns are found by case-insensitive prefix ("chicken", "egg"); the `drop`
/// column is ignored when present. Differences, normalizes, then probes both directions.
[[nodiscard]] ChickenEggReport chicken_egg_pipeline(const RawTable& raw,
                                                    const std::vector<double>& bin_grid,
                                                    const ChickenEggOptions& options = {});

/// Three-panel data per direction: constrained,sigma_w,n_selected,sd_chicken,se_chicken,sd_egg,se_egg.
[[nodiscard]] std::string chicken_egg_panels_csv(const ChickenEggReport& report);
[[nodiscard]] Json to_json(const ChickenEggReport& report);

}  // namespace dfc
