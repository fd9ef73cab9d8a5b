#pragma once

#include "dfcausal/analytic_conditional.hpp"
#include "dfcausal/common.hpp"
#include "dfcausal/time_series.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dfc {

/// Minimum series length accepted by the curve-based estimators.
inline constexpr Eigen::Index kMinSeriesLength = 100;

struct PastPair {
  int lag = 1;
  int component = 0;
  double target = 0.0;
  bool operator==(const PastPair&) const = default;
};

/// How points are grouped when the window shrinks.
///
/// Fixed: only points whose lagged values fall in the window around the given
/// targets are used (the literal bin). Pooled: the lagged-value space is tiled
/// by cells of the same width, anchored so the target-centred bin is one of the
/// cells, and the within-cell variances are pooled. Both measure the spread of
/// the present value at a fixed past configuration; pooling keeps usable counts
/// at window widths where a single bin would be empty.
enum class Binning { Fixed, Pooled };

[[nodiscard]] std::string to_string(Binning binning);
[[nodiscard]] Binning binning_from_string(const std::string& text);

struct Selection {
  std::vector<std::size_t> indices;  ///< time indices n' (rows of the series)
  std::vector<double> weights;       ///< empty for uniform windows
  [[nodiscard]] std::size_t count() const { return indices.size(); }
  /// Kish effective size (equals count() for uniform windows).
  [[nodiscard]] double effective_count() const;
};

/// Time points n' >= max lag whose lagged values pass the window.
/// Uniform: |x_{n'-k,a} - z| <= sigma_w * sqrt(3) for every pair. Gaussian: every
/// n' is kept with weight prod exp(-(x_{n'-k,a} - z)^2 / (2 sigma_w^2)); weights
/// below 1e-300 are dropped.
[[nodiscard]] Selection select_conditioned(const TimeSeries& series,
                                           const std::vector<PastPair>& active, double sigma_w,
                                           WindowShape shape);

struct SpreadOptions {
  int bootstrap_resamples = 200;
  std::size_t min_count = 30;
  /// Bootstrap draws at most this many points (or pooled cells) per resample and
  /// rescales the standard error by sqrt(m / n).
  std::size_t bootstrap_max_points = 20000;
  std::size_t bootstrap_max_cells = 4000;
  std::uint64_t seed = 0;
};

struct SpreadEstimate {
  std::optional<double> sigma;  ///< absent when nothing (or a single point) is selected
  double std_error = 0.0;
  std::size_t n_selected = 0;
  bool low_confidence = true;
};

/// Root-mean-square over target components of the (weighted) sample standard
/// deviation at time n', over the selection. n-1 denominator (reliability-weight
/// form for Gaussian windows, where n_selected is the Kish size rounded down).
[[nodiscard]] SpreadEstimate conditional_spread(const TimeSeries& series,
                                                const std::vector<PastPair>& active,
                                                double sigma_w, WindowShape shape,
                                                const std::vector<int>& target_components,
                                                const SpreadOptions& options = {});

/// Pooled-cell version (uniform windows). sigma^2 is the sum of within-cell squared
/// deviations over the sum of (n_c - 1), averaged over target components;
/// n_selected is that degrees-of-freedom total.
[[nodiscard]] SpreadEstimate pooled_conditional_spread(const TimeSeries& series,
                                                       const std::vector<PastPair>& active,
                                                       double sigma_w,
                                                       const std::vector<int>& target_components,
                                                       const SpreadOptions& options = {});

enum class TargetMode { Zero, Median };

struct ConstraintScheme {
  std::string target_group;
  std::vector<int> target_components;
  std::vector<std::vector<PastPair>> blocks;
  WindowShape window_shape = WindowShape::Uniform;
  Binning binning = Binning::Pooled;

  [[nodiscard]] int block_size() const;
  /// Pairs of the first n blocks.
  [[nodiscard]] std::vector<PastPair> active_pairs(int n_blocks) const;
  void validate(int d) const;
  bool operator==(const ConstraintScheme&) const = default;
};

/// Target = group, block k = the group's components at lag k (k = 1..n_max).
[[nodiscard]] ConstraintScheme own_lag_scheme(const TimeSeries& series, const std::string& group,
                                              int n_max, TargetMode targets = TargetMode::Zero);

/// Joint scheme for a pair of groups: target = both groups (x components first),
/// block 1 = group y at lag 1, blocks 2.. = group x at lags 1, 2, ...
[[nodiscard]] ConstraintScheme mixed_scheme(const TimeSeries& series, const std::string& group_x,
                                            const std::string& group_y, int n_max,
                                            TargetMode targets = TargetMode::Zero);

struct CurvePoint {
  double sigma_w = 0.0;
  std::optional<double> sigma_est;
  double std_error = 0.0;
  std::size_t n_selected = 0;
  bool operator==(const CurvePoint&) const = default;
};

struct DfCurve {
  int n_constr = 0;
  std::vector<CurvePoint> points;
  bool operator==(const DfCurve&) const = default;
};

struct DfCurveFamily {
  std::string target_group;
  int block_size = 1;
  WindowShape window_shape = WindowShape::Uniform;
  Binning binning = Binning::Pooled;
  std::vector<DfCurve> curves;
  bool operator==(const DfCurveFamily&) const = default;
};

/// Decreasing log-spaced grid from max to min (both included when they sit on the lattice).
[[nodiscard]] std::vector<double> make_grid(double min, double max, int points_per_decade);

/// Strictly decreasing, positive, spanning >= 2 decades with >= 6 points per decade.
void validate_grid(const std::vector<double>& grid);

struct CurveOptions {
  unsigned workers = 0;
  std::uint64_t seed = 0;
  SpreadOptions spread;
  /// A curve stops once this many consecutive widths select fewer than
  /// spread.min_count points; narrower widths are left empty (no estimate,
  /// n_selected = 0). Zero evaluates every width.
  int sparse_stop = 2;
};

/// Evaluates the (N_constr, sigma_w) grid. Curves run in parallel, each from the
/// widest bin down; every cell's seed is derived from options.seed and the cell
/// position, so results do not depend on scheduling.
[[nodiscard]] DfCurveFamily curve_family(const TimeSeries& series, const ConstraintScheme& scheme,
                                         const std::vector<double>& sigma_w_grid,
                                         int n_constr_max, const CurveOptions& options = {});

enum class CurveKind { Plateau, Vanishing, Ambiguous, Unusable };
[[nodiscard]] std::string to_string(CurveKind kind);

struct PlateauOptions {
  double slope_threshold = 0.2;
  double vanish_slope = 0.7;
  double merge_rel_tol = 0.15;
  double se_multiplier = 3.0;
  /// A still-falling line joins the floor only if, at the narrowest width both
  /// lines measured, it is within this factor of the floor line it meets.
  double line_ratio_max = 2.0;
  std::size_t min_count = 30;
  int min_points = 4;
};

struct CurveClass {
  int n_constr = 0;
  CurveKind kind = CurveKind::Unusable;
  double slope = 0.0;
  double mean_level = 0.0;
  /// Window-corrected level: sqrt(A) from sigma^2 = A + kappa * sigma_w^2 over the fit range.
  double level = 0.0;
  double level_se = 0.0;
  /// Smallest usable measured spread; the limit of a vanishing line lies in [0, upper].
  double upper = 0.0;
  /// True when the curve is treated as a positive point level, false when it is
  /// treated as compatible with zero.
  bool positive_level = false;
  int n_points = 0;
  double fit_min_sigma_w = 0.0;
  double fit_max_sigma_w = 0.0;
  std::string note;
};

struct PlateauCluster {
  double level = 0.0;  ///< mean of member levels (0 for a floor made of vanishing lines)
  /// Mean over members of the plateau level, or of the smallest-width spread for a
  /// line that is still falling (whose limit lies at or below that value).
  double upper = 0.0;
  std::vector<int> members;  ///< n_constr values
};

struct PlateauReport {
  std::vector<CurveClass> curves;
  PlateauCluster floor;
  /// Clusters above the floor, highest first.
  std::vector<PlateauCluster> above_floor;
  std::vector<std::string> notes;
};

/// Classifies each curve by its log-log slope over the smallest usable decade and
/// groups levels. The floor is grown from the lowest line by chaining levels within
/// merge_rel_tol (vanishing lines contribute the interval [0, upper]). Lines above
/// the floor are separate clusters unless they agree both within merge_rel_tol and
/// within se_multiplier combined standard errors.
/// Throws Ambiguous when no curve can be classified.
[[nodiscard]] PlateauReport classify_plateaus(const DfCurveFamily& family,
                                              const PlateauOptions& options = {});

struct DfEstimate {
  int df_blocks = 0;
  int block_size = 1;
  int df = 0;
  int cross_check_blocks = 0;
  std::vector<double> plateau_levels;
  double noise_floor = 0.0;
  bool ambiguous = false;
  bool lower_bound = false;
  std::string confidence_notes;
};

/// df_blocks = smallest N_constr in the floor, cross-checked against the number of
/// clusters above the floor.
[[nodiscard]] DfEstimate infer_df(const PlateauReport& report, int block_size);

struct DfResult {
  DfCurveFamily family;
  PlateauReport report;
  DfEstimate estimate;
};

/// curve_family, classify_plateaus and infer_df in sequence.
[[nodiscard]] DfResult estimate_df(const TimeSeries& series, const ConstraintScheme& scheme,
                                   const std::vector<double>& sigma_w_grid, int n_constr_max,
                                   const CurveOptions& curve_options = {},
                                   const PlateauOptions& plateau_options = {});

}  // namespace dfc
