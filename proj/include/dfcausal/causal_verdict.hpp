#pragma once

#include "dfcausal/df_estimator.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dfc {

enum class Relation { Independent, XDrivesY, YDrivesX, Bidirectional, CommonDriver, Undetermined };

[[nodiscard]] std::string to_string(Relation relation);

/// Orders of the two marginal processes and of the joint process, in blocks of `unit` components.
struct OrderTriple {
  int o_x = 0;
  int o_y = 0;
  int o_j = 0;
  int unit = 1;
  bool operator==(const OrderTriple&) const = default;
};

struct CausalVerdict {
  Relation relation = Relation::Undetermined;
  OrderTriple orders;
  std::string notes;
};

/// Decision table on the order triple. Triples outside max(o_x, o_y) <= o_j <= o_x + o_y
/// and triples matching no row give Undetermined.
[[nodiscard]] CausalVerdict verdict(const OrderTriple& t);

struct PairConfig {
  std::vector<double> sigma_w_grid = make_grid(1e-4, 1.0, 6);
  int n_constr_max = 4;
  CurveOptions curve;
  PlateauOptions plateau;
  WindowShape window_shape = WindowShape::Uniform;
  Binning binning = Binning::Pooled;
  TargetMode targets = TargetMode::Zero;
};

struct PairAnalysis {
  std::string group_x;
  std::string group_y;
  CausalVerdict verdict;
  DfResult x;
  DfResult y;
  DfResult joint;
};

/// Three df estimations (x alone, y alone, the mixed joint scheme) followed by verdict().
/// Any ambiguous or lower-bound estimate yields Undetermined with the reason in notes.
[[nodiscard]] PairAnalysis analyze_pair(const TimeSeries& series, const std::string& group_x,
                                        const std::string& group_y, const PairConfig& config = {});

enum class ProbeStatus { Detected, NotDetected, Inconclusive };
[[nodiscard]] std::string to_string(ProbeStatus status);

struct ProbePoint {
  double sigma_w = 0.0;
  std::size_t n_selected = 0;
  std::optional<double> target_sd;
  double target_se = 0.0;
  std::optional<double> source_sd;
  double source_se = 0.0;
};

struct ProbeReport {
  std::string source;
  std::string target;
  double unconditional_target_sd = 0.0;
  double unconditional_source_sd = 0.0;
  std::vector<ProbePoint> points;
  ProbeStatus status = ProbeStatus::Inconclusive;
  /// Grid point with the largest drop in units of its standard error (when usable).
  std::optional<double> strongest_sigma_w;
  double strongest_drop_se = 0.0;
};

struct ProbeOptions {
  std::size_t min_count = 30;
  double se_multiplier = 3.0;
  int bootstrap_resamples = 200;
  std::uint64_t seed = 0;
};

/// Holds the source group's lag-1 values in a fixed uniform bin around zero and
/// checks whether the target's spread at time n' falls below its unconditional
/// spread by more than se_multiplier bootstrap standard errors at any grid point
/// with at least min_count selected points.
[[nodiscard]] ProbeReport driving_probe(const TimeSeries& series, const std::string& source_group,
                                        const std::string& target_group,
                                        const std::vector<double>& sigma_w_grid,
                                        const ProbeOptions& options = {});

}  // namespace dfc
