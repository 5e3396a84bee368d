#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowcast/crowdnet.hpp"
#include "flowcast/flow.hpp"
#include "flowcast/geo.hpp"

namespace flowcast::eval {

enum class ModelKind { naive, var, crowdnet };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// Where the VAR baseline runs for the crowd task: on the 2n in/out series
/// (default) or by aggregating its n*n OD forecast.
enum class VarCrowdMode { crowd_series, from_od };

struct ExperimentConfig {
  model::ModelConfig model;  ///< n is filled in from the data
  model::TrainConfig train;
  std::size_t naive_window = 12;
  std::size_t var_order = 8;
  VarCrowdMode var_crowd = VarCrowdMode::crowd_series;
  bool include_self = false;
  std::size_t test_days = 10;
  std::size_t test_bins = 0;  ///< overrides test_days when nonzero
  double val_fraction = 0.2;
};

/// Chronological split of a t_bins-long series under `config`.
flow::SplitRanges split_for(const ExperimentConfig& config, std::size_t t_bins, std::uint32_t bin_minutes);

/// Predictions for consecutive target bins of one series.
struct Forecast {
  std::size_t n = 0;
  std::vector<std::size_t> bins;
  std::vector<double> od;       ///< (bins, n, n)
  std::vector<double> inflow;   ///< (bins, n)
  std::vector<double> outflow;  ///< (bins, n)
};

struct EvalMetrics {
  double flow_rmse = 0.0;
  double flow_nrmse = 0.0;
  double cpc = 0.0;
  double crowd_rmse = 0.0;  ///< pooled over (bin, tile, direction)
  double crowd_nrmse = 0.0;
  double crowd_rmse_in = 0.0;
  double crowd_rmse_out = 0.0;
};

/// Real-valued inflow/outflow of each OD slice, same self-flow rule as crowd_from_od.
void crowd_of(const double* od_slice, std::size_t n, bool include_self, double* inflow, double* outflow);

Forecast forecast_naive(const flow::DenseSeries& series, flow::BinRange test, std::size_t k, std::size_t window,
                        bool include_self);
/// Fits on `fit_range` and forecasts every window of `test`.
Forecast forecast_var(const flow::DenseSeries& series, flow::BinRange fit_range, flow::BinRange test, std::size_t k,
                      std::size_t order, VarCrowdMode crowd_mode, bool include_self);
Forecast forecast_crowdnet(model::CrowdNet& net, const flow::DenseSeries& series, flow::BinRange test,
                           bool include_self);

/// Scores a forecast against the series. Predicted flows are clamped at 0
/// for CPC; NRMSE ranges come from the ground truth of the scored bins.
EvalMetrics score(const Forecast& forecast, const flow::DenseSeries& truth, bool include_self);

struct ModelRun {
  Forecast forecast;
  EvalMetrics metrics;
  std::optional<model::TrainHistory> history;
};

/// Fits `kind` on the split's development data and scores it on the test range.
ModelRun run_model(ModelKind kind, const flow::DenseSeries& series, const flow::SplitRanges& split,
                   const ExperimentConfig& config, std::uint64_t seed);

struct EvalRecord {
  double tile_size_m = 0.0;  ///< 0 for irregular tessellations
  std::uint32_t bin_minutes = 0;
  std::string model_name;
  std::size_t n_tiles = 0;
  std::size_t test_targets = 0;
  EvalMetrics metrics;
  double runtime_s = 0.0;
  std::uint64_t seed = 0;
  std::string error;  ///< empty on success
};

struct EvalReport {
  std::vector<EvalRecord> records;

  /// Timing is excluded unless asked for, so fixed-seed reports are byte-stable.
  std::string to_csv(bool with_timing = false) const;
  std::string to_json(bool with_timing = false) const;
};

struct SweepSpec {
  std::vector<double> tile_sizes_m{750.0, 1000.0, 1500.0};
  std::vector<std::uint32_t> bin_minutes{15, 30, 45, 60};
  std::vector<ModelKind> models{ModelKind::naive, ModelKind::var, ModelKind::crowdnet};
  std::optional<geo::BoundingBox> bbox;  ///< default: bounds of all trip endpoints
  std::uint64_t seed = 0;
  ExperimentConfig experiment;
  std::size_t workers = 1;
};

/// Every (tile size, bin length, model) cell rebuilds the grid and OD series,
/// splits, fits and scores. Cell failures are recorded, not thrown; seeds
/// derive from (spec.seed, cell index).
EvalReport run_sweep(const std::vector<flow::TripRecord>& trips, const SweepSpec& spec);

struct ImportancePoint {
  std::size_t k = 0;
  double rmse = 0.0;
  bool skipped = false;
  std::string note;
};

/// One CrowdNet per history length with the same seed; all feasible k are
/// scored on the same target bins (those reachable by the largest k).
std::vector<ImportancePoint> temporal_importance(const flow::DenseSeries& series, const flow::SplitRanges& split,
                                                 const ExperimentConfig& base, const std::vector<std::size_t>& k_values,
                                                 std::uint64_t seed);

// File exports consumed by downstream tooling.

/// time_bin,origin,destination,flow
std::string flow_csv(const Forecast& f);
/// time_bin,tile,inflow,outflow
std::string crowd_csv(const Forecast& f);
/// Rebuilds a forecast from the two CSV exports.
Forecast read_forecast_csv(const std::string& flow_text, const std::string& crowd_text, std::size_t n);
/// origin,destination,flow for every strictly positive entry of an n x n slice.
std::string edge_list_csv(const double* od_slice, std::size_t n);

}  // namespace flowcast::eval
