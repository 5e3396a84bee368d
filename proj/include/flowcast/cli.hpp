#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowcast/experiment.hpp"
#include "flowcast/flow.hpp"
#include "flowcast/geo.hpp"

namespace flowcast::cli {

/// Everything a command needs besides its file arguments. Defaults are the
/// CrowdNet settings of the reference experiments (k 12, 64/64 channels,
/// K_t 3, 150 epochs, batch 16, RMSprop lr 1e-4).
struct RunConfig {
  std::optional<double> tile_size_m;
  std::optional<std::string> geojson;
  std::optional<geo::BoundingBox> bbox;
  std::uint32_t bin_minutes = 60;

  std::size_t k = 12;
  std::size_t hidden_channels = 64;
  std::size_t block_channels = 64;
  std::size_t kernel_t = 3;
  bool symmetrize = true;

  std::size_t epochs = 150;
  std::size_t batch = 16;
  double lr = 1e-4;
  std::size_t patience = 10;
  double min_delta = 1e-6;

  std::size_t naive_window = 12;
  std::size_t var_order = 8;
  eval::VarCrowdMode var_crowd = eval::VarCrowdMode::crowd_series;
  bool include_self = false;
  std::size_t test_days = 10;
  std::size_t test_bins = 0;
  double val_fraction = 0.2;

  std::uint64_t seed = 0;

  /// Shape and range checks; runs before a command touches any data.
  void validate() const;
  eval::ExperimentConfig experiment(std::size_t n) const;

  nlohmann::json to_json() const;
  /// Unknown keys are rejected so typos cannot silently fall back to defaults.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
};

std::string fingerprint_hex(std::uint64_t hash);

struct IngestOptions {
  std::optional<std::string> trips_csv;
  std::optional<std::string> gps_csv;
  RunConfig config;
  std::string out_dir;
  std::size_t workers = 1;
};

struct IngestSummary {
  std::size_t rows = 0;
  std::size_t malformed_rows = 0;
  flow::IngestStats stats;
  std::size_t bins = 0;
  std::size_t tiles = 0;
  std::uint32_t bin_minutes = 0;
  flow::Timestamp epoch_start = 0;
  std::uint64_t total_flow = 0;
  std::string ods_path;
  std::string geojson_path;

  nlohmann::json to_json() const;
};

/// Reads trips or GPS traces, builds the tessellation, writes
/// <out>/od.ods and <out>/tessellation.geojson.
IngestSummary cmd_ingest(const IngestOptions& options);

struct TrainOptions {
  std::string ods_path;
  RunConfig config;
  std::string out_dir;
};

struct TrainOutputs {
  std::string checkpoint_path;
  std::string sidecar_path;
  std::string history_path;
  model::TrainHistory history;
};

/// Writes <out>/checkpoint.cnw, its JSON sidecar <out>/checkpoint.json and
/// <out>/history.csv (epoch,train_mse,val_mse).
TrainOutputs cmd_train(const TrainOptions& options);

/// JSON sidecar path that belongs to a checkpoint path.
std::string sidecar_path_for(const std::string& checkpoint_path);

struct PredictOptions {
  std::string ods_path;
  std::string checkpoint_path;
  std::string out_dir;
};

struct PredictOutputs {
  std::string flow_csv_path;
  std::string crowd_csv_path;
  eval::Forecast forecast;
};

/// Forecasts the test range stored in the sidecar; aborts when the ODS
/// adjacency differs from the one the checkpoint was trained on.
PredictOutputs cmd_predict(const PredictOptions& options);

struct EvaluateOptions {
  std::string ods_path;
  std::optional<std::string> checkpoint_path;
  std::optional<std::string> pred_flow_csv;
  std::optional<std::string> pred_crowd_csv;
  std::vector<eval::ModelKind> baselines;  ///< scored alongside the CrowdNet predictions
  RunConfig config;                        ///< split and baseline settings when no checkpoint is given
  std::string out_dir;
};

/// Writes <out>/report.csv and <out>/report.json. Prediction CSVs take
/// precedence over the checkpoint; failing baselines become error records.
eval::EvalReport cmd_evaluate(const EvaluateOptions& options);

struct SweepOptions {
  std::string trips_csv;
  RunConfig config;
  std::vector<double> tile_sizes_m{750.0, 1000.0, 1500.0};
  std::vector<std::uint32_t> bin_minutes{15, 30, 45, 60};
  std::vector<eval::ModelKind> models{eval::ModelKind::naive, eval::ModelKind::var, eval::ModelKind::crowdnet};
  std::string out_dir;
  std::size_t workers = 1;
};

eval::EvalReport cmd_sweep(const SweepOptions& options);

struct ExportOptions {
  std::string geojson_path;
  std::optional<std::string> pred_flow_csv;
  std::optional<std::string> pred_crowd_csv;
  std::optional<std::string> ods_path;  ///< ground truth instead of predictions
  std::optional<std::size_t> time_bin;  ///< default: mean over all exported bins
  bool include_self = false;
  std::string out_dir;
};

struct ExportOutputs {
  std::string geojson_path;
  std::string edges_path;
  std::string od_matrix_path;
  std::size_t edge_count = 0;
};

/// Writes <out>/crowd.geojson (tiles with inflow/outflow properties),
/// <out>/edges.csv (origin,destination,flow for positive flows) and
/// <out>/od_matrix.csv.
ExportOutputs cmd_export(const ExportOptions& options);

}  // namespace flowcast::cli
