#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowcast/cli.hpp"
#include "flowcast/error.hpp"
#include "flowcast/io.hpp"
#include "flowcast/parallel.hpp"
#include "flowcast/synthetic.hpp"

namespace {

using flowcast::cli::RunConfig;
using nlohmann::json;

// Flags shared by the pipeline commands; applied on top of --config.
struct Overrides {
  std::string config_path;
  std::uint64_t seed = 0;
  double tile_size_m = 0.0;
  std::string geojson;
  std::vector<double> bbox;
  std::uint32_t bin_minutes = 0;
  std::size_t k = 0, kernel_t = 0, channels = 0, epochs = 0, batch = 0, patience = 0, test_days = 0, test_bins = 0;
  double lr = 0.0;
  double val_fraction = 0.0;
  bool include_self = false;

  std::vector<CLI::Option*> opts;

  void attach(CLI::App* cmd, bool tessellation, bool training) {
    opts.clear();
    opts.push_back(cmd->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile));
    opts.push_back(cmd->add_option("--seed", seed, "Random seed"));
    if (tessellation) {
      opts.push_back(cmd->add_option("--tile-size-m", tile_size_m, "Square tile side in meters"));
      opts.push_back(cmd->add_option("--geojson", geojson, "Irregular tessellation (GeoJSON)")->check(CLI::ExistingFile));
      opts.push_back(cmd->add_option("--bbox", bbox, "min_lon,min_lat,max_lon,max_lat")->delimiter(',')->expected(4));
      opts.push_back(cmd->add_option("--bin-minutes", bin_minutes, "Time bin length in minutes"));
    } else {
      opts.insert(opts.end(), 4, nullptr);
    }
    if (training) {
      opts.push_back(cmd->add_option("--k", k, "History length in bins"));
      opts.push_back(cmd->add_option("--kernel-t", kernel_t, "Temporal kernel size"));
      opts.push_back(cmd->add_option("--channels", channels, "Channel width of both ST-GCN blocks"));
      opts.push_back(cmd->add_option("--epochs", epochs, "Maximum training epochs"));
      opts.push_back(cmd->add_option("--batch", batch, "Mini-batch size"));
      opts.push_back(cmd->add_option("--patience", patience, "Early-stopping patience"));
      opts.push_back(cmd->add_option("--test-days", test_days, "Days held out for testing"));
      opts.push_back(cmd->add_option("--test-bins", test_bins, "Bins held out for testing (overrides --test-days)"));
      opts.push_back(cmd->add_option("--lr", lr, "RMSprop learning rate"));
      opts.push_back(cmd->add_option("--val-fraction", val_fraction, "Validation share of the development set"));
      opts.push_back(cmd->add_flag("--include-self-flows", include_self, "Count i->i flows in crowd totals"));
    }
  }

  bool given(std::size_t i) const { return i < opts.size() && opts[i] && opts[i]->count() > 0; }

  RunConfig resolve() const {
    RunConfig c = given(0) ? RunConfig::load(config_path) : RunConfig{};
    if (given(1)) c.seed = seed;
    if (given(2)) c.tile_size_m = tile_size_m;
    if (given(3)) c.geojson = geojson;
    if (given(4)) c.bbox = flowcast::geo::BoundingBox{bbox[0], bbox[1], bbox[2], bbox[3]};
    if (given(5)) c.bin_minutes = bin_minutes;
    if (given(6)) c.k = k;
    if (given(7)) c.kernel_t = kernel_t;
    if (given(8)) c.hidden_channels = c.block_channels = channels;
    if (given(9)) c.epochs = epochs;
    if (given(10)) c.batch = batch;
    if (given(11)) c.patience = patience;
    if (given(12)) c.test_days = test_days;
    if (given(13)) c.test_bins = test_bins;
    if (given(14)) c.lr = lr;
    if (given(15)) c.val_fraction = val_fraction;
    if (given(16)) c.include_self = include_self;
    return c;
  }
};

std::vector<flowcast::eval::ModelKind> parse_models(const std::vector<std::string>& names) {
  std::vector<flowcast::eval::ModelKind> out;
  for (const auto& n : names) out.push_back(flowcast::eval::parse_model_kind(n));
  return out;
}

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowcast: crowd-flow forecasting on spatial tessellations"};
  app.require_subcommand(1);
  std::string out_dir;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Build an OD series file from trips or GPS traces");
  Overrides ingest_ov;
  std::string trips_path, gps_path;
  ingest->add_option("--trips", trips_path, "Trip CSV")->check(CLI::ExistingFile);
  ingest->add_option("--gps", gps_path, "GPS CSV")->check(CLI::ExistingFile);
  ingest->add_option("--out", out_dir, "Output directory")->required();
  ingest_ov.attach(ingest, true, false);

  // train
  auto* train = app.add_subcommand("train", "Train CrowdNet on an OD series file");
  Overrides train_ov;
  std::string ods_path;
  train->add_option("--ods", ods_path, "ODS1 file")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out_dir, "Output directory")->required();
  train_ov.attach(train, false, true);

  // predict
  auto* predict = app.add_subcommand("predict", "Forecast the test range with a trained checkpoint");
  std::string checkpoint_path;
  predict->add_option("--ods", ods_path, "ODS1 file")->required()->check(CLI::ExistingFile);
  predict->add_option("--checkpoint", checkpoint_path, "CNW1 checkpoint")->required()->check(CLI::ExistingFile);
  predict->add_option("--out", out_dir, "Output directory")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score CrowdNet predictions and baselines");
  Overrides eval_ov;
  std::string pred_flow, pred_crowd;
  std::vector<std::string> baseline_names;
  evaluate->add_option("--ods", ods_path, "ODS1 file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--checkpoint", checkpoint_path, "CNW1 checkpoint")->check(CLI::ExistingFile);
  evaluate->add_option("--pred-flow", pred_flow, "Flow prediction CSV")->check(CLI::ExistingFile);
  evaluate->add_option("--pred-crowd", pred_crowd, "Crowd prediction CSV")->check(CLI::ExistingFile);
  evaluate->add_option("--baselines", baseline_names, "Baselines to score (naive,var)")->delimiter(',');
  evaluate->add_option("--out", out_dir, "Output directory")->required();
  eval_ov.attach(evaluate, true, true);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Evaluate models over tile sizes and bin lengths");
  Overrides sweep_ov;
  std::vector<double> tile_sizes{750.0, 1000.0, 1500.0};
  std::vector<std::uint32_t> bin_list{15, 30, 45, 60};
  std::vector<std::string> model_names{"naive", "var", "crowdnet"};
  sweep->add_option("--trips", trips_path, "Trip CSV")->required()->check(CLI::ExistingFile);
  sweep->add_option("--tile-sizes", tile_sizes, "Tile sides in meters")->delimiter(',');
  sweep->add_option("--bin-list", bin_list, "Bin lengths in minutes")->delimiter(',');
  sweep->add_option("--models", model_names, "Models to run")->delimiter(',');
  sweep->add_option("--out", out_dir, "Output directory")->required();
  sweep_ov.attach(sweep, true, true);

  // export
  auto* exp = app.add_subcommand("export", "Write GeoJSON crowd payloads, edge lists and OD matrices");
  std::string geojson_path;
  std::size_t time_bin = 0;
  bool export_self = false;
  exp->add_option("--geojson", geojson_path, "Tessellation GeoJSON")->required()->check(CLI::ExistingFile);
  exp->add_option("--pred-flow", pred_flow, "Flow prediction CSV")->check(CLI::ExistingFile);
  exp->add_option("--pred-crowd", pred_crowd, "Crowd prediction CSV")->check(CLI::ExistingFile);
  exp->add_option("--ods", ods_path, "Export ground truth from an ODS1 file")->check(CLI::ExistingFile);
  auto* time_bin_opt = exp->add_option("--time-bin", time_bin, "Single bin to export (default: mean over bins)");
  exp->add_flag("--include-self-flows", export_self, "Count i->i flows in crowd totals");
  exp->add_option("--out", out_dir, "Output directory")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic trip CSV");
  std::string synth_out;
  std::vector<double> synth_bbox{-74.02, 40.70, -73.95, 40.78};
  std::size_t synth_days = 14;
  double synth_rate = 4.0;
  std::uint64_t synth_seed = 11;
  synth->add_option("--out", synth_out, "Output CSV path")->required();
  synth->add_option("--bbox", synth_bbox, "min_lon,min_lat,max_lon,max_lat")->delimiter(',')->expected(4);
  synth->add_option("--days", synth_days, "Number of days");
  synth->add_option("--rate", synth_rate, "Peak trips per minute");
  synth->add_option("--seed", synth_seed, "Random seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) {
      flowcast::cli::IngestOptions o;
      if (!trips_path.empty()) o.trips_csv = trips_path;
      if (!gps_path.empty()) o.gps_csv = gps_path;
      o.config = ingest_ov.resolve();
      o.out_dir = out_dir;
      o.workers = flowcast::worker_count();
      print(flowcast::cli::cmd_ingest(o).to_json());
    } else if (train->parsed()) {
      flowcast::cli::TrainOptions o{ods_path, train_ov.resolve(), out_dir};
      const auto r = flowcast::cli::cmd_train(o);
      print({{"checkpoint", r.checkpoint_path},
             {"sidecar", r.sidecar_path},
             {"history", r.history_path},
             {"epochs_run", r.history.epochs.size()},
             {"best_epoch", r.history.best_epoch},
             {"best_val_mse", r.history.best_monitor},
             {"stopped_early", r.history.stopped_early}});
    } else if (predict->parsed()) {
      const auto r = flowcast::cli::cmd_predict({ods_path, checkpoint_path, out_dir});
      print({{"flow_csv", r.flow_csv_path}, {"crowd_csv", r.crowd_csv_path}, {"bins", r.forecast.bins.size()}});
    } else if (evaluate->parsed()) {
      flowcast::cli::EvaluateOptions o;
      o.ods_path = ods_path;
      if (!checkpoint_path.empty()) o.checkpoint_path = checkpoint_path;
      if (!pred_flow.empty()) o.pred_flow_csv = pred_flow;
      if (!pred_crowd.empty()) o.pred_crowd_csv = pred_crowd;
      o.baselines = parse_models(baseline_names);
      o.config = eval_ov.resolve();
      o.out_dir = out_dir;
      std::cout << flowcast::cli::cmd_evaluate(o).to_json() << std::endl;
    } else if (sweep->parsed()) {
      flowcast::cli::SweepOptions o;
      o.trips_csv = trips_path;
      o.config = sweep_ov.resolve();
      o.tile_sizes_m = tile_sizes;
      o.bin_minutes = bin_list;
      o.models = parse_models(model_names);
      o.out_dir = out_dir;
      o.workers = flowcast::worker_count();
      std::cout << flowcast::cli::cmd_sweep(o).to_json() << std::endl;
    } else if (exp->parsed()) {
      flowcast::cli::ExportOptions o;
      o.geojson_path = geojson_path;
      if (!pred_flow.empty()) o.pred_flow_csv = pred_flow;
      if (!pred_crowd.empty()) o.pred_crowd_csv = pred_crowd;
      if (!ods_path.empty()) o.ods_path = ods_path;
      if (time_bin_opt->count()) o.time_bin = time_bin;
      o.include_self = export_self;
      o.out_dir = out_dir;
      const auto r = flowcast::cli::cmd_export(o);
      print({{"geojson", r.geojson_path}, {"edges", r.edges_path}, {"od_matrix", r.od_matrix_path},
             {"edge_count", r.edge_count}});
    } else if (synth->parsed()) {
      flowcast::synthetic::TripSpec spec;
      spec.bbox = {synth_bbox[0], synth_bbox[1], synth_bbox[2], synth_bbox[3]};
      spec.days = synth_days;
      spec.peak_rate_per_minute = synth_rate;
      spec.seed = synth_seed;
      const auto trips = flowcast::synthetic::trips(spec);
      flowcast::io::write_text_file(synth_out, flowcast::io::format_trip_csv(trips));
      print({{"trips", trips.size()}, {"path", synth_out}});
    }
  } catch (const std::exception& e) {
    std::cerr << "flowcast: error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
