#include "flowcast/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <set>
#include <sstream>

#include "flowcast/crowdnet.hpp"
#include "flowcast/error.hpp"
#include "flowcast/io.hpp"
#include "flowcast/optim.hpp"

namespace flowcast::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void require_out_dir(const std::string& out_dir) {
  if (out_dir.empty()) throw Error("an output directory (--out) is required");
  fs::create_directories(out_dir);
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json range_json(const flow::BinRange& r) { return json::array({r.begin, r.end}); }

flow::BinRange range_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw Error("sidecar: bin range must be [begin, end]");
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>()};
}

const char* var_mode_name(eval::VarCrowdMode m) {
  return m == eval::VarCrowdMode::crowd_series ? "crowd_series" : "from_od";
}

geo::Tessellation build_tessellation(const RunConfig& cfg, const std::vector<geo::GeoPoint>& points) {
  if (cfg.geojson) return geo::read_geojson(*cfg.geojson);
  if (!cfg.tile_size_m) throw Error("a tessellation is required: give --tile-size-m or --geojson");
  geo::BoundingBox bbox;
  if (cfg.bbox) {
    bbox = *cfg.bbox;
  } else {
    if (points.empty()) throw Error("no points to derive a bounding box from");
    bbox = geo::BoundingBox::around(points);
  }
  if (!bbox.valid()) throw Error("bounding box is degenerate; pass --bbox");
  return geo::build_square_grid(bbox, *cfg.tile_size_m);
}

struct Sidecar {
  RunConfig config;
  model::ModelConfig model;
  std::size_t adj_n = 0;
  std::size_t adj_edges = 0;
  std::string adj_hash;
  flow::SplitRanges split;
  std::size_t t_bins = 0;
};

Sidecar read_sidecar(const std::string& checkpoint_path) {
  const std::string path = sidecar_path_for(checkpoint_path);
  json j;
  try {
    j = json::parse(io::read_text_file(path));
  } catch (const json::exception& e) {
    throw Error("sidecar '" + path + "' is not valid JSON: " + e.what());
  }
  Sidecar s;
  try {
    s.config = RunConfig::from_json(j.at("config"));
    const json& m = j.at("model");
    s.model.n = m.at("n").get<std::size_t>();
    s.model.k = m.at("k").get<std::size_t>();
    s.model.horizon = m.at("horizon").get<std::size_t>();
    s.model.hidden_channels = m.at("hidden_channels").get<std::size_t>();
    s.model.block_channels = m.at("block_channels").get<std::size_t>();
    s.model.kernel_t = m.at("kernel_t").get<std::size_t>();
    s.model.bn_eps = m.at("bn_eps").get<double>();
    s.model.seed = m.at("seed").get<std::uint64_t>();
    s.model.symmetrize = m.at("symmetrize").get<bool>();
    const json& a = j.at("adjacency");
    s.adj_n = a.at("n").get<std::size_t>();
    s.adj_edges = a.at("edge_count").get<std::size_t>();
    s.adj_hash = a.at("hash").get<std::string>();
    const json& sp = j.at("split");
    s.split = {range_from(sp.at("train")), range_from(sp.at("val")), range_from(sp.at("test"))};
    s.t_bins = j.at("series").at("t_bins").get<std::size_t>();
  } catch (const json::exception& e) {
    throw Error("sidecar '" + path + "' is missing fields: " + e.what());
  }
  return s;
}

struct LoadedModel {
  Sidecar sidecar;
  flow::ODSeries od;
  flow::DenseSeries series;
  model::CrowdNet net;
};

LoadedModel load_model(const std::string& ods_path, const std::string& checkpoint_path) {
  Sidecar sc = read_sidecar(checkpoint_path);
  flow::ODSeries od = io::read_ods(ods_path);
  if (od.n != sc.model.n) {
    throw Error("adjacency fingerprint mismatch: checkpoint has " + std::to_string(sc.model.n) + " tiles, ODS has " +
                std::to_string(od.n));
  }
  if (sc.split.train.end > od.t_bins) throw Error("ODS is shorter than the checkpoint's training range");
  const flow::Adjacency adj = flow::adjacency_from_od(od, sc.split.train);
  if (adj.n != sc.adj_n || adj.edge_count() != sc.adj_edges || fingerprint_hex(adj.hash()) != sc.adj_hash) {
    throw Error("adjacency fingerprint mismatch: checkpoint (n=" + std::to_string(sc.adj_n) +
                ", edges=" + std::to_string(sc.adj_edges) + ", hash=" + sc.adj_hash + ") vs ODS (n=" +
                std::to_string(adj.n) + ", edges=" + std::to_string(adj.edge_count()) +
                ", hash=" + fingerprint_hex(adj.hash()) + ")");
  }
  if (sc.split.test.end > od.t_bins || sc.split.test.size() < sc.model.k + 1) {
    throw Error("ODS does not cover the checkpoint's test range [" + std::to_string(sc.split.test.begin) + ", " +
                std::to_string(sc.split.test.end) + ")");
  }
  model::CrowdNet net = model::CrowdNet::from_state(sc.model, ad::load_checkpoint(checkpoint_path));
  if (net.adjacency().hash() != adj.hash()) {
    throw Error("adjacency fingerprint mismatch: checkpoint graph differs from the ODS training range");
  }
  flow::DenseSeries series = flow::DenseSeries::from(od);
  return {std::move(sc), std::move(od), std::move(series), std::move(net)};
}

eval::Forecast truth_forecast(const flow::DenseSeries& s, bool include_self) {
  eval::Forecast f;
  f.n = s.n;
  const std::size_t n = s.n;
  for (std::size_t t = 0; t < s.t_bins; ++t) f.bins.push_back(t);
  f.od = s.data;
  f.inflow.resize(s.t_bins * n);
  f.outflow.resize(s.t_bins * n);
  for (std::size_t t = 0; t < s.t_bins; ++t)
    eval::crowd_of(s.slice(t), n, include_self, f.inflow.data() + t * n, f.outflow.data() + t * n);
  return f;
}

void write_report(const eval::EvalReport& report, const std::string& out_dir) {
  io::write_text_file(join(out_dir, "report.csv"), report.to_csv());
  io::write_text_file(join(out_dir, "report.json"), report.to_json());
}

}  // namespace

void RunConfig::validate() const {
  if (tile_size_m && !(*tile_size_m > 0.0 && std::isfinite(*tile_size_m))) {
    throw Error("config: tile_size_m must be positive");
  }
  if (bbox && !bbox->valid()) throw Error("config: bbox needs min_lon < max_lon and min_lat < max_lat");
  if (bin_minutes == 0) throw Error("config: bin_minutes must be positive");
  model::ModelConfig mc;
  mc.n = 1;
  mc.k = k;
  mc.hidden_channels = hidden_channels;
  mc.block_channels = block_channels;
  mc.kernel_t = kernel_t;
  mc.validate();
  if (epochs == 0) throw Error("config: epochs must be at least 1");
  if (batch == 0) throw Error("config: batch must be at least 1");
  if (!(lr > 0.0)) throw Error("config: lr must be positive");
  if (!(min_delta >= 0.0)) throw Error("config: min_delta must be non-negative");
  if (naive_window == 0) throw Error("config: naive_window must be at least 1");
  if (var_order == 0) throw Error("config: var_order must be at least 1");
  if (test_days == 0 && test_bins == 0) throw Error("config: test_days or test_bins must be positive");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw Error("config: val_fraction must lie in [0, 1)");
}

eval::ExperimentConfig RunConfig::experiment(std::size_t n) const {
  eval::ExperimentConfig e;
  e.model.n = n;
  e.model.k = k;
  e.model.hidden_channels = hidden_channels;
  e.model.block_channels = block_channels;
  e.model.kernel_t = kernel_t;
  e.model.symmetrize = symmetrize;
  e.model.seed = seed;
  e.train.epochs = epochs;
  e.train.batch_size = batch;
  e.train.optimizer.lr = lr;
  e.train.patience = patience;
  e.train.min_delta = min_delta;
  e.train.seed = seed;
  e.naive_window = naive_window;
  e.var_order = var_order;
  e.var_crowd = var_crowd;
  e.include_self = include_self;
  e.test_days = test_days;
  e.test_bins = test_bins;
  e.val_fraction = val_fraction;
  return e;
}

json RunConfig::to_json() const {
  json j = {{"bin_minutes", bin_minutes},
            {"k", k},
            {"hidden_channels", hidden_channels},
            {"block_channels", block_channels},
            {"kernel_t", kernel_t},
            {"symmetrize", symmetrize},
            {"epochs", epochs},
            {"batch", batch},
            {"lr", lr},
            {"patience", patience},
            {"min_delta", min_delta},
            {"naive_window", naive_window},
            {"var_order", var_order},
            {"var_crowd", var_mode_name(var_crowd)},
            {"include_self_flows", include_self},
            {"test_days", test_days},
            {"test_bins", test_bins},
            {"val_fraction", val_fraction},
            {"seed", seed}};
  if (tile_size_m) j["tile_size_m"] = *tile_size_m;
  if (geojson) j["geojson"] = *geojson;
  if (bbox) j["bbox"] = json::array({bbox->min_lon, bbox->min_lat, bbox->max_lon, bbox->max_lat});
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw Error("config: expected a JSON object");
  static const std::set<std::string> known = {
      "tile_size_m", "geojson",      "bbox",      "bin_minutes", "k",         "hidden_channels",    "block_channels",
      "kernel_t",    "symmetrize",   "epochs",    "batch",       "lr",        "patience",           "min_delta",
      "naive_window", "var_order",   "var_crowd", "test_days",   "test_bins", "include_self_flows", "val_fraction",
      "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw Error("config: unknown key '" + key + "'");
  }
  RunConfig c;
  try {
    if (j.contains("tile_size_m") && !j["tile_size_m"].is_null()) c.tile_size_m = j["tile_size_m"].get<double>();
    if (j.contains("geojson") && !j["geojson"].is_null()) c.geojson = j["geojson"].get<std::string>();
    if (j.contains("bbox") && !j["bbox"].is_null()) {
      const auto v = j["bbox"].get<std::vector<double>>();
      if (v.size() != 4) throw Error("config: bbox must be [min_lon, min_lat, max_lon, max_lat]");
      c.bbox = geo::BoundingBox{v[0], v[1], v[2], v[3]};
    }
    auto read = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    read("bin_minutes", c.bin_minutes);
    read("k", c.k);
    read("hidden_channels", c.hidden_channels);
    read("block_channels", c.block_channels);
    read("kernel_t", c.kernel_t);
    read("symmetrize", c.symmetrize);
    read("epochs", c.epochs);
    read("batch", c.batch);
    read("lr", c.lr);
    read("patience", c.patience);
    read("min_delta", c.min_delta);
    read("naive_window", c.naive_window);
    read("var_order", c.var_order);
    read("include_self_flows", c.include_self);
    read("test_days", c.test_days);
    read("test_bins", c.test_bins);
    read("val_fraction", c.val_fraction);
    read("seed", c.seed);
    if (j.contains("var_crowd")) {
      const auto mode = j["var_crowd"].get<std::string>();
      if (mode == "crowd_series") {
        c.var_crowd = eval::VarCrowdMode::crowd_series;
      } else if (mode == "from_od") {
        c.var_crowd = eval::VarCrowdMode::from_od;
      } else {
        throw Error("config: var_crowd must be 'crowd_series' or 'from_od'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  try {
    return from_json(json::parse(io::read_text_file(path)));
  } catch (const json::exception& e) {
    throw Error("config '" + path + "' is not valid JSON: " + e.what());
  }
}

std::string fingerprint_hex(std::uint64_t hash) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

json IngestSummary::to_json() const {
  return {{"rows", rows},
          {"malformed_rows", malformed_rows},
          {"records", stats.records},
          {"retained", stats.retained},
          {"dropped", stats.dropped() + malformed_rows},
          {"dropped_unlocatable", stats.dropped_unlocatable},
          {"dropped_out_of_range", stats.dropped_out_of_range},
          {"bins", bins},
          {"tiles", tiles},
          {"bin_minutes", bin_minutes},
          {"epoch_start", io::format_iso8601(epoch_start)},
          {"total_flow", total_flow},
          {"ods", ods_path},
          {"geojson", geojson_path}};
}

IngestSummary cmd_ingest(const IngestOptions& options) {
  options.config.validate();
  if (options.trips_csv.has_value() == options.gps_csv.has_value()) {
    throw Error("ingest needs exactly one of --trips or --gps");
  }
  require_out_dir(options.out_dir);
  const RunConfig& cfg = options.config;
  IngestSummary summary;
  flow::IngestResult result;
  std::unique_ptr<geo::Tessellation> tess;

  if (options.trips_csv) {
    const io::TripCsv csv = io::read_trip_csv(*options.trips_csv);
    summary.rows = csv.report.rows;
    summary.malformed_rows = csv.report.bad_rows.size();
    if (csv.trips.empty()) throw Error("trip CSV has no valid rows");
    std::vector<geo::GeoPoint> pts;
    flow::Timestamp first = csv.trips.front().start_time;
    for (const auto& t : csv.trips) {
      pts.push_back(t.start);
      pts.push_back(t.end);
      first = std::min(first, t.start_time);
    }
    tess = std::make_unique<geo::Tessellation>(build_tessellation(cfg, pts));
    const auto binning = flow::TimeBinning::aligned(first, cfg.bin_minutes);
    result = flow::od_from_trips(csv.trips, *tess, binning, std::max<std::size_t>(1, options.workers));
  } else {
    const io::GpsCsv csv = io::read_gps_csv(*options.gps_csv);
    summary.rows = csv.report.rows;
    summary.malformed_rows = csv.report.bad_rows.size();
    if (csv.traces.empty()) throw Error("GPS CSV has no valid rows");
    std::vector<geo::GeoPoint> pts;
    flow::Timestamp first = csv.traces.front().points.front().time;
    for (const auto& tr : csv.traces) {
      for (const auto& f : tr.points) {
        pts.push_back(f.position);
        first = std::min(first, f.time);
      }
    }
    tess = std::make_unique<geo::Tessellation>(build_tessellation(cfg, pts));
    const auto binning = flow::TimeBinning::aligned(first, cfg.bin_minutes);
    result = flow::od_from_gps(csv.traces, *tess, binning);
  }

  summary.stats = result.stats;
  summary.bins = result.od.t_bins;
  summary.tiles = result.od.n;
  summary.bin_minutes = result.od.binning.bin_minutes;
  summary.epoch_start = result.od.binning.epoch_start;
  summary.total_flow = result.od.total();
  summary.ods_path = join(options.out_dir, "od.ods");
  summary.geojson_path = join(options.out_dir, "tessellation.geojson");
  io::write_ods(result.od, summary.ods_path);
  io::write_text_file(summary.geojson_path, geo::to_geojson(*tess));
  return summary;
}

std::string sidecar_path_for(const std::string& checkpoint_path) {
  return fs::path(checkpoint_path).replace_extension(".json").string();
}

TrainOutputs cmd_train(const TrainOptions& options) {
  const RunConfig& cfg = options.config;
  cfg.validate();
  require_out_dir(options.out_dir);
  const flow::ODSeries od = io::read_ods(options.ods_path);
  const flow::DenseSeries series = flow::DenseSeries::from(od);
  const eval::ExperimentConfig exp = cfg.experiment(od.n);
  const flow::SplitRanges split = eval::split_for(exp, od.t_bins, od.binning.bin_minutes);
  if (split.train.size() < cfg.k + 1) {
    throw Error("training range has " + std::to_string(split.train.size()) + " bins; k = " + std::to_string(cfg.k) +
                " needs at least " + std::to_string(cfg.k + 1));
  }

  const flow::Adjacency adj = flow::adjacency_from_od(od, split.train);
  model::CrowdNet net(exp.model, adj);
  const auto train_w = flow::make_windows(series, split.train, cfg.k, 1);
  const auto val_w = split.val.size() >= cfg.k + 1 ? flow::make_windows(series, split.val, cfg.k, 1)
                                                   : std::vector<flow::Window>{};
  TrainOutputs out;
  out.history = model::train(net, train_w, val_w, exp.train);

  out.checkpoint_path = join(options.out_dir, "checkpoint.cnw");
  out.sidecar_path = sidecar_path_for(out.checkpoint_path);
  out.history_path = join(options.out_dir, "history.csv");
  ad::save_checkpoint(net.state(), out.checkpoint_path);

  const auto& mc = net.config();
  json sidecar = {
      {"format", "flowcast.checkpoint.v1"},
      {"config", cfg.to_json()},
      {"model",
       {{"n", mc.n},
        {"k", mc.k},
        {"horizon", mc.horizon},
        {"hidden_channels", mc.hidden_channels},
        {"block_channels", mc.block_channels},
        {"kernel_t", mc.kernel_t},
        {"bn_eps", mc.bn_eps},
        {"seed", mc.seed},
        {"symmetrize", mc.symmetrize}}},
      {"adjacency", {{"n", adj.n}, {"edge_count", adj.edge_count()}, {"hash", fingerprint_hex(adj.hash())}}},
      {"series",
       {{"t_bins", od.t_bins},
        {"bin_minutes", od.binning.bin_minutes},
        {"epoch_start", io::format_iso8601(od.binning.epoch_start)}}},
      {"split", {{"train", range_json(split.train)}, {"val", range_json(split.val)}, {"test", range_json(split.test)}}},
      {"data_scale", net.scale()},
      {"training",
       {{"epochs_run", out.history.epochs.size()},
        {"best_epoch", out.history.best_epoch},
        {"best_monitor", out.history.best_monitor},
        {"stopped_early", out.history.stopped_early}}}};
  io::write_text_file(out.sidecar_path, sidecar.dump(2) + "\n");

  std::ostringstream hist;
  hist << "epoch,train_mse,val_mse\n";
  for (const auto& e : out.history.epochs) hist << e.epoch << ',' << g17(e.train_mse) << ',' << g17(e.val_mse) << '\n';
  io::write_text_file(out.history_path, hist.str());
  return out;
}

PredictOutputs cmd_predict(const PredictOptions& options) {
  LoadedModel lm = load_model(options.ods_path, options.checkpoint_path);
  require_out_dir(options.out_dir);
  PredictOutputs out;
  out.forecast = eval::forecast_crowdnet(lm.net, lm.series, lm.sidecar.split.test, lm.sidecar.config.include_self);
  out.flow_csv_path = join(options.out_dir, "pred_flow.csv");
  out.crowd_csv_path = join(options.out_dir, "pred_crowd.csv");
  io::write_text_file(out.flow_csv_path, eval::flow_csv(out.forecast));
  io::write_text_file(out.crowd_csv_path, eval::crowd_csv(out.forecast));
  return out;
}

eval::EvalReport cmd_evaluate(const EvaluateOptions& options) {
  const bool from_csv = options.pred_flow_csv.has_value() || options.pred_crowd_csv.has_value();
  if (from_csv && !(options.pred_flow_csv && options.pred_crowd_csv)) {
    throw Error("evaluate needs both --pred-flow and --pred-crowd");
  }
  if (!options.checkpoint_path && !from_csv && options.baselines.empty()) {
    throw Error("evaluate needs a checkpoint, prediction CSVs or at least one baseline");
  }
  RunConfig cfg = options.config;
  std::optional<LoadedModel> lm;
  flow::ODSeries od;
  flow::SplitRanges split;
  if (options.checkpoint_path) {
    lm.emplace(load_model(options.ods_path, *options.checkpoint_path));
    cfg = lm->sidecar.config;
    if (options.config.tile_size_m) cfg.tile_size_m = options.config.tile_size_m;
    od = lm->od;
    split = lm->sidecar.split;
  } else {
    cfg.validate();
    od = io::read_ods(options.ods_path);
    split = eval::split_for(cfg.experiment(od.n), od.t_bins, od.binning.bin_minutes);
  }
  if (split.test.end > od.t_bins || split.test.size() < cfg.k + 1) {
    throw Error("ODS has no usable test range for k = " + std::to_string(cfg.k));
  }
  require_out_dir(options.out_dir);
  const flow::DenseSeries series = lm ? lm->series : flow::DenseSeries::from(od);
  const eval::ExperimentConfig exp = cfg.experiment(od.n);

  eval::EvalReport report;
  auto base_record = [&](const std::string& name) {
    eval::EvalRecord r;
    r.tile_size_m = cfg.tile_size_m.value_or(0.0);
    r.bin_minutes = od.binning.bin_minutes;
    r.model_name = name;
    r.n_tiles = od.n;
    r.seed = cfg.seed;
    return r;
  };
  if (lm || from_csv) {
    eval::Forecast f;
    if (from_csv) {
      f = eval::read_forecast_csv(io::read_text_file(*options.pred_flow_csv),
                                  io::read_text_file(*options.pred_crowd_csv), od.n);
    } else {
      f = eval::forecast_crowdnet(lm->net, series, split.test, cfg.include_self);
    }
    eval::EvalRecord r = base_record("crowdnet");
    r.metrics = eval::score(f, series, cfg.include_self);
    r.test_targets = f.bins.size();
    report.records.push_back(r);
  }
  for (const auto kind : options.baselines) {
    if (kind == eval::ModelKind::crowdnet) continue;
    eval::EvalRecord r = base_record(eval::to_string(kind));
    try {
      const auto run = eval::run_model(kind, series, split, exp, cfg.seed);
      r.metrics = run.metrics;
      r.test_targets = run.forecast.bins.size();
    } catch (const Error& e) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      r.metrics = {nan, nan, nan, nan, nan, nan, nan};
      r.error = e.what();
    }
    report.records.push_back(r);
  }
  write_report(report, options.out_dir);
  return report;
}

eval::EvalReport cmd_sweep(const SweepOptions& options) {
  options.config.validate();
  for (double s : options.tile_sizes_m) {
    if (!(s > 0.0)) throw Error("sweep: tile sizes must be positive");
  }
  for (auto b : options.bin_minutes) {
    if (b == 0) throw Error("sweep: bin lengths must be positive");
  }
  require_out_dir(options.out_dir);
  const io::TripCsv csv = io::read_trip_csv(options.trips_csv);
  eval::SweepSpec spec;
  spec.tile_sizes_m = options.tile_sizes_m;
  spec.bin_minutes = options.bin_minutes;
  spec.models = options.models;
  spec.bbox = options.config.bbox;
  spec.seed = options.config.seed;
  spec.experiment = options.config.experiment(0);
  spec.workers = std::max<std::size_t>(1, options.workers);
  const eval::EvalReport report = eval::run_sweep(csv.trips, spec);
  write_report(report, options.out_dir);
  return report;
}

ExportOutputs cmd_export(const ExportOptions& options) {
  const bool from_pred = options.pred_flow_csv.has_value() || options.pred_crowd_csv.has_value();
  if (from_pred == options.ods_path.has_value()) {
    throw Error("export needs either prediction CSVs (--pred-flow and --pred-crowd) or --ods");
  }
  if (from_pred && !(options.pred_flow_csv && options.pred_crowd_csv)) {
    throw Error("export needs both --pred-flow and --pred-crowd");
  }
  const geo::Tessellation tess = geo::read_geojson(options.geojson_path);
  const std::size_t n = tess.size();
  eval::Forecast f;
  if (from_pred) {
    f = eval::read_forecast_csv(io::read_text_file(*options.pred_flow_csv), io::read_text_file(*options.pred_crowd_csv),
                                n);
  } else {
    const flow::ODSeries od = io::read_ods(*options.ods_path);
    if (od.n != n) throw Error("ODS tile count does not match the tessellation");
    f = truth_forecast(flow::DenseSeries::from(od), options.include_self);
  }
  if (f.bins.empty()) throw Error("export: no time bins to export");
  require_out_dir(options.out_dir);

  std::vector<double> od_slice(n * n, 0.0), in(n, 0.0), out(n, 0.0);
  std::vector<std::size_t> picked;
  if (options.time_bin) {
    const auto it = std::find(f.bins.begin(), f.bins.end(), *options.time_bin);
    if (it == f.bins.end()) throw Error("export: time bin " + std::to_string(*options.time_bin) + " is not present");
    picked.push_back(static_cast<std::size_t>(it - f.bins.begin()));
  } else {
    for (std::size_t b = 0; b < f.bins.size(); ++b) picked.push_back(b);
  }
  const double w = 1.0 / static_cast<double>(picked.size());
  for (std::size_t b : picked) {
    for (std::size_t i = 0; i < n * n; ++i) od_slice[i] += w * f.od[b * n * n + i];
    for (std::size_t i = 0; i < n; ++i) {
      in[i] += w * f.inflow[b * n + i];
      out[i] += w * f.outflow[b * n + i];
    }
  }

  ExportOutputs res;
  res.geojson_path = join(options.out_dir, "crowd.geojson");
  res.edges_path = join(options.out_dir, "edges.csv");
  res.od_matrix_path = join(options.out_dir, "od_matrix.csv");
  io::write_text_file(res.geojson_path, geo::to_geojson(tess, {{"inflow", in}, {"outflow", out}}));
  const std::string edges = eval::edge_list_csv(od_slice.data(), n);
  res.edge_count = static_cast<std::size_t>(std::count(edges.begin(), edges.end(), '\n')) - 1;
  io::write_text_file(res.edges_path, edges);
  std::ostringstream m;
  m << "origin";
  for (std::size_t j = 0; j < n; ++j) m << ',' << j;
  m << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    m << i;
    for (std::size_t j = 0; j < n; ++j) m << ',' << g17(od_slice[i * n + j]);
    m << '\n';
  }
  io::write_text_file(res.od_matrix_path, m.str());
  return res;
}

}  // namespace flowcast::cli
