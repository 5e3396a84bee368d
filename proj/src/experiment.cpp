#include "flowcast/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "flowcast/baselines.hpp"
#include "flowcast/error.hpp"
#include "flowcast/io.hpp"
#include "flowcast/metrics.hpp"
#include "flowcast/parallel.hpp"

namespace flowcast::eval {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Target bins and histories of every window in `test`.
std::vector<flow::Window> test_windows(const flow::DenseSeries& series, flow::BinRange test, std::size_t k) {
  return flow::make_windows(series, test, k, 1);
}

Forecast empty_forecast(std::size_t n, const std::vector<flow::Window>& windows) {
  Forecast f;
  f.n = n;
  for (const auto& w : windows) f.bins.push_back(w.target_bin);
  f.od.reserve(windows.size() * n * n);
  return f;
}

void fill_crowd_from_od(Forecast& f, bool include_self) {
  const std::size_t n = f.n;
  f.inflow.assign(f.bins.size() * n, 0.0);
  f.outflow.assign(f.bins.size() * n, 0.0);
  for (std::size_t b = 0; b < f.bins.size(); ++b) {
    std::vector<double> clamped(f.od.begin() + static_cast<std::ptrdiff_t>(b * n * n),
                                f.od.begin() + static_cast<std::ptrdiff_t>((b + 1) * n * n));
    for (auto& v : clamped) v = std::max(0.0, v);
    crowd_of(clamped.data(), n, include_self, f.inflow.data() + b * n, f.outflow.data() + b * n);
  }
}

// (t, 2n) series of [inflow..., outflow...] per bin.
std::vector<double> crowd_rows(const flow::DenseSeries& s, std::size_t begin, std::size_t end, bool include_self) {
  const std::size_t n = s.n;
  std::vector<double> out((end - begin) * 2 * n);
  for (std::size_t t = begin; t < end; ++t) {
    double* row = out.data() + (t - begin) * 2 * n;
    crowd_of(s.slice(t), n, include_self, row, row + n);
  }
  return out;
}

std::pair<double, double> value_range(const std::vector<double>& a, const std::vector<double>& b = {}) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : a) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double v : b) lo = std::min(lo, v), hi = std::max(hi, v);
  return {hi, lo};
}

double safe_nrmse(double r, std::pair<double, double> range) {
  return range.first > range.second ? metrics::nrmse(r, range.first, range.second)
                                    : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::naive:
      return "naive";
    case ModelKind::var:
      return "var";
    case ModelKind::crowdnet:
      return "crowdnet";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "naive") return ModelKind::naive;
  if (name == "var") return ModelKind::var;
  if (name == "crowdnet") return ModelKind::crowdnet;
  throw Error("unknown model '" + name + "' (expected naive, var or crowdnet)");
}

void crowd_of(const double* od_slice, std::size_t n, bool include_self, double* inflow, double* outflow) {
  std::fill(inflow, inflow + n, 0.0);
  std::fill(outflow, outflow + n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j && !include_self) continue;
      outflow[i] += od_slice[i * n + j];
      inflow[j] += od_slice[i * n + j];
    }
  }
}

Forecast forecast_naive(const flow::DenseSeries& series, flow::BinRange test, std::size_t k, std::size_t window,
                        bool include_self) {
  if (window > k) throw Error("naive baseline window exceeds the history length k");
  const auto windows = test_windows(series, test, k);
  Forecast f = empty_forecast(series.n, windows);
  for (const auto& w : windows) {
    const auto pred = baselines::naive_predict(w.history, series.n * series.n, window);
    f.od.insert(f.od.end(), pred.begin(), pred.end());
  }
  fill_crowd_from_od(f, include_self);
  return f;
}

Forecast forecast_var(const flow::DenseSeries& series, flow::BinRange fit_range, flow::BinRange test, std::size_t k,
                      std::size_t order, VarCrowdMode crowd_mode, bool include_self) {
  if (order > k) throw Error("VAR order exceeds the history length k");
  const std::size_t n = series.n;
  const std::size_t nn = n * n;
  const auto windows = test_windows(series, test, k);
  Forecast f = empty_forecast(n, windows);

  std::vector<double> od_rows(series.slice(fit_range.begin), series.slice(fit_range.end));
  const auto od_model = baselines::VarModel::fit(od_rows, nn, order);
  for (const auto& w : windows) {
    std::vector<double> recent(w.history.end() - static_cast<std::ptrdiff_t>(order * nn), w.history.end());
    const auto pred = od_model.predict(recent);
    f.od.insert(f.od.end(), pred.begin(), pred.end());
  }

  if (crowd_mode == VarCrowdMode::from_od) {
    fill_crowd_from_od(f, include_self);
    return f;
  }
  const auto crowd_model = baselines::VarModel::fit(crowd_rows(series, fit_range.begin, fit_range.end, include_self),
                                                    2 * n, order);
  f.inflow.reserve(windows.size() * n);
  f.outflow.reserve(windows.size() * n);
  for (const auto& w : windows) {
    const auto recent = crowd_rows(series, w.target_bin - order, w.target_bin, include_self);
    const auto pred = crowd_model.predict(recent);
    f.inflow.insert(f.inflow.end(), pred.begin(), pred.begin() + static_cast<std::ptrdiff_t>(n));
    f.outflow.insert(f.outflow.end(), pred.begin() + static_cast<std::ptrdiff_t>(n), pred.end());
  }
  return f;
}

Forecast forecast_crowdnet(model::CrowdNet& net, const flow::DenseSeries& series, flow::BinRange test,
                           bool include_self) {
  const auto windows = test_windows(series, test, net.config().k);
  Forecast f = empty_forecast(series.n, windows);
  f.od = net.predict(windows);
  fill_crowd_from_od(f, include_self);
  return f;
}

EvalMetrics score(const Forecast& forecast, const flow::DenseSeries& truth, bool include_self) {
  const std::size_t n = forecast.n;
  const std::size_t nn = n * n;
  if (n != truth.n) throw Error("score: forecast and truth have different tile counts");
  if (forecast.bins.empty()) throw Error("score: forecast has no target bins");
  if (forecast.od.size() != forecast.bins.size() * nn || forecast.inflow.size() != forecast.bins.size() * n ||
      forecast.outflow.size() != forecast.bins.size() * n) {
    throw Error("score: forecast arrays do not match its bin count");
  }
  std::vector<double> true_od, true_in, true_out;
  true_od.reserve(forecast.od.size());
  true_in.resize(forecast.inflow.size());
  true_out.resize(forecast.outflow.size());
  for (std::size_t b = 0; b < forecast.bins.size(); ++b) {
    const std::size_t t = forecast.bins[b];
    if (t >= truth.t_bins) throw Error("score: forecast bin beyond the series");
    true_od.insert(true_od.end(), truth.slice(t), truth.slice(t) + nn);
    crowd_of(truth.slice(t), n, include_self, true_in.data() + b * n, true_out.data() + b * n);
  }

  EvalMetrics m;
  m.flow_rmse = metrics::rmse(forecast.od, true_od);
  m.flow_nrmse = safe_nrmse(m.flow_rmse, value_range(true_od));
  std::vector<double> clamped(forecast.od);
  for (auto& v : clamped) v = std::max(0.0, v);
  std::vector<double> truth_clamped(true_od);
  for (auto& v : truth_clamped) v = std::max(0.0, v);
  try {
    m.cpc = metrics::cpc(clamped, truth_clamped);
  } catch (const Error&) {
    m.cpc = std::numeric_limits<double>::quiet_NaN();
  }

  std::vector<double> pred_crowd(forecast.inflow);
  pred_crowd.insert(pred_crowd.end(), forecast.outflow.begin(), forecast.outflow.end());
  std::vector<double> true_crowd(true_in);
  true_crowd.insert(true_crowd.end(), true_out.begin(), true_out.end());
  m.crowd_rmse = metrics::rmse(pred_crowd, true_crowd);
  m.crowd_nrmse = safe_nrmse(m.crowd_rmse, value_range(true_in, true_out));
  m.crowd_rmse_in = metrics::rmse(forecast.inflow, true_in);
  m.crowd_rmse_out = metrics::rmse(forecast.outflow, true_out);
  return m;
}

flow::SplitRanges split_for(const ExperimentConfig& config, std::size_t t_bins, std::uint32_t bin_minutes) {
  if (config.test_bins > 0) return flow::split_series_bins(t_bins, config.test_bins, config.val_fraction);
  return flow::split_series(t_bins, bin_minutes, config.test_days, config.val_fraction);
}

ModelRun run_model(ModelKind kind, const flow::DenseSeries& series, const flow::SplitRanges& split,
                   const ExperimentConfig& config, std::uint64_t seed) {
  const std::size_t k = config.model.k;
  ModelRun run;
  switch (kind) {
    case ModelKind::naive:
      run.forecast = forecast_naive(series, split.test, k, config.naive_window, config.include_self);
      break;
    case ModelKind::var:
      run.forecast = forecast_var(series, {split.train.begin, split.val.end}, split.test, k, config.var_order,
                                  config.var_crowd, config.include_self);
      break;
    case ModelKind::crowdnet: {
      model::ModelConfig mc = config.model;
      mc.n = series.n;
      mc.seed = seed;
      model::CrowdNet net(mc, flow::adjacency_from_od(series, split.train));
      const auto train_w = flow::make_windows(series, split.train, k, 1);
      const auto val_w = split.val.size() >= k + 1 ? flow::make_windows(series, split.val, k, 1)
                                                   : std::vector<flow::Window>{};
      model::TrainConfig tc = config.train;
      tc.seed = seed;
      run.history = model::train(net, train_w, val_w, tc);
      run.forecast = forecast_crowdnet(net, series, split.test, config.include_self);
      break;
    }
  }
  run.metrics = score(run.forecast, series, config.include_self);
  return run;
}

std::string EvalReport::to_csv(bool with_timing) const {
  std::ostringstream os;
  os << "tile_size_m,bin_minutes,model,n_tiles,test_targets,flow_rmse,flow_nrmse,cpc,crowd_rmse,crowd_nrmse,"
        "crowd_rmse_in,crowd_rmse_out,seed";
  if (with_timing) os << ",runtime_s";
  os << ",error\n";
  for (const auto& r : records) {
    const auto& m = r.metrics;
    os << fmt(r.tile_size_m) << ',' << r.bin_minutes << ',' << r.model_name << ',' << r.n_tiles << ','
       << r.test_targets << ',' << fmt(m.flow_rmse) << ',' << fmt(m.flow_nrmse) << ',' << fmt(m.cpc) << ','
       << fmt(m.crowd_rmse) << ',' << fmt(m.crowd_nrmse) << ',' << fmt(m.crowd_rmse_in) << ','
       << fmt(m.crowd_rmse_out) << ',' << r.seed;
    if (with_timing) os << ',' << fmt(r.runtime_s);
    std::string err = r.error;
    std::replace(err.begin(), err.end(), '"', '\'');
    os << ",\"" << err << "\"\n";
  }
  return os.str();
}

std::string EvalReport::to_json(bool with_timing) const {
  auto num = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) {
    const auto& m = r.metrics;
    nlohmann::json j = {{"tile_size_m", r.tile_size_m},
                        {"bin_minutes", r.bin_minutes},
                        {"model", r.model_name},
                        {"n_tiles", r.n_tiles},
                        {"test_targets", r.test_targets},
                        {"flow", {{"rmse", num(m.flow_rmse)}, {"nrmse", num(m.flow_nrmse)}, {"cpc", num(m.cpc)}}},
                        {"crowd",
                         {{"rmse", num(m.crowd_rmse)},
                          {"nrmse", num(m.crowd_nrmse)},
                          {"rmse_in", num(m.crowd_rmse_in)},
                          {"rmse_out", num(m.crowd_rmse_out)}}},
                        {"seed", r.seed}};
    if (with_timing) j["runtime_s"] = r.runtime_s;
    if (!r.error.empty()) j["error"] = r.error;
    arr.push_back(std::move(j));
  }
  return nlohmann::json{{"records", std::move(arr)}}.dump(2);
}

EvalReport run_sweep(const std::vector<flow::TripRecord>& trips, const SweepSpec& spec) {
  if (spec.tile_sizes_m.empty() || spec.bin_minutes.empty() || spec.models.empty()) {
    throw Error("run_sweep: tile sizes, bin lengths and models must all be non-empty");
  }
  if (trips.empty()) throw Error("run_sweep: no trips");
  geo::BoundingBox bbox;
  if (spec.bbox) {
    bbox = *spec.bbox;
  } else {
    std::vector<geo::GeoPoint> pts;
    pts.reserve(trips.size() * 2);
    for (const auto& t : trips) {
      pts.push_back(t.start);
      pts.push_back(t.end);
    }
    bbox = geo::BoundingBox::around(pts);
  }
  flow::Timestamp first = trips.front().start_time;
  for (const auto& t : trips) first = std::min(first, t.start_time);

  const std::size_t nm = spec.models.size();
  const std::size_t nb = spec.bin_minutes.size();
  const std::size_t cells = spec.tile_sizes_m.size() * nb * nm;
  EvalReport report;
  report.records.resize(cells);

  parallel_for(cells, std::max<std::size_t>(1, spec.workers), [&](std::size_t cell) {
    const std::size_t ti = cell / (nb * nm);
    const std::size_t bi = (cell / nm) % nb;
    const std::size_t mi = cell % nm;
    EvalRecord& rec = report.records[cell];
    rec.tile_size_m = spec.tile_sizes_m[ti];
    rec.bin_minutes = spec.bin_minutes[bi];
    rec.model_name = to_string(spec.models[mi]);
    rec.seed = mix_seed(spec.seed, cell);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const auto tess = geo::build_square_grid(bbox, rec.tile_size_m);
      rec.n_tiles = tess.size();
      const auto binning = flow::TimeBinning::aligned(first, rec.bin_minutes);
      const auto ingest = flow::od_from_trips(trips, tess, binning);
      const auto series = flow::DenseSeries::from(ingest.od);
      const auto split = split_for(spec.experiment, ingest.od.t_bins, rec.bin_minutes);
      const ModelRun run = run_model(spec.models[mi], series, split, spec.experiment, rec.seed);
      rec.metrics = run.metrics;
      rec.test_targets = run.forecast.bins.size();
    } catch (const std::exception& e) {
      rec.error = e.what();
      const double nan = std::numeric_limits<double>::quiet_NaN();
      rec.metrics = {nan, nan, nan, nan, nan, nan, nan};
    }
    rec.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });
  return report;
}

std::vector<ImportancePoint> temporal_importance(const flow::DenseSeries& series, const flow::SplitRanges& split,
                                                 const ExperimentConfig& base, const std::vector<std::size_t>& k_values,
                                                 std::uint64_t seed) {
  std::vector<ImportancePoint> out;
  std::vector<std::size_t> feasible;
  for (std::size_t k : k_values) {
    model::ModelConfig mc = base.model;
    mc.n = series.n;
    mc.k = k;
    try {
      mc.validate();
      if (split.train.size() < k + 1 || split.test.size() < k + 1) throw Error("split too short for k");
      feasible.push_back(k);
    } catch (const Error&) {
    }
  }
  const std::size_t k_max = feasible.empty() ? 0 : *std::max_element(feasible.begin(), feasible.end());

  for (std::size_t k : k_values) {
    ImportancePoint pt;
    pt.k = k;
    if (std::find(feasible.begin(), feasible.end(), k) == feasible.end()) {
      pt.skipped = true;
      pt.note = "infeasible history length for the model or split";
      out.push_back(pt);
      continue;
    }
    ExperimentConfig cfg = base;
    cfg.model.k = k;
    cfg.model.n = series.n;
    cfg.model.seed = seed;
    try {
      model::CrowdNet net(cfg.model, flow::adjacency_from_od(series, split.train));
      const auto train_w = flow::make_windows(series, split.train, k, 1);
      const auto val_w =
          split.val.size() >= k + 1 ? flow::make_windows(series, split.val, k, 1) : std::vector<flow::Window>{};
      model::TrainConfig tc = cfg.train;
      tc.seed = seed;
      model::train(net, train_w, val_w, tc);
      // Shared targets: skip the first (k_max - k) windows.
      auto windows = flow::make_windows(series, split.test, k, 1);
      windows.erase(windows.begin(), windows.begin() + static_cast<std::ptrdiff_t>(k_max - k));
      const auto pred = net.predict(windows);
      std::vector<double> truth;
      for (const auto& w : windows) truth.insert(truth.end(), w.target.begin(), w.target.end());
      pt.rmse = metrics::rmse(pred, truth);
    } catch (const std::exception& e) {
      pt.skipped = true;
      pt.note = e.what();
    }
    out.push_back(pt);
  }
  return out;
}

std::string flow_csv(const Forecast& f) {
  std::ostringstream os;
  os << "time_bin,origin,destination,flow\n";
  const std::size_t n = f.n;
  for (std::size_t b = 0; b < f.bins.size(); ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        os << f.bins[b] << ',' << i << ',' << j << ',' << fmt(f.od[(b * n + i) * n + j]) << '\n';
  return os.str();
}

std::string crowd_csv(const Forecast& f) {
  std::ostringstream os;
  os << "time_bin,tile,inflow,outflow\n";
  const std::size_t n = f.n;
  for (std::size_t b = 0; b < f.bins.size(); ++b)
    for (std::size_t k = 0; k < n; ++k)
      os << f.bins[b] << ',' << k << ',' << fmt(f.inflow[b * n + k]) << ',' << fmt(f.outflow[b * n + k]) << '\n';
  return os.str();
}

Forecast read_forecast_csv(const std::string& flow_text, const std::string& crowd_text, std::size_t n) {
  if (n == 0) throw Error("read_forecast_csv: n must be positive");
  Forecast f;
  f.n = n;
  std::map<std::size_t, std::size_t> slot;  // time_bin -> index
  auto parse_rows = [](const std::string& text, std::size_t columns, const char* what) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw Error(std::string(what) + " CSV is empty");
    while (std::getline(in, line)) {
      if (line.empty() || line == "\r") continue;
      auto cols = io::split_csv_line(line);
      if (cols.size() != columns) throw Error(std::string(what) + " CSV row has the wrong column count: " + line);
      rows.push_back(std::move(cols));
    }
    return rows;
  };
  const auto flow_rows = parse_rows(flow_text, 4, "flow");
  for (const auto& r : flow_rows) slot.emplace(std::stoull(r[0]), 0);
  std::size_t idx = 0;
  for (auto& [bin, s] : slot) {
    s = idx++;
    f.bins.push_back(bin);
  }
  f.od.assign(f.bins.size() * n * n, 0.0);
  for (const auto& r : flow_rows) {
    const std::size_t i = std::stoull(r[1]), j = std::stoull(r[2]);
    if (i >= n || j >= n) throw Error("flow CSV tile index out of range");
    f.od[(slot.at(std::stoull(r[0])) * n + i) * n + j] = std::stod(r[3]);
  }
  f.inflow.assign(f.bins.size() * n, 0.0);
  f.outflow.assign(f.bins.size() * n, 0.0);
  for (const auto& r : parse_rows(crowd_text, 4, "crowd")) {
    const auto it = slot.find(std::stoull(r[0]));
    const std::size_t k = std::stoull(r[1]);
    if (it == slot.end() || k >= n) throw Error("crowd CSV row does not match the flow CSV");
    f.inflow[it->second * n + k] = std::stod(r[2]);
    f.outflow[it->second * n + k] = std::stod(r[3]);
  }
  return f;
}

std::string edge_list_csv(const double* od_slice, std::size_t n) {
  std::ostringstream os;
  os << "origin,destination,flow\n";
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (od_slice[i * n + j] > 0.0) os << i << ',' << j << ',' << fmt(od_slice[i * n + j]) << '\n';
  return os.str();
}

}  // namespace flowcast::eval
