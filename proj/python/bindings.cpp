#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <filesystem>

#include <json.hpp>

#include "flowcast/baselines.hpp"
#include "flowcast/cli.hpp"
#include "flowcast/crowdnet.hpp"
#include "flowcast/error.hpp"
#include "flowcast/experiment.hpp"
#include "flowcast/flow.hpp"
#include "flowcast/geo.hpp"
#include "flowcast/io.hpp"
#include "flowcast/metrics.hpp"
#include "flowcast/synthetic.hpp"

namespace py = pybind11;
using namespace flowcast;

namespace {

using Bbox = std::tuple<double, double, double, double>;

geo::BoundingBox to_bbox(const Bbox& b) {
  return {std::get<0>(b), std::get<1>(b), std::get<2>(b), std::get<3>(b)};
}

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v, std::vector<py::ssize_t> shape) {
  py::array_t<T> out(shape);
  std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(T));
  return out;
}

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const DoubleArray& a) { return {a.data(), a.data() + a.size()}; }

flow::ODSeries od_from_array(const py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>& a,
                             flow::TimeBinning binning = {}) {
  if (a.ndim() != 3 || a.shape(1) != a.shape(2)) throw Error("OD array must have shape (t, n, n)");
  flow::ODSeries od(static_cast<std::size_t>(a.shape(1)), static_cast<std::size_t>(a.shape(0)), binning);
  std::memcpy(od.data.data(), a.data(), od.data.size() * sizeof(std::uint32_t));
  return od;
}

flow::DenseSeries dense_from_array(const DoubleArray& a) {
  if (a.ndim() != 3 || a.shape(1) != a.shape(2)) throw Error("series must have shape (t, n, n)");
  flow::DenseSeries s(static_cast<std::size_t>(a.shape(1)), static_cast<std::size_t>(a.shape(0)));
  std::memcpy(s.data.data(), a.data(), s.data.size() * sizeof(double));
  return s;
}

py::array_t<double> dense_to_array(const flow::DenseSeries& s) {
  const auto t = static_cast<py::ssize_t>(s.t_bins), n = static_cast<py::ssize_t>(s.n);
  return to_array(s.data, {t, n, n});
}

cli::RunConfig config_from(const std::string& text) {
  return cli::RunConfig::from_json(text.empty() ? nlohmann::json::object() : nlohmann::json::parse(text));
}

nlohmann::json metrics_json(const eval::EvalMetrics& m) {
  return {{"flow_rmse", m.flow_rmse},       {"flow_nrmse", m.flow_nrmse},         {"cpc", m.cpc},
          {"crowd_rmse", m.crowd_rmse},     {"crowd_nrmse", m.crowd_nrmse},       {"crowd_rmse_in", m.crowd_rmse_in},
          {"crowd_rmse_out", m.crowd_rmse_out}};
}

std::vector<eval::ModelKind> kinds_from(const std::vector<std::string>& names) {
  std::vector<eval::ModelKind> out;
  for (const auto& n : names) out.push_back(eval::parse_model_kind(n));
  return out;
}

}  // namespace

PYBIND11_MODULE(_flowcast, m) {
  m.doc() = "Native core of the flowcast crowd-flow forecasting toolkit";
  py::register_exception<Error>(m, "FlowcastError", PyExc_RuntimeError);

  // Tessellations.
  py::class_<geo::Tessellation>(m, "Tessellation")
      .def_static(
          "square", [](const Bbox& bbox, double side_m) { return geo::Tessellation::square(to_bbox(bbox), side_m); },
          py::arg("bbox"), py::arg("side_m"))
      .def_static(
          "irregular",
          [](const std::vector<std::vector<std::pair<double, double>>>& polygons) {
            std::vector<std::vector<geo::GeoPoint>> rings;
            for (const auto& poly : polygons) {
              auto& ring = rings.emplace_back();
              for (const auto& [lon, lat] : poly) ring.push_back({lon, lat});
            }
            return geo::Tessellation::irregular(std::move(rings));
          },
          py::arg("polygons"))
      .def_static(
          "read_geojson", [](const std::filesystem::path& path) { return geo::read_geojson(path.string()); },
          py::arg("path"))
      .def_static("parse_geojson", &geo::parse_geojson, py::arg("text"))
      .def("__len__", &geo::Tessellation::size)
      .def_property_readonly("kind",
                             [](const geo::Tessellation& t) {
                               return t.kind() == geo::TessellationKind::square ? "square" : "irregular";
                             })
      .def_property_readonly("grid_shape",
                             [](const geo::Tessellation& t) { return std::make_pair(t.grid().rows, t.grid().cols); })
      .def_property_readonly("bbox",
                             [](const geo::Tessellation& t) {
                               const auto& b = t.bbox();
                               return Bbox{b.min_lon, b.min_lat, b.max_lon, b.max_lat};
                             })
      .def(
          "locate", [](const geo::Tessellation& t, double lon, double lat) { return t.locate({lon, lat}); },
          py::arg("lon"), py::arg("lat"))
      .def("tile_centroid",
           [](const geo::Tessellation& t, std::size_t id) {
             const auto c = t.tile_centroid(id);
             return std::make_pair(c.lon, c.lat);
           })
      .def("tile_area_m2", &geo::Tessellation::tile_area_m2)
      .def("describe", &geo::Tessellation::describe)
      .def("to_geojson", &geo::to_geojson,
           py::arg("properties") = std::vector<std::pair<std::string, std::vector<double>>>{});

  m.def(
      "bbox_of_size",
      [](double lon, double lat, double width_m, double height_m) {
        const auto b = synthetic::bbox_of_size({lon, lat}, width_m, height_m);
        return Bbox{b.min_lon, b.min_lat, b.max_lon, b.max_lat};
      },
      py::arg("lon"), py::arg("lat"), py::arg("width_m"), py::arg("height_m"));

  // Flow tensors.
  m.def(
      "crowd_from_od",
      [](const py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>& od, bool include_self) {
        const auto series = od_from_array(od);
        const auto c = flow::crowd_from_od(series, include_self);
        const auto t = static_cast<py::ssize_t>(c.t_bins), n = static_cast<py::ssize_t>(c.n);
        return std::make_pair(to_array(c.inflow, {t, n}), to_array(c.outflow, {t, n}));
      },
      py::arg("od"), py::arg("include_self") = false);

  m.def(
      "read_ods",
      [](const std::filesystem::path& path) {
        const auto od = io::read_ods(path.string());
        const auto t = static_cast<py::ssize_t>(od.t_bins), n = static_cast<py::ssize_t>(od.n);
        py::dict out;
        out["od"] = to_array(od.data, {t, n, n});
        out["epoch_start"] = od.binning.epoch_start;
        out["bin_minutes"] = od.binning.bin_minutes;
        return out;
      },
      py::arg("path"));
  m.def(
      "write_ods",
      [](const std::filesystem::path& path,
         const py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>& od, std::int64_t epoch_start,
         std::uint32_t bin_minutes) {
        io::write_ods(od_from_array(od, {epoch_start, bin_minutes}), path.string());
      },
      py::arg("path"), py::arg("od"), py::arg("epoch_start") = 0, py::arg("bin_minutes") = 60);

  m.def(
      "normalize_adjacency",
      [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a, bool symmetrize) {
        if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw Error("adjacency must be square");
        const auto n = static_cast<std::size_t>(a.shape(0));
        flow::Adjacency adj{n, std::vector<std::uint8_t>(a.data(), a.data() + n * n)};
        for (auto& v : adj.a) v = v ? 1 : 0;
        const auto norm = model::normalize_adjacency(adj, symmetrize);
        return to_array(norm.m, {a.shape(0), a.shape(0)});
      },
      py::arg("adjacency"), py::arg("symmetrize") = true);

  // Metrics.
  m.def(
      "rmse", [](const DoubleArray& p, const DoubleArray& t) { return metrics::rmse(to_vector(p), to_vector(t)); },
      py::arg("pred"), py::arg("truth"));
  m.def("nrmse", &metrics::nrmse, py::arg("rmse"), py::arg("f_max"), py::arg("f_min"));
  m.def(
      "cpc", [](const DoubleArray& p, const DoubleArray& t) { return metrics::cpc(to_vector(p), to_vector(t)); },
      py::arg("pred"), py::arg("truth"));

  // Baselines.
  m.def(
      "naive_predict",
      [](const DoubleArray& history, std::size_t window) {
        if (history.ndim() != 2) throw Error("history must have shape (t, d)");
        const auto d = static_cast<std::size_t>(history.shape(1));
        return to_array(baselines::naive_predict(to_vector(history), d, window), {history.shape(1)});
      },
      py::arg("history"), py::arg("window") = 12);

  py::class_<baselines::VarModel>(m, "VarModel")
      .def_static(
          "fit",
          [](const DoubleArray& series, std::size_t p) {
            if (series.ndim() != 2) throw Error("series must have shape (t, d)");
            return baselines::VarModel::fit(to_vector(series), static_cast<std::size_t>(series.shape(1)), p);
          },
          py::arg("series"), py::arg("p") = 8)
      .def_property_readonly("order", &baselines::VarModel::order)
      .def_property_readonly("dim", &baselines::VarModel::dim)
      .def("coefficients",
           [](const baselines::VarModel& v, std::size_t lag) {
             const auto d = static_cast<py::ssize_t>(v.dim());
             return to_array(v.coefficients(lag), {d, d});
           })
      .def_property_readonly("intercept",
                             [](const baselines::VarModel& v) {
                               return to_array(v.intercept(), {static_cast<py::ssize_t>(v.dim())});
                             })
      .def("predict", [](const baselines::VarModel& v, const DoubleArray& recent) {
        return to_array(v.predict(to_vector(recent)), {static_cast<py::ssize_t>(v.dim())});
      });

  // Synthetic data and experiments.
  m.def(
      "periodic_od",
      [](std::size_t n, std::size_t period, std::size_t periods, double noise_sigma, double pair_density,
         std::uint64_t seed) {
        return dense_to_array(synthetic::periodic_od({n, period, periods, noise_sigma, pair_density, seed}));
      },
      py::arg("n") = 4, py::arg("period") = 24, py::arg("periods") = 30, py::arg("noise_sigma") = 0.1,
      py::arg("pair_density") = 0.0, py::arg("seed") = 7);

  m.def(
      "synthetic_trips_csv",
      [](const Bbox& bbox, std::size_t days, double peak_rate_per_minute, std::uint64_t seed) {
        synthetic::TripSpec spec;
        spec.bbox = to_bbox(bbox);
        spec.days = days;
        spec.peak_rate_per_minute = peak_rate_per_minute;
        spec.seed = seed;
        return io::format_trip_csv(synthetic::trips(spec));
      },
      py::arg("bbox"), py::arg("days") = 14, py::arg("peak_rate_per_minute") = 4.0, py::arg("seed") = 11);

  m.def(
      "run_model",
      [](const std::string& kind, const DoubleArray& series, const std::string& config_json, std::uint32_t bin_minutes,
         std::uint64_t seed) {
        const auto s = dense_from_array(series);
        const auto cfg = config_from(config_json);
        cfg.validate();
        const auto exp = cfg.experiment(s.n);
        const auto split = eval::split_for(exp, s.t_bins, bin_minutes);
        eval::ModelRun run;
        {
          py::gil_scoped_release release;
          run = eval::run_model(eval::parse_model_kind(kind), s, split, exp, seed);
        }
        return metrics_json(run.metrics).dump();
      },
      py::arg("kind"), py::arg("series"), py::arg("config_json") = "", py::arg("bin_minutes") = 60,
      py::arg("seed") = 0);

  // Commands; configs and summaries cross as JSON text.
  m.def(
      "ingest",
      [](const std::string& trips_csv, const std::string& config_json, const std::string& out_dir,
         std::size_t workers) {
        py::gil_scoped_release release;
        return cli::cmd_ingest({trips_csv, std::nullopt, config_from(config_json), out_dir, workers}).to_json().dump();
      },
      py::arg("trips_csv"), py::arg("config_json"), py::arg("out_dir"), py::arg("workers") = 1);
  m.def(
      "train",
      [](const std::string& ods, const std::string& config_json, const std::string& out_dir) {
        py::gil_scoped_release release;
        const auto out = cli::cmd_train({ods, config_from(config_json), out_dir});
        return nlohmann::json{{"checkpoint", out.checkpoint_path},
                              {"sidecar", out.sidecar_path},
                              {"history", out.history_path},
                              {"epochs", out.history.epochs.size()},
                              {"best_epoch", out.history.best_epoch}}
            .dump();
      },
      py::arg("ods"), py::arg("config_json"), py::arg("out_dir"));
  m.def(
      "predict",
      [](const std::string& ods, const std::string& checkpoint, const std::string& out_dir) {
        py::gil_scoped_release release;
        const auto out = cli::cmd_predict({ods, checkpoint, out_dir});
        return nlohmann::json{{"flow_csv", out.flow_csv_path},
                              {"crowd_csv", out.crowd_csv_path},
                              {"bins", out.forecast.bins.size()}}
            .dump();
      },
      py::arg("ods"), py::arg("checkpoint"), py::arg("out_dir"));
  m.def(
      "evaluate",
      [](const std::string& ods, std::optional<std::string> checkpoint, std::optional<std::string> pred_flow,
         std::optional<std::string> pred_crowd, const std::vector<std::string>& baselines,
         const std::string& config_json, const std::string& out_dir) {
        cli::EvaluateOptions o;
        o.ods_path = ods;
        o.checkpoint_path = std::move(checkpoint);
        o.pred_flow_csv = std::move(pred_flow);
        o.pred_crowd_csv = std::move(pred_crowd);
        o.baselines = kinds_from(baselines);
        o.config = config_from(config_json);
        o.out_dir = out_dir;
        py::gil_scoped_release release;
        return cli::cmd_evaluate(o).to_json();
      },
      py::arg("ods"), py::arg("checkpoint") = std::nullopt, py::arg("pred_flow") = std::nullopt,
      py::arg("pred_crowd") = std::nullopt, py::arg("baselines") = std::vector<std::string>{},
      py::arg("config_json") = "", py::arg("out_dir"));
  m.def(
      "export",
      [](const std::string& geojson, std::optional<std::string> pred_flow, std::optional<std::string> pred_crowd,
         std::optional<std::string> ods, std::optional<std::size_t> time_bin, bool include_self,
         const std::string& out_dir) {
        py::gil_scoped_release release;
        const auto out = cli::cmd_export({geojson, std::move(pred_flow), std::move(pred_crowd), std::move(ods),
                                          time_bin, include_self, out_dir});
        return nlohmann::json{{"geojson", out.geojson_path},
                              {"edges", out.edges_path},
                              {"od_matrix", out.od_matrix_path},
                              {"edge_count", out.edge_count}}
            .dump();
      },
      py::arg("geojson"), py::arg("pred_flow") = std::nullopt, py::arg("pred_crowd") = std::nullopt,
      py::arg("ods") = std::nullopt, py::arg("time_bin") = std::nullopt, py::arg("include_self") = false,
      py::arg("out_dir"));
}
