#include "flowcast/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowcast/error.hpp"
#include "flowcast/parallel.hpp"

namespace flowcast::flow {

std::int64_t TimeBinning::bin_of(Timestamp t) const {
  const std::int64_t d = t - epoch_start;
  const std::int64_t s = bin_seconds();
  // floor division
  return d >= 0 ? d / s : -((-d + s - 1) / s);
}

TimeBinning TimeBinning::aligned(Timestamp first, std::uint32_t bin_minutes) {
  if (bin_minutes == 0) throw Error("bin_minutes must be positive");
  TimeBinning b{0, bin_minutes};
  b.epoch_start = b.bin_of(first) * b.bin_seconds();
  return b;
}

ODSeries::ODSeries(std::size_t n, std::size_t t_bins, TimeBinning binning, std::string tessellation_ref)
    : n(n), t_bins(t_bins), data(n * n * t_bins, 0), binning(binning), tessellation_ref(std::move(tessellation_ref)) {}

std::uint64_t ODSeries::total() const {
  return std::accumulate(data.begin(), data.end(), std::uint64_t{0});
}

DenseSeries DenseSeries::from(const ODSeries& od) {
  DenseSeries s(od.n, od.t_bins);
  std::transform(od.data.begin(), od.data.end(), s.data.begin(), [](std::uint32_t v) { return static_cast<double>(v); });
  return s;
}

std::size_t Adjacency::edge_count() const {
  return static_cast<std::size_t>(std::count(a.begin(), a.end(), std::uint8_t{1}));
}

std::uint64_t Adjacency::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](std::uint8_t byte) {
    h ^= byte;
    h *= 1099511628211ULL;
  };
  for (int shift = 0; shift < 64; shift += 8) feed(static_cast<std::uint8_t>((static_cast<std::uint64_t>(n) >> shift) & 0xff));
  for (auto v : a) feed(v);
  return h;
}

namespace {

void check_binning(const TimeBinning& binning) {
  if (binning.bin_minutes == 0) throw Error("bin_minutes must be positive");
}

}  // namespace

IngestResult od_from_trips(const std::vector<TripRecord>& trips, const geo::Tessellation& tess,
                           const TimeBinning& binning, std::size_t workers) {
  if (trips.empty()) throw Error("od_from_trips: empty trip list");
  if (tess.size() == 0) throw Error("od_from_trips: tessellation has no tiles");
  check_binning(binning);

  std::int64_t last_bin = -1;
  for (const auto& trip : trips) last_bin = std::max(last_bin, binning.bin_of(trip.start_time));
  if (last_bin < 0) throw Error("od_from_trips: every trip starts before the binning epoch");

  const std::size_t n = tess.size();
  const auto t_bins = static_cast<std::size_t>(last_bin + 1);
  workers = std::max<std::size_t>(1, std::min(workers, trips.size()));

  struct Partial {
    std::vector<std::uint32_t> counts;
    IngestStats stats;
  };
  std::vector<Partial> partials(workers);
  const std::size_t chunk = (trips.size() + workers - 1) / workers;

  parallel_for(workers, workers, [&](std::size_t w) {
    Partial& part = partials[w];
    part.counts.assign(n * n * t_bins, 0);
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(trips.size(), lo + chunk);
    for (std::size_t r = lo; r < hi; ++r) {
      const TripRecord& trip = trips[r];
      ++part.stats.records;
      const std::int64_t bin = binning.bin_of(trip.start_time);
      if (bin < 0) {
        ++part.stats.dropped_out_of_range;
        continue;
      }
      const auto o = tess.locate(trip.start);
      const auto d = tess.locate(trip.end);
      if (!o || !d) {
        ++part.stats.dropped_unlocatable;
        continue;
      }
      ++part.counts[(static_cast<std::size_t>(bin) * n + *o) * n + *d];
      ++part.stats.retained;
    }
  });

  IngestResult result{ODSeries(n, t_bins, binning, tess.describe()), {}};
  for (const auto& part : partials) {
    for (std::size_t i = 0; i < part.counts.size(); ++i) result.od.data[i] += part.counts[i];
    result.stats.records += part.stats.records;
    result.stats.retained += part.stats.retained;
    result.stats.dropped_unlocatable += part.stats.dropped_unlocatable;
    result.stats.dropped_out_of_range += part.stats.dropped_out_of_range;
  }
  return result;
}

IngestResult od_from_gps(const std::vector<GpsTrace>& traces, const geo::Tessellation& tess,
                         const TimeBinning& binning) {
  if (traces.empty()) throw Error("od_from_gps: no traces");
  if (tess.size() == 0) throw Error("od_from_gps: tessellation has no tiles");
  check_binning(binning);

  IngestStats stats;
  std::int64_t last_bin = -1;
  // Occupancy per trace as (bin, tile) pairs in bin order.
  std::vector<std::vector<std::pair<std::int64_t, std::size_t>>> occupancy(traces.size());
  for (std::size_t s = 0; s < traces.size(); ++s) {
    const auto& trace = traces[s];
    for (std::size_t i = 0; i < trace.points.size(); ++i) {
      if (i > 0 && trace.points[i].time <= trace.points[i - 1].time) {
        throw Error("od_from_gps: timestamps of subject '" + trace.subject_id + "' are not strictly increasing");
      }
      const GpsFix& fix = trace.points[i];
      ++stats.records;
      const std::int64_t bin = binning.bin_of(fix.time);
      if (bin < 0) {
        ++stats.dropped_out_of_range;
        continue;
      }
      const auto tile = tess.locate(fix.position);
      if (!tile) {
        ++stats.dropped_unlocatable;
        continue;
      }
      ++stats.retained;
      last_bin = std::max(last_bin, bin);
      auto& occ = occupancy[s];
      if (!occ.empty() && occ.back().first == bin) {
        occ.back().second = *tile;
      } else {
        occ.emplace_back(bin, *tile);
      }
    }
  }
  if (stats.retained == 0) throw Error("od_from_gps: no GPS fix falls inside the tessellation");

  const std::size_t n = tess.size();
  IngestResult result{ODSeries(n, static_cast<std::size_t>(last_bin + 1), binning, tess.describe()), stats};
  for (const auto& occ : occupancy) {
    for (std::size_t i = 1; i < occ.size(); ++i) {
      const auto [prev_bin, from] = occ[i - 1];
      const auto [bin, to] = occ[i];
      if (bin == prev_bin + 1 && from != to) ++result.od.at(static_cast<std::size_t>(bin), from, to);
    }
  }
  return result;
}

CrowdSeries crowd_from_od(const ODSeries& od, bool include_self) {
  CrowdSeries c{od.n, od.t_bins, std::vector<std::uint64_t>(od.n * od.t_bins, 0),
                std::vector<std::uint64_t>(od.n * od.t_bins, 0)};
  for (std::size_t t = 0; t < od.t_bins; ++t) {
    for (std::size_t i = 0; i < od.n; ++i) {
      for (std::size_t j = 0; j < od.n; ++j) {
        if (i == j && !include_self) continue;
        const std::uint64_t v = od.at(t, i, j);
        c.outflow[t * od.n + i] += v;
        c.inflow[t * od.n + j] += v;
      }
    }
  }
  return c;
}

namespace {

template <typename Series>
Adjacency adjacency_impl(const Series& od, BinRange bins) {
  if (bins.empty()) throw Error("adjacency_from_od: empty bin range");
  if (bins.end > od.t_bins) throw Error("adjacency_from_od: bin range exceeds the series");
  Adjacency adj{od.n, std::vector<std::uint8_t>(od.n * od.n, 0)};
  for (std::size_t t = bins.begin; t < bins.end; ++t) {
    for (std::size_t i = 0; i < od.n; ++i) {
      for (std::size_t j = 0; j < od.n; ++j) {
        if (od.at(t, i, j) > 0) adj.a[i * od.n + j] = 1;
      }
    }
  }
  return adj;
}

}  // namespace

Adjacency adjacency_from_od(const ODSeries& od, BinRange bins) { return adjacency_impl(od, bins); }
Adjacency adjacency_from_od(const DenseSeries& od, BinRange bins) { return adjacency_impl(od, bins); }

SplitRanges split_series_bins(std::size_t t_bins, std::size_t test_bins, double val_fraction) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw Error("val_fraction must lie in [0, 1)");
  if (test_bins == 0) throw Error("split_series: the test range must hold at least one bin");
  if (t_bins < test_bins + 1) {
    throw Error("split_series: series has " + std::to_string(t_bins) + " bins but needs at least " +
                std::to_string(test_bins + 1) + " (test bins + 1 development bin)");
  }
  const std::size_t dev = t_bins - test_bins;
  const auto val = static_cast<std::size_t>(std::floor(static_cast<double>(dev) * val_fraction + 1e-9));
  const std::size_t train = dev - val;
  if (train == 0) throw Error("split_series: validation fraction leaves no training bins");
  return {{0, train}, {train, dev}, {dev, t_bins}};
}

SplitRanges split_series(std::size_t t_bins, std::uint32_t bin_minutes, std::size_t test_days,
                         double val_fraction) {
  if (bin_minutes == 0) throw Error("bin_minutes must be positive");
  const std::size_t test_bins = test_days * 1440 / bin_minutes;
  return split_series_bins(t_bins, test_bins, val_fraction);
}

std::vector<Window> make_windows(const DenseSeries& series, BinRange range, std::size_t k,
                                 std::size_t horizon) {
  if (k == 0) throw Error("make_windows: history length k must be at least 1");
  if (horizon == 0) throw Error("make_windows: horizon must be at least 1");
  if (range.end > series.t_bins || range.begin > range.end) throw Error("make_windows: range outside the series");
  if (range.size() < k + horizon) {
    throw Error("make_windows: range of " + std::to_string(range.size()) + " bins is shorter than k + horizon = " +
                std::to_string(k + horizon));
  }
  const std::size_t nn = series.n * series.n;
  std::vector<Window> windows;
  windows.reserve(range.size() - k - horizon + 1);
  for (std::size_t start = range.begin; start + k + horizon <= range.end; ++start) {
    Window w;
    w.first_bin = start;
    w.target_bin = start + k;
    w.history.assign(series.slice(start), series.slice(start) + k * nn);
    w.target.assign(series.slice(start + k), series.slice(start + k) + horizon * nn);
    windows.push_back(std::move(w));
  }
  return windows;
}

}  // namespace flowcast::flow
