#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowcast/geo.hpp"

namespace flowcast::flow {

/// Unix seconds, UTC.
using Timestamp = std::int64_t;

struct TripRecord {
  Timestamp start_time = 0;
  Timestamp end_time = 0;
  geo::GeoPoint start;
  geo::GeoPoint end;
  std::optional<std::string> subject_id;
};

struct GpsFix {
  Timestamp time = 0;
  geo::GeoPoint position;
};

struct GpsTrace {
  std::string subject_id;
  std::vector<GpsFix> points;  ///< strictly increasing timestamps
};

struct TimeBinning {
  Timestamp epoch_start = 0;
  std::uint32_t bin_minutes = 60;

  std::int64_t bin_seconds() const { return static_cast<std::int64_t>(bin_minutes) * 60; }
  /// Bin index of t; negative when t precedes epoch_start.
  std::int64_t bin_of(Timestamp t) const;
  /// epoch_start aligned down to a multiple of the bin length since the Unix epoch.
  static TimeBinning aligned(Timestamp first, std::uint32_t bin_minutes);
};

/// Half-open range of bin indices.
struct BinRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  friend bool operator==(const BinRange&, const BinRange&) = default;
};

/// Integer flow tensor indexed (t, origin, destination), row-major.
struct ODSeries {
  std::size_t n = 0;
  std::size_t t_bins = 0;
  std::vector<std::uint32_t> data;
  TimeBinning binning;
  std::string tessellation_ref;

  ODSeries() = default;
  ODSeries(std::size_t n, std::size_t t_bins, TimeBinning binning, std::string tessellation_ref = {});

  std::uint32_t& at(std::size_t t, std::size_t i, std::size_t j) { return data[(t * n + i) * n + j]; }
  std::uint32_t at(std::size_t t, std::size_t i, std::size_t j) const { return data[(t * n + i) * n + j]; }
  std::uint64_t total() const;
  BinRange all() const { return {0, t_bins}; }
};

/// Real-valued (t, origin, destination) series; the modelling code works on
/// this so synthetic and rescaled data share one path.
struct DenseSeries {
  std::size_t n = 0;
  std::size_t t_bins = 0;
  std::vector<double> data;

  DenseSeries() = default;
  DenseSeries(std::size_t n, std::size_t t_bins) : n(n), t_bins(t_bins), data(n * n * t_bins, 0.0) {}

  double& at(std::size_t t, std::size_t i, std::size_t j) { return data[(t * n + i) * n + j]; }
  double at(std::size_t t, std::size_t i, std::size_t j) const { return data[(t * n + i) * n + j]; }
  const double* slice(std::size_t t) const { return data.data() + t * n * n; }
  static DenseSeries from(const ODSeries& od);
};

/// Per (t, tile) inflow/outflow counts.
struct CrowdSeries {
  std::size_t n = 0;
  std::size_t t_bins = 0;
  std::vector<std::uint64_t> inflow;
  std::vector<std::uint64_t> outflow;

  std::uint64_t in(std::size_t t, std::size_t k) const { return inflow[t * n + k]; }
  std::uint64_t out(std::size_t t, std::size_t k) const { return outflow[t * n + k]; }
};

struct Adjacency {
  std::size_t n = 0;
  std::vector<std::uint8_t> a;  ///< row-major, entries in {0, 1}

  std::uint8_t at(std::size_t i, std::size_t j) const { return a[i * n + j]; }
  std::size_t edge_count() const;
  /// FNV-1a over (n, entries); stable across platforms.
  std::uint64_t hash() const;
};

struct IngestStats {
  std::size_t records = 0;
  std::size_t retained = 0;
  std::size_t dropped_unlocatable = 0;
  std::size_t dropped_out_of_range = 0;
  std::size_t dropped() const { return dropped_unlocatable + dropped_out_of_range; }
};

struct IngestResult {
  ODSeries od;
  IngestStats stats;
};

/// Each trip with both endpoints located adds 1 at (bin(start), origin, destination).
/// Input is partitioned over `workers` threads; per-bin counts merge by
/// addition so the result is identical for any worker count.
IngestResult od_from_trips(const std::vector<TripRecord>& trips, const geo::Tessellation& tess,
                           const TimeBinning& binning, std::size_t workers = 1);

/// Per-subject occupancy (last fix in each bin); a change of tile between
/// consecutive occupied bins t-1, t adds 1 at (t, from, to).
IngestResult od_from_gps(const std::vector<GpsTrace>& traces, const geo::Tessellation& tess,
                         const TimeBinning& binning);

/// inflow[t,k] = sum_i od[t,i,k], outflow[t,k] = sum_j od[t,k,j]; the diagonal
/// term is included only with include_self.
CrowdSeries crowd_from_od(const ODSeries& od, bool include_self = false);

/// a[i][j] = 1 iff any bin in `bins` has flow i -> j.
Adjacency adjacency_from_od(const ODSeries& od, BinRange bins);
Adjacency adjacency_from_od(const DenseSeries& od, BinRange bins);

struct SplitRanges {
  BinRange train;
  BinRange val;
  BinRange test;
};

/// Chronological split: the last test_days of bins go to test, the rest is
/// divided train-first with val_fraction of it at the end.
SplitRanges split_series(std::size_t t_bins, std::uint32_t bin_minutes, std::size_t test_days,
                         double val_fraction = 0.2);
inline SplitRanges split_series(const ODSeries& od, std::size_t test_days, double val_fraction = 0.2) {
  return split_series(od.t_bins, od.binning.bin_minutes, test_days, val_fraction);
}
/// Same rule with the test length given directly in bins.
SplitRanges split_series_bins(std::size_t t_bins, std::size_t test_bins, double val_fraction = 0.2);

struct Window {
  std::size_t first_bin = 0;   ///< first history bin
  std::size_t target_bin = 0;  ///< first predicted bin
  std::vector<double> history;  ///< (k, n, n)
  std::vector<double> target;   ///< (l, n, n)
};

/// Stride-1 windows lying entirely inside `range`.
std::vector<Window> make_windows(const DenseSeries& series, BinRange range, std::size_t k,
                                 std::size_t horizon = 1);

}  // namespace flowcast::flow
