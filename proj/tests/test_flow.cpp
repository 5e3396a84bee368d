#include <doctest.h>

#include <map>
#include <random>
#include <set>
#include <tuple>

#include "flowcast/error.hpp"
#include "flowcast/flow.hpp"
#include "flowcast/synthetic.hpp"
#include "support.hpp"

using namespace flowcast;
using namespace flowcast::flow;
using testing::uniform;

namespace {

geo::Tessellation toy_grid() {
  // 3 x 2 grid of 1 km tiles: ids 0..5, row-major from the south-west.
  return geo::build_square_grid(synthetic::bbox_of_size({12.40, 41.80}, 3000.0, 2000.0), 1000.0);
}

TripRecord trip_between(const geo::Tessellation& t, std::size_t from, std::size_t to, Timestamp start) {
  return {start, start + 600, t.tile_centroid(from), t.tile_centroid(to), std::nullopt};
}

}  // namespace

TEST_CASE("time binning floors and aligns") {
  const TimeBinning b{1000, 15};
  CHECK(b.bin_of(1000) == 0);
  CHECK(b.bin_of(1000 + 899) == 0);
  CHECK(b.bin_of(1000 + 900) == 1);
  CHECK(b.bin_of(999) == -1);
  const auto a = TimeBinning::aligned(1546300800 + 1234, 60);
  CHECK(a.epoch_start == 1546300800);
  CHECK(a.bin_minutes == 60);
}

TEST_CASE("single trip lands in its start bin") {
  const auto t = toy_grid();
  const TimeBinning b{0, 60};
  const auto r = od_from_trips({trip_between(t, 0, 1, 4 * 3600 + 10)}, t, b);
  CHECK(r.od.t_bins == 5);
  CHECK(r.od.at(4, 0, 1) == 1);
  CHECK(r.od.total() == 1);
  CHECK(r.stats.retained == 1);
}

TEST_CASE("identical trips add up") {
  const auto t = toy_grid();
  const auto trip = trip_between(t, 2, 5, 100);
  const auto r = od_from_trips({trip, trip}, t, {0, 30});
  CHECK(r.od.at(0, 2, 5) == 2);
}

TEST_CASE("unlocatable and early trips are dropped and counted") {
  const auto t = toy_grid();
  std::mt19937_64 rng(5);
  std::vector<TripRecord> trips;
  std::size_t expected_retained = 0;
  for (int i = 0; i < 10; ++i) {
    auto trip = trip_between(t, rng() % 6, rng() % 6, 3600 + static_cast<Timestamp>(rng() % 20000));
    if (i % 3 == 0 && i > 0) {
      trip.end = {0.0, 0.0};  // far outside the grid
    } else {
      ++expected_retained;
    }
    trips.push_back(trip);
  }
  const auto r = od_from_trips(trips, t, {0, 60});
  CHECK(expected_retained == 7);
  CHECK(r.od.total() == 7);
  CHECK(r.stats.dropped_unlocatable == 3);
  CHECK(r.stats.records == 10);

  auto early = trips;
  early.push_back(trip_between(t, 0, 1, -100));
  const auto r2 = od_from_trips(early, t, {0, 60});
  CHECK(r2.stats.dropped_out_of_range == 1);

  CHECK_THROWS_AS(od_from_trips({}, t, {0, 60}), Error);
  CHECK_THROWS_AS(od_from_trips(trips, t, {0, 0}), Error);
}

TEST_CASE("od_from_trips total matches a brute-force counter for any worker count") {
  const auto bbox = synthetic::bbox_of_size({-73.99, 40.70}, 5000.0, 4000.0);
  const auto t = geo::build_square_grid(bbox, 1000.0);
  synthetic::TripSpec spec;
  spec.bbox = {bbox.min_lon - 0.005, bbox.min_lat - 0.005, bbox.max_lon + 0.005, bbox.max_lat + 0.005};
  spec.days = 2;
  const auto trips = synthetic::trips(spec);
  const auto binning = TimeBinning::aligned(spec.start, 30);
  std::map<std::tuple<std::int64_t, std::size_t, std::size_t>, std::uint32_t> brute;
  std::size_t retained = 0;
  for (const auto& tr : trips) {
    const auto o = t.locate(tr.start), d = t.locate(tr.end);
    if (!o || !d) continue;
    ++brute[{binning.bin_of(tr.start_time), *o, *d}];
    ++retained;
  }
  const auto single = od_from_trips(trips, t, binning, 1);
  CHECK(single.stats.retained == retained);
  CHECK(single.od.total() == retained);
  CHECK(single.stats.dropped() > 0);
  for (const auto& [key, count] : brute) {
    const auto [bin, o, d] = key;
    CHECK(single.od.at(static_cast<std::size_t>(bin), o, d) == count);
  }
  for (std::size_t w : {2u, 3u, 8u}) {
    const auto multi = od_from_trips(trips, t, binning, w);
    CHECK(multi.od.data == single.od.data);
    CHECK(multi.stats.retained == single.stats.retained);
  }
}

TEST_CASE("gps occupancy transitions") {
  const auto t = toy_grid();
  const TimeBinning b{0, 10};
  SUBCASE("staying in one tile emits nothing") {
    GpsTrace tr{"a", {{0, t.tile_centroid(2)}, {700, t.tile_centroid(2)}, {1300, t.tile_centroid(2)}}};
    const auto r = od_from_gps({tr}, t, b);
    CHECK(r.od.total() == 0);
  }
  SUBCASE("tile change between consecutive bins") {
    GpsTrace tr{"a", {{10, t.tile_centroid(0)}, {610, t.tile_centroid(5)}}};
    const auto r = od_from_gps({tr}, t, b);
    CHECK(r.od.at(1, 0, 5) == 1);
    CHECK(r.od.total() == 1);
  }
  SUBCASE("last fix in a bin decides occupancy") {
    GpsTrace tr{"a", {{10, t.tile_centroid(3)}, {500, t.tile_centroid(0)}, {650, t.tile_centroid(1)}}};
    const auto r = od_from_gps({tr}, t, b);
    CHECK(r.od.at(1, 0, 1) == 1);
    CHECK(r.od.total() == 1);
  }
  SUBCASE("gaps emit no transition") {
    GpsTrace tr{"a", {{10, t.tile_centroid(0)}, {1810, t.tile_centroid(4)}}};
    const auto r = od_from_gps({tr}, t, b);
    CHECK(r.od.total() == 0);
  }
  SUBCASE("two subjects crossing") {
    GpsTrace a{"a", {{0, t.tile_centroid(0)}, {600, t.tile_centroid(1)}, {1200, t.tile_centroid(2)}}};
    GpsTrace c{"c", {{0, t.tile_centroid(2)}, {600, t.tile_centroid(1)}, {1200, t.tile_centroid(0)}}};
    const auto r = od_from_gps({a, c}, t, b);
    CHECK(r.od.at(1, 0, 1) == 1);
    CHECK(r.od.at(1, 2, 1) == 1);
    CHECK(r.od.at(2, 1, 2) == 1);
    CHECK(r.od.at(2, 1, 0) == 1);
    CHECK(r.od.total() == 4);
  }
  SUBCASE("all fixes unlocatable") {
    GpsTrace tr{"a", {{0, {0.0, 0.0}}, {600, {1.0, 1.0}}}};
    CHECK_THROWS_AS(od_from_gps({tr}, t, b), Error);
  }
}

TEST_CASE("crowd_from_od examples") {
  ODSeries od(3, 1, {0, 60});
  od.at(0, 0, 1) = 5;
  od.at(0, 2, 1) = 3;
  od.at(0, 1, 1) = 7;
  CHECK(crowd_from_od(od).in(0, 1) == 8);
  CHECK(crowd_from_od(od, true).in(0, 1) == 15);
  CHECK(crowd_from_od(od).out(0, 0) == 5);

  ODSeries single(2, 1, {0, 60});
  single.at(0, 0, 1) = 4;
  const auto c = crowd_from_od(single);
  CHECK(c.out(0, 0) == 4);
  CHECK(c.in(0, 1) == 4);
  const auto z = crowd_from_od(ODSeries(3, 2, {0, 60}));
  for (auto v : z.inflow) CHECK(v == 0);
  for (auto v : z.outflow) CHECK(v == 0);
}

TEST_CASE("mass conservation on random series") {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 1 + rng() % 10, t = 1 + rng() % 50;
    const auto od = testing::random_od(rng, n, t);
    const auto c = crowd_from_od(od);
    for (std::size_t b = 0; b < t; ++b) {
      std::uint64_t in = 0, out = 0, off = 0;
      for (std::size_t k = 0; k < n; ++k) {
        in += c.in(b, k);
        out += c.out(b, k);
      }
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (i != j) off += od.at(b, i, j);
      CHECK(in == off);
      CHECK(out == off);
    }
  }
}

TEST_CASE("crowd flows match per-individual trajectory counting") {
  std::mt19937_64 rng(2024);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t tiles = 2 + rng() % 4, bins = 2 + rng() % 5, people = 1 + rng() % 20;
    const auto bbox = synthetic::bbox_of_size({12.40, 41.80}, 1000.0 * static_cast<double>(tiles), 1000.0);
    const auto tess = geo::build_square_grid(bbox, 1000.0);
    REQUIRE(tess.size() == tiles);
    const auto trajectories = testing::random_trajectories(rng, tiles, bins, people);
    const TimeBinning binning{1546300800, 15};
    const auto od = od_from_gps(testing::traces_from(trajectories, tess, binning), tess, binning).od;
    REQUIRE(od.t_bins == bins);
    const auto crowd = crowd_from_od(od);
    const auto in = testing::brute_inflow(trajectories);
    const auto out = testing::brute_outflow(trajectories);
    for (std::size_t t = 0; t < bins; ++t)
      for (std::size_t k = 0; k < tiles; ++k) {
        CHECK(crowd.in(t, k) == in[t * tiles + k]);
        CHECK(crowd.out(t, k) == (t == 0 ? 0 : out[(t - 1) * tiles + k]));
      }
  }
}

TEST_CASE("adjacency from flows") {
  ODSeries od(3, 3, {0, 60});
  od.at(0, 0, 1) = 1;
  od.at(2, 2, 0) = 4;
  const auto a = adjacency_from_od(od, od.all());
  CHECK(a.at(0, 1) == 1);
  CHECK(a.at(1, 0) == 0);
  CHECK(a.at(2, 0) == 1);
  CHECK(a.edge_count() == 2);
  CHECK(adjacency_from_od(ODSeries(3, 2, {0, 60}), {0, 2}).edge_count() == 0);
  CHECK(adjacency_from_od(od, {0, 1}).edge_count() == 1);
  CHECK_THROWS_AS(adjacency_from_od(od, {1, 1}), Error);
  CHECK_THROWS_AS(adjacency_from_od(od, {0, 4}), Error);
  CHECK(a.hash() == adjacency_from_od(DenseSeries::from(od), od.all()).hash());
  CHECK(a.hash() != adjacency_from_od(od, {0, 1}).hash());
}

TEST_CASE("adjacency is monotone in the bin range") {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 2 + rng() % 6, t = 3 + rng() % 20;
    const auto od = testing::random_od(rng, n, t, 3, 0.1);
    const std::size_t b = rng() % (t - 1);
    const std::size_t e = b + 1 + rng() % (t - b - 1);
    const auto small = adjacency_from_od(od, {b, e});
    const auto big = adjacency_from_od(od, {b > 0 ? b - 1 : 0, std::min(t, e + 2)});
    for (std::size_t i = 0; i < n * n; ++i)
      if (small.a[i]) CHECK(big.a[i] == 1);
  }
}

TEST_CASE("chronological split arithmetic") {
  const auto s = split_series(100, 1440, 10, 0.2);
  CHECK(s.train == BinRange{0, 72});
  CHECK(s.val == BinRange{72, 90});
  CHECK(s.test == BinRange{90, 100});
  const auto nv = split_series(100, 1440, 10, 0.0);
  CHECK(nv.train.size() == 90);
  CHECK(nv.val.empty());
  CHECK_THROWS_AS(split_series(100, 1440, 100, 0.2), Error);
  CHECK_THROWS_AS(split_series(100, 1440, 200, 0.2), Error);
  const auto hourly = split_series(24 * 30, 60, 10, 0.2);
  CHECK(hourly.test.size() == 240);
  CHECK(hourly.train.size() + hourly.val.size() + hourly.test.size() == 720);
  const auto bins = split_series_bins(50, 10, 0.25);
  CHECK(bins.train == BinRange{0, 30});
  CHECK(bins.val == BinRange{30, 40});
  CHECK(bins.test == BinRange{40, 50});
}

TEST_CASE("windows slide inside their range") {
  DenseSeries s(2, 40);
  for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] = static_cast<double>(i);
  CHECK(make_windows(s, {0, 13}, 12).size() == 1);
  CHECK(make_windows(s, {0, 20}, 12).size() == 8);
  CHECK_THROWS_AS(make_windows(s, {0, 20}, 0), Error);
  CHECK_THROWS_AS(make_windows(s, {0, 12}, 12), Error);
  const auto w = make_windows(s, {5, 20}, 3);
  CHECK(w.front().first_bin == 5);
  CHECK(w.front().target_bin == 8);
  CHECK(w.front().history[0] == s.at(5, 0, 0));
  CHECK(w.front().target[3] == s.at(8, 1, 1));
  CHECK(w.back().target_bin == 19);
}

TEST_CASE("windows from disjoint split ranges share no bins") {
  const auto split = split_series_bins(200, 40, 0.2);
  DenseSeries s(2, 200);
  std::set<std::size_t> seen;
  for (const auto& r : {split.train, split.val, split.test}) {
    std::set<std::size_t> mine;
    for (const auto& w : make_windows(s, r, 12))
      for (std::size_t b = w.first_bin; b <= w.target_bin; ++b) mine.insert(b);
    for (auto b : mine) {
      CHECK(b >= r.begin);
      CHECK(b < r.end);
      CHECK(seen.count(b) == 0);
    }
    seen.insert(mine.begin(), mine.end());
  }
}
