#include <doctest.h>

#include <chrono>
#include <random>
#include <sstream>

#include "flowcast/error.hpp"
#include "flowcast/io.hpp"
#include "support.hpp"

using namespace flowcast;

namespace {

std::int64_t chrono_seconds(int y, unsigned m, unsigned d, int hh, int mm, int ss) {
  using namespace std::chrono;
  const sys_days date = year{y} / month{m} / day{d};
  return date.time_since_epoch().count() * 86400LL + hh * 3600LL + mm * 60LL + ss;
}

}  // namespace

TEST_CASE("iso8601 parsing agrees with calendar arithmetic") {
  CHECK(io::parse_iso8601("2019-01-01T00:00:00Z") == 1546300800);
  CHECK(io::parse_iso8601("2019-01-01 00:00:00") == 1546300800);
  CHECK(io::parse_iso8601("2019-01-01") == 1546300800);
  CHECK(io::parse_iso8601("2019-01-01T01:30") == 1546300800 + 5400);
  CHECK(io::parse_iso8601("2019-01-01T00:00:00.999Z") == 1546300800);
  CHECK(io::parse_iso8601("2019-01-01T02:00:00+02:00") == 1546300800);
  CHECK(io::parse_iso8601("2018-12-31T22:00:00-02:00") == 1546300800);
  CHECK(io::parse_iso8601("2020-02-29T12:00:00Z") == chrono_seconds(2020, 2, 29, 12, 0, 0));
  CHECK(io::parse_iso8601("1969-12-31T23:59:59Z") == -1);
  for (const char* bad : {"", "2019", "2019-13-01", "2019-01-01X00:00", "2019-01-01T25:00", "yesterday",
                          "2019-01-01T00:00:00Zjunk"}) {
    CHECK_THROWS_AS(io::parse_iso8601(bad), Error);
  }
}

TEST_CASE("iso8601 formatting round trips random instants") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 2000; ++i) {
    const int y = 1971 + static_cast<int>(rng() % 100);
    const unsigned m = 1 + rng() % 12, d = 1 + rng() % 28;
    const int hh = rng() % 24, mm = rng() % 60, ss = rng() % 60;
    const auto t = chrono_seconds(y, m, d, hh, mm, ss);
    char text[32];
    std::snprintf(text, sizeof text, "%04d-%02u-%02uT%02d:%02d:%02dZ", y, m, d, hh, mm, ss);
    CHECK(io::parse_iso8601(text) == t);
    CHECK(io::format_iso8601(t) == text);
  }
}

TEST_CASE("csv field splitting") {
  CHECK(io::split_csv_line("a,b,,c") == std::vector<std::string>{"a", "b", "", "c"});
  CHECK(io::split_csv_line("\"x,y\",\"he said \"\"hi\"\"\"") == std::vector<std::string>{"x,y", "he said \"hi\""});
  CHECK(io::split_csv_line("a,b\r") == std::vector<std::string>{"a", "b"});
}

TEST_CASE("trip csv parsing") {
  std::istringstream in(
      "end_lat,start_time,end_time,start_lat,start_lon,end_lon,subject_id\n"
      "41.85,2019-01-01T00:05:00Z,2019-01-01T00:20:00Z,41.81,12.41,12.45,u1\n"
      "\n"
      "41.82,2019-01-01T01:00:00Z,2019-01-01T01:10:00Z,41.83,12.42,12.43,\n");
  const auto csv = io::parse_trip_csv(in);
  REQUIRE(csv.trips.size() == 2);
  CHECK(csv.report.rows == 2);
  CHECK(csv.report.bad_rows.empty());
  CHECK(csv.trips[0].start_time == 1546300800 + 300);
  CHECK(csv.trips[0].start.lat == 41.81);
  CHECK(csv.trips[0].end.lon == 12.45);
  CHECK(csv.trips[0].subject_id == std::optional<std::string>("u1"));
  CHECK_FALSE(csv.trips[1].subject_id.has_value());
}

TEST_CASE("trip csv malformed rows are budgeted and reported by line") {
  auto build = [](std::size_t good, std::vector<std::size_t> bad_at) {
    std::ostringstream os;
    os << "start_time,end_time,start_lat,start_lon,end_lat,end_lon\n";
    for (std::size_t i = 0; i < good + bad_at.size(); ++i) {
      if (std::find(bad_at.begin(), bad_at.end(), i) != bad_at.end()) {
        os << "2019-01-01T00:00:00Z,not a time,41.8,12.4,41.8,12.4\n";
      } else {
        os << "2019-01-01T00:00:00Z,2019-01-01T00:10:00Z,41.8,12.4,41.81,12.41\n";
      }
    }
    return os.str();
  };
  {
    std::istringstream in(build(199, {50}));
    const auto csv = io::parse_trip_csv(in);
    CHECK(csv.trips.size() == 199);
    CHECK(csv.report.bad_rows == std::vector<std::size_t>{52});
  }
  {
    std::istringstream in(build(97, {3, 40, 90}));
    try {
      io::parse_trip_csv(in);
      FAIL("expected the malformed-row budget to abort");
    } catch (const Error& e) {
      const std::string msg = e.what();
      CHECK(msg.find("5 42 92") != std::string::npos);
    }
  }
  {
    std::istringstream in(build(9, {4}));
    CHECK(io::parse_trip_csv(in, 0.2).trips.size() == 9);
  }
  std::istringstream backwards(
      "start_time,end_time,start_lat,start_lon,end_lat,end_lon\n"
      "2019-01-01T00:10:00Z,2019-01-01T00:00:00Z,41.8,12.4,41.8,12.4\n");
  CHECK(io::parse_trip_csv(backwards, 1.0).report.bad_rows.size() == 1);
  std::istringstream bad_lat(
      "start_time,end_time,start_lat,start_lon,end_lat,end_lon\n"
      "2019-01-01T00:00:00Z,2019-01-01T00:10:00Z,91.0,12.4,41.8,12.4\n");
  CHECK(io::parse_trip_csv(bad_lat, 1.0).report.bad_rows.size() == 1);
  std::istringstream missing("start_time,end_time,start_lat,start_lon,end_lat\n");
  CHECK_THROWS_AS(io::parse_trip_csv(missing), Error);
  std::istringstream empty("");
  CHECK_THROWS_AS(io::parse_trip_csv(empty), Error);
  CHECK_THROWS_AS(io::read_trip_csv("/nonexistent/trips.csv"), Error);
}

TEST_CASE("trip csv round trip") {
  std::mt19937_64 rng(3);
  std::vector<flow::TripRecord> trips;
  for (int i = 0; i < 50; ++i) {
    const flow::Timestamp s = 1546300800 + static_cast<flow::Timestamp>(rng() % 1000000);
    trips.push_back({s, s + static_cast<flow::Timestamp>(rng() % 5000),
                     {testing::uniform(rng, -180, 180), testing::uniform(rng, -90, 90)},
                     {testing::uniform(rng, -180, 180), testing::uniform(rng, -90, 90)},
                     std::nullopt});
  }
  std::istringstream in(io::format_trip_csv(trips));
  const auto back = io::parse_trip_csv(in).trips;
  REQUIRE(back.size() == trips.size());
  for (std::size_t i = 0; i < trips.size(); ++i) {
    CHECK(back[i].start_time == trips[i].start_time);
    CHECK(back[i].end_time == trips[i].end_time);
    CHECK(back[i].start.lat == doctest::Approx(trips[i].start.lat).epsilon(1e-9));
    CHECK(back[i].end.lon == doctest::Approx(trips[i].end.lon).epsilon(1e-9));
  }
}

TEST_CASE("gps csv groups and sorts fixes per subject") {
  std::istringstream in(
      "subject_id,timestamp,lat,lon\n"
      "b,2019-01-01T00:20:00Z,41.80,12.40\n"
      "a,2019-01-01T00:10:00Z,41.81,12.41\n"
      "b,2019-01-01T00:05:00Z,41.82,12.42\n"
      "a,2019-01-01T00:10:00Z,41.83,12.43\n");
  const auto csv = io::parse_gps_csv(in, 0.5);
  REQUIRE(csv.traces.size() == 2);
  CHECK(csv.traces[0].subject_id == "b");
  REQUIRE(csv.traces[0].points.size() == 2);
  CHECK(csv.traces[0].points[0].time < csv.traces[0].points[1].time);
  CHECK(csv.traces[0].points[0].position.lat == 41.82);
  CHECK(csv.traces[1].points.size() == 1);
  CHECK(csv.report.bad_rows == std::vector<std::size_t>{5});
  std::istringstream strict(
      "subject_id,timestamp,lat,lon\n"
      ",2019-01-01T00:20:00Z,41.80,12.40\n");
  CHECK_THROWS_AS(io::parse_gps_csv(strict), Error);
}

TEST_CASE("ods binary round trip and rejection") {
  std::mt19937_64 rng(4);
  auto od = testing::random_od(rng, 5, 7, 1000000);
  od.binning = {1546300800, 30};
  std::stringstream buf;
  io::write_ods(od, buf);
  CHECK(buf.str().size() == 4 + 4 + 4 + 8 + 4 + 4 * 5 * 5 * 7);
  CHECK(buf.str().substr(0, 4) == "ODS1");
  const auto back = io::read_ods(buf);
  CHECK(back.n == 5);
  CHECK(back.t_bins == 7);
  CHECK(back.binning.epoch_start == 1546300800);
  CHECK(back.binning.bin_minutes == 30);
  CHECK(back.data == od.data);

  std::stringstream le;
  io::le::put_u32(le, 0x01020304u);
  CHECK(le.str() == std::string("\x04\x03\x02\x01", 4));

  std::stringstream junk("ODS2xxxxxxxxxxxxxxxxxxx");
  CHECK_THROWS_AS(io::read_ods(junk), Error);
  std::stringstream full;
  io::write_ods(od, full);
  std::stringstream cut(full.str().substr(0, full.str().size() - 3));
  CHECK_THROWS_AS(io::read_ods(cut), Error);

  testing::TempDir dir("ods");
  io::write_ods(od, dir.file("nested/od.ods"));
  CHECK(io::read_ods(dir.file("nested/od.ods")).data == od.data);
}
