#include "flowcast/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "flowcast/error.hpp"

namespace flowcast::io {

namespace {

// Howard Hinnant's days_from_civil.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

class Cursor {
 public:
  explicit Cursor(std::string_view s) : s_(s) {}
  bool done() const { return pos_ >= s_.size(); }
  char peek() const { return done() ? '\0' : s_[pos_]; }
  void skip() { ++pos_; }
  int digits(std::size_t count) {
    int v = 0;
    for (std::size_t i = 0; i < count; ++i) {
      if (done() || s_[pos_] < '0' || s_[pos_] > '9') throw Error("bad timestamp '" + std::string(s_) + "'");
      v = v * 10 + (s_[pos_++] - '0');
    }
    return v;
  }
  void expect(char c) {
    if (peek() != c) throw Error("bad timestamp '" + std::string(s_) + "'");
    ++pos_;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::map<std::string, std::size_t> header_index(const std::string& line) {
  std::map<std::string, std::size_t> idx;
  const auto cols = split_csv_line(line);
  for (std::size_t i = 0; i < cols.size(); ++i) {
    std::string name(trim(cols[i]));
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    idx.emplace(name, i);
  }
  return idx;
}

std::size_t require_column(const std::map<std::string, std::size_t>& idx, const std::string& name) {
  const auto it = idx.find(name);
  if (it == idx.end()) throw Error("CSV header lacks required column '" + name + "'");
  return it->second;
}

void enforce_bad_row_budget(const CsvLoadReport& report, double max_bad_fraction) {
  if (report.bad_rows.empty()) return;
  const double frac = report.rows == 0 ? 1.0 : static_cast<double>(report.bad_rows.size()) / static_cast<double>(report.rows);
  if (frac > max_bad_fraction) {
    std::ostringstream os;
    os << report.bad_rows.size() << " of " << report.rows << " rows are malformed (limit "
       << max_bad_fraction * 100.0 << "%); lines:";
    const std::size_t shown = std::min<std::size_t>(report.bad_rows.size(), 50);
    for (std::size_t i = 0; i < shown; ++i) os << ' ' << report.bad_rows[i];
    if (shown < report.bad_rows.size()) os << " ...";
    throw Error(os.str());
  }
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw Error("cannot open '" + path + "'");
  return in;
}

}  // namespace

flow::Timestamp parse_iso8601(std::string_view text) {
  text = trim(text);
  Cursor c(text);
  const int year = c.digits(4);
  c.expect('-');
  const int month = c.digits(2);
  c.expect('-');
  const int day = c.digits(2);
  if (month < 1 || month > 12 || day < 1 || day > 31) throw Error("bad timestamp '" + std::string(text) + "'");
  int hh = 0, mm = 0, ss = 0;
  std::int64_t offset = 0;
  if (!c.done()) {
    if (c.peek() != 'T' && c.peek() != ' ') throw Error("bad timestamp '" + std::string(text) + "'");
    c.skip();
    hh = c.digits(2);
    c.expect(':');
    mm = c.digits(2);
    if (c.peek() == ':') {
      c.skip();
      ss = c.digits(2);
      if (c.peek() == '.' || c.peek() == ',') {
        c.skip();
        while (c.peek() >= '0' && c.peek() <= '9') c.skip();
      }
    }
    if (c.peek() == 'Z') {
      c.skip();
    } else if (c.peek() == '+' || c.peek() == '-') {
      const int sign = c.peek() == '-' ? -1 : 1;
      c.skip();
      const int oh = c.digits(2);
      if (c.peek() == ':') c.skip();
      const int om = c.done() ? 0 : c.digits(2);
      offset = sign * (oh * 3600 + om * 60);
    }
    if (!c.done()) throw Error("bad timestamp '" + std::string(text) + "'");
    if (hh > 23 || mm > 59 || ss > 60) throw Error("bad timestamp '" + std::string(text) + "'");
  }
  return days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day)) * 86400 + hh * 3600 + mm * 60 +
         ss - offset;
}

std::string format_iso8601(flow::Timestamp t) {
  std::int64_t days = t >= 0 ? t / 86400 : -((-t + 86399) / 86400);
  std::int64_t rem = t - days * 86400;
  std::int64_t y = 0;
  unsigned m = 0, d = 0;
  civil_from_days(days, y, m, d);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<long long>(y), m, d,
                static_cast<long long>(rem / 3600), static_cast<long long>((rem % 3600) / 60),
                static_cast<long long>(rem % 60));
  return buf;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r' && ch != '\n') {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string format_trip_csv(const std::vector<flow::TripRecord>& trips) {
  std::ostringstream os;
  os << "start_time,end_time,start_lat,start_lon,end_lat,end_lon\n";
  char buf[128];
  for (const auto& t : trips) {
    std::snprintf(buf, sizeof buf, ",%.9f,%.9f,%.9f,%.9f\n", t.start.lat, t.start.lon, t.end.lat, t.end.lon);
    os << format_iso8601(t.start_time) << ',' << format_iso8601(t.end_time) << buf;
  }
  return os.str();
}

TripCsv parse_trip_csv(std::istream& in, double max_bad_fraction) {
  std::string line;
  if (!std::getline(in, line)) throw Error("trip CSV is empty");
  const auto idx = header_index(line);
  const std::size_t c_st = require_column(idx, "start_time");
  const std::size_t c_et = require_column(idx, "end_time");
  const std::size_t c_slat = require_column(idx, "start_lat");
  const std::size_t c_slon = require_column(idx, "start_lon");
  const std::size_t c_elat = require_column(idx, "end_lat");
  const std::size_t c_elon = require_column(idx, "end_lon");
  const auto subj = idx.find("subject_id");
  const std::size_t needed = std::max({c_st, c_et, c_slat, c_slon, c_elat, c_elon}) + 1;

  TripCsv result;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++result.report.rows;
    const auto cols = split_csv_line(line);
    try {
      if (cols.size() < needed) throw Error("short row");
      flow::TripRecord trip;
      trip.start_time = parse_iso8601(cols[c_st]);
      trip.end_time = parse_iso8601(cols[c_et]);
      const auto slat = parse_double(cols[c_slat]);
      const auto slon = parse_double(cols[c_slon]);
      const auto elat = parse_double(cols[c_elat]);
      const auto elon = parse_double(cols[c_elon]);
      if (!slat || !slon || !elat || !elon) throw Error("bad coordinate");
      trip.start = {*slon, *slat};
      trip.end = {*elon, *elat};
      if (!trip.start.valid() || !trip.end.valid() || trip.end_time < trip.start_time) throw Error("invalid record");
      if (subj != idx.end() && subj->second < cols.size() && !trim(cols[subj->second]).empty()) {
        trip.subject_id = std::string(trim(cols[subj->second]));
      }
      result.trips.push_back(std::move(trip));
    } catch (const Error&) {
      result.report.bad_rows.push_back(line_no);
    }
  }
  enforce_bad_row_budget(result.report, max_bad_fraction);
  return result;
}

TripCsv read_trip_csv(const std::string& path, double max_bad_fraction) {
  auto in = open_in(path);
  return parse_trip_csv(in, max_bad_fraction);
}

GpsCsv parse_gps_csv(std::istream& in, double max_bad_fraction) {
  std::string line;
  if (!std::getline(in, line)) throw Error("GPS CSV is empty");
  const auto idx = header_index(line);
  const std::size_t c_id = require_column(idx, "subject_id");
  const std::size_t c_ts = require_column(idx, "timestamp");
  const std::size_t c_lat = require_column(idx, "lat");
  const std::size_t c_lon = require_column(idx, "lon");
  const std::size_t needed = std::max({c_id, c_ts, c_lat, c_lon}) + 1;

  GpsCsv result;
  std::unordered_map<std::string, std::size_t> trace_of;
  std::vector<std::vector<std::pair<flow::GpsFix, std::size_t>>> fixes;  // with line numbers
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++result.report.rows;
    const auto cols = split_csv_line(line);
    try {
      if (cols.size() < needed) throw Error("short row");
      const std::string id(trim(cols[c_id]));
      if (id.empty()) throw Error("missing subject");
      const auto lat = parse_double(cols[c_lat]);
      const auto lon = parse_double(cols[c_lon]);
      if (!lat || !lon) throw Error("bad coordinate");
      flow::GpsFix fix{parse_iso8601(cols[c_ts]), {*lon, *lat}};
      if (!fix.position.valid()) throw Error("invalid coordinate");
      auto [it, inserted] = trace_of.emplace(id, result.traces.size());
      if (inserted) {
        result.traces.push_back({id, {}});
        fixes.emplace_back();
      }
      fixes[it->second].emplace_back(fix, line_no);
    } catch (const Error&) {
      result.report.bad_rows.push_back(line_no);
    }
  }
  for (std::size_t s = 0; s < fixes.size(); ++s) {
    auto& list = fixes[s];
    std::stable_sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.first.time < b.first.time; });
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (i > 0 && list[i].first.time == list[i - 1].first.time) {
        result.report.bad_rows.push_back(list[i].second);
        continue;
      }
      result.traces[s].points.push_back(list[i].first);
    }
  }
  std::sort(result.report.bad_rows.begin(), result.report.bad_rows.end());
  enforce_bad_row_budget(result.report, max_bad_fraction);
  return result;
}

GpsCsv read_gps_csv(const std::string& path, double max_bad_fraction) {
  auto in = open_in(path);
  return parse_gps_csv(in, max_bad_fraction);
}

namespace le {

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

void put_i64(std::ostream& out, std::int64_t v) { put_u64(out, static_cast<std::uint64_t>(v)); }
void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error("unexpected end of binary file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw Error("unexpected end of binary file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::int64_t get_i64(std::istream& in) { return static_cast<std::int64_t>(get_u64(in)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace le

void write_ods(const flow::ODSeries& od, std::ostream& out) {
  if (od.data.size() != od.n * od.n * od.t_bins) throw Error("ODSeries data does not match its shape");
  out.write("ODS1", 4);
  le::put_u32(out, static_cast<std::uint32_t>(od.n));
  le::put_u32(out, static_cast<std::uint32_t>(od.t_bins));
  le::put_i64(out, od.binning.epoch_start);
  le::put_u32(out, od.binning.bin_minutes);
  for (auto v : od.data) le::put_u32(out, v);
  if (!out) throw Error("failed writing ODS1 stream");
}

void write_ods(const flow::ODSeries& od, const std::string& path) {
  std::ostringstream buf(std::ios::binary);
  write_ods(od, buf);
  write_text_file(path, buf.str());
}

flow::ODSeries read_ods(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "ODS1", 4) != 0) throw Error("not an ODS1 file (bad magic)");
  const std::uint32_t n = le::get_u32(in);
  const std::uint32_t t_bins = le::get_u32(in);
  flow::TimeBinning binning;
  binning.epoch_start = le::get_i64(in);
  binning.bin_minutes = le::get_u32(in);
  if (n == 0 || binning.bin_minutes == 0) throw Error("ODS1 header has zero tiles or zero bin length");
  flow::ODSeries od(n, t_bins, binning);
  for (auto& v : od.data) v = le::get_u32(in);
  return od;
}

flow::ODSeries read_ods(const std::string& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  return read_ods(in);
}

void write_text_file(const std::string& path, const std::string& contents) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::out | std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error("failed writing '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace flowcast::io
