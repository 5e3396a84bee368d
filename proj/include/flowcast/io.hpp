#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "flowcast/flow.hpp"

namespace flowcast::io {

/// Accepts "YYYY-MM-DD[T| ]HH:MM[:SS[.fff]][Z|+HH:MM|-HH:MM]" and bare dates.
/// Fractional seconds are truncated.
flow::Timestamp parse_iso8601(std::string_view text);
std::string format_iso8601(flow::Timestamp t);

/// One CSV record; handles double-quoted fields with "" escapes.
std::vector<std::string> split_csv_line(std::string_view line);

struct CsvLoadReport {
  std::size_t rows = 0;                  ///< data rows seen (header excluded)
  std::vector<std::size_t> bad_rows;     ///< 1-based line numbers in the file
};

struct TripCsv {
  std::vector<flow::TripRecord> trips;
  CsvLoadReport report;
};

struct GpsCsv {
  std::vector<flow::GpsTrace> traces;
  CsvLoadReport report;
};

/// Columns (by header name): start_time, end_time, start_lat, start_lon,
/// end_lat, end_lon [, subject_id]. Aborts when the share of malformed rows
/// exceeds max_bad_fraction, listing the offending line numbers.
TripCsv read_trip_csv(const std::string& path, double max_bad_fraction = 0.01);
TripCsv parse_trip_csv(std::istream& in, double max_bad_fraction = 0.01);

/// Serializes trips in the layout read_trip_csv accepts.
std::string format_trip_csv(const std::vector<flow::TripRecord>& trips);

/// Columns: subject_id, timestamp, lat, lon. Fixes are grouped per subject
/// and sorted by time; repeated timestamps count as malformed.
GpsCsv read_gps_csv(const std::string& path, double max_bad_fraction = 0.01);
GpsCsv parse_gps_csv(std::istream& in, double max_bad_fraction = 0.01);

// ODS1 binary: "ODS1", u32 n, u32 t_bins, i64 epoch_start, u32 bin_minutes,
// then t_bins*n*n u32 values, all little-endian.
void write_ods(const flow::ODSeries& od, std::ostream& out);
void write_ods(const flow::ODSeries& od, const std::string& path);
flow::ODSeries read_ods(std::istream& in);
flow::ODSeries read_ods(const std::string& path);

namespace le {
void put_u32(std::ostream& out, std::uint32_t v);
void put_u64(std::ostream& out, std::uint64_t v);
void put_i64(std::ostream& out, std::int64_t v);
void put_f64(std::ostream& out, double v);
std::uint32_t get_u32(std::istream& in);
std::uint64_t get_u64(std::istream& in);
std::int64_t get_i64(std::istream& in);
double get_f64(std::istream& in);
}  // namespace le

/// Writes `contents` to path, creating parent directories.
void write_text_file(const std::string& path, const std::string& contents);
std::string read_text_file(const std::string& path);

}  // namespace flowcast::io
