#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "flowcast/flow.hpp"
#include "flowcast/geo.hpp"

namespace flowcast::synthetic {

struct PeriodicOdSpec {
  std::size_t n = 4;
  std::size_t period = 24;
  std::size_t periods = 30;
  double noise_sigma = 0.1;
  /// Chance that an off-diagonal pair carries flow; inactive pairs stay 0.
  double pair_density = 0.0;
  std::uint64_t seed = 7;
};

/// Real-valued OD series with a two-peak daily profile plus Gaussian noise on
/// each active (origin, destination) pair. Diagonal pairs are always active
/// and every origin gets at least one active off-diagonal pair.
flow::DenseSeries periodic_od(const PeriodicOdSpec& spec);

struct TripSpec {
  geo::BoundingBox bbox;
  flow::Timestamp start = 1546300800;  ///< 2019-01-01T00:00:00Z
  std::size_t days = 14;
  /// Mean trips per minute at the daily peak.
  double peak_rate_per_minute = 4.0;
  std::size_t hotspots = 5;
  double trip_seconds = 900.0;
  std::uint64_t seed = 11;
};

/// Poisson trip arrivals per minute with a rush-hour profile; endpoints are
/// drawn around fixed hotspots inside the bounding box.
std::vector<flow::TripRecord> trips(const TripSpec& spec);

/// A bounding box of width_m x height_m meters whose south-west corner is `corner`.
geo::BoundingBox bbox_of_size(const geo::GeoPoint& corner, double width_m, double height_m);

}  // namespace flowcast::synthetic
