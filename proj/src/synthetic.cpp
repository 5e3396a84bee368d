#include "flowcast/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "flowcast/error.hpp"

namespace flowcast::synthetic {

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double gaussian(std::mt19937_64& rng) {
  // Box-Muller on the explicit uniform draw keeps streams identical across
  // standard libraries.
  const double u1 = std::max(uniform01(rng), 0x1.0p-53);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t poisson(std::mt19937_64& rng, double lambda) {
  const double limit = std::exp(-lambda);
  std::size_t k = 0;
  double p = uniform01(rng);
  while (p > limit) {
    ++k;
    p *= uniform01(rng);
  }
  return k;
}

double bump(double hour, double center, double width, double period) {
  double d = std::fmod(std::abs(hour - center), period);
  d = std::min(d, period - d);
  return std::exp(-0.5 * d * d / (width * width));
}

}  // namespace

flow::DenseSeries periodic_od(const PeriodicOdSpec& spec) {
  if (spec.n == 0 || spec.period == 0 || spec.periods == 0) throw Error("periodic_od: sizes must be positive");
  if (!(spec.pair_density >= 0.0 && spec.pair_density <= 1.0)) throw Error("periodic_od: pair density must lie in [0, 1]");
  std::mt19937_64 rng(spec.seed);
  const std::size_t n = spec.n;
  std::vector<double> pair_scale(n * n), pair_morning(n * n);
  std::vector<char> active(n * n, 0);
  for (std::size_t p = 0; p < n * n; ++p) {
    pair_scale[p] = 0.5 + 1.5 * uniform01(rng);
    pair_morning[p] = uniform01(rng);
    active[p] = p / n == p % n || uniform01(rng) < spec.pair_density;
  }
  // Every origin sends to at least one other tile.
  for (std::size_t i = 0; n > 1 && i < n; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) any = any || (j != i && active[i * n + j]);
    if (!any) active[i * n + (i + 1) % n] = 1;
  }
  const auto period = static_cast<double>(spec.period);
  flow::DenseSeries s(n, spec.period * spec.periods);
  for (std::size_t t = 0; t < s.t_bins; ++t) {
    const double h = static_cast<double>(t % spec.period) * 24.0 / period;
    const double morning = bump(h, 8.0, 2.0, 24.0);
    const double evening = bump(h, 18.0, 2.5, 24.0);
    for (std::size_t p = 0; p < n * n; ++p) {
      if (!active[p]) continue;
      const double profile = 0.5 + 4.0 * (pair_morning[p] * morning + (1.0 - pair_morning[p]) * evening);
      s.data[t * n * n + p] = pair_scale[p] * profile + spec.noise_sigma * gaussian(rng);
    }
  }
  return s;
}

geo::BoundingBox bbox_of_size(const geo::GeoPoint& corner, double width_m, double height_m) {
  // Widths are measured at the centroid latitude, matching the grid projection.
  const double dlat = height_m / (geo::kEarthRadiusM * std::numbers::pi / 180.0);
  const double lat0 = corner.lat + 0.5 * dlat;
  const double dlon =
      width_m / (geo::kEarthRadiusM * std::cos(lat0 * std::numbers::pi / 180.0) * std::numbers::pi / 180.0);
  return {corner.lon, corner.lat, corner.lon + dlon, corner.lat + dlat};
}

std::vector<flow::TripRecord> trips(const TripSpec& spec) {
  if (!spec.bbox.valid()) throw Error("synthetic trips need a valid bounding box");
  if (spec.hotspots == 0 || spec.days == 0) throw Error("synthetic trips need hotspots and days");
  std::mt19937_64 rng(spec.seed);
  const double w = spec.bbox.max_lon - spec.bbox.min_lon;
  const double h = spec.bbox.max_lat - spec.bbox.min_lat;
  std::vector<geo::GeoPoint> centers;
  for (std::size_t i = 0; i < spec.hotspots; ++i) {
    centers.push_back({spec.bbox.min_lon + (0.15 + 0.7 * uniform01(rng)) * w,
                       spec.bbox.min_lat + (0.15 + 0.7 * uniform01(rng)) * h});
  }
  auto draw_point = [&](std::size_t hotspot) {
    for (;;) {
      geo::GeoPoint p{centers[hotspot].lon + 0.08 * w * gaussian(rng), centers[hotspot].lat + 0.08 * h * gaussian(rng)};
      if (spec.bbox.contains(p)) return p;
    }
  };

  std::vector<flow::TripRecord> out;
  const std::size_t minutes = spec.days * 1440;
  for (std::size_t m = 0; m < minutes; ++m) {
    const double hour = static_cast<double>(m % 1440) / 60.0;
    const double morning = bump(hour, 8.5, 1.5, 24.0);
    const double evening = bump(hour, 17.5, 2.0, 24.0);
    const double rate = spec.peak_rate_per_minute * (0.1 + 0.9 * std::max(morning, evening));
    const std::size_t count = poisson(rng, rate);
    for (std::size_t c = 0; c < count; ++c) {
      // Morning trips lean towards the first hotspot, evening trips away from it.
      const bool am = morning > evening;
      const std::size_t o = am ? 1 + rng() % (spec.hotspots > 1 ? spec.hotspots - 1 : 1) : 0;
      const std::size_t d = am ? 0 : rng() % spec.hotspots;
      flow::TripRecord trip;
      trip.start_time = spec.start + static_cast<flow::Timestamp>(m) * 60 + static_cast<flow::Timestamp>(rng() % 60);
      trip.end_time = trip.start_time + static_cast<flow::Timestamp>(spec.trip_seconds * (0.5 + uniform01(rng)));
      trip.start = draw_point(std::min(o, spec.hotspots - 1));
      trip.end = draw_point(d);
      out.push_back(trip);
    }
  }
  return out;
}

}  // namespace flowcast::synthetic
