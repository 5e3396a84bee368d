#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "flowcast/flow.hpp"
#include "flowcast/geo.hpp"
#include "flowcast/tensor.hpp"

namespace testing {

using flowcast::ad::Tensor;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

inline std::vector<double> random_values(std::mt19937_64& rng, std::size_t count, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(count);
  for (auto& x : v) x = uniform(rng, lo, hi);
  return v;
}

inline Tensor random_tensor(std::mt19937_64& rng, flowcast::ad::Shape shape, double lo = -1.0, double hi = 1.0) {
  const std::size_t count = flowcast::ad::numel(shape);
  return Tensor::from(std::move(shape), random_values(rng, count, lo, hi), true);
}

struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

/// Central finite differences (step h) against reverse-mode gradients for
/// every element of every input. `loss` must rebuild the graph from the
/// current input values on each call. Relative errors use
/// max(|analytic|, |numeric|, floor) as denominator.
inline GradCheck check_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> inputs, double h = 1e-6,
                                 double floor = 1e-6) {
  for (auto& t : inputs) t.zero_grad();
  flowcast::ad::backward(loss());
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());
  GradCheck out;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    auto values = inputs[a].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss().item();
      values[i] = saved - h;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(numeric - analytic[a][i]);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[a][i]), floor});
      out.max_abs_error = std::max(out.max_abs_error, err);
      out.max_rel_error = std::max(out.max_rel_error, err / denom);
    }
  }
  return out;
}

/// Weighted sum with fixed random weights so every output element matters.
inline Tensor projection_loss(const Tensor& y, const std::vector<double>& weights) {
  return flowcast::ad::sum(flowcast::ad::hadamard(y, Tensor::from(y.shape(), weights)));
}

inline flowcast::flow::ODSeries random_od(std::mt19937_64& rng, std::size_t n, std::size_t t_bins,
                                          std::uint32_t max_count = 20, double density = 0.6) {
  flowcast::flow::ODSeries od(n, t_bins, {0, 60});
  for (auto& v : od.data) {
    if (uniform(rng, 0.0, 1.0) < density) v = static_cast<std::uint32_t>(rng() % (max_count + 1));
  }
  return od;
}

/// Grid of square tiles laid out on a small bounding box near the equator.
inline flowcast::geo::BoundingBox toy_bbox() { return {12.40, 41.80, 12.46, 41.86}; }

/// Occupied tile of each individual in each bin; every individual is present
/// in every bin.
struct TrajectorySet {
  std::size_t tiles = 0;
  std::size_t bins = 0;
  std::vector<std::vector<std::size_t>> tile_of;  ///< [individual][bin]
};

inline TrajectorySet random_trajectories(std::mt19937_64& rng, std::size_t tiles, std::size_t bins,
                                         std::size_t individuals, double stay_probability = 0.4) {
  TrajectorySet s{tiles, bins, {}};
  for (std::size_t u = 0; u < individuals; ++u) {
    std::vector<std::size_t> path(bins);
    path[0] = rng() % tiles;
    for (std::size_t t = 1; t < bins; ++t) {
      path[t] = uniform(rng, 0.0, 1.0) < stay_probability ? path[t - 1] : rng() % tiles;
    }
    s.tile_of.push_back(std::move(path));
  }
  return s;
}

/// in_t(k): individuals not in k at t-1 and in k at t (t >= 1; 0 at t = 0).
inline std::vector<std::uint64_t> brute_inflow(const TrajectorySet& s) {
  std::vector<std::uint64_t> in(s.bins * s.tiles, 0);
  for (const auto& path : s.tile_of)
    for (std::size_t t = 1; t < s.bins; ++t)
      for (std::size_t k = 0; k < s.tiles; ++k)
        if (path[t - 1] != k && path[t] == k) ++in[t * s.tiles + k];
  return in;
}

/// out_t(k): individuals in k at t and not in k at t+1 (t + 1 < bins).
inline std::vector<std::uint64_t> brute_outflow(const TrajectorySet& s) {
  std::vector<std::uint64_t> out(s.bins * s.tiles, 0);
  for (const auto& path : s.tile_of)
    for (std::size_t t = 0; t + 1 < s.bins; ++t)
      for (std::size_t k = 0; k < s.tiles; ++k)
        if (path[t] == k && path[t + 1] != k) ++out[t * s.tiles + k];
  return out;
}

/// GPS traces with one fix per bin at the centroid of the occupied tile.
inline std::vector<flowcast::flow::GpsTrace> traces_from(const TrajectorySet& s, const flowcast::geo::Tessellation& tess,
                                                         const flowcast::flow::TimeBinning& binning) {
  std::vector<flowcast::flow::GpsTrace> out;
  for (std::size_t u = 0; u < s.tile_of.size(); ++u) {
    flowcast::flow::GpsTrace tr;
    tr.subject_id = "u" + std::to_string(u);
    for (std::size_t t = 0; t < s.bins; ++t) {
      const auto when = binning.epoch_start + static_cast<std::int64_t>(t) * binning.bin_seconds() + 30;
      tr.points.push_back({when, tess.tile_centroid(s.tile_of[u][t])});
    }
    out.push_back(std::move(tr));
  }
  return out;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("flowcast_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
