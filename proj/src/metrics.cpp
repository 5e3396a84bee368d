#include "flowcast/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flowcast/error.hpp"

namespace flowcast::metrics {

double rmse(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) {
    throw Error("rmse: size mismatch (" + std::to_string(pred.size()) + " vs " + std::to_string(truth.size()) + ")");
  }
  if (pred.empty()) throw Error("rmse: empty evaluation set");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

double nrmse(double rmse_value, double f_max, double f_min) {
  if (!(f_max > f_min)) throw Error("nrmse: flow range is empty (f_max <= f_min)");
  return rmse_value / (f_max - f_min);
}

double cpc(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw Error("cpc: size mismatch");
  double common = 0.0, total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0.0 || truth[i] < 0.0) throw Error("cpc: flows must be non-negative");
    common += std::min(pred[i], truth[i]);
    total += pred[i] + truth[i];
  }
  if (total == 0.0) throw Error("cpc: undefined when both flow sets are empty");
  return 2.0 * common / total;
}

}  // namespace flowcast::metrics
