#pragma once

#include <span>

namespace flowcast::metrics {

/// sqrt(mean((pred - truth)^2)) over all elements.
double rmse(std::span<const double> pred, std::span<const double> truth);

/// rmse / (f_max - f_min); f_max and f_min come from the ground truth.
double nrmse(double rmse_value, double f_max, double f_min);

/// Common Part of Commuters: 2 sum(min(p, t)) / (sum(p) + sum(t)).
double cpc(std::span<const double> pred, std::span<const double> truth);

}  // namespace flowcast::metrics
