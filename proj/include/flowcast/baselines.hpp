#pragma once

#include <cstddef>
#include <vector>

namespace flowcast::baselines {

/// Elementwise mean of the last `window_n` slices of a (t, slice_size)
/// row-major history.
std::vector<double> naive_predict(const std::vector<double>& history, std::size_t slice_size, std::size_t window_n = 12);

/// y_t = c + sum_i A_i y_{t-i} + e_t fitted by ridge-damped least squares.
class VarModel {
 public:
  static constexpr double kRidge = 1e-8;

  VarModel() = default;

  /// series is (t, d) row-major. Requires t >= p + d*p + 1.
  static VarModel fit(const std::vector<double>& series, std::size_t d, std::size_t p = 8, double ridge = kRidge);

  /// Builds a model from explicit coefficients; lags[i] is A_{i+1} (d x d row-major).
  static VarModel from_coefficients(std::vector<std::vector<double>> lags, std::vector<double> intercept);

  bool fitted() const { return fitted_; }
  std::size_t order() const { return p_; }
  std::size_t dim() const { return d_; }
  /// A_lag (1-based lag) as d x d row-major.
  const std::vector<double>& coefficients(std::size_t lag) const { return lags_.at(lag - 1); }
  const std::vector<double>& intercept() const { return intercept_; }

  /// recent is (p, d) in chronological order (last row = most recent).
  std::vector<double> predict(const std::vector<double>& recent) const;

 private:
  bool fitted_ = false;
  std::size_t d_ = 0;
  std::size_t p_ = 0;
  std::vector<std::vector<double>> lags_;
  std::vector<double> intercept_;
};

inline VarModel var_fit(const std::vector<double>& series, std::size_t d, std::size_t p = 8) {
  return VarModel::fit(series, d, p);
}
inline std::vector<double> var_predict(const VarModel& model, const std::vector<double>& recent) {
  return model.predict(recent);
}

}  // namespace flowcast::baselines
