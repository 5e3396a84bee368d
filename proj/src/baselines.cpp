#include "flowcast/baselines.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "flowcast/error.hpp"

namespace flowcast::baselines {

std::vector<double> naive_predict(const std::vector<double>& history, std::size_t slice_size, std::size_t window_n) {
  if (window_n == 0) throw Error("naive_predict: window must be at least 1");
  if (slice_size == 0 || history.size() % slice_size != 0) throw Error("naive_predict: history is not a stack of slices");
  const std::size_t t = history.size() / slice_size;
  if (t < window_n) {
    throw Error("naive_predict: history has " + std::to_string(t) + " slices, window needs " + std::to_string(window_n));
  }
  std::vector<double> out(slice_size, 0.0);
  for (std::size_t s = t - window_n; s < t; ++s)
    for (std::size_t i = 0; i < slice_size; ++i) out[i] += history[s * slice_size + i];
  for (auto& v : out) v /= static_cast<double>(window_n);
  return out;
}

VarModel VarModel::fit(const std::vector<double>& series, std::size_t d, std::size_t p, double ridge) {
  if (d == 0 || p == 0) throw Error("var_fit: dimension and lag order must be positive");
  if (series.size() % d != 0) throw Error("var_fit: series length is not a multiple of d");
  const std::size_t t = series.size() / d;
  const std::size_t cols = 1 + d * p;
  if (t < p + cols) {
    throw Error("var_fit: " + std::to_string(t) + " observations, need at least p + d*p + 1 = " +
                std::to_string(p + cols));
  }
  const std::size_t rows = t - p;

  // Ridge normal equations (X'X + lambda I) B = X'Y, solved as the equivalent
  // augmented least-squares problem [X; sqrt(lambda) I] B = [Y; 0] with QR.
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows + cols), static_cast<Eigen::Index>(cols));
  Eigen::MatrixXd target = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows + cols), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t now = r + p;
    const auto ri = static_cast<Eigen::Index>(r);
    design(ri, 0) = 1.0;
    for (std::size_t lag = 1; lag <= p; ++lag)
      for (std::size_t j = 0; j < d; ++j)
        design(ri, static_cast<Eigen::Index>(1 + (lag - 1) * d + j)) = series[(now - lag) * d + j];
    for (std::size_t j = 0; j < d; ++j) target(ri, static_cast<Eigen::Index>(j)) = series[now * d + j];
  }
  const double damp = std::sqrt(ridge);
  for (std::size_t c = 0; c < cols; ++c) {
    design(static_cast<Eigen::Index>(rows + c), static_cast<Eigen::Index>(c)) = damp;
  }
  const Eigen::MatrixXd beta = design.colPivHouseholderQr().solve(target);

  VarModel m;
  m.fitted_ = true;
  m.d_ = d;
  m.p_ = p;
  m.intercept_.resize(d);
  m.lags_.assign(p, std::vector<double>(d * d, 0.0));
  for (std::size_t out = 0; out < d; ++out) {
    const auto oi = static_cast<Eigen::Index>(out);
    m.intercept_[out] = beta(0, oi);
    for (std::size_t lag = 1; lag <= p; ++lag)
      for (std::size_t j = 0; j < d; ++j)
        m.lags_[lag - 1][out * d + j] = beta(static_cast<Eigen::Index>(1 + (lag - 1) * d + j), oi);
  }
  return m;
}

VarModel VarModel::from_coefficients(std::vector<std::vector<double>> lags, std::vector<double> intercept) {
  const std::size_t d = intercept.size();
  if (d == 0 || lags.empty()) throw Error("VarModel: need at least one lag and a non-empty intercept");
  for (const auto& a : lags) {
    if (a.size() != d * d) throw Error("VarModel: coefficient matrix is not d x d");
  }
  VarModel m;
  m.fitted_ = true;
  m.d_ = d;
  m.p_ = lags.size();
  m.lags_ = std::move(lags);
  m.intercept_ = std::move(intercept);
  return m;
}

std::vector<double> VarModel::predict(const std::vector<double>& recent) const {
  if (!fitted_) throw Error("var_predict: model has not been fitted");
  if (recent.size() != p_ * d_) {
    throw Error("var_predict: expected " + std::to_string(p_) + " rows of dimension " + std::to_string(d_));
  }
  std::vector<double> out = intercept_;
  for (std::size_t lag = 1; lag <= p_; ++lag) {
    const double* y = recent.data() + (p_ - lag) * d_;
    const auto& a = lags_[lag - 1];
    for (std::size_t i = 0; i < d_; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d_; ++j) acc += a[i * d_ + j] * y[j];
      out[i] += acc;
    }
  }
  return out;
}

}  // namespace flowcast::baselines
