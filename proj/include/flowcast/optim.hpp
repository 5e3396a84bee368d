#pragma once

#include <string>
#include <utility>
#include <vector>

#include "flowcast/tensor.hpp"

namespace flowcast::ad {

struct RmsPropOptions {
  double lr = 1e-4;
  double rho = 0.99;
  double eps = 1e-8;
};

/// Running mean of squared gradients, one buffer per parameter.
struct OptimizerState {
  RmsPropOptions options;
  std::vector<std::vector<double>> square_avg;
};

/// s <- rho*s + (1-rho)*g^2 ; p <- p - lr*g/(sqrt(s)+eps).
/// Parameters without a gradient buffer are treated as having g = 0.
void rmsprop_step(std::vector<Tensor>& params, OptimizerState& state);

class RmsProp {
 public:
  RmsProp(std::vector<Tensor> params, RmsPropOptions options = {});

  void step() { rmsprop_step(params_, state_); }
  void zero_grad();
  const OptimizerState& state() const { return state_; }

 private:
  std::vector<Tensor> params_;
  OptimizerState state_;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// CNW1 checkpoint: "CNW1", u32 count, then per tensor: u32 name length,
// name bytes, u32 rank, u32 dims..., f64 payload; all little-endian.
void save_checkpoint(const NamedTensors& tensors, const std::string& path);
NamedTensors load_checkpoint(const std::string& path);
std::string encode_checkpoint(const NamedTensors& tensors);
NamedTensors decode_checkpoint(const std::string& bytes);

}  // namespace flowcast::ad
