#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flowcast/flow.hpp"
#include "flowcast/optim.hpp"
#include "flowcast/tensor.hpp"

namespace flowcast::model {

using ad::Mode;
using ad::Tensor;

/// D^-1/2 (A + I) D^-1/2 as a dense row-major matrix.
struct NormalizedAdjacency {
  std::size_t n = 0;
  std::vector<double> m;

  double at(std::size_t i, std::size_t j) const { return m[i * n + j]; }
};

/// With `symmetrize`, off-diagonal entries become max(a_ij, a_ji) before the
/// self-loops are added; otherwise the directed A + I and its row degrees are used.
NormalizedAdjacency normalize_adjacency(const flow::Adjacency& a, bool symmetrize = true);

struct ModelConfig {
  std::size_t n = 0;
  std::size_t k = 12;
  std::size_t horizon = 1;
  std::size_t hidden_channels = 64;  ///< C1: first Time Block and Spatial Block width
  std::size_t block_channels = 64;   ///< C2: ST-GCN block output width
  std::size_t kernel_t = 3;
  double bn_eps = 1e-5;
  std::uint64_t seed = 0;
  bool symmetrize = true;

  /// Temporal length left after both ST-GCN blocks: k - 4 (K_t - 1).
  long long final_temporal_length() const;
  /// Throws flowcast::Error with an explanation when the shape rules fail.
  void validate() const;
};

/// Gated temporal convolution with a learned residual path:
/// ReLU(x*w_res + b_res + (x*w_value + b_value) o sigmoid(x*w_gate + b_gate)).
struct TimeBlockParams {
  Tensor w_value, b_value;
  Tensor w_gate, b_gate;
  Tensor w_res, b_res;
};

struct StGcnParams {
  TimeBlockParams head;
  Tensor theta;  ///< (C1, C1) graph-convolution projection
  TimeBlockParams tail;
  Tensor gamma, beta;
  ad::BatchNormStats stats;
};

struct OutputParams {
  Tensor w_time, b_time;  ///< kernel spans the remaining temporal length
  Tensor w_proj, b_proj;  ///< 1x1 projection to n destination channels
};

struct ModelParams {
  StGcnParams blocks[2];
  OutputParams output;

  /// Glorot-uniform weights, zero biases, gamma = 1, beta = 0.
  static ModelParams init(const ModelConfig& config);

  std::vector<std::pair<std::string, Tensor>> named_learnable() const;
  std::vector<Tensor> learnable() const;
};

Tensor time_block(const Tensor& x, const TimeBlockParams& p);
Tensor spatial_block(const Tensor& x, const NormalizedAdjacency& m, const Tensor& theta);
Tensor st_gcn_block(const Tensor& x, const NormalizedAdjacency& m, StGcnParams& p, Mode mode, double eps = 1e-5);

/// CrowdNet: two ST-GCN blocks and an output layer mapping a k-step OD
/// history to the next OD matrix. Inputs and outputs of forward() are in
/// scaled units (raw flow / scale).
class CrowdNet {
 public:
  CrowdNet(ModelConfig config, const flow::Adjacency& adjacency);

  const ModelConfig& config() const { return config_; }
  const flow::Adjacency& adjacency() const { return adjacency_; }
  const NormalizedAdjacency& normalized() const { return normalized_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  double scale() const { return scale_; }
  void set_scale(double s);

  /// x (batch, k, n, n) with x[b, t, i, j] = flow i -> j -> Y (batch, 1, n, n).
  Tensor forward(const Tensor& x, Mode mode);

  /// Eval-mode predictions in raw flow units, one n*n block per window.
  std::vector<double> predict(const std::vector<flow::Window>& windows, std::size_t chunk = 64);

  /// Learnable tensors, batch-norm running statistics, scale and adjacency.
  ad::NamedTensors state() const;
  void load_state(const ad::NamedTensors& state);
  static CrowdNet from_state(ModelConfig config, const ad::NamedTensors& state);

 private:
  ModelConfig config_;
  flow::Adjacency adjacency_;
  NormalizedAdjacency normalized_;
  ModelParams params_;
  double scale_ = 1.0;
};

struct CrowdPrediction {
  std::size_t batch = 0;
  std::size_t n = 0;
  std::vector<double> inflow;   ///< (batch, n)
  std::vector<double> outflow;  ///< (batch, n)
};

/// Column/row sums of each predicted OD slice after clamping negatives to 0.
CrowdPrediction aggregate_to_crowd(const Tensor& y, bool include_self = false);
/// Same rule over raw (batch, n, n) blocks.
CrowdPrediction aggregate_to_crowd(const std::vector<double>& od, std::size_t n, bool include_self = false);

struct TrainConfig {
  std::size_t epochs = 150;
  std::size_t batch_size = 16;
  ad::RmsPropOptions optimizer{};
  std::size_t patience = 10;
  double min_delta = 1e-6;
  std::uint64_t seed = 0;
  /// Divide data by the training maximum before fitting.
  bool fit_scale = true;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mse = 0.0;  ///< raw flow units
  double val_mse = 0.0;    ///< raw flow units; monitors train when no validation windows
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_monitor = 0.0;
  bool stopped_early = false;
};

/// Mini-batch RMSprop on MSE with validation-based early stopping; the model
/// ends holding the parameters of the best monitored epoch.
TrainHistory train(CrowdNet& model, const std::vector<flow::Window>& train_windows,
                   const std::vector<flow::Window>& val_windows, const TrainConfig& config,
                   const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Eval-mode MSE over windows in raw units.
double evaluate_mse(CrowdNet& model, const std::vector<flow::Window>& windows);

}  // namespace flowcast::model
