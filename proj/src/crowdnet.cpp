#include "flowcast/crowdnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "flowcast/error.hpp"

namespace flowcast::model {

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Tensor glorot(ad::Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = (2.0 * uniform01(rng) - 1.0) * limit;
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor zeros_param(ad::Shape shape) { return Tensor::zeros(std::move(shape), true); }

TimeBlockParams init_time_block(std::size_t cin, std::size_t cout, std::size_t kt, std::mt19937_64& rng) {
  TimeBlockParams p;
  p.w_value = glorot({cout, cin, kt}, cin * kt, cout * kt, rng);
  p.b_value = zeros_param({cout});
  p.w_gate = glorot({cout, cin, kt}, cin * kt, cout * kt, rng);
  p.b_gate = zeros_param({cout});
  p.w_res = glorot({cout, cin, kt}, cin * kt, cout * kt, rng);
  p.b_res = zeros_param({cout});
  return p;
}

void push_time_block(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
                     const TimeBlockParams& p) {
  out.emplace_back(prefix + ".w_value", p.w_value);
  out.emplace_back(prefix + ".b_value", p.b_value);
  out.emplace_back(prefix + ".w_gate", p.w_gate);
  out.emplace_back(prefix + ".b_gate", p.b_gate);
  out.emplace_back(prefix + ".w_res", p.w_res);
  out.emplace_back(prefix + ".b_res", p.b_res);
}

Tensor adjacency_transposed(const NormalizedAdjacency& m) {
  std::vector<double> t(m.n * m.n);
  for (std::size_t i = 0; i < m.n; ++i)
    for (std::size_t j = 0; j < m.n; ++j) t[j * m.n + i] = m.at(i, j);
  return Tensor::from({m.n, m.n}, std::move(t));
}

// Stacks window histories/targets into (batch, k, n, n) / (batch, l, n, n),
// divided by `scale`.
Tensor stack_history(const std::vector<const flow::Window*>& batch, std::size_t k, std::size_t n, double scale) {
  std::vector<double> v;
  v.reserve(batch.size() * k * n * n);
  for (const auto* w : batch)
    for (double x : w->history) v.push_back(x / scale);
  return Tensor::from({batch.size(), k, n, n}, std::move(v));
}

Tensor stack_target(const std::vector<const flow::Window*>& batch, std::size_t n, double scale) {
  std::vector<double> v;
  v.reserve(batch.size() * n * n);
  for (const auto* w : batch)
    for (std::size_t i = 0; i < n * n; ++i) v.push_back(w->target[i] / scale);
  return Tensor::from({batch.size(), 1, n, n}, std::move(v));
}

struct Snapshot {
  std::vector<std::vector<double>> values;
};

}  // namespace

NormalizedAdjacency normalize_adjacency(const flow::Adjacency& a, bool symmetrize) {
  const std::size_t n = a.n;
  if (n == 0 || a.a.size() != n * n) throw Error("normalize_adjacency: malformed adjacency");
  std::vector<double> hat(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const bool edge = symmetrize ? (a.at(i, j) || a.at(j, i)) : a.at(i, j) != 0;
      hat[i * n + j] = edge ? 1.0 : 0.0;
    }
    hat[i * n + i] = 1.0;
  }
  std::vector<double> degree(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) degree[i] += hat[i * n + j];
  NormalizedAdjacency out{n, std::vector<double>(n * n, 0.0)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out.m[i * n + j] = hat[i * n + j] / std::sqrt(degree[i] * degree[j]);
  return out;
}

long long ModelConfig::final_temporal_length() const {
  return static_cast<long long>(k) - 4 * (static_cast<long long>(kernel_t) - 1);
}

void ModelConfig::validate() const {
  if (n == 0) throw Error("model config: n must be at least 1");
  if (kernel_t == 0) throw Error("model config: temporal kernel K_t must be at least 1");
  if (hidden_channels == 0 || block_channels == 0) throw Error("model config: channel widths must be positive");
  if (horizon != 1) throw Error("model config: only horizon l = 1 is supported");
  if (!(bn_eps > 0.0)) throw Error("model config: batch-norm epsilon must be positive");
  if (final_temporal_length() < 1) {
    throw Error("model config: history length k = " + std::to_string(k) + " must exceed 4*(K_t-1) = " +
                std::to_string(4 * (kernel_t - 1)) + " so the output layer keeps at least one time step");
  }
}

ModelParams ModelParams::init(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const std::size_t kt = config.kernel_t;
  const std::size_t c1 = config.hidden_channels;
  const std::size_t c2 = config.block_channels;
  ModelParams p;
  std::size_t cin = config.n;
  for (auto& block : p.blocks) {
    block.head = init_time_block(cin, c1, kt, rng);
    block.theta = glorot({c1, c1}, c1, c1, rng);
    block.tail = init_time_block(c1, c2, kt, rng);
    block.gamma = Tensor::full({c2}, 1.0, true);
    block.beta = zeros_param({c2});
    block.stats = ad::BatchNormStats(c2);
    cin = c2;
  }
  const auto t_rem = static_cast<std::size_t>(config.final_temporal_length());
  p.output.w_time = glorot({c2, c2, t_rem}, c2 * t_rem, c2 * t_rem, rng);
  p.output.b_time = zeros_param({c2});
  p.output.w_proj = glorot({config.n, c2, 1}, c2, config.n, rng);
  p.output.b_proj = zeros_param({config.n});
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_learnable() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t b = 0; b < 2; ++b) {
    const std::string prefix = "block" + std::to_string(b);
    push_time_block(out, prefix + ".head", blocks[b].head);
    out.emplace_back(prefix + ".theta", blocks[b].theta);
    push_time_block(out, prefix + ".tail", blocks[b].tail);
    out.emplace_back(prefix + ".bn.gamma", blocks[b].gamma);
    out.emplace_back(prefix + ".bn.beta", blocks[b].beta);
  }
  out.emplace_back("output.w_time", output.w_time);
  out.emplace_back("output.b_time", output.b_time);
  out.emplace_back("output.w_proj", output.w_proj);
  out.emplace_back("output.b_proj", output.b_proj);
  return out;
}

std::vector<Tensor> ModelParams::learnable() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_learnable()) out.push_back(t);
  return out;
}

Tensor time_block(const Tensor& x, const TimeBlockParams& p) {
  const Tensor value = ad::temporal_conv1d(x, p.w_value, p.b_value);
  const Tensor gate = ad::sigmoid(ad::temporal_conv1d(x, p.w_gate, p.b_gate));
  const Tensor residual = ad::temporal_conv1d(x, p.w_res, p.b_res);
  return ad::relu(ad::add(residual, ad::hadamard(value, gate)));
}

Tensor spatial_block(const Tensor& x, const NormalizedAdjacency& m, const Tensor& theta) {
  if (x.rank() != 4) throw Error("spatial_block expects (batch, C, T, n), got " + ad::shape_str(x.shape()));
  if (x.dim(3) != m.n) {
    throw Error("spatial_block: input has " + std::to_string(x.dim(3)) + " nodes but the adjacency has " +
                std::to_string(m.n));
  }
  if (theta.rank() != 2 || theta.dim(0) != x.dim(1)) {
    throw Error("spatial_block: theta " + ad::shape_str(theta.shape()) + " does not match " +
                std::to_string(x.dim(1)) + " input channels");
  }
  // (B,C,T,N) -> (B,T,C,N); mixing nodes is a right product with m^T.
  const Tensor mixed = ad::matmul(ad::permute(x, {0, 2, 1, 3}), adjacency_transposed(m));
  // (B,T,C,N) -> (B,T,N,C) x theta -> (B,T,N,O) -> (B,O,T,N)
  const Tensor projected = ad::matmul(ad::permute(mixed, {0, 1, 3, 2}), theta);
  return ad::relu(ad::permute(projected, {0, 3, 1, 2}));
}

Tensor st_gcn_block(const Tensor& x, const NormalizedAdjacency& m, StGcnParams& p, Mode mode, double eps) {
  const Tensor h = time_block(x, p.head);
  const Tensor s = spatial_block(h, m, p.theta);
  const Tensor t = time_block(s, p.tail);
  return ad::batch_norm(t, p.gamma, p.beta, p.stats, mode, eps);
}

CrowdNet::CrowdNet(ModelConfig config, const flow::Adjacency& adjacency)
    : config_(config), adjacency_(adjacency) {
  config_.validate();
  if (adjacency.n != config_.n) {
    throw Error("CrowdNet: adjacency has " + std::to_string(adjacency.n) + " nodes, config expects " +
                std::to_string(config_.n));
  }
  normalized_ = normalize_adjacency(adjacency_, config_.symmetrize);
  params_ = ModelParams::init(config_);
}

void CrowdNet::set_scale(double s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw Error("CrowdNet: data scale must be positive and finite");
  scale_ = s;
}

Tensor CrowdNet::forward(const Tensor& x, Mode mode) {
  const std::size_t n = config_.n;
  if (x.rank() != 4 || x.dim(1) != config_.k || x.dim(2) != n || x.dim(3) != n) {
    throw Error("CrowdNet::forward expects (batch, " + std::to_string(config_.k) + ", " + std::to_string(n) + ", " +
                std::to_string(n) + "), got " + ad::shape_str(x.shape()));
  }
  // Node i carries its outgoing-flow row as channels: (B,k,i,j) -> (B,j,k,i).
  Tensor h = ad::permute(x, {0, 3, 1, 2});
  for (auto& block : params_.blocks) h = st_gcn_block(h, normalized_, block, mode, config_.bn_eps);
  h = ad::relu(ad::temporal_conv1d(h, params_.output.w_time, params_.output.b_time));
  h = ad::temporal_conv1d(h, params_.output.w_proj, params_.output.b_proj);  // (B, n_dest, 1, n_origin)
  return ad::permute(h, {0, 2, 3, 1});
}

std::vector<double> CrowdNet::predict(const std::vector<flow::Window>& windows, std::size_t chunk) {
  const std::size_t n = config_.n;
  std::vector<double> out;
  out.reserve(windows.size() * n * n);
  chunk = std::max<std::size_t>(1, chunk);
  for (std::size_t start = 0; start < windows.size(); start += chunk) {
    std::vector<const flow::Window*> batch;
    for (std::size_t i = start; i < std::min(windows.size(), start + chunk); ++i) batch.push_back(&windows[i]);
    const Tensor y = forward(stack_history(batch, config_.k, n, scale_), Mode::eval);
    for (double v : y.values()) out.push_back(v * scale_);
  }
  return out;
}

ad::NamedTensors CrowdNet::state() const {
  ad::NamedTensors out;
  for (auto& [name, t] : params_.named_learnable()) out.emplace_back(name, t);
  for (std::size_t b = 0; b < 2; ++b) {
    const auto& st = params_.blocks[b].stats;
    const std::string prefix = "block" + std::to_string(b) + ".bn.";
    out.emplace_back(prefix + "running_mean", Tensor::from({st.running_mean.size()}, st.running_mean));
    out.emplace_back(prefix + "running_var", Tensor::from({st.running_var.size()}, st.running_var));
  }
  out.emplace_back("data.scale", Tensor::from({1}, {scale_}));
  std::vector<double> adj(adjacency_.a.begin(), adjacency_.a.end());
  out.emplace_back("graph.adjacency", Tensor::from({adjacency_.n, adjacency_.n}, std::move(adj)));
  return out;
}

void CrowdNet::load_state(const ad::NamedTensors& state) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : state) by_name[name] = &t;
  auto fetch = [&](const std::string& name, const ad::Shape& shape) -> const Tensor& {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw Error("checkpoint lacks tensor '" + name + "'");
    if (it->second->shape() != shape) {
      throw Error("checkpoint tensor '" + name + "' has shape " + ad::shape_str(it->second->shape()) + ", expected " +
                  ad::shape_str(shape));
    }
    return *it->second;
  };
  for (auto& [name, t] : params_.named_learnable()) {
    const Tensor& src = fetch(name, t.shape());
    Tensor dst = t;
    std::copy(src.values().begin(), src.values().end(), dst.mutable_values().begin());
  }
  for (std::size_t b = 0; b < 2; ++b) {
    auto& st = params_.blocks[b].stats;
    const std::string prefix = "block" + std::to_string(b) + ".bn.";
    const Tensor& mean = fetch(prefix + "running_mean", {st.running_mean.size()});
    const Tensor& var = fetch(prefix + "running_var", {st.running_var.size()});
    st.running_mean.assign(mean.values().begin(), mean.values().end());
    st.running_var.assign(var.values().begin(), var.values().end());
  }
  set_scale(fetch("data.scale", {1}).item());
  const Tensor& adj = fetch("graph.adjacency", {config_.n, config_.n});
  for (std::size_t i = 0; i < adjacency_.a.size(); ++i) adjacency_.a[i] = adj.values()[i] != 0.0 ? 1 : 0;
  normalized_ = normalize_adjacency(adjacency_, config_.symmetrize);
}

CrowdNet CrowdNet::from_state(ModelConfig config, const ad::NamedTensors& state) {
  flow::Adjacency placeholder{config.n, std::vector<std::uint8_t>(config.n * config.n, 0)};
  CrowdNet net(config, placeholder);
  net.load_state(state);
  return net;
}

CrowdPrediction aggregate_to_crowd(const std::vector<double>& od, std::size_t n, bool include_self) {
  if (n == 0 || od.size() % (n * n) != 0) throw Error("aggregate_to_crowd: data is not a stack of n x n slices");
  CrowdPrediction c;
  c.n = n;
  c.batch = od.size() / (n * n);
  c.inflow.assign(c.batch * n, 0.0);
  c.outflow.assign(c.batch * n, 0.0);
  for (std::size_t b = 0; b < c.batch; ++b) {
    const double* slice = od.data() + b * n * n;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j && !include_self) continue;
        const double v = std::max(0.0, slice[i * n + j]);
        c.outflow[b * n + i] += v;
        c.inflow[b * n + j] += v;
      }
    }
  }
  return c;
}

CrowdPrediction aggregate_to_crowd(const Tensor& y, bool include_self) {
  if (y.rank() != 4 || y.dim(1) != 1 || y.dim(2) != y.dim(3)) {
    throw Error("aggregate_to_crowd expects (batch, 1, n, n), got " + ad::shape_str(y.shape()));
  }
  return aggregate_to_crowd(std::vector<double>(y.values().begin(), y.values().end()), y.dim(2), include_self);
}

double evaluate_mse(CrowdNet& model, const std::vector<flow::Window>& windows) {
  if (windows.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::vector<double> pred = model.predict(windows);
  const std::size_t nn = model.config().n * model.config().n;
  double acc = 0.0;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    for (std::size_t i = 0; i < nn; ++i) {
      const double d = pred[w * nn + i] - windows[w].target[i];
      acc += d * d;
    }
  }
  return acc / static_cast<double>(windows.size() * nn);
}

TrainHistory train(CrowdNet& model, const std::vector<flow::Window>& train_windows,
                   const std::vector<flow::Window>& val_windows, const TrainConfig& config,
                   const std::function<void(const EpochRecord&)>& on_epoch) {
  if (train_windows.empty()) throw Error("train: no training windows");
  if (config.batch_size == 0) throw Error("train: batch size must be positive");
  if (config.epochs == 0) throw Error("train: epochs must be positive");
  const std::size_t n = model.config().n;
  const std::size_t k = model.config().k;
  for (const auto& w : train_windows) {
    if (w.history.size() != k * n * n || w.target.size() < n * n) throw Error("train: window shape does not match the model");
  }

  if (config.fit_scale) {
    double peak = 0.0;
    for (const auto& w : train_windows) {
      for (double v : w.history) peak = std::max(peak, std::abs(v));
      for (double v : w.target) peak = std::max(peak, std::abs(v));
    }
    model.set_scale(peak > 0.0 ? peak : 1.0);
  }
  const double scale = model.scale();
  const double scale2 = scale * scale;

  std::vector<Tensor> params = model.params().learnable();
  ad::RmsProp optimizer(params, config.optimizer);
  std::mt19937_64 rng(config.seed ^ 0x5DEECE66DULL);

  auto snapshot = [&model]() {
    Snapshot s;
    for (const auto& [name, t] : model.state()) s.values.emplace_back(t.values().begin(), t.values().end());
    return s;
  };
  auto restore = [&model](const Snapshot& s) {
    ad::NamedTensors st = model.state();
    for (std::size_t i = 0; i < st.size(); ++i) st[i].second = Tensor::from(st[i].second.shape(), s.values[i]);
    model.load_state(st);
  };

  TrainHistory history;
  Snapshot best = snapshot();
  double best_monitor = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;

  std::vector<std::size_t> order(train_windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    // Fisher-Yates with an explicit draw so the order is identical across
    // standard libraries.
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng() % i);
      std::swap(order[i - 1], order[j]);
    }
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      std::vector<const flow::Window*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i) {
        batch.push_back(&train_windows[order[i]]);
      }
      const Tensor x = stack_history(batch, k, n, scale);
      const Tensor y = stack_target(batch, n, scale);
      optimizer.zero_grad();
      const Tensor loss = ad::mse(model.forward(x, Mode::train), y);
      ad::backward(loss);
      optimizer.step();
      loss_sum += loss.item() * static_cast<double>(batch.size());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_mse = loss_sum / static_cast<double>(order.size()) * scale2;
    rec.val_mse = val_windows.empty() ? rec.train_mse : evaluate_mse(model, val_windows);
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (!std::isfinite(rec.val_mse)) {
      history.stopped_early = true;
      break;
    }
    if (rec.val_mse < best_monitor - config.min_delta) {
      best_monitor = rec.val_mse;
      history.best_epoch = epoch;
      best = snapshot();
      bad_epochs = 0;
    } else if (++bad_epochs > config.patience) {
      history.stopped_early = true;
      break;
    }
  }
  history.best_monitor = best_monitor;
  restore(best);
  return history;
}

}  // namespace flowcast::model
