#pragma once

// Dense float64 tensors with tape-free reverse-mode differentiation: every
// result keeps shared links to its parents plus a closure that pushes its
// gradient back to them. backward() orders the reachable graph
// topologically and runs the closures in reverse.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace flowcast::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  ///< sized like value once gradients flow
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  ///< null for leaves
  const char* op = "leaf";

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  /// Mutable access for initialization and optimizer updates; never use on
  /// a tensor whose graph is still awaiting backward().
  std::span<double> mutable_values() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() == node_->value.size() && !node_->value.empty(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;
  const char* op() const { return node_->op; }

  /// Copy of the values as a fresh leaf.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Elementwise. Binary ops broadcast NumPy-style over trailing dimensions.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sigmoid(const Tensor& x);
/// Subgradient at 0 is 0.
Tensor relu(const Tensor& x);

/// (..., p, q) x (q, r) -> (..., p, r); the right operand is a plain matrix.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Valid temporal convolution shared over nodes:
/// x (batch, C_in, T, n), w (C_out, C_in, K_t), bias (C_out)
///   -> (batch, C_out, T - K_t + 1, n).
Tensor temporal_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sum(const Tensor& x);
/// Mean of squared differences over all elements.
Tensor mse(const Tensor& pred, const Tensor& target);

enum class Mode { train, eval };

struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;

  explicit BatchNormStats(std::size_t channels = 0) : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

/// Per-channel normalization of x (batch, C, T, n) over (batch, T, n).
/// Train mode uses the biased batch variance and updates `stats`; eval mode
/// reads `stats`.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, Mode mode,
                  double eps = 1e-5);

/// Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls;
/// interior gradients are recomputed each call.
void backward(const Tensor& loss);

}  // namespace flowcast::ad
