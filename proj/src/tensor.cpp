#include "flowcast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <Eigen/Dense>

#include "flowcast/error.hpp"

namespace flowcast::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using CMapRM = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using CStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

using NodePtr = std::shared_ptr<Node>;

Tensor make_result(Shape shape, std::vector<double> value, std::vector<NodePtr> parents, const char* op,
                   std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  const bool needs = std::any_of(parents.begin(), parents.end(), [](const NodePtr& p) { return p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(bw);
  }
  return Tensor(std::move(node));
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

// Per-operand strides over the broadcast output shape (0 on broadcast axes).
struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
  bool same = false;
};

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const std::size_t r = std::max(a.size(), b.size());
  p.out.assign(r, 1);
  p.stride_a.assign(r, 0);
  p.stride_b.assign(r, 0);
  auto dim_at = [r](const Shape& s, std::size_t i) -> std::size_t {
    const std::size_t off = r - s.size();
    return i < off ? 1 : s[i - off];
  };
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = dim_at(a, i);
    const std::size_t db = dim_at(b, i);
    if (da != db && da != 1 && db != 1) {
      throw Error(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) + " do not broadcast");
    }
    p.out[i] = std::max(da, db);
  }
  std::size_t sa = 1, sb = 1;
  for (std::size_t i = r; i-- > 0;) {
    const std::size_t da = dim_at(a, i);
    const std::size_t db = dim_at(b, i);
    p.stride_a[i] = da == 1 ? 0 : sa;
    p.stride_b[i] = db == 1 ? 0 : sb;
    sa *= da;
    sb *= db;
  }
  return p;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void for_each_broadcast(const Broadcast& p, F&& f) {
  const std::size_t total = numel(p.out);
  if (p.same) {
    for (std::size_t i = 0; i < total; ++i) f(i, i, i);
    return;
  }
  const std::size_t r = p.out.size();
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < total; ++o) {
    f(o, ia, ib);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      ia += p.stride_a[d];
      ib += p.stride_b[d];
      if (idx[d] < p.out[d]) break;
      ia -= p.stride_a[d] * idx[d];
      ib -= p.stride_b[d] * idx[d];
      idx[d] = 0;
    }
  }
}

template <typename Fwd, typename DA, typename DB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, DA da, DB db) {
  const Broadcast plan = plan_broadcast(a.shape(), b.shape(), op);
  std::vector<double> out(numel(plan.out));
  const auto av = a.values();
  const auto bv = b.values();
  for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = fwd(av[i], bv[j]); });
  NodePtr an = a.node();
  NodePtr bn = b.node();
  return make_result(plan.out, std::move(out), {an, bn}, op, [an, bn, plan, da, db](Node& self) {
    if (an->requires_grad) an->ensure_grad();
    if (bn->requires_grad) bn->ensure_grad();
    for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
      const double g = self.grad[o];
      if (an->requires_grad) an->grad[i] += g * da(an->value[i], bn->value[j]);
      if (bn->requires_grad) bn->grad[j] += g * db(an->value[i], bn->value[j]);
    });
  });
}

template <typename Fwd, typename Deriv>
Tensor unary_op(const Tensor& x, const char* op, Fwd fwd, Deriv deriv) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  NodePtr xn = x.node();
  return make_result(x.shape(), std::move(out), {xn}, op, [xn, deriv](Node& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * deriv(xn->value[i], self.value[i]);
  });
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  if (shape.size() == 1) os << ',';
  os << ')';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  for (auto d : shape) require(d > 0, "tensor dimensions must be positive, got " + shape_str(shape));
  std::vector<double> v(ad::numel(shape), value);
  return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  require(values.size() == ad::numel(shape),
          "tensor of shape " + shape_str(shape) + " needs " + std::to_string(ad::numel(shape)) + " values, got " +
              std::to_string(values.size()));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

double Tensor::item() const {
  require(numel() == 1, "item() on a tensor with " + std::to_string(numel()) + " elements");
  return node_->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  require(index.size() == rank(), "index rank does not match tensor rank");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    require(i < node_->shape[axis], "index out of range");
    flat = flat * node_->shape[axis] + i;
    ++axis;
  }
  return node_->value[flat];
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "hadamard", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_op(
      a, "scale", [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, "sigmoid",
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() >= 2 && b.rank() == 2,
          "matmul expects (..., p, q) x (q, r), got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::size_t q = a.shape().back();
  require(q == b.dim(0), "matmul inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t rows = a.numel() / q;
  const std::size_t r = b.dim(1);
  Shape out_shape = a.shape();
  out_shape.back() = r;

  std::vector<double> out(rows * r);
  const auto ri = static_cast<Eigen::Index>(rows);
  const auto qi = static_cast<Eigen::Index>(q);
  const auto rr = static_cast<Eigen::Index>(r);
  MapRM(out.data(), ri, rr).noalias() = CMapRM(a.values().data(), ri, qi) * CMapRM(b.values().data(), qi, rr);

  NodePtr an = a.node();
  NodePtr bn = b.node();
  return make_result(std::move(out_shape), std::move(out), {an, bn}, "matmul", [an, bn, ri, qi, rr](Node& self) {
    CMapRM g(self.grad.data(), ri, rr);
    if (an->requires_grad) {
      an->ensure_grad();
      MapRM(an->grad.data(), ri, qi).noalias() += g * CMapRM(bn->value.data(), qi, rr).transpose();
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      MapRM(bn->grad.data(), qi, rr).noalias() += CMapRM(an->value.data(), ri, qi).transpose() * g;
    }
  });
}

Tensor temporal_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require(x.rank() == 4, "temporal_conv1d expects x of shape (batch, C_in, T, n), got " + shape_str(x.shape()));
  require(w.rank() == 3, "temporal_conv1d expects w of shape (C_out, C_in, K_t), got " + shape_str(w.shape()));
  const std::size_t batch = x.dim(0), cin = x.dim(1), t_in = x.dim(2), nodes = x.dim(3);
  const std::size_t cout = w.dim(0), kt = w.dim(2);
  require(w.dim(1) == cin, "temporal_conv1d channel mismatch: x " + shape_str(x.shape()) + ", w " + shape_str(w.shape()));
  require(bias.numel() == cout, "temporal_conv1d bias must have C_out = " + std::to_string(cout) + " entries");
  require(t_in >= kt, "temporal_conv1d: sequence length " + std::to_string(t_in) + " is shorter than kernel " +
                          std::to_string(kt));
  const std::size_t t_out = t_in - kt + 1;

  // Per-tap weight slices W_k (C_out x C_in).
  std::vector<RowMat> taps(kt, RowMat(cout, cin));
  const auto wv = w.values();
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t k = 0; k < kt; ++k) taps[k](o, c) = wv[(o * cin + c) * kt + k];

  const auto ci = static_cast<Eigen::Index>(cin);
  const auto co = static_cast<Eigen::Index>(cout);
  const auto span_out = static_cast<Eigen::Index>(t_out * nodes);
  const auto row_in = static_cast<Eigen::Index>(t_in * nodes);

  std::vector<double> out(batch * cout * t_out * nodes);
  const auto xv = x.values();
  const auto bv = bias.values();
  for (std::size_t b = 0; b < batch; ++b) {
    MapRM ob(out.data() + b * cout * t_out * nodes, co, span_out);
    for (Eigen::Index o = 0; o < co; ++o) ob.row(o).setConstant(bv[static_cast<std::size_t>(o)]);
    const double* xb = xv.data() + b * cin * t_in * nodes;
    for (std::size_t k = 0; k < kt; ++k) {
      ob.noalias() += taps[k] * CStridedMap(xb + k * nodes, ci, span_out, Eigen::OuterStride<>(row_in));
    }
  }

  NodePtr xn = x.node();
  NodePtr wn = w.node();
  NodePtr bn = bias.node();
  return make_result(
      {batch, cout, t_out, nodes}, std::move(out), {xn, wn, bn}, "temporal_conv1d",
      [xn, wn, bn, taps = std::move(taps), batch, cin, cout, kt, nodes, t_in, t_out](Node& self) {
        const auto ci = static_cast<Eigen::Index>(cin);
        const auto co = static_cast<Eigen::Index>(cout);
        const auto span_out = static_cast<Eigen::Index>(t_out * nodes);
        const auto row_in = static_cast<Eigen::Index>(t_in * nodes);
        std::vector<RowMat> dtaps;
        if (wn->requires_grad) dtaps.assign(kt, RowMat::Zero(co, ci));
        if (xn->requires_grad) xn->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (std::size_t b = 0; b < batch; ++b) {
          CMapRM gb(self.grad.data() + b * cout * t_out * nodes, co, span_out);
          if (bn->requires_grad) {
            for (Eigen::Index o = 0; o < co; ++o) bn->grad[static_cast<std::size_t>(o)] += gb.row(o).sum();
          }
          for (std::size_t k = 0; k < kt; ++k) {
            if (wn->requires_grad) {
              const double* xb = xn->value.data() + b * cin * t_in * nodes;
              dtaps[k].noalias() +=
                  gb * CStridedMap(xb + k * nodes, ci, span_out, Eigen::OuterStride<>(row_in)).transpose();
            }
            if (xn->requires_grad) {
              double* dxb = xn->grad.data() + b * cin * t_in * nodes;
              StridedMap(dxb + k * nodes, ci, span_out, Eigen::OuterStride<>(row_in)).noalias() +=
                  taps[k].transpose() * gb;
            }
          }
        }
        if (wn->requires_grad) {
          wn->ensure_grad();
          for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t c = 0; c < cin; ++c)
              for (std::size_t k = 0; k < kt; ++k)
                wn->grad[(o * cin + c) * kt + k] += dtaps[k](static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(c));
        }
      });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const std::size_t r = x.rank();
  require(axes.size() == r, "permute: axes count does not match rank of " + shape_str(x.shape()));
  std::vector<bool> seen(r, false);
  for (auto a : axes) {
    require(a < r && !seen[a], "permute: axes must be a permutation");
    seen[a] = true;
  }
  Shape out_shape(r);
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * x.dim(i);
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = x.dim(axes[i]);
    src_stride[i] = in_stride[axes[i]];
  }
  // Gather index for every output element.
  const std::size_t total = x.numel();
  std::vector<std::size_t> gather(total);
  {
    std::vector<std::size_t> idx(r, 0);
    std::size_t src = 0;
    for (std::size_t o = 0; o < total; ++o) {
      gather[o] = src;
      for (std::size_t d = r; d-- > 0;) {
        ++idx[d];
        src += src_stride[d];
        if (idx[d] < out_shape[d]) break;
        src -= src_stride[d] * idx[d];
        idx[d] = 0;
      }
    }
  }
  std::vector<double> out(total);
  const auto xv = x.values();
  for (std::size_t o = 0; o < total; ++o) out[o] = xv[gather[o]];
  NodePtr xn = x.node();
  return make_result(std::move(out_shape), std::move(out), {xn}, "permute", [xn, gather = std::move(gather)](Node& self) {
    xn->ensure_grad();
    for (std::size_t o = 0; o < gather.size(); ++o) xn->grad[gather[o]] += self.grad[o];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(numel(shape) == x.numel(), "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  NodePtr xn = x.node();
  std::vector<double> v(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(v), {xn}, "reshape", [xn](Node& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  const auto xv = x.values();
  const double s = std::accumulate(xv.begin(), xv.end(), 0.0);
  NodePtr xn = x.node();
  return make_result({}, {s}, {xn}, "sum", [xn](Node& self) {
    xn->ensure_grad();
    for (auto& g : xn->grad) g += self.grad[0];
  });
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  require(pred.shape() == target.shape(),
          "mse: shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  const auto pv = pred.values();
  const auto tv = target.values();
  const auto count = static_cast<double>(pv.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = pv[i] - tv[i];
    acc += d * d;
  }
  NodePtr pn = pred.node();
  NodePtr tn = target.node();
  return make_result({}, {acc / count}, {pn, tn}, "mse", [pn, tn, count](Node& self) {
    const double g = self.grad[0] * 2.0 / count;
    if (pn->requires_grad) pn->ensure_grad();
    if (tn->requires_grad) tn->ensure_grad();
    for (std::size_t i = 0; i < pn->value.size(); ++i) {
      const double d = g * (pn->value[i] - tn->value[i]);
      if (pn->requires_grad) pn->grad[i] += d;
      if (tn->requires_grad) tn->grad[i] -= d;
    }
  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, Mode mode,
                  double eps) {
  require(x.rank() == 4, "batch_norm expects (batch, C, T, n), got " + shape_str(x.shape()));
  require(eps > 0.0, "batch_norm epsilon must be positive");
  const std::size_t batch = x.dim(0), ch = x.dim(1), inner = x.dim(2) * x.dim(3);
  require(gamma.numel() == ch && beta.numel() == ch, "batch_norm: gamma/beta need one entry per channel");
  require(stats.running_mean.size() == ch && stats.running_var.size() == ch,
          "batch_norm: running statistics do not match the channel count");
  const auto count = static_cast<double>(batch * inner);
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();

  std::vector<double> mean(ch, 0.0), inv_std(ch, 0.0);
  if (mode == Mode::train) {
    for (std::size_t c = 0; c < ch; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = xv.data() + (b * ch + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) s += p[i];
      }
      const double mu = s / count;
      double v = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = xv.data() + (b * ch + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) v += (p[i] - mu) * (p[i] - mu);
      }
      v /= count;
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(v + eps);
      stats.running_mean[c] = (1.0 - stats.momentum) * stats.running_mean[c] + stats.momentum * mu;
      stats.running_var[c] = (1.0 - stats.momentum) * stats.running_var[c] + stats.momentum * v;
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mean[c] = stats.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.running_var[c] + eps);
    }
  }

  std::vector<double> xhat(xv.size()), out(xv.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t base = (b * ch + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        xhat[base + i] = (xv[base + i] - mean[c]) * inv_std[c];
        out[base + i] = xhat[base + i] * gv[c] + bv[c];
      }
    }
  }

  NodePtr xn = x.node();
  NodePtr gn = gamma.node();
  NodePtr bn = beta.node();
  const bool training = mode == Mode::train;
  return make_result(x.shape(), std::move(out), {xn, gn, bn}, "batch_norm",
                     [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), batch, ch, inner, count,
                      training](Node& self) {
                       std::vector<double> sum_g(ch, 0.0), sum_gx(ch, 0.0);
                       for (std::size_t b = 0; b < batch; ++b) {
                         for (std::size_t c = 0; c < ch; ++c) {
                           const std::size_t base = (b * ch + c) * inner;
                           for (std::size_t i = 0; i < inner; ++i) {
                             sum_g[c] += self.grad[base + i];
                             sum_gx[c] += self.grad[base + i] * xhat[base + i];
                           }
                         }
                       }
                       if (gn->requires_grad) {
                         gn->ensure_grad();
                         for (std::size_t c = 0; c < ch; ++c) gn->grad[c] += sum_gx[c];
                       }
                       if (bn->requires_grad) {
                         bn->ensure_grad();
                         for (std::size_t c = 0; c < ch; ++c) bn->grad[c] += sum_g[c];
                       }
                       if (!xn->requires_grad) return;
                       xn->ensure_grad();
                       for (std::size_t b = 0; b < batch; ++b) {
                         for (std::size_t c = 0; c < ch; ++c) {
                           const std::size_t base = (b * ch + c) * inner;
                           const double k = gn->value[c] * inv_std[c];
                           for (std::size_t i = 0; i < inner; ++i) {
                             const double g = self.grad[base + i];
                             if (training) {
                               xn->grad[base + i] +=
                                   k * (g - sum_g[c] / count - xhat[base + i] * sum_gx[c] / count);
                             } else {
                               xn->grad[base + i] += k * g;
                             }
                           }
                         }
                       }
                     });
}

void backward(const Tensor& loss) {
  require(loss.defined() && loss.numel() == 1,
          "backward() needs a scalar loss, got shape " + (loss.defined() ? shape_str(loss.shape()) : "<undefined>"));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) {
    if (node->backward) node->grad.assign(node->value.size(), 0.0);
  }
  Node* root = loss.node().get();
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

}  // namespace flowcast::ad
