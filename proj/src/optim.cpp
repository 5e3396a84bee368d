#include "flowcast/optim.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "flowcast/error.hpp"
#include "flowcast/io.hpp"

namespace flowcast::ad {

void rmsprop_step(std::vector<Tensor>& params, OptimizerState& state) {
  const auto& opt = state.options;
  if (!(opt.lr > 0.0)) throw Error("RMSprop learning rate must be positive");
  if (state.square_avg.size() != params.size()) {
    state.square_avg.resize(params.size());
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& param = params[p];
    auto& s = state.square_avg[p];
    if (s.size() != param.numel()) {
      if (!s.empty()) throw Error("RMSprop state does not match parameter " + std::to_string(p));
      s.assign(param.numel(), 0.0);
    }
    if (!param.has_grad()) continue;
    const auto g = param.grad();
    auto v = param.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      s[i] = opt.rho * s[i] + (1.0 - opt.rho) * g[i] * g[i];
      v[i] -= opt.lr * g[i] / (std::sqrt(s[i]) + opt.eps);
    }
  }
}

RmsProp::RmsProp(std::vector<Tensor> params, RmsPropOptions options) : params_(std::move(params)) {
  state_.options = options;
  state_.square_avg.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) state_.square_avg[i].assign(params_[i].numel(), 0.0);
}

void RmsProp::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::string encode_checkpoint(const NamedTensors& tensors) {
  std::ostringstream out(std::ios::binary);
  out.write("CNW1", 4);
  io::le::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    io::le::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    io::le::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) io::le::put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.values()) io::le::put_f64(out, v);
  }
  return out.str();
}

NamedTensors decode_checkpoint(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "CNW1", 4) != 0) throw Error("not a CNW1 checkpoint (bad magic)");
  const std::uint32_t count = io::le::get_u32(in);
  NamedTensors out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = io::le::get_u32(in);
    if (len > bytes.size()) throw Error("corrupt CNW1 checkpoint: name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw Error("corrupt CNW1 checkpoint: truncated name");
    const std::uint32_t rank = io::le::get_u32(in);
    Shape shape(rank);
    for (auto& d : shape) d = io::le::get_u32(in);
    std::vector<double> values(numel(shape));
    for (auto& v : values) v = io::le::get_f64(in);
    out.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
  }
  return out;
}

void save_checkpoint(const NamedTensors& tensors, const std::string& path) {
  io::write_text_file(path, encode_checkpoint(tensors));
}

NamedTensors load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_text_file(path)); }

}  // namespace flowcast::ad
