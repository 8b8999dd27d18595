#include "scoremean/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "scoremean/error.hpp"

namespace scoremean {

Mlp::Mlp(std::vector<int> dims) : dims_(std::move(dims)) {
  if (dims_.size() < 2) throw ValidationError("a network needs at least an input and an output layer");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    if (dims_[l] < 1 || dims_[l + 1] < 1) throw ValidationError("layer widths must be positive");
    offsets_.push_back(total);
    total += static_cast<std::size_t>(dims_[l + 1]) * dims_[l] + dims_[l + 1];
  }
  params_.assign(total, 0.0);
}

Mlp Mlp::glorot(std::vector<int> dims, Rng& rng) {
  Mlp net(std::move(dims));
  for (int l = 0; l < net.layers(); ++l) {
    const int fan_in = net.dims_[l];
    const int fan_out = net.dims_[l + 1];
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    double* w = net.params_.data() + net.weight_offset(l);
    for (std::size_t i = 0; i < static_cast<std::size_t>(fan_in) * fan_out; ++i) w[i] = rng.uniform(-a, a);
  }
  return net;
}

void Mlp::prepare(MlpWorkspace& ws, int cols, bool tangent) const {
  ws.cols = cols;
  ws.act.resize(dims_.size());
  for (std::size_t l = 0; l < dims_.size(); ++l) {
    ws.act[l].resize(static_cast<std::size_t>(dims_[l]) * cols);
  }
  if (tangent) {
    ws.zdot.resize(dims_.size());
    for (std::size_t l = 1; l + 1 < dims_.size(); ++l) {
      ws.zdot[l].resize(static_cast<std::size_t>(dims_[l]) * (cols / 2));
    }
  }
  const int widest = *std::max_element(dims_.begin(), dims_.end());
  ws.adj.resize(static_cast<std::size_t>(widest) * cols);
  ws.adj_next.resize(static_cast<std::size_t>(widest) * cols);
  ws.at.resize(static_cast<std::size_t>(widest) * cols);
  std::size_t largest_w = 0;
  for (int l = 0; l < layers(); ++l) largest_w = std::max(largest_w, static_cast<std::size_t>(dims_[l]) * dims_[l + 1]);
  ws.wt.resize(largest_w);
}

void Mlp::forward(const double* x, int cols, MlpWorkspace& ws) const {
  prepare(ws, cols, false);
  const kernels::KernelTable& k = *kernels_;
  std::copy(x, x + static_cast<std::size_t>(dims_[0]) * cols, ws.act[0].begin());
  for (int l = 0; l < layers(); ++l) {
    const int in = dims_[l];
    const int out = dims_[l + 1];
    k.gemm(out, cols, in, params_.data() + weight_offset(l), in, ws.act[l].data(), cols,
           ws.act[l + 1].data(), cols, false);
    k.bias_act(out, cols, params_.data() + bias_offset(l), ws.act[l + 1].data(), cols, l + 1 < layers());
  }
}

void Mlp::forward_tangents(const double* x, int cols, int blocks, MlpWorkspace& ws) const {
  const int wide = cols * blocks;
  prepare(ws, wide, false);
  const kernels::KernelTable& k = *kernels_;
  std::copy(x, x + static_cast<std::size_t>(dims_[0]) * wide, ws.act[0].begin());
  for (int l = 0; l < layers(); ++l) {
    const int in = dims_[l];
    const int out = dims_[l + 1];
    double* a = ws.act[l + 1].data();
    k.gemm(out, wide, in, params_.data() + weight_offset(l), in, ws.act[l].data(), wide, a, wide, false);
    const bool hidden = l + 1 < layers();
    k.bias_act(out, cols, params_.data() + bias_offset(l), a, wide, hidden);
    if (!hidden) continue;
    for (int r = 0; r < out; ++r) {
      double* row = a + static_cast<std::size_t>(r) * wide;
      for (int b = 1; b < blocks; ++b) {
        k.tanh_backward(static_cast<std::size_t>(cols), row, row + static_cast<std::size_t>(b) * cols);
      }
    }
  }
}

void Mlp::backward(MlpWorkspace& ws, const double* d_out, double* grad, double* d_input) const {
  const kernels::KernelTable& k = *kernels_;
  const int cols = ws.cols;
  std::copy(d_out, d_out + static_cast<std::size_t>(output_dim()) * cols, ws.adj.begin());
  for (int l = layers() - 1; l >= 0; --l) {
    const int in = dims_[l];
    const int out = dims_[l + 1];
    if (l + 1 < layers()) k.tanh_backward(static_cast<std::size_t>(out) * cols, ws.act[l + 1].data(), ws.adj.data());
    if (grad != nullptr) {
      k.transpose(in, cols, ws.act[l].data(), cols, ws.at.data(), in);
      k.gemm(out, in, cols, ws.adj.data(), cols, ws.at.data(), in, grad + weight_offset(l), in, true);
      k.row_sums(out, cols, ws.adj.data(), cols, grad + bias_offset(l), true);
    }
    if (l == 0 && d_input == nullptr) break;
    k.transpose(out, in, params_.data() + weight_offset(l), in, ws.wt.data(), out);
    double* dst = l == 0 ? d_input : ws.adj_next.data();
    k.gemm(in, cols, out, ws.wt.data(), out, ws.adj.data(), cols, dst, cols, false);
    if (l > 0) std::swap(ws.adj, ws.adj_next);
  }
}

void Mlp::directional_param_grad(const double* x, const double* xdot, int cols, MlpWorkspace& ws,
                                 double* grad) const {
  if (output_dim() != 1) throw ValidationError("directional parameter gradients need a scalar output");
  const kernels::KernelTable& k = *kernels_;
  const int wide = 2 * cols;
  prepare(ws, wide, true);

  // Forward over [primal | tangent] column blocks.
  for (int r = 0; r < dims_[0]; ++r) {
    std::copy(x + static_cast<std::size_t>(r) * cols, x + static_cast<std::size_t>(r + 1) * cols,
              ws.act[0].begin() + static_cast<std::ptrdiff_t>(r) * wide);
    std::copy(xdot + static_cast<std::size_t>(r) * cols, xdot + static_cast<std::size_t>(r + 1) * cols,
              ws.act[0].begin() + static_cast<std::ptrdiff_t>(r) * wide + cols);
  }
  for (int l = 0; l < layers(); ++l) {
    const int in = dims_[l];
    const int out = dims_[l + 1];
    double* a = ws.act[l + 1].data();
    k.gemm(out, wide, in, params_.data() + weight_offset(l), in, ws.act[l].data(), wide, a, wide, false);
    const bool hidden = l + 1 < layers();
    k.bias_act(out, cols, params_.data() + bias_offset(l), a, wide, hidden);
    if (hidden) {
      for (int r = 0; r < out; ++r) {
        double* row = a + static_cast<std::size_t>(r) * wide;
        std::copy(row + cols, row + wide, ws.zdot[l + 1].begin() + static_cast<std::ptrdiff_t>(r) * cols);
        k.tanh_backward(static_cast<std::size_t>(cols), row, row + cols);
      }
    }
  }

  // Reverse: seed the tangent output with 1, the primal output with 0.
  std::fill(ws.adj.begin(), ws.adj.begin() + cols, 0.0);
  std::fill(ws.adj.begin() + cols, ws.adj.begin() + wide, 1.0);
  for (int l = layers() - 1; l >= 0; --l) {
    const int in = dims_[l];
    const int out = dims_[l + 1];
    if (l + 1 < layers()) {
      const double* a = ws.act[l + 1].data();
      for (int r = 0; r < out; ++r) {
        const double* ar = a + static_cast<std::size_t>(r) * wide;
        const double* zd = ws.zdot[l + 1].data() + static_cast<std::size_t>(r) * cols;
        double* bar = ws.adj.data() + static_cast<std::size_t>(r) * wide;
        double* dot_bar = bar + cols;
        for (int c = 0; c < cols; ++c) bar[c] -= 2.0 * ar[c] * zd[c] * dot_bar[c];
        k.tanh_backward(static_cast<std::size_t>(cols), ar, dot_bar);
        k.tanh_backward(static_cast<std::size_t>(cols), ar, bar);
      }
    }
    k.transpose(in, wide, ws.act[l].data(), wide, ws.at.data(), in);
    k.gemm(out, in, wide, ws.adj.data(), wide, ws.at.data(), in, grad + weight_offset(l), in, true);
    k.row_sums(out, cols, ws.adj.data(), wide, grad + bias_offset(l), true);
    if (l == 0) break;
    k.transpose(out, in, params_.data() + weight_offset(l), in, ws.wt.data(), out);
    k.gemm(in, wide, out, ws.wt.data(), out, ws.adj.data(), wide, ws.adj_next.data(), wide, false);
    std::swap(ws.adj, ws.adj_next);
  }
}

std::vector<double> Mlp::operator()(const std::vector<double>& x) const {
  if (static_cast<int>(x.size()) != input_dim()) throw ValidationError("network input has the wrong length");
  MlpWorkspace ws;
  forward(x.data(), 1, ws);
  return ws.act.back();
}

}  // namespace scoremean
