#pragma once

#include <cstddef>
#include <vector>

#include "scoremean/kernels.hpp"
#include "scoremean/rng.hpp"

namespace scoremean {

/// Scratch buffers for batched evaluation. Activations are stored feature-major:
/// layer l occupies dims[l] rows of `cols` contiguous samples.
struct MlpWorkspace {
  int cols = 0;
  std::vector<std::vector<double>> act;
  std::vector<std::vector<double>> zdot;
  std::vector<double> adj;
  std::vector<double> adj_next;
  std::vector<double> wt;
  std::vector<double> at;
};

/// Fully connected network, tanh on hidden layers, identity output.
/// Parameters are one flat vector: for each layer the weight matrix
/// (out × in, row-major) followed by its bias.
class Mlp {
 public:
  Mlp() = default;
  /// Zero parameters.
  explicit Mlp(std::vector<int> dims);
  /// Glorot-uniform weights, zero biases.
  static Mlp glorot(std::vector<int> dims, Rng& rng);

  const std::vector<int>& dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  int layers() const { return static_cast<int>(dims_.size()) - 1; }
  std::size_t param_count() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t weight_offset(int layer) const { return offsets_[layer]; }
  std::size_t bias_offset(int layer) const {
    return offsets_[layer] + static_cast<std::size_t>(dims_[layer + 1]) * dims_[layer];
  }

  /// x: input_dim × cols, feature-major. Output in ws.act.back().
  void forward(const double* x, int cols, MlpWorkspace& ws) const;
  /// Forward pass with forward-mode tangents. x is input_dim × (blocks·cols):
  /// column block 0 holds the inputs, blocks 1.. their tangent directions.
  /// Outputs and output tangents land in ws.act.back() in the same layout.
  void forward_tangents(const double* x, int cols, int blocks, MlpWorkspace& ws) const;
  /// Reverse pass after forward(). d_out is output_dim × cols. Parameter
  /// gradients are accumulated into `grad` and the input gradient written to
  /// `d_input` (input_dim × cols); either may be null.
  void backward(MlpWorkspace& ws, const double* d_out, double* grad, double* d_input) const;

  /// Scalar-output networks: accumulates into `grad` the parameter gradient of
  /// Σ_c ⟨∇_input φ(x_c), xdot_c⟩, by forward-mode along xdot followed by a
  /// reverse pass over both the primal and the tangent computation.
  void directional_param_grad(const double* x, const double* xdot, int cols, MlpWorkspace& ws,
                              double* grad) const;

  /// Single-sample convenience wrapper around forward().
  std::vector<double> operator()(const std::vector<double>& x) const;

  const kernels::KernelTable& kernel_table() const { return *kernels_; }
  void set_kernel_table(const kernels::KernelTable& table) { kernels_ = &table; }

 private:
  void prepare(MlpWorkspace& ws, int cols, bool tangent) const;

  std::vector<int> dims_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  const kernels::KernelTable* kernels_ = &kernels::active();
};

}  // namespace scoremean
