#pragma once

// N-dimensional double tensor with reverse-mode automatic differentiation.
// Tensors are cheap handles onto shared storage; operations record a backward
// rule when any input requires gradients, forming a DAG that backward()
// traverses in reverse topological order. Graphs are confined to one thread;
// independent graphs may run concurrently.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hsrecon/common.hpp"

namespace hsrecon {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

/// Caps the thread count of the underlying BLAS (0 leaves the default).
void set_blas_threads(int n);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until first accumulation
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward_fn;  // null for leaves

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from(std::vector<double> data, Shape shape, bool requires_grad = false);
  /// Wraps an impl; used by operation implementations.
  static Tensor wrap(std::shared_ptr<detail::TensorImpl> impl);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t ndim() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape[i]; }
  std::size_t numel() const { return impl_->data.size(); }
  bool requires_grad() const { return impl_->requires_grad; }

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  /// Empty span until a backward pass has accumulated into this tensor.
  std::span<const double> grad() const { return impl_->grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad() { if (impl_) impl_->grad.assign(impl_->data.size(), 0.0); }

  /// Value of a one-element tensor.
  double item() const;

  /// Reverse-mode pass from a scalar root; each reachable node is visited
  /// exactly once, in reverse topological order. Throws ShapeError when the
  /// root is not scalar.
  void backward();

  detail::TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Elementwise arithmetic. Tensor-tensor forms require equal shapes; the
// scalar forms broadcast the scalar.
Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, double b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, double b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, double b);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

/// [M,K] x [K,N] -> [M,N]. Backward: dA = dC.B^T, dB = A^T.dC.
Tensor matmul(const Tensor& a, const Tensor& b);

/// [M,N] -> [N,M].
Tensor transpose2d(const Tensor& a);

/// Same data, new shape (element count must match).
Tensor reshape(const Tensor& a, Shape shape);

/// rows [M,N] + vec [N], added to every row.
Tensor add_row_vector(const Tensor& rows, const Tensor& vec);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);

/// Nearest-neighbour 2x upsampling of [C,H,W] or [N,C,H,W].
Tensor upsample_nearest2(const Tensor& x);

/// Same-padded stride-1 convolution; x is [C_in,H,W] or [N,C_in,H,W],
/// w is [C_out,C_in,k,k] with k odd, bias is [C_out].
Tensor conv2d_same(const Tensor& x, const Tensor& w, const Tensor& bias);

/// Per-channel batch normalization over [N,C,H,W]. Train mode normalizes by
/// batch statistics and updates running stats in place (momentum on the new
/// value, unbiased variance in the running buffer, PyTorch convention);
/// eval mode uses the running stats.
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   std::vector<double>& running_mean, std::vector<double>& running_var,
                   bool training, double momentum = 0.1, double eps = 1e-5);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Mean squared / mean absolute error over all elements.
Tensor mse_loss(const Tensor& pred, const Tensor& target);
Tensor l1_loss(const Tensor& pred, const Tensor& target);

}  // namespace hsrecon
