#include "hsrecon/tensor.hpp"

#include <cblas.h>

#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>
#include <utility>

extern "C" void openblas_set_num_threads(int);

namespace hsrecon {

void set_blas_threads(int n) {
  if (n > 0) openblas_set_num_threads(n);
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

Tensor Tensor::wrap(ImplPtr impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return wrap(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({value}, {1}, requires_grad);
}

Tensor Tensor::from(std::vector<double> data, Shape shape, bool requires_grad) {
  if (data.size() != shape_numel(shape))
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return wrap(std::move(impl));
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() requires a one-element tensor, got " + shape_str(shape()));
  return impl_->data[0];
}

void Tensor::backward() {
  if (!impl_) throw Error("backward() on an undefined tensor");
  if (numel() != 1)
    throw ShapeError("backward() requires a scalar root, got shape " + shape_str(shape()));

  // Iterative post-order DFS; the reversed order visits every node exactly
  // once with all consumers handled before their producers.
  struct Frame {
    TensorImpl* node;
    std::size_t next;
  };
  std::vector<TensorImpl*> topo;
  std::unordered_set<TensorImpl*> seen;
  std::vector<Frame> stack{{impl_.get(), 0}};
  seen.insert(impl_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.node->parents.size()) {
      TensorImpl* p = f.node->parents[f.next++].get();
      if (seen.insert(p).second) stack.push_back({p, 0});
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  impl_->ensure_grad();
  impl_->grad[0] += 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

namespace {

Tensor make_node(Shape shape, std::vector<double> data, std::vector<ImplPtr> parents,
                 std::function<void(TensorImpl&)> bwd) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  for (const auto& p : parents) impl->requires_grad = impl->requires_grad || p->requires_grad;
  if (impl->requires_grad) {
    impl->parents = std::move(parents);
    impl->backward_fn = std::move(bwd);
  }
  return Tensor::wrap(std::move(impl));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

// Accumulates g into p's grad when p participates in the graph.
bool wants_grad(const ImplPtr& p) { return p->requires_grad; }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_node(a.shape(), std::move(out), {a.impl_ptr(), b.impl_ptr()}, [](TensorImpl& self) {
    for (int k = 0; k < 2; ++k) {
      auto& p = self.parents[k];
      if (!wants_grad(p)) continue;
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

Tensor add(const Tensor& a, double b) {
  std::vector<double> out(a.numel());
  auto av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + b;
  return make_node(a.shape(), std::move(out), {a.impl_ptr()}, [](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_node(a.shape(), std::move(out), {a.impl_ptr(), b.impl_ptr()}, [](TensorImpl& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants_grad(pa)) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (wants_grad(pb)) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, double b) { return add(a, -b); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_node(a.shape(), std::move(out), {a.impl_ptr(), b.impl_ptr()}, [](TensorImpl& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants_grad(pa)) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * pb->data[i];
    }
    if (wants_grad(pb)) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i] * pa->data[i];
    }
  });
}

Tensor mul(const Tensor& a, double b) {
  std::vector<double> out(a.numel());
  auto av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * b;
  return make_node(a.shape(), std::move(out), {a.impl_ptr()}, [b](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * b;
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  std::vector<double> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
  return make_node(a.shape(), std::move(out), {a.impl_ptr(), b.impl_ptr()}, [](TensorImpl& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants_grad(pa)) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] / pb->data[i];
    }
    if (wants_grad(pb)) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pb->grad[i] -= self.grad[i] * pa->data[i] / (pb->data[i] * pb->data[i]);
    }
  });
}

Tensor div(const Tensor& a, double b) { return mul(a, 1.0 / b); }

Tensor neg(const Tensor& a) { return mul(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw ShapeError("matmul expects 2-D tensors, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  if (m && n && k)
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, (int)m, (int)n, (int)k, 1.0,
                a.data().data(), (int)k, b.data().data(), (int)n, 0.0, out.data(), (int)n);
  return make_node({m, n}, std::move(out), {a.impl_ptr(), b.impl_ptr()},
                   [m, k, n](TensorImpl& self) {
                     auto& pa = self.parents[0];
                     auto& pb = self.parents[1];
                     if (m == 0 || n == 0 || k == 0) return;
                     if (wants_grad(pa)) {
                       pa->ensure_grad();  // dA += dC . B^T
                       cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, (int)m, (int)k, (int)n,
                                   1.0, self.grad.data(), (int)n, pb->data.data(), (int)n, 1.0,
                                   pa->grad.data(), (int)k);
                     }
                     if (wants_grad(pb)) {
                       pb->ensure_grad();  // dB += A^T . dC
                       cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, (int)k, (int)n, (int)m,
                                   1.0, pa->data.data(), (int)k, self.grad.data(), (int)n, 1.0,
                                   pb->grad.data(), (int)n);
                     }
                   });
}

Tensor transpose2d(const Tensor& a) {
  if (a.ndim() != 2) throw ShapeError("transpose2d expects a 2-D tensor, got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  auto av = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_node({n, m}, std::move(out), {a.impl_ptr()}, [m, n](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < m; ++i) p->grad[i * n + j] += self.grad[j * m + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape to " + shape_str(shape) + " changes element count of " +
                     shape_str(a.shape()));
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_node(std::move(shape), std::move(out), {a.impl_ptr()}, [](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  });
}

Tensor add_row_vector(const Tensor& rows, const Tensor& vec) {
  if (rows.ndim() != 2 || vec.ndim() != 1 || rows.dim(1) != vec.dim(0))
    throw ShapeError("add_row_vector expects [M,N] and [N], got " + shape_str(rows.shape()) +
                     " and " + shape_str(vec.shape()));
  const std::size_t m = rows.dim(0), n = rows.dim(1);
  std::vector<double> out(m * n);
  auto rv = rows.data(), bv = vec.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = rv[i * n + j] + bv[j];
  return make_node({m, n}, std::move(out), {rows.impl_ptr(), vec.impl_ptr()},
                   [m, n](TensorImpl& self) {
                     auto& pr = self.parents[0];
                     auto& pv = self.parents[1];
                     if (wants_grad(pr)) {
                       pr->ensure_grad();
                       for (std::size_t i = 0; i < m * n; ++i) pr->grad[i] += self.grad[i];
                     }
                     if (wants_grad(pv)) {
                       pv->ensure_grad();
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < n; ++j) pv->grad[j] += self.grad[i * n + j];
                     }
                   });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return make_node(x.shape(), std::move(out), {x.impl_ptr()}, [](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    // subgradient at 0 is 0
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (p->data[i] > 0.0) p->grad[i] += self.grad[i];
  });
}

Tensor tanh(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  return make_node(x.shape(), std::move(out), {x.impl_ptr()}, [](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      double y = self.data[i];
      p->grad[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

namespace {

// Spatial dims of a [C,H,W] or [N,C,H,W] tensor, treating 3-D as batch 1.
struct Chw {
  std::size_t n, c, h, w;
  bool batched;
};

Chw as_chw(const Tensor& x, const char* op) {
  if (x.ndim() == 3) return {1, x.dim(0), x.dim(1), x.dim(2), false};
  if (x.ndim() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), true};
  throw ShapeError(std::string(op) + " expects a [C,H,W] or [N,C,H,W] tensor, got " +
                   shape_str(x.shape()));
}

}  // namespace

Tensor upsample_nearest2(const Tensor& x) {
  const Chw d = as_chw(x, "upsample_nearest2");
  const std::size_t oh = 2 * d.h, ow = 2 * d.w;
  std::vector<double> out(d.n * d.c * oh * ow);
  auto xv = x.data();
  for (std::size_t p = 0; p < d.n * d.c; ++p) {
    const double* src = xv.data() + p * d.h * d.w;
    double* dst = out.data() + p * oh * ow;
    for (std::size_t y = 0; y < d.h; ++y)
      for (std::size_t xx = 0; xx < d.w; ++xx) {
        double v = src[y * d.w + xx];
        dst[(2 * y) * ow + 2 * xx] = v;
        dst[(2 * y) * ow + 2 * xx + 1] = v;
        dst[(2 * y + 1) * ow + 2 * xx] = v;
        dst[(2 * y + 1) * ow + 2 * xx + 1] = v;
      }
  }
  Shape oshape = d.batched ? Shape{d.n, d.c, oh, ow} : Shape{d.c, oh, ow};
  return make_node(std::move(oshape), std::move(out), {x.impl_ptr()}, [d, oh, ow](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t pl = 0; pl < d.n * d.c; ++pl) {
      const double* g = self.grad.data() + pl * oh * ow;
      double* dst = p->grad.data() + pl * d.h * d.w;
      for (std::size_t y = 0; y < d.h; ++y)
        for (std::size_t xx = 0; xx < d.w; ++xx)
          dst[y * d.w + xx] += g[(2 * y) * ow + 2 * xx] + g[(2 * y) * ow + 2 * xx + 1] +
                               g[(2 * y + 1) * ow + 2 * xx] + g[(2 * y + 1) * ow + 2 * xx + 1];
    }
  });
}

namespace {

// Gathers the k*k neighbourhood of every pixel: col is [C*k*k, H*W] row-major.
void im2col(const double* x, std::size_t c, std::size_t h, std::size_t w, std::size_t k,
            double* col) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k - 1) / 2;
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < c; ++ci) {
    const double* plane = x + ci * h * w;
    for (std::size_t dy = 0; dy < k; ++dy)
      for (std::size_t dx = 0; dx < k; ++dx, ++row) {
        double* dst = col + row * h * w;
        for (std::size_t y = 0; y < h; ++y) {
          std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + dy) - pad;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
            std::memset(dst + y * w, 0, w * sizeof(double));
            continue;
          }
          const double* srow = plane + static_cast<std::size_t>(sy) * w;
          for (std::size_t xx = 0; xx < w; ++xx) {
            std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + dx) - pad;
            dst[y * w + xx] =
                (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) ? 0.0 : srow[sx];
          }
        }
      }
  }
}

// Scatter-add transpose of im2col.
void col2im_add(const double* col, std::size_t c, std::size_t h, std::size_t w, std::size_t k,
                double* x) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k - 1) / 2;
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < c; ++ci) {
    double* plane = x + ci * h * w;
    for (std::size_t dy = 0; dy < k; ++dy)
      for (std::size_t dx = 0; dx < k; ++dx, ++row) {
        const double* src = col + row * h * w;
        for (std::size_t y = 0; y < h; ++y) {
          std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + dy) - pad;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          double* drow = plane + static_cast<std::size_t>(sy) * w;
          for (std::size_t xx = 0; xx < w; ++xx) {
            std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + dx) - pad;
            if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(w)) drow[sx] += src[y * w + xx];
          }
        }
      }
  }
}

}  // namespace

Tensor conv2d_same(const Tensor& x, const Tensor& w, const Tensor& bias) {
  const Chw d = as_chw(x, "conv2d_same");
  if (w.ndim() != 4) throw ShapeError("conv2d_same weight must be [C_out,C_in,k,k], got " + shape_str(w.shape()));
  const std::size_t co = w.dim(0), ci = w.dim(1), k = w.dim(2);
  if (w.dim(3) != k || k % 2 == 0)
    throw ShapeError("conv2d_same kernel must be square with odd size, got " + shape_str(w.shape()));
  if (ci != d.c)
    throw ShapeError("conv2d_same channel mismatch: input " + shape_str(x.shape()) + " vs weight " +
                     shape_str(w.shape()));
  if (bias.ndim() != 1 || bias.dim(0) != co)
    throw ShapeError("conv2d_same bias must be [C_out], got " + shape_str(bias.shape()));

  const std::size_t hw = d.h * d.w, ckk = ci * k * k;
  std::vector<double> out(d.n * co * hw);
  std::vector<double> col(ckk * hw);
  auto xv = x.data();
  auto wv = w.data();
  auto bv = bias.data();
  for (std::size_t s = 0; s < d.n; ++s) {
    im2col(xv.data() + s * d.c * hw, d.c, d.h, d.w, k, col.data());
    double* y = out.data() + s * co * hw;
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, (int)co, (int)hw, (int)ckk, 1.0,
                wv.data(), (int)ckk, col.data(), (int)hw, 0.0, y, (int)hw);
    for (std::size_t c = 0; c < co; ++c) {
      double b = bv[c];
      for (std::size_t i = 0; i < hw; ++i) y[c * hw + i] += b;
    }
  }

  Shape oshape = d.batched ? Shape{d.n, co, d.h, d.w} : Shape{co, d.h, d.w};
  return make_node(
      std::move(oshape), std::move(out), {x.impl_ptr(), w.impl_ptr(), bias.impl_ptr()},
      [d, co, k, hw, ckk](TensorImpl& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        auto& pb = self.parents[2];
        std::vector<double> col(ckk * hw);
        std::vector<double> dcol(wants_grad(px) ? ckk * hw : 0);
        if (wants_grad(px)) px->ensure_grad();
        if (wants_grad(pw)) pw->ensure_grad();
        if (wants_grad(pb)) pb->ensure_grad();
        for (std::size_t s = 0; s < d.n; ++s) {
          const double* dy = self.grad.data() + s * co * hw;
          if (wants_grad(pb)) {
            for (std::size_t c = 0; c < co; ++c) {
              double acc = 0.0;
              for (std::size_t i = 0; i < hw; ++i) acc += dy[c * hw + i];
              pb->grad[c] += acc;
            }
          }
          if (wants_grad(pw)) {
            im2col(px->data.data() + s * d.c * hw, d.c, d.h, d.w, k, col.data());
            cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, (int)co, (int)ckk, (int)hw, 1.0,
                        dy, (int)hw, col.data(), (int)hw, 1.0, pw->grad.data(), (int)ckk);
          }
          if (wants_grad(px)) {
            cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, (int)ckk, (int)hw, (int)co, 1.0,
                        pw->data.data(), (int)ckk, dy, (int)hw, 0.0, dcol.data(), (int)hw);
            col2im_add(dcol.data(), d.c, d.h, d.w, k, px->grad.data() + s * d.c * hw);
          }
        }
      });
}

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   std::vector<double>& running_mean, std::vector<double>& running_var,
                   bool training, double momentum, double eps) {
  if (x.ndim() != 4)
    throw ShapeError("batchnorm2d expects [N,C,H,W], got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (n == 0 || h * w == 0) throw ShapeError("batchnorm2d: zero-size batch");
  if (gamma.numel() != c || beta.numel() != c || running_mean.size() != c ||
      running_var.size() != c)
    throw ShapeError("batchnorm2d parameter length does not match channel count " +
                     std::to_string(c));

  const std::size_t hw = h * w, m = n * hw;
  std::vector<double> mu(c), inv(c);
  auto xv = x.data();
  if (training) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = xv.data() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      double mean = s / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = xv.data() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          double dvar = p[i] - mean;
          sq += dvar * dvar;
        }
      }
      double var = sq / static_cast<double>(m);  // biased, used for normalization
      mu[ch] = mean;
      inv[ch] = 1.0 / std::sqrt(var + eps);
      double var_unbiased = m > 1 ? sq / static_cast<double>(m - 1) : var;
      running_mean[ch] = (1.0 - momentum) * running_mean[ch] + momentum * mean;
      running_var[ch] = (1.0 - momentum) * running_var[ch] + momentum * var_unbiased;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = running_mean[ch];
      inv[ch] = 1.0 / std::sqrt(running_var[ch] + eps);
    }
  }

  std::vector<double> out(x.numel());
  auto gv = gamma.data();
  auto bv = beta.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* p = xv.data() + (b * c + ch) * hw;
      double* o = out.data() + (b * c + ch) * hw;
      double g = gv[ch], bb = bv[ch], mm = mu[ch], iv = inv[ch];
      for (std::size_t i = 0; i < hw; ++i) o[i] = g * (p[i] - mm) * iv + bb;
    }

  return make_node(
      x.shape(), std::move(out), {x.impl_ptr(), gamma.impl_ptr(), beta.impl_ptr()},
      [n, c, hw, m, mu, inv, training](TensorImpl& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        if (wants_grad(px)) px->ensure_grad();
        if (wants_grad(pg)) pg->ensure_grad();
        if (wants_grad(pb)) pb->ensure_grad();
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double g = pg->data[ch], mm = mu[ch], iv = inv[ch];
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t b = 0; b < n; ++b) {
            const double* dy = self.grad.data() + (b * c + ch) * hw;
            const double* xp = px->data.data() + (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              sum_dy += dy[i];
              sum_dy_xhat += dy[i] * (xp[i] - mm) * iv;
            }
          }
          if (wants_grad(pg)) pg->grad[ch] += sum_dy_xhat;
          if (wants_grad(pb)) pb->grad[ch] += sum_dy;
          if (!wants_grad(px)) continue;
          if (training) {
            const double scale = g * iv / static_cast<double>(m);
            for (std::size_t b = 0; b < n; ++b) {
              const double* dy = self.grad.data() + (b * c + ch) * hw;
              const double* xp = px->data.data() + (b * c + ch) * hw;
              double* dx = px->grad.data() + (b * c + ch) * hw;
              for (std::size_t i = 0; i < hw; ++i) {
                double xhat = (xp[i] - mm) * iv;
                dx[i] += scale * (static_cast<double>(m) * dy[i] - sum_dy - xhat * sum_dy_xhat);
              }
            }
          } else {
            // running stats are constants in eval mode
            const double scale = g * iv;
            for (std::size_t b = 0; b < n; ++b) {
              const double* dy = self.grad.data() + (b * c + ch) * hw;
              double* dx = px->grad.data() + (b * c + ch) * hw;
              for (std::size_t i = 0; i < hw; ++i) dx[i] += scale * dy[i];
            }
          }
        }
      });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_node({1}, {s}, {x.impl_ptr()}, [](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    const double g = self.grad[0];
    for (auto& gv : p->grad) gv += g;
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  double s = 0.0;
  for (double v : x.data()) s += v;
  const double n = static_cast<double>(x.numel());
  return make_node({1}, {s / n}, {x.impl_ptr()}, [n](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    const double g = self.grad[0] / n;
    for (auto& gv : p->grad) gv += g;
  });
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse_loss");
  if (pred.numel() == 0) throw ShapeError("mse_loss of empty tensors");
  auto pv = pred.data(), tv = target.data();
  double s = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    double d = pv[i] - tv[i];
    s += d * d;
  }
  const double n = static_cast<double>(pred.numel());
  return make_node({1}, {s / n}, {pred.impl_ptr(), target.impl_ptr()}, [n](TensorImpl& self) {
    auto& pp = self.parents[0];
    auto& pt = self.parents[1];
    const double g = 2.0 * self.grad[0] / n;
    if (wants_grad(pp)) {
      pp->ensure_grad();
      for (std::size_t i = 0; i < pp->data.size(); ++i)
        pp->grad[i] += g * (pp->data[i] - pt->data[i]);
    }
    if (wants_grad(pt)) {
      pt->ensure_grad();
      for (std::size_t i = 0; i < pt->data.size(); ++i)
        pt->grad[i] -= g * (pp->data[i] - pt->data[i]);
    }
  });
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "l1_loss");
  if (pred.numel() == 0) throw ShapeError("l1_loss of empty tensors");
  auto pv = pred.data(), tv = target.data();
  double s = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) s += std::abs(pv[i] - tv[i]);
  const double n = static_cast<double>(pred.numel());
  return make_node({1}, {s / n}, {pred.impl_ptr(), target.impl_ptr()}, [n](TensorImpl& self) {
    auto& pp = self.parents[0];
    auto& pt = self.parents[1];
    const double g = self.grad[0] / n;
    auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
    if (wants_grad(pp)) {
      pp->ensure_grad();
      for (std::size_t i = 0; i < pp->data.size(); ++i)
        pp->grad[i] += g * sign(pp->data[i] - pt->data[i]);
    }
    if (wants_grad(pt)) {
      pt->ensure_grad();
      for (std::size_t i = 0; i < pt->data.size(); ++i)
        pt->grad[i] -= g * sign(pp->data[i] - pt->data[i]);
    }
  });
}

}  // namespace hsrecon
