#include "bmr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bmr/kernels.hpp"

namespace bmr {

using detail::Node;

namespace {

// Gradient buffer of parent `i`, or an empty span when it needs none.
std::span<double> parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return {};
  return p.grad_buffer();
}

const std::vector<double>& parent_data(const Node& self, std::size_t i) {
  return self.parents[i]->data;
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " +
                       to_string(b));
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Which operand is broadcast. 0: same shape, 1: b broadcasts into a,
// 2: a broadcasts into b.
int broadcast_side(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return 0;
  if (b.numel() == 1 || is_suffix(b.shape(), a.shape())) return 1;
  if (a.numel() == 1 || is_suffix(a.shape(), b.shape())) return 2;
  shape_error(op, a.shape(), b.shape());
}

template <typename Fn>
Tensor unary(const Tensor& x, Fn&& value, std::function<void(Node&)> back) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = value(in[i]);
  return Tensor::make_result(x.shape(), std::move(out), {x}, std::move(back));
}

std::size_t prod(const Shape& s, std::size_t from, std::size_t to) {
  std::size_t p = 1;
  for (std::size_t i = from; i < to; ++i) p *= s[i];
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 1 || b.rank() != 2 || a.shape().back() != b.dim(0))
    shape_error("matmul", a.shape(), b.shape());
  const std::size_t k = b.dim(0), n = b.dim(1), m = a.numel() / k;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(n);
  std::vector<double> out(m * n);
  kernels::gemm({m, n, k, false, false}, a.data(), b.data(), out, false);
  return Tensor::make_result(std::move(out_shape), std::move(out), {a, b}, [m, n, k](Node& self) {
    const auto& av = parent_data(self, 0);
    const auto& bv = parent_data(self, 1);
    if (auto ga = parent_grad(self, 0); !ga.empty())
      kernels::gemm({m, k, n, false, true}, self.grad, bv, ga, true);
    if (auto gb = parent_grad(self, 1); !gb.empty())
      kernels::gemm({k, n, m, true, false}, av, self.grad, gb, true);
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    shape_error("bmm", a.shape(), b.shape());
  const std::size_t B = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<double> out(B * m * n);
  kernels::bgemm(B, {m, n, k, false, false}, a.data(), b.data(), out, false);
  return Tensor::make_result({B, m, n}, std::move(out), {a, b}, [B, m, n, k](Node& self) {
    const auto& av = parent_data(self, 0);
    const auto& bv = parent_data(self, 1);
    if (auto ga = parent_grad(self, 0); !ga.empty())
      kernels::bgemm(B, {m, k, n, false, true}, self.grad, bv, ga, true);
    if (auto gb = parent_grad(self, 1); !gb.empty())
      kernels::bgemm(B, {k, n, m, true, false}, av, self.grad, gb, true);
  });
}

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose_last2: rank < 2 " + to_string(x.shape()));
  const std::size_t r = x.dim(x.rank() - 2), c = x.dim(x.rank() - 1);
  const std::size_t batch = x.numel() / (r * c);
  Shape s = x.shape();
  std::swap(s[s.size() - 1], s[s.size() - 2]);
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t q = 0; q < batch; ++q)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[q * r * c + j * r + i] = in[q * r * c + i * c + j];
  return Tensor::make_result(std::move(s), std::move(out), {x}, [batch, r, c](Node& self) {
    auto gx = parent_grad(self, 0);
    for (std::size_t q = 0; q < batch; ++q)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          gx[q * r * c + i * c + j] += self.grad[q * r * c + j * r + i];
  });
}

// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  const int side = broadcast_side("add", a, b);
  const Tensor& big = side == 2 ? b : a;
  const Tensor& small = side == 2 ? a : b;
  const std::size_t sn = small.numel();
  std::vector<double> out(big.data().begin(), big.data().end());
  auto sv = small.data();
  for (std::size_t o = 0; o < out.size(); o += sn)
    for (std::size_t i = 0; i < sn; ++i) out[o + i] += sv[i];
  const std::size_t bi = side == 2 ? 1 : 0, si = 1 - bi;
  return Tensor::make_result(big.shape(), std::move(out), {a, b}, [bi, si, sn](Node& self) {
    const double* g = self.grad.data();
    if (auto gb = parent_grad(self, bi); !gb.empty())
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i];
    if (auto gs = parent_grad(self, si); !gs.empty())
      for (std::size_t o = 0; o < self.grad.size(); o += sn)
        for (std::size_t i = 0; i < sn; ++i) gs[i] += g[o + i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  const int side = broadcast_side("mul", a, b);
  const Tensor& big = side == 2 ? b : a;
  const Tensor& small = side == 2 ? a : b;
  const std::size_t sn = small.numel();
  std::vector<double> out(big.numel());
  auto bv = big.data();
  auto sv = small.data();
  for (std::size_t o = 0; o < out.size(); o += sn)
    for (std::size_t i = 0; i < sn; ++i) out[o + i] = bv[o + i] * sv[i];
  const std::size_t bi = side == 2 ? 1 : 0, si = 1 - bi;
  return Tensor::make_result(big.shape(), std::move(out), {a, b}, [bi, si, sn](Node& self) {
    const auto& bigv = parent_data(self, bi);
    const auto& smallv = parent_data(self, si);
    const double* g = self.grad.data();
    if (auto gb = parent_grad(self, bi); !gb.empty())
      for (std::size_t o = 0; o < gb.size(); o += sn)
        for (std::size_t i = 0; i < sn; ++i) gb[o + i] += g[o + i] * smallv[i];
    if (auto gs = parent_grad(self, si); !gs.empty())
      for (std::size_t o = 0; o < self.grad.size(); o += sn)
        for (std::size_t i = 0; i < sn; ++i) gs[i] += g[o + i] * bigv[o + i];
  });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor scale(const Tensor& x, double factor) {
  return unary(x, [factor](double v) { return v * factor; }, [factor](Node& self) {
    auto gx = parent_grad(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(x, [value](double v) { return v + value; }, [](Node& self) {
    auto gx = parent_grad(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](Node& self) {
        auto gx = parent_grad(self, 0);
        for (std::size_t i = 0; i < gx.size(); ++i) {
          const double y = self.data[i];
          gx[i] += self.grad[i] * y * (1.0 - y);
        }
      });
}

Tensor elu(const Tensor& x, double alpha) {
  return unary(x, [alpha](double v) { return v > 0 ? v : alpha * std::expm1(v); },
               [alpha](Node& self) {
                 auto gx = parent_grad(self, 0);
                 const auto& xv = parent_data(self, 0);
                 for (std::size_t i = 0; i < gx.size(); ++i)
                   gx[i] += self.grad[i] * (xv[i] > 0 ? 1.0 : self.data[i] + alpha);
               });
}

Tensor log(const Tensor& x) {
  for (double v : x.data())
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
  return unary(x, [](double v) { return std::log(v); }, [](Node& self) {
    auto gx = parent_grad(self, 0);
    const auto& xv = parent_data(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] / xv[i];
  });
}

Tensor abs(const Tensor& x) {
  return unary(x, [](double v) { return std::abs(v); }, [](Node& self) {
    auto gx = parent_grad(self, 0);
    const auto& xv = parent_data(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i)
      gx[i] += self.grad[i] * (xv[i] > 0 ? 1.0 : (xv[i] < 0 ? -1.0 : 0.0));
  });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(x, [lo, hi](double v) { return std::clamp(v, lo, hi); }, [lo, hi](Node& self) {
    auto gx = parent_grad(self, 0);
    const auto& xv = parent_data(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xv[i] >= lo && xv[i] <= hi) gx[i] += self.grad[i];
  });
}

Tensor softmax_lastdim(const Tensor& x) {
  if (x.rank() == 0) throw DimensionError("softmax_lastdim: scalar input");
  const std::size_t cols = x.shape().back(), rows = x.numel() / cols;
  std::vector<double> out(x.numel());
  kernels::softmax_rows(rows, cols, x.data(), out);
  return Tensor::make_result(x.shape(), std::move(out), {x}, [rows, cols](Node& self) {
    auto gx = parent_grad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * cols;
      const double* g = self.grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < cols; ++j) gx[r * cols + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor scale_batch(const Tensor& x, const Tensor& s) {
  if (x.rank() < 1 || s.numel() != x.dim(0)) shape_error("scale_batch", x.shape(), s.shape());
  const std::size_t B = x.dim(0), block = x.numel() / std::max<std::size_t>(B, 1);
  std::vector<double> out(x.numel());
  auto xv = x.data();
  auto sv = s.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < block; ++i) out[b * block + i] = xv[b * block + i] * sv[b];
  return Tensor::make_result(x.shape(), std::move(out), {x, s}, [B, block](Node& self) {
    const auto& xv = parent_data(self, 0);
    const auto& sv = parent_data(self, 1);
    auto gx = parent_grad(self, 0);
    auto gs = parent_grad(self, 1);
    for (std::size_t b = 0; b < B; ++b) {
      double acc = 0.0;
      for (std::size_t i = 0; i < block; ++i) {
        const double g = self.grad[b * block + i];
        if (!gx.empty()) gx[b * block + i] += g * sv[b];
        acc += g * xv[b * block + i];
      }
      if (!gs.empty()) gs[b] += acc;
    }
  });
}

Tensor stop_grad(const Tensor& x) {
  return Tensor::from(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
}

// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return Tensor::make_result({}, {acc}, {x}, [](Node& self) {
    auto gx = parent_grad(self, 0);
    for (double& g : gx) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) shape_error("reshape", x.shape(), shape);
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    auto gx = parent_grad(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
  if (axis >= x.rank() || start + len > x.dim(axis))
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") on axis " + std::to_string(axis) +
                         " of " + to_string(x.shape()));
  const Shape& s = x.shape();
  const std::size_t outer = prod(s, 0, axis), inner = prod(s, axis + 1, s.size()),
                    full = s[axis];
  Shape os = s;
  os[axis] = len;
  std::vector<double> out(outer * len * inner);
  auto xv = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xv.begin() + (o * full + start) * inner, len * inner,
                out.begin() + o * len * inner);
  return Tensor::make_result(std::move(os), std::move(out), {x},
                             [outer, inner, full, start, len](Node& self) {
                               auto gx = parent_grad(self, 0);
                               for (std::size_t o = 0; o < outer; ++o)
                                 for (std::size_t i = 0; i < len * inner; ++i)
                                   gx[(o * full + start) * inner + i] +=
                                       self.grad[o * len * inner + i];
                             });
}

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("concat: no inputs");
  const Shape& s0 = xs.front().shape();
  if (axis >= s0.size()) throw DimensionError("concat: axis out of range for " + to_string(s0));
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& t : xs) {
    const Shape& s = t.shape();
    if (s.size() != s0.size()) shape_error("concat", s0, s);
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != s0[i]) shape_error("concat", s0, s);
    widths.push_back(s[axis]);
    total += s[axis];
  }
  const std::size_t outer = prod(s0, 0, axis), inner = prod(s0, axis + 1, s0.size());
  Shape os = s0;
  os[axis] = total;
  std::vector<double> out(outer * total * inner);
  std::size_t offset = 0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    auto xv = xs[t].data();
    const std::size_t w = widths[t];
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(xv.begin() + o * w * inner, w * inner,
                  out.begin() + (o * total + offset) * inner);
    offset += w;
  }
  return Tensor::make_result(std::move(os), std::move(out), xs,
                             [widths, outer, inner, total](Node& self) {
                               std::size_t off = 0;
                               for (std::size_t t = 0; t < widths.size(); ++t) {
                                 const std::size_t w = widths[t];
                                 if (auto g = parent_grad(self, t); !g.empty())
                                   for (std::size_t o = 0; o < outer; ++o)
                                     for (std::size_t i = 0; i < w * inner; ++i)
                                       g[o * w * inner + i] +=
                                           self.grad[(o * total + off) * inner + i];
                                 off += w;
                               }
                             });
}

Tensor stack(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("stack: no inputs");
  std::vector<Tensor> expanded;
  expanded.reserve(xs.size());
  for (const auto& t : xs) {
    if (t.shape() != xs.front().shape()) shape_error("stack", xs.front().shape(), t.shape());
    Shape s = t.shape();
    if (axis > s.size()) throw DimensionError("stack: axis out of range");
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(axis), 1);
    expanded.push_back(reshape(t, std::move(s)));
  }
  return concat(expanded, axis);
}

// ---------------------------------------------------------------------------

Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, NormMode mode) {
  if (x.rank() != 2 || gamma.numel() != x.dim(1) || beta.numel() != x.dim(1))
    shape_error("batchnorm1d", x.shape(), gamma.shape());
  const std::size_t N = x.dim(0), d = x.dim(1);
  if (stats.mean.size() != d) {
    stats.mean.assign(d, 0.0);
    stats.var.assign(d, 1.0);
  }
  auto xv = x.data();
  std::vector<double> mu(d, 0.0), inv_std(d);
  if (mode == NormMode::kTrain) {
    if (N < 2) throw DimensionError("batchnorm1d: train mode needs batch >= 2, got " + std::to_string(N));
    std::vector<double> var(d, 0.0);
    for (std::size_t r = 0; r < N; ++r)
      for (std::size_t j = 0; j < d; ++j) mu[j] += xv[r * d + j];
    for (auto& m : mu) m /= static_cast<double>(N);
    for (std::size_t r = 0; r < N; ++r)
      for (std::size_t j = 0; j < d; ++j) {
        const double c = xv[r * d + j] - mu[j];
        var[j] += c * c;
      }
    for (std::size_t j = 0; j < d; ++j) {
      var[j] /= static_cast<double>(N);
      inv_std[j] = 1.0 / std::sqrt(var[j] + stats.eps);
      const double unbiased = var[j] * static_cast<double>(N) / static_cast<double>(N - 1);
      stats.mean[j] = (1.0 - stats.momentum) * stats.mean[j] + stats.momentum * mu[j];
      stats.var[j] = (1.0 - stats.momentum) * stats.var[j] + stats.momentum * unbiased;
    }
  } else {
    mu = stats.mean;
    for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(stats.var[j] + stats.eps);
  }
  std::vector<double> xhat(N * d), out(N * d);
  auto gv = gamma.data();
  auto bv = beta.data();
  for (std::size_t r = 0; r < N; ++r)
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (xv[r * d + j] - mu[j]) * inv_std[j];
      out[r * d + j] = gv[j] * xhat[r * d + j] + bv[j];
    }
  const bool train = mode == NormMode::kTrain;
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [N, d, train, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const auto& gam = parent_data(self, 1);
        const auto& g = self.grad;
        if (auto gg = parent_grad(self, 1); !gg.empty())
          for (std::size_t r = 0; r < N; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
        if (auto gb = parent_grad(self, 2); !gb.empty())
          for (std::size_t r = 0; r < N; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
        auto gx = parent_grad(self, 0);
        if (gx.empty()) return;
        if (!train) {
          for (std::size_t r = 0; r < N; ++r)
            for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[r * d + j] * gam[j] * inv_std[j];
          return;
        }
        std::vector<double> s1(d, 0.0), s2(d, 0.0);
        for (std::size_t r = 0; r < N; ++r)
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = g[r * d + j] * gam[j];
            s1[j] += dxh;
            s2[j] += dxh * xhat[r * d + j];
          }
        const double n = static_cast<double>(N);
        for (std::size_t r = 0; r < N; ++r)
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = g[r * d + j] * gam[j];
            gx[r * d + j] += inv_std[j] / n * (n * dxh - s1[j] - xhat[r * d + j] * s2[j]);
          }
      });
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() < 1 || gamma.numel() != x.shape().back() || beta.numel() != x.shape().back())
    shape_error("layernorm", x.shape(), gamma.shape());
  const std::size_t d = x.shape().back(), rows = x.numel() / d;
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  std::vector<double> xhat(x.numel()), inv_std(rows), out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * d;
    double mu = 0.0, var = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (xr[j] - mu) * inv_std[r];
      out[r * d + j] = gv[j] * xhat[r * d + j] + bv[j];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const auto& gam = parent_data(self, 1);
        const auto& g = self.grad;
        if (auto gg = parent_grad(self, 1); !gg.empty())
          for (std::size_t i = 0; i < g.size(); ++i) gg[i % d] += g[i] * xhat[i];
        if (auto gb = parent_grad(self, 2); !gb.empty())
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
        auto gx = parent_grad(self, 0);
        if (gx.empty()) return;
        const double n = static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = g[r * d + j] * gam[j];
            s1 += dxh;
            s2 += dxh * xhat[r * d + j];
          }
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = g[r * d + j] * gam[j];
            gx[r * d + j] += inv_std[r] / n * (n * dxh - s1 - xhat[r * d + j] * s2);
          }
        }
      });
}

Tensor conv2d_valid(const Tensor& images, const Tensor& kernel) {
  if (images.rank() != 3 || kernel.rank() != 2) shape_error("conv2d_valid", images.shape(), kernel.shape());
  const std::size_t B = images.dim(0), H = images.dim(1), W = images.dim(2);
  const std::size_t kh = kernel.dim(0), kw = kernel.dim(1);
  if (H < kh || W < kw)
    throw DimensionError("conv2d_valid: image " + to_string({H, W}) + " smaller than kernel " +
                         to_string({kh, kw}));
  const std::size_t oh = H - kh + 1, ow = W - kw + 1;
  std::vector<double> out(B * oh * ow, 0.0);
  auto iv = images.data();
  auto kv = kernel.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t u = 0; u < kh; ++u)
          for (std::size_t v = 0; v < kw; ++v)
            acc += iv[(b * H + i + u) * W + j + v] * kv[u * kw + v];
        out[(b * oh + i) * ow + j] = acc;
      }
  return Tensor::make_result({B, oh, ow}, std::move(out), {images, kernel},
                             [B, H, W, kh, kw, oh, ow](Node& self) {
                               const auto& iv = parent_data(self, 0);
                               const auto& kv = parent_data(self, 1);
                               auto gi = parent_grad(self, 0);
                               auto gk = parent_grad(self, 1);
                               for (std::size_t b = 0; b < B; ++b)
                                 for (std::size_t i = 0; i < oh; ++i)
                                   for (std::size_t j = 0; j < ow; ++j) {
                                     const double g = self.grad[(b * oh + i) * ow + j];
                                     if (g == 0.0) continue;
                                     for (std::size_t u = 0; u < kh; ++u)
                                       for (std::size_t v = 0; v < kw; ++v) {
                                         const std::size_t p = (b * H + i + u) * W + j + v;
                                         if (!gi.empty()) gi[p] += g * kv[u * kw + v];
                                         if (!gk.empty()) gk[u * kw + v] += g * iv[p];
                                       }
                                   }
                             });
}

Tensor cell_mean_pool(const Tensor& x, std::size_t cells_r, std::size_t cells_c) {
  if (x.rank() != 3 || cells_r == 0 || cells_c == 0 || x.dim(1) < cells_r || x.dim(2) < cells_c)
    throw DimensionError("cell_mean_pool: cannot split " + to_string(x.shape()) + " into " +
                         std::to_string(cells_r) + "x" + std::to_string(cells_c) + " cells");
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), nc = cells_r * cells_c;
  // cell index of every pixel and the pixel count per cell
  std::vector<std::size_t> cell_of(H * W);
  std::vector<double> inv_count(nc, 0.0);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      const std::size_t r = i * cells_r / H, c = j * cells_c / W;
      cell_of[i * W + j] = r * cells_c + c;
      inv_count[r * cells_c + c] += 1.0;
    }
  for (auto& v : inv_count) v = 1.0 / v;
  std::vector<double> out(B * nc, 0.0);
  auto xv = x.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t p = 0; p < H * W; ++p) out[b * nc + cell_of[p]] += xv[b * H * W + p];
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < nc; ++c) out[b * nc + c] *= inv_count[c];
  return Tensor::make_result({B, nc}, std::move(out), {x},
                             [B, H, W, nc, cell_of = std::move(cell_of),
                              inv_count = std::move(inv_count)](Node& self) {
                               auto gx = parent_grad(self, 0);
                               for (std::size_t b = 0; b < B; ++b)
                                 for (std::size_t p = 0; p < H * W; ++p) {
                                   const std::size_t c = cell_of[p];
                                   gx[b * H * W + p] += self.grad[b * nc + c] * inv_count[c];
                                 }
                             });
}

Tensor embedding(const Tensor& table, std::span<const std::int64_t> ids) {
  if (table.rank() != 2) throw DimensionError("embedding: table must be 2-D, got " + to_string(table.shape()));
  const std::size_t V = table.dim(0), d = table.dim(1), n = ids.size();
  std::vector<double> out(n * d);
  auto tv = table.data();
  for (std::size_t i = 0; i < n; ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= V)
      throw std::out_of_range("embedding: token id " + std::to_string(ids[i]) +
                              " outside vocabulary of size " + std::to_string(V));
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[i]) * static_cast<std::ptrdiff_t>(d), d,
                out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  std::vector<std::int64_t> idv(ids.begin(), ids.end());
  return Tensor::make_result({n, d}, std::move(out), {table}, [d, idv = std::move(idv)](Node& self) {
    auto gt = parent_grad(self, 0);
    for (std::size_t i = 0; i < idv.size(); ++i)
      for (std::size_t j = 0; j < d; ++j)
        gt[static_cast<std::size_t>(idv[i]) * d + j] += self.grad[i * d + j];
  });
}

}  // namespace bmr
