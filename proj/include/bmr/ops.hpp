#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bmr/tensor.hpp"

// Differentiable ops over bmr::Tensor.
//
// Broadcasting is limited to two cases: a scalar operand, or an operand whose
// shape equals the trailing dimensions of the other (a bias row, say). Every
// other mismatch raises DimensionError naming both shapes.
namespace bmr {

// Products -------------------------------------------------------------------

/// a[..., k] x b[k, n] -> [..., n]; leading dims of `a` are flattened into rows.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a[B, m, k] x b[B, k, n] -> [B, m, n].
Tensor bmm(const Tensor& a, const Tensor& b);
/// Swaps the last two axes.
Tensor transpose_last2(const Tensor& x);

// Elementwise ----------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor sigmoid(const Tensor& x);
Tensor elu(const Tensor& x, double alpha = 1.0);
Tensor log(const Tensor& x);
Tensor abs(const Tensor& x);
/// Values clamp to [lo, hi]; the gradient is zero where clamping was active.
Tensor clamp(const Tensor& x, double lo, double hi);
/// Softmax over the last axis, max-subtracted.
Tensor softmax_lastdim(const Tensor& x);

/// Scales every leading-axis block x[b, ...] by s[b]. `s` holds x.dim(0) values.
Tensor scale_batch(const Tensor& x, const Tensor& s);

/// Value passes through; no gradient flows back along this edge.
Tensor stop_grad(const Tensor& x);

// Reductions -----------------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Shape ----------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
/// Sub-range [start, start+len) along `axis`.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len);
/// Concatenation along `axis`; all other dims must agree.
Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);
/// Stacks equal-shaped tensors along a new axis inserted at `axis`.
Tensor stack(const std::vector<Tensor>& xs, std::size_t axis);

// Layers ---------------------------------------------------------------------

/// Running statistics owned by a BatchNorm layer.
struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;
  double momentum = 0.1;
  double eps = 1e-5;
};

enum class NormMode { kTrain, kEval };

/// x[N, d]: per-column normalisation with affine gamma/beta (each [d]).
/// Train mode uses the biased batch variance for normalisation and updates
/// the running stats with the unbiased one; N >= 2 is required.
Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, NormMode mode);

/// Normalises over the last axis with affine gamma/beta (each [d]).
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Valid-mode 2-D cross-correlation of images[B, H, W] with kernel[kh, kw].
Tensor conv2d_valid(const Tensor& images, const Tensor& kernel);

/// Mean over a cells_r x cells_c grid of (near-)equal rectangles:
/// x[B, H, W] -> [B, cells_r * cells_c]. Cell edges are floor(i*H/cells_r).
Tensor cell_mean_pool(const Tensor& x, std::size_t cells_r, std::size_t cells_c);

/// Row gather: table[V, d], ids (any length n) -> [n, d].
Tensor embedding(const Tensor& table, std::span<const std::int64_t> ids);

}  // namespace bmr
