#pragma once

#include <random>
#include <string>
#include <vector>

#include "bmr/ops.hpp"
#include "bmr/tensor.hpp"

namespace bmr {

using Rng = std::mt19937_64;

/// One named piece of model state, as enumerated for optimisers and checkpoints.
struct StateEntry {
  enum class Kind { kParam, kFrozen, kBuffer };
  std::string name;
  Kind kind = Kind::kParam;
  Tensor tensor;                          // kParam / kFrozen
  std::vector<double>* buffer = nullptr;  // kBuffer
};

using StateList = std::vector<StateEntry>;

/// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng);

/// Sinusoidal position table [t, d] with the standard 10000 base.
Tensor sinusoidal_positions(std::size_t t, std::size_t d);

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);

  Tensor operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }
  void enumerate(const std::string& prefix, StateList& out) const;
};

struct BatchNorm1d {
  Tensor gamma;
  Tensor beta;
  BatchNormStats stats;

  BatchNorm1d() = default;
  explicit BatchNorm1d(std::size_t d);

  /// Accepts [..., d]; leading dims are flattened into the batch.
  Tensor operator()(const Tensor& x, NormMode mode);
  void enumerate(const std::string& prefix, StateList& out);
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t d);

  Tensor operator()(const Tensor& x) const { return layernorm(x, gamma, beta); }
  void enumerate(const std::string& prefix, StateList& out) const;
};

/// One-hidden-layer MLP: Linear -> BatchNorm1D -> ELU -> Linear.
struct Mlp {
  Linear fc1;
  BatchNorm1d norm;
  Linear fc2;

  Mlp() = default;
  Mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);

  struct Output {
    Tensor hidden;  // post-activation, [..., hidden]
    Tensor out;     // [..., out]
  };

  Output forward(const Tensor& x, NormMode mode);
  Tensor operator()(const Tensor& x, NormMode mode) { return forward(x, mode).out; }
  void enumerate(const std::string& prefix, StateList& out);
};

/// Trainable tensors of a state list, in order.
std::vector<Tensor> trainable(const StateList& state);

}  // namespace bmr
