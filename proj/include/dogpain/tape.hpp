#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "dogpain/tensor.hpp"

namespace dogpain::num {

// Handle to a node on a Tape. Plain index; tapes are append-only so handles
// stay valid for the tape's lifetime.
struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const { return id != std::numeric_limits<std::uint32_t>::max(); }
};

template <typename T>
class Tape;

template <typename T>
struct TapeNode {
  const char* op = "";
  std::vector<std::uint32_t> inputs;
  Tensor<T> value;
  Tensor<T> adjoint;  // materialized lazily during backward; same shape as value
  bool requires_grad = false;
  std::function<void(Tape<T>&, std::uint32_t)> backward;  // empty for leaves
};

// Per-channel statistics observed by a train-mode batch norm node; the
// training loop folds these into the layer's running statistics.
template <typename T>
struct BatchStats {
  Tensor<T> mean;
  Tensor<T> var;
};

// Reverse-mode differentiation tape. One tape per training step; all
// operations append a node and never mutate existing values, so the graph is
// acyclic by construction and backward() visits each node exactly once.
template <typename T>
class Tape {
 public:
  Tape() = default;

  // Whether forward values are scanned for NaN/Inf after every operation.
  // Leaves are always checked.
  void set_check_finite(bool on) { check_finite_ = on; }

  Var leaf(Tensor<T> value, bool requires_grad = false);
  Var constant(Tensor<T> value) { return leaf(std::move(value), false); }
  Var scalar(T v) { return constant(Tensor<T>::scalar(v)); }

  // -- elementwise family ---------------------------------------------------
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var scale(Var a, T k);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);

  // -- linear algebra -------------------------------------------------------
  // (m x k)·(k x n) -> (m x n); a 1-D right operand is treated as a column.
  Var matmul(Var a, Var b);
  Var dot(Var a, Var b);

  // Cross-correlation, stride 1, zero "same" padding. x: [Cin,H,W],
  // kernels: [Cout,Cin,k,k] with k odd.
  Var conv2d(Var x, Var kernels);
  Var bias_chan(Var x, Var bias);

  // -- reductions and shape ops ----------------------------------------------
  Var softmax(Var v);
  Var maxpool2(Var x);
  Var sum(Var a);
  Var global_avg_pool(Var x);  // [C,H,W] -> [C]
  Var concat(Var a, Var b);    // 1-D
  Var slice(Var v, std::size_t i0, std::size_t i1);       // 1-D, [i0,i1)
  Var slice_chan(Var x, std::size_t c0, std::size_t c1);  // 3-D, channels [c0,c1)
  Var stack_steps(const std::vector<Var>& xs);            // n x [C,H,W] -> [n,C,H,W]
  Var slice_step(Var x, std::size_t n);                   // [N,C,H,W] -> [C,H,W]
  Var stack_scalars(const std::vector<Var>& xs);
  Var weighted_sum(Var weights, const std::vector<Var>& annotations);

  // -- normalization ----------------------------------------------------------
  // Train mode: batch statistics over (N,H,W) per channel, epsilon inside the
  // square root; observed stats reported through `stats` for running updates.
  Var batchnorm_train(Var x, Var gamma, Var beta, T eps, BatchStats<T>* stats = nullptr);
  // Inference mode: fixed running statistics (plain tensors, not vars).
  Var batchnorm_infer(Var x, Var gamma, Var beta, const Tensor<T>& mean, const Tensor<T>& var,
                      T eps);

  // -- losses ------------------------------------------------------------------
  // Binary cross-entropy with p clamped to [1e-7, 1-1e-7]; label must be 0 or 1.
  Var bce(Var p, T label);

  // -- engine ------------------------------------------------------------------
  void backward(Var root, T seed = T(1));

  const Tensor<T>& value(Var v) const { return node(v).value; }
  const Tensor<T>& grad(Var v);  // zeros if backward never reached v
  std::size_t size() const { return nodes_.size(); }

  TapeNode<T>& node(Var v) { return nodes_.at(v.id); }
  const TapeNode<T>& node(Var v) const { return nodes_.at(v.id); }
  TapeNode<T>& node(std::uint32_t id) { return nodes_[id]; }

  // Adjoint accumulation buffer for a node, materialized on first use.
  Tensor<T>& adj(std::uint32_t id);

 private:
  Var push(const char* op, std::vector<std::uint32_t> inputs, Tensor<T> value,
           std::function<void(Tape<T>&, std::uint32_t)> backward);
  bool any_requires(const std::vector<std::uint32_t>& ids) const;

  std::vector<TapeNode<T>> nodes_;
  bool check_finite_ = true;
};

// Central finite-difference check of reverse-mode gradients. `fn` must build
// a scalar-valued graph from the supplied leaf. Relative error uses
// max(1, |analytic|, |numeric|) as denominator. With max_coords >= 0 only a
// seeded sample of coordinates is probed (for large parameter tensors);
// otherwise every coordinate is checked.
template <typename T>
T grad_check(const std::function<Var(Tape<T>&, Var)>& fn, const Tensor<T>& point, T eps,
             long max_coords = -1, std::uint64_t sample_seed = 0);

extern template class Tape<float>;
extern template class Tape<double>;
extern template float grad_check<float>(const std::function<Var(Tape<float>&, Var)>&,
                                        const Tensor<float>&, float, long, std::uint64_t);
extern template double grad_check<double>(const std::function<Var(Tape<double>&, Var)>&,
                                          const Tensor<double>&, double, long, std::uint64_t);

}  // namespace dogpain::num
