#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

#include "vad/common.hpp"

namespace vad {

namespace detail {

template <typename S>
struct TensorNode {
  Shape shape;
  std::vector<S> data;
  std::vector<S> grad;  // allocated lazily; nonempty iff requires_grad
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;
};

}  // namespace detail

// Dense row-major tensor with reverse-mode autodiff. A Tensor is a cheap
// shared handle to its node; copies alias the same storage. Values are
// immutable through normal use once constructed; mutable_data() exists for the
// optimizer and for finite-difference probes on leaf tensors.
//
// S is float (run mode) or double (test/oracle mode). Every kernel checks its
// output for NaN/Inf and throws NumericError, so a numerical blow-up surfaces
// at the op that caused it.
template <typename S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, S value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<S> values, bool requires_grad = false);
  static Tensor scalar(S value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t dim(std::size_t axis) const;

  bool requires_grad() const;
  std::span<const S> data() const;
  std::span<S> mutable_data();
  std::span<const S> grad() const;
  void zero_grad();

  // Value of a single-element tensor.
  S item() const;
  // Element access for 2-D tensors; used mostly by tests and oracles.
  S at(std::size_t i, std::size_t j) const;

  // Copy of the values with no graph attached.
  Tensor detach() const;

  std::shared_ptr<detail::TensorNode<S>> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::TensorNode<S>> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  std::shared_ptr<detail::TensorNode<S>> node_;
};

class Rng;

// --- kernels ---------------------------------------------------------------
// All of these record a backward closure when any input requires grad.

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b);

template <typename S>
Tensor<S> transpose(const Tensor<S>& x);

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);

// x: [m x n], v: [n]; adds v to every row.
template <typename S>
Tensor<S> add_rowvec(const Tensor<S>& x, const Tensor<S>& v);

// x: [m x n], v: [m]; adds v[i] to every element of row i.
template <typename S>
Tensor<S> add_colvec(const Tensor<S>& x, const Tensor<S>& v);

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S factor);

template <typename S>
Tensor<S> relu(const Tensor<S>& x);

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x);

// Row-wise softmax of a 2-D tensor, stabilized by subtracting the row max.
template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& x);

// Normalizes over the last axis: (x - mean) / sqrt(var + eps), no affine.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, S eps);

// Inverted dropout: keeps elements with probability 1-p and rescales by
// 1/(1-p). Identity when training is false. 0 <= p < 1.
template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double p, Rng& rng, bool training);

template <typename S>
Tensor<S> concat(std::size_t axis, std::span<const Tensor<S>> parts);

template <typename S>
Tensor<S> concat(std::size_t axis, std::initializer_list<Tensor<S>> parts);

template <typename S>
std::vector<Tensor<S>> split(const Tensor<S>& x, std::size_t axis,
                             std::span<const std::size_t> sizes);

template <typename S>
Tensor<S> reduce_mean(const Tensor<S>& x, std::size_t axis);

// Max over one axis; gradient routes to the first max index of each slice.
template <typename S>
Tensor<S> reduce_max(const Tensor<S>& x, std::size_t axis);

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x);

template <typename S>
Tensor<S> mean_all(const Tensor<S>& x);

// Contiguous row slice [start, start+count) of a 2-D tensor.
template <typename S>
Tensor<S> rows(const Tensor<S>& x, std::size_t start, std::size_t count);

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape);

// Elementwise -(y log p + (1-y) log(1-p)) with p clamped away from {0, 1}.
template <typename S>
Tensor<S> binary_cross_entropy(const Tensor<S>& probs, const Tensor<S>& targets);

// Reverse pass from a single-element loss. Accumulates into the grad of every
// reachable tensor that requires grad; leaf grads accumulate across calls,
// intermediate grads are reset per call.
template <typename S>
void backward(const Tensor<S>& loss);

// --- init helpers ----------------------------------------------------------

template <typename S>
Tensor<S> uniform_init(Shape shape, S lo, S hi, Rng& rng, bool requires_grad = true);

template <typename S>
Tensor<S> normal_init(Shape shape, S mean, S stddev, Rng& rng, bool requires_grad = true);

// A named trainable tensor. The handle aliases the model's storage, so the
// optimizer can update through it.
template <typename S>
struct Parameter {
  std::string name;
  Tensor<S> tensor;
};

}  // namespace vad
