#include "vad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>

namespace vad {

namespace {

template <typename S>
using Node = detail::TensorNode<S>;

template <typename S>
void check_finite(const std::vector<S>& values, const char* op) {
  for (S v : values) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw NumericError(std::string(op) + " produced a non-finite value");
    }
  }
}

// Builds the result node. Parents and the backward closure are only retained
// when some input requires grad, so inference-only graphs stay flat.
template <typename S>
Tensor<S> make_result(const char* op, Shape shape, std::vector<S> values,
                      std::vector<Tensor<S>> inputs,
                      std::function<void(Node<S>&)> backprop) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError(std::string(op) + ": shape/value size mismatch");
  }
  check_finite(values, op);
  auto node = std::make_shared<Node<S>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->leaf = false;
  bool rg = false;
  for (const auto& t : inputs) {
    rg = rg || t.requires_grad();
  }
  node->requires_grad = rg;
  if (rg) {
    for (const auto& t : inputs) {
      node->parents.push_back(t.node());
    }
    node->backprop = std::move(backprop);
  }
  return Tensor<S>::wrap(std::move(node));
}

template <typename S>
void require_rank2(const Tensor<S>& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got rank " +
                         std::to_string(t.rank()));
  }
}

template <typename S>
constexpr S bce_clamp_eps() {
  if constexpr (std::is_same_v<S, double>) {
    return S(1e-12);
  } else {
    return S(1e-7);
  }
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? "x" : "") << shape[i];
  }
  os << "]";
  return os.str();
}

// --- Rng -------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() {
  // 53 high bits -> double in [0, 1)
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal(double mean, double stddev) {
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * 3.14159265358979323846 * u2);
}

bool Rng::bernoulli(double p) { return uniform() < p; }

std::uint64_t Rng::integer(std::uint64_t n) {
  if (n == 0) {
    throw ParameterError("Rng::integer: n must be positive");
  }
  return next_u64() % n;
}

Rng Rng::derive(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream)));
}

// --- Tensor basics ---------------------------------------------------------

template <typename S>
Tensor<S> Tensor<S>::zeros(Shape shape, bool requires_grad) {
  return from_data(shape, std::vector<S>(shape_numel(shape), S(0)), requires_grad);
}

template <typename S>
Tensor<S> Tensor<S>::full(Shape shape, S value, bool requires_grad) {
  return from_data(shape, std::vector<S>(shape_numel(shape), value), requires_grad);
}

template <typename S>
Tensor<S> Tensor<S>::from_data(Shape shape, std::vector<S> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("Tensor: shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::TensorNode<S>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  node->leaf = true;
  if (requires_grad) {
    node->grad.assign(node->data.size(), S(0));
  }
  return wrap(std::move(node));
}

template <typename S>
Tensor<S> Tensor<S>::scalar(S value) {
  return from_data({}, {value}, false);
}

template <typename S>
const Shape& Tensor<S>::shape() const {
  if (!node_) {
    throw ContractError("Tensor: use of default-constructed tensor");
  }
  return node_->shape;
}

template <typename S>
std::size_t Tensor<S>::numel() const {
  return shape_numel(shape());
}

template <typename S>
std::size_t Tensor<S>::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("Tensor::dim: axis out of range");
  }
  return s[axis];
}

template <typename S>
bool Tensor<S>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <typename S>
std::span<const S> Tensor<S>::data() const {
  if (!node_) {
    throw ContractError("Tensor: use of default-constructed tensor");
  }
  return node_->data;
}

template <typename S>
std::span<S> Tensor<S>::mutable_data() {
  if (!node_) {
    throw ContractError("Tensor: use of default-constructed tensor");
  }
  return node_->data;
}

template <typename S>
std::span<const S> Tensor<S>::grad() const {
  if (!requires_grad()) {
    throw ContractError("Tensor::grad: tensor does not require grad");
  }
  if (node_->grad.empty()) {
    node_->grad.assign(node_->data.size(), S(0));
  }
  return node_->grad;
}

template <typename S>
void Tensor<S>::zero_grad() {
  if (!requires_grad()) {
    throw ContractError("Tensor::zero_grad: tensor does not require grad");
  }
  node_->grad.assign(node_->data.size(), S(0));
}

template <typename S>
S Tensor<S>::item() const {
  if (numel() != 1) {
    throw DimensionError("Tensor::item: tensor has " + std::to_string(numel()) +
                         " elements, expected 1");
  }
  return node_->data[0];
}

template <typename S>
S Tensor<S>::at(std::size_t i, std::size_t j) const {
  require_rank2(*this, "Tensor::at");
  const Shape& s = shape();
  if (i >= s[0] || j >= s[1]) {
    throw DimensionError("Tensor::at: index out of range");
  }
  return node_->data[i * s[1] + j];
}

template <typename S>
Tensor<S> Tensor<S>::detach() const {
  if (!node_) {
    throw ContractError("Tensor: use of default-constructed tensor");
  }
  return from_data(node_->shape, node_->data, false);
}

// --- kernels ---------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  std::vector<S> out(m * n, S(0));
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const S av = ad[i * k + kk];
      if (av == S(0)) continue;
      const S* brow = bd.data() + kk * n;
      S* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        orow[j] += av * brow[j];
      }
    }
  }
  return make_result<S>(
      "matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node<S>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t kk = 0; kk < k; ++kk) {
              S s = 0;
              for (std::size_t j = 0; j < n; ++j) {
                s += self.grad[i * n + j] * pb.data[kk * n + j];
              }
              pa.grad[i * k + kk] += s;
            }
          }
        }
        if (pb.requires_grad) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            for (std::size_t i = 0; i < m; ++i) {
              const S av = pa.data[i * k + kk];
              if (av == S(0)) continue;
              for (std::size_t j = 0; j < n; ++j) {
                pb.grad[kk * n + j] += av * self.grad[i * n + j];
              }
            }
          }
        }
      });
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& x) {
  require_rank2(x, "transpose");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<S> out(m * n);
  const auto xd = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[j * m + i] = xd[i * n + j];
    }
  }
  return make_result<S>("transpose", {n, m}, std::move(out), {x}, [m, n](Node<S>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        p.grad[i * n + j] += self.grad[j * m + i];
      }
    }
  });
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shape mismatch, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  std::vector<S> out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ad[i] + bd[i];
  }
  return make_result<S>("add", a.shape(), std::move(out), {a, b}, [](Node<S>& self) {
    for (int which = 0; which < 2; ++which) {
      auto& p = *self.parents[which];
      if (!p.requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        p.grad[i] += self.grad[i];
      }
    }
  });
}

template <typename S>
Tensor<S> add_rowvec(const Tensor<S>& x, const Tensor<S>& v) {
  require_rank2(x, "add_rowvec");
  if (v.rank() != 1 || v.dim(0) != x.dim(1)) {
    throw DimensionError("add_rowvec: vector shape " + shape_str(v.shape()) +
                         " does not match columns of " + shape_str(x.shape()));
  }
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<S> out(m * n);
  const auto xd = x.data();
  const auto vd = v.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = xd[i * n + j] + vd[j];
    }
  }
  return make_result<S>("add_rowvec", {m, n}, std::move(out), {x, v}, [m, n](Node<S>& self) {
    auto& px = *self.parents[0];
    auto& pv = *self.parents[1];
    if (px.requires_grad) {
      for (std::size_t i = 0; i < m * n; ++i) {
        px.grad[i] += self.grad[i];
      }
    }
    if (pv.requires_grad) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          pv.grad[j] += self.grad[i * n + j];
        }
      }
    }
  });
}

template <typename S>
Tensor<S> add_colvec(const Tensor<S>& x, const Tensor<S>& v) {
  require_rank2(x, "add_colvec");
  if (v.rank() != 1 || v.dim(0) != x.dim(0)) {
    throw DimensionError("add_colvec: vector shape " + shape_str(v.shape()) +
                         " does not match rows of " + shape_str(x.shape()));
  }
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<S> out(m * n);
  const auto xd = x.data();
  const auto vd = v.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = xd[i * n + j] + vd[i];
    }
  }
  return make_result<S>("add_colvec", {m, n}, std::move(out), {x, v}, [m, n](Node<S>& self) {
    auto& px = *self.parents[0];
    auto& pv = *self.parents[1];
    if (px.requires_grad) {
      for (std::size_t i = 0; i < m * n; ++i) {
        px.grad[i] += self.grad[i];
      }
    }
    if (pv.requires_grad) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          pv.grad[i] += self.grad[i * n + j];
        }
      }
    }
  });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shape mismatch, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  std::vector<S> out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ad[i] * bd[i];
  }
  return make_result<S>("mul", a.shape(), std::move(out), {a, b}, [](Node<S>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        pa.grad[i] += self.grad[i] * pb.data[i];
      }
    }
    if (pb.requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        pb.grad[i] += self.grad[i] * pa.data[i];
      }
    }
  });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S factor) {
  std::vector<S> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = xd[i] * factor;
  }
  return make_result<S>("scale", x.shape(), std::move(out), {x}, [factor](Node<S>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      p.grad[i] += self.grad[i] * factor;
    }
  });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  std::vector<S> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = xd[i] > S(0) ? xd[i] : S(0);
  }
  return make_result<S>("relu", x.shape(), std::move(out), {x}, [](Node<S>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (p.data[i] > S(0)) {
        p.grad[i] += self.grad[i];
      }
    }
  });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  std::vector<S> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const S v = xd[i];
    if (v >= S(0)) {
      out[i] = S(1) / (S(1) + std::exp(-v));
    } else {
      const S e = std::exp(v);
      out[i] = e / (S(1) + e);
    }
  }
  return make_result<S>("sigmoid", x.shape(), std::move(out), {x}, [](Node<S>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const S y = self.data[i];
      p.grad[i] += self.grad[i] * y * (S(1) - y);
    }
  });
}

template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& x) {
  require_rank2(x, "softmax_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (n == 0) {
    throw DimensionError("softmax_rows: empty row dimension");
  }
  std::vector<S> out(m * n);
  const auto xd = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    const S* row = xd.data() + i * n;
    S mx = row[0];
    for (std::size_t j = 1; j < n; ++j) {
      mx = std::max(mx, row[j]);
    }
    S sum = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const S e = std::exp(row[j] - mx);
      out[i * n + j] = e;
      sum += e;
    }
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] /= sum;
    }
  }
  return make_result<S>("softmax_rows", {m, n}, std::move(out), {x}, [m, n](Node<S>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < m; ++i) {
      const S* y = self.data.data() + i * n;
      const S* dy = self.grad.data() + i * n;
      S dot = 0;
      for (std::size_t j = 0; j < n; ++j) {
        dot += dy[j] * y[j];
      }
      for (std::size_t j = 0; j < n; ++j) {
        p.grad[i * n + j] += y[j] * (dy[j] - dot);
      }
    }
  });
}

template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, S eps) {
  if (x.rank() == 0) {
    throw DimensionError("layer_norm: scalar input");
  }
  if (eps <= S(0)) {
    throw ParameterError("layer_norm: eps must be positive");
  }
  const std::size_t d = x.shape().back();
  if (d < 2) {
    throw DimensionError("layer_norm: last axis must have at least 2 elements");
  }
  const std::size_t rows_n = x.numel() / d;
  std::vector<S> out(x.numel());
  std::vector<S> inv_std(rows_n);
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows_n; ++r) {
    const S* row = xd.data() + r * d;
    S mean = 0;
    for (std::size_t j = 0; j < d; ++j) {
      mean += row[j];
    }
    mean /= S(d);
    S var = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const S c = row[j] - mean;
      var += c * c;
    }
    var /= S(d);
    const S inv = S(1) / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      out[r * d + j] = (row[j] - mean) * inv;
    }
  }
  return make_result<S>(
      "layer_norm", x.shape(), std::move(out), {x},
      [rows_n, d, inv_std = std::move(inv_std)](Node<S>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t r = 0; r < rows_n; ++r) {
          const S* y = self.data.data() + r * d;
          const S* dy = self.grad.data() + r * d;
          S mean_dy = 0, mean_dyy = 0;
          for (std::size_t j = 0; j < d; ++j) {
            mean_dy += dy[j];
            mean_dyy += dy[j] * y[j];
          }
          mean_dy /= S(d);
          mean_dyy /= S(d);
          for (std::size_t j = 0; j < d; ++j) {
            p.grad[r * d + j] += inv_std[r] * (dy[j] - mean_dy - y[j] * mean_dyy);
          }
        }
      });
}

template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) {
    throw ParameterError("dropout: p must satisfy 0 <= p < 1, got " + std::to_string(p));
  }
  if (!training || p == 0.0) {
    return x;
  }
  const S keep_scale = S(1.0 / (1.0 - p));
  std::vector<S> factor(x.numel());
  for (std::size_t i = 0; i < factor.size(); ++i) {
    factor[i] = rng.uniform() < p ? S(0) : keep_scale;
  }
  std::vector<S> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = xd[i] * factor[i];
  }
  return make_result<S>("dropout", x.shape(), std::move(out), {x},
                        [factor = std::move(factor)](Node<S>& self) {
                          auto& pa = *self.parents[0];
                          if (!pa.requires_grad) return;
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                            pa.grad[i] += self.grad[i] * factor[i];
                          }
                        });
}

namespace {

// outer, axis, inner decomposition of a row-major tensor around one axis.
struct AxisSplit {
  std::size_t outer = 1, axis = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.axis = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

template <typename S>
Tensor<S> concat(std::size_t axis, std::span<const Tensor<S>> parts) {
  if (parts.empty()) {
    throw DimensionError("concat: no input tensors");
  }
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis out of range");
  }
  std::size_t axis_total = 0;
  std::vector<std::size_t> axis_sizes;
  for (const auto& t : parts) {
    if (t.rank() != first.size()) {
      throw DimensionError("concat: rank mismatch");
    }
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (i != axis && t.shape()[i] != first[i]) {
        throw DimensionError("concat: shape mismatch at axis " + std::to_string(i) +
                             ", " + shape_str(t.shape()) + " vs " + shape_str(first));
      }
    }
    axis_sizes.push_back(t.shape()[axis]);
    axis_total += t.shape()[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = axis_total;
  const AxisSplit sp = split_axis(out_shape, axis);
  std::vector<S> out(shape_numel(out_shape));
  std::size_t axis_off = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto pd = parts[pi].data();
    const std::size_t pa = axis_sizes[pi];
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy(pd.begin() + o * pa * sp.inner, pd.begin() + (o + 1) * pa * sp.inner,
                out.begin() + (o * axis_total + axis_off) * sp.inner);
    }
    axis_off += pa;
  }
  std::vector<Tensor<S>> inputs(parts.begin(), parts.end());
  return make_result<S>(
      "concat", std::move(out_shape), std::move(out), std::move(inputs),
      [sp, axis_sizes, axis_total](Node<S>& self) {
        std::size_t axis_off = 0;
        for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
          auto& p = *self.parents[pi];
          const std::size_t pa = axis_sizes[pi];
          if (p.requires_grad) {
            for (std::size_t o = 0; o < sp.outer; ++o) {
              const S* src = self.grad.data() + (o * axis_total + axis_off) * sp.inner;
              S* dst = p.grad.data() + o * pa * sp.inner;
              for (std::size_t i = 0; i < pa * sp.inner; ++i) {
                dst[i] += src[i];
              }
            }
          }
          axis_off += pa;
        }
      });
}

template <typename S>
Tensor<S> concat(std::size_t axis, std::initializer_list<Tensor<S>> parts) {
  std::vector<Tensor<S>> v(parts);
  return concat<S>(axis, std::span<const Tensor<S>>(v));
}

template <typename S>
std::vector<Tensor<S>> split(const Tensor<S>& x, std::size_t axis,
                             std::span<const std::size_t> sizes) {
  const AxisSplit sp = split_axis(x.shape(), axis);
  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;
  if (total != sp.axis) {
    throw DimensionError("split: sizes sum to " + std::to_string(total) +
                         " but axis has " + std::to_string(sp.axis));
  }
  std::vector<Tensor<S>> out;
  std::size_t axis_off = 0;
  const auto xd = x.data();
  for (std::size_t part_size : sizes) {
    Shape part_shape = x.shape();
    part_shape[axis] = part_size;
    std::vector<S> vals(shape_numel(part_shape));
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy(xd.begin() + (o * sp.axis + axis_off) * sp.inner,
                xd.begin() + (o * sp.axis + axis_off + part_size) * sp.inner,
                vals.begin() + o * part_size * sp.inner);
    }
    const std::size_t off = axis_off;
    out.push_back(make_result<S>(
        "split", std::move(part_shape), std::move(vals), {x},
        [sp, off, part_size](Node<S>& self) {
          auto& p = *self.parents[0];
          if (!p.requires_grad) return;
          for (std::size_t o = 0; o < sp.outer; ++o) {
            const S* src = self.grad.data() + o * part_size * sp.inner;
            S* dst = p.grad.data() + (o * sp.axis + off) * sp.inner;
            for (std::size_t i = 0; i < part_size * sp.inner; ++i) {
              dst[i] += src[i];
            }
          }
        }));
    axis_off += part_size;
  }
  return out;
}

template <typename S>
Tensor<S> reduce_mean(const Tensor<S>& x, std::size_t axis) {
  const AxisSplit sp = split_axis(x.shape(), axis);
  if (sp.axis == 0) {
    throw DimensionError("reduce_mean: empty reduction axis");
  }
  Shape out_shape;
  for (std::size_t i = 0; i < x.rank(); ++i) {
    if (i != axis) out_shape.push_back(x.shape()[i]);
  }
  std::vector<S> out(sp.outer * sp.inner, S(0));
  const auto xd = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t a = 0; a < sp.axis; ++a) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        out[o * sp.inner + i] += xd[(o * sp.axis + a) * sp.inner + i];
      }
    }
  }
  const S inv = S(1) / S(sp.axis);
  for (S& v : out) v *= inv;
  return make_result<S>("reduce_mean", std::move(out_shape), std::move(out), {x},
                        [sp, inv](Node<S>& self) {
                          auto& p = *self.parents[0];
                          if (!p.requires_grad) return;
                          for (std::size_t o = 0; o < sp.outer; ++o) {
                            for (std::size_t a = 0; a < sp.axis; ++a) {
                              for (std::size_t i = 0; i < sp.inner; ++i) {
                                p.grad[(o * sp.axis + a) * sp.inner + i] +=
                                    self.grad[o * sp.inner + i] * inv;
                              }
                            }
                          }
                        });
}

template <typename S>
Tensor<S> reduce_max(const Tensor<S>& x, std::size_t axis) {
  const AxisSplit sp = split_axis(x.shape(), axis);
  if (sp.axis == 0) {
    throw DimensionError("reduce_max: empty reduction axis");
  }
  Shape out_shape;
  for (std::size_t i = 0; i < x.rank(); ++i) {
    if (i != axis) out_shape.push_back(x.shape()[i]);
  }
  std::vector<S> out(sp.outer * sp.inner);
  std::vector<std::size_t> argmax(sp.outer * sp.inner);
  const auto xd = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      std::size_t best = (o * sp.axis) * sp.inner + i;
      S best_v = xd[best];
      for (std::size_t a = 1; a < sp.axis; ++a) {
        const std::size_t idx = (o * sp.axis + a) * sp.inner + i;
        if (xd[idx] > best_v) {
          best_v = xd[idx];
          best = idx;
        }
      }
      out[o * sp.inner + i] = best_v;
      argmax[o * sp.inner + i] = best;
    }
  }
  return make_result<S>("reduce_max", std::move(out_shape), std::move(out), {x},
                        [argmax = std::move(argmax)](Node<S>& self) {
                          auto& p = *self.parents[0];
                          if (!p.requires_grad) return;
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                            p.grad[argmax[i]] += self.grad[i];
                          }
                        });
}

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
  S s = 0;
  for (S v : x.data()) s += v;
  return make_result<S>("sum_all", {}, {s}, {x}, [](Node<S>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < p.grad.size(); ++i) {
      p.grad[i] += self.grad[0];
    }
  });
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& x) {
  if (x.numel() == 0) {
    throw DimensionError("mean_all: empty tensor");
  }
  return scale(sum_all(x), S(1) / S(x.numel()));
}

template <typename S>
Tensor<S> rows(const Tensor<S>& x, std::size_t start, std::size_t count) {
  require_rank2(x, "rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (start + count > m) {
    throw DimensionError("rows: slice [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") exceeds " +
                         std::to_string(m) + " rows");
  }
  const auto xd = x.data();
  std::vector<S> out(xd.begin() + start * n, xd.begin() + (start + count) * n);
  return make_result<S>("rows", {count, n}, std::move(out), {x},
                        [start, n](Node<S>& self) {
                          auto& p = *self.parents[0];
                          if (!p.requires_grad) return;
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                            p.grad[start * n + i] += self.grad[i];
                          }
                        });
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  std::vector<S> out(x.data().begin(), x.data().end());
  return make_result<S>("reshape", std::move(shape), std::move(out), {x},
                        [](Node<S>& self) {
                          auto& p = *self.parents[0];
                          if (!p.requires_grad) return;
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                            p.grad[i] += self.grad[i];
                          }
                        });
}

template <typename S>
Tensor<S> binary_cross_entropy(const Tensor<S>& probs, const Tensor<S>& targets) {
  if (probs.shape() != targets.shape()) {
    throw DimensionError("binary_cross_entropy: shape mismatch, " +
                         shape_str(probs.shape()) + " vs " + shape_str(targets.shape()));
  }
  const S eps = bce_clamp_eps<S>();
  const auto pd = probs.data();
  const auto td = targets.data();
  std::vector<S> out(probs.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const S p = std::clamp(pd[i], eps, S(1) - eps);
    out[i] = -(td[i] * std::log(p) + (S(1) - td[i]) * std::log(S(1) - p));
  }
  return make_result<S>(
      "binary_cross_entropy", probs.shape(), std::move(out), {probs, targets},
      [eps](Node<S>& self) {
        auto& pp = *self.parents[0];
        auto& pt = *self.parents[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const S raw = pp.data[i];
          const S p = std::clamp(raw, eps, S(1) - eps);
          if (pp.requires_grad && raw > eps && raw < S(1) - eps) {
            pp.grad[i] += self.grad[i] * (p - pt.data[i]) / (p * (S(1) - p));
          }
          if (pt.requires_grad) {
            pt.grad[i] += self.grad[i] * std::log((S(1) - p) / p);
          }
        }
      });
}

// --- backward --------------------------------------------------------------

template <typename S>
void backward(const Tensor<S>& loss) {
  if (loss.numel() != 1) {
    throw DimensionError("backward: loss must be a single element, got " +
                         shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss does not require grad");
  }
  // Topological order, parents before children, via iterative post-order DFS.
  // The visited set is a sorted pointer vector; graphs here are small enough
  // that insertion cost does not matter.
  std::vector<Node<S>*> topo;
  std::vector<std::pair<Node<S>*, std::size_t>> stack;
  std::vector<Node<S>*> seen_sorted;
  auto mark = [&](Node<S>* n) {
    auto it = std::lower_bound(seen_sorted.begin(), seen_sorted.end(), n);
    if (it != seen_sorted.end() && *it == n) return false;
    seen_sorted.insert(it, n);
    return true;
  };
  Node<S>* root = loss.node().get();
  if (mark(root)) {
    stack.push_back({root, 0});
  }
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<S>* parent = node->parents[next].get();
      ++next;
      if (parent->requires_grad && mark(parent)) {
        stack.push_back({parent, 0});
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }
  // Prepare grad buffers: leaves keep accumulated values, intermediates reset.
  for (Node<S>* n : topo) {
    if (n->leaf) {
      if (n->grad.empty()) {
        n->grad.assign(n->data.size(), S(0));
      }
    } else {
      n->grad.assign(n->data.size(), S(0));
    }
  }
  root->grad[0] += S(1);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node<S>* n = *it;
    if (n->backprop) {
      n->backprop(*n);
    }
  }
}

// --- init helpers ----------------------------------------------------------

template <typename S>
Tensor<S> uniform_init(Shape shape, S lo, S hi, Rng& rng, bool requires_grad) {
  std::vector<S> vals(shape_numel(shape));
  for (S& v : vals) {
    v = S(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
  }
  return Tensor<S>::from_data(std::move(shape), std::move(vals), requires_grad);
}

template <typename S>
Tensor<S> normal_init(Shape shape, S mean, S stddev, Rng& rng, bool requires_grad) {
  std::vector<S> vals(shape_numel(shape));
  for (S& v : vals) {
    v = S(rng.normal(static_cast<double>(mean), static_cast<double>(stddev)));
  }
  return Tensor<S>::from_data(std::move(shape), std::move(vals), requires_grad);
}

// --- explicit instantiations -----------------------------------------------

#define VAD_INSTANTIATE_TENSOR(S)                                                        \
  template class Tensor<S>;                                                              \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                         \
  template Tensor<S> transpose(const Tensor<S>&);                                        \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                            \
  template Tensor<S> add_rowvec(const Tensor<S>&, const Tensor<S>&);                     \
  template Tensor<S> add_colvec(const Tensor<S>&, const Tensor<S>&);                     \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                            \
  template Tensor<S> scale(const Tensor<S>&, S);                                         \
  template Tensor<S> relu(const Tensor<S>&);                                             \
  template Tensor<S> sigmoid(const Tensor<S>&);                                          \
  template Tensor<S> softmax_rows(const Tensor<S>&);                                     \
  template Tensor<S> layer_norm(const Tensor<S>&, S);                                    \
  template Tensor<S> dropout(const Tensor<S>&, double, Rng&, bool);                      \
  template Tensor<S> concat(std::size_t, std::span<const Tensor<S>>);                    \
  template Tensor<S> concat(std::size_t, std::initializer_list<Tensor<S>>);              \
  template std::vector<Tensor<S>> split(const Tensor<S>&, std::size_t,                   \
                                        std::span<const std::size_t>);                   \
  template Tensor<S> reduce_mean(const Tensor<S>&, std::size_t);                         \
  template Tensor<S> reduce_max(const Tensor<S>&, std::size_t);                          \
  template Tensor<S> sum_all(const Tensor<S>&);                                          \
  template Tensor<S> mean_all(const Tensor<S>&);                                         \
  template Tensor<S> rows(const Tensor<S>&, std::size_t, std::size_t);                   \
  template Tensor<S> reshape(const Tensor<S>&, Shape);                                   \
  template Tensor<S> binary_cross_entropy(const Tensor<S>&, const Tensor<S>&);           \
  template void backward(const Tensor<S>&);                                              \
  template Tensor<S> uniform_init(Shape, S, S, Rng&, bool);                              \
  template Tensor<S> normal_init(Shape, S, S, Rng&, bool);

VAD_INSTANTIATE_TENSOR(float)
VAD_INSTANTIATE_TENSOR(double)

#undef VAD_INSTANTIATE_TENSOR

}  // namespace vad
