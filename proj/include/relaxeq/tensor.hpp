#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "relaxeq/errors.hpp"

namespace relaxeq {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  /// Value of a single-element tensor.
  double item() const;
  bool all_finite() const;
  Tensor reshaped(Shape shape) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::size_t shape_size(const Shape& shape);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
double frobenius_norm(const Tensor& a);

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Parameter gradients produced by Tape::backward, keyed by parameter address.
class Gradients {
 public:
  /// Gradient for a parameter; zeros when the parameter never reached the loss.
  Tensor of(const Tensor& param) const;
  bool contains(const Tensor& param) const { return by_param_.count(&param) != 0; }
  void accumulate(const Tensor* param, const Tensor& grad);

 private:
  std::unordered_map<const Tensor*, Tensor> by_param_;
};

/// Define-by-run reverse-mode tape. One tape per forward/backward pass.
class Tape {
 public:
  /// Writes input gradients given the output gradient. grad_in[k] is
  /// pre-sized to input k and zero-filled; entries for inputs that do not
  /// require gradients may be left untouched.
  using BackwardFn = std::function<void(const Tensor& grad_out, std::vector<Tensor>& grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(const Tensor& param);
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar loss.
  Gradients backward(const Var& loss) const;
  /// Gradients for every recorded node (indexed by node id); used by tests.
  std::vector<Tensor> backward_all(const Var& loss) const;

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    const Tensor* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

// Differentiable operations. Binary elementwise ops require equal shapes.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var scale(const Var& a, double s);
Var sum(const Var& a);
Var mean(const Var& a);
Var reshape(const Var& a, Shape shape);
/// sqrt(sum v^2 + eps^2) over all entries.
Var l2_norm(const Var& v, double eps = 1e-12);
/// Smoothed l2 norm of every row of a [B x n] matrix, giving [B].
Var row_norms(const Var& x, double eps = 1e-12);
/// Adds a [n] bias to every row of [B x n].
Var add_rowwise(const Var& x, const Var& bias);
/// a (x) I_k.
Var kron_identity(const Var& a, std::size_t k);
/// Mean softmax cross-entropy of [B x K] logits against class indices.
Var cross_entropy(const Var& logits, std::span<const int> labels);
/// Mean squared error against a constant target.
Var mse(const Var& pred, const Tensor& target);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

}  // namespace relaxeq
