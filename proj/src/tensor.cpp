#include "relaxeq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace relaxeq {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_str(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got shape " + shape_str(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got shape " + shape_str(shape_));
  return shape_[1];
}

double Tensor::item() const {
  if (data_.size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected matrix, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// c += op(a) * op(b) with optional transposes; all row-major.
void gemm_acc(const Tensor& a, bool ta, const Tensor& b, bool tb, Tensor& c) {
  const std::size_t m = ta ? a.cols() : a.rows();
  const std::size_t k = ta ? a.rows() : a.cols();
  const std::size_t n = tb ? b.rows() : b.cols();
  const std::size_t lda = a.cols();
  const std::size_t ldb = b.cols();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? pa[p * lda + i] : pa[i * lda + p];
      if (av == 0.0) continue;
      double* crow = pc + i * n;
      if (!tb) {
        const double* brow = pb + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * pb[j * ldb + p];
      }
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Tensor c(Shape{a.rows(), b.cols()});
  gemm_acc(a, false, b, false, c);
  return c;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor t(Shape{a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double frobenius_norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(id_); }

Tensor Gradients::of(const Tensor& param) const {
  auto it = by_param_.find(&param);
  if (it == by_param_.end()) return Tensor(param.shape());
  return it->second;
}

void Gradients::accumulate(const Tensor* param, const Tensor& grad) {
  auto [it, inserted] = by_param_.try_emplace(param, grad);
  if (!inserted) {
    for (std::size_t i = 0; i < grad.size(); ++i) it->second[i] += grad[i];
  }
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericalError("non-finite constant recorded on tape");
  nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const Tensor& param) {
  if (!param.all_finite()) throw NumericalError("non-finite parameter recorded on tape");
  nodes_.push_back(Node{param, {}, nullptr, &param, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericalError("operation produced non-finite values (shape " + shape_str(value.shape()) + ")");
  }
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw ContractError("operands recorded on a different tape");
    node.inputs.push_back(v.id());
    node.requires_grad = node.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

std::vector<Tensor> Tape::backward_all(const Var& loss) const {
  if (&loss.tape() != this) throw ContractError("loss recorded on a different tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  std::vector<Tensor> grads(nodes_.size());
  grads[loss.id()] = Tensor(loss.shape(), 1.0);
  std::vector<Tensor> grad_in;
  for (std::size_t k = loss.id() + 1; k-- > 0;) {
    const Node& node = nodes_[k];
    if (!node.backward || grads[k].size() == 0) continue;
    grad_in.clear();
    for (std::size_t in : node.inputs) grad_in.emplace_back(nodes_[in].value.shape());
    node.backward(grads[k], grad_in);
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      const std::size_t in = node.inputs[j];
      if (!nodes_[in].requires_grad) continue;
      if (grads[in].size() == 0 && nodes_[in].value.size() != 0) {
        grads[in] = std::move(grad_in[j]);
      } else {
        for (std::size_t i = 0; i < grads[in].size(); ++i) grads[in][i] += grad_in[j][i];
      }
    }
  }
  return grads;
}

Gradients Tape::backward(const Var& loss) const {
  std::vector<Tensor> grads = backward_all(loss);
  Gradients out;
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    if (!nodes_[k].param) continue;
    if (grads[k].size() == 0) {
      out.accumulate(nodes_[k].param, Tensor(nodes_[k].value.shape()));
    } else {
      out.accumulate(nodes_[k].param, grads[k]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Tape& common_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands recorded on different tapes");
  return a.tape();
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b);
  Tensor out = matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  const Tape* tp = &tape;
  return tape.record(std::move(out), {a, b}, [tp, ia, ib](const Tensor& g, std::vector<Tensor>& gi) {
    if (tp->requires_grad(ia)) gemm_acc(g, false, tp->value(ib), true, gi[0]);  // dA = dC B^T
    if (tp->requires_grad(ib)) gemm_acc(tp->value(ia), true, g, false, gi[1]);  // dB = A^T dC
  });
}

Var transpose(const Var& a) {
  Tensor out = transpose(a.value());
  return a.tape().record(std::move(out), {a}, [](const Tensor& g, std::vector<Tensor>& gi) {
    gi[0] = transpose(g);
  });
}

Var add(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return tape.record(std::move(out), {a, b}, [](const Tensor& g, std::vector<Tensor>& gi) {
    gi[0] = g;
    gi[1] = g;
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return tape.record(std::move(out), {a, b}, [](const Tensor& g, std::vector<Tensor>& gi) {
    gi[0] = g;
    for (std::size_t i = 0; i < g.size(); ++i) gi[1][i] = -g[i];
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const Tape* tp = &tape;
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [tp, ia, ib](const Tensor& g, std::vector<Tensor>& gi) {
    const Tensor& av = tp->value(ia);
    const Tensor& bv = tp->value(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      gi[0][i] = g[i] * bv[i];
      gi[1][i] = g[i] * av[i];
    }
  });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  const Tape* tp = &a.tape();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [tp, ia](const Tensor& g, std::vector<Tensor>& gi) {
    const Tensor& av = tp->value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] = av[i] > 0.0 ? g[i] : 0.0;
  });
}

Var sigmoid(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = 1.0 / (1.0 + std::exp(-v));
  Tensor s = out;
  return a.tape().record(std::move(out), {a}, [s = std::move(s)](const Tensor& g, std::vector<Tensor>& gi) {
    for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] = g[i] * s[i] * (1.0 - s[i]);
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  return a.tape().record(std::move(out), {a}, [s](const Tensor& g, std::vector<Tensor>& gi) {
    for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] = g[i] * s;
  });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return a.tape().record(Tensor::scalar(total), {a}, [](const Tensor& g, std::vector<Tensor>& gi) {
    std::fill(gi[0].data().begin(), gi[0].data().end(), g[0]);
  });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record(std::move(out), {a}, [](const Tensor& g, std::vector<Tensor>& gi) {
    std::copy(g.data().begin(), g.data().end(), gi[0].data().begin());
  });
}

Var l2_norm(const Var& v, double eps) {
  double ss = eps * eps;
  for (double x : v.value().data()) ss += x * x;
  const double norm = std::sqrt(ss);
  const Tape* tp = &v.tape();
  const std::size_t iv = v.id();
  return v.tape().record(Tensor::scalar(norm), {v}, [tp, iv, norm](const Tensor& g, std::vector<Tensor>& gi) {
    if (norm == 0.0) return;
    const Tensor& x = tp->value(iv);
    for (std::size_t i = 0; i < x.size(); ++i) gi[0][i] = g[0] * x[i] / norm;
  });
}

Var row_norms(const Var& x, double eps) {
  const Tensor& xv = x.value();
  require_matrix(xv, "row_norms");
  const std::size_t b = xv.rows(), n = xv.cols();
  Tensor out(Shape{b});
  for (std::size_t r = 0; r < b; ++r) {
    double ss = eps * eps;
    for (std::size_t c = 0; c < n; ++c) ss += xv.at(r, c) * xv.at(r, c);
    out[r] = std::sqrt(ss);
  }
  Tensor norms = out;
  const Tape* tp = &x.tape();
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [tp, ix, norms = std::move(norms)](const Tensor& g, std::vector<Tensor>& gi) {
    const Tensor& xv = tp->value(ix);
    const std::size_t n = xv.cols();
    for (std::size_t r = 0; r < norms.size(); ++r) {
      if (norms[r] == 0.0) continue;
      const double f = g[r] / norms[r];
      for (std::size_t c = 0; c < n; ++c) gi[0].at(r, c) = f * xv.at(r, c);
    }
  });
}

Var add_rowwise(const Var& x, const Var& bias) {
  Tape& tape = common_tape(x, bias);
  const Tensor& xv = x.value();
  require_matrix(xv, "add_rowwise");
  if (bias.value().size() != xv.cols()) {
    throw DimensionError("add_rowwise: bias " + shape_str(bias.shape()) + " vs rows of " + shape_str(xv.shape()));
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c) out.at(r, c) += bias.value()[c];
  return tape.record(std::move(out), {x, bias}, [](const Tensor& g, std::vector<Tensor>& gi) {
    gi[0] = g;
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gi[1][c] += g.at(r, c);
  });
}

Var kron_identity(const Var& a, std::size_t k) {
  const Tensor& av = a.value();
  require_matrix(av, "kron_identity");
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out(Shape{m * k, n * k});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t d = 0; d < k; ++d) out.at(i * k + d, j * k + d) = av.at(i, j);
  return a.tape().record(std::move(out), {a}, [k](const Tensor& g, std::vector<Tensor>& gi) {
    Tensor& ga = gi[0];
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) {
        double s = 0.0;
        for (std::size_t d = 0; d < k; ++d) s += g.at(i * k + d, j * k + d);
        ga.at(i, j) = s;
      }
  });
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  require_matrix(z, "cross_entropy");
  const std::size_t b = z.rows(), kcls = z.cols();
  if (labels.size() != b) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_str(z.shape()));
  }
  if (b == 0) throw ContractError("cross_entropy on an empty batch");
  Tensor probs(Shape{b, kcls});
  double loss = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= kcls) throw ContractError("label out of range");
    double mx = z.at(r, 0);
    for (std::size_t c = 1; c < kcls; ++c) mx = std::max(mx, z.at(r, c));
    double se = 0.0;
    for (std::size_t c = 0; c < kcls; ++c) se += std::exp(z.at(r, c) - mx);
    const double lse = mx + std::log(se);
    for (std::size_t c = 0; c < kcls; ++c) probs.at(r, c) = std::exp(z.at(r, c) - lse);
    loss += lse - z.at(r, static_cast<std::size_t>(y));
  }
  loss /= static_cast<double>(b);
  std::vector<int> ys(labels.begin(), labels.end());
  return logits.tape().record(Tensor::scalar(loss), {logits},
                              [probs = std::move(probs), ys = std::move(ys)](const Tensor& g, std::vector<Tensor>& gi) {
                                const double f = g[0] / static_cast<double>(ys.size());
                                Tensor& gz = gi[0];
                                for (std::size_t r = 0; r < probs.rows(); ++r) {
                                  for (std::size_t c = 0; c < probs.cols(); ++c) gz.at(r, c) = f * probs.at(r, c);
                                  gz.at(r, static_cast<std::size_t>(ys[r])) -= f;
                                }
                              });
}

Var mse(const Var& pred, const Tensor& target) {
  require_same_shape(pred.value(), target, "mse");
  Var diff = sub(pred, pred.tape().constant(target));
  return mean(mul(diff, diff));
}

}  // namespace relaxeq
