#include "relaxeq/layers.hpp"

#include <cmath>

namespace relaxeq {

namespace {

constexpr double kNormEps = 1e-12;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, stddev);
  for (double& v : t.data()) v = n(rng);
  return t;
}

std::shared_ptr<const GeneratorPair> make_pair(const SymmetrySpec& in, const SymmetrySpec& out) {
  return std::make_shared<const GeneratorPair>(pair_generators(in, out));
}

double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

}  // namespace

SymmetrySpec VNRelaxedLinear::rep_in() const { return SymmetrySpec::copies(SymmetrySpec::so3_std(), static_cast<int>(c_in)); }
SymmetrySpec VNRelaxedLinear::rep_out() const { return SymmetrySpec::copies(SymmetrySpec::so3_std(), static_cast<int>(c_out)); }

std::string layer_kind(const Layer& layer) {
  return std::visit(overloaded{[](const RelaxedLinear&) { return std::string("relaxed_linear"); },
                               [](const VNRelaxedLinear&) { return std::string("vn_relaxed_linear"); },
                               [](const GatedNorm&) { return std::string("gated_norm"); },
                               [](const InvariantHead&) { return std::string("invariant_head"); }},
                    layer);
}

SymmetrySpec layer_rep_in(const Layer& layer) {
  return std::visit(overloaded{[](const RelaxedLinear& l) { return l.rep_in; },
                               [](const VNRelaxedLinear& l) { return l.rep_in(); },
                               [](const GatedNorm& l) { return l.rep; },
                               [](const InvariantHead& l) { return l.rep; }},
                    layer);
}

SymmetrySpec layer_rep_out(const Layer& layer) {
  return std::visit(overloaded{[](const RelaxedLinear& l) { return l.rep_out; },
                               [](const VNRelaxedLinear& l) { return l.rep_out(); },
                               [](const GatedNorm& l) { return l.rep; },
                               [](const InvariantHead& l) { return SymmetrySpec::trivial(static_cast<int>(l.n_out())); }},
                    layer);
}

SymmetrySpec Model::rep_in() const {
  if (layers.empty()) throw ContractError("empty model");
  return layer_rep_in(layers.front());
}

SymmetrySpec Model::rep_out() const {
  if (layers.empty()) throw ContractError("empty model");
  return layer_rep_out(layers.back());
}

std::vector<NamedParam> Model::parameters() {
  std::vector<NamedParam> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "layer" + std::to_string(i) + ".";
    std::visit(overloaded{[&](RelaxedLinear& l) {
                            out.push_back({p + "coeffs", &l.coeffs});
                            if (l.W) out.push_back({p + "W", &*l.W});
                          },
                          [&](VNRelaxedLinear& l) {
                            out.push_back({p + "W_e", &l.W_e});
                            if (l.W) out.push_back({p + "W", &*l.W});
                          },
                          [&](GatedNorm& l) {
                            out.push_back({p + "w", &l.w});
                            out.push_back({p + "b", &l.b});
                          },
                          [&](InvariantHead& l) {
                            out.push_back({p + "weight", &l.weight});
                            out.push_back({p + "bias", &l.bias});
                          }},
               layers[i]);
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const NamedParam& p : const_cast<Model*>(this)->parameters()) n += p.tensor->size();
  return n;
}

std::size_t Model::relaxed_count() const {
  std::size_t n = 0;
  for (const Layer& layer : layers) {
    if (const auto* l = std::get_if<RelaxedLinear>(&layer); l && l->W) ++n;
    if (const auto* l = std::get_if<VNRelaxedLinear>(&layer); l && l->W) ++n;
  }
  return n;
}

std::vector<std::size_t> Model::intertwiner_dims() const {
  std::vector<std::size_t> dims;
  for (const Layer& layer : layers) {
    if (const auto* l = std::get_if<RelaxedLinear>(&layer)) dims.push_back(l->basis->dim());
    if (const auto* l = std::get_if<VNRelaxedLinear>(&layer)) dims.push_back(l->W_e.size());
  }
  return dims;
}

void Model::validate() const {
  for (std::size_t i = 1; i < layers.size(); ++i) {
    const SymmetrySpec prev = layer_rep_out(layers[i - 1]);
    const SymmetrySpec next = layer_rep_in(layers[i]);
    if (!(prev == next)) {
      throw DimensionError("layer " + std::to_string(i) + ": input representation " + next.name() +
                           " does not match previous output " + prev.name());
    }
  }
}

// ---------------------------------------------------------------------------

Var gated_norm(const Var& x, const Var& w, const Var& b, const std::vector<Block>& blocks) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("gated_norm: expected [B x n], got " + shape_str(xv.shape()));
  if (w.value().size() != blocks.size() || b.value().size() != blocks.size()) {
    throw DimensionError("gated_norm: parameter count differs from block count");
  }
  const std::size_t batch = xv.rows();
  const std::size_t nb = blocks.size();
  Tensor out = xv;
  Tensor s(Shape{batch, nb});
  Tensor gate(Shape{batch, nb});
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t k = 0; k < nb; ++k) {
      const Block& bl = blocks[k];
      double sk;
      if (bl.trivial) {
        sk = xv.at(r, bl.offset);
      } else {
        double ss = kNormEps * kNormEps;
        for (std::size_t j = 0; j < bl.size; ++j) ss += xv.at(r, bl.offset + j) * xv.at(r, bl.offset + j);
        sk = std::sqrt(ss);
      }
      const double gk = sigmoid(w.value()[k] * sk + b.value()[k]);
      s.at(r, k) = sk;
      gate.at(r, k) = gk;
      for (std::size_t j = 0; j < bl.size; ++j) out.at(r, bl.offset + j) *= gk;
    }
  }
  Tape& tape = x.tape();
  const Tape* tp = &tape;
  const std::size_t ix = x.id(), iw = w.id();
  return tape.record(std::move(out), {x, w, b},
                     [tp, ix, iw, blocks, s = std::move(s), gate = std::move(gate)](const Tensor& g, std::vector<Tensor>& gi) {
                       const Tensor& xv = tp->value(ix);
                       const Tensor& wv = tp->value(iw);
                       for (std::size_t r = 0; r < s.rows(); ++r) {
                         for (std::size_t k = 0; k < blocks.size(); ++k) {
                           const Block& bl = blocks[k];
                           double gv = 0.0;
                           for (std::size_t j = 0; j < bl.size; ++j) gv += g.at(r, bl.offset + j) * xv.at(r, bl.offset + j);
                           const double gk = gate.at(r, k);
                           const double dgate = gv * gk * (1.0 - gk);  // dL/du
                           gi[1][k] += dgate * s.at(r, k);
                           gi[2][k] += dgate;
                           const double du_ds = wv[k];
                           for (std::size_t j = 0; j < bl.size; ++j) {
                             const std::size_t c = bl.offset + j;
                             const double ds_dx = bl.trivial ? 1.0 : xv.at(r, c) / s.at(r, k);
                             gi[0].at(r, c) = g.at(r, c) * gk + dgate * du_ds * ds_dx;
                           }
                         }
                       }
                     });
}

Var block_features(const Var& x, const std::vector<Block>& blocks) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("block_features: expected [B x n], got " + shape_str(xv.shape()));
  const std::size_t batch = xv.rows();
  Tensor out(Shape{batch, blocks.size()});
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      const Block& bl = blocks[k];
      if (bl.trivial) {
        out.at(r, k) = xv.at(r, bl.offset);
      } else {
        double ss = kNormEps * kNormEps;
        for (std::size_t j = 0; j < bl.size; ++j) ss += xv.at(r, bl.offset + j) * xv.at(r, bl.offset + j);
        out.at(r, k) = std::sqrt(ss);
      }
    }
  }
  Tensor feats = out;
  const Tape* tp = &x.tape();
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [tp, ix, blocks, feats = std::move(feats)](const Tensor& g, std::vector<Tensor>& gi) {
    const Tensor& xv = tp->value(ix);
    for (std::size_t r = 0; r < feats.rows(); ++r) {
      for (std::size_t k = 0; k < blocks.size(); ++k) {
        const Block& bl = blocks[k];
        if (bl.trivial) {
          gi[0].at(r, bl.offset) += g.at(r, k);
        } else {
          const double f = g.at(r, k) / feats.at(r, k);
          for (std::size_t j = 0; j < bl.size; ++j) gi[0].at(r, bl.offset + j) += f * xv.at(r, bl.offset + j);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------

ForwardResult forward(const Model& model, Tape& tape, const Tensor& x, double theta, bool track_params) {
  if (theta < 0.0) throw ContractError("theta must be non-negative");
  if (model.layers.empty()) throw ContractError("empty model");
  const auto param = [&](const Tensor& t) { return track_params ? tape.parameter(t) : tape.constant(t); };

  ForwardResult result;
  Var h = tape.constant(x);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& layer = model.layers[i];
    const SymmetrySpec rep = layer_rep_in(layer);
    if (h.value().rank() != 2 || h.value().cols() != static_cast<std::size_t>(rep.dim())) {
      throw DimensionError("layer " + std::to_string(i) + " (" + layer_kind(layer) + "): expected input width " +
                           std::to_string(rep.dim()) + ", got shape " + shape_str(h.shape()));
    }
    try {
      std::visit(overloaded{[&](const RelaxedLinear& l) {
                              Var we = assemble(*l.basis, param(l.coeffs));
                              Var out = matmul(h, transpose(we));
                              if (l.W) {
                                Var w = param(*l.W);
                                Var act = matmul(h, transpose(w));
                                result.relaxed.push_back(RelaxedSide{i, h, w, act, l.generators});
                                if (theta != 0.0) out = add(out, scale(act, theta));
                              }
                              h = out;
                            },
                            [&](const VNRelaxedLinear& l) {
                              Var we = kron_identity(param(l.W_e), 3);
                              Var out = matmul(h, transpose(we));
                              if (l.W) {
                                Var w = param(*l.W);
                                Var act = matmul(h, transpose(w));
                                result.relaxed.push_back(RelaxedSide{i, h, w, act, l.generators});
                                if (theta != 0.0) out = add(out, scale(act, theta));
                              }
                              h = out;
                            },
                            [&](const GatedNorm& l) { h = gated_norm(h, param(l.w), param(l.b), l.blocks); },
                            [&](const InvariantHead& l) {
                              Var feats = block_features(h, l.blocks);
                              h = add_rowwise(matmul(feats, transpose(param(l.weight))), param(l.bias));
                            }},
                 layer);
    } catch (const DimensionError& e) {
      throw DimensionError("layer " + std::to_string(i) + ": " + e.what());
    }
  }
  result.output = h;
  return result;
}

Tensor evaluate(const Model& model, const Tensor& x, double theta) {
  Tape tape;
  return forward(model, tape, x, theta, false).output.value();
}

Model project(const Model& model) {
  Model out = model;
  out.theta = 0.0;
  for (Layer& layer : out.layers) {
    if (auto* l = std::get_if<RelaxedLinear>(&layer)) l->W.reset();
    if (auto* l = std::get_if<VNRelaxedLinear>(&layer)) l->W.reset();
  }
  return out;
}

Tensor vec(const Tensor& X) {
  if (X.rank() != 2) throw DimensionError("vec: expected a matrix, got " + shape_str(X.shape()));
  return X.reshaped(Shape{1, X.size()});
}

Tensor uvec(const Tensor& v, std::size_t rows) {
  if (rows == 0 || v.size() % rows != 0) throw DimensionError("uvec: cannot fold " + shape_str(v.shape()));
  return v.reshaped(Shape{rows, v.size() / rows});
}

Tensor vn_forward(const VNRelaxedLinear& layer, const Tensor& X, double theta) {
  if (X.rank() != 2 || X.cols() != 3) throw DimensionError("vn_forward: expected C x 3 features, got " + shape_str(X.shape()));
  if (X.rows() != layer.c_in) {
    throw DimensionError("vn_forward: layer expects " + std::to_string(layer.c_in) + " channels, got " + shape_str(X.shape()));
  }
  Model m;
  m.layers.push_back(layer);
  return uvec(evaluate(m, vec(X), theta), layer.c_out);
}

// ---------------------------------------------------------------------------

RelaxedLinear make_relaxed_linear(const SymmetrySpec& rep_in, const SymmetrySpec& rep_out, bool relaxed, Rng& rng) {
  RelaxedLinear l{rep_in, rep_out, cached_basis(rep_in, rep_out), make_pair(rep_in, rep_out), Tensor(), std::nullopt};
  const std::size_t d = l.basis->dim();
  // Orthonormal basis: |W_e|_F^2 = sum c_i^2, so std sqrt(out/d) gives |W_e|_F ~ sqrt(out).
  const double coeff_std = d ? std::sqrt(static_cast<double>(rep_out.dim()) / static_cast<double>(d)) : 0.0;
  l.coeffs = normal_tensor(Shape{d}, coeff_std, rng);
  // W is drawn either way so a baseline shares the method's equivariant init.
  const auto in = static_cast<std::size_t>(rep_in.dim());
  const auto out = static_cast<std::size_t>(rep_out.dim());
  Tensor W = normal_tensor(Shape{out, in}, 0.1 / std::sqrt(static_cast<double>(in)), rng);
  if (relaxed) l.W = std::move(W);
  return l;
}

VNRelaxedLinear make_vn_linear(std::size_t c_in, std::size_t c_out, bool relaxed, Rng& rng) {
  VNRelaxedLinear l;
  l.c_in = c_in;
  l.c_out = c_out;
  l.generators = make_pair(l.rep_in(), l.rep_out());
  // |W_e (x) I_3|_F ~ sqrt(3 c_out) with entry std 1/sqrt(c_in).
  l.W_e = normal_tensor(Shape{c_out, c_in}, 1.0 / std::sqrt(static_cast<double>(c_in)), rng);
  Tensor W = normal_tensor(Shape{3 * c_out, 3 * c_in}, 0.1 / std::sqrt(3.0 * static_cast<double>(c_in)), rng);
  if (relaxed) l.W = std::move(W);
  return l;
}

GatedNorm make_gated_norm(const SymmetrySpec& rep) {
  GatedNorm g{rep, rep.blocks(), Tensor(), Tensor()};
  g.w = Tensor(Shape{g.blocks.size()}, 0.0);
  g.b = Tensor(Shape{g.blocks.size()}, 0.0);
  return g;
}

InvariantHead make_invariant_head(const SymmetrySpec& rep, std::size_t n_out, Rng& rng) {
  InvariantHead h{rep, rep.blocks(), Tensor(), Tensor()};
  const std::size_t nf = h.blocks.size();
  h.weight = normal_tensor(Shape{n_out, nf}, 1.0 / std::sqrt(static_cast<double>(nf)), rng);
  h.bias = Tensor(Shape{n_out}, 0.0);
  return h;
}

}  // namespace relaxeq
