#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "relaxeq/intertwiner.hpp"
#include "relaxeq/symmetry.hpp"
#include "relaxeq/tensor.hpp"

namespace relaxeq {

/// f(x) = W_e x + θ W x with W_e in the intertwiner span. W is absent for
/// baseline and projected layers.
struct RelaxedLinear {
  SymmetrySpec rep_in;
  SymmetrySpec rep_out;
  std::shared_ptr<const IntertwinerBasis> basis;
  std::shared_ptr<const GeneratorPair> generators;
  Tensor coeffs;
  std::optional<Tensor> W;
};

/// Vector-neuron layer on C x 3 features: W_e X + θ uvec(W vec(X)).
/// Features are stored as the row-major vec of X, so the equivariant part
/// acts as (W_e ⊗ I_3) on the flattened row.
struct VNRelaxedLinear {
  std::size_t c_in = 0;
  std::size_t c_out = 0;
  std::shared_ptr<const GeneratorPair> generators;
  Tensor W_e;
  std::optional<Tensor> W;

  SymmetrySpec rep_in() const;
  SymmetrySpec rep_out() const;
};

/// Per-block gate v * sigmoid(w_b * |v| + b_b). Trivial coordinates gate on
/// their own value.
struct GatedNorm {
  SymmetrySpec rep;
  std::vector<Block> blocks;
  Tensor w;
  Tensor b;
};

/// Block norms (trivial coordinates pass through) followed by a dense layer.
struct InvariantHead {
  SymmetrySpec rep;
  std::vector<Block> blocks;
  Tensor weight;  // [n_out x n_blocks]
  Tensor bias;    // [n_out]

  std::size_t n_out() const { return bias.size(); }
};

using Layer = std::variant<RelaxedLinear, VNRelaxedLinear, GatedNorm, InvariantHead>;

struct NamedParam {
  std::string name;
  Tensor* tensor;
};

class Model {
 public:
  std::vector<Layer> layers;
  double theta = 0.0;

  SymmetrySpec rep_in() const;
  SymmetrySpec rep_out() const;
  std::vector<NamedParam> parameters();
  std::size_t parameter_count() const;
  /// Number of layers still carrying an unconstrained W.
  std::size_t relaxed_count() const;
  /// Intertwiner dimension of every equivariant linear layer, in order.
  std::vector<std::size_t> intertwiner_dims() const;
  /// Checks that adjacent layer representations agree.
  void validate() const;
};

std::string layer_kind(const Layer& layer);
SymmetrySpec layer_rep_in(const Layer& layer);
SymmetrySpec layer_rep_out(const Layer& layer);

/// Side products of one relaxed layer: its input f_{i-1}(x), its W and the
/// relaxation activation W f_{i-1}(x).
struct RelaxedSide {
  std::size_t layer = 0;
  Var input;
  Var weight;
  Var activation;
  std::shared_ptr<const GeneratorPair> generators;
};

struct ForwardResult {
  Var output;
  std::vector<RelaxedSide> relaxed;
};

/// Batched forward on x [B x in_dim]. With track_params false the
/// parameters enter the tape as constants.
ForwardResult forward(const Model& model, Tape& tape, const Tensor& x, double theta, bool track_params = true);
/// Gradient-free evaluation.
Tensor evaluate(const Model& model, const Tensor& x, double theta);

/// θ pinned to 0 and every W dropped.
Model project(const Model& model);

Tensor vn_forward(const VNRelaxedLinear& layer, const Tensor& X, double theta);
/// Row-major flattening of a C x 3 feature matrix and its inverse.
Tensor vec(const Tensor& X);
Tensor uvec(const Tensor& v, std::size_t rows);

// Construction with the default initialization.
RelaxedLinear make_relaxed_linear(const SymmetrySpec& rep_in, const SymmetrySpec& rep_out, bool relaxed, Rng& rng);
VNRelaxedLinear make_vn_linear(std::size_t c_in, std::size_t c_out, bool relaxed, Rng& rng);
GatedNorm make_gated_norm(const SymmetrySpec& rep);
InvariantHead make_invariant_head(const SymmetrySpec& rep, std::size_t n_out, Rng& rng);

// Fused block operations used by GatedNorm and InvariantHead.
Var gated_norm(const Var& x, const Var& w, const Var& b, const std::vector<Block>& blocks);
Var block_features(const Var& x, const std::vector<Block>& blocks);

}  // namespace relaxeq
