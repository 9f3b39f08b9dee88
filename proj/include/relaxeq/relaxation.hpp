#pragma once

#include <vector>

#include "relaxeq/layers.hpp"

namespace relaxeq {

class ThetaSchedule {
 public:
  enum class Kind { Cyclic, Constant };

  static ThetaSchedule cyclic(int total_epochs);
  static ThetaSchedule constant(int total_epochs, double value);

  Kind kind() const { return kind_; }
  int total_epochs() const { return total_epochs_; }
  double value() const { return value_; }

  /// θ_i for 0 <= i <= total_epochs: ramps 0 -> 1 -> 0 when cyclic.
  double at(int epoch) const;

 private:
  ThetaSchedule(Kind kind, int total_epochs, double value);

  Kind kind_;
  int total_epochs_;
  double value_;
};

inline double theta_at(const ThetaSchedule& schedule, int epoch) { return schedule.at(epoch); }

struct RegWeights {
  double lambda_reg = 0.01;
  bool include_lie = true;
  bool include_actnorm = true;
};

/// L_A(W): -dρ_out(A) W + W dρ_in(A) for algebra generators, or
/// ρ_out(g) W - W ρ_in(g) for group generators.
Matrix lie_deriv_layer(const Matrix& W, const Matrix& gen_in, const Matrix& gen_out, SymmetryKind kind);
Var lie_deriv_layer(const Var& W, const Matrix& gen_in, const Matrix& gen_out, SymmetryKind kind);

/// mean_x sum_A |L_A(W) x| over a [B x in] batch.
Var lie_reg_term(const Var& W, const Var& x_batch, const GeneratorPair& generators);
/// mean_x |W x| over a [B x in] batch.
Var actnorm_term(const Var& W, const Var& x_batch);

struct Objective {
  Var total;
  Var regularizer;  // λ-weighted; a zero constant when nothing is included
  std::vector<double> per_layer_lie;
  std::vector<double> per_layer_actnorm;
};

/// task_loss + λ Σ_i (|W_i f_{i-1}(x)| + Σ_A |L_A(W_i) f_{i-1}(x)|), batch-averaged.
/// Regularizers see W_i itself, not θ W_i.
Objective total_objective(const Var& task_loss, const Model& model, const ForwardResult& sides, const RegWeights& weights);

}  // namespace relaxeq
