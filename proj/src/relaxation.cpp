#include "relaxeq/relaxation.hpp"

#include "relaxeq/intertwiner.hpp"

namespace relaxeq {

ThetaSchedule::ThetaSchedule(Kind kind, int total_epochs, double value)
    : kind_(kind), total_epochs_(total_epochs), value_(value) {}

ThetaSchedule ThetaSchedule::cyclic(int total_epochs) {
  if (total_epochs < 1) throw ConfigError("schedule needs at least one epoch");
  return ThetaSchedule(Kind::Cyclic, total_epochs, 0.0);
}

ThetaSchedule ThetaSchedule::constant(int total_epochs, double value) {
  if (total_epochs < 1) throw ConfigError("schedule needs at least one epoch");
  if (!(value >= 0.0)) throw ConfigError("constant theta must be non-negative");
  return ThetaSchedule(Kind::Constant, total_epochs, value);
}

double ThetaSchedule::at(int epoch) const {
  if (epoch < 0 || epoch > total_epochs_) {
    throw ContractError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(total_epochs_) + "]");
  }
  if (kind_ == Kind::Constant) return value_;
  const double n = total_epochs_;
  const double ratio = 2.0 * epoch / n;
  return 2 * epoch < total_epochs_ ? ratio : 2.0 - ratio;
}

Matrix lie_deriv_layer(const Matrix& W, const Matrix& gen_in, const Matrix& gen_out, SymmetryKind kind) {
  if (gen_out.cols() != W.rows() || W.cols() != gen_in.rows()) {
    throw DimensionError("lie_deriv_layer: W is " + std::to_string(W.rows()) + "x" + std::to_string(W.cols()) +
                         ", generators act on " + std::to_string(gen_in.rows()) + " -> " + std::to_string(gen_out.rows()));
  }
  if (kind == SymmetryKind::Continuous) return -gen_out * W + W * gen_in;
  return gen_out * W - W * gen_in;
}

Var lie_deriv_layer(const Var& W, const Matrix& gen_in, const Matrix& gen_out, SymmetryKind kind) {
  const Tensor& wv = W.value();
  if (wv.rank() != 2 || static_cast<Eigen::Index>(wv.rows()) != gen_out.cols() ||
      static_cast<Eigen::Index>(wv.cols()) != gen_in.rows()) {
    throw DimensionError("lie_deriv_layer: W " + shape_str(wv.shape()) + " incompatible with generators acting on " +
                         std::to_string(gen_in.rows()) + " -> " + std::to_string(gen_out.rows()));
  }
  Tape& tape = W.tape();
  Var left = matmul(tape.constant(to_tensor(gen_out)), W);
  Var right = matmul(W, tape.constant(to_tensor(gen_in)));
  return kind == SymmetryKind::Continuous ? sub(right, left) : sub(left, right);
}

Var lie_reg_term(const Var& W, const Var& x_batch, const GeneratorPair& generators) {
  if (x_batch.value().rank() != 2 || x_batch.value().rows() == 0) throw ContractError("lie_reg_term on an empty batch");
  Tape& tape = W.tape();
  if (generators.in.empty()) return tape.constant(Tensor::scalar(0.0));
  Var total;
  for (std::size_t k = 0; k < generators.in.size(); ++k) {
    Var l = lie_deriv_layer(W, generators.in[k], generators.out[k], generators.kind);
    Var term = mean(row_norms(matmul(x_batch, transpose(l))));
    total = total.valid() ? add(total, term) : term;
  }
  return total;
}

Var actnorm_term(const Var& W, const Var& x_batch) {
  if (x_batch.value().rank() != 2 || x_batch.value().rows() == 0) throw ContractError("actnorm_term on an empty batch");
  return mean(row_norms(matmul(x_batch, transpose(W))));
}

Objective total_objective(const Var& task_loss, const Model& model, const ForwardResult& sides, const RegWeights& weights) {
  Tape& tape = task_loss.tape();
  if (sides.relaxed.size() != model.relaxed_count()) {
    throw ContractError("objective needs side products for " + std::to_string(model.relaxed_count()) +
                        " relaxed layers, got " + std::to_string(sides.relaxed.size()));
  }
  Objective obj;
  Var reg;
  for (const RelaxedSide& side : sides.relaxed) {
    if (!side.input.valid() || !side.weight.valid() || !side.activation.valid() || !side.generators) {
      throw ContractError("incomplete side products for layer " + std::to_string(side.layer));
    }
    if (side.input.value().rows() == 0) throw ContractError("empty batch");
    // The activation already holds W f_{i-1}(x).
    Var act = mean(row_norms(side.activation));
    Var lie = lie_reg_term(side.weight, side.input, *side.generators);
    obj.per_layer_actnorm.push_back(act.value().item());
    obj.per_layer_lie.push_back(lie.value().item());
    Var layer_term;
    if (weights.include_actnorm) layer_term = act;
    if (weights.include_lie) layer_term = layer_term.valid() ? add(layer_term, lie) : lie;
    if (layer_term.valid()) reg = reg.valid() ? add(reg, layer_term) : layer_term;
  }
  if (reg.valid() && weights.lambda_reg != 0.0) {
    obj.regularizer = scale(reg, weights.lambda_reg);
    obj.total = add(task_loss, obj.regularizer);
  } else {
    obj.regularizer = tape.constant(Tensor::scalar(0.0));
    obj.total = task_loss;
  }
  return obj;
}

}  // namespace relaxeq
