#include "relaxeq/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "relaxeq/relaxation.hpp"

namespace relaxeq {

namespace {

void require_data(const Tensor& data) {
  if (data.rank() != 2 || data.rows() == 0) throw ContractError("metric evaluated on empty data");
}

// Rows of y times m^T, i.e. m applied to every sample.
Tensor apply_rows(const Tensor& y, const Matrix& m) { return matmul(y, transpose(to_tensor(m))); }

double mean_row_norm(const Tensor& a, const Tensor& b) {
  double total = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
      const double d = a.at(r, c) - b.at(r, c);
      ss += d * d;
    }
    total += std::sqrt(ss);
  }
  return total / static_cast<double>(a.rows());
}

}  // namespace

const std::vector<std::string>& metrics_csv_columns() {
  static const std::vector<std::string> cols{"epoch", "theta", "train_loss", "task_loss", "reg_loss",
                                             "test_metric_projected", "test_metric_relaxed", "p_ee", "p_pe", "lie_total"};
  return cols;
}

std::string metrics_csv_header() {
  std::string h;
  for (const auto& c : metrics_csv_columns()) h += (h.empty() ? "" : ",") + c;
  return h;
}

std::string format_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string metrics_csv_row(const MetricsRecord& r) {
  std::string row = std::to_string(r.epoch);
  for (double v : {r.theta, r.train_loss, r.task_loss, r.reg_loss, r.test_metric_projected, r.test_metric_relaxed, r.p_ee,
                   r.p_pe, r.lie_total}) {
    row += "," + format_float(v);
  }
  return row;
}

double p_ee(const Model& model, double theta, const Tensor& data, int n_samples, Rng& rng) {
  require_data(data);
  if (n_samples < 1) throw ContractError("p_ee needs at least one group sample");
  const SymmetrySpec rep_in = model.rep_in();
  const SymmetrySpec rep_out = model.rep_out();
  const auto group = common_group(rep_in, rep_out);
  const Tensor fx = evaluate(model, data, theta);
  const std::size_t n = data.rows(), d_in = data.cols(), d_out = fx.cols();
  // Every round draws a fresh element per sample, so one batched forward
  // pass covers n independent (x, g) pairs.
  double total = 0.0;
  Tensor moved(data.shape()), lhs(fx.shape());
  for (int s = 0; s < n_samples; ++s) {
    for (std::size_t r = 0; r < n; ++r) {
      const GroupDraw draw = draw_element(group, rng);
      Eigen::Map<Eigen::VectorXd>(moved.data().data() + r * d_in, d_in) =
          rep_in.matrix(draw) * Eigen::Map<const Eigen::VectorXd>(data.data().data() + r * d_in, d_in);
      Eigen::Map<Eigen::VectorXd>(lhs.data().data() + r * d_out, d_out) =
          rep_out.matrix(draw) * Eigen::Map<const Eigen::VectorXd>(fx.data().data() + r * d_out, d_out);
    }
    total += mean_row_norm(lhs, evaluate(model, moved, theta));
  }
  return total / n_samples;
}

double p_pe(const Model& model, double theta, const Tensor& data) {
  require_data(data);
  if (theta == 0.0) return 0.0;
  return mean_row_norm(evaluate(model, data, theta), evaluate(model, data, 0.0));
}

LieDerivative model_lie_derivative(const Model& model, double theta, const Tensor& data, double h) {
  require_data(data);
  if (!(h > 0.0)) throw ContractError("finite-difference step must be positive");
  const SymmetrySpec rep_in = model.rep_in();
  const SymmetrySpec rep_out = model.rep_out();
  const GeneratorPair gens = pair_generators(rep_in, rep_out);
  LieDerivative out;
  if (!gens.group) return out;
  for (std::size_t k = 0; k < gens.in.size(); ++k) {
    Tensor diff;
    if (gens.kind == SymmetryKind::Continuous) {
      const auto action = [&](double t) {
        const Tensor f = evaluate(model, apply_rows(data, expm(t * gens.in[k])), theta);
        return apply_rows(f, expm(-t * gens.out[k]));
      };
      const Tensor plus = action(h);
      const Tensor minus = action(-h);
      diff = Tensor(plus.shape());
      for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = (plus[i] - minus[i]) / (2.0 * h);
    } else {
      const Tensor f = evaluate(model, apply_rows(data, gens.in[k]), theta);
      const Tensor moved = apply_rows(f, gens.out[k].inverse());
      const Tensor base = evaluate(model, data, theta);
      diff = Tensor(moved.shape());
      for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = moved[i] - base[i];
    }
    const double value = mean_row_norm(diff, Tensor(diff.shape()));
    out.per_generator.push_back(value);
    out.total += value;
  }
  return out;
}

std::vector<double> per_layer_lie(const Model& model, double theta, const Tensor& data) {
  require_data(data);
  Tape tape;
  const ForwardResult fr = forward(model, tape, data, theta, false);
  std::vector<double> values;
  for (const RelaxedSide& side : fr.relaxed) values.push_back(lie_reg_term(side.weight, side.input, *side.generators).value().item());
  return values;
}

}  // namespace relaxeq
