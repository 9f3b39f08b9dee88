#pragma once

#include <string>
#include <vector>

#include "relaxeq/layers.hpp"

namespace relaxeq {

struct MetricsRecord {
  int epoch = 0;
  double theta = 0.0;
  double train_loss = 0.0;
  double task_loss = 0.0;
  double reg_loss = 0.0;
  double test_metric_projected = 0.0;
  double test_metric_relaxed = 0.0;
  double p_ee = 0.0;
  double p_pe = 0.0;
  double lie_total = 0.0;
  std::vector<double> per_layer_lie;
};

/// Column order of the metrics CSV.
const std::vector<std::string>& metrics_csv_columns();
std::string metrics_csv_header();
/// One CSV row, floats with 9 significant digits.
std::string metrics_csv_row(const MetricsRecord& record);
std::string format_float(double v);

/// Monte-Carlo E_x E_g |ρ_out(g) f(x) - f(ρ_in(g) x)| with Haar draws.
double p_ee(const Model& model, double theta, const Tensor& data, int n_samples, Rng& rng);

/// E_x |f(x; θ) - f(x; 0)|.
double p_pe(const Model& model, double theta, const Tensor& data);

struct LieDerivative {
  double total = 0.0;                 // per-sample mean of the summed generator norms
  std::vector<double> per_generator;  // per-sample means
};

/// Central difference in t of ρ_out(e^{tA})^{-1} f(ρ_in(e^{tA}) x) at t = 0.
/// Discrete groups use the finite difference ρ_out(g)^{-1} f(ρ_in(g) x) - f(x).
LieDerivative model_lie_derivative(const Model& model, double theta, const Tensor& data, double h = 1e-4);

/// Value of the Lie-derivative regularizer of each relaxed layer on data.
std::vector<double> per_layer_lie(const Model& model, double theta, const Tensor& data);

}  // namespace relaxeq
