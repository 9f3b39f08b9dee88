#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "relaxeq/config.hpp"
#include "relaxeq/layers.hpp"
#include "relaxeq/metrics.hpp"
#include "relaxeq/tasks.hpp"

namespace relaxeq {

struct Moments {
  Tensor first;
  Tensor second;  // Adam only
};

struct OptimizerState {
  std::string kind = "adam";
  double lr = 1e-3;
  double weight_decay = 0.0;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::map<std::string, Moments> buffers;  // keyed by parameter name

  static OptimizerState from_config(const OptimConfig& config);
};

/// Bias-corrected Adam; weight decay is added to the gradient.
void adam_step(OptimizerState& state, const std::vector<NamedParam>& params, const Gradients& grads);
/// SGD with heavy-ball momentum and coupled weight decay.
void sgd_step(OptimizerState& state, const std::vector<NamedParam>& params, const Gradients& grads);
void optimizer_step(OptimizerState& state, const std::vector<NamedParam>& params, const Gradients& grads);

/// Architecture for a task: depth equivariant linear layers with gated
/// norms between them, ending in an invariant head (classification) or a
/// linear map onto the target representation (regression).
Model build_model(const RunConfig& config, const Dataset& data, Rng& rng);

struct TaskData {
  Dataset train;
  Dataset test;  // validation split when config.eval.validation
};
TaskData make_task_data(const RunConfig& config);

/// Accuracy for classification, mean absolute error for regression.
double task_metric(const Model& model, const Dataset& data, double theta);

struct FitResult {
  RunConfig config;
  Model relaxed;    // parameters after the last epoch, θ of that epoch
  Model projected;  // θ = 0, W removed
  std::vector<MetricsRecord> history;
  bool stopped_early = false;
};

/// Loss diverged (> 1e6 or non-finite); carries the last good state.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, Model last_good, int epoch, std::vector<MetricsRecord> history)
      : NumericalError(what), last_good(std::move(last_good)), epoch(epoch), history(std::move(history)) {}
  Model last_good;
  int epoch;
  std::vector<MetricsRecord> history;
};

/// Everything needed to continue a run bit-for-bit: parameters, optimizer
/// moments, the two runtime RNG streams and the metrics so far.
struct RunState {
  RunConfig config;
  Model model;
  OptimizerState optimizer;
  Rng shuffle_rng;
  Rng metrics_rng;
  int epoch = 0;  // next epoch to run
  std::vector<MetricsRecord> history;
  std::vector<double> error_trace;  // early-stopping window
  bool stopped_early = false;

  bool finished() const;
};

inline constexpr int kRunStateSchema = 1;

RunState start_run(const RunConfig& config);
void run_epoch(RunState& state, const TaskData& data, bool verbose = false);

using EpochCallback = std::function<void(const RunState&)>;
FitResult fit(const RunConfig& config, bool verbose = false, const EpochCallback& on_epoch = {});
FitResult fit_from(RunState state, bool verbose = false, const EpochCallback& on_epoch = {});

nlohmann::json run_state_to_json(const RunState& state);
/// Rebuilds the model from the embedded configuration, then restores state.
RunState run_state_from_json(const nlohmann::json& j);

std::string metrics_csv(const std::vector<MetricsRecord>& history);

struct SweepRow {
  std::string axis;
  double value = 0.0;
  std::size_t seeds = 0;
  double method_mean = 0.0;
  double method_std = 0.0;
  double baseline_mean = 0.0;
  double baseline_std = 0.0;
  std::size_t method_failed = 0;
  std::size_t baseline_failed = 0;
  std::vector<double> method_values;
  std::vector<double> baseline_values;
};

/// Applies an axis value (model_width, depth, dataset_size, lambda_reg) to a config.
RunConfig with_axis_value(const RunConfig& base, const std::string& axis, double value);

/// Runs fit for every (value, seed) on both the relaxed method and the
/// baseline (W removed); aggregates the final projected test metric.
std::vector<SweepRow> sweep(const RunConfig& base, const std::string& axis, const std::vector<double>& values,
                            const std::vector<std::uint64_t>& seeds, unsigned threads = 1);

std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Mean and sample standard deviation (0 for a single value).
std::pair<double, double> mean_std(const std::vector<double>& values);

}  // namespace relaxeq
