#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "relaxeq/relaxation.hpp"

namespace relaxeq {

struct TaskConfig {
  std::string name = "polygon2d";  // polygon2d | shapes3d | nbody
  int n_classes = 4;
  int points_per_cloud = 8;
  double noise_sigma = 0.02;
  int n_particles = 5;
  int n_steps = 200;
  double dt = 0.005;
  int n_train = 1000;
  int n_test = 200;
};

struct ModelConfig {
  int width = 4;  // copies of the base representation per hidden layer
  int depth = 3;  // number of equivariant linear layers
  std::string pathway = "standard";  // standard | vector_neurons
  bool relaxed = true;  // false: baseline arm, W removed entirely
};

struct ScheduleConfig {
  std::string kind = "cyclic";  // cyclic | constant
  double value = 0.0;
};

struct OptimConfig {
  std::string kind = "adam";  // adam | sgd
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 32;
  int epochs = 60;
  bool lr_decay = false;
  double lr_decay_factor = 0.7;
  int lr_decay_every = 20;
  bool early_stopping = false;
};

struct EvalConfig {
  int p_ee_samples = 64;
  int stride = 1;
  double lie_step = 1e-4;
  bool validation = false;  // evaluate on a held-out 20% of the training set
};

struct RunConfig {
  TaskConfig task;
  ModelConfig model;
  ScheduleConfig schedule;
  RegWeights reg;
  OptimConfig optim;
  EvalConfig eval;
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  ThetaSchedule theta_schedule() const;
};

/// Strict parse: unknown keys and out-of-range values raise ConfigError
/// naming the offending field.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);
nlohmann::json to_json(const RunConfig& config);
void validate(const RunConfig& config);

}  // namespace relaxeq
