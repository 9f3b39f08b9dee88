#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "relaxeq/symmetry.hpp"
#include "relaxeq/tensor.hpp"

namespace relaxeq {

enum class TaskKind { InvariantClassification, EquivariantRegression };

/// A sample rebuilt from its generation record with an extra group element
/// composed into the generating transformation.
struct RegeneratedSample {
  Tensor input;   // [in_dim]
  Tensor target;  // [out_dim], regression only
  int label = -1;
};

struct Dataset {
  Tensor inputs;   // [N x in_dim]
  Tensor targets;  // [N x out_dim] for regression, empty otherwise
  std::vector<int> labels;
  SymmetrySpec rep_in;
  SymmetrySpec rep_out;
  TaskKind kind = TaskKind::InvariantClassification;
  int n_classes = 0;
  std::function<RegeneratedSample(std::size_t, const GroupDraw&)> regenerate;

  std::size_t size() const { return inputs.rank() == 2 ? inputs.rows() : 0; }
  Dataset subset(std::span<const std::size_t> indices) const;
};

struct PolygonParams {
  int n_classes = 4;
  int points_per_cloud = 8;
  double noise_sigma = 0.02;
  int n_samples = 1000;
};

struct ShapesParams {
  int points_per_cloud = 12;
  double noise_sigma = 0.02;
  int n_samples = 1000;
};

struct NBodyParams {
  int n_particles = 5;
  int n_steps = 200;
  double dt = 0.005;
  int n_samples = 1000;
};

/// Regular (c+3)-gons, jittered, globally rotated and point-permuted.
Dataset make_polygon2d(const PolygonParams& params, Rng& rng);
/// Platonic solid vertex clouds (tetrahedron, cube, octahedron, icosahedron)
/// under a uniform random rotation; inputs are row-major [C x 3] features.
Dataset make_shapes3d(const ShapesParams& params, Rng& rng);
/// Charged particles integrated with explicit Euler; predicts centered final positions.
Dataset make_nbody(const NBodyParams& params, Rng& rng);

/// Unit-norm vertices of shape class 0..3.
std::vector<Eigen::Vector3d> platonic_vertices(int shape_class);
inline constexpr int kShapeClasses = 4;
inline constexpr double kNBodyMinDistance = 0.1;

struct NBodyState {
  std::vector<Eigen::Vector3d> x, v;
  std::vector<double> q;
};

/// One explicit Euler step: positions advance with the old velocities,
/// then velocities with the pairwise forces q_i q_j d / max(|d|, r_min)^3.
void nbody_step(NBodyState& state, double dt);

/// Centered input vector [positions | velocities | charges] -> centered final positions.
Tensor simulate_nbody(const Tensor& input, int n_particles, int n_steps, double dt);

struct SelfCheckReport {
  std::size_t probes = 0;
  double max_input_deviation = 0.0;
  double max_target_deviation = 0.0;
  double label_agreement = 1.0;

  double max_deviation() const { return std::max(max_input_deviation, max_target_deviation); }
};

/// Regenerates probed samples under sampled group elements and compares
/// with the transformed stored sample.
SelfCheckReport symmetry_self_check(const Dataset& ds, std::size_t n_probes, Rng& rng);

/// Seed-stable disjoint split; the first part holds round(fraction * N) samples.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double fraction, Rng& rng);

/// Inputs and targets as JSON arrays.
std::string dataset_to_json(const Dataset& ds);

}  // namespace relaxeq
