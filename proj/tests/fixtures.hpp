#pragma once

// Small models and inputs shared by the suites.

#include <random>

#include "relaxeq/layers.hpp"

namespace fixtures {

using namespace relaxeq;

inline Tensor random_batch(std::size_t rows, std::size_t cols, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Tensor t(Shape{rows, cols});
  for (auto& v : t.values()) v = n(rng);
  return t;
}

inline void randomize(Model& model, Rng& rng, double sd = 0.5) {
  std::normal_distribution<double> n(0.0, sd);
  for (const NamedParam& p : model.parameters())
    for (auto& v : p.tensor->values()) v = n(rng);
}

/// Three relaxed linear layers with gated norms between them; an invariant
/// head when n_classes > 0.
inline Model standard_model(const SymmetrySpec& base, int in_copies, int width, int out_copies, std::size_t n_classes,
                            Rng& rng) {
  Model m;
  const SymmetrySpec in = SymmetrySpec::copies(base, in_copies);
  const SymmetrySpec hidden = SymmetrySpec::direct_sum(SymmetrySpec::copies(base, width), SymmetrySpec::trivial(1));
  const SymmetrySpec out = SymmetrySpec::copies(base, out_copies);
  m.layers.push_back(make_relaxed_linear(in, hidden, true, rng));
  m.layers.push_back(make_gated_norm(hidden));
  m.layers.push_back(make_relaxed_linear(hidden, hidden, true, rng));
  m.layers.push_back(make_gated_norm(hidden));
  m.layers.push_back(make_relaxed_linear(hidden, out, true, rng));
  if (n_classes > 0) {
    m.layers.push_back(make_gated_norm(out));
    m.layers.push_back(make_invariant_head(out, n_classes, rng));
  }
  m.validate();
  return m;
}

inline Model vn_model(std::size_t c_in, std::size_t width, std::size_t n_classes, Rng& rng) {
  Model m;
  m.layers.push_back(make_vn_linear(c_in, width, true, rng));
  m.layers.push_back(make_gated_norm(SymmetrySpec::copies(SymmetrySpec::so3_std(), static_cast<int>(width))));
  m.layers.push_back(make_vn_linear(width, width, true, rng));
  m.layers.push_back(make_gated_norm(SymmetrySpec::copies(SymmetrySpec::so3_std(), static_cast<int>(width))));
  m.layers.push_back(make_vn_linear(width, width, true, rng));
  if (n_classes > 0) {
    m.layers.push_back(make_gated_norm(SymmetrySpec::copies(SymmetrySpec::so3_std(), static_cast<int>(width))));
    m.layers.push_back(
        make_invariant_head(SymmetrySpec::copies(SymmetrySpec::so3_std(), static_cast<int>(width)), n_classes, rng));
  }
  m.validate();
  return m;
}

/// Applies a sampled group element to every row of a batch.
inline Tensor act_rows(const Matrix& g, const Tensor& x) {
  Tensor out(x.shape());
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += g(static_cast<long>(i), static_cast<long>(j)) * x.at(r, j);
      out.at(r, i) = s;
    }
  return out;
}

inline double row_norm(const Tensor& x, std::size_t r) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.cols(); ++j) s += x.at(r, j) * x.at(r, j);
  return std::sqrt(s);
}

}  // namespace fixtures
