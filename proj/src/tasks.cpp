#include "relaxeq/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>

#include "relaxeq/intertwiner.hpp"
#include "json.hpp"

namespace relaxeq {

namespace {

Rng sample_rng(std::uint64_t base, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

Tensor row(const Tensor& m, std::size_t r) {
  const std::size_t n = m.cols();
  return Tensor(Shape{n}, std::vector<double>(m.values().begin() + static_cast<std::ptrdiff_t>(r * n),
                                              m.values().begin() + static_cast<std::ptrdiff_t>((r + 1) * n)));
}

Tensor apply(const Matrix& g, const Tensor& v) {
  Eigen::Map<const Eigen::VectorXd> x(v.data().data(), static_cast<Eigen::Index>(v.size()));
  const Eigen::VectorXd y = g * x;
  return Tensor(Shape{v.size()}, std::vector<double>(y.data(), y.data() + y.size()));
}

void set_row(Tensor& m, std::size_t r, const Tensor& v) {
  std::copy(v.data().begin(), v.data().end(), m.data().begin() + static_cast<std::ptrdiff_t>(r * m.cols()));
}

struct PolygonRecord {
  int cls;
  double angle;
  std::vector<int> perm;
  std::vector<double> noise;
};

Tensor polygon_points(const PolygonRecord& rec, int points) {
  const int sides = rec.cls + 3;
  const Matrix rot = rotation2(rec.angle);
  std::vector<Eigen::Vector2d> pts(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k) {
    const double a = 2.0 * std::numbers::pi * (k % sides) / sides;
    const Eigen::Vector2d v(std::cos(a) + rec.noise[2 * k], std::sin(a) + rec.noise[2 * k + 1]);
    pts[static_cast<std::size_t>(k)] = rot * v;
  }
  Tensor x(Shape{2 * static_cast<std::size_t>(points)});
  for (int k = 0; k < points; ++k) {
    const auto& p = pts[static_cast<std::size_t>(rec.perm[static_cast<std::size_t>(k)])];
    x[2 * k] = p.x();
    x[2 * k + 1] = p.y();
  }
  return x;
}

struct ShapeRecord {
  int cls;
  Eigen::Matrix3d rotation;
  std::vector<double> noise;
};

Tensor shape_points(const ShapeRecord& rec, int points) {
  const auto verts = platonic_vertices(rec.cls);
  Tensor x(Shape{3 * static_cast<std::size_t>(points)});
  for (int k = 0; k < points; ++k) {
    const Eigen::Vector3d& v = verts[static_cast<std::size_t>(k) % verts.size()];
    const Eigen::Vector3d jittered(v.x() + rec.noise[3 * k], v.y() + rec.noise[3 * k + 1], v.z() + rec.noise[3 * k + 2]);
    const Eigen::Vector3d p = rec.rotation * jittered;
    for (int c = 0; c < 3; ++c) x[3 * k + c] = p(c);
  }
  return x;
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out{Tensor(Shape{indices.size(), inputs.cols()}), Tensor(), {}, rep_in, rep_out, kind, n_classes, nullptr};
  if (targets.size()) out.targets = Tensor(Shape{indices.size(), targets.cols()});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= size()) throw ContractError("subset index out of range");
    set_row(out.inputs, k, row(inputs, i));
    if (targets.size()) set_row(out.targets, k, row(targets, i));
    if (!labels.empty()) out.labels.push_back(labels[i]);
  }
  if (regenerate) {
    auto map = std::make_shared<std::vector<std::size_t>>(indices.begin(), indices.end());
    out.regenerate = [inner = regenerate, map](std::size_t i, const GroupDraw& g) { return inner((*map)[i], g); };
  }
  return out;
}

Dataset make_polygon2d(const PolygonParams& p, Rng& rng) {
  if (p.n_classes < 2 || p.n_classes > 8) throw ConfigError("polygon2d: n_classes must be in [2, 8]");
  if (p.points_per_cloud < p.n_classes + 2) throw ConfigError("polygon2d: points_per_cloud must be >= n_classes + 2");
  if (p.n_samples < 1) throw ConfigError("polygon2d: n_samples must be positive");
  if (!(p.noise_sigma >= 0.0)) throw ConfigError("polygon2d: noise_sigma must be non-negative");

  const SymmetrySpec rep_in = SymmetrySpec::copies(SymmetrySpec::so2_std(), p.points_per_cloud);
  const auto n = static_cast<std::size_t>(p.n_samples);
  const auto points = p.points_per_cloud;
  const std::uint64_t base = rng();
  auto records = std::make_shared<std::vector<PolygonRecord>>();
  Dataset ds{Tensor(Shape{n, 2 * static_cast<std::size_t>(points)}), Tensor(), {}, rep_in, SymmetrySpec::trivial(p.n_classes),
             TaskKind::InvariantClassification, p.n_classes, nullptr};
  for (std::size_t i = 0; i < n; ++i) {
    Rng r = sample_rng(base, i);
    PolygonRecord rec;
    rec.cls = std::uniform_int_distribution<int>(0, p.n_classes - 1)(r);
    rec.angle = draw_element(GroupId{GroupId::Family::SO2}, r).angle;
    rec.perm.resize(static_cast<std::size_t>(points));
    std::iota(rec.perm.begin(), rec.perm.end(), 0);
    std::shuffle(rec.perm.begin(), rec.perm.end(), r);
    std::normal_distribution<double> noise(0.0, 1.0);
    rec.noise.resize(2 * static_cast<std::size_t>(points));
    for (double& e : rec.noise) e = p.noise_sigma * noise(r);
    set_row(ds.inputs, i, polygon_points(rec, points));
    ds.labels.push_back(rec.cls);
    records->push_back(std::move(rec));
  }
  ds.regenerate = [records, points](std::size_t i, const GroupDraw& g) {
    PolygonRecord rec = records->at(i);
    rec.angle += g.angle;
    return RegeneratedSample{polygon_points(rec, points), Tensor(), rec.cls};
  };
  return ds;
}

std::vector<Eigen::Vector3d> platonic_vertices(int shape_class) {
  std::vector<Eigen::Vector3d> v;
  switch (shape_class) {
    case 0:
      v = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
      break;
    case 1:
      for (int x : {-1, 1})
        for (int y : {-1, 1})
          for (int z : {-1, 1}) v.emplace_back(x, y, z);
      break;
    case 2:
      for (int s : {-1, 1}) {
        v.emplace_back(s, 0, 0);
        v.emplace_back(0, s, 0);
        v.emplace_back(0, 0, s);
      }
      break;
    case 3: {
      const double phi = std::numbers::phi;
      for (int a : {-1, 1})
        for (int b : {-1, 1}) {
          v.emplace_back(0, a, b * phi);
          v.emplace_back(a, b * phi, 0);
          v.emplace_back(b * phi, 0, a);
        }
      break;
    }
    default:
      throw ConfigError("unknown shape class " + std::to_string(shape_class));
  }
  for (auto& p : v) p.normalize();
  return v;
}

Dataset make_shapes3d(const ShapesParams& p, Rng& rng) {
  if (p.points_per_cloud < 12) throw ConfigError("shapes3d: points_per_cloud must be >= 12");
  if (p.n_samples < 1) throw ConfigError("shapes3d: n_samples must be positive");
  if (!(p.noise_sigma >= 0.0)) throw ConfigError("shapes3d: noise_sigma must be non-negative");

  const int points = p.points_per_cloud;
  const auto n = static_cast<std::size_t>(p.n_samples);
  const SymmetrySpec rep_in = SymmetrySpec::copies(SymmetrySpec::so3_std(), points);
  const std::uint64_t base = rng();
  auto records = std::make_shared<std::vector<ShapeRecord>>();
  Dataset ds{Tensor(Shape{n, 3 * static_cast<std::size_t>(points)}), Tensor(), {}, rep_in, SymmetrySpec::trivial(kShapeClasses),
             TaskKind::InvariantClassification, kShapeClasses, nullptr};
  for (std::size_t i = 0; i < n; ++i) {
    Rng r = sample_rng(base, i);
    ShapeRecord rec;
    rec.cls = std::uniform_int_distribution<int>(0, kShapeClasses - 1)(r);
    rec.rotation = draw_element(GroupId{GroupId::Family::SO3}, r).rotation;
    std::normal_distribution<double> noise(0.0, 1.0);
    rec.noise.resize(3 * static_cast<std::size_t>(points));
    for (double& e : rec.noise) e = p.noise_sigma * noise(r);
    set_row(ds.inputs, i, shape_points(rec, points));
    ds.labels.push_back(rec.cls);
    records->push_back(std::move(rec));
  }
  ds.regenerate = [records, points](std::size_t i, const GroupDraw& g) {
    ShapeRecord rec = records->at(i);
    rec.rotation = g.rotation * rec.rotation;
    return RegeneratedSample{shape_points(rec, points), Tensor(), rec.cls};
  };
  return ds;
}

void nbody_step(NBodyState& s, double dt) {
  const std::size_t np = s.x.size();
  std::vector<Eigen::Vector3d> a(np, Eigen::Vector3d::Zero());
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t j = 0; j < np; ++j) {
      if (i == j) continue;
      const Eigen::Vector3d d = s.x[i] - s.x[j];
      const double r = std::max(d.norm(), kNBodyMinDistance);
      a[i] += s.q[i] * s.q[j] * d / (r * r * r);
    }
  }
  for (std::size_t i = 0; i < np; ++i) {
    s.x[i] += dt * s.v[i];
    s.v[i] += dt * a[i];
  }
}

Tensor simulate_nbody(const Tensor& input, int n_particles, int n_steps, double dt) {
  const auto np = static_cast<std::size_t>(n_particles);
  if (input.size() != 7 * np) throw DimensionError("simulate_nbody: expected " + std::to_string(7 * np) + " inputs");
  NBodyState s{std::vector<Eigen::Vector3d>(np), std::vector<Eigen::Vector3d>(np), std::vector<double>(np)};
  for (std::size_t i = 0; i < np; ++i) {
    s.x[i] = Eigen::Vector3d(input[3 * i], input[3 * i + 1], input[3 * i + 2]);
    s.v[i] = Eigen::Vector3d(input[3 * (np + i)], input[3 * (np + i) + 1], input[3 * (np + i) + 2]);
    s.q[i] = input[6 * np + i];
  }
  for (int step = 0; step < n_steps; ++step) nbody_step(s, dt);
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  for (const auto& p : s.x) center += p;
  center /= static_cast<double>(np);
  Tensor out(Shape{3 * np});
  for (std::size_t i = 0; i < np; ++i)
    for (int c = 0; c < 3; ++c) out[3 * i + static_cast<std::size_t>(c)] = s.x[i](c) - center(c);
  return out;
}

Dataset make_nbody(const NBodyParams& p, Rng& rng) {
  if (p.n_particles < 2) throw ConfigError("nbody: n_particles must be >= 2");
  if (!(p.dt > 0.0)) throw ConfigError("nbody: dt must be positive");
  if (p.n_steps < 0) throw ConfigError("nbody: n_steps must be non-negative");
  if (p.n_samples < 1) throw ConfigError("nbody: n_samples must be positive");

  const auto np = static_cast<std::size_t>(p.n_particles);
  const auto n = static_cast<std::size_t>(p.n_samples);
  const SymmetrySpec rep_in = SymmetrySpec::direct_sum(SymmetrySpec::copies(SymmetrySpec::so3_std(), 2 * p.n_particles),
                                                       SymmetrySpec::trivial(p.n_particles));
  const SymmetrySpec rep_out = SymmetrySpec::copies(SymmetrySpec::so3_std(), p.n_particles);
  Dataset ds{Tensor(Shape{n, 7 * np}), Tensor(Shape{n, 3 * np}), {}, rep_in, rep_out, TaskKind::EquivariantRegression, 0, nullptr};
  const std::uint64_t base = rng();
  for (std::size_t i = 0; i < n; ++i) {
    Rng r = sample_rng(base, i);
    std::normal_distribution<double> pos(0.0, 1.0), vel(0.0, 0.5);
    std::bernoulli_distribution sign(0.5);
    Tensor x(Shape{7 * np});
    for (std::size_t k = 0; k < 3 * np; ++k) x[k] = pos(r);
    for (std::size_t k = 0; k < 3 * np; ++k) x[3 * np + k] = vel(r);
    for (std::size_t k = 0; k < np; ++k) x[6 * np + k] = sign(r) ? 1.0 : -1.0;
    for (int c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (std::size_t k = 0; k < np; ++k) mean += x[3 * k + static_cast<std::size_t>(c)];
      mean /= static_cast<double>(np);
      for (std::size_t k = 0; k < np; ++k) x[3 * k + static_cast<std::size_t>(c)] -= mean;
    }
    set_row(ds.inputs, i, x);
    set_row(ds.targets, i, simulate_nbody(x, p.n_particles, p.n_steps, p.dt));
  }
  auto inputs = std::make_shared<Tensor>(ds.inputs);
  ds.regenerate = [inputs, rep_in, p](std::size_t i, const GroupDraw& g) {
    const Tensor moved = apply(rep_in.matrix(g), row(*inputs, i));
    return RegeneratedSample{moved, simulate_nbody(moved, p.n_particles, p.n_steps, p.dt), -1};
  };
  return ds;
}

SelfCheckReport symmetry_self_check(const Dataset& ds, std::size_t n_probes, Rng& rng) {
  if (!ds.regenerate) throw ContractError("dataset cannot be regenerated; self-check unsupported");
  SelfCheckReport report;
  const auto group = common_group(ds.rep_in, ds.rep_out);
  std::size_t agree = 0;
  const std::size_t probes = std::min(n_probes, ds.size());
  for (std::size_t k = 0; k < probes; ++k) {
    const std::size_t i = std::uniform_int_distribution<std::size_t>(0, ds.size() - 1)(rng);
    const GroupDraw g = draw_element(group, rng);
    const RegeneratedSample s = ds.regenerate(i, g);
    report.max_input_deviation =
        std::max(report.max_input_deviation, max_abs_diff(s.input, apply(ds.rep_in.matrix(g), row(ds.inputs, i))));
    if (ds.kind == TaskKind::EquivariantRegression) {
      report.max_target_deviation =
          std::max(report.max_target_deviation, max_abs_diff(s.target, apply(ds.rep_out.matrix(g), row(ds.targets, i))));
      ++agree;
    } else if (s.label == ds.labels[i]) {
      ++agree;
    }
  }
  report.probes = probes;
  report.label_agreement = probes ? static_cast<double>(agree) / static_cast<double>(probes) : 1.0;
  return report;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ContractError("split fraction must be in (0, 1)");
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto cut = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
  return {ds.subset(std::span(idx).first(cut)), ds.subset(std::span(idx).subspan(cut))};
}

std::string dataset_to_json(const Dataset& ds) {
  nlohmann::json j;
  j["rep_in"] = ds.rep_in.name();
  j["rep_out"] = ds.rep_out.name();
  j["inputs"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.size(); ++i) j["inputs"].push_back(row(ds.inputs, i).values());
  if (ds.kind == TaskKind::EquivariantRegression) {
    j["targets"] = nlohmann::json::array();
    for (std::size_t i = 0; i < ds.size(); ++i) j["targets"].push_back(row(ds.targets, i).values());
  } else {
    j["labels"] = ds.labels;
  }
  return j.dump();
}

}  // namespace relaxeq
