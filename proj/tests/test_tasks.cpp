#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "json.hpp"
#include "relaxeq/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

using namespace relaxeq;

namespace {

std::vector<double> row_of(const Tensor& m, std::size_t r) {
  return {m.values().begin() + static_cast<long>(r * m.cols()), m.values().begin() + static_cast<long>((r + 1) * m.cols())};
}

// Sorted pairwise distances of a flat point list with the given stride.
std::vector<double> pairwise(const std::vector<double>& pts, std::size_t dim) {
  const std::size_t n = pts.size() / dim;
  std::vector<double> d;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < dim; ++c) s += std::pow(pts[i * dim + c] - pts[j * dim + c], 2);
      d.push_back(std::sqrt(s));
    }
  std::sort(d.begin(), d.end());
  return d;
}

std::vector<double> multiset(std::initializer_list<std::pair<double, int>> counts) {
  std::vector<double> out;
  for (const auto& [v, k] : counts) out.insert(out.end(), static_cast<std::size_t>(k), v);
  std::sort(out.begin(), out.end());
  return out;
}

double max_gap(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Straight-line Euler integrator on plain arrays, written independently
// of the library: x += dt v (old v), then v += dt a.
std::vector<double> reference_nbody(const std::vector<double>& input, std::size_t np, int steps, double dt) {
  std::vector<double> x(input.begin(), input.begin() + static_cast<long>(3 * np));
  std::vector<double> v(input.begin() + static_cast<long>(3 * np), input.begin() + static_cast<long>(6 * np));
  std::vector<double> q(input.begin() + static_cast<long>(6 * np), input.end());
  for (int s = 0; s < steps; ++s) {
    std::vector<double> a(3 * np, 0.0);
    for (std::size_t i = 0; i < np; ++i)
      for (std::size_t j = 0; j < np; ++j) {
        if (i == j) continue;
        const double dx = x[3 * i] - x[3 * j], dy = x[3 * i + 1] - x[3 * j + 1], dz = x[3 * i + 2] - x[3 * j + 2];
        const double r = std::max(std::sqrt(dx * dx + dy * dy + dz * dz), 0.1);
        const double qq = q[i] * q[j], r3 = r * r * r;
        a[3 * i] += qq * dx / r3;
        a[3 * i + 1] += qq * dy / r3;
        a[3 * i + 2] += qq * dz / r3;
      }
    for (std::size_t k = 0; k < 3 * np; ++k) {
      x[k] += dt * v[k];
      v[k] += dt * a[k];
    }
  }
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0.0;
    for (std::size_t i = 0; i < np; ++i) m += x[3 * i + c];
    m /= static_cast<double>(np);
    for (std::size_t i = 0; i < np; ++i) x[3 * i + c] -= m;
  }
  return x;
}

}  // namespace

TEST_CASE("polygon2d construction") {
  Rng rng(1);
  const Dataset ds = make_polygon2d({4, 8, 0.0, 400}, rng);
  CHECK(ds.size() == 400);
  CHECK(ds.rep_in == SymmetrySpec::copies(SymmetrySpec::so2_std(), 8));
  // Noiseless clouds of one class differ only by rotation and order.
  std::map<int, std::vector<double>> first;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto pts = row_of(ds.inputs, i);
    std::vector<double> radial;
    for (std::size_t k = 0; k < 8; ++k) radial.push_back(std::hypot(pts[2 * k], pts[2 * k + 1]));
    std::sort(radial.begin(), radial.end());
    for (double r : radial) CHECK(std::abs(r - 1.0) < 1e-12);
    const auto d = pairwise(pts, 2);
    auto [it, inserted] = first.emplace(ds.labels[i], d);
    if (!inserted) CHECK(max_gap(it->second, d) < 1e-12);
  }
  // Distinct classes have distinct geometry.
  CHECK(max_gap(first.at(0), first.at(1)) > 0.1);
}

TEST_CASE("polygon2d class balance under a fixed seed") {
  Rng rng(2);
  const Dataset ds = make_polygon2d({4, 8, 0.02, 1000}, rng);
  std::vector<int> counts(4, 0);
  for (int l : ds.labels) ++counts[static_cast<std::size_t>(l)];
  const double sd = std::sqrt(1000 * 0.25 * 0.75);
  for (int c : counts) CHECK(std::abs(c - 250) < 4 * sd);
}

TEST_CASE("generator parameter validation") {
  Rng rng(3);
  CHECK_THROWS_AS(make_polygon2d({1, 8, 0.0, 10}, rng), ConfigError);
  CHECK_THROWS_AS(make_polygon2d({9, 12, 0.0, 10}, rng), ConfigError);
  CHECK_THROWS_AS(make_polygon2d({4, 5, 0.0, 10}, rng), ConfigError);
  CHECK_THROWS_AS(make_polygon2d({4, 8, -1.0, 10}, rng), ConfigError);
  CHECK_THROWS_AS(make_shapes3d({8, 0.0, 10}, rng), ConfigError);
  CHECK_THROWS_AS(make_nbody({1, 10, 0.01, 10}, rng), ConfigError);
  CHECK_THROWS_AS(make_nbody({5, 10, 0.0, 10}, rng), ConfigError);
}

TEST_CASE("shapes3d vertices") {
  const auto cube = platonic_vertices(1);
  REQUIRE(cube.size() == 8);
  std::set<std::array<int, 3>> signs;
  for (const auto& v : cube) {
    for (int c = 0; c < 3; ++c) CHECK(std::abs(std::abs(v(c)) - 1.0 / std::sqrt(3.0)) < 1e-15);
    signs.insert({v(0) > 0, v(1) > 0, v(2) > 0});
  }
  CHECK(signs.size() == 8);
  CHECK(platonic_vertices(0).size() == 4);
  CHECK(platonic_vertices(2).size() == 6);
  CHECK(platonic_vertices(3).size() == 12);
}

TEST_CASE("shapes3d noiseless distance multisets match closed-form geometry") {
  // Unit circumradius: tetrahedron edge sqrt(8/3); octahedron edge sqrt(2);
  // cube edge 2/sqrt(3); icosahedron edge 1/sin(2 pi/5).
  const double phi = std::numbers::phi;
  const double ico = 1.0 / std::sin(2 * std::numbers::pi / 5);
  const double cube = 2.0 / std::sqrt(3.0);
  // 12 points cycle the vertices: tetrahedron x3, octahedron x2, icosahedron x1.
  const std::map<int, std::vector<double>> expected12{
      {0, multiset({{0.0, 12}, {std::sqrt(8.0 / 3.0), 54}})},
      {2, multiset({{0.0, 6}, {std::sqrt(2.0), 48}, {2.0, 12}})},
      {3, multiset({{ico, 30}, {ico * phi, 30}, {2.0, 6}})}};
  Rng rng(4);
  const Dataset ds = make_shapes3d({12, 0.0, 200}, rng);
  std::set<int> seen;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int cls = ds.labels[i];
    if (!expected12.count(cls)) continue;
    seen.insert(cls);
    CHECK(max_gap(pairwise(row_of(ds.inputs, i), 3), expected12.at(cls)) < 1e-12);
  }
  CHECK(seen.size() == 3);
  // Cube with 16 points visits every vertex twice.
  Rng rng16(5);
  const Dataset ds16 = make_shapes3d({16, 0.0, 100}, rng16);
  const auto cube16 = multiset({{0.0, 8}, {cube, 48}, {cube * std::sqrt(2.0), 48}, {2.0, 16}});
  int cubes = 0;
  for (std::size_t i = 0; i < ds16.size(); ++i) {
    if (ds16.labels[i] != 1) continue;
    ++cubes;
    CHECK(max_gap(pairwise(row_of(ds16.inputs, i), 3), cube16) < 1e-12);
  }
  CHECK(cubes > 0);
}

TEST_CASE("nbody matches an independent integrator") {
  Rng rng(6);
  const NBodyParams p{5, 50, 0.005, 20};
  const Dataset ds = make_nbody(p, rng);
  CHECK(ds.inputs.cols() == 35);
  CHECK(ds.targets.cols() == 15);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto expected = reference_nbody(row_of(ds.inputs, i), 5, p.n_steps, p.dt);
    CHECK(max_gap(row_of(ds.targets, i), expected) == 0.0);
  }
}

TEST_CASE("nbody worked case: two opposite charges") {
  const double dt = 0.01;
  // Particles at x = +1 and -1 with charges +1, -1, at rest.
  const Tensor input(Shape{14}, {1, 0, 0, -1, 0, 0, 0, 0, 0, 0, 0, 0, 1, -1});
  // One step only updates the velocities.
  CHECK(max_abs_diff(simulate_nbody(input, 2, 1, dt), Tensor(Shape{6}, {1, 0, 0, -1, 0, 0})) == 0.0);
  // The second step moves each particle dt^2 * |a| = dt^2 / 4 toward the other.
  const Tensor two = simulate_nbody(input, 2, 2, dt);
  CHECK(two[0] == doctest::Approx(1.0 - dt * dt / 4).epsilon(1e-15));
  CHECK(two[3] == doctest::Approx(-1.0 + dt * dt / 4).epsilon(1e-15));
}

TEST_CASE("nbody conserves momentum every step") {
  Rng rng(7);
  std::normal_distribution<double> n;
  NBodyState s;
  for (int i = 0; i < 5; ++i) {
    s.x.emplace_back(n(rng), n(rng), n(rng));
    s.v.emplace_back(n(rng), n(rng), n(rng));
    s.q.push_back(i % 2 ? 1.0 : -1.0);
  }
  // Include a close pair so the distance clip is exercised.
  s.x[1] = s.x[0] + Eigen::Vector3d(0.01, 0.02, 0.0);
  const auto momentum = [&] {
    Eigen::Vector3d m = Eigen::Vector3d::Zero();
    for (const auto& v : s.v) m += v;
    return m;
  };
  const Eigen::Vector3d p0 = momentum();
  for (int step = 0; step < 200; ++step) {
    nbody_step(s, 0.005);
    CHECK((momentum() - p0).norm() < 1e-9);
  }
}

TEST_CASE("symmetry self-check") {
  Rng rng(8);
  const Dataset nbody = make_nbody({5, 200, 0.005, 30}, rng);
  const SelfCheckReport r = symmetry_self_check(nbody, 30, rng);
  CHECK(r.probes == 30);
  CHECK(r.max_target_deviation < 1e-9);
  CHECK(r.max_input_deviation < 1e-12);

  for (const Dataset& ds : {make_polygon2d({4, 8, 0.02, 100}, rng), make_shapes3d({12, 0.02, 100}, rng)}) {
    const SelfCheckReport c = symmetry_self_check(ds, 100, rng);
    CHECK(c.label_agreement == 1.0);
    CHECK(c.max_input_deviation < 1e-12);
  }

  // Trivial representation: regeneration is the identity.
  Dataset trivial{Tensor(Shape{3, 2}, {1, 2, 3, 4, 5, 6}), Tensor(Shape{3, 1}, {1, 2, 3}), {}, SymmetrySpec::trivial(2),
                  SymmetrySpec::trivial(1), TaskKind::EquivariantRegression, 0, nullptr};
  trivial.regenerate = [&](std::size_t i, const GroupDraw&) {
    return RegeneratedSample{Tensor(Shape{2}, row_of(trivial.inputs, i)), Tensor(Shape{1}, row_of(trivial.targets, i)), -1};
  };
  CHECK(symmetry_self_check(trivial, 3, rng).max_deviation() == 0.0);

  trivial.regenerate = nullptr;
  CHECK_THROWS_AS(symmetry_self_check(trivial, 3, rng), ContractError);
}

TEST_CASE("datasets regenerate bit-exactly from the seed") {
  for (int which = 0; which < 3; ++which) {
    Rng a(99), b(99);
    const auto make = [&](Rng& r) {
      if (which == 0) return make_polygon2d({4, 8, 0.02, 50}, r);
      if (which == 1) return make_shapes3d({12, 0.02, 50}, r);
      return make_nbody({5, 40, 0.005, 50}, r);
    };
    const Dataset x = make(a), y = make(b);
    CHECK(x.inputs.values() == y.inputs.values());
    CHECK(x.targets.values() == y.targets.values());
    CHECK(x.labels == y.labels);
    Rng c(100);
    CHECK(make(c).inputs.values() != x.inputs.values());
  }
}

TEST_CASE("splits are disjoint and seed-stable") {
  Rng g(10);
  const Dataset ds = make_polygon2d({4, 8, 0.02, 100}, g);
  Rng r1(5), r2(5);
  const auto [a, b] = split_dataset(ds, 0.8, r1);
  const auto [c, d] = split_dataset(ds, 0.8, r2);
  CHECK(a.size() == 80);
  CHECK(b.size() == 20);
  CHECK(a.inputs.values() == c.inputs.values());
  CHECK(b.inputs.values() == d.inputs.values());
  std::set<std::vector<double>> rows;
  for (std::size_t i = 0; i < a.size(); ++i) rows.insert(row_of(a.inputs, i));
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(rows.count(row_of(b.inputs, i)) == 0);
  // Subsets keep regeneration aligned with their own indices.
  Rng p(1);
  const SelfCheckReport rep = symmetry_self_check(b, 20, p);
  CHECK(rep.max_input_deviation < 1e-12);
  CHECK(rep.label_agreement == 1.0);
}

TEST_CASE("dataset dump") {
  Rng rng(11);
  const Dataset ds = make_nbody({3, 5, 0.01, 4}, rng);
  const auto j = nlohmann::json::parse(dataset_to_json(ds));
  CHECK(j.at("inputs").size() == 4);
  CHECK(j.at("targets").at(0).size() == 9);
  CHECK(j.at("inputs").at(1).get<std::vector<double>>() == row_of(ds.inputs, 1));
}
