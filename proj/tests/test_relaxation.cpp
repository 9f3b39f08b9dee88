#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "reference.hpp"
#include "relaxeq/relaxation.hpp"

using namespace relaxeq;
using fixtures::random_batch;
using reference::J2;
using reference::lie_oracle;

namespace {

Model single_layer(const SymmetrySpec& in, const SymmetrySpec& out, Rng& rng) {
  Model m;
  m.layers.push_back(make_relaxed_linear(in, out, true, rng));
  return m;
}

}  // namespace

TEST_CASE("lie_deriv_layer worked cases") {
  const Matrix I = Matrix::Identity(2, 2);
  CHECK(lie_deriv_layer(I, J2(), J2(), SymmetryKind::Continuous).norm() == 0.0);
  Matrix W(2, 2);
  W << 1, 0, 0, -1;
  Matrix expected(2, 2);
  expected << 0, -2, -2, 0;
  CHECK(lie_deriv_layer(W, J2(), J2(), SymmetryKind::Continuous) == expected);
  CHECK(oracle::max_abs(oracle::sub(lie_oracle(W, J2(), J2(), SymmetryKind::Continuous), oracle::from(expected))) == 0.0);
  CHECK_THROWS_AS(lie_deriv_layer(Matrix::Identity(3, 2), J2(), J2(), SymmetryKind::Continuous), DimensionError);
}

TEST_CASE("lie_deriv_layer matches direct arithmetic on random pairs") {
  Rng rng(1);
  const std::vector<std::pair<SymmetrySpec, SymmetrySpec>> pairs{
      {SymmetrySpec::so2_std(), SymmetrySpec::copies(SymmetrySpec::so2_std(), 2)},
      {SymmetrySpec::copies(SymmetrySpec::so3_std(), 2), SymmetrySpec::so3_std()},
      {SymmetrySpec::cn_regular(4), SymmetrySpec::cn_regular(4)},
      {SymmetrySpec::cn_rot(3), SymmetrySpec::direct_sum(SymmetrySpec::cn_rot(3), SymmetrySpec::trivial(1))}};
  for (int trial = 0; trial < 100; ++trial) {
    const auto& [in, out] = pairs[trial % pairs.size()];
    const GeneratorPair g = pair_generators(in, out);
    const Matrix W = Matrix::Random(out.dim(), in.dim()) * 3.0;
    for (std::size_t k = 0; k < g.in.size(); ++k) {
      const Matrix L = lie_deriv_layer(W, g.in[k], g.out[k], g.kind);
      CHECK(oracle::max_abs(oracle::sub(oracle::from(L), lie_oracle(W, g.in[k], g.out[k], g.kind))) < 1e-12);
    }
    const auto basis = solve_basis(in, out);
    for (const Matrix& B : basis.basis)
      for (std::size_t k = 0; k < g.in.size(); ++k) CHECK(lie_deriv_layer(B, g.in[k], g.out[k], g.kind).norm() < 1e-10);
  }
}

TEST_CASE("lie_deriv_layer on the tape") {
  Rng rng(2);
  const GeneratorPair g = pair_generators(SymmetrySpec::so3_std(), SymmetrySpec::so3_std());
  Tensor W = random_batch(3, 3, rng);
  const auto f = [&] {
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) s += lie_deriv_layer(to_matrix(W), g.in[k], g.out[k], g.kind).norm();
    return s;
  };
  Tape tape;
  const Var w = tape.parameter(W);
  Var total = tape.constant(Tensor::scalar(0.0));
  for (std::size_t k = 0; k < 3; ++k) {
    const Var L = lie_deriv_layer(w, g.in[k], g.out[k], g.kind);
    CHECK(max_abs_diff(L.value(), to_tensor(lie_deriv_layer(to_matrix(W), g.in[k], g.out[k], g.kind))) < 1e-15);
    total = total + l2_norm(L);
  }
  const auto check = oracle::compare_gradients(tape.backward(total).of(W), oracle::numeric_gradient(W, f));
  CHECK_MESSAGE(check.ok, check.detail);
}

TEST_CASE("lie_reg_term") {
  Rng rng(3);
  const auto in = SymmetrySpec::so3_std(), out = SymmetrySpec::so3_std();
  const GeneratorPair g = pair_generators(in, out);
  const Tensor x = random_batch(7, 3, rng);
  Tape tape;
  // Equivariant W vanishes.
  CHECK(lie_reg_term(tape.constant(to_tensor(2.5 * Matrix::Identity(3, 3))), tape.constant(x), g).value().item() < 1e-9);
  // Zero inputs give the smoothed-norm floor.
  const double floor = lie_reg_term(tape.constant(random_batch(3, 3, rng)), tape.constant(Tensor(Shape{4, 3})), g).value().item();
  CHECK(floor == doctest::Approx(3e-12).epsilon(1e-6));
  // One sample, one generator: the oracle norm.
  const auto so2 = SymmetrySpec::so2_std();
  const GeneratorPair g2 = pair_generators(so2, so2);
  const Matrix W = Matrix::Random(2, 2);
  const Tensor x1 = random_batch(1, 2, rng);
  const double expected =
      oracle::norm(oracle::apply(lie_oracle(W, g2.in[0], g2.out[0], g2.kind), {x1[0], x1[1]}));
  CHECK(lie_reg_term(tape.constant(to_tensor(W)), tape.constant(x1), g2).value().item() ==
        doctest::Approx(expected).epsilon(1e-14));
  CHECK_THROWS_AS(lie_reg_term(tape.constant(to_tensor(W)), tape.constant(Tensor(Shape{0, 2})), g2), ContractError);
}

TEST_CASE("lie_reg_term ignores intertwiner shifts") {
  Rng rng(4);
  const auto in = SymmetrySpec::copies(SymmetrySpec::so2_std(), 3), out = SymmetrySpec::copies(SymmetrySpec::so2_std(), 2);
  const GeneratorPair g = pair_generators(in, out);
  const auto basis = solve_basis(in, out);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix W = Matrix::Random(4, 6);
    std::vector<double> c(basis.dim());
    for (auto& v : c) v = 5.0 * n(rng);
    const Tensor x = random_batch(8, 6, rng);
    Tape tape;
    const double a = lie_reg_term(tape.constant(to_tensor(W)), tape.constant(x), g).value().item();
    const double b = lie_reg_term(tape.constant(to_tensor(W + assemble(basis, c))), tape.constant(x), g).value().item();
    CHECK(std::abs(a - b) < 1e-8);
  }
}

TEST_CASE("lie_reg_term under transformed inputs stays within the operator bound") {
  Rng rng(5);
  const auto rep = SymmetrySpec::so3_std();
  const GeneratorPair g = pair_generators(rep, rep);
  const Matrix W = Matrix::Random(3, 3);
  double bound = 0.0;
  for (std::size_t k = 0; k < 3; ++k) bound += lie_deriv_layer(W, g.in[k], g.out[k], g.kind).norm();
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_batch(1, 3, rng);
    const Tensor gx = fixtures::act_rows(rep.sample(rng).matrix, x);
    Tape tape;
    const double a = lie_reg_term(tape.constant(to_tensor(W)), tape.constant(x), g).value().item();
    const double b = lie_reg_term(tape.constant(to_tensor(W)), tape.constant(gx), g).value().item();
    CHECK(std::abs(a - b) <= bound * fixtures::row_norm(x, 0) + 1e-12);
  }
}

TEST_CASE("actnorm_term") {
  Rng rng(6);
  Tape tape;
  const Tensor x = random_batch(5, 3, rng);
  CHECK(actnorm_term(tape.constant(Tensor(Shape{2, 3})), tape.constant(x)).value().item() < 1e-11);
  CHECK(actnorm_term(tape.constant(Tensor::identity(2)), tape.constant(Tensor::matrix({{3, 4}}))).value().item() ==
        doctest::Approx(5.0).epsilon(1e-15));
  const Tensor W = random_batch(2, 3, rng);
  Tensor W2 = W;
  for (auto& v : W2.values()) v *= 2.0;
  const double a = actnorm_term(tape.constant(W), tape.constant(x)).value().item();
  const double b = actnorm_term(tape.constant(W2), tape.constant(x)).value().item();
  CHECK(b == doctest::Approx(2.0 * a).epsilon(1e-12));
  CHECK_THROWS_AS(actnorm_term(tape.constant(W), tape.constant(Tensor(Shape{0, 3}))), ContractError);
}

TEST_CASE("total_objective arithmetic and ablations") {
  Rng rng(7);
  Model m = single_layer(SymmetrySpec::so2_std(), SymmetrySpec::so2_std(), rng);
  auto& layer = std::get<RelaxedLinear>(m.layers[0]);
  // |W x| = 5 and |L_J(W) x| = 3 at x = e_1.
  *layer.W = Tensor::matrix({{3, -4}, {4, 6}});
  const Tensor x = Tensor::matrix({{1, 0}});
  Tape tape;
  const ForwardResult fr = forward(m, tape, x, 0.0);
  const Var task = tape.constant(Tensor::scalar(1.0));

  const Objective full = total_objective(task, m, fr, RegWeights{0.01, true, true});
  CHECK(full.total.value().item() == doctest::Approx(1.08).epsilon(1e-12));
  REQUIRE(full.per_layer_lie.size() == 1);
  CHECK(full.per_layer_lie[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(full.per_layer_actnorm[0] == doctest::Approx(5.0).epsilon(1e-12));

  CHECK(total_objective(task, m, fr, RegWeights{0.0, true, true}).total.value().item() == 1.0);
  CHECK(total_objective(task, m, fr, RegWeights{0.5, false, false}).total.value().item() == 1.0);
  CHECK(total_objective(task, m, fr, RegWeights{0.01, false, true}).total.value().item() ==
        doctest::Approx(1.05).epsilon(1e-12));
  CHECK(total_objective(task, m, fr, RegWeights{0.01, true, false}).total.value().item() ==
        doctest::Approx(1.03).epsilon(1e-12));

  // Regularizers see W, not θ W: the value is the same at any θ.
  Tape t2;
  const ForwardResult fr2 = forward(m, t2, x, 0.8);
  CHECK(total_objective(t2.constant(Tensor::scalar(1.0)), m, fr2, RegWeights{}).total.value().item() ==
        doctest::Approx(1.08).epsilon(1e-12));

  ForwardResult missing = fr;
  missing.relaxed.clear();
  CHECK_THROWS_AS(total_objective(task, m, missing, RegWeights{}), ContractError);
}

TEST_CASE("total_objective gradients match finite differences") {
  Rng rng(8);
  std::vector<Model> models;
  models.push_back(fixtures::standard_model(SymmetrySpec::so2_std(), 3, 2, 2, 0, rng));
  models.push_back(fixtures::standard_model(SymmetrySpec::cn_rot(4), 2, 2, 1, 3, rng));
  models.push_back(fixtures::vn_model(3, 2, 0, rng));
  for (auto& m : models) {
    fixtures::randomize(m, rng);
    const Tensor x = random_batch(5, static_cast<std::size_t>(m.rep_in().dim()), rng);
    const RegWeights w{0.3, true, true};
    const auto objective = [&](Tape& tape) {
      const ForwardResult fr = forward(m, tape, x, 0.4);
      return total_objective(l2_norm(fr.output), m, fr, w).total;
    };
    Tape tape;
    const Gradients g = tape.backward(objective(tape));
    for (const NamedParam& p : m.parameters()) {
      CAPTURE(p.name);
      const Tensor numeric = oracle::numeric_gradient(*p.tensor, [&] {
        Tape t;
        return objective(t).value().item();
      });
      const auto check = oracle::compare_gradients(g.of(*p.tensor), numeric);
      CHECK_MESSAGE(check.ok, check.detail);
    }
  }
}

TEST_CASE("theta schedule") {
  const auto s100 = ThetaSchedule::cyclic(100);
  CHECK(s100.at(0) == 0.0);
  CHECK(s100.at(25) == 0.5);
  CHECK(s100.at(50) == 1.0);
  CHECK(s100.at(75) == 0.5);
  CHECK(s100.at(100) == 0.0);
  CHECK(ThetaSchedule::cyclic(1).at(0) == 0.0);
  CHECK(ThetaSchedule::cyclic(1).at(1) == 0.0);
  for (int i = 0; i <= 10; ++i) CHECK(theta_at(ThetaSchedule::constant(10, 0.3), i) == 0.3);
  CHECK_THROWS_AS(s100.at(101), ContractError);
  CHECK_THROWS_AS(s100.at(-1), ContractError);

  for (int n : {1, 2, 3, 4, 7, 10, 60, 100}) {
    const auto s = ThetaSchedule::cyclic(n);
    double peak = 0.0;
    for (int i = 0; i <= n; ++i) {
      CHECK(s.at(i) >= 0.0);
      peak = std::max(peak, s.at(i));
      if (i == 0) continue;
      const double step = std::abs(s.at(i) - s.at(i - 1));
      // Odd N_E straddles the peak with one flat step.
      if (n % 2 == 1 && 2 * i == n + 1) CHECK(step < 1e-12);
      else CHECK(std::abs(step - 2.0 / n) < 1e-12);
    }
    CHECK(peak <= 1.0);
    if (n % 2 == 0) CHECK(s.at(n / 2) == 1.0);
  }
}
