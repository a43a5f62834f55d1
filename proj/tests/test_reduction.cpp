#include <gtest/gtest.h>

#include <cmath>

#include "hybred/reduction.hpp"
#include "support.hpp"

using namespace hybred;
using hybred::testing::max_abs;

namespace {

const std::vector<Eigen::Index> kFree{1, 3};  // (q2, p2)

Symbols reduced_symbols(const SystemSpec& s) {
  Symbols sym;
  sym.variables = {"q2", "p2"};
  sym.parameters = s.symbols.parameters;
  sym.parameters.push_back("mu1");
  sym.parameters.push_back("mu2");
  sym.functions = s.symbols.functions;
  return sym;
}

Binding with_level(Binding b, const Eigen::VectorXd& mu) {
  for (Eigen::Index a = 0; a < mu.size(); ++a) b[momentum_parameter_name(a)] = mu[a];
  return b;
}

ErrorKind error_kind(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::validation;
}

}  // namespace

TEST(AffineNormalForm, CanonicalisesLinearSubtrees) {
  const std::vector<std::string> names{"q1", "q2"};
  const Expr a = normalize(parse_expression("-(q1 + 1) + 2*q1 - (q2 - -q2)", names));
  const Expr b = normalize(parse_expression("q1 - 2*q2 - 1", names));
  EXPECT_TRUE(structurally_equal(a, b)) << to_string(a) << " vs " << to_string(b);
  EXPECT_EQ(to_string(normalize(parse_expression("0*q1 + 3", names))), "3");
}

TEST(Chart, PairLevelSet) {
  const auto s = hybred::testing::pair_spec();
  const Eigen::VectorXd mu = Eigen::Vector2d(0.4, -1.5);
  const LevelSetChart chart = build_chart(s.momentum, mu, s.coordinates, kFree);
  EXPECT_EQ(chart.coordinate_names(), (std::vector<std::string>{"q2", "p2"}));
  const auto bound = chart.bound_expressions();
  EXPECT_EQ(to_string(bound.at("q1")), "-mu2 - q2");
  EXPECT_EQ(to_string(bound.at("p1")), "mu1 - p2");
  const Eigen::VectorXd x = chart.parametrize(Eigen::Vector2d(0.25, 2.0));
  EXPECT_EQ(x, (Eigen::VectorXd(4) << 1.5 - 0.25, 0.25, 0.4 - 2.0, 2.0).finished());
}

TEST(Chart, ZeroLevel) {
  const auto s = hybred::testing::pair_spec();
  const LevelSetChart chart = build_chart(s.momentum, Eigen::Vector2d(0, 0), s.coordinates, kFree);
  Sampler sampler(1);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd y = sampler.vector(2);
    const Eigen::VectorXd x = chart.parametrize(y);
    EXPECT_EQ(x[0], -y[0]);
    EXPECT_EQ(x[2], -y[1]);
  }
}

TEST(Chart, AutoSelectionPicksPositionAndMomentumOfSecondBody) {
  const auto s = hybred::testing::pair_spec();
  EXPECT_EQ(select_free_indices(s.momentum), kFree);
}

TEST(Chart, SingularSelection) {
  const auto s = hybred::testing::pair_spec();
  EXPECT_EQ(error_kind([&] { build_chart(s.momentum, Eigen::Vector2d(0, 0), s.coordinates,
                                         std::vector<Eigen::Index>{0, 1}); }),
            ErrorKind::singular_selection);
}

TEST(Chart, RefusesNontrivialIsotropy) {
  const auto s = hybred::testing::pair_spec();
  EXPECT_EQ(error_kind([&] { build_chart(s.momentum, Eigen::Vector2d(0, 0), s.coordinates, kFree, 1); }),
            ErrorKind::unsupported_isotropy);
  const auto iso = load_spec(hybred::testing::fixture_path("nontrivial_isotropy.json"));
  const ReductionProblem p = reduction_problem(iso);
  EXPECT_EQ(isotropy_dimension(p, Eigen::VectorXd::Zero(1)), 1u);
  EXPECT_EQ(error_kind([&] { build_reduced_system(p, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)); }),
            ErrorKind::unsupported_isotropy);
}

TEST(Chart, RoundTripOnLevelSet) {
  const auto s = hybred::testing::pair_spec();
  Sampler sampler(2);
  for (const auto& mu : s.mu_list) {
    const LevelSetChart chart = build_chart(s.momentum, mu, s.coordinates, kFree);
    for (int i = 0; i < 100; ++i) {
      const Eigen::VectorXd y = sampler.vector(2);
      const Eigen::VectorXd x = chart.parametrize(y);
      EXPECT_EQ(chart.project(x), y);
      EXPECT_LT(max_abs(s.momentum(x) - mu), 1e-14);
      EXPECT_LT(max_abs(chart.parametrize(chart.project(x)) - x), 1e-14);
    }
  }
}

TEST(ReducedForm, PairFormHasFactorTwo) {
  const auto s = hybred::testing::pair_spec();
  const LevelSetChart chart = build_chart(s.momentum, Eigen::Vector2d(0.3, 0.1), s.coordinates, kFree);
  const SymplecticMatrix form = reduced_form(chart, s.mode.continuous.form);
  Eigen::MatrixXd expected(2, 2);
  expected << 0, 2, -2, 0;
  EXPECT_EQ(form.matrix(), expected);
  const Eigen::MatrixXd P = chart.linear_part();
  EXPECT_LT((P.transpose() * s.mode.continuous.form.matrix() * P - form.matrix()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ReducedForm, NoConstraintsKeepsForm) {
  MomentumMap none{Eigen::MatrixXd(0, 4), Eigen::VectorXd(0)};
  const LevelSetChart chart = build_chart(none, Eigen::VectorXd(0), canonical_coordinate_names(2));
  EXPECT_EQ(reduced_form(chart, SymplecticMatrix::canonical(2)).matrix(), SymplecticMatrix::canonical(2).matrix());
}

TEST(ReducedForm, LagrangianSliceIsDegenerate) {
  // J = (p1, p2): fixing both momenta leaves a Lagrangian slice in q.
  MomentumMap J{(Eigen::MatrixXd(2, 4) << 0, 0, 1, 0, 0, 0, 0, 1).finished(), Eigen::VectorXd::Zero(2)};
  const LevelSetChart chart =
      build_chart(J, Eigen::Vector2d(1, 1), canonical_coordinate_names(2), std::vector<Eigen::Index>{0, 1});
  EXPECT_EQ(error_kind([&] { reduced_form(chart, SymplecticMatrix::canonical(2)); }),
            ErrorKind::degenerate_reduced_form);
}

TEST(ReducedHamiltonian, SymbolicPairFormula) {
  const auto s = hybred::testing::pair_spec();
  const LevelSetChart chart = build_chart(s.momentum, Eigen::Vector2d(0, 0), s.coordinates, kFree);
  const Expr h = reduce_hamiltonian(s.mode.continuous.hamiltonian, chart);
  const Expr expected = normalize(parse_expression("(mu1 - 2*p2)^2/2 + V(-mu2 - 2*q2)", reduced_symbols(s)));
  EXPECT_TRUE(structurally_equal(h, expected)) << to_string(h);
}

TEST(ReducedHamiltonian, ZeroLevelFreePotential) {
  auto s = hybred::testing::pair_spec();
  const Expr kinetic = parse_expression("(p1 - p2)^2/2", s.symbols);
  const LevelSetChart chart = build_chart(s.momentum, Eigen::Vector2d(0, 0), s.coordinates, kFree);
  const Expr h = reduce_hamiltonian(kinetic, chart);
  Sampler sampler(3);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd y = sampler.vector(2);
    const Binding b = with_level({{"q2", y[0]}, {"p2", y[1]}}, Eigen::Vector2d(0, 0));
    EXPECT_NEAR(eval(h, b), 2 * y[1] * y[1], 1e-12);
  }
}

TEST(ReducedHamiltonian, PointwiseCertificate) {
  const auto s = hybred::testing::pair_spec();
  Sampler sampler(4);
  for (const auto& mu : s.mu_list) {
    const LevelSetChart chart = build_chart(s.momentum, mu, s.coordinates, kFree);
    const Expr h = reduce_hamiltonian(s.mode.continuous.hamiltonian, chart);
    for (int i = 0; i < 100; ++i) {
      const Eigen::VectorXd x = chart.parametrize(sampler.vector(2));
      const Eigen::VectorXd y = chart.project(x);
      Binding b = with_level(s.mode.continuous.parameters, mu);
      b["q2"] = y[0];
      b["p2"] = y[1];
      EXPECT_NEAR(eval(h, b), s.mode.continuous.energy(PhasePoint(x)), 1e-12);
    }
  }
}

TEST(GuardImpact, PairReducedGuardAndImpact) {
  const auto s = hybred::testing::pair_spec();
  const Eigen::VectorXd mu = Eigen::Vector2d(0.5, -1);
  const LevelSetChart chart = build_chart(s.momentum, mu, s.coordinates, kFree);
  Sampler sampler(5);
  const auto pts = sample_guard(s.mode.guard, s.mode.continuous, &s.momentum, &mu, 50, sampler);
  const auto gi = reduce_guard_impact(s.mode, s.momentum, chart, chart, pts);
  const Symbols sym = reduced_symbols(s);
  EXPECT_TRUE(structurally_equal(gi.guard.level, normalize(parse_expression("-mu2 - 2*q2 - c", sym))))
      << to_string(gi.guard.level);
  EXPECT_TRUE(structurally_equal(gi.guard.direction, normalize(parse_expression("mu1 - 2*p2", sym))))
      << to_string(gi.guard.direction);
  ASSERT_EQ(gi.impact.components.size(), 2u);
  EXPECT_EQ(to_string(gi.impact.components[0]), "q2");
  const Expr expected_p2 = parse_expression("p2 + (1+e)/2*(mu1 - 2*p2)", sym);
  for (double e : {1.0, 0.5}) {
    for (int i = 0; i < 20; ++i) {
      const Eigen::VectorXd y = sampler.vector(2);
      Binding b = with_level({{"q2", y[0]}, {"p2", y[1]}, {"e", e}, {"c", 0.0}}, mu);
      EXPECT_NEAR(eval(gi.impact.components[1], b), eval(expected_p2, b), 1e-14);
    }
  }
  EXPECT_LT(gi.diagram_defect, 1e-12);
  EXPECT_LT(gi.level_defect, 1e-12);
}

TEST(GuardImpact, ElasticZeroMomentumReversesP2) {
  const auto s = hybred::testing::pair_spec();
  const Eigen::VectorXd mu = Eigen::Vector2d(0, 0.7);
  const LevelSetChart chart = build_chart(s.momentum, mu, s.coordinates, kFree);
  const auto gi = reduce_guard_impact(s.mode, s.momentum, chart, chart);
  const Binding b = with_level({{"q2", 0.1}, {"p2", 0.9}, {"e", 1.0}, {"c", 0.0}}, mu);
  EXPECT_DOUBLE_EQ(eval(gi.impact.components[1], b), -0.9);
}

TEST(GuardImpact, DiagramCommutesAtEveryLevel) {
  for (const auto& s : {hybred::testing::pair_spec(), hybred::testing::kicked_spec()}) {
    const ReductionProblem p = reduction_problem(s);
    Sampler sampler(6);
    for (const auto& mu : s.mu_list) {
      const auto c = classify_level(s.momentum, s.mode, mu, sampler);
      const auto pts = sample_guard(s.mode.guard, s.mode.continuous, &s.momentum, &mu, 50, sampler);
      const ReducedSystem r = build_reduced_system(p, mu, c.mu_plus, pts);
      EXPECT_LT(r.diagram_defect, 1e-12);
    }
  }
}

TEST(GuardImpact, WrongTargetLevel) {
  const auto s = hybred::testing::kicked_spec();
  const Eigen::VectorXd mu = Eigen::Vector2d(0, -1);
  const LevelSetChart in = build_chart(s.momentum, mu, s.coordinates, kFree);
  Sampler sampler(7);
  const auto pts = sample_guard(s.mode.guard, s.mode.continuous, &s.momentum, &mu, 10, sampler);
  EXPECT_EQ(error_kind([&] { reduce_guard_impact(s.mode, s.momentum, in, in, pts); }), ErrorKind::level_mismatch);
}

TEST(ReducedFlow, VelocitiesCarryHalfFactor) {
  const auto s = hybred::testing::pair_spec();
  const ReductionProblem p = reduction_problem(s);
  const ReducedSystem r = build_reduced_system(p, Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 0));
  Sampler sampler(8);
  for (int i = 0; i < 20; ++i) {
    const PhasePoint y(sampler.vector(2));
    const auto g = grad(r.mode.continuous.hamiltonian, r.mode.continuous.binding(y.coords()), {"q2", "p2"});
    const Eigen::VectorXd v = hamiltonian_vector_field(r.mode.continuous, y);
    EXPECT_NEAR(v[0], 0.5 * g[1], 1e-14);
    EXPECT_NEAR(v[1], -0.5 * g[0], 1e-14);
  }
}

TEST(ReducedFlow, ZeroHorizon) {
  const auto s = hybred::testing::pair_spec();
  const HybridFlow f = run_reduced_hybrid(reduction_problem(s), Eigen::Vector2d(0, 0), PhasePoint{1, 0}, 0.0);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f.segments[0].size(), 1u);
}

TEST(ReducedFlow, EnergyConservedOnSegments) {
  const auto s = hybred::testing::pair_spec();
  std::vector<ReducedSystem> systems;
  const HybridFlow f =
      run_reduced_hybrid(reduction_problem(s), Eigen::Vector2d(0, 0), PhasePoint{1, 0}, 10.0, s.run, &systems);
  ASSERT_GE(f.impacts.size(), 1u);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto& sys = systems[i].mode.continuous;
    const double h0 = sys.energy(f.segments[i].front());
    for (const auto& y : f.segments[i].states()) EXPECT_LT(std::fabs(sys.energy(y) - h0), 1e-6);
  }
}

TEST(ReducedFlow, KickedLevelSequence) {
  const auto s = hybred::testing::kicked_spec();
  const Eigen::VectorXd mu0 = Eigen::Vector2d(0, -1);
  const HybridFlow f = run_reduced_hybrid(reduction_problem(s), mu0, PhasePoint{0, 1}, 5.0, s.run);
  ASSERT_GE(f.impacts.size(), 2u);
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_NEAR(f.labels[i][0], 0.6 * static_cast<double>(i), 1e-12);
    EXPECT_NEAR(f.labels[i][1], -1.0, 1e-12);
  }
}

TEST(Compare, PairFlowsAgree) {
  const auto s = hybred::testing::pair_spec();
  const PhasePoint x0{1, 0, -1, 1};
  const HybridFlow full = run_hybrid(HybridSystem{s.mode, Integrator::rk4}, x0, 10.0, s.run);
  const auto charts = charts_along(full, s.momentum, s.coordinates, s.free_indices);
  const Eigen::VectorXd mu0 = s.momentum(x0);
  EXPECT_EQ(mu0, Eigen::VectorXd(Eigen::Vector2d(0, -1)));
  const HybridFlow reduced =
      run_reduced_hybrid(reduction_problem(s), mu0, PhasePoint(charts[0].project(x0.coords())), 10.0, s.run);
  const FlowComparison cmp = compare_flows(full, reduced, charts);
  EXPECT_TRUE(cmp.pass);
  EXPECT_LT(cmp.max_state_distance, 1e-6);
  EXPECT_LT(cmp.max_impact_time_gap, 1e-8);
  EXPECT_EQ(full.impacts.size(), reduced.impacts.size());
}

TEST(Compare, ZeroHorizon) {
  const auto s = hybred::testing::pair_spec();
  const PhasePoint x0{1, 0, -1, 1};
  const HybridFlow full = run_hybrid(HybridSystem{s.mode, Integrator::rk4}, x0, 0.0, s.run);
  const auto charts = charts_along(full, s.momentum, s.coordinates, s.free_indices);
  const HybridFlow reduced =
      run_reduced_hybrid(reduction_problem(s), s.momentum(x0), PhasePoint(charts[0].project(x0.coords())), 0.0);
  EXPECT_EQ(compare_flows(full, reduced, charts).max_state_distance, 0.0);
}

TEST(Compare, WrongLevelIsDetected) {
  const auto s = hybred::testing::pair_spec();
  const PhasePoint x0{1, 0, -1, 1};
  const HybridFlow full = run_hybrid(HybridSystem{s.mode, Integrator::rk4}, x0, 10.0, s.run);
  const auto charts = charts_along(full, s.momentum, s.coordinates, s.free_indices);
  const HybridFlow reduced = run_reduced_hybrid(reduction_problem(s), Eigen::Vector2d(0.5, 0.3),
                                                PhasePoint(charts[0].project(x0.coords())), 10.0, s.run);
  bool detected = false;
  try {
    detected = compare_flows(full, reduced, charts).max_state_distance > 1e-3;
  } catch (const Error& e) {
    detected = e.kind() == ErrorKind::structure_mismatch;
  }
  EXPECT_TRUE(detected);
}

TEST(Compare, KickedMomentumSequence) {
  const auto s = hybred::testing::kicked_spec();
  const PhasePoint x0{1, 0, -1, 1};
  const HybridFlow full = run_hybrid(HybridSystem{s.mode, Integrator::rk4}, x0, 3.0, s.run);
  const auto charts = charts_along(full, s.momentum, s.coordinates, s.free_indices);
  const HybridFlow reduced =
      run_reduced_hybrid(reduction_problem(s), s.momentum(x0), PhasePoint(charts[0].project(x0.coords())), 3.0, s.run);
  ASSERT_GE(full.impacts.size(), 1u);
  for (std::size_t i = 0; i < full.size(); ++i) {
    EXPECT_LT(max_abs(s.momentum(full.segments[i].back()) - reduced.labels[i]), 1e-10);
    EXPECT_LT(max_abs(s.momentum(full.segments[i].front()) - reduced.labels[i]), 1e-10);
  }
  EXPECT_TRUE(compare_flows(full, reduced, charts).pass);
}
