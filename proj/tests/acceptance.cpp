// One PASS/FAIL line per acceptance criterion; nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

#include "hybred/commands.hpp"
#include "support.hpp"

using namespace hybred;
using hybred::testing::fd_gradient;
using hybred::testing::max_abs;
using hybred::testing::mixed_close;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<GroupElement> probes_for(Eigen::Index k, Sampler& sampler) {
  std::vector<GroupElement> probes;
  for (Eigen::Index a = 0; a < k; ++a) probes.push_back(Eigen::VectorXd::Unit(k, a));
  for (auto& g : sampler.group_elements(8, k)) probes.push_back(std::move(g));
  return probes;
}

Cocycle pair_cocycle(const SystemSpec& s, std::uint64_t seed) {
  Sampler sampler(seed);
  const auto probes = probes_for(s.k(), sampler);
  const auto samples = sampler.points(100, 2 * s.n);
  return compute_cocycle(s.momentum, s.action, probes, samples, s.tolerances.check);
}

Eigen::MatrixXd expected_sigma() { return (Eigen::MatrixXd(2, 2) << 0, 2, -2, 0).finished(); }

Outcome cocycle() {
  Outcome o;
  const auto t0 = Clock::now();
  const SystemSpec s = hybred::testing::pair_spec();
  const Cocycle c = pair_cocycle(s, 1);
  const double runtime = seconds_since(t0);
  const double err = (c.matrix - expected_sigma()).cwiseAbs().maxCoeff();
  o.require(err < 1e-12, "matrix error " + fmt(err));
  o.require(c.spread < 1e-12, "spread " + fmt(c.spread));
  o.require(runtime < 1.0, "runtime " + fmt(runtime) + " s");
  o.detail += " matrix_err=" + fmt(err) + " spread=" + fmt(c.spread) + " t=" + fmt(runtime) + "s";
  return o;
}

Outcome momentum_identity() {
  Outcome o;
  const SystemSpec s = hybred::testing::pair_spec();
  const SystemSpec neg = load_spec(hybred::testing::fixture_path("negated_momentum.json"));
  Sampler sampler(2);
  const auto samples = sampler.points(100, 4);
  const double d = check_momentum_map(s.momentum, s.action, s.mode.continuous.form, samples);
  const double dn = check_momentum_map(neg.momentum, neg.action, neg.mode.continuous.form, samples);
  o.require(d < 1e-14, "defect " + fmt(d));
  o.require(dn >= 2.0, "negated defect " + fmt(dn));
  o.detail += " defect=" + fmt(d) + " negated=" + fmt(dn);
  return o;
}

Outcome affine_equivariance() {
  Outcome o;
  const SystemSpec s = hybred::testing::pair_spec();
  const Cocycle c = pair_cocycle(s, 3);
  Sampler sampler(4);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const PhasePoint x(sampler.vector(4));
    const GroupElement g = sampler.vector(2);
    worst = std::max(worst, max_abs(s.momentum(s.action.apply(g, x)) - affine_action(s.momentum(x), g, c)));
  }
  o.require(worst < 1e-12, "residual " + fmt(worst));
  o.detail += " residual=" + fmt(worst);
  return o;
}

Outcome isotropy() {
  Outcome o;
  const SystemSpec s = hybred::testing::pair_spec();
  const Cocycle c = pair_cocycle(s, 5);
  Sampler sampler(6);
  const auto reference = isotropy_basis(c, sampler.vector(2));
  o.require(reference.empty(), "basis dimension " + std::to_string(reference.size()));
  for (int i = 0; i < 10; ++i) {
    const auto basis = isotropy_basis(c, sampler.vector(2));
    bool same = basis.size() == reference.size();
    for (std::size_t j = 0; same && j < basis.size(); ++j) same = max_abs(basis[j] - reference[j]) < 1e-12;
    o.require(same, "basis differs across levels");
  }
  o.detail += " basis_dim=" + std::to_string(reference.size()) + " levels=11";
  return o;
}

Outcome hybrid_momentum() {
  Outcome o;
  const SystemSpec s = hybred::testing::pair_spec();
  Sampler sampler(7);
  double worst = 0.0;
  for (const auto& mu : s.mu_list) {
    const auto pts = sample_guard(s.mode.guard, s.mode.continuous, &s.momentum, &mu, 50, sampler);
    o.require(pts.size() == 50, "only " + std::to_string(pts.size()) + " guard samples");
    for (const auto& x : pts)
      worst = std::max(worst, max_abs(s.momentum(s.mode.impact(s.mode.continuous, x.coords())) - s.momentum(x)));
  }
  o.require(s.mu_list.size() == 5, "level count");
  o.require(worst < 1e-12, "jump " + fmt(worst));

  const SystemSpec kicked = hybred::testing::kicked_spec();
  const double kappa = kicked.parameters.at("kappa");
  const Eigen::Vector2d expected_shift(2 * kappa, 0.0);
  double shift_err = 0.0;
  for (const auto& mu : kicked.mu_list) {
    const auto c = classify_level(kicked.momentum, kicked.mode, mu, sampler);
    o.require(c.verdict == MomentumVerdict::generalized, "kicked verdict " + std::string(to_string(c.verdict)));
    shift_err = std::max(shift_err, max_abs(c.mu_plus - c.mu_minus - Eigen::VectorXd(expected_shift)));
  }
  o.require(shift_err < 1e-12, "shift error " + fmt(shift_err));
  o.detail += " jump=" + fmt(worst) + " kicked_shift_err=" + fmt(shift_err);
  return o;
}

Symbols reduced_symbols(const SystemSpec& s) {
  Symbols sym;
  sym.variables = {"q2", "p2"};
  sym.parameters = s.symbols.parameters;
  sym.parameters.push_back("mu1");
  sym.parameters.push_back("mu2");
  sym.functions = s.symbols.functions;
  return sym;
}

Outcome reduced_hamiltonian() {
  Outcome o;
  const SystemSpec s = hybred::testing::pair_spec();
  const std::vector<Eigen::Index> free{1, 3};
  Sampler sampler(8);
  double worst = 0.0;
  bool symbolic = true;
  const Expr expected = normalize(parse_expression("(mu1 - 2*p2)^2/2 + V(-mu2 - 2*q2)", reduced_symbols(s)));
  for (const auto& mu : s.mu_list) {
    const LevelSetChart chart = build_chart(s.momentum, mu, s.coordinates, free);
    const Expr h = reduce_hamiltonian(s.mode.continuous.hamiltonian, chart);
    symbolic = symbolic && structurally_equal(h, expected);
    for (int i = 0; i < 100; ++i) {
      const Eigen::VectorXd x = chart.parametrize(sampler.vector(2));
      const Eigen::VectorXd y = chart.project(x);
      Binding b = s.mode.continuous.parameters;
      b["mu1"] = mu[0];
      b["mu2"] = mu[1];
      b["q2"] = y[0];
      b["p2"] = y[1];
      worst = std::max(worst, std::fabs(eval(h, b) - s.mode.continuous.energy(PhasePoint(x))));
    }
  }
  o.require(worst < 1e-12, "pointwise " + fmt(worst));
  o.require(symbolic, "symbolic form differs");
  o.detail += " pointwise=" + fmt(worst);
  return o;
}

Outcome reduced_form_check() {
  Outcome o;
  const SystemSpec s = hybred::testing::pair_spec();
  const LevelSetChart chart = build_chart(s.momentum, Eigen::Vector2d(0, -1), s.coordinates,
                                          std::vector<Eigen::Index>{1, 3});
  const SymplecticMatrix form = reduced_form(chart, s.mode.continuous.form);
  const Eigen::MatrixXd P = chart.linear_part();
  const double residual =
      (P.transpose() * s.mode.continuous.form.matrix() * P - form.matrix()).cwiseAbs().maxCoeff();
  o.require(form.matrix() == expected_sigma(), "form is not exactly 2*[[0,1],[-1,0]]");
  o.require(residual < 1e-14, "pullback residual " + fmt(residual));
  // The canonical reduced form must break the flow comparison.
  const CompareRun wrong = compare_system(s, *s.initial_condition, 0, SymplecticMatrix::canonical(1));
  o.require(!wrong.report.pass(), "canonical reduced form still passes the comparison");
  o.detail += " residual=" + fmt(residual);
  return o;
}

Outcome conservation() {
  Outcome o;
  double drift = 0.0;
  double identity = 0.0;
  double elastic = 0.0;
  for (double e : {1.0, 0.8, 0.5}) {
    SystemSpec s = hybred::testing::pair_spec();
    s.set_parameter("e", e);
    const HybridFlow flow = run_hybrid(s.system(), *s.initial_condition, s.T, s.run);
    o.require(s.integrator == Integrator::leapfrog && s.run.h == 1e-3, "integrator setup");
    o.require(!flow.impacts.empty(), "no impacts");
    for (const auto& seg : flow.segments) {
      const Eigen::VectorXd j0 = s.momentum(seg.front());
      for (std::size_t i = 1; i < seg.size(); ++i) {
        const double dt = seg.times()[i] - seg.start_time();
        drift = std::max(drift, max_abs(s.momentum(seg.states()[i]) - j0) / dt);
      }
    }
    const auto& ctx = s.mode.continuous;
    for (const auto& imp : flow.impacts) {
      const double rel = imp.pre.p(0) - imp.pre.p(1);
      const double dH = ctx.energy(imp.post) - ctx.energy(imp.pre);
      identity = std::max(identity, std::fabs(dH - (e * e - 1) * rel * rel / 2));
      if (e == 1.0)
        elastic = std::max({elastic, std::fabs(dH), max_abs(s.momentum(imp.post) - s.momentum(imp.pre))});
    }
  }
  o.require(drift < 1e-8, "momentum drift " + fmt(drift));
  o.require(identity < 1e-12, "impact energy identity " + fmt(identity));
  o.require(elastic < 1e-12, "elastic jump " + fmt(elastic));
  o.detail += " drift=" + fmt(drift) + " energy_identity=" + fmt(identity) + " elastic=" + fmt(elastic);
  return o;
}

Outcome reduced_flow_agreement() {
  Outcome o;
  const SystemSpec s = hybred::testing::pair_spec();
  o.require(s.parameters.at("e") == 1.0 && s.parameters.at("c") == 0.0 && s.T == 10.0 && s.run.h == 1e-3,
            "fixture settings");
  const auto t0 = Clock::now();
  const CompareRun run = compare_system(s, PhasePoint{1, 0, -1, 1}, 0);
  const double runtime = seconds_since(t0);
  const auto* dist = run.report.find("state_distance");
  const auto* gap = run.report.find("impact_time_gap");
  o.require(dist && dist->value < 1e-6, "state distance " + (dist ? fmt(dist->value) : std::string("missing")));
  o.require(gap && gap->value < 1e-8, "impact time gap " + (gap ? fmt(gap->value) : std::string("missing")));
  o.require(run.full.impacts.size() == run.reduced.impacts.size(), "impact counts differ");
  o.require(run.report.pass(), "report fails");
  o.require(runtime < 10.0, "runtime " + fmt(runtime) + " s");
  o.detail += " impacts=" + std::to_string(run.full.impacts.size()) + " dist=" + (dist ? fmt(dist->value) : "-") +
              " gap=" + (gap ? fmt(gap->value) : "-") + " t=" + fmt(runtime) + "s";
  return o;
}

Outcome symplecticity() {
  Outcome o;
  const HamiltonianSystem osc = hybred::testing::canonical_system("(q1^2 + p1^2)/2", 1, true);
  auto lf = [](const HamiltonianSystem& s, const PhasePoint& x, double h) { return step_leapfrog(s, x, h); };
  auto rk = [](const HamiltonianSystem& s, const PhasePoint& x, double h) { return step_rk4(s, x, h); };
  const double dl = symplecticity_defect(lf, osc, PhasePoint{1, 0}, 0.1, 1e-5);
  const double dr = symplecticity_defect(rk, osc, PhasePoint{1, 0}, 0.1, 1e-5);
  o.require(dl < 1e-6, "leapfrog defect " + fmt(dl));
  o.require(dr > 1e-8, "rk4 defect " + fmt(dr));
  o.detail += " leapfrog=" + fmt(dl) + " rk4=" + fmt(dr);
  return o;
}

Outcome robustness() {
  Outcome o;
  CommandOptions opts;
  opts.params = {{"e", 0.0}};
  std::stringstream sink;
  const auto t0 = Clock::now();
  const int rc = run_command([&] { return cmd_simulate(hybred::testing::pair_spec(), opts, sink); }, sink);
  o.require(rc == exit_zeno, "plastic run exit " + std::to_string(rc));
  o.require(sink.str().find("ZenoSuspected") != std::string::npos, "no ZenoSuspected message");
  o.require(seconds_since(t0) < 10.0, "plastic run too slow");

  HybridMode mode;
  mode.continuous = hybred::testing::canonical_system("p1^2/2", 1, true);
  mode.guard = Guard{parse_expression("q1^2", mode.continuous.coordinates),
                     parse_expression("-1", mode.continuous.coordinates)};
  mode.impact.components = {parse_expression("q1", mode.continuous.coordinates),
                            parse_expression("-p1", mode.continuous.coordinates)};
  RunOptions run;
  run.h = 1e-3;
  const HybridFlow flow = run_hybrid(HybridSystem{mode, Integrator::leapfrog}, PhasePoint{-1, 1}, 2.0, run);
  o.require(flow.impacts.empty(), "grazing produced an impact");
  o.require(flow.tangential_events >= 1, "grazing not reported");
  o.detail += " exit=" + std::to_string(rc);
  return o;
}

Outcome autodiff() {
  Outcome o;
  std::vector<Expr> exprs;
  std::set<std::string> params;
  for (const char* file : {"colliding_pair.json", "colliding_pair_kicked.json"}) {
    const SystemSpec s = load_spec(hybred::testing::system_path(file));
    exprs.push_back(s.mode.continuous.hamiltonian);
    exprs.push_back(s.mode.guard.level);
    exprs.push_back(s.mode.guard.direction);
    for (const auto& c : s.mode.impact.components) exprs.push_back(c);
    for (const auto& [name, fn] : s.symbols.functions) exprs.push_back(fn->body);
    for (const auto& [name, v] : s.parameters) params.insert(name);
  }
  const std::vector<std::string> wrt{"q1", "q2", "p1", "p2", "x"};
  Sampler sampler(12);
  std::size_t failures = 0;
  std::size_t checked = 0;
  for (const auto& e : exprs) {
    for (int trial = 0; trial < 100; ++trial) {
      Binding b;
      for (const auto& p : params) b[p] = sampler.vector(1)[0];
      const Eigen::VectorXd v = sampler.vector(static_cast<Eigen::Index>(wrt.size()));
      for (std::size_t i = 0; i < wrt.size(); ++i) b[wrt[i]] = v[static_cast<Eigen::Index>(i)];
      const auto exact = grad(e, b, wrt);
      const auto approx = fd_gradient(e, b, wrt);
      for (std::size_t i = 0; i < wrt.size(); ++i, ++checked)
        if (!mixed_close(exact[i], approx[i], 1e-6)) ++failures;
    }
  }
  o.require(failures == 0, std::to_string(failures) + " mismatches");
  o.detail += " expressions=" + std::to_string(exprs.size()) + " partials=" + std::to_string(checked);
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"cocycle reproduction", cocycle},
      {"momentum-map identity", momentum_identity},
      {"affine equivariance", affine_equivariance},
      {"isotropy", isotropy},
      {"hybrid momentum", hybrid_momentum},
      {"reduced hamiltonian", reduced_hamiltonian},
      {"reduced form", reduced_form_check},
      {"conservation", conservation},
      {"reduced flow reproduction", reduced_flow_agreement},
      {"symplecticity", symplecticity},
      {"robustness", robustness},
      {"autodiff", autodiff},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s criterion %zu (%s):%s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                (o.detail.empty() || o.detail[0] == ' ' ? o.detail : " " + o.detail).c_str());
    if (!o.pass) ++failed;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
