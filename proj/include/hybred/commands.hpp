#ifndef HYBRED_COMMANDS_HPP
#define HYBRED_COMMANDS_HPP

// simulate / verify / reduce / compare, shared by the CLI and the tests.
// Exit codes: 0 pass, 1 check failure, 2 Zeno, 3 unsupported scope,
// 4 input error.

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "hybred/csv.hpp"
#include "hybred/error.hpp"
#include "hybred/hybrid.hpp"
#include "hybred/reduction.hpp"
#include "hybred/spec.hpp"
#include "hybred/symmetry.hpp"

namespace hybred {

enum ExitCode : int { exit_pass = 0, exit_check_failed = 1, exit_zeno = 2, exit_unsupported = 3, exit_input = 4 };

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::zeno_suspected:
    case ErrorKind::re_crossing: return exit_zeno;
    case ErrorKind::unsupported_isotropy: return exit_unsupported;
    case ErrorKind::syntax:
    case ErrorKind::unknown_name:
    case ErrorKind::parse:
    case ErrorKind::validation:
    case ErrorKind::dimension_mismatch: return exit_input;
    default: return exit_check_failed;
  }
}

struct CommandOptions {
  std::optional<std::vector<double>> x0;
  std::optional<double> T;
  std::optional<double> h;
  std::optional<std::vector<double>> mu;
  std::uint64_t seed = 0;
  std::optional<std::string> out_dir;
  std::optional<double> tol_state;
  std::optional<double> tol_time;
  std::vector<std::pair<std::string, double>> params;
};

struct CheckRecord {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::size_t samples = 0;
  nlohmann::json detail = nlohmann::json::object();
};

struct Report {
  std::string command;
  std::string system;
  std::uint64_t seed = 0;
  std::vector<CheckRecord> checks;
  nlohmann::json extra = nlohmann::json::object();

  bool pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }

  const CheckRecord* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }

  void add(std::string name, double value, double tolerance, std::size_t samples,
           nlohmann::json detail = nlohmann::json::object()) {
    checks.push_back(CheckRecord{std::move(name), value, tolerance, value < tolerance, samples, std::move(detail)});
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["system"] = system;
    j["seed"] = seed;
    j["pass"] = pass();
    j["checks"] = nlohmann::json::array();
    for (const auto& c : checks) {
      nlohmann::json r = {{"name", c.name},       {"value", c.value}, {"tolerance", c.tolerance},
                          {"pass", c.pass},       {"samples", c.samples}, {"seed", seed}};
      if (!c.detail.empty()) r["detail"] = c.detail;
      j["checks"].push_back(std::move(r));
    }
    for (const auto& [key, value] : extra.items()) j[key] = value;
    return j;
  }
};

namespace detail {

inline nlohmann::json to_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline nlohmann::json to_json(const Eigen::MatrixXd& m) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(std::move(row));
  }
  return a;
}

inline void apply_overrides(SystemSpec& spec, const CommandOptions& opts) {
  for (const auto& [name, value] : opts.params) spec.set_parameter(name, value);
  if (opts.h) {
    if (!(*opts.h > 0.0)) throw Error(ErrorKind::validation, "--h must be positive");
    spec.run.h = *opts.h;
  }
  if (opts.T) spec.T = *opts.T;
  if (opts.tol_state) spec.tolerances.tol_state = *opts.tol_state;
  if (opts.tol_time) spec.tolerances.tol_time = *opts.tol_time;
}

inline PhasePoint initial_state(const SystemSpec& spec, const CommandOptions& opts) {
  if (opts.x0) {
    if (static_cast<int>(opts.x0->size()) != 2 * spec.n)
      throw Error(ErrorKind::validation, "--x0 must have 2n entries");
    return PhasePoint(*opts.x0);
  }
  if (spec.initial_condition) return *spec.initial_condition;
  throw Error(ErrorKind::validation, "no initial condition: pass --x0 or set initial_condition");
}

inline Eigen::VectorXd requested_level(const SystemSpec& spec, const CommandOptions& opts) {
  if (opts.mu) {
    if (static_cast<Eigen::Index>(opts.mu->size()) != spec.k())
      throw Error(ErrorKind::validation, "--mu must have k entries");
    return Eigen::Map<const Eigen::VectorXd>(opts.mu->data(), spec.k());
  }
  if (spec.initial_condition) return spec.momentum(*spec.initial_condition);
  return Eigen::VectorXd::Zero(spec.k());
}

inline std::ofstream open_output(const std::string& dir, const std::string& file) {
  std::filesystem::create_directories(dir);
  std::ofstream out(std::filesystem::path(dir) / file);
  if (!out) throw Error(ErrorKind::validation, "cannot write " + file + " in " + dir);
  return out;
}

inline void emit_json(const nlohmann::json& j, const CommandOptions& opts, const std::string& file,
                      std::ostream& out) {
  if (opts.out_dir) {
    auto f = open_output(*opts.out_dir, file);
    f << j.dump(2) << '\n';
  } else {
    out << j.dump(2) << '\n';
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Tables

/// t, q1..qn, p1..pn, segment_index, J_1..J_k, H. Impact instants appear
/// twice: pre-impact state closing segment i and post-impact state opening
/// segment i + 1.
inline CsvTable trajectory_table(const SystemSpec& spec, const HybridFlow& flow) {
  CsvTable t;
  t.header.push_back("t");
  for (const auto& c : spec.coordinates) t.header.push_back(c);
  t.header.push_back("segment_index");
  for (Eigen::Index a = 0; a < spec.k(); ++a) t.header.push_back("J_" + std::to_string(a + 1));
  t.header.push_back("H");
  for (std::size_t i = 0; i < flow.size(); ++i) {
    const auto& seg = flow.segments[i];
    for (std::size_t j = 0; j < seg.size(); ++j) {
      const PhasePoint& x = seg.states()[j];
      std::vector<double> row{seg.times()[j]};
      for (Eigen::Index c = 0; c < x.size(); ++c) row.push_back(x[c]);
      row.push_back(static_cast<double>(i));
      const Eigen::VectorXd J = spec.momentum(x);
      for (Eigen::Index a = 0; a < J.size(); ++a) row.push_back(J[a]);
      row.push_back(spec.mode.continuous.energy(x));
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

/// t, chart coordinates, segment_index, mu_1..mu_k for a flow in chart
/// coordinates (`project` maps stored states to the chart).
template <typename Project>
CsvTable chart_table(const std::vector<std::string>& names, const HybridFlow& flow,
                     const std::vector<Eigen::VectorXd>& levels, Project&& project) {
  CsvTable t;
  t.header.push_back("t");
  for (const auto& c : names) t.header.push_back(c);
  t.header.push_back("segment_index");
  const Eigen::Index k = levels.empty() ? 0 : levels.front().size();
  for (Eigen::Index a = 0; a < k; ++a) t.header.push_back("mu_" + std::to_string(a + 1));
  for (std::size_t i = 0; i < flow.size(); ++i) {
    const auto& seg = flow.segments[i];
    for (std::size_t j = 0; j < seg.size(); ++j) {
      const Eigen::VectorXd y = project(i, seg.states()[j].coords());
      std::vector<double> row{seg.times()[j]};
      for (Eigen::Index c = 0; c < y.size(); ++c) row.push_back(y[c]);
      row.push_back(static_cast<double>(i));
      for (Eigen::Index a = 0; a < k; ++a) row.push_back(levels[i][a]);
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// verify

/// Every symmetry check on the spec with a seeded sampler.
inline Report verify_system(const SystemSpec& spec, std::uint64_t seed = 0) {
  Report report;
  report.command = "verify";
  report.system = spec.name;
  report.seed = seed;
  const double tol = spec.tolerances.check;
  const Eigen::Index d = 2 * spec.n;
  const Eigen::Index k = spec.k();
  const SymplecticMatrix& omega = spec.mode.continuous.form;

  Sampler sampler(seed);
  const auto samples = sampler.points(100, d);
  std::vector<GroupElement> probes;
  for (Eigen::Index a = 0; a < k; ++a) probes.push_back(Eigen::VectorXd::Unit(k, a));
  for (auto& g : sampler.group_elements(8, k)) probes.push_back(std::move(g));

  report.add("symplectic_action", check_symplectic_action(spec.action, omega, samples, probes), tol,
             samples.size());
  report.add("momentum_map", check_momentum_map(spec.momentum, spec.action, omega, samples), tol, samples.size());

  std::optional<Cocycle> sigma;
  try {
    sigma = compute_cocycle(spec.momentum, spec.action, probes, samples, tol);
    report.add("cocycle_constancy", sigma->spread, tol, samples.size(),
               {{"matrix", detail::to_json(sigma->matrix)}, {"fit_residual", sigma->fit_residual}});
    report.extra["cocycle"] = detail::to_json(sigma->matrix);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::not_constant) throw;
    CheckRecord r{"cocycle_constancy", 0.0, tol, false, samples.size(), {{"error", e.what()}}};
    report.checks.push_back(std::move(r));
  }

  if (sigma) {
    double residual = 0.0;
    for (std::size_t i = 0; i < 100; ++i) {
      const PhasePoint x(sampler.vector(d));
      const GroupElement g = sampler.vector(k);
      const Eigen::VectorXd lhs = spec.momentum(spec.action.apply(g, x));
      const Eigen::VectorXd rhs = affine_action(spec.momentum(x), g, *sigma);
      residual = std::max(residual, detail::max_abs(lhs - rhs));
    }
    report.add("affine_equivariance", residual, tol, 100);
  }

  {
    double residual = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < 100; ++i) {
      const PhasePoint x(sampler.vector(d));
      const PhasePoint gx = spec.action.apply(sampler.vector(k), x);
      try {
        const double h0 = spec.mode.continuous.energy(x);
        const double h1 = spec.mode.continuous.energy(gx);
        residual = std::max(residual, std::fabs(h1 - h0) / std::max(1.0, std::fabs(h0)));
        ++used;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::domain) throw;
      }
    }
    report.add("hamiltonian_invariance", residual, tol, used);
  }

  try {
    const auto guard_points = sample_guard(spec.mode.guard, spec.mode.continuous, nullptr, nullptr,
                                           spec.samples, sampler);
    const double defect = check_hybrid_action(spec.action, spec.mode, guard_points, probes, spec.tolerances.tol_g);
    report.add("hybrid_action", defect, tol, guard_points.size());
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::tangency_violation) throw;
    report.checks.push_back(CheckRecord{"hybrid_action", 0.0, tol, false, 0, {{"error", e.what()}}});
  }

  std::vector<Eigen::VectorXd> levels = spec.mu_list;
  if (levels.empty()) levels.push_back(detail::requested_level(spec, {}));
  nlohmann::json verdicts = nlohmann::json::array();
  ClassifyOptions copts{spec.samples, spec.tolerances.classify};
  for (const auto& mu : levels) {
    nlohmann::json v = {{"mu_minus", detail::to_json(mu)}};
    CheckRecord rec{"momentum_level", 0.0, copts.tol, false, 0, {}};
    try {
      const auto c = classify_level(spec.momentum, spec.mode, mu, sampler, copts);
      v["verdict"] = std::string(to_string(c.verdict));
      v["mu_plus"] = detail::to_json(c.mu_plus);
      v["shift"] = detail::to_json(Eigen::VectorXd(c.mu_plus - c.mu_minus));
      v["spread"] = c.spread;
      v["regular_value"] = c.regular_value;
      v["hybrid_regular_value"] = c.hybrid_regular_value;
      if (!c.reason.empty()) v["reason"] = c.reason;
      rec.value = c.spread;
      rec.samples = c.samples;
      rec.pass = c.verdict != MomentumVerdict::fails;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::empty_level_set) throw;
      v["verdict"] = "fails";
      v["reason"] = e.what();
    }
    rec.detail = {{"mu_minus", v["mu_minus"]}, {"verdict", v["verdict"]}};
    verdicts.push_back(v);
    report.checks.push_back(std::move(rec));
  }
  report.extra["classification"] = verdicts;

  if (sigma) {
    std::vector<Eigen::VectorXd> probes_mu = levels;
    for (auto& mu : sampler.group_elements(10, k)) probes_mu.push_back(std::move(mu));
    const auto reference = isotropy_basis(*sigma, probes_mu.front());
    double mismatch = 0.0;
    for (const auto& mu : probes_mu) {
      const auto basis = isotropy_basis(*sigma, mu);
      if (basis.size() != reference.size()) {
        mismatch = std::numeric_limits<double>::infinity();
        break;
      }
      for (std::size_t i = 0; i < basis.size(); ++i)
        mismatch = std::max(mismatch, detail::max_abs(basis[i] - reference[i]));
    }
    nlohmann::json basis_json = nlohmann::json::array();
    for (const auto& v : reference) basis_json.push_back(detail::to_json(v));
    report.add("isotropy_mu_independence", mismatch, tol, probes_mu.size(), {{"basis", basis_json}});
    report.extra["isotropy_basis"] = basis_json;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_simulate(SystemSpec spec, const CommandOptions& opts, std::ostream& out) {
  detail::apply_overrides(spec, opts);
  const PhasePoint x0 = detail::initial_state(spec, opts);
  const HybridFlow flow = run_hybrid(spec.system(), x0, spec.T, spec.run);
  const CsvTable table = trajectory_table(spec, flow);
  if (opts.out_dir) {
    auto f = detail::open_output(*opts.out_dir, "trajectory.csv");
    write_csv(f, table);
  } else {
    write_csv(out, table);
  }
  return exit_pass;
}

inline int cmd_verify(SystemSpec spec, const CommandOptions& opts, std::ostream& out) {
  detail::apply_overrides(spec, opts);
  const Report report = verify_system(spec, opts.seed);
  detail::emit_json(report.to_json(), opts, "report.json", out);
  return report.pass() ? exit_pass : exit_check_failed;
}

/// Reduced-system summary at one level.
inline nlohmann::json reduce_summary(const SystemSpec& spec, const Eigen::VectorXd& mu, std::uint64_t seed,
                                     bool* ok) {
  nlohmann::json j;
  j["system"] = spec.name;
  j["mu"] = detail::to_json(mu);
  *ok = true;
  if (detail::numerical_rank(spec.momentum.matrix) < spec.k()) {
    j["regular_value"] = false;
    j["error"] = "μ is not a regular value of J: the momentum matrix is rank deficient";
    *ok = false;
    return j;
  }
  j["regular_value"] = true;

  const ReductionProblem p = reduction_problem(spec, seed);
  const std::size_t iso = isotropy_dimension(p, mu);
  if (iso > 0)
    throw Error(ErrorKind::unsupported_isotropy,
                "isotropy subgroup at μ has dimension " + std::to_string(iso));

  Sampler sampler(seed);
  Eigen::VectorXd target = mu;
  std::vector<PhasePoint> samples;
  try {
    const auto c = classify_level(p.momentum, p.full, mu, sampler, p.classify);
    j["verdict"] = std::string(to_string(c.verdict));
    j["hybrid_regular_value"] = c.hybrid_regular_value;
    if (c.verdict == MomentumVerdict::fails) {
      j["error"] = c.reason;
      *ok = false;
    } else {
      target = c.mu_plus;
      samples = sample_guard(p.full.guard, p.full.continuous, &p.momentum, &mu, spec.samples, sampler);
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::empty_level_set) throw;
    j["verdict"] = "unknown";
    j["note"] = e.what();
  }

  const ReducedSystem r = build_reduced_system(p, mu, target, samples);
  const auto& sys = r.mode.continuous;
  j["target_mu"] = detail::to_json(target);
  nlohmann::json bound = nlohmann::json::object();
  for (const auto& [name, e] : r.chart.bound_expressions()) bound[name] = to_string(e);
  j["chart"] = {{"free_coordinates", r.chart.coordinate_names()}, {"bound_coordinates", bound}};
  j["reduced_form"] = detail::to_json(sys.form.matrix());
  j["hamiltonian"] = to_string(sys.hamiltonian);

  std::map<std::string, Expr, std::less<>> at_mu;
  for (Eigen::Index a = 0; a < mu.size(); ++a) at_mu[momentum_parameter_name(a)] = constant(mu[a]);
  j["hamiltonian_at_mu"] = to_string(normalize(substitute(sys.hamiltonian, at_mu)));
  j["guard"] = {{"level", to_string(r.mode.guard.level)}, {"direction", to_string(r.mode.guard.direction)}};
  nlohmann::json impact = nlohmann::json::object();
  const auto names = r.chart.coordinate_names();
  for (std::size_t i = 0; i < names.size(); ++i) impact[names[i]] = to_string(r.mode.impact.components[i]);
  j["impact"] = impact;
  if (!samples.empty()) j["diagram_defect"] = r.diagram_defect;
  return j;
}

inline int cmd_reduce(SystemSpec spec, const CommandOptions& opts, std::ostream& out) {
  detail::apply_overrides(spec, opts);
  const Eigen::VectorXd mu = detail::requested_level(spec, opts);
  bool ok = true;
  const nlohmann::json j = reduce_summary(spec, mu, opts.seed, &ok);
  detail::emit_json(j, opts, "reduced.json", out);
  return ok ? exit_pass : exit_check_failed;
}

struct CompareRun {
  HybridFlow full;
  HybridFlow reduced;
  std::vector<LevelSetChart> charts;
  std::vector<ReducedSystem> systems;
  Eigen::VectorXd mu0;
  Report report;
};

/// Full flow (RK4 on the canonical form) against the reduced flow started at
/// π_μ₀(x0), μ₀ = J(x0).
inline CompareRun compare_system(const SystemSpec& spec, const PhasePoint& x0, std::uint64_t seed = 0,
                                 const std::optional<SymplecticMatrix>& reduced_form_override = std::nullopt) {
  CompareRun run;
  run.report.command = "compare";
  run.report.system = spec.name;
  run.report.seed = seed;
  run.mu0 = spec.momentum(x0);

  const ReductionProblem p = reduction_problem(spec, seed);
  const std::size_t iso = isotropy_dimension(p, run.mu0);
  if (iso > 0)
    throw Error(ErrorKind::unsupported_isotropy, "isotropy subgroup at μ₀ has dimension " + std::to_string(iso));

  run.full = run_hybrid(HybridSystem{spec.mode, Integrator::rk4}, x0, spec.T, spec.run);
  run.charts = charts_along(run.full, spec.momentum, spec.coordinates, spec.free_indices);
  const PhasePoint y0(run.charts.front().project(x0.coords()));
  run.reduced = run_reduced_hybrid(p, run.mu0, y0, spec.T, spec.run, &run.systems, reduced_form_override);

  Report& rep = run.report;
  rep.extra["mu0"] = detail::to_json(run.mu0);
  rep.extra["initial_chart_state"] = detail::to_json(y0.coords());
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& l : run.reduced.labels) levels.push_back(detail::to_json(l));
  rep.extra["reduced_levels"] = levels;

  const double tol_state = spec.tolerances.tol_state;
  const double tol_time = spec.tolerances.tol_time;
  rep.checks.push_back(CheckRecord{"impact_count",
                                   std::fabs(static_cast<double>(run.full.impacts.size()) -
                                             static_cast<double>(run.reduced.impacts.size())),
                                   0.0,
                                   run.full.impacts.size() == run.reduced.impacts.size(),
                                   run.full.impacts.size(),
                                   {{"full", run.full.impacts.size()}, {"reduced", run.reduced.impacts.size()}}});
  try {
    const FlowComparison cmp = compare_flows(run.full, run.reduced, run.charts, tol_state, tol_time);
    nlohmann::json intervals = nlohmann::json::array();
    for (const auto& ic : cmp.intervals)
      intervals.push_back({{"index", ic.index},
                           {"start", ic.overlap_start},
                           {"end", ic.overlap_end},
                           {"max_state_distance", ic.max_state_distance}});
    rep.add("state_distance", cmp.max_state_distance, tol_state, cmp.intervals.size(), {{"intervals", intervals}});
    rep.add("impact_time_gap", cmp.max_impact_time_gap, tol_time, cmp.impact_time_gaps.size());

    double level_error = 0.0;
    for (std::size_t i = 0; i < run.full.size(); ++i)
      level_error = std::max(level_error, detail::max_abs(run.charts[i].mu - run.reduced.labels[i]));
    rep.add("level_sequence", level_error, 1e-10, run.full.size());
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::structure_mismatch) throw;
    rep.extra["error"] = e.what();
  }
  return run;
}

inline int cmd_compare(SystemSpec spec, const CommandOptions& opts, std::ostream& out) {
  detail::apply_overrides(spec, opts);
  const PhasePoint x0 = detail::initial_state(spec, opts);
  CompareRun run = compare_system(spec, x0, opts.seed);
  detail::emit_json(run.report.to_json(), opts, "compare_report.json", out);
  if (opts.out_dir) {
    std::vector<Eigen::VectorXd> full_levels;
    for (const auto& c : run.charts) full_levels.push_back(c.mu);
    const auto names = run.charts.front().coordinate_names();
    auto f = detail::open_output(*opts.out_dir, "full_projected.csv");
    write_csv(f, chart_table(names, run.full, full_levels,
                             [&](std::size_t i, const Eigen::VectorXd& x) { return run.charts[i].project(x); }));
    auto r = detail::open_output(*opts.out_dir, "reduced.csv");
    write_csv(r, chart_table(names, run.reduced, run.reduced.labels,
                             [](std::size_t, const Eigen::VectorXd& y) { return y; }));
  }
  return run.report.pass() ? exit_pass : exit_check_failed;
}

/// Runs `command` and maps library errors to exit codes, printing the error
/// to `err`.
template <typename Command>
int run_command(Command&& command, std::ostream& err) {
  try {
    return command();
  } catch (const Error& e) {
    err << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    err << "ValidationError: " << e.what() << '\n';
    return exit_input;
  } catch (const std::filesystem::filesystem_error& e) {
    err << e.what() << '\n';
    return exit_input;
  }
}

}  // namespace hybred

#endif  // HYBRED_COMMANDS_HPP
