#ifndef HYBRED_SPEC_HPP
#define HYBRED_SPEC_HPP

// JSON system description: Hamiltonian, guard, impact, symmetry data,
// integrator settings and tolerances. See README.md for the field list.

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hybred/error.hpp"
#include "hybred/expr.hpp"
#include "hybred/hybrid.hpp"
#include "hybred/phase.hpp"
#include "hybred/reduction.hpp"
#include "hybred/symmetry.hpp"

namespace hybred {

struct Tolerances {
  double tol_t = 1e-10;
  double tol_g = 1e-9;
  double tol_state = 1e-6;
  double tol_time = 1e-8;
  double check = 1e-12;     // symmetry identities
  double classify = 1e-10;  // level-set verdicts
};

struct SystemSpec {
  std::string name;
  int n = 0;
  std::map<std::string, double> parameters;
  Symbols symbols;
  std::vector<std::string> coordinates;

  HybridMode mode;  // canonical form, full coordinates
  bool separable = false;
  TranslationAction action;
  MomentumMap momentum;
  std::optional<std::vector<Eigen::Index>> free_indices;

  Integrator integrator = Integrator::leapfrog;
  RunOptions run;
  double T = 10.0;
  Tolerances tolerances;
  std::optional<PhasePoint> initial_condition;
  std::vector<Eigen::VectorXd> mu_list;
  std::size_t samples = 50;

  // Source texts, kept for reporting.
  std::string hamiltonian_text;
  std::vector<std::string> impact_texts;

  Eigen::Index k() const { return action.group_dim(); }

  void set_parameter(const std::string& name, double value) {
    if (!parameters.count(name))
      throw Error(ErrorKind::validation, "unknown parameter '" + name + "'");
    parameters[name] = value;
    mode.continuous.parameters[name] = value;
  }

  HybridSystem system() const { return HybridSystem{mode, integrator}; }
};

namespace detail {

using nlohmann::json;

[[noreturn]] inline void invalid(const std::string& msg) { throw Error(ErrorKind::validation, msg); }

inline const json& require(const json& j, const char* field) {
  if (!j.is_object() || !j.contains(field)) invalid(std::string("missing field '") + field + "'");
  return j.at(field);
}

inline double number(const json& j, const std::string& field) {
  if (!j.is_number()) invalid("field '" + field + "' must be a number");
  return j.get<double>();
}

inline Eigen::VectorXd vector_field(const json& j, const std::string& field) {
  if (!j.is_array()) invalid("field '" + field + "' must be an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number(j[i], field);
  return v;
}

/// Row-major nested array; `cols` is used when there are no rows.
inline Eigen::MatrixXd matrix_field(const json& j, const std::string& field, Eigen::Index rows,
                                    Eigen::Index cols, const std::string& shape_message) {
  if (!j.is_array()) invalid("field '" + field + "' must be a nested array");
  if (static_cast<Eigen::Index>(j.size()) != rows) invalid(shape_message);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) invalid(shape_message);
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = number(row[static_cast<std::size_t>(c)], field);
  }
  return m;
}

inline Expr expression_field(const std::string& text, const Symbols& symbols, const std::string& field) {
  try {
    return parse_expression(text, symbols);
  } catch (const Error& e) {
    throw Error(e.kind(), "field '" + field + "': " + e.what());
  }
}

/// Cheap separability test: ∂H/∂q must not depend on p and ∂H/∂p must not
/// depend on q, probed at a few seeded points.
inline bool looks_separable(const HamiltonianSystem& sys, int n) {
  Sampler sampler(12345, 1.5);
  for (int trial = 0; trial < 8; ++trial) {
    const Eigen::VectorXd a = sampler.vector(2 * n);
    Eigen::VectorXd b = sampler.vector(2 * n);
    Eigen::VectorXd mixed_q = a;  // same q, other p
    mixed_q.tail(n) = b.tail(n);
    Eigen::VectorXd mixed_p = a;  // same p, other q
    mixed_p.head(n) = b.head(n);
    try {
      const Eigen::VectorXd ga = sys.gradient(a);
      const Eigen::VectorXd gq = sys.gradient(mixed_q);
      const Eigen::VectorXd gp = sys.gradient(mixed_p);
      const double scale = 1.0 + ga.cwiseAbs().maxCoeff();
      if ((ga.head(n) - gq.head(n)).cwiseAbs().maxCoeff() > 1e-9 * scale) return false;
      if ((ga.tail(n) - gp.tail(n)).cwiseAbs().maxCoeff() > 1e-9 * scale) return false;
    } catch (const Error&) {
      continue;  // outside the domain of H at this probe
    }
  }
  return true;
}

}  // namespace detail

inline SystemSpec parse_spec(const nlohmann::json& j) {
  using detail::invalid;
  using detail::require;
  SystemSpec s;
  if (!j.is_object()) invalid("system spec must be a JSON object");
  s.name = j.value("name", std::string("system"));
  const auto& dim = require(j, "dimension");
  if (!dim.is_number_integer() || dim.get<int>() <= 0) invalid("field 'dimension' must be a positive integer");
  s.n = dim.get<int>();
  s.coordinates = canonical_coordinate_names(s.n);
  s.symbols.variables = s.coordinates;

  if (j.contains("parameters")) {
    const auto& params = j.at("parameters");
    if (!params.is_object()) invalid("field 'parameters' must be an object");
    for (const auto& [name, value] : params.items()) {
      for (const auto& c : s.coordinates)
        if (c == name) invalid("parameter '" + name + "' clashes with a coordinate name");
      if (name.rfind("mu", 0) == 0) invalid("parameter names starting with 'mu' are reserved");
      if (is_builtin(name)) invalid("parameter '" + name + "' clashes with a builtin function");
      s.parameters[name] = detail::number(value, "parameters." + name);
      s.symbols.parameters.push_back(name);
    }
  }

  if (j.contains("functions")) {
    const auto& fns = j.at("functions");
    if (!fns.is_object()) invalid("field 'functions' must be an object");
    for (const auto& [name, def] : fns.items()) {
      if (is_builtin(name) || s.symbols.has_variable(name) || s.symbols.has_parameter(name))
        invalid("function name '" + name + "' is already taken");
      const std::string arg = def.value("argument", std::string("x"));
      const std::string body = require(def, "body").get<std::string>();
      try {
        s.symbols.functions[name] = define_function(name, arg, body, s.symbols);
      } catch (const Error& e) {
        throw Error(ErrorKind::parse, "field 'functions." + name + "': " + e.what());
      }
    }
  }

  HamiltonianSystem& sys = s.mode.continuous;
  s.hamiltonian_text = require(j, "hamiltonian").get<std::string>();
  sys.hamiltonian = detail::expression_field(s.hamiltonian_text, s.symbols, "hamiltonian");
  sys.form = SymplecticMatrix::canonical(s.n);
  sys.coordinates = s.coordinates;
  for (const auto& [name, v] : s.parameters) sys.parameters[name] = v;
  s.separable = j.value("separable", false);
  sys.separable = s.separable;

  const auto& guard = require(j, "guard");
  s.mode.guard.level =
      detail::expression_field(require(guard, "level").get<std::string>(), s.symbols, "guard.level");
  s.mode.guard.direction =
      detail::expression_field(require(guard, "direction").get<std::string>(), s.symbols, "guard.direction");

  const auto& impact = require(j, "impact");
  if (!impact.is_array() || static_cast<int>(impact.size()) != 2 * s.n)
    invalid("impact map must have 2n components");
  for (std::size_t i = 0; i < impact.size(); ++i) {
    s.impact_texts.push_back(impact[i].get<std::string>());
    s.mode.impact.components.push_back(
        detail::expression_field(s.impact_texts.back(), s.symbols, "impact[" + std::to_string(i) + "]"));
  }

  const auto& action = require(j, "action");
  if (!action.is_array() || static_cast<int>(action.size()) != 2 * s.n)
    invalid("action matrix must be 2n×k");
  const Eigen::Index k = action.empty() || !action[0].is_array() ? 0 : static_cast<Eigen::Index>(action[0].size());
  s.action.generators = detail::matrix_field(action, "action", 2 * s.n, k, "action matrix must be 2n×k");

  const auto& momentum = require(j, "momentum");
  s.momentum.matrix = detail::matrix_field(require(momentum, "matrix"), "momentum.matrix", k, 2 * s.n,
                                           "momentum matrix must be k×2n");
  s.momentum.offset = momentum.contains("offset") ? detail::vector_field(momentum.at("offset"), "momentum.offset")
                                                  : Eigen::VectorXd::Zero(k);
  if (s.momentum.offset.size() != k) invalid("momentum offset must have k entries");

  if (j.contains("free_coordinates")) {
    std::vector<Eigen::Index> free;
    for (const auto& name : j.at("free_coordinates")) {
      const auto it = std::find(s.coordinates.begin(), s.coordinates.end(), name.get<std::string>());
      if (it == s.coordinates.end()) invalid("unknown free coordinate " + name.dump());
      free.push_back(static_cast<Eigen::Index>(it - s.coordinates.begin()));
    }
    s.free_indices = free;
  }

  if (j.contains("integrator")) {
    const auto& in = j.at("integrator");
    const std::string method = in.value("method", std::string("leapfrog"));
    if (method == "leapfrog") {
      s.integrator = Integrator::leapfrog;
    } else if (method == "rk4") {
      s.integrator = Integrator::rk4;
    } else {
      invalid("integrator.method must be 'leapfrog' or 'rk4'");
    }
    if (in.contains("h")) s.run.h = detail::number(in.at("h"), "integrator.h");
    if (in.contains("T")) s.T = detail::number(in.at("T"), "integrator.T");
    if (in.contains("max_impacts")) s.run.max_impacts = in.at("max_impacts").get<std::size_t>();
    if (in.contains("min_gap")) s.run.min_gap = detail::number(in.at("min_gap"), "integrator.min_gap");
  } else {
    s.integrator = s.separable ? Integrator::leapfrog : Integrator::rk4;
  }
  if (s.integrator == Integrator::leapfrog && !s.separable)
    invalid("leapfrog requested but the Hamiltonian is not declared separable");
  if (!(s.run.h > 0.0)) invalid("integrator.h must be positive");
  if (s.separable && !detail::looks_separable(sys, s.n))
    invalid("hamiltonian is declared separable but ∂H/∂q depends on p or ∂H/∂p on q");

  if (j.contains("tolerances")) {
    const auto& t = j.at("tolerances");
    auto read = [&](const char* key, double& target) {
      if (t.contains(key)) target = detail::number(t.at(key), std::string("tolerances.") + key);
    };
    read("tol_t", s.tolerances.tol_t);
    read("tol_g", s.tolerances.tol_g);
    read("tol_state", s.tolerances.tol_state);
    read("tol_time", s.tolerances.tol_time);
    read("check", s.tolerances.check);
    read("classify", s.tolerances.classify);
  }
  s.run.tol_t = s.tolerances.tol_t;
  s.run.tol_g = s.tolerances.tol_g;

  if (j.contains("initial_condition")) {
    const Eigen::VectorXd x0 = detail::vector_field(j.at("initial_condition"), "initial_condition");
    if (x0.size() != 2 * s.n) invalid("initial_condition must have 2n entries");
    s.initial_condition = PhasePoint(x0);
  }
  if (j.contains("mu_list")) {
    for (const auto& mu : j.at("mu_list")) {
      s.mu_list.push_back(detail::vector_field(mu, "mu_list"));
      if (s.mu_list.back().size() != k) invalid("every mu_list entry must have k entries");
    }
  }
  if (j.contains("samples")) s.samples = j.at("samples").get<std::size_t>();
  return s;
}

inline SystemSpec load_spec_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::parse, "malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  try {
    return parse_spec(j);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::validation, e.what());
  }
}

inline SystemSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::parse, "cannot open spec file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_spec_text(ss.str());
}

/// Full-system data for reduction, with the cocycle fitted from seeded
/// samples.
inline ReductionProblem reduction_problem(const SystemSpec& s, std::uint64_t seed = 0) {
  ReductionProblem p;
  p.full = s.mode;
  p.action = s.action;
  p.momentum = s.momentum;
  Sampler sampler(seed);
  std::vector<GroupElement> probes;
  for (Eigen::Index a = 0; a < s.k(); ++a) probes.push_back(Eigen::VectorXd::Unit(s.k(), a));
  p.cocycle = compute_cocycle(s.momentum, s.action, probes, sampler.points(8, 2 * s.n), 1e-9);
  p.free_indices = s.free_indices;
  p.classify.samples = s.samples;
  p.classify.tol = s.tolerances.classify;
  p.seed = seed;
  return p;
}

}  // namespace hybred

#endif  // HYBRED_SPEC_HPP
