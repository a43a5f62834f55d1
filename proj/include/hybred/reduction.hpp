#ifndef HYBRED_REDUCTION_HPP
#define HYBRED_REDUCTION_HPP

// Reduced hybrid systems on momentum level sets with trivial isotropy:
// affine level-set charts, the pulled-back symplectic form, reduced
// Hamiltonian / guard / impact, the level sequence across impacts and the
// comparison of projected full flows with reduced flows.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hybred/error.hpp"
#include "hybred/expr.hpp"
#include "hybred/hybrid.hpp"
#include "hybred/phase.hpp"
#include "hybred/symmetry.hpp"

namespace hybred {

// ---------------------------------------------------------------------------
// Affine normal form

/// c + Σ coefficient · name. Parameters sort before coordinates, each group by
/// name.
struct AffineForm {
  std::map<std::pair<int, std::string>, double> terms;  // (0 = parameter, 1 = variable)
  double constant = 0.0;

  bool is_constant() const {
    for (const auto& [key, c] : terms)
      if (c != 0.0) return false;
    return true;
  }

  AffineForm scaled(double s) const {
    AffineForm out = *this;
    for (auto& [key, c] : out.terms) c *= s;
    out.constant *= s;
    return out;
  }

  friend AffineForm operator+(AffineForm a, const AffineForm& b) {
    for (const auto& [key, c] : b.terms) a.terms[key] += c;
    a.constant += b.constant;
    return a;
  }
};

/// Affine form of `e` if it is affine in its leaves, otherwise nothing.
inline std::optional<AffineForm> to_affine(const Expr& e) {
  const Node& n = e.node();
  switch (n.kind) {
    case NodeKind::constant: {
      AffineForm f;
      f.constant = n.value;
      return f;
    }
    case NodeKind::variable:
    case NodeKind::parameter: {
      AffineForm f;
      f.terms[{n.kind == NodeKind::parameter ? 0 : 1, n.name}] = 1.0;
      return f;
    }
    case NodeKind::unary: {
      if (n.unary_op != UnaryOp::neg) return std::nullopt;
      auto a = to_affine(n.children[0]);
      if (!a) return std::nullopt;
      return a->scaled(-1.0);
    }
    case NodeKind::binary: {
      if (n.binary_op == BinaryOp::pow) return std::nullopt;
      auto a = to_affine(n.children[0]);
      if (!a) return std::nullopt;
      auto b = to_affine(n.children[1]);
      if (!b) return std::nullopt;
      switch (n.binary_op) {
        case BinaryOp::add: return *a + *b;
        case BinaryOp::sub: return *a + b->scaled(-1.0);
        case BinaryOp::mul:
          if (a->is_constant()) return b->scaled(a->constant);
          if (b->is_constant()) return a->scaled(b->constant);
          return std::nullopt;
        case BinaryOp::div:
          if (b->is_constant() && b->constant != 0.0) return a->scaled(1.0 / b->constant);
          return std::nullopt;
        case BinaryOp::pow: return std::nullopt;
      }
      return std::nullopt;
    }
    case NodeKind::call: return std::nullopt;
  }
  return std::nullopt;
}

/// Canonical expression for an affine form, e.g. `mu1 - 2*p2 + 3`.
inline Expr to_expr(const AffineForm& f) {
  std::optional<Expr> acc;
  auto leaf = [](const std::pair<int, std::string>& key) {
    return key.first == 0 ? parameter(key.second) : variable(key.second);
  };
  for (const auto& [key, c] : f.terms) {
    if (c == 0.0) continue;
    const double mag = std::fabs(c);
    Expr term = mag == 1.0 ? leaf(key) : binary(BinaryOp::mul, constant(mag), leaf(key));
    if (!acc) {
      if (c > 0) {
        acc = term;
      } else {
        acc = mag == 1.0 ? unary(UnaryOp::neg, leaf(key))
                         : binary(BinaryOp::mul, constant(c), leaf(key));
      }
    } else {
      acc = binary(c > 0 ? BinaryOp::add : BinaryOp::sub, *acc, term);
    }
  }
  if (!acc) return constant(f.constant);
  if (f.constant != 0.0)
    acc = binary(f.constant > 0 ? BinaryOp::add : BinaryOp::sub, *acc, constant(std::fabs(f.constant)));
  return *acc;
}

/// Rewrites every maximal affine subtree into canonical affine form. Two
/// expressions that differ only by affine rearrangement normalize to the same
/// text.
inline Expr normalize(const Expr& e) {
  if (auto f = to_affine(e)) return to_expr(*f);
  const Node& n = e.node();
  switch (n.kind) {
    case NodeKind::unary: return unary(n.unary_op, normalize(n.children[0]));
    case NodeKind::binary:
      return binary(n.binary_op, normalize(n.children[0]), normalize(n.children[1]));
    case NodeKind::call: return call(n.function, normalize(n.children[0]));
    default: return e;
  }
}

// ---------------------------------------------------------------------------
// Charts

inline std::string momentum_parameter_name(Eigen::Index a) { return "mu" + std::to_string(a + 1); }

/// Affine chart y ↦ x of J⁻¹(μ) by coordinate selection: the free
/// coordinates are kept, the bound ones solve B x + b = μ.
struct LevelSetChart {
  Eigen::VectorXd mu;
  std::vector<Eigen::Index> free_indices;
  std::vector<Eigen::Index> bound_indices;
  Eigen::MatrixXd bound_from_mu;    // M = B_bound⁻¹ (k × k)
  Eigen::MatrixXd bound_from_free;  // K = M B_free (k × m); x_bound = M (μ − b) − K y
  Eigen::VectorXd offset;           // b
  std::vector<std::string> full_names;

  Eigen::Index phase_dim() const {
    return static_cast<Eigen::Index>(free_indices.size() + bound_indices.size());
  }
  Eigen::Index chart_dim() const { return static_cast<Eigen::Index>(free_indices.size()); }

  std::vector<std::string> coordinate_names() const {
    std::vector<std::string> out;
    for (auto i : free_indices) out.push_back(full_names[static_cast<std::size_t>(i)]);
    return out;
  }

  /// P = ∂x/∂y, the linear part of the parametrization.
  Eigen::MatrixXd linear_part() const {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(phase_dim(), chart_dim());
    for (Eigen::Index l = 0; l < chart_dim(); ++l) P(free_indices[static_cast<std::size_t>(l)], l) = 1.0;
    for (std::size_t r = 0; r < bound_indices.size(); ++r)
      P.row(bound_indices[r]) = -bound_from_free.row(static_cast<Eigen::Index>(r));
    return P;
  }

  /// i_μ in chart coordinates.
  Eigen::VectorXd parametrize(const Eigen::VectorXd& y) const {
    Eigen::VectorXd x(phase_dim());
    for (Eigen::Index l = 0; l < chart_dim(); ++l) x[free_indices[static_cast<std::size_t>(l)]] = y[l];
    const Eigen::VectorXd xb = bound_from_mu * (mu - offset) - bound_from_free * y;
    for (std::size_t r = 0; r < bound_indices.size(); ++r)
      x[bound_indices[r]] = xb[static_cast<Eigen::Index>(r)];
    return x;
  }

  /// π_μ: coordinate extraction.
  Eigen::VectorXd project(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y(chart_dim());
    for (Eigen::Index l = 0; l < chart_dim(); ++l) y[l] = x[free_indices[static_cast<std::size_t>(l)]];
    return y;
  }

  /// Bound coordinate name ↦ affine expression in the free coordinates and
  /// the momentum parameters mu1..muk.
  std::map<std::string, Expr, std::less<>> bound_expressions() const {
    std::map<std::string, Expr, std::less<>> out;
    const Eigen::Index k = static_cast<Eigen::Index>(bound_indices.size());
    const auto free_names = coordinate_names();
    for (Eigen::Index r = 0; r < k; ++r) {
      AffineForm f;
      for (Eigen::Index j = 0; j < k; ++j) {
        f.terms[{0, momentum_parameter_name(j)}] += bound_from_mu(r, j);
        f.constant -= bound_from_mu(r, j) * offset[j];
      }
      for (Eigen::Index l = 0; l < chart_dim(); ++l)
        f.terms[{1, free_names[static_cast<std::size_t>(l)]}] -= bound_from_free(r, l);
      out.emplace(full_names[static_cast<std::size_t>(bound_indices[static_cast<std::size_t>(r)])], to_expr(f));
    }
    return out;
  }
};

/// Free coordinates by greedy full pivoting on |B|: each pivot column becomes
/// a bound coordinate.
inline std::vector<Eigen::Index> select_free_indices(const MomentumMap& J) {
  Eigen::MatrixXd m = J.matrix;
  const Eigen::Index k = m.rows();
  const Eigen::Index d = m.cols();
  std::vector<bool> row_used(static_cast<std::size_t>(k), false);
  std::vector<bool> col_used(static_cast<std::size_t>(d), false);
  const double scale = m.size() ? m.cwiseAbs().maxCoeff() : 0.0;
  for (Eigen::Index step = 0; step < k; ++step) {
    Eigen::Index pr = -1;
    Eigen::Index pc = -1;
    double best = 0.0;
    for (Eigen::Index r = 0; r < k; ++r) {
      if (row_used[static_cast<std::size_t>(r)]) continue;
      for (Eigen::Index c = 0; c < d; ++c) {
        if (col_used[static_cast<std::size_t>(c)]) continue;
        if (std::fabs(m(r, c)) > best) {
          best = std::fabs(m(r, c));
          pr = r;
          pc = c;
        }
      }
    }
    if (pr < 0 || best <= 1e-10 * scale)
      throw Error(ErrorKind::singular_selection, "momentum map matrix is rank deficient");
    row_used[static_cast<std::size_t>(pr)] = true;
    col_used[static_cast<std::size_t>(pc)] = true;
    for (Eigen::Index r = 0; r < k; ++r) {
      if (row_used[static_cast<std::size_t>(r)]) continue;
      m.row(r) -= (m(r, pc) / m(pr, pc)) * m.row(pr);
    }
  }
  std::vector<Eigen::Index> free;
  for (Eigen::Index c = 0; c < d; ++c)
    if (!col_used[static_cast<std::size_t>(c)]) free.push_back(c);
  return free;
}

/// Chart of J⁻¹(μ). Refuses nontrivial isotropy (the quotient would not be
/// the level set itself).
inline LevelSetChart build_chart(const MomentumMap& J, const Eigen::VectorXd& mu,
                                 const std::vector<std::string>& full_names,
                                 std::optional<std::vector<Eigen::Index>> free = std::nullopt,
                                 std::size_t isotropy_dim = 0) {
  if (isotropy_dim > 0)
    throw Error(ErrorKind::unsupported_isotropy,
                "isotropy subgroup has dimension " + std::to_string(isotropy_dim) +
                    "; only trivial isotropy is supported");
  const Eigen::Index k = J.group_dim();
  const Eigen::Index d = J.phase_dim();
  if (mu.size() != k || J.offset.size() != k || static_cast<Eigen::Index>(full_names.size()) != d)
    throw Error(ErrorKind::dimension_mismatch, "chart dimensions do not match the momentum map");

  LevelSetChart chart;
  chart.mu = mu;
  chart.offset = J.offset;
  chart.full_names = full_names;
  chart.free_indices = free ? *free : select_free_indices(J);
  if (static_cast<Eigen::Index>(chart.free_indices.size()) != d - k)
    throw Error(ErrorKind::singular_selection, "need exactly 2n - k free coordinates");
  std::vector<bool> is_free(static_cast<std::size_t>(d), false);
  for (auto i : chart.free_indices) {
    if (i < 0 || i >= d || is_free[static_cast<std::size_t>(i)])
      throw Error(ErrorKind::singular_selection, "invalid free coordinate index");
    is_free[static_cast<std::size_t>(i)] = true;
  }
  for (Eigen::Index i = 0; i < d; ++i)
    if (!is_free[static_cast<std::size_t>(i)]) chart.bound_indices.push_back(i);

  Eigen::MatrixXd Bb(k, k);
  Eigen::MatrixXd Bf(k, d - k);
  for (Eigen::Index j = 0; j < k; ++j) Bb.col(j) = J.matrix.col(chart.bound_indices[static_cast<std::size_t>(j)]);
  for (Eigen::Index j = 0; j < d - k; ++j) Bf.col(j) = J.matrix.col(chart.free_indices[static_cast<std::size_t>(j)]);
  if (k == 0) {
    chart.bound_from_mu = Eigen::MatrixXd(0, 0);
    chart.bound_from_free = Eigen::MatrixXd(0, d);
    return chart;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(Bb);
  lu.setThreshold(1e-10);
  if (!lu.isInvertible())
    throw Error(ErrorKind::singular_selection,
                "the chosen free coordinates do not determine the remaining ones");
  chart.bound_from_mu = lu.inverse();
  chart.bound_from_free = chart.bound_from_mu * Bf;
  return chart;
}

/// Ω_μ = Pᵀ Ω P, i.e. i*_μ ω = π*_μ ω_μ.
inline SymplecticMatrix reduced_form(const LevelSetChart& chart, const SymplecticMatrix& omega) {
  const Eigen::MatrixXd P = chart.linear_part();
  const Eigen::MatrixXd reduced = P.transpose() * omega.matrix() * P;
  if (reduced.rows() % 2 != 0)
    throw Error(ErrorKind::degenerate_reduced_form, "odd-dimensional reduced space");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(reduced);
  lu.setThreshold(1e-10);
  if (!lu.isInvertible())
    throw Error(ErrorKind::degenerate_reduced_form, "pulled-back form is singular on this chart");
  return SymplecticMatrix(reduced);
}

/// H_μ with H_μ ∘ π_μ = H ∘ i_μ, by substituting the bound coordinates.
inline Expr reduce_hamiltonian(const Expr& hamiltonian, const LevelSetChart& chart) {
  return normalize(substitute(hamiltonian, chart.bound_expressions()));
}

struct ReducedGuardImpact {
  Guard guard;
  ImpactMap impact;
  double diagram_defect = 0.0;  // max ‖π_{μ₊}(Δ x) − Δ_μ(π_{μ₋} x)‖∞ over the samples
  double level_defect = 0.0;    // max ‖J(Δ x) − μ₊‖∞ over the samples
};

/// Guard composed with i_{μ₋}; impact π_{μ₊} ∘ Δ ∘ i_{μ₋}. The commutative
/// diagram and the target level are re-checked on `samples` (full-space points
/// of S ∩ J⁻¹(μ₋)).
inline ReducedGuardImpact reduce_guard_impact(const HybridMode& full, const MomentumMap& J,
                                              const LevelSetChart& chart_in,
                                              const LevelSetChart& chart_out,
                                              const std::vector<PhasePoint>& samples = {},
                                              double tol = 1e-10) {
  if (chart_in.free_indices != chart_out.free_indices)
    throw Error(ErrorKind::validation, "level charts must share their free coordinates");
  const auto subs = chart_in.bound_expressions();
  ReducedGuardImpact out;
  out.guard.level = normalize(substitute(full.guard.level, subs));
  out.guard.direction = normalize(substitute(full.guard.direction, subs));
  for (auto i : chart_out.free_indices)
    out.impact.components.push_back(
        normalize(substitute(full.impact.components[static_cast<std::size_t>(i)], subs)));

  if (!samples.empty()) {
    HamiltonianSystem reduced_ctx;
    reduced_ctx.coordinates = chart_in.coordinate_names();
    reduced_ctx.parameters = full.continuous.parameters;
    for (Eigen::Index a = 0; a < chart_in.mu.size(); ++a)
      reduced_ctx.parameters[momentum_parameter_name(a)] = chart_in.mu[a];
    for (const auto& x : samples) {
      const Eigen::VectorXd post = full.impact(full.continuous, x.coords());
      out.level_defect = std::max(out.level_defect, detail::max_abs(J(post) - chart_out.mu));
      const Eigen::VectorXd lhs = chart_out.project(post);
      const Eigen::VectorXd rhs = out.impact(reduced_ctx, chart_in.project(x.coords()));
      out.diagram_defect = std::max(out.diagram_defect, detail::max_abs(lhs - rhs));
    }
    const double scale = 1.0 + detail::max_abs(chart_out.mu);
    if (out.level_defect > tol * scale)
      throw Error(ErrorKind::level_mismatch, "J(Δx) misses the target level by " +
                                                 detail::format_number(out.level_defect));
  }
  return out;
}

// ---------------------------------------------------------------------------
// The reduced system and its runner

/// Full-system data needed to build reduced systems at any level.
struct ReductionProblem {
  HybridMode full;  // continuous part must carry the canonical (or any constant) form
  TranslationAction action;
  MomentumMap momentum;
  Cocycle cocycle;
  std::optional<std::vector<Eigen::Index>> free_indices;
  ClassifyOptions classify;
  std::uint64_t seed = 0;
};

struct ReducedSystem {
  LevelSetChart chart;        // chart at μ₋
  Eigen::VectorXd target_mu;  // μ₊ reached by the impact
  HybridMode mode;            // H_μ, Ω_μ, guard_μ, impact_μ in chart coordinates
  double diagram_defect = 0.0;
};

inline std::size_t isotropy_dimension(const ReductionProblem& p, const Eigen::VectorXd& mu) {
  return isotropy_basis(p.cocycle, mu).size();
}

/// Reduced hybrid system at level μ whose impact lands on `target_mu`.
inline ReducedSystem build_reduced_system(const ReductionProblem& p, const Eigen::VectorXd& mu,
                                          const Eigen::VectorXd& target_mu,
                                          const std::vector<PhasePoint>& samples = {}) {
  const auto& names = p.full.continuous.coordinates;
  const std::size_t iso = isotropy_dimension(p, mu);
  ReducedSystem r;
  r.chart = build_chart(p.momentum, mu, names, p.free_indices, iso);
  const LevelSetChart out_chart = build_chart(p.momentum, target_mu, names, r.chart.free_indices, iso);
  r.target_mu = target_mu;

  HamiltonianSystem& sys = r.mode.continuous;
  sys.hamiltonian = reduce_hamiltonian(p.full.continuous.hamiltonian, r.chart);
  sys.form = reduced_form(r.chart, p.full.continuous.form);
  sys.coordinates = r.chart.coordinate_names();
  sys.parameters = p.full.continuous.parameters;
  for (Eigen::Index a = 0; a < mu.size(); ++a) sys.parameters[momentum_parameter_name(a)] = mu[a];
  sys.separable = false;

  auto gi = reduce_guard_impact(p.full, p.momentum, r.chart, out_chart, samples);
  r.mode.guard = std::move(gi.guard);
  r.mode.impact = std::move(gi.impact);
  r.mode.label = mu;
  r.diagram_defect = gi.diagram_defect;
  return r;
}

/// Level μ₊ reached from μ₋ by the impact, from the sampled classification.
inline LevelClassification next_level(const ReductionProblem& p, const Eigen::VectorXd& mu, Sampler& sampler) {
  auto c = classify_level(p.momentum, p.full, mu, sampler, p.classify);
  if (c.verdict == MomentumVerdict::fails)
    throw Error(ErrorKind::level_mismatch, "impact does not map the level set into a single level: " + c.reason);
  return c;
}

/// Reduced system at μ, with its target level found by classification.
inline ReducedSystem reduced_system_at(const ReductionProblem& p, const Eigen::VectorXd& mu, Sampler& sampler) {
  const auto c = next_level(p, mu, sampler);
  return build_reduced_system(p, mu, c.mu_plus);
}

/// Runs the reduced hybrid flow from chart coordinates y0 at level mu0 with
/// RK4 on Ω_μ, switching charts along the level sequence μ₀, μ₁, ...
inline HybridFlow run_reduced_hybrid(const ReductionProblem& p, const Eigen::VectorXd& mu0,
                                     const PhasePoint& y0, double T, const RunOptions& opts = {},
                                     std::vector<ReducedSystem>* systems = nullptr,
                                     const std::optional<SymplecticMatrix>& form_override = std::nullopt) {
  Sampler sampler(p.seed);
  auto make = [&](const Eigen::VectorXd& mu) {
    ReducedSystem r = reduced_system_at(p, mu, sampler);
    if (form_override) r.mode.continuous.form = *form_override;
    if (systems) systems->push_back(r);
    return r;
  };
  ReducedSystem first = make(mu0);
  Eigen::VectorXd target = first.target_mu;
  NextMode next = [&](std::size_t, const HybridMode&) {
    ReducedSystem r = make(target);
    target = r.target_mu;
    return r.mode;
  };
  return run_hybrid(first.mode, next, Integrator::rk4, y0, T, opts);
}

// ---------------------------------------------------------------------------
// Flow comparison

struct IntervalComparison {
  std::size_t index = 0;
  double max_state_distance = 0.0;
  double overlap_start = 0.0;
  double overlap_end = 0.0;
};

struct FlowComparison {
  std::vector<IntervalComparison> intervals;
  std::vector<double> impact_time_gaps;
  std::size_t full_segments = 0;
  std::size_t reduced_segments = 0;
  double max_state_distance = 0.0;
  double max_impact_time_gap = 0.0;
  double tol_state = 1e-6;
  double tol_time = 1e-8;
  bool pass = false;
};

/// Sup-norm distance between π_{μᵢ}(full segment i) and reduced segment i on
/// their common time interval, plus impact-time differences.
inline FlowComparison compare_flows(const HybridFlow& full, const HybridFlow& reduced,
                                    const std::vector<LevelSetChart>& charts, double tol_state = 1e-6,
                                    double tol_time = 1e-8) {
  if (full.impacts.size() != reduced.impacts.size() || full.size() != reduced.size())
    throw Error(ErrorKind::structure_mismatch,
                "full flow has " + std::to_string(full.impacts.size()) + " impacts, reduced flow has " +
                    std::to_string(reduced.impacts.size()));
  if (charts.size() < full.size())
    throw Error(ErrorKind::dimension_mismatch, "need one chart per interval");

  FlowComparison out;
  out.tol_state = tol_state;
  out.tol_time = tol_time;
  out.full_segments = full.size();
  out.reduced_segments = reduced.size();
  for (std::size_t i = 0; i < full.size(); ++i) {
    const auto& fs = full.segments[i];
    const auto& rs = reduced.segments[i];
    IntervalComparison ic;
    ic.index = i;
    ic.overlap_start = std::max(fs.start_time(), rs.start_time());
    ic.overlap_end = std::min(fs.end_time(), rs.end_time());
    std::vector<double> times;
    for (double t : fs.times())
      if (t >= ic.overlap_start && t <= ic.overlap_end) times.push_back(t);
    for (double t : rs.times())
      if (t >= ic.overlap_start && t <= ic.overlap_end) times.push_back(t);
    if (ic.overlap_end >= ic.overlap_start) {
      times.push_back(ic.overlap_start);
      times.push_back(ic.overlap_end);
    }
    for (double t : times) {
      const Eigen::VectorXd a = charts[i].project(fs.interpolate(t));
      const Eigen::VectorXd b = rs.interpolate(t);
      ic.max_state_distance = std::max(ic.max_state_distance, detail::max_abs(a - b));
    }
    out.max_state_distance = std::max(out.max_state_distance, ic.max_state_distance);
    out.intervals.push_back(ic);
  }
  for (std::size_t i = 0; i < full.impacts.size(); ++i) {
    const double gap = std::fabs(full.impacts[i].time - reduced.impacts[i].time);
    out.impact_time_gaps.push_back(gap);
    out.max_impact_time_gap = std::max(out.max_impact_time_gap, gap);
  }
  out.pass = out.max_state_distance < tol_state && out.max_impact_time_gap < tol_time;
  return out;
}

/// Chart per interval of a full flow, at μᵢ = J(start of segment i).
inline std::vector<LevelSetChart> charts_along(const HybridFlow& full, const MomentumMap& J,
                                               const std::vector<std::string>& names,
                                               const std::optional<std::vector<Eigen::Index>>& free) {
  std::vector<LevelSetChart> charts;
  for (const auto& seg : full.segments) charts.push_back(build_chart(J, J(seg.front()), names, free));
  return charts;
}

}  // namespace hybred

#endif  // HYBRED_REDUCTION_HPP
