#ifndef HYBRED_HYBRID_HPP
#define HYBRED_HYBRID_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hybred/error.hpp"
#include "hybred/expr.hpp"
#include "hybred/phase.hpp"

namespace hybred {

/// S = {level = 0}. The flow lives in level > 0; a crossing to level < 0 is an
/// impact only where direction < 0.
struct Guard {
  Expr level;
  Expr direction;

  double level_at(const HamiltonianSystem& ctx, const Eigen::VectorXd& x) const {
    return eval(level, ctx.binding(x));
  }
  double direction_at(const HamiltonianSystem& ctx, const Eigen::VectorXd& x) const {
    return eval(direction, ctx.binding(x));
  }
};

/// Δ as one expression per output coordinate.
struct ImpactMap {
  std::vector<Expr> components;

  Eigen::VectorXd operator()(const HamiltonianSystem& ctx, const Eigen::VectorXd& x) const {
    const Binding b = ctx.binding(x);
    Eigen::VectorXd out(static_cast<Eigen::Index>(components.size()));
    for (std::size_t i = 0; i < components.size(); ++i)
      out[static_cast<Eigen::Index>(i)] = eval(components[i], b);
    return out;
  }
};

/// One continuous regime: Hamiltonian flow, guard and impact. `label` tags
/// the regime, e.g. the momentum level of a reduced chart.
struct HybridMode {
  HamiltonianSystem continuous;
  Guard guard;
  ImpactMap impact;
  Eigen::VectorXd label;
};

struct HybridSystem {
  HybridMode mode;
  Integrator integrator = Integrator::rk4;
};

struct RunOptions {
  double h = 1e-3;
  std::size_t max_impacts = 100000;
  double min_gap = 1e-9;
  double tol_t = 1e-10;
  double tol_g = 1e-9;
};

struct ImpactRecord {
  double time = 0.0;
  PhasePoint pre;
  PhasePoint post;
};

/// (Λ, 𝒥, 𝒞): segment i lives on [τᵢ, τᵢ₊₁]; impacts[i] joins segment i to
/// segment i + 1.
struct HybridFlow {
  std::vector<TrajectorySegment> segments;
  std::vector<ImpactRecord> impacts;
  std::vector<Eigen::VectorXd> labels;
  std::size_t tangential_events = 0;

  std::size_t size() const { return segments.size(); }
  std::pair<double, double> interval(std::size_t i) const {
    return {segments[i].start_time(), segments[i].end_time()};
  }
};

struct Event {
  double time = 0.0;
  PhasePoint state;
};

struct EventSearch {
  std::optional<Event> event;
  bool tangential = false;
};

namespace detail {

/// Bisection on node pair [i, i+1] given level values g_i >= 0 > g_{i+1}.
/// Returns the left (level >= 0) end of the final bracket.
inline double bisect_crossing(const TrajectorySegment& seg, std::size_t i, const Guard& guard,
                              const HamiltonianSystem& ctx, double tol_t) {
  double lo = seg.times()[i];
  double hi = seg.times()[i + 1];
  while (hi - lo > tol_t) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (guard.level_at(ctx, seg.interpolate_in(i, mid)) >= 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

inline std::optional<Event> event_in_pair(const TrajectorySegment& seg, std::size_t i, double g0,
                                          double g1, const Guard& guard,
                                          const HamiltonianSystem& ctx, double tol_t) {
  if (!(g0 >= 0.0 && g1 < 0.0)) return std::nullopt;
  const double t = bisect_crossing(seg, i, guard, ctx, tol_t);
  Eigen::VectorXd x = seg.interpolate_in(i, t);
  if (!(guard.direction_at(ctx, x) < 0.0)) return std::nullopt;
  return Event{t, PhasePoint(std::move(x))};
}

}  // namespace detail

/// Earliest admissible guard crossing on the segment, located on the Hermite
/// interpolant to within `tol_t`. Nodes that touch the guard (|level| <
/// `tol_g`) without a bracketing sign change are reported as tangential.
inline EventSearch locate_event(const TrajectorySegment& segment, const Guard& guard,
                                const HamiltonianSystem& ctx, double tol_t, double tol_g = 1e-9) {
  if (segment.size() < 2) throw Error(ErrorKind::validation, "segment needs at least two nodes");
  if (!(tol_t > 0.0)) throw Error(ErrorKind::validation, "tol_t must be positive");
  std::vector<double> g(segment.size());
  for (std::size_t i = 0; i < segment.size(); ++i)
    g[i] = guard.level_at(ctx, segment.states()[i].coords());

  EventSearch out;
  for (std::size_t i = 0; i + 1 < segment.size(); ++i) {
    if (auto ev = detail::event_in_pair(segment, i, g[i], g[i + 1], guard, ctx, tol_t)) {
      out.event = std::move(ev);
      return out;
    }
  }
  for (std::size_t i = 1; i < segment.size(); ++i) {
    const bool brackets = (g[i - 1] >= 0.0) != (g[i] >= 0.0) ||
                          (i + 1 < segment.size() && (g[i] >= 0.0) != (g[i + 1] >= 0.0));
    if (std::fabs(g[i]) < tol_g && !brackets) out.tangential = true;
  }
  return out;
}

/// Δ evaluated in `from` coordinates, producing `to` coordinates. Checks the
/// post-impact state against the guard of the regime it enters.
inline PhasePoint apply_impact(const ImpactMap& impact, const HamiltonianSystem& from,
                               const Guard& next_guard, const HamiltonianSystem& to,
                               const PhasePoint& x, double tol_g = 1e-9) {
  if (impact.components.size() != to.coordinates.size())
    throw Error(ErrorKind::dimension_mismatch, "impact map has wrong number of components");
  PhasePoint post(impact(from, x.coords()));
  const double g = next_guard.level_at(to, post.coords());
  if (std::fabs(g) <= tol_g) {
    const double d = next_guard.direction_at(to, post.coords());
    if (d < -tol_g)
      throw Error(ErrorKind::re_crossing, "post-impact state is still an admissible impact point");
    if (std::fabs(d) <= tol_g)
      throw Error(ErrorKind::zeno_suspected,
                  "post-impact state lies in the closure of the guard");
  }
  return post;
}

/// Same-regime form.
inline PhasePoint apply_impact(const HybridMode& mode, const PhasePoint& x, double tol_g = 1e-9) {
  return apply_impact(mode.impact, mode.continuous, mode.guard, mode.continuous, x, tol_g);
}

/// Maps (index of the segment that just ended, its mode) to the mode of the
/// next segment.
using NextMode = std::function<HybridMode(std::size_t, const HybridMode&)>;

/// Integrate / locate / impact until time T, switching regimes through
/// `next_mode` after each impact.
inline HybridFlow run_hybrid(const HybridMode& first, const NextMode& next_mode,
                             Integrator integrator, const PhasePoint& x0, double T,
                             const RunOptions& opts = {}) {
  if (!(T >= 0.0) || !std::isfinite(T)) throw Error(ErrorKind::validation, "T must be finite and >= 0");
  if (!(opts.h > 0.0)) throw Error(ErrorKind::validation, "step size must be positive");

  HybridFlow flow;
  HybridMode mode = first;
  PhasePoint x = x0;
  double t = 0.0;
  std::optional<double> last_impact;

  for (;;) {
    const HamiltonianSystem& sys = mode.continuous;
    TrajectorySegment seg;
    seg.append(t, x, hamiltonian_vector_field(sys, x));
    double g_prev = mode.guard.level_at(sys, x.coords());
    double g_prev2 = g_prev;
    std::optional<Event> event;

    while (t < T) {
      double hstep = std::min(opts.h, T - t);
      if (T - (t + hstep) <= 1e-9 * opts.h) hstep = T - t;
      const double tn = (hstep == T - t) ? T : t + hstep;
      PhasePoint xn = step(sys, integrator, x, hstep);
      seg.append(tn, xn, hamiltonian_vector_field(sys, xn));
      const double g = mode.guard.level_at(sys, xn.coords());
      const std::size_t i = seg.size() - 2;
      event = detail::event_in_pair(seg, i, g_prev, g, mode.guard, sys, opts.tol_t);
      if (event) break;
      if (seg.size() >= 3 && std::fabs(g_prev) < opts.tol_g && g_prev2 >= 0.0 && g >= 0.0)
        ++flow.tangential_events;
      g_prev2 = g_prev;
      g_prev = g;
      t = tn;
      x = std::move(xn);
    }

    if (!event) {
      flow.segments.push_back(std::move(seg));
      flow.labels.push_back(mode.label);
      return flow;
    }

    // Truncate the segment at the event.
    seg.pop_back();
    if (event->time > seg.end_time())
      seg.append(event->time, event->state, hamiltonian_vector_field(sys, event->state));

    if (last_impact && event->time - *last_impact < opts.min_gap)
      throw Error(ErrorKind::zeno_suspected,
                  "impacts at t=" + detail::format_number(*last_impact) + " and t=" +
                      detail::format_number(event->time) + " are closer than min_gap");
    if (flow.impacts.size() + 1 > opts.max_impacts)
      throw Error(ErrorKind::zeno_suspected,
                  "more than " + std::to_string(opts.max_impacts) + " impacts");

    HybridMode next = next_mode(flow.segments.size(), mode);
    PhasePoint post =
        apply_impact(mode.impact, sys, next.guard, next.continuous, event->state, opts.tol_g);

    flow.segments.push_back(std::move(seg));
    flow.labels.push_back(mode.label);
    flow.impacts.push_back(ImpactRecord{event->time, event->state, post});
    last_impact = event->time;

    t = event->time;
    x = std::move(post);
    mode = std::move(next);
  }
}

/// Single-regime form.
inline HybridFlow run_hybrid(const HybridSystem& system, const PhasePoint& x0, double T,
                             const RunOptions& opts = {}) {
  return run_hybrid(
      system.mode, [](std::size_t, const HybridMode& m) { return m; }, system.integrator, x0, T,
      opts);
}

}  // namespace hybred

#endif  // HYBRED_HYBRID_HPP
