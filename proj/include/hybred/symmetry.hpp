#ifndef HYBRED_SYMMETRY_HPP
#define HYBRED_SYMMETRY_HPP

// Abelian translation actions G = ℝᵏ on a Darboux chart, affine-linear
// momentum maps, the non-equivariance cocycle and the hybrid predicates built
// on them.
//
// Sign convention: ω(X, Y) = Xᵀ Ω Y, and J is a momentum map when
// ω(ξ_D, ·) = dJ_ξ, i.e. Ωᵀ · (column a of A) = ∇J_a for every generator.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hybred/error.hpp"
#include "hybred/hybrid.hpp"
#include "hybred/phase.hpp"

namespace hybred {

/// g ∈ G = ℝᵏ. Composition is addition; Ad and Ad* are the identity.
using GroupElement = Eigen::VectorXd;

/// Φ_g(x) = x + A g.
struct TranslationAction {
  Eigen::MatrixXd generators;  // 2n × k

  Eigen::Index group_dim() const { return generators.cols(); }
  Eigen::Index phase_dim() const { return generators.rows(); }

  PhasePoint apply(const GroupElement& g, const PhasePoint& x) const {
    if (g.size() != group_dim() || x.size() != phase_dim())
      throw Error(ErrorKind::dimension_mismatch, "action dimensions do not match");
    return PhasePoint(x.coords() + generators * g);
  }

  /// Analytic Jacobian of Φ_g.
  Eigen::MatrixXd jacobian(const GroupElement&) const {
    return Eigen::MatrixXd::Identity(phase_dim(), phase_dim());
  }

  bool is_free() const {
    if (group_dim() == 0) return true;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(generators);
    return lu.rank() == group_dim();
  }
};

/// J(x) = B x + b.
struct MomentumMap {
  Eigen::MatrixXd matrix;  // k × 2n
  Eigen::VectorXd offset;  // k

  Eigen::Index group_dim() const { return matrix.rows(); }
  Eigen::Index phase_dim() const { return matrix.cols(); }

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const { return matrix * x + offset; }
  Eigen::VectorXd operator()(const PhasePoint& x) const { return (*this)(x.coords()); }

  Eigen::VectorXd gradient(Eigen::Index a, const Eigen::VectorXd&) const {
    return matrix.row(a).transpose();
  }
};

/// σ(g) = C g together with its constancy certificate.
struct Cocycle {
  Eigen::MatrixXd matrix;  // k × k
  double spread = 0.0;        // max x-variation of J(Φ_g x) − J(x) over the probes
  double fit_residual = 0.0;  // max ‖J(Φ_g x) − J(x) − C g‖ over samples and probes

  Eigen::VectorXd operator()(const GroupElement& g) const { return matrix * g; }
};

namespace detail {

inline double max_abs(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

/// Numerical rank with threshold rel · (largest singular value).
inline Eigen::Index numerical_rank(const Eigen::MatrixXd& m, double rel = 1e-10) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > rel * s[0]) ++r;
  return r;
}

}  // namespace detail

/// Uniform sampler over the box [-radius, radius]^dim, seeded for
/// reproducibility.
class Sampler {
 public:
  explicit Sampler(std::uint64_t seed = 0, double radius = 2.0) : rng_(seed), radius_(radius) {}

  Eigen::VectorXd vector(Eigen::Index dim) {
    std::uniform_real_distribution<double> u(-radius_, radius_);
    Eigen::VectorXd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = u(rng_);
    return v;
  }

  std::vector<PhasePoint> points(std::size_t count, Eigen::Index dim) {
    std::vector<PhasePoint> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.emplace_back(vector(dim));
    return out;
  }

  std::vector<GroupElement> group_elements(std::size_t count, Eigen::Index k) {
    std::vector<GroupElement> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(vector(k));
    return out;
  }

 private:
  std::mt19937_64 rng_;
  double radius_;
};

// ---------------------------------------------------------------------------
// Checks

/// Largest ‖MᵀΩM − Ω‖ over the probes, M the Jacobian of Φ_g. Zero for
/// translations.
inline double check_symplectic_action(const TranslationAction& action, const SymplecticMatrix& omega,
                                      const std::vector<PhasePoint>& samples,
                                      const std::vector<GroupElement>& probes) {
  if (samples.empty() || probes.empty())
    throw Error(ErrorKind::validation, "symplectic action check needs samples and probes");
  double defect = 0.0;
  for (const auto& g : probes) defect = std::max(defect, symplectic_defect(action.jacobian(g), omega));
  return defect;
}

/// max over generators a and samples x of ‖Ωᵀ A_a − ∇J_a(x)‖∞.
inline double check_momentum_map(const MomentumMap& J, const TranslationAction& action,
                                 const SymplecticMatrix& omega, const std::vector<PhasePoint>& samples) {
  if (J.group_dim() != action.group_dim() || J.phase_dim() != action.phase_dim() ||
      omega.dim() != action.phase_dim() || J.offset.size() != J.group_dim())
    throw Error(ErrorKind::dimension_mismatch, "momentum map, action and form dimensions disagree");
  double defect = 0.0;
  for (const auto& x : samples) {
    if (x.size() != action.phase_dim())
      throw Error(ErrorKind::dimension_mismatch, "sample dimension does not match the action");
    for (Eigen::Index a = 0; a < action.group_dim(); ++a) {
      const Eigen::VectorXd lhs = omega.matrix().transpose() * action.generators.col(a);
      defect = std::max(defect, detail::max_abs(lhs - J.gradient(a, x.coords())));
    }
  }
  return defect;
}

/// σ(g) = J(Φ_g x) − J(x) (Ad* is trivial), certified x-independent within
/// `tol` and fitted as a k × k matrix from the probe values.
inline Cocycle compute_cocycle(const MomentumMap& J, const TranslationAction& action,
                               const std::vector<GroupElement>& probes,
                               const std::vector<PhasePoint>& samples, double tol) {
  const Eigen::Index k = action.group_dim();
  if (samples.size() < 2) throw Error(ErrorKind::validation, "cocycle needs at least two samples");
  if (J.group_dim() != k) throw Error(ErrorKind::dimension_mismatch, "J and action disagree on k");

  Eigen::MatrixXd G(k, static_cast<Eigen::Index>(probes.size()));
  Eigen::MatrixXd S(k, static_cast<Eigen::Index>(probes.size()));
  Cocycle out;
  for (std::size_t j = 0; j < probes.size(); ++j) {
    const GroupElement& g = probes[j];
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(k);
    std::vector<Eigen::VectorXd> values;
    values.reserve(samples.size());
    for (const auto& x : samples) {
      values.push_back(J(action.apply(g, x)) - J(x));
      mean += values.back();
    }
    mean /= static_cast<double>(samples.size());
    for (const auto& v : values) out.spread = std::max(out.spread, detail::max_abs(v - mean));
    G.col(static_cast<Eigen::Index>(j)) = g;
    S.col(static_cast<Eigen::Index>(j)) = mean;
  }
  if (out.spread > tol)
    throw Error(ErrorKind::not_constant, "J(Φ_g x) − J(x) varies with x by " +
                                             detail::format_number(out.spread));
  if (k > 0 && detail::numerical_rank(G) < k)
    throw Error(ErrorKind::validation, "cocycle probes do not span the Lie algebra");

  // C G = S in the least-squares sense.
  out.matrix = k == 0 ? Eigen::MatrixXd(0, 0)
                      : Eigen::MatrixXd(G.transpose().completeOrthogonalDecomposition().solve(
                                            S.transpose())
                                            .transpose());
  for (const auto& g : probes)
    for (const auto& x : samples)
      out.fit_residual =
          std::max(out.fit_residual, detail::max_abs(J(action.apply(g, x)) - J(x) - out(g)));
  return out;
}

/// Ψ(g, μ) = Ad*_{g⁻¹} μ + σ(g) = μ + C g.
inline Eigen::VectorXd affine_action(const Eigen::VectorXd& mu, const GroupElement& g, const Cocycle& sigma) {
  if (mu.size() != sigma.matrix.rows() || g.size() != sigma.matrix.cols())
    throw Error(ErrorKind::dimension_mismatch, "affine action dimensions do not match");
  return mu + sigma(g);
}

/// Orthonormal basis of the isotropy algebra {g : μ + C g = μ} = ker C. The
/// condition does not involve μ for translation actions.
inline std::vector<Eigen::VectorXd> isotropy_basis(const Cocycle& sigma, const Eigen::VectorXd& mu) {
  const Eigen::Index k = sigma.matrix.cols();
  if (mu.size() != sigma.matrix.rows())
    throw Error(ErrorKind::dimension_mismatch, "μ dimension does not match the cocycle");
  std::vector<Eigen::VectorXd> basis;
  if (k == 0) return basis;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(sigma.matrix, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) {
    for (Eigen::Index i = 0; i < k; ++i) basis.push_back(Eigen::VectorXd::Unit(k, i));
    return basis;
  }
  const double threshold = 1e-10 * s[0];
  for (Eigen::Index i = 0; i < k; ++i) {
    const double si = i < s.size() ? s[i] : 0.0;
    if (si <= threshold) {
      Eigen::VectorXd v = svd.matrixV().col(i);
      // Fix the sign so the first nonzero entry is positive.
      for (Eigen::Index j = 0; j < v.size(); ++j) {
        if (std::fabs(v[j]) > 1e-14) {
          if (v[j] < 0) v = -v;
          break;
        }
      }
      basis.push_back(v);
    }
  }
  return basis;
}

// ---------------------------------------------------------------------------
// Sampling on the guard

namespace detail {

/// Gauss–Newton projection of `x` onto {B x + b = μ, level(x) = 0} (or just
/// the guard when `J` is null), using minimum-norm steps.
inline std::optional<Eigen::VectorXd> project_to_constraints(const Guard& guard, const HamiltonianSystem& ctx,
                                                             const MomentumMap* J, const Eigen::VectorXd* mu,
                                                             Eigen::VectorXd x) {
  const Eigen::Index k = J ? J->group_dim() : 0;
  for (int iter = 0; iter < 30; ++iter) {
    const Dual g = eval_dual(guard.level, ctx.binding(x), ctx.coordinates);
    Eigen::VectorXd F(k + 1);
    Eigen::MatrixXd D(k + 1, x.size());
    if (J) {
      F.head(k) = (*J)(x) - *mu;
      D.topRows(k) = J->matrix;
    }
    F[k] = g.value();
    for (Eigen::Index j = 0; j < x.size(); ++j) D(k, j) = g.derivative(static_cast<std::size_t>(j));
    const double scale = 1.0 + x.cwiseAbs().maxCoeff() + (mu ? mu->cwiseAbs().maxCoeff() : 0.0);
    if (F.cwiseAbs().maxCoeff() <= 1e-13 * scale) return x;
    const Eigen::MatrixXd DDt = D * D.transpose();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(DDt);
    if (!lu.isInvertible()) return std::nullopt;
    x -= D.transpose() * lu.solve(F);
    if (!x.allFinite()) return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace detail

/// Points of S = {level = 0, direction < 0}, optionally restricted to J⁻¹(μ).
/// Random box points are projected onto the constraints and filtered by the
/// direction condition. Returns fewer than `count` points only if the attempt
/// budget runs out.
inline std::vector<PhasePoint> sample_guard(const Guard& guard, const HamiltonianSystem& ctx,
                                            const MomentumMap* J, const Eigen::VectorXd* mu,
                                            std::size_t count, Sampler& sampler) {
  std::vector<PhasePoint> out;
  const Eigen::Index dim = static_cast<Eigen::Index>(ctx.coordinates.size());
  const std::size_t budget = 40 * count + 40;
  for (std::size_t attempt = 0; attempt < budget && out.size() < count; ++attempt) {
    auto x = detail::project_to_constraints(guard, ctx, J, mu, sampler.vector(dim));
    if (!x) continue;
    if (guard.direction_at(ctx, *x) < 0.0) out.emplace_back(std::move(*x));
  }
  return out;
}

/// max over guard samples x and probes g of ‖Δ(Φ_g x) − Φ_g(Δ x)‖∞. Throws
/// TangencyViolation when Φ_g does not map S into S.
inline double check_hybrid_action(const TranslationAction& action, const HybridMode& mode,
                                  const std::vector<PhasePoint>& samples,
                                  const std::vector<GroupElement>& probes, double tol_g = 1e-9) {
  const HamiltonianSystem& ctx = mode.continuous;
  double defect = 0.0;
  for (const auto& x : samples) {
    if (std::fabs(mode.guard.level_at(ctx, x.coords())) > tol_g)
      throw Error(ErrorKind::validation, "hybrid action sample is not on the guard");
    const Eigen::VectorXd dx = mode.impact(ctx, x.coords());
    for (const auto& g : probes) {
      const PhasePoint gx = action.apply(g, x);
      const double scale = 1.0 + gx.coords().cwiseAbs().maxCoeff();
      if (std::fabs(mode.guard.level_at(ctx, gx.coords())) > tol_g * scale)
        throw Error(ErrorKind::tangency_violation, "the action does not preserve the guard");
      const Eigen::VectorXd lhs = mode.impact(ctx, gx.coords());
      const Eigen::VectorXd rhs = dx + action.generators * g;
      defect = std::max(defect, detail::max_abs(lhs - rhs));
    }
  }
  return defect;
}

enum class MomentumVerdict { hybrid, generalized, fails };

inline std::string_view to_string(MomentumVerdict v) {
  switch (v) {
    case MomentumVerdict::hybrid: return "hybrid";
    case MomentumVerdict::generalized: return "generalized";
    case MomentumVerdict::fails: return "fails";
  }
  return "?";
}

struct LevelClassification {
  Eigen::VectorXd mu_minus;
  Eigen::VectorXd mu_plus;
  MomentumVerdict verdict = MomentumVerdict::fails;
  bool regular_value = false;         // rank B = k
  bool hybrid_regular_value = false;  // rank [B; ∇level] = k + 1 on the samples
  double spread = 0.0;                // max ‖J(Δx) − μ₊‖∞
  double max_shift_error = 0.0;       // max ‖J(Δx) − J(x) − (μ₊ − μ₋)‖∞
  std::size_t samples = 0;
  std::string reason;
};

struct ClassifyOptions {
  std::size_t samples = 50;
  double tol = 1e-10;
};

/// Verdict for one level μ₋: samples S ∩ J⁻¹(μ₋) and compares J(Δx) across
/// samples and against μ₋.
inline LevelClassification classify_level(const MomentumMap& J, const HybridMode& mode,
                                          const Eigen::VectorXd& mu, Sampler& sampler,
                                          const ClassifyOptions& opts = {}) {
  const HamiltonianSystem& ctx = mode.continuous;
  const Eigen::Index k = J.group_dim();
  if (mu.size() != k) throw Error(ErrorKind::dimension_mismatch, "μ has wrong dimension");

  LevelClassification out;
  out.mu_minus = mu;
  out.mu_plus = mu;
  out.regular_value = detail::numerical_rank(J.matrix) == k;
  if (!out.regular_value) {
    out.reason = "not a regular value of J (rank B < k)";
    return out;
  }

  const auto points = sample_guard(mode.guard, ctx, &J, &mu, opts.samples, sampler);
  if (points.empty())
    throw Error(ErrorKind::empty_level_set, "no guard points found on the level set μ = (" +
                                                [&] {
                                                  std::string s;
                                                  for (Eigen::Index i = 0; i < k; ++i)
                                                    s += (i ? ", " : "") + detail::format_number(mu[i]);
                                                  return s;
                                                }() + ")");
  out.samples = points.size();

  out.hybrid_regular_value = true;
  std::vector<Eigen::VectorXd> images;
  std::vector<Eigen::VectorXd> shifts;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(k);
  for (const auto& x : points) {
    const Dual g = eval_dual(mode.guard.level, ctx.binding(x.coords()), ctx.coordinates);
    Eigen::MatrixXd stacked(k + 1, x.size());
    stacked.topRows(k) = J.matrix;
    for (Eigen::Index j = 0; j < x.size(); ++j) stacked(k, j) = g.derivative(static_cast<std::size_t>(j));
    if (detail::numerical_rank(stacked) < k + 1) out.hybrid_regular_value = false;
    const Eigen::VectorXd post = mode.impact(ctx, x.coords());
    images.push_back(J(post));
    shifts.push_back(images.back() - J(x));
    mean += images.back();
  }
  if (!out.hybrid_regular_value) {
    out.reason = "not a regular value of J restricted to the guard";
    return out;
  }
  mean /= static_cast<double>(images.size());
  Eigen::VectorXd mean_shift = Eigen::VectorXd::Zero(k);
  for (const auto& s : shifts) mean_shift += s;
  mean_shift /= static_cast<double>(shifts.size());

  for (std::size_t i = 0; i < images.size(); ++i) {
    out.spread = std::max(out.spread, detail::max_abs(images[i] - mean));
    out.max_shift_error = std::max(out.max_shift_error, detail::max_abs(shifts[i] - mean_shift));
  }
  if (out.spread > opts.tol) {
    out.verdict = MomentumVerdict::fails;
    out.reason = "impact image is not a single level set";
    return out;
  }
  if (detail::max_abs(mean_shift) <= opts.tol) {
    out.verdict = MomentumVerdict::hybrid;
    out.mu_plus = mu;
  } else {
    out.verdict = MomentumVerdict::generalized;
    out.mu_plus = mu + mean_shift;
  }
  return out;
}

inline std::vector<LevelClassification> classify_hybrid_momentum(const MomentumMap& J, const HybridMode& mode,
                                                                 const std::vector<Eigen::VectorXd>& levels,
                                                                 Sampler& sampler,
                                                                 const ClassifyOptions& opts = {}) {
  std::vector<LevelClassification> out;
  out.reserve(levels.size());
  for (const auto& mu : levels) out.push_back(classify_level(J, mode, mu, sampler, opts));
  return out;
}

}  // namespace hybred

#endif  // HYBRED_SYMMETRY_HPP
