#ifndef HYBRED_PHASE_HPP
#define HYBRED_PHASE_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "hybred/error.hpp"
#include "hybred/expr.hpp"

namespace hybred {

/// A point of a 2n-dimensional phase space, ordered (q1..qn, p1..pn).
class PhasePoint {
 public:
  PhasePoint() = default;
  explicit PhasePoint(Eigen::VectorXd coords) : coords_(std::move(coords)) { validate(); }
  PhasePoint(std::initializer_list<double> coords) : coords_(coords.size()) {
    std::size_t i = 0;
    for (double c : coords) coords_[static_cast<Eigen::Index>(i++)] = c;
    validate();
  }
  explicit PhasePoint(const std::vector<double>& coords)
      : coords_(Eigen::Map<const Eigen::VectorXd>(coords.data(),
                                                  static_cast<Eigen::Index>(coords.size()))) {
    validate();
  }

  const Eigen::VectorXd& coords() const { return coords_; }
  Eigen::Index size() const { return coords_.size(); }
  Eigen::Index n() const { return coords_.size() / 2; }
  double operator[](Eigen::Index i) const { return coords_[i]; }
  double q(Eigen::Index i) const { return coords_[i]; }
  double p(Eigen::Index i) const { return coords_[n() + i]; }

  std::vector<double> to_vector() const { return {coords_.data(), coords_.data() + coords_.size()}; }

  friend bool operator==(const PhasePoint& a, const PhasePoint& b) {
    return a.coords_.size() == b.coords_.size() && a.coords_ == b.coords_;
  }

 private:
  void validate() const {
    if (coords_.size() == 0 || coords_.size() % 2 != 0)
      throw Error(ErrorKind::dimension_mismatch,
                  "phase point must have even positive length, got " +
                      std::to_string(coords_.size()));
    if (!coords_.allFinite()) throw Error(ErrorKind::domain, "phase point has non-finite entries");
  }

  Eigen::VectorXd coords_;
};

/// Coordinate names q1..qn, p1..pn.
inline std::vector<std::string> canonical_coordinate_names(int n) {
  std::vector<std::string> names;
  for (int i = 1; i <= n; ++i) names.push_back("q" + std::to_string(i));
  for (int i = 1; i <= n; ++i) names.push_back("p" + std::to_string(i));
  return names;
}

/// Constant antisymmetric invertible matrix Ω with ω(X, Y) = Xᵀ Ω Y.
class SymplecticMatrix {
 public:
  SymplecticMatrix() = default;
  explicit SymplecticMatrix(Eigen::MatrixXd omega) : omega_(std::move(omega)) {
    if (omega_.rows() != omega_.cols() || omega_.rows() == 0)
      throw Error(ErrorKind::dimension_mismatch, "symplectic matrix must be square");
    const double scale = std::max(1.0, omega_.cwiseAbs().maxCoeff());
    if ((omega_ + omega_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw Error(ErrorKind::validation, "symplectic matrix must be antisymmetric");
    Eigen::FullPivLU<Eigen::MatrixXd> lu(omega_);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible())
      throw Error(ErrorKind::degenerate_reduced_form, "symplectic matrix is singular");
    inverse_transpose_ = lu.inverse().transpose();
  }

  /// [[0, I], [-I, 0]] in (q, p) ordering, i.e. ω = dqⁱ ∧ dpᵢ.
  static SymplecticMatrix canonical(Eigen::Index n) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    m.topRightCorner(n, n) = Eigen::MatrixXd::Identity(n, n);
    m.bottomLeftCorner(n, n) = -Eigen::MatrixXd::Identity(n, n);
    return SymplecticMatrix(std::move(m));
  }

  const Eigen::MatrixXd& matrix() const { return omega_; }
  const Eigen::MatrixXd& inverse_transpose() const { return inverse_transpose_; }
  Eigen::Index dim() const { return omega_.rows(); }

  bool is_canonical() const {
    if (omega_.rows() % 2 != 0) return false;
    return omega_ == canonical(omega_.rows() / 2).matrix();
  }

 private:
  Eigen::MatrixXd omega_;
  Eigen::MatrixXd inverse_transpose_;
};

/// ‖MᵀΩM − Ω‖ (largest absolute entry).
inline double symplectic_defect(const Eigen::MatrixXd& jacobian, const SymplecticMatrix& omega) {
  return (jacobian.transpose() * omega.matrix() * jacobian - omega.matrix()).cwiseAbs().maxCoeff();
}

/// The continuous part of a hybrid Hamiltonian system: H on a constant
/// symplectic chart with named coordinates and bound parameters.
struct HamiltonianSystem {
  Expr hamiltonian;
  SymplecticMatrix form;
  std::vector<std::string> coordinates;
  Binding parameters;
  bool separable = false;

  Binding binding(const Eigen::VectorXd& x) const {
    Binding b = parameters;
    for (std::size_t i = 0; i < coordinates.size(); ++i)
      b[coordinates[i]] = x[static_cast<Eigen::Index>(i)];
    return b;
  }

  double energy(const PhasePoint& x) const { return eval(hamiltonian, binding(x.coords())); }

  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
    const auto g = grad(hamiltonian, binding(x), coordinates);
    return Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
  }
};

namespace detail {
inline Eigen::VectorXd field(const HamiltonianSystem& sys, const Eigen::VectorXd& x) {
  // ω(X, ·) = dH  ⇔  Ωᵀ X = ∇H
  return sys.form.inverse_transpose() * sys.gradient(x);
}
}  // namespace detail

/// X_H at `x`: the unique X with ω(X, ·) = dH. In canonical coordinates this
/// is (∂H/∂p, −∂H/∂q).
inline Eigen::VectorXd hamiltonian_vector_field(const HamiltonianSystem& sys, const PhasePoint& x) {
  if (x.size() != sys.form.dim() ||
      static_cast<std::size_t>(x.size()) != sys.coordinates.size())
    throw Error(ErrorKind::dimension_mismatch, "state dimension does not match the system");
  return detail::field(sys, x.coords());
}

/// One Störmer–Verlet step: half kick in p, full drift in q, half kick in p.
/// Requires H = T(p) + U(q) on the canonical form.
inline PhasePoint step_leapfrog(const HamiltonianSystem& sys, const PhasePoint& x, double h) {
  if (!sys.separable) throw Error(ErrorKind::not_separable, "leapfrog requires a separable Hamiltonian");
  if (!sys.form.is_canonical())
    throw Error(ErrorKind::not_separable, "leapfrog requires the canonical symplectic form");
  if (h == 0.0) return x;
  const Eigen::Index n = x.n();
  Eigen::VectorXd y = x.coords();
  y.tail(n) -= 0.5 * h * sys.gradient(y).head(n);
  y.head(n) += h * sys.gradient(y).tail(n);
  y.tail(n) -= 0.5 * h * sys.gradient(y).head(n);
  return PhasePoint(std::move(y));
}

/// Classical fourth-order Runge–Kutta on X_H for an arbitrary constant Ω.
inline PhasePoint step_rk4(const HamiltonianSystem& sys, const PhasePoint& x, double h) {
  if (h == 0.0) return x;
  const Eigen::VectorXd& y = x.coords();
  const Eigen::VectorXd k1 = detail::field(sys, y);
  const Eigen::VectorXd k2 = detail::field(sys, y + 0.5 * h * k1);
  const Eigen::VectorXd k3 = detail::field(sys, y + 0.5 * h * k2);
  const Eigen::VectorXd k4 = detail::field(sys, y + h * k3);
  return PhasePoint(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

enum class Integrator { leapfrog, rk4 };

inline PhasePoint step(const HamiltonianSystem& sys, Integrator method, const PhasePoint& x, double h) {
  return method == Integrator::leapfrog ? step_leapfrog(sys, x, h) : step_rk4(sys, x, h);
}

/// Central-difference Jacobian of a map between phase points.
template <typename Map>
Eigen::MatrixXd finite_difference_jacobian(Map&& map, const PhasePoint& x, double fd) {
  const Eigen::Index d = x.size();
  Eigen::MatrixXd jac(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::VectorXd plus = x.coords();
    Eigen::VectorXd minus = x.coords();
    plus[j] += fd;
    minus[j] -= fd;
    jac.col(j) = (map(PhasePoint(plus)).coords() - map(PhasePoint(minus)).coords()) / (2.0 * fd);
  }
  return jac;
}

/// ‖MᵀΩM − Ω‖ for the finite-difference Jacobian M of one step at `x`.
template <typename Stepper>
double symplecticity_defect(Stepper&& stepper, const HamiltonianSystem& sys, const PhasePoint& x,
                            double h, double fd) {
  if (!(fd > 0.0)) throw Error(ErrorKind::validation, "finite-difference step must be positive");
  const auto jac = finite_difference_jacobian(
      [&](const PhasePoint& y) { return stepper(sys, y, h); }, x, fd);
  return symplectic_defect(jac, sys.form);
}

/// Continuous solution piece with cubic Hermite dense output. Stored
/// derivatives are the vector field at the stored states.
class TrajectorySegment {
 public:
  void append(double t, PhasePoint x, Eigen::VectorXd dx) {
    if (!times_.empty() && !(t > times_.back()))
      throw Error(ErrorKind::validation, "segment times must be strictly increasing");
    times_.push_back(t);
    states_.push_back(std::move(x));
    derivatives_.push_back(std::move(dx));
  }

  void pop_back() {
    times_.pop_back();
    states_.pop_back();
    derivatives_.pop_back();
  }

  std::size_t size() const { return times_.size(); }
  bool empty() const { return times_.empty(); }
  const std::vector<double>& times() const { return times_; }
  const std::vector<PhasePoint>& states() const { return states_; }
  const std::vector<Eigen::VectorXd>& derivatives() const { return derivatives_; }
  double start_time() const { return times_.front(); }
  double end_time() const { return times_.back(); }
  const PhasePoint& front() const { return states_.front(); }
  const PhasePoint& back() const { return states_.back(); }

  /// Interpolant on node pair [i, i+1]; exact at both nodes.
  Eigen::VectorXd interpolate_in(std::size_t i, double t) const {
    if (t == times_[i]) return states_[i].coords();
    if (t == times_[i + 1]) return states_[i + 1].coords();
    const double h = times_[i + 1] - times_[i];
    const double s = (t - times_[i]) / h;
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    return h00 * states_[i].coords() + (h10 * h) * derivatives_[i] +
           h01 * states_[i + 1].coords() + (h11 * h) * derivatives_[i + 1];
  }

  /// Dense output at `t` in [start_time, end_time].
  Eigen::VectorXd interpolate(double t) const {
    if (times_.size() == 1 || t <= times_.front()) return states_.front().coords();
    if (t >= times_.back()) return states_.back().coords();
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    const std::size_t i = static_cast<std::size_t>(it - times_.begin()) - 1;
    return interpolate_in(i, t);
  }

 private:
  std::vector<double> times_;
  std::vector<PhasePoint> states_;
  std::vector<Eigen::VectorXd> derivatives_;
};

}  // namespace hybred

#endif  // HYBRED_PHASE_HPP
