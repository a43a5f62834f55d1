#ifndef HYBRED_TESTS_SUPPORT_HPP
#define HYBRED_TESTS_SUPPORT_HPP

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "hybred/spec.hpp"

namespace hybred::testing {

inline std::string system_path(const std::string& file) { return std::string(HYBRED_SYSTEMS) + "/" + file; }
inline std::string fixture_path(const std::string& file) { return std::string(HYBRED_FIXTURES) + "/" + file; }

inline SystemSpec pair_spec() { return load_spec(system_path("colliding_pair.json")); }
inline SystemSpec kicked_spec() { return load_spec(system_path("colliding_pair_kicked.json")); }

inline HamiltonianSystem canonical_system(const std::string& hamiltonian, int n, bool separable,
                                          const Symbols* extra = nullptr) {
  HamiltonianSystem sys;
  sys.coordinates = canonical_coordinate_names(n);
  Symbols symbols = extra ? *extra : Symbols{};
  symbols.variables = sys.coordinates;
  sys.hamiltonian = parse_expression(hamiltonian, symbols);
  sys.form = SymplecticMatrix::canonical(n);
  sys.separable = separable;
  return sys;
}

/// Central-difference gradient with step `fd`.
inline std::vector<double> fd_gradient(const Expr& e, const Binding& at, const std::vector<std::string>& wrt,
                                       double fd = 1e-6) {
  std::vector<double> out;
  for (const auto& name : wrt) {
    Binding plus = at;
    Binding minus = at;
    plus[name] += fd;
    minus[name] -= fd;
    out.push_back((eval(e, plus) - eval(e, minus)) / (2.0 * fd));
  }
  return out;
}

/// |a − b| within `tol`, absolute below magnitude 1 and relative above.
inline bool mixed_close(double a, double b, double tol) {
  return std::fabs(a - b) <= tol * std::max(1.0, std::fabs(b));
}

inline double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace hybred::testing

#endif  // HYBRED_TESTS_SUPPORT_HPP
