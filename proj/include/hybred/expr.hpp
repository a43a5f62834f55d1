#ifndef HYBRED_EXPR_HPP
#define HYBRED_EXPR_HPP

// Scalar expressions over named coordinates and parameters.
//
// Grammar (EBNF, whitespace ignored):
//
//   expression := term { ("+" | "-") term }
//   term       := unary { ("*" | "/") unary }
//   unary      := "-" unary | power
//   power      := primary { "^" exponent }
//   exponent   := "-" exponent | primary
//   primary    := number | name | name "(" expression ")" | "(" expression ")"
//   number     := digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
//   name       := letter { letter | digit | "_" }
//
// Every binary operator is left-associative, including "^". Names resolve to
// a declared coordinate, a declared parameter, a registered one-argument
// function, or one of the builtins sin, cos, exp, sqrt, abs.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hybred/dual.hpp"
#include "hybred/error.hpp"

namespace hybred {

enum class NodeKind { constant, variable, parameter, unary, binary, call };
enum class UnaryOp { neg, sin, cos, exp, sqrt, abs };
enum class BinaryOp { add, sub, mul, div, pow };

struct Node;
struct FunctionDef;

/// Immutable handle to an expression tree. Copies share structure.
class Expr {
 public:
  Expr() = default;
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

  const Node& node() const { return *node_; }
  const Node* operator->() const { return node_.get(); }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<const Node> node_;
};

/// A user-registered smooth function of one argument, e.g. a potential V(x).
struct FunctionDef {
  std::string name;
  std::string argument;
  Expr body;
};

struct Node {
  NodeKind kind = NodeKind::constant;
  double value = 0.0;
  std::string name;
  UnaryOp unary_op = UnaryOp::neg;
  BinaryOp binary_op = BinaryOp::add;
  std::vector<Expr> children;
  std::shared_ptr<const FunctionDef> function;
};

// ---------------------------------------------------------------------------
// Construction

namespace detail {
inline Expr make_node(Node n) { return Expr(std::make_shared<const Node>(std::move(n))); }
}  // namespace detail

/// Constant nodes are never negative: a negative value becomes neg(|v|), which
/// is what the parser would produce for the printed form.
inline Expr constant(double v) {
  if (std::signbit(v) && v != 0.0) {
    Node n;
    n.kind = NodeKind::unary;
    n.unary_op = UnaryOp::neg;
    n.children.push_back(constant(-v));
    return detail::make_node(std::move(n));
  }
  Node n;
  n.kind = NodeKind::constant;
  n.value = v == 0.0 ? 0.0 : v;
  return detail::make_node(std::move(n));
}

inline Expr variable(std::string name) {
  Node n;
  n.kind = NodeKind::variable;
  n.name = std::move(name);
  return detail::make_node(std::move(n));
}

inline Expr parameter(std::string name) {
  Node n;
  n.kind = NodeKind::parameter;
  n.name = std::move(name);
  return detail::make_node(std::move(n));
}

inline Expr unary(UnaryOp op, Expr arg) {
  Node n;
  n.kind = NodeKind::unary;
  n.unary_op = op;
  n.children.push_back(std::move(arg));
  return detail::make_node(std::move(n));
}

inline Expr binary(BinaryOp op, Expr lhs, Expr rhs) {
  Node n;
  n.kind = NodeKind::binary;
  n.binary_op = op;
  n.children.push_back(std::move(lhs));
  n.children.push_back(std::move(rhs));
  return detail::make_node(std::move(n));
}

inline Expr call(std::shared_ptr<const FunctionDef> fn, Expr arg) {
  Node n;
  n.kind = NodeKind::call;
  n.name = fn->name;
  n.function = std::move(fn);
  n.children.push_back(std::move(arg));
  return detail::make_node(std::move(n));
}

// ---------------------------------------------------------------------------
// Declared names

/// Names an expression may refer to.
struct Symbols {
  std::vector<std::string> variables;
  std::vector<std::string> parameters;
  std::map<std::string, std::shared_ptr<const FunctionDef>, std::less<>> functions;

  bool has_variable(std::string_view s) const {
    for (const auto& v : variables)
      if (v == s) return true;
    return false;
  }
  bool has_parameter(std::string_view s) const {
    for (const auto& v : parameters)
      if (v == s) return true;
    return false;
  }
};

inline bool is_builtin(std::string_view name, UnaryOp* op = nullptr) {
  static const std::pair<std::string_view, UnaryOp> table[] = {
      {"sin", UnaryOp::sin}, {"cos", UnaryOp::cos}, {"exp", UnaryOp::exp},
      {"sqrt", UnaryOp::sqrt}, {"abs", UnaryOp::abs}};
  for (const auto& [n, o] : table) {
    if (n == name) {
      if (op) *op = o;
      return true;
    }
  }
  return false;
}

inline std::string_view to_string(UnaryOp op) {
  switch (op) {
    case UnaryOp::neg: return "-";
    case UnaryOp::sin: return "sin";
    case UnaryOp::cos: return "cos";
    case UnaryOp::exp: return "exp";
    case UnaryOp::sqrt: return "sqrt";
    case UnaryOp::abs: return "abs";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

class Parser {
 public:
  Parser(std::string_view src, const Symbols& symbols) : src_(src), symbols_(symbols) {}

  Expr parse() {
    skip_ws();
    if (pos_ >= src_.size()) throw SyntaxError(pos_, "empty expression");
    Expr e = parse_expression();
    skip_ws();
    if (pos_ < src_.size()) throw SyntaxError(pos_, std::string("unexpected '") + src_[pos_] + "'");
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' ||
                                  src_[pos_] == '\r'))
      ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      if (pos_ >= src_.size())
        throw SyntaxError(pos_, std::string("expected '") + c + "' but reached end of input");
      throw SyntaxError(pos_, std::string("expected '") + c + "'");
    }
  }

  Expr parse_expression() {
    Expr lhs = parse_term();
    for (;;) {
      if (accept('+')) {
        lhs = binary(BinaryOp::add, std::move(lhs), parse_term());
      } else if (accept('-')) {
        lhs = binary(BinaryOp::sub, std::move(lhs), parse_term());
      } else {
        return lhs;
      }
    }
  }

  Expr parse_term() {
    Expr lhs = parse_unary();
    for (;;) {
      if (accept('*')) {
        lhs = binary(BinaryOp::mul, std::move(lhs), parse_unary());
      } else if (accept('/')) {
        lhs = binary(BinaryOp::div, std::move(lhs), parse_unary());
      } else {
        return lhs;
      }
    }
  }

  Expr parse_unary() {
    if (accept('-')) return unary(UnaryOp::neg, parse_unary());
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_primary();
    while (accept('^')) base = binary(BinaryOp::pow, std::move(base), parse_exponent());
    return base;
  }

  Expr parse_exponent() {
    if (accept('-')) return unary(UnaryOp::neg, parse_exponent());
    return parse_primary();
  }

  Expr parse_primary() {
    skip_ws();
    if (pos_ >= src_.size()) throw SyntaxError(pos_, "unexpected end of input");
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = parse_expression();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_name();
    throw SyntaxError(pos_, std::string("unexpected '") + c + "'");
  }

  Expr parse_number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        ++pos_;
        ++n;
      }
      return n;
    };
    std::size_t mantissa = digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      mantissa += digits();
    }
    if (mantissa == 0) throw SyntaxError(start, "malformed number");
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (digits() == 0) throw SyntaxError(pos_, "malformed exponent");
    }
    double v = 0.0;
    const auto text = src_.substr(start, pos_ - start);
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
      throw SyntaxError(start, "number out of range");
    return constant(v);
  }

  Expr parse_name() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    const std::string name(src_.substr(start, pos_ - start));

    skip_ws();
    const bool is_call = pos_ < src_.size() && src_[pos_] == '(';
    if (is_call) {
      UnaryOp op;
      if (is_builtin(name, &op)) {
        ++pos_;
        Expr arg = parse_expression();
        expect(')');
        return unary(op, std::move(arg));
      }
      if (auto it = symbols_.functions.find(name); it != symbols_.functions.end()) {
        ++pos_;
        Expr arg = parse_expression();
        expect(')');
        return call(it->second, std::move(arg));
      }
      throw UnknownName(start, name);
    }
    if (symbols_.has_variable(name)) return variable(name);
    if (symbols_.has_parameter(name)) return parameter(name);
    throw UnknownName(start, name);
  }

  std::string_view src_;
  const Symbols& symbols_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses `source` against the declared names. Throws SyntaxError or
/// UnknownName, both carrying a 0-based offset.
inline Expr parse_expression(std::string_view source, const Symbols& symbols) {
  return detail::Parser(source, symbols).parse();
}

/// Convenience overload: every name is a variable, no functions.
inline Expr parse_expression(std::string_view source, const std::vector<std::string>& names) {
  Symbols s;
  s.variables = names;
  return parse_expression(source, s);
}

/// Registers `name(argument) = body`. The body may use the argument and any
/// of `globals`' parameters.
inline std::shared_ptr<const FunctionDef> define_function(const std::string& name,
                                                          const std::string& argument,
                                                          std::string_view body,
                                                          const Symbols& globals) {
  Symbols local;
  local.variables = {argument};
  local.parameters = globals.parameters;
  local.functions = globals.functions;
  auto def = std::make_shared<FunctionDef>();
  def->name = name;
  def->argument = argument;
  def->body = parse_expression(body, local);
  return def;
}

// ---------------------------------------------------------------------------
// Printing

namespace detail {

inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Binding strength used to decide where parentheses are needed.
inline int precedence(const Node& n) {
  switch (n.kind) {
    case NodeKind::binary:
      switch (n.binary_op) {
        case BinaryOp::add:
        case BinaryOp::sub: return 1;
        case BinaryOp::mul:
        case BinaryOp::div: return 2;
        case BinaryOp::pow: return 4;
      }
      return 0;
    case NodeKind::unary: return n.unary_op == UnaryOp::neg ? 3 : 5;
    default: return 5;
  }
}

inline void print(const Expr& e, std::string& out);

inline void print_wrapped(const Expr& e, bool wrap, std::string& out) {
  if (wrap) out += '(';
  print(e, out);
  if (wrap) out += ')';
}

inline void print(const Expr& e, std::string& out) {
  const Node& n = e.node();
  switch (n.kind) {
    case NodeKind::constant: out += format_number(n.value); return;
    case NodeKind::variable:
    case NodeKind::parameter: out += n.name; return;
    case NodeKind::call:
      out += n.name;
      out += '(';
      print(n.children[0], out);
      out += ')';
      return;
    case NodeKind::unary:
      if (n.unary_op == UnaryOp::neg) {
        out += '-';
        print_wrapped(n.children[0], precedence(n.children[0].node()) < 3, out);
      } else {
        out += to_string(n.unary_op);
        out += '(';
        print(n.children[0], out);
        out += ')';
      }
      return;
    case NodeKind::binary: {
      const int p = precedence(n);
      const Node& l = n.children[0].node();
      const Node& r = n.children[1].node();
      if (n.binary_op == BinaryOp::pow) {
        const bool wrap_left = precedence(l) < 4;
        print_wrapped(n.children[0], wrap_left, out);
        out += '^';
        print_wrapped(n.children[1], precedence(r) < 5, out);
        return;
      }
      print_wrapped(n.children[0], precedence(l) < p, out);
      switch (n.binary_op) {
        case BinaryOp::add: out += " + "; break;
        case BinaryOp::sub: out += " - "; break;
        case BinaryOp::mul: out += '*'; break;
        case BinaryOp::div: out += '/'; break;
        case BinaryOp::pow: break;
      }
      print_wrapped(n.children[1], precedence(r) <= p, out);
      return;
    }
  }
}

}  // namespace detail

/// Infix text that parses back to a structurally identical tree.
inline std::string to_string(const Expr& e) {
  std::string out;
  detail::print(e, out);
  return out;
}

inline bool structurally_equal(const Expr& a, const Expr& b) {
  const Node& x = a.node();
  const Node& y = b.node();
  if (x.kind != y.kind) return false;
  switch (x.kind) {
    case NodeKind::constant: return x.value == y.value;
    case NodeKind::variable:
    case NodeKind::parameter:
    case NodeKind::call:
      if (x.name != y.name) return false;
      break;
    case NodeKind::unary:
      if (x.unary_op != y.unary_op) return false;
      break;
    case NodeKind::binary:
      if (x.binary_op != y.binary_op) return false;
      break;
  }
  if (x.children.size() != y.children.size()) return false;
  for (std::size_t i = 0; i < x.children.size(); ++i)
    if (!structurally_equal(x.children[i], y.children[i])) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Evaluation

using Binding = std::unordered_map<std::string, double>;

namespace detail {

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.value(); }
inline bool is_constant(double) { return true; }
inline bool is_constant(const Dual& x) { return x.is_constant(); }

[[noreturn]] inline void domain_error(const std::string& what) {
  throw Error(ErrorKind::domain, what);
}

inline double sqrt_checked(double x) {
  if (x < 0.0) domain_error("sqrt of negative value " + format_number(x));
  return std::sqrt(x);
}

inline Dual sqrt_checked(const Dual& x) {
  const double v = x.value();
  if (v < 0.0) domain_error("sqrt of negative value " + format_number(v));
  const double s = std::sqrt(v);
  if (s == 0.0) {
    if (!x.is_constant()) domain_error("sqrt is not differentiable at 0");
    return Dual(0.0);
  }
  return x.chain(s, 0.5 / s);
}

template <typename T>
T divide_checked(const T& a, const T& b) {
  if (value_of(b) == 0.0) domain_error("division by zero");
  return a / b;
}

inline bool integral_exponent(double e) {
  return std::trunc(e) == e && std::fabs(e) < 2147483648.0;
}

inline double pow_checked(double base, double ex) {
  if (integral_exponent(ex)) {
    if (base == 0.0 && ex < 0.0) domain_error("division by zero in negative power");
    return std::pow(base, ex);
  }
  if (!(base > 0.0)) domain_error("non-integer power of non-positive base " + format_number(base));
  return std::pow(base, ex);
}

inline Dual pow_checked(const Dual& base, const Dual& ex) {
  const double b = base.value();
  const double e = ex.value();
  if (ex.is_constant() && integral_exponent(e)) {
    if (b == 0.0 && e < 0.0) domain_error("division by zero in negative power");
    if (e == 0.0) return Dual(1.0);
    return base.chain(std::pow(b, e), e * std::pow(b, e - 1.0));
  }
  if (!(b > 0.0)) domain_error("non-integer power of non-positive base " + format_number(b));
  const double f = std::pow(b, e);
  return Dual::combine(base, ex, f, e * std::pow(b, e - 1.0), f * std::log(b));
}

inline double apply_unary(UnaryOp op, double x) {
  switch (op) {
    case UnaryOp::neg: return -x;
    case UnaryOp::sin: return std::sin(x);
    case UnaryOp::cos: return std::cos(x);
    case UnaryOp::exp: return std::exp(x);
    case UnaryOp::sqrt: return sqrt_checked(x);
    case UnaryOp::abs: return std::fabs(x);
  }
  return x;
}

inline Dual apply_unary(UnaryOp op, const Dual& x) {
  switch (op) {
    case UnaryOp::neg: return -x;
    case UnaryOp::sin: return sin(x);
    case UnaryOp::cos: return cos(x);
    case UnaryOp::exp: return exp(x);
    case UnaryOp::sqrt: return sqrt_checked(x);
    case UnaryOp::abs: return abs(x);
  }
  return x;
}

template <typename T>
using Lookup = std::function<T(const std::string&, NodeKind)>;

/// `lookup(name, kind)` supplies leaf values.
template <typename T>
T evaluate(const Expr& e, const Lookup<T>& lookup) {
  const Node& n = e.node();
  switch (n.kind) {
    case NodeKind::constant: return T(n.value);
    case NodeKind::variable:
    case NodeKind::parameter: return lookup(n.name, n.kind);
    case NodeKind::unary: return apply_unary(n.unary_op, evaluate<T>(n.children[0], lookup));
    case NodeKind::binary: {
      const T a = evaluate<T>(n.children[0], lookup);
      const T b = evaluate<T>(n.children[1], lookup);
      switch (n.binary_op) {
        case BinaryOp::add: return a + b;
        case BinaryOp::sub: return a - b;
        case BinaryOp::mul: return a * b;
        case BinaryOp::div: return divide_checked(a, b);
        case BinaryOp::pow: return pow_checked(a, b);
      }
      break;
    }
    case NodeKind::call: {
      const T arg = evaluate<T>(n.children[0], lookup);
      const FunctionDef& fn = *n.function;
      const Lookup<T> inner = [&](const std::string& name, NodeKind kind) -> T {
        if (kind == NodeKind::variable && name == fn.argument) return arg;
        return lookup(name, kind);
      };
      return evaluate<T>(fn.body, inner);
    }
  }
  return T(0.0);
}

inline double bound_value(const Binding& binding, const std::string& name) {
  auto it = binding.find(name);
  if (it == binding.end()) throw Error(ErrorKind::unknown_name, "no value bound for '" + name + "'");
  return it->second;
}

}  // namespace detail

/// Value of `e` with every name looked up in `binding`.
inline double eval(const Expr& e, const Binding& binding) {
  const double v = detail::evaluate<double>(
      e, [&](const std::string& name, NodeKind) { return detail::bound_value(binding, name); });
  if (!std::isfinite(v)) detail::domain_error("non-finite result");
  return v;
}

/// Value and first derivatives with respect to `wrt`, in one forward pass.
inline Dual eval_dual(const Expr& e, const Binding& binding, const std::vector<std::string>& wrt) {
  const std::size_t slots = wrt.size();
  const Dual result = detail::evaluate<Dual>(e, [&](const std::string& name, NodeKind) -> Dual {
    const double v = detail::bound_value(binding, name);
    for (std::size_t i = 0; i < slots; ++i)
      if (wrt[i] == name) return Dual::variable(v, i, slots);
    return Dual(v);
  });
  if (!std::isfinite(result.value())) detail::domain_error("non-finite result");
  for (double d : result.derivatives())
    if (!std::isfinite(d)) detail::domain_error("non-finite derivative");
  return result;
}

inline std::vector<double> grad(const Expr& e, const Binding& binding,
                                const std::vector<std::string>& wrt) {
  const Dual d = eval_dual(e, binding, wrt);
  std::vector<double> out(wrt.size());
  for (std::size_t i = 0; i < wrt.size(); ++i) out[i] = d.derivative(i);
  return out;
}

// ---------------------------------------------------------------------------
// Tree utilities

/// Replaces variable and parameter leaves named in `replacements`. Function
/// bodies are closed over their own argument and left untouched.
inline Expr substitute(const Expr& e, const std::map<std::string, Expr, std::less<>>& replacements) {
  const Node& n = e.node();
  switch (n.kind) {
    case NodeKind::constant: return e;
    case NodeKind::variable:
    case NodeKind::parameter: {
      auto it = replacements.find(n.name);
      return it == replacements.end() ? e : it->second;
    }
    case NodeKind::unary: return unary(n.unary_op, substitute(n.children[0], replacements));
    case NodeKind::binary:
      return binary(n.binary_op, substitute(n.children[0], replacements),
                    substitute(n.children[1], replacements));
    case NodeKind::call: return call(n.function, substitute(n.children[0], replacements));
  }
  return e;
}

struct NameSet {
  std::set<std::string> variables;
  std::set<std::string> parameters;
  std::set<std::string> functions;
};

inline void collect_names(const Expr& e, NameSet& out) {
  const Node& n = e.node();
  if (n.kind == NodeKind::variable) out.variables.insert(n.name);
  if (n.kind == NodeKind::parameter) out.parameters.insert(n.name);
  if (n.kind == NodeKind::call) {
    out.functions.insert(n.name);
    NameSet body;
    collect_names(n.function->body, body);
    out.parameters.insert(body.parameters.begin(), body.parameters.end());
  }
  for (const auto& c : n.children) collect_names(c, out);
}

inline NameSet collect_names(const Expr& e) {
  NameSet s;
  collect_names(e, s);
  return s;
}

}  // namespace hybred

#endif  // HYBRED_EXPR_HPP
