#ifndef HYBRED_ERROR_HPP
#define HYBRED_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hybred {

enum class ErrorKind {
  syntax,
  unknown_name,
  domain,
  not_separable,
  dimension_mismatch,
  not_constant,
  tangency_violation,
  empty_level_set,
  re_crossing,
  zeno_suspected,
  singular_selection,
  unsupported_isotropy,
  degenerate_reduced_form,
  level_mismatch,
  structure_mismatch,
  parse,
  validation,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::syntax: return "SyntaxError";
    case ErrorKind::unknown_name: return "UnknownName";
    case ErrorKind::domain: return "DomainError";
    case ErrorKind::not_separable: return "NotSeparable";
    case ErrorKind::dimension_mismatch: return "DimensionMismatch";
    case ErrorKind::not_constant: return "NotConstant";
    case ErrorKind::tangency_violation: return "TangencyViolation";
    case ErrorKind::empty_level_set: return "EmptyLevelSet";
    case ErrorKind::re_crossing: return "ReCrossing";
    case ErrorKind::zeno_suspected: return "ZenoSuspected";
    case ErrorKind::singular_selection: return "SingularSelection";
    case ErrorKind::unsupported_isotropy: return "UnsupportedIsotropy";
    case ErrorKind::degenerate_reduced_form: return "DegenerateReducedForm";
    case ErrorKind::level_mismatch: return "LevelMismatch";
    case ErrorKind::structure_mismatch: return "StructureMismatch";
    case ErrorKind::parse: return "ParseError";
    case ErrorKind::validation: return "ValidationError";
  }
  return "Error";
}

/// Every failure raised by the library carries a kind so callers (the CLI in
/// particular) can map it to an exit code without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Malformed expression text; `offset` is the 0-based character position.
class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t offset, const std::string& message)
      : Error(ErrorKind::syntax, "at offset " + std::to_string(offset) + ": " + message),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class UnknownName : public Error {
 public:
  UnknownName(std::size_t offset, const std::string& name)
      : Error(ErrorKind::unknown_name,
              "undeclared identifier '" + name + "' at offset " + std::to_string(offset)),
        offset_(offset),
        name_(name) {}

  std::size_t offset() const noexcept { return offset_; }
  const std::string& name() const noexcept { return name_; }

 private:
  std::size_t offset_;
  std::string name_;
};

}  // namespace hybred

#endif  // HYBRED_ERROR_HPP
