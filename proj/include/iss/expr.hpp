#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace iss {

/// Syntax error in an expression string; `offset()` is the byte offset of the
/// offending token.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Evaluation failure: unbound variable or a domain error (sqrt of a negative,
/// ln of a non-positive, non-finite intermediate, ...).
class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An operation produced +-inf from finite operands.  Derived from EvalError so
/// callers that do not care can treat it as any other domain error.
class OverflowError : public EvalError {
 public:
  using EvalError::EvalError;
};

enum class BinaryOp { Add, Sub, Mul, Div, Pow };
enum class Func { Abs, Sqrt, Exp, Ln, Min, Max, Pow };

/// Immutable expression tree.  Copies share structure.
class Expr {
 public:
  enum class Kind { Number, Variable, Negate, Binary, Call };

  struct Node {
    Kind kind;
    double value = 0.0;
    std::string name;  // variable name
    BinaryOp op = BinaryOp::Add;
    Func func = Func::Abs;
    std::vector<Expr> children;
  };

  /// The literal 0.
  Expr() : Expr(number(0.0)) {}
  static Expr number(double v);
  static Expr variable(std::string name);
  static Expr negate(Expr e);
  static Expr binary(BinaryOp op, Expr lhs, Expr rhs);
  static Expr call(Func f, std::vector<Expr> args);

  Kind kind() const { return node_->kind; }
  const Node& node() const { return *node_; }

  /// Replace variables by literal values.  Unmentioned variables stay free.
  Expr substitute(const std::map<std::string, double>& values) const;

  bool operator==(const Expr& other) const;

 private:
  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  std::shared_ptr<const Node> node_;
};

Expr parse(std::string_view source);

/// Evaluate with named bindings.  Throws EvalError on unbound variables or
/// domain errors; never returns NaN or inf.
double eval(const Expr& e, const std::map<std::string, double>& bindings);

std::set<std::string> free_vars(const Expr& e);

/// Minimal-parenthesis rendering that re-parses to a structurally identical
/// tree.  Literals use the shortest round-trip decimal form.
std::string to_string(const Expr& e);

const char* function_name(Func f);

/// Flattened postfix form of an expression with variables resolved to slots.
/// Evaluation is allocation-free for trees of moderate depth and safe to call
/// concurrently.
class CompiledExpr {
 public:
  CompiledExpr() = default;
  /// Variables not listed in `slots` raise EvalError here, not at eval time.
  CompiledExpr(const Expr& e, std::span<const std::string> slots);

  double operator()(std::span<const double> values) const;
  std::size_t arity() const { return arity_; }

 private:
  enum class Op : unsigned char { Push, Load, Neg, Add, Sub, Mul, Div, Pow, Abs, Sqrt, Exp, Ln, Min, Max };
  struct Instr {
    Op op;
    unsigned short argc = 0;
    std::size_t slot = 0;
    double value = 0.0;
  };
  void emit(const Expr& e, std::span<const std::string> slots, std::size_t depth);

  std::vector<Instr> code_;
  std::size_t max_depth_ = 0;
  std::size_t arity_ = 0;
};

}  // namespace iss
