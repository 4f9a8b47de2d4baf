#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gcalc::expr {

/// Syntax error or unknown identifier; `offset()` is the byte offset in the source.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t offset, const std::string& message);
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class EvalError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Op {
  Const,
  Var,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  Neg,
  Sin,
  Cos,
  Exp,
  Log,
  Tanh,
  Abs,
  Sqrt,
  Min,
  Max,
  Pos,
  NegPart,
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  Op op;
  double value = 0.0;  // Const
  std::size_t var = 0; // Var: index into the declared variable list
  std::vector<NodePtr> args;
};

bool same_tree(const Node& a, const Node& b);

/// Immutable parsed expression over a fixed, ordered list of declared
/// variables. Evaluation runs a compiled stack program and is reentrant.
class Expression {
 public:
  using Constants = std::map<std::string, double, std::less<>>;

  /// Named constants are folded into the tree as numeric literals.
  static Expression parse(std::string_view source, std::vector<std::string> variables,
                          const Constants& constants = {});
  static Expression constant(double value, std::vector<std::string> variables);

  Expression(NodePtr root, std::vector<std::string> variables);

  double evaluate(std::span<const double> values) const;
  double operator()(std::span<const double> values) const { return evaluate(values); }

  const std::vector<std::string>& variables() const noexcept { return variables_; }
  std::size_t arity() const noexcept { return variables_.size(); }
  const Node& root() const noexcept { return *root_; }
  std::set<std::string> free_variables() const;
  bool is_constant() const noexcept { return root_->op == Op::Const; }

  /// Source text that parses back to the same tree.
  std::string to_string() const;

  /// Symbolic derivative. Supports + - * / ^, unary minus and the smooth
  /// built-ins; abs/min/max/pos/neg throw std::domain_error.
  Expression derivative(std::string_view variable) const;

  /// Same tree re-indexed against a different variable list (a superset of
  /// the free variables).
  Expression rebind(const std::vector<std::string>& variables) const;

  friend bool operator==(const Expression& a, const Expression& b) {
    return a.variables_ == b.variables_ && same_tree(*a.root_, *b.root_);
  }

 private:
  struct Instr {
    Op op;
    double value;
    std::size_t var;
  };
  void compile();

  NodePtr root_;
  std::vector<std::string> variables_;
  std::vector<Instr> program_;
  std::size_t stack_depth_ = 0;
};

/// Central difference (e(p + h e_i) - e(p - h e_i)) / (2h).
double differentiate_fd(const Expression& e, std::size_t var, std::span<const double> point, double h);

/// Three-point stencil for d2/dvar2, or the four-point cross stencil for i != j.
double second_derivative_fd(const Expression& e, std::size_t i, std::size_t j,
                            std::span<const double> point, double h);

/// Variable names t, x1..xn (the coefficient/Lyapunov convention).
std::vector<std::string> state_variables(std::size_t n);

}  // namespace gcalc::expr
