#include "gcalc/expr.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cctype>
#include <limits>

#include <fmt/format.h>

namespace gcalc::expr {
namespace {

struct FunctionInfo {
  std::string_view name;
  Op op;
  std::size_t arity;
};

constexpr std::array<FunctionInfo, 11> kFunctions{{
    {"sin", Op::Sin, 1},
    {"cos", Op::Cos, 1},
    {"exp", Op::Exp, 1},
    {"log", Op::Log, 1},
    {"tanh", Op::Tanh, 1},
    {"abs", Op::Abs, 1},
    {"sqrt", Op::Sqrt, 1},
    {"min", Op::Min, 2},
    {"max", Op::Max, 2},
    {"pos", Op::Pos, 1},
    {"neg", Op::NegPart, 1},
}};

const FunctionInfo* find_function(std::string_view name) {
  for (const auto& f : kFunctions)
    if (f.name == name) return &f;
  return nullptr;
}

std::string_view function_name(Op op) {
  for (const auto& f : kFunctions)
    if (f.op == op) return f.name;
  return "?";
}

NodePtr make_const(double v) { return std::make_shared<const Node>(Node{Op::Const, v, 0, {}}); }
NodePtr make_var(std::size_t i) { return std::make_shared<const Node>(Node{Op::Var, 0.0, i, {}}); }
NodePtr make_node(Op op, std::vector<NodePtr> args) {
  return std::make_shared<const Node>(Node{op, 0.0, 0, std::move(args)});
}

bool is_const(const NodePtr& n, double v) { return n->op == Op::Const && n->value == v; }

// Constructors with light algebraic simplification, used by the derivative.
NodePtr neg(NodePtr a) {
  if (a->op == Op::Const) return make_const(-a->value);
  return make_node(Op::Neg, {std::move(a)});
}
NodePtr add(NodePtr a, NodePtr b) {
  if (is_const(a, 0.0)) return b;
  if (is_const(b, 0.0)) return a;
  if (a->op == Op::Const && b->op == Op::Const) return make_const(a->value + b->value);
  return make_node(Op::Add, {std::move(a), std::move(b)});
}
NodePtr sub(NodePtr a, NodePtr b) {
  if (is_const(b, 0.0)) return a;
  if (is_const(a, 0.0)) return neg(std::move(b));
  if (a->op == Op::Const && b->op == Op::Const) return make_const(a->value - b->value);
  return make_node(Op::Sub, {std::move(a), std::move(b)});
}
NodePtr mul(NodePtr a, NodePtr b) {
  if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
  if (is_const(a, 1.0)) return b;
  if (is_const(b, 1.0)) return a;
  if (a->op == Op::Const && b->op == Op::Const) return make_const(a->value * b->value);
  return make_node(Op::Mul, {std::move(a), std::move(b)});
}
NodePtr div(NodePtr a, NodePtr b) {
  if (is_const(a, 0.0)) return make_const(0.0);
  if (is_const(b, 1.0)) return a;
  return make_node(Op::Div, {std::move(a), std::move(b)});
}
NodePtr pow(NodePtr a, NodePtr b) {
  if (is_const(b, 1.0)) return a;
  if (is_const(b, 0.0)) return make_const(1.0);
  return make_node(Op::Pow, {std::move(a), std::move(b)});
}

class Parser {
 public:
  Parser(std::string_view src, const std::vector<std::string>& vars, const Expression::Constants& consts)
      : src_(src), vars_(vars), consts_(consts) {}

  NodePtr parse() {
    NodePtr e = expression();
    skip_ws();
    if (pos_ != src_.size()) throw ParseError(pos_, fmt::format("unexpected '{}'", src_[pos_]));
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
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
      if (pos_ >= src_.size()) throw ParseError(pos_, fmt::format("expected '{}' but input ended", c));
      throw ParseError(pos_, fmt::format("expected '{}'", c));
    }
  }

  NodePtr expression() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+'))
        lhs = make_node(Op::Add, {lhs, term()});
      else if (accept('-'))
        lhs = make_node(Op::Sub, {lhs, term()});
      else
        return lhs;
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (accept('*'))
        lhs = make_node(Op::Mul, {lhs, unary()});
      else if (accept('/'))
        lhs = make_node(Op::Div, {lhs, unary()});
      else
        return lhs;
    }
  }

  NodePtr unary() {
    if (accept('-')) return neg(unary());
    if (accept('+')) return unary();
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (accept('^')) return make_node(Op::Pow, {base, unary()});
    return base;
  }

  NodePtr primary() {
    skip_ws();
    if (pos_ >= src_.size()) throw ParseError(pos_, "unexpected end of input");
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr e = expression();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    throw ParseError(pos_, fmt::format("unexpected '{}'", c));
  }

  NodePtr number() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.'))
      ++pos_;
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
      if (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
        pos_ = p;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      }
    }
    double v = 0.0;
    const char* first = src_.data() + start;
    const char* last = src_.data() + pos_;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) throw ParseError(start, "malformed number");
    return make_const(v);
  }

  NodePtr identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    const std::string_view name = src_.substr(start, pos_ - start);

    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == '(') {
      const FunctionInfo* f = find_function(name);
      if (!f) throw ParseError(start, fmt::format("unknown function '{}'", name));
      ++pos_;
      std::vector<NodePtr> args;
      args.push_back(expression());
      while (accept(',')) args.push_back(expression());
      expect(')');
      if (args.size() != f->arity)
        throw ParseError(start, fmt::format("function '{}' takes {} argument(s), got {}", name, f->arity,
                                            args.size()));
      return make_node(f->op, std::move(args));
    }

    for (std::size_t i = 0; i < vars_.size(); ++i)
      if (vars_[i] == name) return make_var(i);
    if (auto it = consts_.find(name); it != consts_.end()) return make_const(it->second);
    throw ParseError(start, fmt::format("unknown identifier '{}'", name));
  }

  std::string_view src_;
  const std::vector<std::string>& vars_;
  const Expression::Constants& consts_;
  std::size_t pos_ = 0;
};

int precedence(const Node& n) {
  switch (n.op) {
    case Op::Add:
    case Op::Sub:
      return 1;
    case Op::Mul:
    case Op::Div:
      return 2;
    case Op::Neg:
      return 3;
    case Op::Pow:
      return 4;
    case Op::Const:
      return n.value < 0 || std::signbit(n.value) ? 5 : 6;
    default:
      return 6;
  }
}

void print(const Node& n, const std::vector<std::string>& vars, std::string& out) {
  auto child = [&](const Node& c, bool parens) {
    if (parens) out += '(';
    print(c, vars, out);
    if (parens) out += ')';
  };
  switch (n.op) {
    case Op::Const:
      if (std::signbit(n.value))
        out += fmt::format("({})", n.value);
      else
        out += fmt::format("{}", n.value);
      return;
    case Op::Var:
      out += vars[n.var];
      return;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      const int p = precedence(n);
      child(*n.args[0], precedence(*n.args[0]) < p);
      out += n.op == Op::Add ? " + " : n.op == Op::Sub ? " - " : n.op == Op::Mul ? "*" : "/";
      child(*n.args[1], precedence(*n.args[1]) <= p);
      return;
    }
    case Op::Neg:
      out += '-';
      child(*n.args[0], precedence(*n.args[0]) < 3);
      return;
    case Op::Pow:
      child(*n.args[0], precedence(*n.args[0]) <= 4);
      out += '^';
      child(*n.args[1], precedence(*n.args[1]) < 3);
      return;
    default:
      out += function_name(n.op);
      out += '(';
      for (std::size_t i = 0; i < n.args.size(); ++i) {
        if (i) out += ", ";
        print(*n.args[i], vars, out);
      }
      out += ')';
      return;
  }
}

NodePtr derive(const NodePtr& n, std::size_t var) {
  const auto& a = n->args;
  switch (n->op) {
    case Op::Const:
      return make_const(0.0);
    case Op::Var:
      return make_const(n->var == var ? 1.0 : 0.0);
    case Op::Add:
      return add(derive(a[0], var), derive(a[1], var));
    case Op::Sub:
      return sub(derive(a[0], var), derive(a[1], var));
    case Op::Neg:
      return neg(derive(a[0], var));
    case Op::Mul:
      return add(mul(derive(a[0], var), a[1]), mul(a[0], derive(a[1], var)));
    case Op::Div:
      return div(sub(mul(derive(a[0], var), a[1]), mul(a[0], derive(a[1], var))), pow(a[1], make_const(2.0)));
    case Op::Pow: {
      if (a[1]->op == Op::Const) {
        const double k = a[1]->value;
        return mul(mul(make_const(k), pow(a[0], make_const(k - 1.0))), derive(a[0], var));
      }
      // d(u^v) = u^v (v' log u + v u'/u)
      return mul(n, add(mul(derive(a[1], var), make_node(Op::Log, {a[0]})),
                        div(mul(a[1], derive(a[0], var)), a[0])));
    }
    case Op::Sin:
      return mul(make_node(Op::Cos, {a[0]}), derive(a[0], var));
    case Op::Cos:
      return mul(neg(make_node(Op::Sin, {a[0]})), derive(a[0], var));
    case Op::Exp:
      return mul(n, derive(a[0], var));
    case Op::Log:
      return div(derive(a[0], var), a[0]);
    case Op::Sqrt:
      return div(derive(a[0], var), mul(make_const(2.0), n));
    case Op::Tanh:
      return mul(sub(make_const(1.0), pow(n, make_const(2.0))), derive(a[0], var));
    default:
      throw std::domain_error(fmt::format("derivative: '{}' is not differentiable symbolically", function_name(n->op)));
  }
}

NodePtr reindex(const NodePtr& n, const std::vector<std::size_t>& map) {
  if (n->op == Op::Var) return make_var(map[n->var]);
  if (n->args.empty()) return n;
  std::vector<NodePtr> args;
  for (const auto& c : n->args) args.push_back(reindex(c, map));
  return make_node(n->op, std::move(args));
}

void collect_vars(const Node& n, std::vector<bool>& used) {
  if (n.op == Op::Var) used[n.var] = true;
  for (const auto& c : n.args) collect_vars(*c, used);
}

inline double nan_aware_min(double a, double b) {
  if (std::isnan(a) || std::isnan(b)) return std::numeric_limits<double>::quiet_NaN();
  return std::min(a, b);
}
inline double nan_aware_max(double a, double b) {
  if (std::isnan(a) || std::isnan(b)) return std::numeric_limits<double>::quiet_NaN();
  return std::max(a, b);
}

}  // namespace

ParseError::ParseError(std::size_t offset, const std::string& message)
    : std::runtime_error(fmt::format("parse error at offset {}: {}", offset, message)), offset_(offset) {}

bool same_tree(const Node& a, const Node& b) {
  if (a.op != b.op || a.args.size() != b.args.size()) return false;
  if (a.op == Op::Const) return a.value == b.value && std::signbit(a.value) == std::signbit(b.value);
  if (a.op == Op::Var) return a.var == b.var;
  for (std::size_t i = 0; i < a.args.size(); ++i)
    if (!same_tree(*a.args[i], *b.args[i])) return false;
  return true;
}

Expression Expression::parse(std::string_view source, std::vector<std::string> variables,
                             const Constants& constants) {
  Parser p(source, variables, constants);
  NodePtr root = p.parse();
  return Expression(std::move(root), std::move(variables));
}

Expression Expression::constant(double value, std::vector<std::string> variables) {
  return Expression(make_const(value), std::move(variables));
}

Expression::Expression(NodePtr root, std::vector<std::string> variables)
    : root_(std::move(root)), variables_(std::move(variables)) {
  compile();
}

void Expression::compile() {
  program_.clear();
  std::size_t depth = 0;
  std::size_t max_depth = 0;
  auto emit = [&](auto&& self, const Node& n) -> void {
    for (const auto& c : n.args) self(self, *c);
    program_.push_back(Instr{n.op, n.value, n.var});
    if (n.op == Op::Const || n.op == Op::Var) {
      ++depth;
    } else {
      depth -= n.args.size() - 1;
    }
    max_depth = std::max(max_depth, depth);
  };
  emit(emit, *root_);
  stack_depth_ = max_depth;
}

double Expression::evaluate(std::span<const double> values) const {
  if (values.size() < variables_.size())
    throw EvalError(fmt::format("evaluate: expected {} values, got {}", variables_.size(), values.size()));
  constexpr std::size_t kInline = 32;
  double inline_stack[kInline];
  std::vector<double> heap;
  double* st = inline_stack;
  if (stack_depth_ > kInline) {
    heap.resize(stack_depth_);
    st = heap.data();
  }
  std::size_t sp = 0;
  for (const Instr& in : program_) {
    switch (in.op) {
      case Op::Const: st[sp++] = in.value; break;
      case Op::Var: st[sp++] = values[in.var]; break;
      case Op::Add: --sp; st[sp - 1] += st[sp]; break;
      case Op::Sub: --sp; st[sp - 1] -= st[sp]; break;
      case Op::Mul: --sp; st[sp - 1] *= st[sp]; break;
      case Op::Div: --sp; st[sp - 1] /= st[sp]; break;
      case Op::Pow: --sp; st[sp - 1] = std::pow(st[sp - 1], st[sp]); break;
      case Op::Min: --sp; st[sp - 1] = nan_aware_min(st[sp - 1], st[sp]); break;
      case Op::Max: --sp; st[sp - 1] = nan_aware_max(st[sp - 1], st[sp]); break;
      case Op::Neg: st[sp - 1] = -st[sp - 1]; break;
      case Op::Sin: st[sp - 1] = std::sin(st[sp - 1]); break;
      case Op::Cos: st[sp - 1] = std::cos(st[sp - 1]); break;
      case Op::Exp: st[sp - 1] = std::exp(st[sp - 1]); break;
      case Op::Log: st[sp - 1] = std::log(st[sp - 1]); break;
      case Op::Tanh: st[sp - 1] = std::tanh(st[sp - 1]); break;
      case Op::Abs: st[sp - 1] = std::abs(st[sp - 1]); break;
      case Op::Sqrt: st[sp - 1] = std::sqrt(st[sp - 1]); break;
      case Op::Pos: st[sp - 1] = nan_aware_max(st[sp - 1], 0.0); break;
      case Op::NegPart: st[sp - 1] = nan_aware_max(-st[sp - 1], 0.0); break;
    }
  }
  return st[0];
}

std::set<std::string> Expression::free_variables() const {
  std::vector<bool> used(variables_.size(), false);
  collect_vars(*root_, used);
  std::set<std::string> out;
  for (std::size_t i = 0; i < used.size(); ++i)
    if (used[i]) out.insert(variables_[i]);
  return out;
}

std::string Expression::to_string() const {
  std::string out;
  print(*root_, variables_, out);
  return out;
}

Expression Expression::derivative(std::string_view variable) const {
  auto it = std::find(variables_.begin(), variables_.end(), variable);
  if (it == variables_.end())
    throw std::invalid_argument(fmt::format("derivative: '{}' is not a declared variable", variable));
  return Expression(derive(root_, static_cast<std::size_t>(it - variables_.begin())), variables_);
}

Expression Expression::rebind(const std::vector<std::string>& variables) const {
  std::vector<bool> used(variables_.size(), false);
  collect_vars(*root_, used);
  std::vector<std::size_t> map(variables_.size(), 0);
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    auto it = std::find(variables.begin(), variables.end(), variables_[i]);
    if (it == variables.end()) {
      if (used[i]) throw std::invalid_argument(fmt::format("rebind: variable '{}' not available", variables_[i]));
      continue;
    }
    map[i] = static_cast<std::size_t>(it - variables.begin());
  }
  return Expression(reindex(root_, map), variables);
}

double differentiate_fd(const Expression& e, std::size_t var, std::span<const double> point, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("differentiate_fd: step must be positive");
  if (var >= point.size()) throw std::out_of_range("differentiate_fd: variable index out of range");
  std::vector<double> p(point.begin(), point.end());
  p[var] = point[var] + h;
  const double up = e.evaluate(p);
  p[var] = point[var] - h;
  const double down = e.evaluate(p);
  if (!std::isfinite(up) || !std::isfinite(down))
    throw EvalError(fmt::format("differentiate_fd: non-finite value near {} = {}", e.variables().at(var), point[var]));
  if (up == down) return 0.0;
  return (up - down) / (2.0 * h);
}

double second_derivative_fd(const Expression& e, std::size_t i, std::size_t j,
                            std::span<const double> point, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("second_derivative_fd: step must be positive");
  if (i >= point.size() || j >= point.size()) throw std::out_of_range("second_derivative_fd: index out of range");
  std::vector<double> p(point.begin(), point.end());
  auto at = [&](double di, double dj) {
    std::copy(point.begin(), point.end(), p.begin());
    p[i] += di;
    p[j] += dj;
    const double v = e.evaluate(p);
    if (!std::isfinite(v))
      throw EvalError(fmt::format("second_derivative_fd: non-finite value near {}", e.variables().at(i)));
    return v;
  };
  if (i == j) {
    const double c = at(0.0, 0.0);
    std::copy(point.begin(), point.end(), p.begin());
    p[i] = point[i] + h;
    const double up = e.evaluate(p);
    p[i] = point[i] - h;
    const double down = e.evaluate(p);
    if (!std::isfinite(up) || !std::isfinite(down))
      throw EvalError(fmt::format("second_derivative_fd: non-finite value near {}", e.variables().at(i)));
    return (up - 2.0 * c + down) / (h * h);
  }
  return (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
}

std::vector<std::string> state_variables(std::size_t n) {
  std::vector<std::string> out{"t"};
  for (std::size_t i = 1; i <= n; ++i) out.push_back(fmt::format("x{}", i));
  return out;
}

}  // namespace gcalc::expr
