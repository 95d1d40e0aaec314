#pragma once

// Scalar expression language used for metric entries, force functions and
// auxiliary functions in problem files.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' exponent)?        exponent: constant integer, right assoc
//   primary := number | 'pi' | variable | func '(' expr ')' | '(' expr ')'
//
// Variables are phi1..phik and x1..xm. Functions: sin cos exp log sqrt tanh.

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qpl/errors.hpp"
#include "qpl/jet.hpp"

namespace qpl {

enum class NodeKind : std::uint8_t {
  kConst,
  kVar,
  kNeg,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kPow,
  kSin,
  kCos,
  kExp,
  kLog,
  kSqrt,
  kTanh,
};

struct ExprNode {
  NodeKind kind = NodeKind::kConst;
  double value = 0.0;  // kConst
  int var = -1;        // kVar: index into [phi_1..phi_k, x_1..x_m]
  int exponent = 0;    // kPow
  int lhs = -1;        // child indices, always smaller than this node's index
  int rhs = -1;

  bool operator==(const ExprNode& o) const {
    return kind == o.kind && std::bit_cast<std::uint64_t>(value) == std::bit_cast<std::uint64_t>(o.value) &&
           var == o.var && exponent == o.exponent && lhs == o.lhs && rhs == o.rhs;
  }
};

namespace expr_detail {

struct FunctionName {
  std::string_view name;
  NodeKind kind;
};

inline constexpr FunctionName kFunctions[] = {
    {"sin", NodeKind::kSin},   {"cos", NodeKind::kCos},   {"exp", NodeKind::kExp},
    {"log", NodeKind::kLog},   {"sqrt", NodeKind::kSqrt}, {"tanh", NodeKind::kTanh},
};

inline std::string_view function_name(NodeKind kind) {
  for (const auto& f : kFunctions)
    if (f.kind == kind) return f.name;
  return "?";
}

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

class Parser {
 public:
  Parser(std::string_view text, int k, int m) : text_(text), k_(k), m_(m) {}

  std::vector<ExprNode> run() {
    skip_space();
    if (pos_ >= text_.size()) throw ParseError("syntax error: empty expression", pos_);
    parse_expr();
    skip_space();
    if (pos_ < text_.size()) {
      throw ParseError(std::string("syntax error: unexpected '") + text_[pos_] + "'", pos_);
    }
    return std::move(nodes_);
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  char peek() {
    skip_space();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  int push(ExprNode node) {
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size()) - 1;
  }

  int binary(NodeKind kind, int lhs, int rhs) {
    ExprNode n;
    n.kind = kind;
    n.lhs = lhs;
    n.rhs = rhs;
    return push(n);
  }

  int unary_node(NodeKind kind, int arg) {
    ExprNode n;
    n.kind = kind;
    n.lhs = arg;
    return push(n);
  }

  int parse_expr() {
    int lhs = parse_term();
    for (;;) {
      const char c = peek();
      if (c != '+' && c != '-') return lhs;
      ++pos_;
      const int rhs = parse_term();
      lhs = binary(c == '+' ? NodeKind::kAdd : NodeKind::kSub, lhs, rhs);
    }
  }

  int parse_term() {
    int lhs = parse_unary();
    for (;;) {
      const char c = peek();
      if (c != '*' && c != '/') return lhs;
      ++pos_;
      const int rhs = parse_unary();
      lhs = binary(c == '*' ? NodeKind::kMul : NodeKind::kDiv, lhs, rhs);
    }
  }

  int parse_unary() {
    const char c = peek();
    if (c == '-') {
      ++pos_;
      return unary_node(NodeKind::kNeg, parse_unary());
    }
    if (c == '+') {
      ++pos_;
      return parse_unary();
    }
    return parse_power();
  }

  int parse_power() {
    const int base = parse_primary();
    if (peek() != '^') return base;
    ++pos_;
    skip_space();
    const int exponent = parse_exponent();
    ExprNode n;
    n.kind = NodeKind::kPow;
    n.lhs = base;
    n.exponent = exponent;
    return push(n);
  }

  // The exponent is parsed as a sub-expression on a scratch tree, then folded.
  int parse_exponent() {
    const std::size_t start = pos_;
    const std::size_t mark = nodes_.size();
    int root;
    if (peek() == '-' || peek() == '+') {
      root = parse_unary();
    } else {
      root = parse_power();
    }
    double value = 0.0;
    if (!fold_constant(root, value)) throw ParseError("exponent must be a constant integer", start);
    nodes_.resize(mark);
    const double r = std::round(value);
    if (r != value || std::abs(r) > 64) throw ParseError("exponent must be a constant integer", start);
    return static_cast<int>(r);
  }

  bool fold_constant(int idx, double& out) const {
    const ExprNode& n = nodes_[idx];
    double a = 0.0;
    double b = 0.0;
    switch (n.kind) {
      case NodeKind::kConst:
        out = n.value;
        return true;
      case NodeKind::kVar:
        return false;
      case NodeKind::kNeg:
        if (!fold_constant(n.lhs, a)) return false;
        out = -a;
        return true;
      case NodeKind::kAdd:
      case NodeKind::kSub:
      case NodeKind::kMul:
      case NodeKind::kDiv:
        if (!fold_constant(n.lhs, a) || !fold_constant(n.rhs, b)) return false;
        out = n.kind == NodeKind::kAdd   ? a + b
              : n.kind == NodeKind::kSub ? a - b
              : n.kind == NodeKind::kMul ? a * b
                                         : a / b;
        return true;
      case NodeKind::kPow:
        if (!fold_constant(n.lhs, a)) return false;
        out = std::pow(a, n.exponent);
        return true;
      default:
        return false;  // transcendental exponents are never integers we trust
    }
  }

  int parse_primary() {
    const char c = peek();
    const std::size_t start = pos_;
    if (c == '\0') throw ParseError("syntax error: unexpected end of input", pos_);
    if (c == '(') {
      ++pos_;
      const int inner = parse_expr();
      if (peek() != ')') throw ParseError("syntax error: expected ')'", pos_);
      ++pos_;
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t end = pos_;
      while (end < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[end])) || text_[end] == '_')) ++end;
      const std::string_view ident = text_.substr(pos_, end - pos_);
      pos_ = end;
      for (const auto& f : kFunctions) {
        if (ident == f.name) {
          if (peek() != '(') throw ParseError("arity error: function '" + std::string(ident) + "' takes one argument", pos_);
          ++pos_;
          const int arg = parse_expr();
          if (peek() == ',') throw ParseError("arity error: function '" + std::string(ident) + "' takes one argument", pos_);
          if (peek() != ')') throw ParseError("syntax error: expected ')'", pos_);
          ++pos_;
          return unary_node(f.kind, arg);
        }
      }
      if (ident == "pi") {
        ExprNode n;
        n.kind = NodeKind::kConst;
        n.value = std::numbers::pi;
        return push(n);
      }
      const int var = variable_index(ident);
      if (var < 0) throw ParseError("unknown identifier '" + std::string(ident) + "'", start);
      ExprNode n;
      n.kind = NodeKind::kVar;
      n.var = var;
      return push(n);
    }
    throw ParseError(std::string("syntax error: unexpected '") + c + "'", pos_);
  }

  int parse_number() {
    const std::size_t start = pos_;
    std::size_t end = pos_;
    auto digits = [&] {
      while (end < text_.size() && std::isdigit(static_cast<unsigned char>(text_[end]))) ++end;
    };
    digits();
    if (end < text_.size() && text_[end] == '.') {
      ++end;
      digits();
    }
    if (end < text_.size() && (text_[end] == 'e' || text_[end] == 'E')) {
      std::size_t e = end + 1;
      if (e < text_.size() && (text_[e] == '+' || text_[e] == '-')) ++e;
      if (e < text_.size() && std::isdigit(static_cast<unsigned char>(text_[e]))) {
        end = e;
        digits();
      }
    }
    double value = 0.0;
    const auto res = std::from_chars(text_.data() + start, text_.data() + end, value);
    if (res.ec != std::errc() || res.ptr != text_.data() + end) throw ParseError("syntax error: bad number", start);
    pos_ = end;
    ExprNode n;
    n.kind = NodeKind::kConst;
    n.value = value;
    return push(n);
  }

  int variable_index(std::string_view ident) const {
    auto suffix = [](std::string_view s, std::string_view prefix) -> int {
      if (s.size() <= prefix.size() || s.substr(0, prefix.size()) != prefix) return -1;
      int v = 0;
      const auto res = std::from_chars(s.data() + prefix.size(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s[prefix.size()] == '0') return -1;
      return v;
    };
    if (const int j = suffix(ident, "phi"); j >= 1 && j <= k_) return j - 1;
    if (const int i = suffix(ident, "x"); i >= 1 && i <= m_) return k_ + i - 1;
    return -1;
  }

  std::string_view text_;
  int k_;
  int m_;
  std::size_t pos_ = 0;
  std::vector<ExprNode> nodes_;
};

}  // namespace expr_detail

/// Immutable parsed expression in torus angles phi and chart coordinates x.
class Expression {
 public:
  Expression() = default;

  static Expression parse(std::string_view text, int k, int m) {
    Expression e;
    auto tree = std::make_shared<Tree>();
    tree->source = std::string(text);
    tree->k = k;
    tree->m = m;
    tree->nodes = expr_detail::Parser(text, k, m).run();
    for (const auto& n : tree->nodes)
      if (n.kind == NodeKind::kVar && n.var < k) tree->uses_phi = true;
    e.tree_ = std::move(tree);
    return e;
  }

  static Expression constant(double value, int k, int m) {
    return parse(expr_detail::format_double(value), k, m);
  }

  bool valid() const { return tree_ != nullptr; }
  int k() const { return tree_->k; }
  int m() const { return tree_->m; }
  const std::string& source() const { return tree_->source; }
  const std::vector<ExprNode>& nodes() const { return tree_->nodes; }
  bool depends_on_phi() const { return tree_->uses_phi; }

  /// Structural equality of the syntax trees.
  bool same_tree(const Expression& other) const {
    return tree_->k == other.tree_->k && tree_->m == other.tree_->m && tree_->nodes == other.tree_->nodes;
  }

  /// Fully parenthesized canonical text; parsing it reproduces the same tree.
  std::string to_string() const { return render(static_cast<int>(tree_->nodes.size()) - 1); }

  double value(std::span<const double> phi, std::span<const double> x) const {
    const auto& nodes = tree_->nodes;
    thread_local std::vector<double> buf;
    buf.resize(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const ExprNode& n = nodes[i];
      switch (n.kind) {
        case NodeKind::kConst: buf[i] = n.value; break;
        case NodeKind::kVar: buf[i] = n.var < tree_->k ? phi[n.var] : x[n.var - tree_->k]; break;
        case NodeKind::kNeg: buf[i] = -buf[n.lhs]; break;
        case NodeKind::kAdd: buf[i] = buf[n.lhs] + buf[n.rhs]; break;
        case NodeKind::kSub: buf[i] = buf[n.lhs] - buf[n.rhs]; break;
        case NodeKind::kMul: buf[i] = buf[n.lhs] * buf[n.rhs]; break;
        case NodeKind::kDiv: buf[i] = buf[n.lhs] * (1.0 / buf[n.rhs]); break;
        case NodeKind::kPow: buf[i] = ipow(buf[n.lhs], n.exponent); break;
        case NodeKind::kSin: buf[i] = std::sin(buf[n.lhs]); break;
        case NodeKind::kCos: buf[i] = std::cos(buf[n.lhs]); break;
        case NodeKind::kExp: buf[i] = std::exp(buf[n.lhs]); break;
        case NodeKind::kLog:
          if (!(buf[n.lhs] > 0.0)) domain_failure("log of nonpositive argument", phi, x);
          buf[i] = std::log(buf[n.lhs]);
          break;
        case NodeKind::kSqrt:
          if (!(buf[n.lhs] >= 0.0)) domain_failure("sqrt of negative argument", phi, x);
          buf[i] = std::sqrt(buf[n.lhs]);
          break;
        case NodeKind::kTanh: buf[i] = std::tanh(buf[n.lhs]); break;
      }
    }
    return buf.back();
  }

  /// Forward-mode evaluation. Derivatives are taken with respect to x (slots
  /// 0..m-1); when `omega_dir` is given, slot m carries d/dt along
  /// phi = phi0 + t*omega. `order` 1 gives gradients only, 2 adds Hessians.
  Jet jet(std::span<const double> phi, std::span<const double> x, int order,
          std::span<const double> omega_dir = {}) const {
    const int mm = tree_->m;
    const int kk = tree_->k;
    const bool with_t = !omega_dir.empty();
    const int n_vars = mm + (with_t ? 1 : 0);
    const bool second = order >= 2;
    const auto& nodes = tree_->nodes;
    thread_local std::vector<Jet> buf;
    buf.resize(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const ExprNode& n = nodes[i];
      switch (n.kind) {
        case NodeKind::kConst: buf[i] = Jet::constant(n.value, n_vars, second); break;
        case NodeKind::kVar: {
          Jet::Grad seed = Jet::Grad::Zero(n_vars);
          double v;
          if (n.var < kk) {
            v = phi[n.var];
            if (with_t) seed(mm) = omega_dir[n.var];
          } else {
            v = x[n.var - kk];
            seed(n.var - kk) = 1.0;
          }
          buf[i] = Jet::variable(v, seed, second);
          break;
        }
        case NodeKind::kNeg: buf[i] = -buf[n.lhs]; break;
        case NodeKind::kAdd: buf[i] = buf[n.lhs] + buf[n.rhs]; break;
        case NodeKind::kSub: buf[i] = buf[n.lhs] - buf[n.rhs]; break;
        case NodeKind::kMul: buf[i] = buf[n.lhs] * buf[n.rhs]; break;
        case NodeKind::kDiv: buf[i] = buf[n.lhs] / buf[n.rhs]; break;
        case NodeKind::kPow: buf[i] = pow(buf[n.lhs], n.exponent); break;
        case NodeKind::kSin: buf[i] = sin(buf[n.lhs]); break;
        case NodeKind::kCos: buf[i] = cos(buf[n.lhs]); break;
        case NodeKind::kExp: buf[i] = exp(buf[n.lhs]); break;
        case NodeKind::kLog:
          if (!(buf[n.lhs].v > 0.0)) domain_failure("log of nonpositive argument", phi, x);
          buf[i] = log(buf[n.lhs]);
          break;
        case NodeKind::kSqrt:
          if (!(buf[n.lhs].v > 0.0)) domain_failure("sqrt of nonpositive argument", phi, x);
          buf[i] = sqrt(buf[n.lhs]);
          break;
        case NodeKind::kTanh: buf[i] = tanh(buf[n.lhs]); break;
      }
    }
    return buf.back();
  }

 private:
  struct Tree {
    std::string source;
    int k = 0;
    int m = 0;
    bool uses_phi = false;
    std::vector<ExprNode> nodes;
  };

  [[noreturn]] void domain_failure(const char* what, std::span<const double> phi, std::span<const double> x) const {
    std::ostringstream os;
    os.precision(17);
    os << "domain error in '" << tree_->source << "': " << what << " at phi=(";
    for (std::size_t i = 0; i < phi.size(); ++i) os << (i ? "," : "") << phi[i];
    os << ") x=(";
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
    os << ")";
    throw DomainError(os.str());
  }

  std::string render(int idx) const {
    const ExprNode& n = tree_->nodes[idx];
    switch (n.kind) {
      case NodeKind::kConst: return expr_detail::format_double(n.value);
      case NodeKind::kVar:
        return n.var < tree_->k ? "phi" + std::to_string(n.var + 1) : "x" + std::to_string(n.var - tree_->k + 1);
      case NodeKind::kNeg: return "(-" + render(n.lhs) + ")";
      case NodeKind::kAdd: return "(" + render(n.lhs) + " + " + render(n.rhs) + ")";
      case NodeKind::kSub: return "(" + render(n.lhs) + " - " + render(n.rhs) + ")";
      case NodeKind::kMul: return "(" + render(n.lhs) + " * " + render(n.rhs) + ")";
      case NodeKind::kDiv: return "(" + render(n.lhs) + " / " + render(n.rhs) + ")";
      case NodeKind::kPow: return "(" + render(n.lhs) + "^(" + std::to_string(n.exponent) + "))";
      default: return std::string(expr_detail::function_name(n.kind)) + "(" + render(n.lhs) + ")";
    }
  }

  std::shared_ptr<const Tree> tree_;
};

}  // namespace qpl
