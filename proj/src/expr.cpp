#include "safees/expr.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

#include "safees/error.hpp"

namespace safees {

// ---------------------------------------------------------------------------
// DualVector

DualVector DualVector::variable(std::size_t n, std::size_t index, double value) {
  DualVector d(n, value);
  d.partials_.at(index) = 1.0;
  return d;
}

void DualVector::set_constant(double value) noexcept {
  value_ = value;
  std::fill(partials_.begin(), partials_.end(), 0.0);
}

void DualVector::set_variable(std::size_t index, double value) noexcept {
  set_constant(value);
  partials_[index] = 1.0;
}

DualVector& DualVector::apply(double f, double df) noexcept {
  value_ = f;
  for (double& p : partials_) p *= df;
  return *this;
}

DualVector& DualVector::operator+=(const DualVector& rhs) noexcept {
  value_ += rhs.value_;
  for (std::size_t i = 0; i < partials_.size(); ++i) partials_[i] += rhs.partials_[i];
  return *this;
}

DualVector& DualVector::operator-=(const DualVector& rhs) noexcept {
  value_ -= rhs.value_;
  for (std::size_t i = 0; i < partials_.size(); ++i) partials_[i] -= rhs.partials_[i];
  return *this;
}

DualVector& DualVector::operator*=(const DualVector& rhs) noexcept {
  // (uv)' = u'v + uv'
  for (std::size_t i = 0; i < partials_.size(); ++i)
    partials_[i] = partials_[i] * rhs.value_ + value_ * rhs.partials_[i];
  value_ *= rhs.value_;
  return *this;
}

DualVector& DualVector::operator/=(const DualVector& rhs) noexcept {
  // (u/v)' = (u' - (u/v) v') / v
  const double q = value_ / rhs.value_;
  for (std::size_t i = 0; i < partials_.size(); ++i)
    partials_[i] = (partials_[i] - q * rhs.partials_[i]) / rhs.value_;
  value_ = q;
  return *this;
}

DualVector& DualVector::negate() noexcept {
  value_ = -value_;
  for (double& p : partials_) p = -p;
  return *this;
}

std::string_view func_name(Func f) noexcept {
  switch (f) {
    case Func::Exp: return "exp";
    case Func::Sin: return "sin";
    case Func::Cos: return "cos";
    case Func::Sqrt: return "sqrt";
    case Func::Ln: return "ln";
    case Func::Abs: return "abs";
  }
  return "?";
}

std::pair<double, double> func_rule(Func f, double x) noexcept {
  switch (f) {
    case Func::Exp: {
      const double e = std::exp(x);
      return {e, e};
    }
    case Func::Sin: return {std::sin(x), std::cos(x)};
    case Func::Cos: return {std::cos(x), -std::sin(x)};
    case Func::Sqrt: {
      const double s = std::sqrt(x);
      return {s, 0.5 / s};
    }
    case Func::Ln: return {std::log(x), 1.0 / x};
    case Func::Abs: return {std::abs(x), x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0)};
  }
  return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
}

namespace {

DualVector apply_func(Func f, DualVector x) {
  const auto [v, d] = func_rule(f, x.value());
  x.apply(v, d);
  return x;
}

// x^k and k*x^(k-1) by repeated squaring; k may be negative.
std::pair<double, double> int_power_rule(double x, long k) noexcept {
  auto ipow = [](double base, unsigned long e) {
    double result = 1.0;
    while (e) {
      if (e & 1UL) result *= base;
      base *= base;
      e >>= 1UL;
    }
    return result;
  };
  if (k == 0) return {1.0, 0.0};
  const unsigned long mag = static_cast<unsigned long>(k < 0 ? -k : k);
  const double lower = ipow(x, mag - 1);  // x^(|k|-1)
  if (k > 0) return {lower * x, static_cast<double>(k) * lower};
  const double full = lower * x;          // x^|k|
  return {1.0 / full, static_cast<double>(k) / (full * x)};
}

}  // namespace

DualVector exp(DualVector x) { return apply_func(Func::Exp, std::move(x)); }
DualVector sin(DualVector x) { return apply_func(Func::Sin, std::move(x)); }
DualVector cos(DualVector x) { return apply_func(Func::Cos, std::move(x)); }
DualVector sqrt(DualVector x) { return apply_func(Func::Sqrt, std::move(x)); }
DualVector log(DualVector x) { return apply_func(Func::Ln, std::move(x)); }
DualVector abs(DualVector x) { return apply_func(Func::Abs, std::move(x)); }

DualVector pow(DualVector x, double exponent) {
  const double v = x.value();
  const double f = std::pow(v, exponent);
  x.apply(f, exponent * std::pow(v, exponent - 1.0));
  return x;
}

DualVector powi(const DualVector& x, long exponent) {
  DualVector out = x;
  const auto [f, d] = int_power_rule(x.value(), exponent);
  out.apply(f, d);
  return out;
}

// ---------------------------------------------------------------------------
// Parser

namespace {

using NodePtr = std::shared_ptr<const ExprNode>;

bool is_constant(const ExprNode& n) {
  if (n.kind == NodeKind::Variable) return false;
  if (n.lhs && !is_constant(*n.lhs)) return false;
  if (n.rhs && !is_constant(*n.rhs)) return false;
  return true;
}

class Parser {
 public:
  Parser(std::string_view text, std::size_t dim) : text_(text), dim_(dim) {}

  NodePtr parse() {
    skip_ws();
    if (at_end()) throw ParseError("empty expression", 0);
    NodePtr root = parse_expr();
    skip_ws();
    if (!at_end()) throw ParseError(std::string("unexpected character '") + peek() + "'", pos_);
    return root;
  }

 private:
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }

  void skip_ws() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  static NodePtr make_binary(NodeKind kind, NodePtr l, NodePtr r, std::size_t pos) {
    auto n = std::make_shared<ExprNode>();
    n->kind = kind;
    n->pos = pos;
    n->lhs = std::move(l);
    n->rhs = std::move(r);
    return n;
  }

  NodePtr parse_expr() {
    NodePtr lhs = parse_term();
    for (;;) {
      skip_ws();
      const std::size_t at = pos_;
      if (accept('+')) {
        lhs = make_binary(NodeKind::Add, lhs, parse_term(), at);
      } else if (accept('-')) {
        lhs = make_binary(NodeKind::Sub, lhs, parse_term(), at);
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_term() {
    NodePtr lhs = parse_unary();
    for (;;) {
      skip_ws();
      const std::size_t at = pos_;
      if (accept('*')) {
        lhs = make_binary(NodeKind::Mul, lhs, parse_unary(), at);
      } else if (accept('/')) {
        lhs = make_binary(NodeKind::Div, lhs, parse_unary(), at);
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_unary() {
    skip_ws();
    const std::size_t at = pos_;
    if (accept('-')) {
      auto n = std::make_shared<ExprNode>();
      n->kind = NodeKind::Neg;
      n->pos = at;
      n->lhs = parse_unary();
      return n;
    }
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_primary();
    for (;;) {
      skip_ws();
      const std::size_t at = pos_;
      if (!accept('^')) return base;
      skip_ws();
      const std::size_t exp_pos = pos_;
      bool negative = false;
      for (;;) {
        if (accept('-')) {
          negative = !negative;
        } else if (!accept('+')) {
          break;
        }
      }
      NodePtr exponent = parse_primary();
      if (!is_constant(*exponent)) throw ParseError("exponent must be a constant expression", exp_pos);
      double e = fold(*exponent);
      if (negative) e = -e;
      if (!std::isfinite(e)) throw ParseError("exponent is not finite", exp_pos);
      auto n = std::make_shared<ExprNode>();
      n->kind = NodeKind::Pow;
      n->pos = at;
      n->value = e;
      n->lhs = std::move(base);
      base = n;
    }
  }

  double fold(const ExprNode& node) const {
    switch (node.kind) {
      case NodeKind::Constant: return node.value;
      case NodeKind::Neg: return -fold(*node.lhs);
      case NodeKind::Add: return fold(*node.lhs) + fold(*node.rhs);
      case NodeKind::Sub: return fold(*node.lhs) - fold(*node.rhs);
      case NodeKind::Mul: return fold(*node.lhs) * fold(*node.rhs);
      case NodeKind::Div: {
        const double d = fold(*node.rhs);
        if (d == 0.0) throw DomainError("division by zero", node.pos);
        return fold(*node.lhs) / d;
      }
      case NodeKind::Pow: return std::pow(fold(*node.lhs), node.value);
      case NodeKind::Call: {
        const double x = fold(*node.lhs);
        if (node.func == Func::Ln && x <= 0.0) throw DomainError("ln of nonpositive value", node.pos);
        if (node.func == Func::Sqrt && x < 0.0) throw DomainError("sqrt of negative value", node.pos);
        return func_rule(node.func, x).first;
      }
      case NodeKind::Variable: break;
    }
    throw ParseError("exponent must be a constant expression", node.pos);
  }

  NodePtr parse_primary() {
    skip_ws();
    const std::size_t at = pos_;
    if (at_end()) throw ParseError("unexpected end of input", pos_);
    const char c = peek();
    if (c == '(') {
      ++pos_;
      NodePtr inner = parse_expr();
      if (!accept(')')) throw ParseError("expected ')'", pos_);
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t end = pos_;
      while (end < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[end])) || text_[end] == '_'))
        ++end;
      const std::string_view ident = text_.substr(pos_, end - pos_);
      pos_ = end;
      return parse_identifier(ident, at);
    }
    throw ParseError(std::string("unexpected character '") + c + "'", at);
  }

  NodePtr parse_number() {
    const std::size_t start = pos_;
    std::size_t p = pos_;
    auto digits = [&] {
      const std::size_t s = p;
      while (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) ++p;
      return p - s;
    };
    std::size_t mantissa = digits();
    if (p < text_.size() && text_[p] == '.') {
      ++p;
      mantissa += digits();
    }
    if (mantissa == 0) throw ParseError("malformed number", start);
    if (p < text_.size() && (text_[p] == 'e' || text_[p] == 'E')) {
      std::size_t q = p + 1;
      if (q < text_.size() && (text_[q] == '+' || text_[q] == '-')) ++q;
      if (q < text_.size() && std::isdigit(static_cast<unsigned char>(text_[q]))) {
        p = q;
        digits();
      } else {
        throw ParseError("malformed exponent in number", p);
      }
    }
    const std::string literal(text_.substr(start, p - start));
    const double value = std::strtod(literal.c_str(), nullptr);
    if (!std::isfinite(value)) throw ParseError("numeric literal out of range", start);
    pos_ = p;
    auto n = std::make_shared<ExprNode>();
    n->kind = NodeKind::Constant;
    n->value = value;
    n->pos = start;
    return n;
  }

  NodePtr parse_identifier(std::string_view ident, std::size_t at) {
    if (ident.size() > 1 && ident[0] == 'x') {
      bool all_digits = true;
      for (char ch : ident.substr(1)) all_digits = all_digits && std::isdigit(static_cast<unsigned char>(ch));
      if (all_digits) {
        if (ident.size() > 12) throw ParseError("variable index exceeds dimension", at);
        const unsigned long long index = std::strtoull(std::string(ident.substr(1)).c_str(), nullptr, 10);
        if (index == 0) throw ParseError("variable indices start at x1", at);
        if (index > dim_)
          throw ParseError("variable index exceeds dimension (" + std::string(ident) + ", n=" +
                               std::to_string(dim_) + ")",
                           at);
        auto n = std::make_shared<ExprNode>();
        n->kind = NodeKind::Variable;
        n->var = static_cast<std::size_t>(index - 1);
        n->pos = at;
        return n;
      }
    }
    if (ident == "pi") {
      auto n = std::make_shared<ExprNode>();
      n->kind = NodeKind::Constant;
      n->value = 3.14159265358979323846;
      n->pos = at;
      return n;
    }
    static constexpr std::array<Func, 6> kFuncs = {Func::Exp, Func::Sin, Func::Cos,
                                                   Func::Sqrt, Func::Ln, Func::Abs};
    for (Func f : kFuncs) {
      if (ident == func_name(f)) {
        if (!accept('(')) throw ParseError("expected '(' after " + std::string(ident), pos_);
        auto n = std::make_shared<ExprNode>();
        n->kind = NodeKind::Call;
        n->func = f;
        n->pos = at;
        n->lhs = parse_expr();
        if (!accept(')')) throw ParseError("expected ')'", pos_);
        return n;
      }
    }
    throw ParseError("unknown identifier '" + std::string(ident) + "'", at);
  }

  std::string_view text_;
  std::size_t dim_;
  std::size_t pos_ = 0;
};

void append_number(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  if (v < 0.0) {
    out += '(';
    out += buf;
    out += ')';
  } else {
    out += buf;
  }
}

void print_node(const ExprNode& n, std::string& out) {
  auto binary = [&](const char* op) {
    out += '(';
    print_node(*n.lhs, out);
    out += op;
    print_node(*n.rhs, out);
    out += ')';
  };
  switch (n.kind) {
    case NodeKind::Constant: append_number(out, n.value); break;
    case NodeKind::Variable: out += 'x' + std::to_string(n.var + 1); break;
    case NodeKind::Add: binary(" + "); break;
    case NodeKind::Sub: binary(" - "); break;
    case NodeKind::Mul: binary(" * "); break;
    case NodeKind::Div: binary(" / "); break;
    case NodeKind::Neg:
      out += "(-";
      print_node(*n.lhs, out);
      out += ')';
      break;
    case NodeKind::Pow:
      out += '(';
      print_node(*n.lhs, out);
      out += ")^(";
      append_number(out, n.value);
      out += ')';
      break;
    case NodeKind::Call:
      out += func_name(n.func);
      out += '(';
      print_node(*n.lhs, out);
      out += ')';
      break;
  }
}

std::size_t stack_depth(const ExprNode& n) {
  switch (n.kind) {
    case NodeKind::Constant:
    case NodeKind::Variable: return 1;
    case NodeKind::Neg:
    case NodeKind::Pow:
    case NodeKind::Call: return stack_depth(*n.lhs);
    default: return std::max(stack_depth(*n.lhs), stack_depth(*n.rhs) + 1);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Expr

Expr Expr::parse(std::string_view text, std::size_t dim) {
  if (dim == 0) throw ParseError("dimension must be positive", 0);
  Expr e;
  e.source_ = std::string(text);
  e.dim_ = dim;
  e.root_ = Parser(e.source_, dim).parse();
  e.compile(*e.root_);
  e.max_depth_ = stack_depth(*e.root_);
  return e;
}

void Expr::compile(const ExprNode& node) {
  Instr in{};
  in.pos = static_cast<std::uint32_t>(node.pos);
  switch (node.kind) {
    case NodeKind::Constant:
      in.op = Op::Const;
      in.value = node.value;
      break;
    case NodeKind::Variable:
      in.op = Op::Var;
      in.var = node.var;
      break;
    case NodeKind::Add:
    case NodeKind::Sub:
    case NodeKind::Mul:
    case NodeKind::Div:
      compile(*node.lhs);
      compile(*node.rhs);
      in.op = node.kind == NodeKind::Add   ? Op::Add
              : node.kind == NodeKind::Sub ? Op::Sub
              : node.kind == NodeKind::Mul ? Op::Mul
                                           : Op::Div;
      break;
    case NodeKind::Neg:
      compile(*node.lhs);
      in.op = Op::Neg;
      break;
    case NodeKind::Pow:
      compile(*node.lhs);
      in.value = node.value;
      if (node.value == std::trunc(node.value) && std::abs(node.value) <= 1e6) {
        in.op = Op::PowInt;
        in.ipow = static_cast<long>(node.value);
      } else {
        in.op = Op::PowReal;
      }
      break;
    case NodeKind::Call:
      compile(*node.lhs);
      in.op = Op::Call;
      in.func = node.func;
      break;
  }
  tape_.push_back(in);
}

void Expr::check_dim(std::span<const double> theta) const {
  if (theta.size() != dim_)
    throw Error("expression expects " + std::to_string(dim_) + " variables, got " +
                std::to_string(theta.size()));
}

namespace {

inline void check_call_domain(Func f, double x, std::size_t pos, bool differentiating) {
  if (f == Func::Ln && !(x > 0.0)) throw DomainError("ln of nonpositive value", pos);
  if (f == Func::Sqrt) {
    if (x < 0.0) throw DomainError("sqrt of negative value", pos);
    if (differentiating && x == 0.0) throw DomainError("sqrt is not differentiable at 0", pos);
  }
}

}  // namespace

double Expr::eval(std::span<const double> theta) const {
  check_dim(theta);
  constexpr std::size_t kInline = 64;
  std::array<double, kInline> inline_stack;
  std::vector<double> heap;
  double* st = inline_stack.data();
  if (max_depth_ > kInline) {
    heap.resize(max_depth_);
    st = heap.data();
  }
  std::size_t sp = 0;
  for (const Instr& in : tape_) {
    switch (in.op) {
      case Op::Const: st[sp++] = in.value; break;
      case Op::Var: st[sp++] = theta[in.var]; break;
      case Op::Add: --sp; st[sp - 1] += st[sp]; break;
      case Op::Sub: --sp; st[sp - 1] -= st[sp]; break;
      case Op::Mul: --sp; st[sp - 1] *= st[sp]; break;
      case Op::Div:
        --sp;
        if (st[sp] == 0.0) throw DomainError("division by zero", in.pos);
        st[sp - 1] /= st[sp];
        break;
      case Op::Neg: st[sp - 1] = -st[sp - 1]; break;
      case Op::PowInt:
        if (in.ipow < 0 && st[sp - 1] == 0.0) throw DomainError("division by zero in negative power", in.pos);
        st[sp - 1] = int_power_rule(st[sp - 1], in.ipow).first;
        break;
      case Op::PowReal:
        if (!(st[sp - 1] > 0.0)) throw DomainError("non-integer power of nonpositive base", in.pos);
        st[sp - 1] = std::pow(st[sp - 1], in.value);
        break;
      case Op::Call:
        check_call_domain(in.func, st[sp - 1], in.pos, false);
        st[sp - 1] = func_rule(in.func, st[sp - 1]).first;
        break;
    }
  }
  return st[0];
}

double Expr::value_and_grad(std::span<const double> theta, std::span<double> grad_out) const {
  check_dim(theta);
  if (grad_out.size() != dim_) throw Error("gradient buffer has wrong length");
  std::vector<DualVector> st(max_depth_, DualVector(dim_));
  std::size_t sp = 0;
  for (const Instr& in : tape_) {
    switch (in.op) {
      case Op::Const: st[sp++].set_constant(in.value); break;
      case Op::Var: st[sp++].set_variable(in.var, theta[in.var]); break;
      case Op::Add: --sp; st[sp - 1] += st[sp]; break;
      case Op::Sub: --sp; st[sp - 1] -= st[sp]; break;
      case Op::Mul: --sp; st[sp - 1] *= st[sp]; break;
      case Op::Div:
        --sp;
        if (st[sp].value() == 0.0) throw DomainError("division by zero", in.pos);
        st[sp - 1] /= st[sp];
        break;
      case Op::Neg: st[sp - 1].negate(); break;
      case Op::PowInt: {
        const double v = st[sp - 1].value();
        if (in.ipow < 0 && v == 0.0) throw DomainError("division by zero in negative power", in.pos);
        const auto [f, d] = int_power_rule(v, in.ipow);
        st[sp - 1].apply(f, d);
        break;
      }
      case Op::PowReal: {
        const double v = st[sp - 1].value();
        if (!(v > 0.0)) throw DomainError("non-integer power of nonpositive base", in.pos);
        st[sp - 1].apply(std::pow(v, in.value), in.value * std::pow(v, in.value - 1.0));
        break;
      }
      case Op::Call: {
        const double v = st[sp - 1].value();
        check_call_domain(in.func, v, in.pos, true);
        const auto [f, d] = func_rule(in.func, v);
        st[sp - 1].apply(f, d);
        break;
      }
    }
  }
  const auto partials = st[0].partials();
  std::copy(partials.begin(), partials.end(), grad_out.begin());
  return st[0].value();
}

std::vector<double> Expr::grad(std::span<const double> theta) const {
  std::vector<double> g(dim_);
  value_and_grad(theta, g);
  return g;
}

std::vector<double> Expr::fd_grad(std::span<const double> theta, double step) const {
  check_dim(theta);
  if (!(step > 0.0)) throw Error("finite-difference step must be positive");
  std::vector<double> probe(theta.begin(), theta.end());
  std::vector<double> g(dim_);
  for (std::size_t i = 0; i < dim_; ++i) {
    probe[i] = theta[i] + step;
    const double up = eval(probe);
    probe[i] = theta[i] - step;
    const double down = eval(probe);
    probe[i] = theta[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

std::string Expr::to_string() const {
  std::string out;
  print_node(*root_, out);
  return out;
}

MapPair MapPair::parse(std::string_view j_text, std::string_view h_text, std::size_t dim) {
  return MapPair{Expr::parse(j_text, dim), Expr::parse(h_text, dim)};
}

}  // namespace safees
