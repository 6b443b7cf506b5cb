#pragma once

// Scalar expressions over theta in R^n with forward-mode gradients.
//
// Grammar (whitespace insignificant):
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' ['-' | '+'] primary)*      left-associative
//   primary := number | 'x'<index> | 'pi' | func '(' expr ')' | '(' expr ')'
//   func    := exp | sin | cos | sqrt | ln | abs
// Exponents must be constant. Integer exponents are expanded into products.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace safees {

/// Value plus gradient with respect to n independent variables.
class DualVector {
 public:
  DualVector() = default;
  explicit DualVector(std::size_t n, double value = 0.0) : value_(value), partials_(n, 0.0) {}

  static DualVector variable(std::size_t n, std::size_t index, double value);

  double value() const noexcept { return value_; }
  std::span<const double> partials() const noexcept { return partials_; }
  std::size_t size() const noexcept { return partials_.size(); }

  void set_constant(double value) noexcept;
  void set_variable(std::size_t index, double value) noexcept;

  /// Replace the value by f and scale every partial by df (chain rule for a
  /// unary map with f = g(value), df = g'(value)).
  DualVector& apply(double f, double df) noexcept;

  DualVector& operator+=(const DualVector& rhs) noexcept;
  DualVector& operator-=(const DualVector& rhs) noexcept;
  DualVector& operator*=(const DualVector& rhs) noexcept;
  DualVector& operator/=(const DualVector& rhs) noexcept;
  DualVector& negate() noexcept;

  friend DualVector operator+(DualVector a, const DualVector& b) { return a += b; }
  friend DualVector operator-(DualVector a, const DualVector& b) { return a -= b; }
  friend DualVector operator*(DualVector a, const DualVector& b) { return a *= b; }
  friend DualVector operator/(DualVector a, const DualVector& b) { return a /= b; }
  friend DualVector operator-(DualVector a) { return a.negate(); }

 private:
  double value_ = 0.0;
  std::vector<double> partials_;
};

enum class Func : std::uint8_t { Exp, Sin, Cos, Sqrt, Ln, Abs };

std::string_view func_name(Func f) noexcept;

/// (g(x), g'(x)) for the supported unary functions. abs uses the subgradient 0 at 0.
std::pair<double, double> func_rule(Func f, double x) noexcept;

DualVector exp(DualVector x);
DualVector sin(DualVector x);
DualVector cos(DualVector x);
DualVector sqrt(DualVector x);
DualVector log(DualVector x);
DualVector abs(DualVector x);
DualVector pow(DualVector x, double exponent);
DualVector powi(const DualVector& x, long exponent);

enum class NodeKind : std::uint8_t { Constant, Variable, Add, Sub, Mul, Div, Pow, Neg, Call };

struct ExprNode {
  NodeKind kind = NodeKind::Constant;
  double value = 0.0;       // Constant: literal; Pow: exponent
  std::size_t var = 0;      // Variable: 0-based index
  Func func = Func::Exp;    // Call
  std::size_t pos = 0;      // source offset
  std::shared_ptr<const ExprNode> lhs;
  std::shared_ptr<const ExprNode> rhs;
};

/// Immutable parsed expression. Copies share the tree; evaluation is reentrant.
class Expr {
 public:
  static Expr parse(std::string_view text, std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  const ExprNode& root() const noexcept { return *root_; }
  const std::string& source() const noexcept { return source_; }

  double eval(std::span<const double> theta) const;
  std::vector<double> grad(std::span<const double> theta) const;
  /// Value and gradient in one pass; `grad_out` must have length dim().
  double value_and_grad(std::span<const double> theta, std::span<double> grad_out) const;
  std::vector<double> fd_grad(std::span<const double> theta, double step) const;

  /// Fully parenthesized text that parses back to an equivalent expression.
  std::string to_string() const;

 private:
  enum class Op : std::uint8_t {
    Const, Var, Add, Sub, Mul, Div, Neg, PowInt, PowReal, Call
  };
  struct Instr {
    Op op;
    Func func;
    std::uint32_t pos;
    long ipow;
    double value;
    std::size_t var;
  };

  Expr() = default;
  void compile(const ExprNode& node);
  void check_dim(std::span<const double> theta) const;

  std::shared_ptr<const ExprNode> root_;
  std::string source_;
  std::size_t dim_ = 0;
  std::vector<Instr> tape_;
  std::size_t max_depth_ = 0;
};

/// Objective J and barrier h over the same parameter space.
struct MapPair {
  Expr j;
  Expr h;

  static MapPair parse(std::string_view j_text, std::string_view h_text, std::size_t dim);
  std::size_t dim() const noexcept { return j.dim(); }
};

}  // namespace safees
