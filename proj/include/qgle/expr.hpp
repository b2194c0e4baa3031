#pragma once

// Closed expression family for position-dependent coefficients and potentials:
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | primary
//   primary := number | 'pi' | 'q' index | ('sin'|'cos'|'exp') '(' expr ')'
//            | '(' expr ')'
//
// Variables are q1..qn (1-based, `q_1` is accepted as well). Every member of
// the family is smooth wherever its denominators are non-zero, which
// `validate_expr` screens by interval arithmetic.

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qgle {

class Expr {
 public:
  enum class Op { kConst, kPi, kVar, kNeg, kAdd, kSub, kMul, kDiv, kSin, kCos, kExp };

  Expr();  // constant zero
  static Expr constant(double value);
  static Expr pi();
  static Expr var(int index);  // 0-based

  /// Parses `text`; variables must satisfy index < n_vars. Throws ParseError
  /// with a 1-based column inside `text`.
  static Expr parse(std::string_view text, int n_vars);

  double eval(std::span<const double> q) const;

  /// Symbolic partial derivative with respect to q_index (0-based).
  Expr derivative(int index) const;

  std::string to_string() const;

  bool is_constant() const;  // no variables anywhere in the tree
  std::optional<double> constant_value() const;

  Op op() const;
  double value() const;  // kConst only
  int var_index() const;  // kVar only
  const Expr& lhs() const;
  const Expr& rhs() const;

  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend Expr operator/(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a);
  friend Expr sin(const Expr& a);
  friend Expr cos(const Expr& a);
  friend Expr exp(const Expr& a);

 private:
  friend class ExprParser;
  struct Node;
  explicit Expr(std::shared_ptr<const Node> node);
  static Expr make(Op op, Expr a, Expr b = Expr());
  std::shared_ptr<const Node> node_;
};

struct Interval {
  double lo;
  double hi;
};

/// Interval enclosure of the expression over the box `box`.
Interval eval_interval(const Expr& e, std::span<const Interval> box);

/// Throws kValidation if some denominator's enclosure on `box` contains zero.
void screen_division(const Expr& e, std::span<const Interval> box);

/// Torus screening: every q_i must occur only inside sin/cos whose argument is
/// affine in q with coefficients that are integer multiples of 2*pi. Throws
/// kValidation otherwise.
void screen_periodicity(const Expr& e);

/// Domain-aware validation used by the config loader: torus expressions are
/// screened on [0,1]^n plus periodicity, euclidean ones on R^n.
void validate_expr(const Expr& e, int n_vars, bool torus);

}  // namespace qgle
