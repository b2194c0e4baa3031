#include "qgle/expr.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>

#include "qgle/error.hpp"

namespace qgle {

struct Expr::Node {
  Op op = Op::kConst;
  double value = 0.0;
  int index = 0;
  Expr a;
  Expr b;
};

Expr::Expr() = default;
Expr::Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

Expr Expr::make(Op op, Expr a, Expr b) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return Expr(std::move(n));
}

Expr Expr::constant(double value) {
  auto n = std::make_shared<Node>();
  n->op = Op::kConst;
  n->value = value;
  return Expr(std::move(n));
}

Expr Expr::pi() {
  auto n = std::make_shared<Node>();
  n->op = Op::kPi;
  n->value = std::numbers::pi;
  return Expr(std::move(n));
}

Expr Expr::var(int index) {
  auto n = std::make_shared<Node>();
  n->op = Op::kVar;
  n->index = index;
  return Expr(std::move(n));
}

Expr::Op Expr::op() const { return node_ ? node_->op : Op::kConst; }
double Expr::value() const { return node_ ? node_->value : 0.0; }
int Expr::var_index() const { return node_ ? node_->index : 0; }
const Expr& Expr::lhs() const { return node_->a; }
const Expr& Expr::rhs() const { return node_->b; }

namespace {

bool is_literal(const Expr& e, double v) {
  return e.op() == Expr::Op::kConst && e.value() == v;
}

}  // namespace

// The operators fold literal constants so that derivatives stay readable.
Expr operator+(const Expr& a, const Expr& b) {
  if (a.op() == Expr::Op::kConst && b.op() == Expr::Op::kConst)
    return Expr::constant(a.value() + b.value());
  if (is_literal(a, 0.0)) return b;
  if (is_literal(b, 0.0)) return a;
  return Expr::make(Expr::Op::kAdd, a, b);
}

Expr operator-(const Expr& a, const Expr& b) {
  if (a.op() == Expr::Op::kConst && b.op() == Expr::Op::kConst)
    return Expr::constant(a.value() - b.value());
  if (is_literal(b, 0.0)) return a;
  if (is_literal(a, 0.0)) return -b;
  return Expr::make(Expr::Op::kSub, a, b);
}

Expr operator*(const Expr& a, const Expr& b) {
  if (a.op() == Expr::Op::kConst && b.op() == Expr::Op::kConst)
    return Expr::constant(a.value() * b.value());
  if (is_literal(a, 0.0) || is_literal(b, 0.0)) return Expr::constant(0.0);
  if (is_literal(a, 1.0)) return b;
  if (is_literal(b, 1.0)) return a;
  return Expr::make(Expr::Op::kMul, a, b);
}

Expr operator/(const Expr& a, const Expr& b) {
  if (is_literal(a, 0.0)) return Expr::constant(0.0);
  if (is_literal(b, 1.0)) return a;
  return Expr::make(Expr::Op::kDiv, a, b);
}

Expr operator-(const Expr& a) {
  if (a.op() == Expr::Op::kConst) return Expr::constant(-a.value());
  if (a.op() == Expr::Op::kNeg) return a.lhs();
  return Expr::make(Expr::Op::kNeg, a);
}

Expr sin(const Expr& a) { return Expr::make(Expr::Op::kSin, a); }
Expr cos(const Expr& a) { return Expr::make(Expr::Op::kCos, a); }
Expr exp(const Expr& a) { return Expr::make(Expr::Op::kExp, a); }

double Expr::eval(std::span<const double> q) const {
  switch (op()) {
    case Op::kConst:
    case Op::kPi:
      return value();
    case Op::kVar:
      return q[static_cast<std::size_t>(node_->index)];
    case Op::kNeg:
      return -node_->a.eval(q);
    case Op::kAdd:
      return node_->a.eval(q) + node_->b.eval(q);
    case Op::kSub:
      return node_->a.eval(q) - node_->b.eval(q);
    case Op::kMul:
      return node_->a.eval(q) * node_->b.eval(q);
    case Op::kDiv:
      return node_->a.eval(q) / node_->b.eval(q);
    case Op::kSin:
      return std::sin(node_->a.eval(q));
    case Op::kCos:
      return std::cos(node_->a.eval(q));
    case Op::kExp:
      return std::exp(node_->a.eval(q));
  }
  return 0.0;
}

Expr Expr::derivative(int index) const {
  switch (op()) {
    case Op::kConst:
    case Op::kPi:
      return constant(0.0);
    case Op::kVar:
      return constant(node_->index == index ? 1.0 : 0.0);
    case Op::kNeg:
      return -node_->a.derivative(index);
    case Op::kAdd:
      return node_->a.derivative(index) + node_->b.derivative(index);
    case Op::kSub:
      return node_->a.derivative(index) - node_->b.derivative(index);
    case Op::kMul: {
      const Expr& a = node_->a;
      const Expr& b = node_->b;
      return a.derivative(index) * b + a * b.derivative(index);
    }
    case Op::kDiv: {
      const Expr& a = node_->a;
      const Expr& b = node_->b;
      return (a.derivative(index) * b - a * b.derivative(index)) / (b * b);
    }
    case Op::kSin:
      return cos(node_->a) * node_->a.derivative(index);
    case Op::kCos:
      return -(sin(node_->a) * node_->a.derivative(index));
    case Op::kExp:
      return exp(node_->a) * node_->a.derivative(index);
  }
  return constant(0.0);
}

bool Expr::is_constant() const {
  switch (op()) {
    case Op::kConst:
    case Op::kPi:
      return true;
    case Op::kVar:
      return false;
    case Op::kNeg:
    case Op::kSin:
    case Op::kCos:
    case Op::kExp:
      return node_->a.is_constant();
    default:
      return node_->a.is_constant() && node_->b.is_constant();
  }
}

std::optional<double> Expr::constant_value() const {
  if (!is_constant()) return std::nullopt;
  return eval({});
}

namespace {

std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  return std::string(buf.data(), ptr);
}

}  // namespace

std::string Expr::to_string() const {
  switch (op()) {
    case Op::kConst: {
      const double v = value();
      return v < 0 ? "(" + format_number(v) + ")" : format_number(v);
    }
    case Op::kPi:
      return "pi";
    case Op::kVar:
      return "q" + std::to_string(node_->index + 1);
    case Op::kNeg:
      return "(-" + node_->a.to_string() + ")";
    case Op::kAdd:
      return "(" + node_->a.to_string() + "+" + node_->b.to_string() + ")";
    case Op::kSub:
      return "(" + node_->a.to_string() + "-" + node_->b.to_string() + ")";
    case Op::kMul:
      return "(" + node_->a.to_string() + "*" + node_->b.to_string() + ")";
    case Op::kDiv:
      return "(" + node_->a.to_string() + "/" + node_->b.to_string() + ")";
    case Op::kSin:
      return "sin(" + node_->a.to_string() + ")";
    case Op::kCos:
      return "cos(" + node_->a.to_string() + ")";
    case Op::kExp:
      return "exp(" + node_->a.to_string() + ")";
  }
  return "0";
}

// ---------------------------------------------------------------------------
// Parser

class ExprParser {
 public:
  ExprParser(std::string_view text, int n_vars) : text_(text), n_vars_(n_vars) {}

  Expr parse() {
    Expr e = expression();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected character '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("expression: " + msg + " at column " + std::to_string(pos_ + 1) + " in \"" +
                         std::string(text_) + "\"",
                     1, pos_ + 1);
  }

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expr expression() {
    Expr e = term();
    for (;;) {
      if (accept('+')) {
        e = Expr::make(Expr::Op::kAdd, e, term());
      } else if (accept('-')) {
        e = Expr::make(Expr::Op::kSub, e, term());
      } else {
        return e;
      }
    }
  }

  Expr term() {
    Expr e = unary();
    for (;;) {
      if (accept('*')) {
        e = Expr::make(Expr::Op::kMul, e, unary());
      } else if (accept('/')) {
        e = Expr::make(Expr::Op::kDiv, e, unary());
      } else {
        return e;
      }
    }
  }

  Expr unary() {
    if (accept('-')) return Expr::make(Expr::Op::kNeg, unary());
    if (accept('+')) return unary();
    return primary();
  }

  Expr primary() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = expression();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
      const std::string_view word = text_.substr(start, pos_ - start);
      if (word == "pi") return Expr::pi();
      if (word == "sin" || word == "cos" || word == "exp") {
        if (!accept('(')) fail("expected '(' after " + std::string(word));
        Expr arg = expression();
        if (!accept(')')) fail("expected ')'");
        if (word == "sin") return Expr::make(Expr::Op::kSin, arg);
        if (word == "cos") return Expr::make(Expr::Op::kCos, arg);
        return Expr::make(Expr::Op::kExp, arg);
      }
      if (word.size() >= 2 && word[0] == 'q') {
        std::string_view digits = word.substr(1);
        if (!digits.empty() && digits[0] == '_') digits.remove_prefix(1);
        int idx = 0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), idx);
        if (ec == std::errc() && ptr == digits.data() + digits.size() && !digits.empty()) {
          if (idx < 1 || idx > n_vars_) {
            pos_ = start;
            fail("variable " + std::string(word) + " out of range (dimension " +
                 std::to_string(n_vars_) + ")");
          }
          return Expr::var(idx - 1);
        }
      }
      pos_ = start;
      fail("unknown identifier '" + std::string(word) + "'");
    }
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  Expr number() {
    const std::size_t start = pos_;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), v);
    if (ec != std::errc()) fail("malformed number");
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    if (pos_ == start) fail("malformed number");
    return Expr::constant(v);
  }

  std::string_view text_;
  int n_vars_;
  std::size_t pos_ = 0;
};

Expr Expr::parse(std::string_view text, int n_vars) { return ExprParser(text, n_vars).parse(); }

// ---------------------------------------------------------------------------
// Interval screening

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double mul_bound(double a, double b) {
  if (a == 0.0 || b == 0.0) return 0.0;
  return a * b;
}

// Outward rounding by one ulp plus an optional absolute slack.
Interval widen(Interval x, double slack = 0.0) {
  return {std::nextafter(x.lo - slack, -kInf), std::nextafter(x.hi + slack, kInf)};
}

Interval imul(Interval a, Interval b) {
  const double c[4] = {mul_bound(a.lo, b.lo), mul_bound(a.lo, b.hi), mul_bound(a.hi, b.lo),
                       mul_bound(a.hi, b.hi)};
  return widen({*std::min_element(c, c + 4), *std::max_element(c, c + 4)});
}

Interval icos(Interval x) {
  if (!std::isfinite(x.lo) || !std::isfinite(x.hi) || x.hi - x.lo >= 2 * std::numbers::pi)
    return {-1.0, 1.0};
  double lo = std::min(std::cos(x.lo), std::cos(x.hi));
  double hi = std::max(std::cos(x.lo), std::cos(x.hi));
  // maxima at 2k*pi, minima at (2k+1)*pi
  const double k_max = std::ceil(x.lo / (2 * std::numbers::pi));
  if (2 * std::numbers::pi * k_max <= x.hi) hi = 1.0;
  const double k_min = std::ceil((x.lo - std::numbers::pi) / (2 * std::numbers::pi));
  if (std::numbers::pi + 2 * std::numbers::pi * k_min <= x.hi) lo = -1.0;
  // libm error plus the rounding of the argument itself
  const double slack = 4 * std::numeric_limits<double>::epsilon() *
                       std::max({1.0, std::abs(x.lo), std::abs(x.hi)});
  const Interval w = widen({lo, hi}, slack);
  return {std::max(w.lo, -1.0), std::min(w.hi, 1.0)};
}

Interval interval_rec(const Expr& e, std::span<const Interval> box, bool strict) {
  using Op = Expr::Op;
  switch (e.op()) {
    case Op::kConst:
      return {e.value(), e.value()};
    case Op::kPi:
      return {std::numbers::pi, std::nextafter(std::numbers::pi, kInf)};
    case Op::kVar:
      return box[static_cast<std::size_t>(e.var_index())];
    case Op::kNeg: {
      const Interval a = interval_rec(e.lhs(), box, strict);
      return {-a.hi, -a.lo};
    }
    case Op::kAdd: {
      const Interval a = interval_rec(e.lhs(), box, strict);
      const Interval b = interval_rec(e.rhs(), box, strict);
      return widen({a.lo + b.lo, a.hi + b.hi});
    }
    case Op::kSub: {
      const Interval a = interval_rec(e.lhs(), box, strict);
      const Interval b = interval_rec(e.rhs(), box, strict);
      return widen({a.lo - b.hi, a.hi - b.lo});
    }
    case Op::kMul: {
      const Interval a = interval_rec(e.lhs(), box, strict);
      if (e.lhs().to_string() == e.rhs().to_string()) {
        // x*x is non-negative even when x straddles zero
        const double m = std::max(mul_bound(a.lo, a.lo), mul_bound(a.hi, a.hi));
        if (a.lo <= 0.0 && a.hi >= 0.0) return widen({0.0, m});
        return widen({std::min(mul_bound(a.lo, a.lo), mul_bound(a.hi, a.hi)), m});
      }
      return imul(a, interval_rec(e.rhs(), box, strict));
    }
    case Op::kDiv: {
      const Interval a = interval_rec(e.lhs(), box, strict);
      const Interval b = interval_rec(e.rhs(), box, strict);
      if (b.lo <= 0.0 && b.hi >= 0.0) {
        if (strict)
          throw Error(ErrorKind::kValidation, "denominator of '" + e.to_string() +
                                                  "' may vanish on the domain");
        return {-kInf, kInf};
      }
      return imul(a, {1.0 / b.hi, 1.0 / b.lo});
    }
    case Op::kSin: {
      const Interval a = interval_rec(e.lhs(), box, strict);
      return icos({a.lo - std::numbers::pi / 2, a.hi - std::numbers::pi / 2});
    }
    case Op::kCos:
      return icos(interval_rec(e.lhs(), box, strict));
    case Op::kExp: {
      const Interval a = interval_rec(e.lhs(), box, strict);
      const Interval w = widen({std::exp(a.lo), std::exp(a.hi)}, 0.0);
      return {std::max(w.lo, 0.0), w.hi};
    }
  }
  return {0.0, 0.0};
}

struct Affine {
  double offset = 0.0;
  std::vector<double> coef;  // sparse enough for our sizes

  bool is_const() const {
    return std::all_of(coef.begin(), coef.end(), [](double c) { return c == 0.0; });
  }
  void resize(std::size_t n) {
    if (coef.size() < n) coef.resize(n, 0.0);
  }
};

std::optional<Affine> affine(const Expr& e) {
  using Op = Expr::Op;
  switch (e.op()) {
    case Op::kConst:
    case Op::kPi:
      return Affine{e.value(), {}};
    case Op::kVar: {
      Affine a;
      a.resize(static_cast<std::size_t>(e.var_index()) + 1);
      a.coef[static_cast<std::size_t>(e.var_index())] = 1.0;
      return a;
    }
    case Op::kNeg: {
      auto a = affine(e.lhs());
      if (!a) return std::nullopt;
      a->offset = -a->offset;
      for (double& c : a->coef) c = -c;
      return a;
    }
    case Op::kAdd:
    case Op::kSub: {
      auto a = affine(e.lhs());
      auto b = affine(e.rhs());
      if (!a || !b) return std::nullopt;
      const double sign = e.op() == Op::kAdd ? 1.0 : -1.0;
      a->resize(b->coef.size());
      a->offset += sign * b->offset;
      for (std::size_t i = 0; i < b->coef.size(); ++i) a->coef[i] += sign * b->coef[i];
      return a;
    }
    case Op::kMul: {
      auto a = affine(e.lhs());
      auto b = affine(e.rhs());
      if (!a || !b) return std::nullopt;
      if (!a->is_const() && !b->is_const()) return std::nullopt;
      if (!a->is_const()) std::swap(a, b);
      const double s = a->offset;
      b->offset *= s;
      for (double& c : b->coef) c *= s;
      return b;
    }
    case Op::kDiv: {
      auto a = affine(e.lhs());
      auto b = affine(e.rhs());
      if (!a || !b || !b->is_const() || b->offset == 0.0) return std::nullopt;
      a->offset /= b->offset;
      for (double& c : a->coef) c /= b->offset;
      return a;
    }
    default:
      if (auto v = e.constant_value()) return Affine{*v, {}};
      return std::nullopt;
  }
}

void periodic_rec(const Expr& e) {
  using Op = Expr::Op;
  switch (e.op()) {
    case Op::kConst:
    case Op::kPi:
      return;
    case Op::kVar:
      throw Error(ErrorKind::kValidation,
                  "q" + std::to_string(e.var_index() + 1) +
                      " appears outside sin/cos(2*pi*k*q); expression is not periodic on the torus");
    case Op::kSin:
    case Op::kCos: {
      if (e.lhs().is_constant()) return;
      auto a = affine(e.lhs());
      if (!a)
        throw Error(ErrorKind::kValidation,
                    "trigonometric argument '" + e.lhs().to_string() + "' is not affine in q");
      for (double c : a->coef) {
        const double k = c / (2 * std::numbers::pi);
        if (std::abs(k - std::round(k)) > 1e-9)
          throw Error(ErrorKind::kValidation, "trigonometric argument '" + e.lhs().to_string() +
                                                  "' is not an integer multiple of 2*pi*q");
      }
      return;
    }
    case Op::kNeg:
    case Op::kExp:
      periodic_rec(e.lhs());
      return;
    default:
      periodic_rec(e.lhs());
      periodic_rec(e.rhs());
  }
}

}  // namespace

Interval eval_interval(const Expr& e, std::span<const Interval> box) {
  return interval_rec(e, box, false);
}

void screen_division(const Expr& e, std::span<const Interval> box) {
  (void)interval_rec(e, box, true);
}

void screen_periodicity(const Expr& e) { periodic_rec(e); }

void validate_expr(const Expr& e, int n_vars, bool torus) {
  std::vector<Interval> box(static_cast<std::size_t>(n_vars),
                            torus ? Interval{0.0, 1.0} : Interval{-kInf, kInf});
  if (torus) screen_periodicity(e);
  screen_division(e, box);
}

}  // namespace qgle
