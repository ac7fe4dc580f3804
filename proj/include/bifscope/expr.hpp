#pragma once

// Rational expressions in the dynamical variable z and the parameter lambda.
//
// Grammar (whitespace ignored):
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | '+' unary | power
//   power   := primary ('^' exponent)?          right associative
//   exponent:= '-'? power                       must fold to an integer >= 0
//   primary := number | number 'i' | 'z' | 'lambda' | 'c' | 'λ' | '(' expr ')'
//
// Numbers are decimal with optional fraction and exponent (1.5, 2e-3). An
// imaginary literal is a number immediately followed by 'i'. There is no
// implicit multiplication.

#include <cctype>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdio>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "bifscope/error.hpp"
#include "bifscope/jet.hpp"

namespace bifscope {

enum class Var { Z, Lambda };
enum class BinOp { Add, Sub, Mul, Div };

struct ExprNode;
using Expr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  struct Const {
    cd value;
  };
  struct Variable {
    Var var;
  };
  struct Neg {
    Expr arg;
  };
  struct Binary {
    BinOp op;
    Expr lhs, rhs;
  };
  struct Pow {
    Expr base;
    unsigned exponent;
  };
  std::variant<Const, Variable, Neg, Binary, Pow> node;
};

namespace ex {
inline Expr constant(cd v) { return std::make_shared<const ExprNode>(ExprNode{ExprNode::Const{v}}); }
inline Expr var(Var v) { return std::make_shared<const ExprNode>(ExprNode{ExprNode::Variable{v}}); }
inline Expr z() { return var(Var::Z); }
inline Expr lambda() { return var(Var::Lambda); }
inline Expr neg(Expr a) { return std::make_shared<const ExprNode>(ExprNode{ExprNode::Neg{std::move(a)}}); }
inline Expr binary(BinOp op, Expr a, Expr b) {
  return std::make_shared<const ExprNode>(ExprNode{ExprNode::Binary{op, std::move(a), std::move(b)}});
}
inline Expr add(Expr a, Expr b) { return binary(BinOp::Add, std::move(a), std::move(b)); }
inline Expr sub(Expr a, Expr b) { return binary(BinOp::Sub, std::move(a), std::move(b)); }
inline Expr mul(Expr a, Expr b) { return binary(BinOp::Mul, std::move(a), std::move(b)); }
inline Expr div(Expr a, Expr b) { return binary(BinOp::Div, std::move(a), std::move(b)); }
inline Expr pow(Expr a, unsigned n) { return std::make_shared<const ExprNode>(ExprNode{ExprNode::Pow{std::move(a), n}}); }
}  // namespace ex

/// Structural equality (constants compared bitwise).
inline bool structurally_equal(const Expr& a, const Expr& b) {
  if (a == b) return true;
  if (!a || !b || a->node.index() != b->node.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b->node);
        if constexpr (std::is_same_v<T, ExprNode::Const>) {
          return x.value.real() == y.value.real() && x.value.imag() == y.value.imag();
        } else if constexpr (std::is_same_v<T, ExprNode::Variable>) {
          return x.var == y.var;
        } else if constexpr (std::is_same_v<T, ExprNode::Neg>) {
          return structurally_equal(x.arg, y.arg);
        } else if constexpr (std::is_same_v<T, ExprNode::Binary>) {
          return x.op == y.op && structurally_equal(x.lhs, y.lhs) && structurally_equal(x.rhs, y.rhs);
        } else {
          return x.exponent == y.exponent && structurally_equal(x.base, y.base);
        }
      },
      a->node);
}

inline bool depends_on(const Expr& e, Var v) {
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ExprNode::Const>) {
          return false;
        } else if constexpr (std::is_same_v<T, ExprNode::Variable>) {
          return x.var == v;
        } else if constexpr (std::is_same_v<T, ExprNode::Neg>) {
          return depends_on(x.arg, v);
        } else if constexpr (std::is_same_v<T, ExprNode::Binary>) {
          return depends_on(x.lhs, v) || depends_on(x.rhs, v);
        } else {
          return depends_on(x.base, v);
        }
      },
      e->node);
}

// ---------------------------------------------------------------------------
// Parser

namespace detail {

class Parser {
 public:
  explicit Parser(std::string_view src) : s_(src) {}

  Expr parse_all() {
    Expr e = parse_expr();
    skip_ws();
    if (pos_ != s_.size()) throw SyntaxError(pos_, "operator or end of input");
    return e;
  }

 private:
  static constexpr unsigned kMaxExponent = 4096;

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool peek(char c) {
    skip_ws();
    return pos_ < s_.size() && s_[pos_] == c;
  }
  bool accept(char c) {
    if (peek(c)) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expr parse_expr() {
    Expr lhs = parse_term();
    for (;;) {
      if (accept('+')) {
        lhs = ex::add(lhs, parse_term());
      } else if (accept('-')) {
        lhs = ex::sub(lhs, parse_term());
      } else {
        return lhs;
      }
    }
  }

  Expr parse_term() {
    Expr lhs = parse_unary();
    for (;;) {
      if (accept('*')) {
        lhs = ex::mul(lhs, parse_unary());
      } else if (accept('/')) {
        lhs = ex::div(lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  Expr parse_unary() {
    if (accept('-')) return ex::neg(parse_unary());
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_primary();
    if (!accept('^')) return base;
    skip_ws();
    const std::size_t at = pos_;
    Expr exponent = accept('-') ? ex::neg(parse_power()) : parse_power();
    return ex::pow(base, fold_exponent(exponent, at));
  }

  unsigned fold_exponent(const Expr& e, std::size_t at) {
    if (depends_on(e, Var::Z) || depends_on(e, Var::Lambda)) {
      throw SyntaxError(at, "constant nonnegative integer exponent", ErrorKind::NonIntegerExponent);
    }
    cd v = fold(e, at);
    const double r = v.real();
    if (v.imag() != 0.0 || !(r >= 0.0) || r != std::floor(r) || r > kMaxExponent) {
      throw SyntaxError(at, "constant nonnegative integer exponent (at most 4096)", ErrorKind::NonIntegerExponent);
    }
    return static_cast<unsigned>(r);
  }

  static cd fold(const Expr& e, std::size_t at) {
    return std::visit(
        [&](const auto& x) -> cd {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, ExprNode::Const>) {
            return x.value;
          } else if constexpr (std::is_same_v<T, ExprNode::Neg>) {
            return -fold(x.arg, at);
          } else if constexpr (std::is_same_v<T, ExprNode::Pow>) {
            return ipow(fold(x.base, at), x.exponent);
          } else {
            throw SyntaxError(at, "constant exponent", ErrorKind::NonIntegerExponent);
          }
        },
        e->node);
  }

  Expr parse_primary() {
    skip_ws();
    if (pos_ >= s_.size()) throw SyntaxError(pos_, "number, identifier or '('");
    const char ch = s_[pos_];
    if (ch == '(') {
      ++pos_;
      Expr e = parse_expr();
      if (!accept(')')) throw SyntaxError(pos_, "')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_' || static_cast<unsigned char>(ch) >= 0x80) {
      return parse_identifier();
    }
    throw SyntaxError(pos_, "number, identifier or '('");
  }

  Expr parse_number() {
    const std::size_t start = pos_;
    std::size_t p = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (p < s_.size() && std::isdigit(static_cast<unsigned char>(s_[p]))) ++p, ++n;
      return n;
    };
    std::size_t nd = digits();
    if (p < s_.size() && s_[p] == '.') {
      ++p;
      nd += digits();
    }
    if (nd == 0) throw SyntaxError(start, "digits");
    if (p < s_.size() && (s_[p] == 'e' || s_[p] == 'E')) {
      std::size_t q = p + 1;
      if (q < s_.size() && (s_[q] == '+' || s_[q] == '-')) ++q;
      if (q < s_.size() && std::isdigit(static_cast<unsigned char>(s_[q]))) {
        p = q;
        digits();
      }
    }
    double value = 0.0;
    const auto res = std::from_chars(s_.data() + start, s_.data() + p, value);
    if (res.ec != std::errc() || res.ptr != s_.data() + p || !std::isfinite(value)) {
      throw SyntaxError(start, "finite numeric literal");
    }
    pos_ = p;
    if (pos_ < s_.size() && s_[pos_] == 'i' &&
        !(pos_ + 1 < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_ + 1])) || s_[pos_ + 1] == '_'))) {
      ++pos_;
      return ex::constant(cd(0.0, value));
    }
    return ex::constant(cd(value, 0.0));
  }

  Expr parse_identifier() {
    const std::size_t start = pos_;
    std::size_t p = pos_;
    while (p < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[p])) || s_[p] == '_' ||
                             static_cast<unsigned char>(s_[p]) >= 0x80)) {
      ++p;
    }
    const std::string_view id = s_.substr(start, p - start);
    pos_ = p;
    if (id == "z") return ex::z();
    if (id == "lambda" || id == "c" || id == "\xce\xbb") return ex::lambda();
    throw SyntaxError(start, "identifier z, lambda or c (got '" + std::string(id) + "')",
                      ErrorKind::UnknownIdentifier);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Expr parse(std::string_view source) { return detail::Parser(source).parse_all(); }

// ---------------------------------------------------------------------------
// Printer: emits a string that parses back to the same tree.

namespace detail {

inline std::string format_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

// Precedence levels: 1 additive, 2 multiplicative, 3 unary, 4 power, 5 atom.
inline int precedence(const Expr& e) {
  return std::visit(
      [](const auto& x) -> int {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ExprNode::Const>) {
          const bool neg = std::signbit(x.value.real()) || std::signbit(x.value.imag());
          const bool mixed = x.value.real() != 0.0 && x.value.imag() != 0.0;
          return (neg || mixed) ? 1 : 5;
        } else if constexpr (std::is_same_v<T, ExprNode::Variable>) {
          return 5;
        } else if constexpr (std::is_same_v<T, ExprNode::Neg>) {
          return 3;
        } else if constexpr (std::is_same_v<T, ExprNode::Binary>) {
          return (x.op == BinOp::Add || x.op == BinOp::Sub) ? 1 : 2;
        } else {
          return 4;
        }
      },
      e->node);
}

inline std::string print_at(const Expr& e, int min_prec);

inline std::string print_node(const Expr& e) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ExprNode::Const>) {
          const double re = x.value.real(), im = x.value.imag();
          if (im == 0.0 && !std::signbit(im)) return format_double(re);
          if (re == 0.0 && !std::signbit(re)) return format_double(im) + "i";
          return "(" + format_double(re) + "+" + format_double(im) + "i)";
        } else if constexpr (std::is_same_v<T, ExprNode::Variable>) {
          return x.var == Var::Z ? "z" : "c";
        } else if constexpr (std::is_same_v<T, ExprNode::Neg>) {
          return "-" + print_at(x.arg, 3);
        } else if constexpr (std::is_same_v<T, ExprNode::Binary>) {
          const bool additive = x.op == BinOp::Add || x.op == BinOp::Sub;
          const int p = additive ? 1 : 2;
          const char* sym = x.op == BinOp::Add ? " + " : x.op == BinOp::Sub ? " - " : x.op == BinOp::Mul ? "*" : "/";
          // Left associative: the right operand needs parentheses at equal precedence.
          return print_at(x.lhs, p) + sym + print_at(x.rhs, p + 1);
        } else {
          return print_at(x.base, 5) + "^" + std::to_string(x.exponent);
        }
      },
      e->node);
}

inline std::string print_at(const Expr& e, int min_prec) {
  std::string s = print_node(e);
  if (precedence(e) < min_prec) return "(" + s + ")";
  return s;
}

}  // namespace detail

inline std::string print(const Expr& e) { return detail::print_at(e, 0); }

// ---------------------------------------------------------------------------
// Evaluation

template <class T>
T eval_as(const Expr& e, const T& z, const T& lam) {
  return std::visit(
      [&](const auto& x) -> T {
        using N = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<N, ExprNode::Const>) {
          return T(x.value);
        } else if constexpr (std::is_same_v<N, ExprNode::Variable>) {
          return x.var == Var::Z ? z : lam;
        } else if constexpr (std::is_same_v<N, ExprNode::Neg>) {
          return -eval_as(x.arg, z, lam);
        } else if constexpr (std::is_same_v<N, ExprNode::Binary>) {
          const T a = eval_as(x.lhs, z, lam);
          const T b = eval_as(x.rhs, z, lam);
          switch (x.op) {
            case BinOp::Add: return a + b;
            case BinOp::Sub: return a - b;
            case BinOp::Mul: return a * b;
            case BinOp::Div:
              if (value_of(b) == cd(0.0)) throw Error(ErrorKind::EvaluationPole, "division by zero");
              return a / b;
          }
          return a;
        } else {
          return ipow(eval_as(x.base, z, lam), x.exponent);
        }
      },
      e->node);
}

inline cd eval(const Expr& e, cd z, cd lam) { return eval_as<cd>(e, z, lam); }

// ---------------------------------------------------------------------------
// Polynomials in lambda, and polynomials in z with lambda-polynomial coefficients.

/// Coefficients in increasing powers of lambda.
using LamPoly = std::vector<cd>;

namespace lampoly {

inline double norm(const LamPoly& p) {
  double m = 0.0;
  for (const auto& c : p) m = std::max(m, std::abs(c));
  return m;
}

/// Drops leading coefficients below `rel` times the largest one.
inline void trim(LamPoly& p, double rel = 1e-12) {
  const double m = norm(p);
  while (!p.empty() && std::abs(p.back()) <= rel * m) p.pop_back();
  if (m == 0.0) p.clear();
}

inline bool is_zero(const LamPoly& p) { return p.empty(); }

inline LamPoly add(const LamPoly& a, const LamPoly& b, double sign = 1.0) {
  LamPoly r(std::max(a.size(), b.size()), 0.0);
  for (std::size_t k = 0; k < a.size(); ++k) r[k] += a[k];
  for (std::size_t k = 0; k < b.size(); ++k) r[k] += sign * b[k];
  // Exact cancellation to zero only; no tolerance here so integer inputs stay exact.
  while (!r.empty() && r.back() == cd(0.0)) r.pop_back();
  return r;
}

inline LamPoly mul(const LamPoly& a, const LamPoly& b) {
  if (a.empty() || b.empty()) return {};
  LamPoly r(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  while (!r.empty() && r.back() == cd(0.0)) r.pop_back();
  return r;
}

inline LamPoly scale(const LamPoly& a, cd s) {
  LamPoly r = a;
  for (auto& c : r) c *= s;
  while (!r.empty() && r.back() == cd(0.0)) r.pop_back();
  return r;
}

/// Polynomial long division; returns quotient, remainder written to `rem`.
inline LamPoly divmod(const LamPoly& a, const LamPoly& b, LamPoly& rem) {
  rem = a;
  if (b.empty()) throw Error(ErrorKind::InvalidArgument, "division by zero polynomial");
  if (a.size() < b.size()) return {};
  LamPoly q(a.size() - b.size() + 1, 0.0);
  for (std::size_t k = q.size(); k-- > 0;) {
    const cd coef = rem[k + b.size() - 1] / b.back();
    q[k] = coef;
    for (std::size_t j = 0; j < b.size(); ++j) rem[k + j] -= coef * b[j];
    rem[k + b.size() - 1] = 0.0;
  }
  rem.resize(b.size() - 1);
  return q;
}

/// Monic gcd by the Euclidean algorithm with relative zero tolerance.
inline LamPoly gcd(LamPoly a, LamPoly b, double rel = 1e-9) {
  trim(a, 0.0);
  trim(b, 0.0);
  const double scale = std::max(norm(a), norm(b));
  while (!b.empty()) {
    LamPoly r;
    divmod(a, b, r);
    if (norm(r) <= rel * std::max(scale, 1.0) || norm(r) <= rel * norm(b) * 1e-3) r.clear();
    trim(r, 0.0);
    a = std::move(b);
    b = std::move(r);
  }
  if (a.empty()) return {1.0};
  const cd lead = a.back();
  for (auto& c : a) c /= lead;
  return a;
}

inline cd eval(const LamPoly& p, cd lam) {
  cd acc = 0.0;
  for (auto it = p.rbegin(); it != p.rend(); ++it) acc = acc * lam + *it;
  return acc;
}

inline Jet eval_jet(const LamPoly& p, cd lam) {
  cd v = 0.0, d = 0.0;
  for (auto it = p.rbegin(); it != p.rend(); ++it) {
    d = d * lam + v;
    v = v * lam + *it;
  }
  return {v, d, 0.0};
}

}  // namespace lampoly

/// Polynomial in z whose coefficients (index = power of z) are polynomials in lambda.
using ZPoly = std::vector<LamPoly>;

namespace zpoly {

inline void normalize(ZPoly& p) {
  for (auto& c : p) {
    while (!c.empty() && c.back() == cd(0.0)) c.pop_back();
  }
  while (!p.empty() && p.back().empty()) p.pop_back();
}

inline int degree(const ZPoly& p) { return static_cast<int>(p.size()) - 1; }

inline ZPoly constant(const LamPoly& c) {
  ZPoly r{c};
  normalize(r);
  return r;
}

inline ZPoly add(const ZPoly& a, const ZPoly& b, double sign = 1.0) {
  ZPoly r(std::max(a.size(), b.size()));
  for (std::size_t k = 0; k < r.size(); ++k) {
    const LamPoly empty;
    r[k] = lampoly::add(k < a.size() ? a[k] : empty, k < b.size() ? b[k] : empty, sign);
  }
  normalize(r);
  return r;
}

inline ZPoly mul(const ZPoly& a, const ZPoly& b) {
  if (a.empty() || b.empty()) return {};
  ZPoly r(a.size() + b.size() - 1);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] = lampoly::add(r[i + j], lampoly::mul(a[i], b[j]));
  normalize(r);
  return r;
}

inline ZPoly mul_lam(const ZPoly& a, const LamPoly& s) {
  ZPoly r = a;
  for (auto& c : r) c = lampoly::mul(c, s);
  normalize(r);
  return r;
}

inline ZPoly pow(ZPoly base, unsigned n) {
  ZPoly result = constant({1.0});
  while (n != 0) {
    if (n & 1u) result = mul(result, base);
    n >>= 1u;
    if (n != 0) base = mul(base, base);
  }
  return result;
}

inline double norm(const ZPoly& p) {
  double m = 0.0;
  for (const auto& c : p) m = std::max(m, lampoly::norm(c));
  return m;
}

/// gcd of all lambda-coefficients (the content), monic.
inline LamPoly content(const ZPoly& p) {
  LamPoly g;
  for (const auto& c : p) {
    if (c.empty()) continue;
    g = g.empty() ? c : lampoly::gcd(g, c);
    if (g.size() == 1) break;
  }
  if (g.empty()) return {1.0};
  const cd lead = g.back();
  for (auto& c : g) c /= lead;
  return g;
}

/// Exact division of every coefficient by a lambda-polynomial (remainders dropped).
inline ZPoly div_lam(const ZPoly& p, const LamPoly& d) {
  ZPoly r(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    LamPoly rem;
    r[k] = p[k].empty() ? LamPoly{} : lampoly::divmod(p[k], d, rem);
  }
  normalize(r);
  return r;
}

inline ZPoly primitive(const ZPoly& p) { return div_lam(p, content(p)); }

/// Coefficientwise trim relative to the global scale.
inline void trim(ZPoly& p, double rel) {
  const double m = norm(p);
  for (auto& c : p) {
    for (auto& x : c)
      if (std::abs(x) <= rel * m) x = 0.0;
    while (!c.empty() && c.back() == cd(0.0)) c.pop_back();
  }
  while (!p.empty() && p.back().empty()) p.pop_back();
}

/// Pseudo-remainder of a by b in z: lc(b)^k a = q b + r with deg r < deg b.
inline ZPoly pseudo_rem(ZPoly a, const ZPoly& b) {
  const int db = degree(b);
  const LamPoly& lb = b.back();
  while (degree(a) >= db && !a.empty()) {
    const int shift = degree(a) - db;
    const LamPoly la = a.back();
    ZPoly next = mul_lam(a, lb);
    for (int k = 0; k <= db; ++k) {
      next[k + shift] = lampoly::add(next[k + shift], lampoly::mul(la, b[k]), -1.0);
    }
    next.back().clear();
    normalize(next);
    a = std::move(next);
  }
  return a;
}

/// Exact quotient a / b in C[lambda][z], assuming b divides a.
inline ZPoly exact_div(const ZPoly& a, const ZPoly& b, double rel = 1e-9) {
  ZPoly rem = a;
  const int db = degree(b);
  if (degree(a) < db) return {};
  ZPoly q(static_cast<std::size_t>(degree(a) - db + 1));
  const double scale = std::max(norm(a), 1e-300);
  for (int k = degree(a) - db; k >= 0; --k) {
    if (static_cast<int>(rem.size()) <= k + db || rem[k + db].empty()) continue;
    LamPoly r;
    LamPoly coef = lampoly::divmod(rem[k + db], b.back(), r);
    lampoly::trim(coef, 1e-14);
    q[k] = coef;
    for (int j = 0; j <= db; ++j) {
      rem[k + j] = lampoly::add(rem[k + j], lampoly::mul(coef, b[j]), -1.0);
      for (auto& x : rem[k + j])
        if (std::abs(x) <= rel * scale) x = 0.0;
      while (!rem[k + j].empty() && rem[k + j].back() == cd(0.0)) rem[k + j].pop_back();
    }
  }
  normalize(q);
  return q;
}

/// gcd in C[lambda][z] via the primitive pseudo-remainder sequence, with a
/// relative tolerance deciding when a remainder vanishes.
inline ZPoly gcd(const ZPoly& a0, const ZPoly& b0, double rel = 1e-9) {
  ZPoly a = a0, b = b0;
  if (degree(a) < degree(b)) std::swap(a, b);
  const LamPoly cont = lampoly::gcd(content(a), content(b));
  a = primitive(a);
  b = primitive(b);
  while (!b.empty() && degree(b) > 0) {
    ZPoly r = pseudo_rem(a, b);
    trim(r, rel);
    if (r.empty()) break;
    a = std::move(b);
    b = primitive(r);
    const double n = norm(b);
    if (n > 0.0) {
      for (auto& c : b)
        for (auto& x : c) x /= n;
    }
  }
  ZPoly g;
  if (b.empty()) {
    g = a;
  } else if (degree(b) == 0) {
    g = constant({1.0});
  } else {
    g = b;
  }
  if (degree(g) <= 0) return constant(cont);
  g = primitive(g);
  return mul_lam(g, cont);
}

inline cd eval(const ZPoly& p, cd z, cd lam) {
  cd acc = 0.0;
  for (auto it = p.rbegin(); it != p.rend(); ++it) acc = acc * z + lampoly::eval(*it, lam);
  return acc;
}

}  // namespace zpoly

/// Normal form P/Q of an expression rational in z, coefficients polynomial in lambda.
struct RationalForm {
  ZPoly num;
  ZPoly den;
};

namespace detail {

inline RationalForm to_rational_raw(const Expr& e) {
  return std::visit(
      [](const auto& x) -> RationalForm {
        using N = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<N, ExprNode::Const>) {
          return {zpoly::constant({x.value}), zpoly::constant({1.0})};
        } else if constexpr (std::is_same_v<N, ExprNode::Variable>) {
          if (x.var == Var::Z) return {ZPoly{LamPoly{}, LamPoly{1.0}}, zpoly::constant({1.0})};
          return {zpoly::constant({0.0, 1.0}), zpoly::constant({1.0})};
        } else if constexpr (std::is_same_v<N, ExprNode::Neg>) {
          RationalForm a = to_rational_raw(x.arg);
          return {zpoly::mul_lam(a.num, {-1.0}), a.den};
        } else if constexpr (std::is_same_v<N, ExprNode::Binary>) {
          RationalForm a = to_rational_raw(x.lhs);
          RationalForm b = to_rational_raw(x.rhs);
          switch (x.op) {
            case BinOp::Add:
            case BinOp::Sub: {
              const double sign = x.op == BinOp::Add ? 1.0 : -1.0;
              if (a.den.size() == 1 && b.den.size() == 1 && a.den[0] == b.den[0]) {
                return {zpoly::add(a.num, b.num, sign), a.den};
              }
              return {zpoly::add(zpoly::mul(a.num, b.den), zpoly::mul(b.num, a.den), sign), zpoly::mul(a.den, b.den)};
            }
            case BinOp::Mul:
              return {zpoly::mul(a.num, b.num), zpoly::mul(a.den, b.den)};
            case BinOp::Div:
              if (b.num.empty()) throw Error(ErrorKind::NotRationalInZ, "division by an identically zero expression");
              return {zpoly::mul(a.num, b.den), zpoly::mul(a.den, b.num)};
          }
          return a;
        } else {
          RationalForm a = to_rational_raw(x.base);
          return {zpoly::pow(a.num, x.exponent), zpoly::pow(a.den, x.exponent)};
        }
      },
      e->node);
}

}  // namespace detail

/// P/Q with common factors (in z, and common lambda-content) removed.
inline RationalForm to_rational(const Expr& e) {
  RationalForm r = detail::to_rational_raw(e);
  if (r.den.empty()) throw Error(ErrorKind::NotRationalInZ, "denominator vanishes identically");
  if (r.num.empty()) return {ZPoly{}, zpoly::constant({1.0})};
  const ZPoly g = zpoly::gcd(r.num, r.den);
  const bool trivial = zpoly::degree(g) == 0 && g[0].size() == 1;
  if (!trivial) {
    if (zpoly::degree(g) == 0) {
      r.num = zpoly::div_lam(r.num, g[0]);
      r.den = zpoly::div_lam(r.den, g[0]);
    } else {
      r.num = zpoly::exact_div(r.num, g);
      r.den = zpoly::exact_div(r.den, g);
    }
  }
  // Scale so the denominator's leading lambda-coefficient has leading coefficient 1
  // when it is a pure number; keeps printed forms recognizable (Q = 1 for polynomials).
  if (r.den.size() == 1 && r.den[0].size() == 1) {
    const cd s = r.den[0][0];
    if (s != cd(1.0)) {
      r.num = zpoly::mul_lam(r.num, {1.0 / s});
      r.den = zpoly::constant({1.0});
    }
  }
  return r;
}

}  // namespace bifscope
