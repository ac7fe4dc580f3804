#include <gtest/gtest.h>

#include <random>
#include <string>

#include "bifscope/expr.hpp"

using namespace bifscope;

namespace {

ErrorKind kind_of(const std::string& src) {
  try {
    parse(src);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error for " << src;
  return ErrorKind::IoError;
}

std::size_t syntax_offset(const std::string& src) {
  try {
    parse(src);
  } catch (const SyntaxError& e) {
    return e.offset();
  }
  ADD_FAILURE() << "no syntax error for " << src;
  return std::string::npos;
}

}  // namespace

TEST(Parse, QuadraticFamilyShape) {
  const Expr e = parse("z^2 + c");
  const Expr want = ex::add(ex::pow(ex::z(), 2), ex::lambda());
  EXPECT_TRUE(structurally_equal(e, want));
}

TEST(Parse, LattesFamilyIsWellFormed) {
  const Expr e = parse("(z^2-c)^2/(4*z*(z-1)*(z-c))");
  EXPECT_TRUE(depends_on(e, Var::Z));
  EXPECT_TRUE(depends_on(e, Var::Lambda));
  const cd z(0.7, 0.2), lam(0.3, 0.1);
  const cd direct = (z * z - lam) * (z * z - lam) / (4.0 * z * (z - 1.0) * (z - lam));
  EXPECT_LT(std::abs(eval(e, z, lam) - direct), 1e-14);
}

TEST(Parse, DanglingCaretReportsOffset) {
  EXPECT_EQ(syntax_offset("z^"), 2u);
  EXPECT_EQ(kind_of("z^"), ErrorKind::SyntaxError);
}

TEST(Parse, Precedence) {
  // ^ binds tighter than unary minus: -z^2 is -(z^2).
  EXPECT_TRUE(structurally_equal(parse("-z^2"), ex::neg(ex::pow(ex::z(), 2))));
  // * before +, left association.
  EXPECT_TRUE(structurally_equal(parse("1+2*z"), ex::add(ex::constant(1.0), ex::mul(ex::constant(2.0), ex::z()))));
  EXPECT_TRUE(structurally_equal(parse("z-1-c"), ex::sub(ex::sub(ex::z(), ex::constant(1.0)), ex::lambda())));
  EXPECT_TRUE(structurally_equal(parse("z/2/c"), ex::div(ex::div(ex::z(), ex::constant(2.0)), ex::lambda())));
}

TEST(Parse, PowerIsRightAssociative) {
  // z^2^3 = z^(2^3) = z^8
  EXPECT_TRUE(structurally_equal(parse("z^2^3"), ex::pow(ex::z(), 8)));
}

TEST(Parse, ComplexLiterals) {
  EXPECT_EQ(eval(parse("2i"), 0.0, 0.0), cd(0.0, 2.0));
  EXPECT_EQ(eval(parse("(0.5+0.5i)"), 0.0, 0.0), cd(0.5, 0.5));
  EXPECT_EQ(eval(parse("1.5"), 0.0, 0.0), cd(1.5, 0.0));
  EXPECT_EQ(eval(parse("2e-3"), 0.0, 0.0), cd(2e-3, 0.0));
}

TEST(Parse, IdentifierAliases) {
  const cd lam(0.25, -1.0);
  EXPECT_EQ(eval(parse("lambda"), 0.0, lam), lam);
  EXPECT_EQ(eval(parse("c"), 0.0, lam), lam);
  EXPECT_EQ(eval(parse("λ"), 0.0, lam), lam);
}

TEST(Parse, Errors) {
  EXPECT_EQ(kind_of("z^1.5"), ErrorKind::NonIntegerExponent);
  EXPECT_EQ(kind_of("z^-1"), ErrorKind::NonIntegerExponent);
  EXPECT_EQ(kind_of("z^c"), ErrorKind::NonIntegerExponent);
  EXPECT_EQ(kind_of("w+1"), ErrorKind::UnknownIdentifier);
  EXPECT_EQ(kind_of("sin(z)"), ErrorKind::UnknownIdentifier);
  EXPECT_EQ(kind_of("2z"), ErrorKind::SyntaxError);  // no implicit multiplication
  EXPECT_EQ(kind_of("(z+1"), ErrorKind::SyntaxError);
  EXPECT_EQ(kind_of(""), ErrorKind::SyntaxError);
  EXPECT_EQ(syntax_offset("(z+1"), 4u);
  EXPECT_EQ(syntax_offset("z + * 2"), 4u);
}

TEST(Eval, SpecValues) {
  const Expr q = parse("z^2+c");
  EXPECT_EQ(eval(q, 2.0, 0.0), cd(4.0));
  EXPECT_EQ(eval(q, 0.0, -2.0), cd(-2.0));
}

TEST(Eval, PoleIsAnError) {
  try {
    eval(parse("1/z"), 0.0, 0.0);
    FAIL() << "expected EvaluationPole";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EvaluationPole);
  }
}

TEST(Eval, FollowsAstOrder) {
  const Expr a = parse("z*z*z"), b = parse("c+0.1");
  const cd z(0.3, 1.7), lam(-0.4, 0.9);
  const cd sum = eval(a, z, lam) + eval(b, z, lam);
  EXPECT_EQ(eval(ex::add(a, b), z, lam), sum);  // bitwise
}

TEST(Eval, JetMatchesValue) {
  const Expr e = parse("(z^2-c)^2/(4*z*(z-1)*(z-c))");
  const cd z(0.7, 0.2), lam(0.3, 0.1);
  const Jet j = eval_as<Jet>(e, Jet::z_var(z), Jet::lambda_var(lam));
  EXPECT_LT(std::abs(j.v - eval(e, z, lam)), 1e-15 * std::abs(j.v));
  const double h = 1e-6;
  const cd fd = (eval(e, z, lam + h) - eval(e, z, lam - h)) / (2.0 * h);
  EXPECT_LT(std::abs(j.dl - fd), 1e-6 * std::max(1.0, std::abs(fd)));
}

TEST(ToRational, Quadratic) {
  const RationalForm r = to_rational(parse("z^2+c"));
  ASSERT_EQ(zpoly::degree(r.num), 2);
  ASSERT_EQ(zpoly::degree(r.den), 0);
  EXPECT_EQ(r.den[0], LamPoly({1.0}));
  EXPECT_EQ(r.num[2], LamPoly({1.0}));
  EXPECT_EQ(r.num[0], LamPoly({0.0, 1.0}));
}

TEST(ToRational, ZPlusInverse) {
  const RationalForm r = to_rational(parse("z + 1/z"));
  ASSERT_EQ(zpoly::degree(r.num), 2);
  ASSERT_EQ(zpoly::degree(r.den), 1);
  // P = z^2 + 1, Q = z up to a common scalar.
  const cd s = r.den[1][0];
  EXPECT_LT(std::abs(r.num[2][0] - s), 1e-14);
  EXPECT_LT(std::abs(r.num[0][0] - s), 1e-14);
  EXPECT_TRUE(r.num[1].empty() || std::abs(r.num[1][0]) < 1e-14);
}

TEST(ToRational, LattesKeepsDegreeFour) {
  const RationalForm r = to_rational(parse("(z^2-c)^2/(4*z*(z-1)*(z-c))"));
  EXPECT_EQ(zpoly::degree(r.num), 4);
  EXPECT_EQ(zpoly::degree(r.den), 3);
  const cd z(0.4, -0.8), lam(0.3, 0.1);
  const cd direct = (z * z - lam) * (z * z - lam) / (4.0 * z * (z - 1.0) * (z - lam));
  EXPECT_LT(std::abs(zpoly::eval(r.num, z, lam) / zpoly::eval(r.den, z, lam) - direct), 1e-13);
}

TEST(ToRational, RemovesCommonFactor) {
  const RationalForm r = to_rational(parse("(z^2-c)*(z+1)/((z+1)*z)"));
  EXPECT_EQ(zpoly::degree(r.num), 2);
  EXPECT_EQ(zpoly::degree(r.den), 1);
  const RationalForm s = to_rational(parse("(z-c)*z^2/(z-c)"));
  EXPECT_EQ(zpoly::degree(s.num), 2);
  EXPECT_EQ(zpoly::degree(s.den), 0);
}

TEST(ToRational, ZeroDenominatorRejected) {
  try {
    to_rational(parse("z/(c-c)"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotRationalInZ);
  }
}

// ---------------------------------------------------------------------------
// Properties

namespace {

std::string random_expr(std::mt19937_64& rng, int depth) {
  std::uniform_int_distribution<int> pick(0, depth <= 0 ? 2 : 8);
  switch (pick(rng)) {
    case 0: return "z";
    case 1: return rng() % 2 ? "c" : "lambda";
    case 2: {
      std::uniform_real_distribution<double> u(-3.0, 3.0);
      char buf[64];
      const int kind = static_cast<int>(rng() % 3);
      if (kind == 0) std::snprintf(buf, sizeof buf, "%.3f", std::abs(u(rng)));
      else if (kind == 1) std::snprintf(buf, sizeof buf, "%.2fi", std::abs(u(rng)));
      else std::snprintf(buf, sizeof buf, "(%.2f+%.2fi)", u(rng), std::abs(u(rng)));
      return buf;
    }
    case 3: return random_expr(rng, depth - 1) + " + " + random_expr(rng, depth - 1);
    case 4: return random_expr(rng, depth - 1) + " - " + random_expr(rng, depth - 1);
    case 5: return random_expr(rng, depth - 1) + "*" + random_expr(rng, depth - 1);
    case 6: return "(" + random_expr(rng, depth - 1) + ")/(" + random_expr(rng, depth - 1) + ")";
    case 7: return "(" + random_expr(rng, depth - 1) + ")^" + std::to_string(rng() % 4);
    default: return "-" + random_expr(rng, depth - 1);
  }
}

}  // namespace

TEST(Property, PrintParseRoundTrip) {
  std::mt19937_64 rng(42);
  for (int n = 0; n < 2000; ++n) {
    const std::string s = random_expr(rng, 4);
    const Expr a = parse(s);
    const Expr b = parse(print(a));
    ASSERT_TRUE(structurally_equal(a, b)) << s << " printed as " << print(a);
  }
}

TEST(Property, FuzzNeverCrashes) {
  std::mt19937_64 rng(7);
  const std::string alphabet = "zc+-*/^()0123456789.ie lamb";
  int syntax = 0, ok = 0;
  for (int n = 0; n < 10000; ++n) {
    std::string s;
    const int len = 1 + static_cast<int>(rng() % 24);
    for (int k = 0; k < len; ++k) s += alphabet[rng() % alphabet.size()];
    try {
      const Expr e = parse(s);
      ++ok;
      try {
        (void)eval(e, cd(0.3, 0.1), cd(-0.2, 0.7));
      } catch (const Error& err) {
        EXPECT_EQ(err.kind(), ErrorKind::EvaluationPole);
      }
    } catch (const SyntaxError& err) {
      ++syntax;
      EXPECT_LE(err.offset(), s.size());
    } catch (const Error& err) {
      ADD_FAILURE() << "unpositioned error for '" << s << "': " << err.what();
    }
  }
  EXPECT_GT(syntax, 0);
  EXPECT_GT(ok, 0);
}

TEST(Property, ToRationalAgreesWithEval) {
  std::mt19937_64 rng(11);
  int checked = 0;
  for (int n = 0; n < 300; ++n) {
    const std::string s = random_expr(rng, 3);
    const Expr e = parse(s);
    RationalForm r;
    try {
      r = to_rational(e);
    } catch (const Error&) {
      continue;
    }
    const cd z(0.37, -0.61), lam(0.23, 0.41);
    cd direct;
    try {
      direct = eval(e, z, lam);
    } catch (const Error&) {
      continue;
    }
    const cd den = zpoly::eval(r.den, z, lam);
    if (std::abs(den) < 1e-8 || !std::isfinite(std::abs(direct)) || std::abs(direct) > 1e8) continue;
    const cd via = zpoly::eval(r.num, z, lam) / den;
    EXPECT_LT(std::abs(via - direct), 1e-7 * std::max(1.0, std::abs(direct))) << s;
    ++checked;
  }
  EXPECT_GT(checked, 100);
}
