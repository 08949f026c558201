#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>

#include "lamlab/numeric.hpp"

using lamlab::BigInt;
using lamlab::QuadExt;
using lamlab::Rational;

TEST_CASE("rational helpers") {
  CHECK(lamlab::sign_of(Rational(-3, 7)) == -1);
  CHECK(lamlab::sign_of(Rational(0)) == 0);
  CHECK(lamlab::sign_of(Rational(5)) == 1);
  CHECK(lamlab::to_double(Rational(1, 4)) == doctest::Approx(0.25));

  BigInt root;
  CHECK(lamlab::is_perfect_square(BigInt(1) << 40, &root));
  CHECK(root == (BigInt(1) << 20));
  CHECK_FALSE(lamlab::is_perfect_square(BigInt(2)));

  CHECK(*lamlab::squarefree_kernel(BigInt(1)) == 1);
  CHECK(*lamlab::squarefree_kernel(BigInt(8)) == 2);
  CHECK(*lamlab::squarefree_kernel(BigInt(36)) == 1);
  CHECK(*lamlab::squarefree_kernel(BigInt(12)) == 3);
  CHECK(*lamlab::squarefree_kernel(BigInt(30)) == 30);
}

TEST_CASE("quadratic extension arithmetic is exact") {
  const QuadExt s2(Rational(0), Rational(1), 2);  // sqrt(2)
  CHECK((s2 * s2) == QuadExt(2));
  CHECK(((QuadExt(1) + s2) * (QuadExt(1) - s2)) == QuadExt(-1));
  CHECK((QuadExt(1) / s2) == QuadExt(Rational(0), Rational(1, 2), 2));

  // field norm division: (3 + sqrt(2)) / (1 + sqrt(2)) = (3+s)(−1+s)/1... check via multiply-back
  const QuadExt a(Rational(3), Rational(1), 2), b(Rational(1), Rational(1), 2);
  CHECK(((a / b) * b) == a);

  CHECK(s2.sign() == 1);
  CHECK((-s2).sign() == -1);
  CHECK((QuadExt(1) - s2).sign() == -1);       // 1 < sqrt(2)
  CHECK((QuadExt(2) - s2).sign() == 1);        // 2 > sqrt(2)
  CHECK((s2 - s2).sign() == 0);
  CHECK(QuadExt(Rational(-7), Rational(5), 2).sign() == 1);   // 5 sqrt2 = sqrt50 > 7
  CHECK(QuadExt(Rational(-8), Rational(5), 2).sign() == -1);  // sqrt50 < 8

  CHECK(s2 < QuadExt(Rational(3, 2)));
  CHECK(QuadExt(Rational(7, 5)) < s2);

  CHECK(s2.to_double() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(QuadExt(Rational(1, 3)).to_double() == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("radicand discipline") {
  const QuadExt s2(Rational(0), Rational(1), 2);
  const QuadExt s3(Rational(0), Rational(1), 3);
  CHECK_THROWS_AS(s2 + s3, std::domain_error);
  CHECK_THROWS_AS(s2 * s3, std::domain_error);
  // plain rationals combine with anything
  CHECK((s2 + QuadExt(Rational(1, 2))).radicand() == 2);
  CHECK((s3 * QuadExt(2)).radicand() == 3);
  // a perfect-square radicand is rejected outright
  CHECK_THROWS_AS(QuadExt(Rational(0), Rational(1), 4), std::domain_error);
  // q1 collapsing to zero drops the radicand
  CHECK((s2 - s2).radicand() == 0);
  CHECK((s2 - s2 + s3) == s3);
  CHECK_THROWS_AS(QuadExt(1) / QuadExt(0), std::domain_error);
}

TEST_CASE("exact square roots of rationals") {
  auto r = QuadExt::sqrt_rational(Rational(2));
  REQUIRE(r.has_value());
  CHECK(*r == QuadExt(Rational(0), Rational(1), 2));

  r = QuadExt::sqrt_rational(Rational(8));
  REQUIRE(r.has_value());
  CHECK(*r == QuadExt(Rational(0), Rational(2), 2));

  r = QuadExt::sqrt_rational(Rational(9, 4));
  REQUIRE(r.has_value());
  CHECK(*r == QuadExt(Rational(3, 2)));

  r = QuadExt::sqrt_rational(Rational(1, 2));
  REQUIRE(r.has_value());
  CHECK(*r == QuadExt(Rational(0), Rational(1, 2), 2));
  CHECK(((*r) * (*r)) == QuadExt(Rational(1, 2)));

  r = QuadExt::sqrt_rational(Rational(1024));  // 2^10
  REQUIRE(r.has_value());
  CHECK(*r == QuadExt(32));

  r = QuadExt::sqrt_rational(Rational(2048));  // 2^11 = (32 sqrt2)^2 * ... = 2048
  REQUIRE(r.has_value());
  CHECK(*r == QuadExt(Rational(0), Rational(32), 2));

  CHECK_FALSE(QuadExt::sqrt_rational(Rational(-1)).has_value());
  CHECK(*QuadExt::sqrt_rational(Rational(0)) == QuadExt(0));
}

TEST_CASE("eigen interop") {
  using MatQ = Eigen::Matrix<QuadExt, 2, 2>;
  const QuadExt s2(Rational(0), Rational(1), 2);
  MatQ A;
  A << QuadExt(1), s2, QuadExt(0), QuadExt(1);
  MatQ B = A * A;
  CHECK(B(0, 0) == QuadExt(1));
  CHECK(B(0, 1) == s2 + s2);
  CHECK(B(1, 1) == QuadExt(1));
  CHECK(A.squaredNorm() == QuadExt(4));  // 1 + 2 + 0 + 1
}
