#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cmath>

#include "lamlab/staircase.hpp"

using lamlab::BlockMatrix;
using lamlab::DiscreteMeasure;
using lamlab::MomentFunctional;
using lamlab::QuadExt;
using lamlab::Rational;
using lamlab::RayDirection;
using lamlab::StaircaseParams;

TEST_CASE("scale sequence rules") {
  StaircaseParams P;
  CHECK(P.a(1) == Rational(2));
  CHECK(P.a(5) == Rational(32));
  CHECK(P.is_default());
  P.validate(10);

  StaircaseParams E;
  E.explicit_seq = {Rational(2), Rational(3), Rational(7)};
  CHECK(E.a(2) == Rational(3));
  CHECK_THROWS_AS(E.a(4), std::invalid_argument);
  E.explicit_seq = {Rational(2), Rational(2)};
  CHECK_THROWS_AS(E.validate(2), std::invalid_argument);

  StaircaseParams bad;
  bad.a1 = Rational(1, 2);
  CHECK_THROWS_AS(bad.validate(2), std::invalid_argument);
}

TEST_CASE("quadratic extension radicands of scale roots") {
  StaircaseParams P;  // 2, 4, 8, ...
  CHECK(P.radicand(10) == 2);

  StaircaseParams squares;  // 4, 16, 64, ...
  squares.a1 = Rational(4);
  squares.base = Rational(4);
  CHECK(squares.radicand(10) == 1);

  StaircaseParams threes;
  threes.a1 = Rational(3);
  threes.base = Rational(3);
  CHECK(threes.radicand(10) == 3);

  StaircaseParams mixed;  // 2, 6, 18: sqrt2 and sqrt6 never share an extension
  mixed.a1 = Rational(2);
  mixed.base = Rational(3);
  CHECK(mixed.radicand(10) == 0);

  StaircaseParams expl;
  expl.explicit_seq = {Rational(2), Rational(8), Rational(50)};
  CHECK(expl.radicand(3) == 2);
}

TEST_CASE("step weights are the frozen defaults at level 1") {
  const auto w = lamlab::step_weights(StaircaseParams{}, 1);
  CHECK(w.alpha == Rational(1, 4));
  CHECK(w.beta == Rational(1, 4));
  CHECK(w.gamma == Rational(1, 8));
  CHECK(w.delta == Rational(1, 8));
  CHECK(w.lam == Rational(1, 4));
  CHECK(w.alpha + w.beta + w.gamma + w.delta + w.lam == Rational(1));
}

TEST_CASE("step laminate: exact atoms, barycenter, and replay") {
  const auto step = lamlab::step_laminate<QuadExt>(StaircaseParams{}, 1);
  CHECK(step.measure.size() == 5);
  CHECK(step.measure.total_mass() == QuadExt(1));

  // barycenter returns to the root state (0, 2 Id)
  const auto root = lamlab::isotropic_state<QuadExt>(Rational(2));
  CHECK(step.measure.barycenter() == root);
  CHECK(step.certificate.root == root);
  CHECK(step.certificate.steps.size() == 4);

  // frozen atom content: (+-sqrt2 e1, 2 e11), (+-2 e2, 4 e22), (0, 4 Id)
  const QuadExt s2(Rational(0), Rational(1), 2);
  CHECK(step.measure.atom(0).point.v(0) == s2);
  CHECK(step.measure.atom(0).point.M(0, 0) == QuadExt(2));
  CHECK(step.measure.atom(1).point.v(0) == -s2);
  CHECK(step.measure.atom(2).point.v(1) == QuadExt(2));
  CHECK(step.measure.atom(2).point.M(1, 1) == QuadExt(4));
  CHECK(step.measure.atom(4).point.M(0, 0) == QuadExt(4));
  CHECK(step.measure.atom(4).point.M(1, 1) == QuadExt(4));

  // replaying the certificate reproduces the measure exactly
  const auto replayed = lamlab::replay(step.certificate);
  CHECK(lamlab::measures_equal(replayed, step.measure));

  // split directions alternate: matrix-only and velocity-only rank-one moves
  for (std::size_t k = 0; k < 4; ++k) {
    const auto D = step.certificate.steps[k].B - step.certificate.steps[k].C;
    CHECK(lamlab::block_rank<QuadExt>(D) == 1);
    const bool velocity_move = k == 1 || k == 3;
    CHECK((D.v.squaredNorm().sign() != 0) == velocity_move);
    CHECK((D.M.squaredNorm().sign() != 0) == !velocity_move);
  }
}

TEST_CASE("staircase: exact closed form equals certificate replay") {
  StaircaseParams P;
  for (int n : {1, 2, 5}) {
    const auto build = lamlab::staircase_build<QuadExt>(P, n);
    CHECK(build.measure.size() == static_cast<std::size_t>(4 * n + 1));
    CHECK(build.certificate.steps.size() == static_cast<std::size_t>(4 * n));
    CHECK(build.measure.total_mass() == QuadExt(1));
    CHECK(build.measure.barycenter() == lamlab::isotropic_state<QuadExt>(Rational(2)));
    const auto replayed = lamlab::replay(build.certificate);
    CHECK(lamlab::measures_equal(replayed, build.measure));
  }

  // remainder weight is (a1/a_{n+1})^2 = 4^{-n}
  const auto b2 = lamlab::staircase_build<QuadExt>(P, 2);
  CHECK(b2.remainder_weight == Rational(1, 16));
  const auto last = b2.measure.atom(b2.measure.size() - 1);
  CHECK(last.weight == QuadExt(Rational(1, 16)));
  CHECK(last.point == lamlab::isotropic_state<QuadExt>(Rational(8)));

  const auto b10 = lamlab::staircase_build<QuadExt>(P, 10);
  CHECK(b10.remainder_weight == Rational(1, 1048576));
}

TEST_CASE("staircase respects non-default sequences and exactness limits") {
  StaircaseParams threes;
  threes.a1 = Rational(3);
  threes.base = Rational(3);
  const auto b = lamlab::staircase_build<QuadExt>(threes, 2);
  CHECK(b.measure.barycenter() == lamlab::isotropic_state<QuadExt>(Rational(3)));
  CHECK(lamlab::measures_equal(lamlab::replay(b.certificate), b.measure));

  StaircaseParams mixed;
  mixed.a1 = Rational(2);
  mixed.base = Rational(3);
  CHECK_THROWS_AS(lamlab::staircase_build<QuadExt>(mixed, 2), std::domain_error);

  // floating-point build covers sequences outside any single extension
  const auto fb = lamlab::staircase_build<double>(mixed, 3);
  CHECK(fb.measure.size() == 13);
  const auto bary = fb.measure.barycenter();
  CHECK(std::sqrt((bary - lamlab::isotropic_state<double>(Rational(2))).squaredNorm()) <= 1e-12);
  const auto replayed = lamlab::replay(fb.certificate);
  CHECK(lamlab::measures_close(lamlab::to_double(replayed), lamlab::to_double(fb.measure), 1e-12));
}

TEST_CASE("deep exact staircase stays fast") {
  const auto t0 = std::chrono::steady_clock::now();
  const auto b = lamlab::staircase_build<QuadExt>(StaircaseParams{}, 10);
  const auto replayed = lamlab::replay(b.certificate);
  CHECK(lamlab::measures_equal(replayed, b.measure));
  CHECK(b.measure.barycenter() == lamlab::isotropic_state<QuadExt>(Rational(2)));
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(secs < 1.0);
}

TEST_CASE("telescoped moments match direct measure moments") {
  StaircaseParams P;
  const std::vector<MomentFunctional> fns = {
      MomentFunctional::one(), MomentFunctional::vec_pow(3), MomentFunctional::mat_pow(1.5),
      MomentFunctional::min_ray_dist({RayDirection::e1(), RayDirection::e2()})};
  for (int n = 0; n <= 4; ++n) {
    const auto direct = lamlab::to_double(lamlab::staircase_measure<QuadExt>(P, n + 1));
    for (const auto& f : fns) {
      const double tele = lamlab::telescoping_moment(f, n, P);
      const double ref = lamlab::moment(direct, f);
      CHECK(std::abs(tele - ref) <= 1e-10);
    }
  }

  // frozen value: mean matrix norm of the depth-1 measure is 2 + sqrt(2)
  CHECK(lamlab::telescoping_moment(MomentFunctional::mat_pow(1.0), 0, P) ==
        doctest::Approx(2.0 + std::sqrt(2.0)).epsilon(1e-14));

  CHECK_THROWS_AS(lamlab::telescoping_moment(MomentFunctional::one(), -1, P),
                  std::invalid_argument);
}

TEST_CASE("bound report rows carry the frozen level-1 values") {
  const auto rep = lamlab::verify_bounds(StaircaseParams{}, 6, 2.0);
  REQUIRE(rep.rows.size() == 6);

  // depth 1 at p = 2: each lifted atom contributes 2 a^2, remainder 2^{p/2} a^p
  CHECK(rep.rows[0].m == doctest::Approx(20.0).epsilon(1e-14));
  CHECK(rep.rows[1].m == doctest::Approx(32.0).epsilon(1e-14));

  CHECK(rep.rows[0].d == doctest::Approx(0.25 * std::sqrt(19.75)).epsilon(1e-14));
  CHECK(rep.rows[0].r1 ==
        doctest::Approx(0.25 * std::sqrt(20.0) + 0.25 * std::sqrt(19.75)).epsilon(1e-13));
  CHECK(rep.rows[0].r2 ==
        doctest::Approx(0.5 * std::sqrt(6.0) + 0.25 * std::sqrt(19.75)).epsilon(1e-13));

  // at the critical exponent the increments are exactly constant: never certified
  CHECK_FALSE(rep.moment_bounded);
  CHECK(rep.max_increment_ratio == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.dist_upper);
  CHECK(rep.ray_lower);
}

TEST_CASE("bound certification across exponents") {
  for (double p : {1.0, 1.5, 1.9}) {
    const auto rep = lamlab::verify_bounds(StaircaseParams{}, 20, p);
    CHECK(rep.moment_bounded);
    CHECK(rep.max_increment_ratio == doctest::Approx(std::pow(2.0, p - 2.0)).epsilon(1e-9));
    CHECK(rep.min_increment > 0);
    CHECK(rep.dist_upper);
    CHECK(rep.ray_lower);
    for (const auto& row : rep.rows) {
      CHECK(row.r1 >= 0.5 - 1e-9);
      CHECK(row.r2 >= 0.5 - 1e-9);
    }
  }
  for (double p : {2.0, 2.5, 3.0}) {
    const auto rep = lamlab::verify_bounds(StaircaseParams{}, 20, p);
    CHECK_FALSE(rep.moment_bounded);
    CHECK(rep.min_increment > 0);  // moments still grow, just not summably
  }
}

TEST_CASE("bound rows agree with direct measure moments") {
  StaircaseParams P;
  const double p = 1.9;
  const auto rep = lamlab::verify_bounds(P, 4, p);
  for (int n = 1; n <= 4; ++n) {
    const auto nu = lamlab::to_double(lamlab::staircase_measure<QuadExt>(P, n));
    const double m_ref = lamlab::moment(nu, MomentFunctional::vec_pow(2.0 * p)) +
                         lamlab::moment(nu, MomentFunctional::mat_pow(p));
    const double d_ref = lamlab::moment(
        nu, MomentFunctional::min_ray_dist({RayDirection::e1(), RayDirection::e2()}));
    const double r1_ref = lamlab::moment(nu, MomentFunctional::ray_dist(RayDirection::e1()));
    const double r2_ref = lamlab::moment(nu, MomentFunctional::ray_dist(RayDirection::e2()));
    const auto& row = rep.rows[static_cast<std::size_t>(n - 1)];
    CHECK(row.m == doctest::Approx(m_ref).epsilon(1e-12));
    // the numeric moment evaluates distances of on-ray atoms with sqrt-of-
    // cancellation noise around 1e-8; the rows use exact closed forms
    CHECK(row.d == doctest::Approx(d_ref).epsilon(1e-6));
    CHECK(row.r1 == doctest::Approx(r1_ref).epsilon(1e-6));
    CHECK(row.r2 == doctest::Approx(r2_ref).epsilon(1e-6));
  }
}
