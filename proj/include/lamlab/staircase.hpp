#pragma once

// Staircase hierarchy. A step laminate splits the isotropic centered state
// (0, a_n Id) along rank-one segments into lifted on-axis states at scales
// a_n and a_{n+1} plus a smaller isotropic remainder (0, a_{n+1} Id) of
// weight (a_n/a_{n+1})^2. Iterating drives the remainder weight to zero and
// concentrates the measure on the two axis cone lines.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "lamlab/measures.hpp"

namespace lamlab {

/// Scale sequence a_1 < a_2 < ... driving the hierarchy. Default is the
/// geometric rule a_n = a1 * base^(n-1); an explicit list overrides it.
struct StaircaseParams {
  Rational a1 = Rational(2);
  Rational base = Rational(2);
  std::vector<Rational> explicit_seq;

  bool is_default() const { return explicit_seq.empty() && a1 == 2 && base == 2; }

  Rational a(int n) const {
    if (n < 1) throw std::invalid_argument("StaircaseParams: sequence index is 1-based");
    if (!explicit_seq.empty()) {
      if (static_cast<std::size_t>(n) > explicit_seq.size())
        throw std::invalid_argument("StaircaseParams: explicit sequence shorter than requested depth");
      return explicit_seq[static_cast<std::size_t>(n - 1)];
    }
    Rational v = a1;
    for (int i = 1; i < n; ++i) v *= base;
    return v;
  }

  void validate(int depth) const {
    if (explicit_seq.empty() && !(base > 1))
      throw std::invalid_argument("StaircaseParams: geometric base must exceed 1");
    if (!(a(1) >= 1)) throw std::invalid_argument("StaircaseParams: sequence must start at 1 or above");
    for (int i = 1; i < depth; ++i)
      if (!(a(i) < a(i + 1)))
        throw std::invalid_argument("StaircaseParams: sequence must be strictly increasing");
  }

  /// Radicand d with sqrt(a_n) in Q[sqrt(d)] for every n up to depth:
  /// 1 when all roots are rational, 0 when no single extension works.
  long long radicand(int depth) const {
    const auto kernel_of = [](const Rational& r) {
      return squarefree_kernel(boost::multiprecision::numerator(r) *
                               boost::multiprecision::denominator(r));
    };
    std::vector<BigInt> kernels;
    if (explicit_seq.empty()) {
      // reduced forms of a_{n+2} and a_n differ by the square base^2, so the
      // kernels only depend on the parity of n
      auto k0 = kernel_of(a1);
      auto k1 = kernel_of(a1 * base);
      if (!k0 || !k1) return 0;
      kernels = {*k0, *k1};
    } else {
      for (int i = 1; i <= depth && static_cast<std::size_t>(i) <= explicit_seq.size(); ++i) {
        auto k = kernel_of(a(i));
        if (!k) return 0;
        kernels.push_back(*k);
      }
    }
    BigInt d(1);
    for (const auto& k : kernels) {
      if (k == 1) continue;
      if (d == 1)
        d = k;
      else if (d != k)
        return 0;
    }
    if (d > BigInt(std::numeric_limits<long long>::max())) return 0;
    return d.convert_to<long long>();
  }
};

/// Convex weights of one step: the four lifted atoms and the remainder.
struct StepWeights {
  Rational alpha, beta, gamma, delta, lam;
};

inline StepWeights step_weights(const StaircaseParams& P, int n) {
  const Rational r = P.a(n) / P.a(n + 1);
  StepWeights w;
  w.alpha = (1 - r) / 2;
  w.beta = w.alpha;
  w.gamma = r * (1 - r) / 2;
  w.delta = w.gamma;
  w.lam = r * r;
  return w;
}

// Atom constructors shared by exact and floating builds.

template <class S>
BlockMatrix<S> isotropic_state(const Rational& a) {
  BlockMatrix<S> Z;
  Z.M(0, 0) = ScalarOps<S>::from_rational(a);
  Z.M(1, 1) = ScalarOps<S>::from_rational(a);
  return Z;
}

template <class S>
BlockMatrix<S> axis_matrix_state(const Rational& a, int axis) {
  BlockMatrix<S> X;
  X.M(axis, axis) = ScalarOps<S>::from_rational(a);
  return X;
}

/// Lifted on-axis state (sgn * sqrt(a) e_axis, a e_axis (x) e_axis).
template <class S>
BlockMatrix<S> lifted_axis_state(const Rational& a, int axis, int sgn) {
  BlockMatrix<S> X = axis_matrix_state<S>(a, axis);
  const S root = ScalarOps<S>::sqrt_rational(a);
  X.v(axis) = sgn >= 0 ? root : S(0) - root;
  return X;
}

namespace detail {

template <class S>
void require_representable(const StaircaseParams& P, int depth) {
  if constexpr (scalar_is_exact<S>::value) {
    if (P.radicand(depth) == 0)
      throw std::domain_error(
          "staircase: scale roots do not live in a single quadratic extension; "
          "use the floating-point build");
  } else {
    (void)P;
    (void)depth;
  }
}

template <class S>
std::size_t find_atom(const DiscreteMeasure<S>& mu, const BlockMatrix<S>& X) {
  std::size_t found = mu.size();
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (points_equal<S>(mu.atom(i).point, X)) {
      if (found != mu.size()) throw std::logic_error("staircase: ambiguous atom lookup");
      found = i;
    }
  }
  if (found == mu.size()) throw std::logic_error("staircase: expected atom not present");
  return found;
}

// The four elementary splits that refine the isotropic atom (0, a_i Id) in
// place inside mu, appended to steps. All four consume their target fully.
template <class S>
void append_step_block(const StaircaseParams& P, int i, DiscreteMeasure<S>& mu,
                       std::vector<SplitStep<S>>& steps) {
  const Rational ai = P.a(i), ai1 = P.a(i + 1);
  const Rational r = ai / ai1;
  const S one(1);

  const auto Z = isotropic_state<S>(ai);
  const auto X_flat = axis_matrix_state<S>(ai, 0);
  auto E = axis_matrix_state<S>(ai, 0);
  E.M(1, 1) = ScalarOps<S>::from_rational(ai1);
  const auto Y_flat = axis_matrix_state<S>(ai1, 1);
  const auto Znext = isotropic_state<S>(ai1);

  const S share = ScalarOps<S>::from_rational(1 - r);
  const S half = ScalarOps<S>::from_rational(Rational(1, 2));

  SplitStep<S> s1{detail::find_atom<S>(mu, Z), X_flat, E, share, one};
  elementary_split<S>(mu, s1);
  steps.push_back(s1);

  SplitStep<S> s2{detail::find_atom<S>(mu, X_flat), lifted_axis_state<S>(ai, 0, +1),
                  lifted_axis_state<S>(ai, 0, -1), half, one};
  elementary_split<S>(mu, s2);
  steps.push_back(s2);

  SplitStep<S> s3{detail::find_atom<S>(mu, E), Y_flat, Znext, share, one};
  elementary_split<S>(mu, s3);
  steps.push_back(s3);

  SplitStep<S> s4{detail::find_atom<S>(mu, Y_flat), lifted_axis_state<S>(ai1, 1, +1),
                  lifted_axis_state<S>(ai1, 1, -1), half, one};
  elementary_split<S>(mu, s4);
  steps.push_back(s4);
}

}  // namespace detail

template <class S = QuadExt>
struct StepLaminate {
  DiscreteMeasure<S> measure;          // X1, X2, Y1, Y2, remainder
  LaminateCertificate<S> certificate;  // four splits from (0, a_n Id)
  StepWeights weights;
};

/// One step of the hierarchy as a laminate of the state (0, a_n Id).
template <class S = QuadExt>
StepLaminate<S> step_laminate(const StaircaseParams& P, int n) {
  P.validate(n + 1);
  detail::require_representable<S>(P, n + 1);

  StepLaminate<S> out;
  out.weights = step_weights(P, n);
  const Rational an = P.a(n), an1 = P.a(n + 1);

  DiscreteMeasure<S> direct;
  direct.add_mass(ScalarOps<S>::from_rational(out.weights.alpha), lifted_axis_state<S>(an, 0, +1));
  direct.add_mass(ScalarOps<S>::from_rational(out.weights.beta), lifted_axis_state<S>(an, 0, -1));
  direct.add_mass(ScalarOps<S>::from_rational(out.weights.gamma), lifted_axis_state<S>(an1, 1, +1));
  direct.add_mass(ScalarOps<S>::from_rational(out.weights.delta), lifted_axis_state<S>(an1, 1, -1));
  direct.add_mass(ScalarOps<S>::from_rational(out.weights.lam), isotropic_state<S>(an1));
  direct.validate();
  out.measure = direct;

  out.certificate.root = isotropic_state<S>(an);
  auto working = DiscreteMeasure<S>::dirac(out.certificate.root);
  detail::append_step_block<S>(P, n, working, out.certificate.steps);
  return out;
}

template <class S = QuadExt>
struct StaircaseBuild {
  DiscreteMeasure<S> measure;          // closed-form listing, 4n+1 atoms
  LaminateCertificate<S> certificate;  // 4n splits from (0, a_1 Id)
  Rational remainder_weight;           // (a_1 / a_{n+1})^2
};

/// Depth-n staircase measure with its split certificate. The closed form
/// lists, per level i, the four lifted atoms with weights p_{i-1} *
/// (alpha_i, beta_i, gamma_i, delta_i), then the remainder of weight p_n.
template <class S = QuadExt>
StaircaseBuild<S> staircase_build(const StaircaseParams& P, int n) {
  if (n < 1) throw std::invalid_argument("staircase_build: depth must be >= 1");
  P.validate(n + 1);
  detail::require_representable<S>(P, n + 1);

  StaircaseBuild<S> out;
  DiscreteMeasure<S> direct;
  Rational p_prev(1);
  for (int i = 1; i <= n; ++i) {
    const StepWeights w = step_weights(P, i);
    const Rational ai = P.a(i), ai1 = P.a(i + 1);
    direct.add_mass(ScalarOps<S>::from_rational(p_prev * w.alpha), lifted_axis_state<S>(ai, 0, +1));
    direct.add_mass(ScalarOps<S>::from_rational(p_prev * w.beta), lifted_axis_state<S>(ai, 0, -1));
    direct.add_mass(ScalarOps<S>::from_rational(p_prev * w.gamma), lifted_axis_state<S>(ai1, 1, +1));
    direct.add_mass(ScalarOps<S>::from_rational(p_prev * w.delta), lifted_axis_state<S>(ai1, 1, -1));
    p_prev *= w.lam;
  }
  direct.add_mass(ScalarOps<S>::from_rational(p_prev), isotropic_state<S>(P.a(n + 1)));
  direct.validate();
  out.measure = direct;
  out.remainder_weight = p_prev;

  out.certificate.root = isotropic_state<S>(P.a(1));
  auto working = DiscreteMeasure<S>::dirac(out.certificate.root);
  for (int i = 1; i <= n; ++i) detail::append_step_block<S>(P, i, working, out.certificate.steps);
  return out;
}

template <class S = QuadExt>
DiscreteMeasure<S> staircase_measure(const StaircaseParams& P, int n) {
  return staircase_build<S>(P, n).measure;
}

/// Moment of the depth-(n+1) staircase measure evaluated as the telescoped
/// sum of per-level contributions plus the remainder term; n >= 0.
inline double telescoping_moment(const MomentFunctional& f, int n,
                                 const StaircaseParams& P = {}) {
  if (n < 0) throw std::invalid_argument("telescoping_moment: depth must be >= 0");
  P.validate(n + 2);
  double acc = 0.0;
  double p_prev = 1.0;
  for (int i = 1; i <= n + 1; ++i) {
    const StepWeights w = step_weights(P, i);
    const Rational ai = P.a(i), ai1 = P.a(i + 1);
    acc += p_prev * (to_double(w.alpha) * f(lifted_axis_state<double>(ai, 0, +1)) +
                     to_double(w.beta) * f(lifted_axis_state<double>(ai, 0, -1)) +
                     to_double(w.gamma) * f(lifted_axis_state<double>(ai1, 1, +1)) +
                     to_double(w.delta) * f(lifted_axis_state<double>(ai1, 1, -1)));
    p_prev *= to_double(w.lam);
  }
  acc += p_prev * f(isotropic_state<double>(P.a(n + 2)));
  return acc;
}

struct BoundRow {
  int n = 0;
  double m = 0;      // mixed moment |v|^{2p} + |M|^p
  double d = 0;      // mean distance to the union of the two axis cone lines
  double r1 = 0;     // mean distance to the e1 cone line
  double r2 = 0;     // mean distance to the e2 cone line
  double d_ref = 0;  // comparison envelope for d
};

struct BoundReport {
  StaircaseParams params;
  double p = 1.9;
  int n_max = 20;
  std::vector<BoundRow> rows;
  bool moment_bounded = false;  // increments positive with certified sub-unit ratio
  bool dist_upper = false;      // d_n <= 1.5 * d_ref(n) for all rows
  bool ray_lower = false;       // r_n(i) >= 1/2 - 1e-9 for all rows
  double increment_ratio_threshold = 0;
  double max_increment_ratio = 0;
  double min_increment = 0;
  std::string note;
};

/// Quantitative behavior of the hierarchy across depths 1..n_max. The m
/// column grows without bound while d shrinks at the remainder rate and the
/// one-ray means r stay bounded below: the moments certify that the family
/// converges to a nontrivial measure on the two cone lines in the p-regime
/// below the critical exponent.
inline BoundReport verify_bounds(const StaircaseParams& P, int n_max, double p) {
  if (n_max < 1) throw std::invalid_argument("verify_bounds: n_max must be >= 1");
  P.validate(n_max + 2);
  BoundReport rep;
  rep.params = P;
  rep.p = p;
  rep.n_max = n_max;

  const auto f_m = [p](const BlockMatrix<double>& X) {
    return std::pow(X.v.norm(), 2.0 * p) + std::pow(X.M.norm(), p);
  };

  double Sm = 0, Sr1 = 0, Sr2 = 0;
  double p_prev = 1.0;
  for (int i = 1; i <= n_max; ++i) {
    const StepWeights w = step_weights(P, i);
    const double ai = to_double(P.a(i)), ai1 = to_double(P.a(i + 1));
    const double wa = to_double(w.alpha), wg = to_double(w.gamma);
    Sm += p_prev * (wa * (f_m(lifted_axis_state<double>(P.a(i), 0, +1)) +
                          f_m(lifted_axis_state<double>(P.a(i), 0, -1))) +
                    wg * (f_m(lifted_axis_state<double>(P.a(i + 1), 1, +1)) +
                          f_m(lifted_axis_state<double>(P.a(i + 1), 1, -1))));
    // lifted atoms sit on one cone line and at cross_ray_distance from the other
    Sr1 += p_prev * 2.0 * wg * cross_ray_distance(ai1);
    Sr2 += p_prev * 2.0 * wa * cross_ray_distance(ai);
    p_prev *= to_double(w.lam);

    BoundRow row;
    row.n = i;
    const double tail_center = center_ray_distance(to_double(P.a(i + 1)));
    row.m = Sm + p_prev * f_m(isotropic_state<double>(P.a(i + 1)));
    row.d = p_prev * tail_center;  // lifted atoms contribute zero to the min
    row.r1 = Sr1 + p_prev * tail_center;
    row.r2 = Sr2 + p_prev * tail_center;
    row.d_ref = P.is_default() ? std::pow(2.0, 1 - i)
                               : std::sqrt(2.0) * to_double(P.a(1) * P.a(1) / P.a(i + 1));
    rep.rows.push_back(row);
  }

  // certification of bounded moments: geometric increments with ratio below
  // base^(p-2) + margin, which must itself sit below 1
  const double base_ratio =
      P.explicit_seq.empty() ? std::pow(to_double(P.base), p - 2.0) : 0.0;
  rep.increment_ratio_threshold =
      std::min(base_ratio > 0 ? base_ratio + 0.01 : 1.0 - 1e-6, 1.0 - 1e-6);
  bool bounded = rep.rows.size() >= 3;
  double max_ratio = 0, min_inc = std::numeric_limits<double>::infinity();
  double prev_inc = 0;
  for (std::size_t k = 1; k < rep.rows.size(); ++k) {
    const double inc = rep.rows[k].m - rep.rows[k - 1].m;
    min_inc = std::min(min_inc, inc);
    if (!(inc > 0)) bounded = false;
    if (k >= 2 && prev_inc > 0) {
      const double ratio = inc / prev_inc;
      max_ratio = std::max(max_ratio, ratio);
      if (!(ratio <= rep.increment_ratio_threshold)) bounded = false;
    }
    prev_inc = inc;
  }
  rep.max_increment_ratio = max_ratio;
  rep.min_increment = rep.rows.size() >= 2 ? min_inc : 0.0;
  rep.moment_bounded = bounded;
  if (rep.rows.size() < 3) rep.note = "need n_max >= 3 to certify increment decay";

  rep.dist_upper = true;
  rep.ray_lower = true;
  for (const auto& row : rep.rows) {
    if (!(row.d <= 1.5 * row.d_ref)) rep.dist_upper = false;
    if (!(row.r1 >= 0.5 - 1e-9) || !(row.r2 >= 0.5 - 1e-9)) rep.ray_lower = false;
  }
  return rep;
}

}  // namespace lamlab
