#pragma once

// Finitely supported probability measures on the block state space, and the
// elementary split operation that drives every laminate construction here:
// replacing part of an atom's mass by two endpoints of a rank-one segment
// through it.

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "lamlab/matspace.hpp"
#include "lamlab/numeric.hpp"

namespace lamlab {

template <class S>
struct scalar_is_exact : std::false_type {};
template <>
struct scalar_is_exact<QuadExt> : std::true_type {};

/// Rank of the 3x2 block. Relative singular value cutoff; exact scalars use
/// exact minors instead.
inline int matrix_rank_3x2(const BlockMatrix<double>& D, double rel_tol = 1e-10) {
  Eigen::JacobiSVD<Mat32> svd(stacked(D));
  const auto& sv = svd.singularValues();
  if (sv(0) <= 0) return 0;
  int r = 1;
  if (sv(1) > rel_tol * sv(0)) r = 2;
  return r;
}

namespace detail {

template <class S>
std::array<S, 6> flat(const BlockMatrix<S>& X) {
  return {X.v(0), X.v(1), X.M(0, 0), X.M(0, 1), X.M(1, 0), X.M(1, 1)};
}

inline int scalar_cmp(double a, double b) { return a < b ? -1 : (a > b ? 1 : 0); }
inline int scalar_cmp(const QuadExt& a, const QuadExt& b) { return (a - b).sign(); }

template <class S>
int point_cmp(const BlockMatrix<S>& a, const BlockMatrix<S>& b) {
  const auto fa = flat(a), fb = flat(b);
  for (int i = 0; i < 6; ++i) {
    const int c = scalar_cmp(fa[static_cast<size_t>(i)], fb[static_cast<size_t>(i)]);
    if (c != 0) return c;
  }
  return 0;
}

}  // namespace detail

template <class S>
int block_rank(const BlockMatrix<S>& D, double rel_tol = 1e-10) {
  if constexpr (scalar_is_exact<S>::value) {
    (void)rel_tol;
    const auto f = detail::flat(D);
    bool all_zero = true;
    for (const auto& x : f)
      if (x.sign() != 0) all_zero = false;
    if (all_zero) return 0;
    // 3x2 block has rank <= 1 iff all three 2x2 row-pair minors vanish
    const S m01 = D.v(0) * D.M(0, 1) - D.v(1) * D.M(0, 0);
    const S m02 = D.v(0) * D.M(1, 1) - D.v(1) * D.M(1, 0);
    const S m12 = D.M(0, 0) * D.M(1, 1) - D.M(0, 1) * D.M(1, 0);
    if (m01.sign() == 0 && m02.sign() == 0 && m12.sign() == 0) return 1;
    return 2;
  } else {
    return matrix_rank_3x2(D, rel_tol);
  }
}

template <class S>
bool points_equal(const BlockMatrix<S>& a, const BlockMatrix<S>& b, double rel_tol = 1e-12) {
  if constexpr (scalar_is_exact<S>::value) {
    (void)rel_tol;
    return a == b;
  } else {
    const double scale = std::max({1.0, std::sqrt(a.squaredNorm()), std::sqrt(b.squaredNorm())});
    return std::sqrt((a - b).squaredNorm()) <= rel_tol * scale;
  }
}

template <class S = double>
struct Atom {
  S weight;
  BlockMatrix<S> point;
};

/// Probability measure with finitely many atoms. Atom order is meaningful
/// for split targeting; canonical() produces an order-free copy for
/// comparisons.
template <class S = double>
class DiscreteMeasure {
 public:
  DiscreteMeasure() = default;
  explicit DiscreteMeasure(std::vector<Atom<S>> atoms) : atoms_(std::move(atoms)) {
    validate();
  }

  static DiscreteMeasure dirac(const BlockMatrix<S>& X) {
    DiscreteMeasure m;
    m.atoms_.push_back({S(1), X});
    return m;
  }

  const std::vector<Atom<S>>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  const Atom<S>& atom(std::size_t i) const { return atoms_.at(i); }

  S total_mass() const {
    S m(0);
    for (const auto& a : atoms_) m = m + a.weight;
    return m;
  }

  BlockMatrix<S> barycenter() const {
    BlockMatrix<S> b;
    for (const auto& a : atoms_) b = b + a.point * a.weight;
    return b;
  }

  /// Adds mass at X, merging into an existing atom at the same point.
  void add_mass(const S& w, const BlockMatrix<S>& X) {
    for (auto& a : atoms_) {
      if (points_equal<S>(a.point, X)) {
        a.weight = a.weight + w;
        return;
      }
    }
    atoms_.push_back({w, X});
  }

  void scale_weight(std::size_t i, const S& factor) { atoms_.at(i).weight = atoms_.at(i).weight * factor; }
  void remove_atom(std::size_t i) { atoms_.erase(atoms_.begin() + static_cast<std::ptrdiff_t>(i)); }

  DiscreteMeasure canonical() const {
    DiscreteMeasure m = *this;
    std::sort(m.atoms_.begin(), m.atoms_.end(), [](const Atom<S>& x, const Atom<S>& y) {
      return detail::point_cmp<S>(x.point, y.point) < 0;
    });
    return m;
  }

  void validate() const {
    S mass(0);
    for (const auto& a : atoms_) {
      if (!(weight_positive(a.weight))) throw std::invalid_argument("DiscreteMeasure: nonpositive atom weight");
      mass = mass + a.weight;
    }
    if constexpr (scalar_is_exact<S>::value) {
      if (!(mass == S(1))) throw std::invalid_argument("DiscreteMeasure: total mass is not 1");
    } else {
      if (std::abs(static_cast<double>(mass) - 1.0) > 1e-12)
        throw std::invalid_argument("DiscreteMeasure: total mass is not 1");
    }
  }

 private:
  static bool weight_positive(const S& w) {
    if constexpr (scalar_is_exact<S>::value) {
      return w.sign() > 0;
    } else {
      return w > 0;
    }
  }

  std::vector<Atom<S>> atoms_;
};

/// Exact equality of measures up to atom order (exact scalars).
template <class S>
bool measures_equal(const DiscreteMeasure<S>& a, const DiscreteMeasure<S>& b) {
  if (a.size() != b.size()) return false;
  const auto ca = a.canonical(), cb = b.canonical();
  for (std::size_t i = 0; i < ca.size(); ++i) {
    if (!(ca.atom(i).weight == cb.atom(i).weight)) return false;
    if (!(ca.atom(i).point == cb.atom(i).point)) return false;
  }
  return true;
}

/// Tolerant equality up to atom order (floating scalars).
inline bool measures_close(const DiscreteMeasure<double>& a, const DiscreteMeasure<double>& b,
                           double tol = 1e-12) {
  if (a.size() != b.size()) return false;
  const auto ca = a.canonical(), cb = b.canonical();
  for (std::size_t i = 0; i < ca.size(); ++i) {
    if (std::abs(ca.atom(i).weight - cb.atom(i).weight) > tol) return false;
    if (!points_equal<double>(ca.atom(i).point, cb.atom(i).point, tol)) return false;
  }
  return true;
}

inline DiscreteMeasure<double> to_double(const DiscreteMeasure<QuadExt>& m) {
  std::vector<Atom<double>> atoms;
  atoms.reserve(m.size());
  for (const auto& a : m.atoms()) atoms.push_back({a.weight.to_double(), to_double(a.point)});
  return DiscreteMeasure<double>(std::move(atoms));
}
inline const DiscreteMeasure<double>& to_double(const DiscreteMeasure<double>& m) { return m; }

/// One elementary split: atom `target` loses a fraction `lam` of its mass,
/// redistributed onto B (share s) and C (share 1-s). B - C must be rank one
/// and the target point must sit at the matching convex combination.
template <class S = double>
struct SplitStep {
  std::size_t target = 0;
  BlockMatrix<S> B, C;
  S s = S(0);
  S lam = S(1);
};

template <class S = double>
struct LaminateCertificate {
  BlockMatrix<S> root;
  std::vector<SplitStep<S>> steps;
};

namespace detail {

template <class S>
bool unit_interval_open(const S& s) {
  if constexpr (scalar_is_exact<S>::value) {
    return s.sign() > 0 && (S(1) - s).sign() > 0;
  } else {
    return s > 0 && s < 1;
  }
}

template <class S>
bool unit_interval_closed(const S& s) {
  if constexpr (scalar_is_exact<S>::value) {
    return s.sign() >= 0 && (S(1) - s).sign() >= 0;
  } else {
    return s >= 0 && s <= 1;
  }
}

}  // namespace detail

/// Applies one split in place. Throws std::invalid_argument when the step is
/// not a valid lamination move. tol is the relative tolerance for floating
/// scalars; exact scalars are checked exactly.
template <class S>
void elementary_split(DiscreteMeasure<S>& mu, const SplitStep<S>& step, double tol = 1e-10) {
  if (step.target >= mu.size())
    throw std::invalid_argument("elementary_split: target index " + std::to_string(step.target) +
                                " out of range (measure has " + std::to_string(mu.size()) + " atoms)");
  if (!detail::unit_interval_open<S>(step.s))
    throw std::invalid_argument("elementary_split: share s must lie strictly between 0 and 1");
  if (!detail::unit_interval_closed<S>(step.lam))
    throw std::invalid_argument("elementary_split: fraction lam must lie in [0,1]");

  const BlockMatrix<S> D = step.B - step.C;
  const int r = block_rank<S>(D, tol);
  if (r != 1)
    throw std::invalid_argument("elementary_split: B - C has rank " + std::to_string(r) +
                                ", expected rank 1");

  const BlockMatrix<S> A = mu.atom(step.target).point;
  const BlockMatrix<S> combo = step.B * step.s + step.C * (S(1) - step.s);
  if constexpr (scalar_is_exact<S>::value) {
    if (!(A == combo))
      throw std::invalid_argument("elementary_split: target is not the convex combination s B + (1-s) C");
  } else {
    const double scale = 1.0 + std::sqrt(static_cast<double>(A.squaredNorm()));
    if (std::sqrt(static_cast<double>((A - combo).squaredNorm())) > tol * scale)
      throw std::invalid_argument("elementary_split: target is not the convex combination s B + (1-s) C");
  }

  const S moved = mu.atom(step.target).weight * step.lam;
  const S keep_factor = S(1) - step.lam;
  mu.scale_weight(step.target, keep_factor);
  const bool drop = [&] {
    if constexpr (scalar_is_exact<S>::value) {
      return mu.atom(step.target).weight.sign() == 0;
    } else {
      return mu.atom(step.target).weight == 0.0;
    }
  }();
  if (drop) mu.remove_atom(step.target);
  mu.add_mass(moved * step.s, step.B);
  mu.add_mass(moved * (S(1) - step.s), step.C);
}

/// Replays a certificate from its root Dirac mass. Step indices refer to the
/// evolving measure: atoms keep their positions, a fully consumed target is
/// removed, and the two children are appended (or merged into equal points).
template <class S>
DiscreteMeasure<S> replay(const LaminateCertificate<S>& cert, double tol = 1e-10) {
  DiscreteMeasure<S> mu = DiscreteMeasure<S>::dirac(cert.root);
  for (std::size_t k = 0; k < cert.steps.size(); ++k) {
    try {
      elementary_split<S>(mu, cert.steps[k], tol);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("replay: step " + std::to_string(k) + ": " + e.what());
    }
  }
  return mu;
}

/// Integrand for measure moments. Built from a fixed family so reports can
/// label them; evaluation is always in double.
struct MomentFunctional {
  std::string label;
  std::function<double(const BlockMatrix<double>&)> fn;

  double operator()(const BlockMatrix<double>& X) const { return fn(X); }

  static MomentFunctional one() {
    return {"1", [](const BlockMatrix<double>&) { return 1.0; }};
  }
  static MomentFunctional vec_pow(double q) {
    return {"|v|^" + std::to_string(q), [q](const BlockMatrix<double>& X) {
              return std::pow(X.v.norm(), q);
            }};
  }
  static MomentFunctional mat_pow(double p) {
    return {"|M|^" + std::to_string(p), [p](const BlockMatrix<double>& X) {
              return std::pow(X.M.norm(), p);
            }};
  }
  static MomentFunctional ray_dist(const RayDirection& a) {
    return {"dist_ray", [a](const BlockMatrix<double>& X) { return dist_to_Ka(X, a); }};
  }
  static MomentFunctional min_ray_dist(std::vector<RayDirection> rays) {
    if (rays.empty()) throw std::invalid_argument("min_ray_dist: empty ray set");
    return {"min_dist_rays", [rays = std::move(rays)](const BlockMatrix<double>& X) {
              double best = std::numeric_limits<double>::infinity();
              for (const auto& r : rays) best = std::min(best, dist_to_Ka(X, r));
              return best;
            }};
  }
  static MomentFunctional cone_dist(const KSearchConfig& cfg = {}) {
    return {"dist_cone", [cfg](const BlockMatrix<double>& X) { return dist_to_K(X, cfg); }};
  }
};

template <class S>
double moment(const DiscreteMeasure<S>& mu, const MomentFunctional& f) {
  double acc = 0.0;
  for (const auto& a : mu.atoms()) acc += to_double(a.weight) * f(to_double(a.point));
  return acc;
}

struct RaySupportFit {
  bool found = false;
  Vec2 direction = Vec2(1, 0);  // canonical sign
  double max_ray_dist = 0.0;
};

/// Tests whether every atom sits on a single directional cone line K_a and
/// recovers the direction. Candidate direction comes from the heaviest atom
/// with a nonzero velocity, falling back to the dominant eigenvector of the
/// mean symmetrized matrix part.
template <class S>
RaySupportFit fit_ray_support(const DiscreteMeasure<S>& mu, double tol = 1e-9) {
  RaySupportFit fit;
  Vec2 cand = Vec2::Zero();
  double best_w = -1.0;
  double scale = 0.0;
  std::vector<Atom<double>> atoms;
  atoms.reserve(mu.size());
  for (const auto& a : mu.atoms()) atoms.push_back({to_double(a.weight), to_double(a.point)});
  for (const auto& a : atoms) scale = std::max(scale, std::sqrt(a.point.squaredNorm()));
  for (const auto& a : atoms) {
    if (a.point.v.norm() > 1e-13 * std::max(1.0, scale) && a.weight > best_w) {
      best_w = a.weight;
      cand = a.point.v;
    }
  }
  if (best_w < 0) {
    Mat2 Msym = Mat2::Zero();
    for (const auto& a : atoms) Msym += a.weight * 0.5 * (a.point.M + a.point.M.transpose());
    Eigen::SelfAdjointEigenSolver<Mat2> es(Msym);
    // dominant |eigenvalue| direction
    const int idx = std::abs(es.eigenvalues()(0)) > std::abs(es.eigenvalues()(1)) ? 0 : 1;
    cand = es.eigenvectors().col(idx);
  }
  if (cand.norm() == 0) cand = Vec2(1, 0);
  const RayDirection dir = RayDirection(cand).canonicalized();
  double worst = 0.0;
  for (const auto& a : atoms) worst = std::max(worst, dist_to_Ka(a.point, dir));
  fit.direction = dir.unit();
  fit.max_ray_dist = worst;
  fit.found = worst <= tol * std::max(1.0, scale);
  return fit;
}

}  // namespace lamlab
