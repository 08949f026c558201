#pragma once
// Rigidity-side diagnostics. A divergence-free PSD tensor field has a radial
// trace profile that grows with the radius; velocity fields whose second
// moments degenerate are shears; fields that never rest share one travel
// direction; and the rank-one curve t -> e(t) (x) e(t) satisfies an exact
// ellipticity identity. Each diagnostic reports a verdict plus the witnesses
// needed to audit it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include <lamlab/fields.hpp>
#include <lamlab/geometry.hpp>
#include <lamlab/matspace.hpp>
#include <lamlab/parallel.hpp>

namespace lamlab {

// ---------------------------------------------------------------------------
// radial trace monotonicity
// ---------------------------------------------------------------------------

struct TraceQuadrature {
  int n_theta = 512;      // angular nodes per ring
  int radial_init = 16;   // starting Simpson interval count per radius
  int radial_max = 4096;  // refinement stops here even if the estimate is loose
  double rel_tol = 1e-7;  // stop once the doubling estimate falls below this
};

struct MonotonicityProfile {
  Vec2 center = Vec2::Zero();
  std::vector<double> radii;
  std::vector<double> values;     // f(R) = (1/R) * integral of tr A over B_R
  std::vector<double> estimates;  // per-radius quadrature error estimates
  double tol_mono = 0;            // 3x the worst estimate, with a roundoff floor
  double max_drop = 0;            // largest decrease between consecutive values
  bool monotone = false;          // nondecreasing within tol_mono
  double div_residual = 0;        // worst weak divergence among the rows of A
  bool div_ok = false;            // residual within tol_div; a warning, not a gate
  bool decay_consistent = false;  // tail nonincreasing and ending well below the peak
};

namespace detail {

inline double min_eigenvalue_sym(const Mat2& A) {
  const double half_tr = 0.5 * (A(0, 0) + A(1, 1));
  const double half_diff = 0.5 * (A(0, 0) - A(1, 1));
  const double off = 0.5 * (A(0, 1) + A(1, 0));
  return half_tr - std::sqrt(half_diff * half_diff + off * off);
}

template <class Visit>
void check_matrix_samples(const MatrixField& A, const Visit& visit) {
  for (const auto& v : A.values) visit(v);
  for (const auto& c : A.cells) visit(c.value);
}

/// One positional sample per stored cell: centroid and area for exact fields,
/// cell center and cell area for grids.
template <class T, class Visit>
void for_each_sample(const SampledField<T>& f, const Visit& visit) {
  if (f.exact()) {
    for (const auto& c : f.cells) visit(c.poly.centroid(), c.poly.area(), c.value);
    return;
  }
  if (!f.has_grid()) throw std::invalid_argument("rigidity: empty field");
  const double w = f.hx * f.hy;
  for (std::size_t j = 0; j < f.ny; ++j)
    for (std::size_t i = 0; i < f.nx; ++i) visit(f.center(i, j), w, f.grid_value(i, j));
}

}  // namespace detail

/// Radial profile f(R) = (1/R) * integral of tr A over B_R(center) with a
/// monotonicity verdict. Preconditions per the hypothesis being tested: the
/// samples must be symmetric PSD (violations throw), and the rows of A must
/// be weakly divergence free (violations only clear div_ok, since watching
/// the profile fail is the point of feeding in a bad tensor). Quadrature is
/// polar: a fixed angular rule times composite Simpson in r, refined by
/// doubling until the change falls under rel_tol; the last change is the
/// error estimate, and the monotonicity tolerance is three times the worst
/// of them. Radii run in parallel.
inline MonotonicityProfile trace_monotonicity(const MatrixField& A, const Vec2& center,
                                              const std::vector<double>& radii,
                                              const TraceQuadrature& quad = {},
                                              double tol_psd = 1e-10, double tol_div = 1e-8) {
  if (radii.empty()) throw std::invalid_argument("trace_monotonicity: no radii");
  for (std::size_t k = 0; k < radii.size(); ++k) {
    if (!(radii[k] > 0) || (k > 0 && !(radii[k] > radii[k - 1])))
      throw std::invalid_argument("trace_monotonicity: radii must be positive and increasing");
  }
  if (quad.n_theta < 4 || quad.radial_init < 2 || quad.radial_max < quad.radial_init)
    throw std::invalid_argument("trace_monotonicity: malformed quadrature parameters");
  const double R_max = radii.back();
  if (center.x() - R_max < A.domain.x0 - 1e-12 || center.x() + R_max > A.domain.x1 + 1e-12 ||
      center.y() - R_max < A.domain.y0 - 1e-12 || center.y() + R_max > A.domain.y1 + 1e-12)
    throw std::invalid_argument("trace_monotonicity: ball of largest radius exits the domain");

  double scale = 0, min_eig = 0, asym = 0;
  detail::check_matrix_samples(A, [&](const Mat2& M) {
    scale = std::max(scale, M.norm());
    asym = std::max(asym, std::abs(M(0, 1) - M(1, 0)));
    min_eig = std::min(min_eig, detail::min_eigenvalue_sym(M));
  });
  if (asym > tol_psd * (1 + scale))
    throw std::domain_error("trace_monotonicity: samples are not symmetric");
  if (min_eig < -tol_psd * (1 + scale))
    throw std::domain_error("trace_monotonicity: samples are not positive semidefinite");

  MonotonicityProfile out;
  out.center = center;
  out.radii = radii;
  out.values.assign(radii.size(), 0.0);
  out.estimates.assign(radii.size(), 0.0);

  // Weak divergence of each row, probed with an interior bump family. The
  // verdict is advisory: the profile is still computed so a failing input
  // shows what the failing hypothesis costs.
  {
    const auto tests = TestFunctionFamily::interior_grid(A.domain, 4);
    const auto row0 = transform_field(A, [](const Mat2& M) { return Vec2(M(0, 0), M(0, 1)); });
    const auto row1 = transform_field(A, [](const Mat2& M) { return Vec2(M(1, 0), M(1, 1)); });
    out.div_residual = std::max(divergence_residual(row0, tests).max_abs,
                                divergence_residual(row1, tests).max_abs);
    out.div_ok = out.div_residual <= tol_div;
  }

  // Ring mean of tr A at radius r, already multiplied by the polar Jacobian.
  const auto ring = [&](double r) {
    double acc = 0;
    for (int t = 0; t < quad.n_theta; ++t) {
      const double th = (2 * M_PI * t) / quad.n_theta;
      const Vec2 p = center + r * Vec2(std::cos(th), std::sin(th));
      acc += A.value_at(p).trace();
    }
    return acc * (2 * M_PI / quad.n_theta) * r;
  };

  parallel_for(radii.size(), [&](std::size_t k) {
    const double R = radii[k];
    const auto simpson = [&](int m) {
      const double dr = R / m;
      double acc = ring(0.0) + ring(R);
      for (int i = 1; i < m; ++i) acc += (i % 2 ? 4.0 : 2.0) * ring(i * dr);
      return acc * dr / 3.0;
    };
    int m = quad.radial_init;
    double prev = simpson(m);
    double cur = prev, est = std::numeric_limits<double>::infinity();
    while (m < quad.radial_max) {
      m *= 2;
      cur = simpson(m);
      est = std::abs(cur - prev);
      if (est <= quad.rel_tol * (std::abs(cur) + 1)) break;
      prev = cur;
    }
    out.values[k] = cur / R;
    out.estimates[k] = est / R;
  });

  double worst_est = 0;
  for (double e : out.estimates) worst_est = std::max(worst_est, e);
  double peak = 0;
  for (double v : out.values) peak = std::max(peak, std::abs(v));
  out.tol_mono = std::max(3 * worst_est, 1e-12 * (1 + peak));
  for (std::size_t k = 0; k + 1 < out.values.size(); ++k)
    out.max_drop = std::max(out.max_drop, out.values[k] - out.values[k + 1]);
  out.monotone = out.max_drop <= out.tol_mono;

  // Decay probe for integrable tensors: a nonincreasing tail that ends well
  // below the peak is consistent with the all-of-plane conclusion A = 0,
  // which a bounded window cannot assert outright.
  if (out.values.size() >= 3) {
    bool tail_down = true;
    for (std::size_t k = out.values.size() / 2; k + 1 < out.values.size(); ++k)
      if (out.values[k + 1] > out.values[k] + out.tol_mono) tail_down = false;
    out.decay_consistent = tail_down && out.values.back() <= 0.5 * peak;
  }
  return out;
}

// ---------------------------------------------------------------------------
// shear detection
// ---------------------------------------------------------------------------

struct ShearDetection {
  Vec2 axis = Vec2::Zero();   // unit direction of variation; values run along rot90(axis)
  bool degenerate = false;    // zero field: every axis works
  double sigma_min = 0;       // smallest eigenvalue of the normalized second moment
  double constancy_dev = 0;   // worst in-line spread relative to max |u|
  std::vector<Vec2> profile;  // (position along axis, signed speed) per line bucket
};

/// Decides whether u is a single shear: the normalized second-moment matrix
/// must be near rank one (smallest eigenvalue at most tol) and the samples
/// must be constant along each line orthogonal to the recovered axis within
/// tol * max|u|. The axis is the small eigenvector with canonical sign.
/// Lines are formed by bucketing the axis coordinate, so on grids the buckets
/// are exact grid rows or columns when the axis is grid aligned. The zero
/// field passes with the degenerate flag set. Any other failure returns
/// nothing.
inline std::optional<ShearDetection> detect_shear(const VectorField& u, double tol) {
  if (!(tol > 0)) throw std::invalid_argument("detect_shear: tolerance must be positive");
  struct Sample {
    Vec2 pos;
    double w;
    Vec2 val;
  };
  std::vector<Sample> samples;
  Mat2 second = Mat2::Zero();
  double energy = 0, max_u = 0;
  detail::for_each_sample(u, [&](const Vec2& p, double w, const Vec2& v) {
    samples.push_back({p, w, v});
    second += w * outer(v, v);
    energy += w * v.squaredNorm();
    max_u = std::max(max_u, v.norm());
  });
  if (samples.empty()) throw std::invalid_argument("detect_shear: empty field");

  ShearDetection det;
  if (energy == 0) {
    det.degenerate = true;
    return det;
  }

  Eigen::SelfAdjointEigenSolver<Mat2> eig(second / energy);
  if (eig.info() != Eigen::Success) throw std::runtime_error("detect_shear: eigensolver failed");
  det.sigma_min = eig.eigenvalues()(0);
  if (det.sigma_min > tol) return std::nullopt;
  Vec2 axis = eig.eigenvectors().col(0);
  if (axis.x() < -1e-14 || (std::abs(axis.x()) <= 1e-14 && axis.y() < 0)) axis = -axis;
  det.axis = axis;
  const Vec2 perp = rot90(axis);

  // Bucket the axis coordinate: grid-aligned rows collapse to exact buckets,
  // anything else groups near-coincident lines. In-bucket spread is measured
  // on both frame components so variation along the value direction is
  // caught too.
  const double bin_w = u.exact() ? 1e-9 * (1 + u.domain.diameter())
                                 : 0.4 * std::min(u.hx, u.hy);
  std::sort(samples.begin(), samples.end(),
            [&](const Sample& a, const Sample& b) { return a.pos.dot(axis) < b.pos.dot(axis); });
  double spread = 0;
  std::size_t lo = 0;
  while (lo < samples.size()) {
    const double s0 = samples[lo].pos.dot(axis);
    std::size_t hi = lo;
    double smin[2] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    double smax[2] = {-smin[0], -smin[1]};
    double s_acc = 0, v_acc = 0;
    while (hi < samples.size() && samples[hi].pos.dot(axis) - s0 <= bin_w) {
      const double c0 = samples[hi].val.dot(axis), c1 = samples[hi].val.dot(perp);
      smin[0] = std::min(smin[0], c0);
      smax[0] = std::max(smax[0], c0);
      smin[1] = std::min(smin[1], c1);
      smax[1] = std::max(smax[1], c1);
      s_acc += samples[hi].pos.dot(axis);
      v_acc += c1;
      ++hi;
    }
    spread = std::max({spread, smax[0] - smin[0], smax[1] - smin[1]});
    const double n = static_cast<double>(hi - lo);
    det.profile.emplace_back(s_acc / n, v_acc / n);
    lo = hi;
  }
  det.constancy_dev = spread / std::max(max_u, 1e-300);
  if (spread > tol * max_u) return std::nullopt;
  return det;
}

// ---------------------------------------------------------------------------
// direction constancy
// ---------------------------------------------------------------------------

struct DirectionReport {
  double deviation = 0;          // mean |P - mean P| over the cells with u != 0
  double zero_fraction = 0;      // area fraction where u vanishes
  std::optional<Vec2> direction; // top eigenvector of the mean projector, if constant
};

/// Tests whether the normalized direction field u/|u| is constant where u is
/// nonzero, through the projector P = u (x) u / |u|^2. The hypothesis needs
/// u != 0 off a tol-fraction of the area: a larger rest set throws, because
/// the direction is free to change across a region of rest and the verdict
/// would be meaningless there.
inline DirectionReport direction_constancy(const VectorField& u, double tol) {
  if (!(tol >= 0)) throw std::invalid_argument("direction_constancy: tolerance must be nonnegative");
  struct Entry {
    double w;
    Mat2 P;
  };
  std::vector<Entry> entries;
  double area = 0, zero_area = 0;
  detail::for_each_sample(u, [&](const Vec2&, double w, const Vec2& v) {
    area += w;
    const double n2 = v.squaredNorm();
    if (n2 == 0) {
      zero_area += w;
      return;
    }
    entries.push_back({w, Mat2(outer(v, v) / n2)});
  });
  if (area <= 0) throw std::invalid_argument("direction_constancy: empty field");

  DirectionReport rep;
  rep.zero_fraction = zero_area / area;
  if (rep.zero_fraction > tol) {
    std::ostringstream msg;
    msg << "direction_constancy: u vanishes on a fraction " << rep.zero_fraction
        << " of the domain; across a rest set of positive measure the travel "
           "direction is free to change, so constancy cannot be concluded";
    throw std::domain_error(msg.str());
  }

  const double pos_area = area - zero_area;
  Mat2 mean = Mat2::Zero();
  for (const auto& e : entries) mean += e.w * e.P;
  mean /= pos_area;
  for (const auto& e : entries) rep.deviation += e.w * (e.P - mean).norm();
  rep.deviation /= pos_area;

  if (rep.deviation <= tol) {
    Eigen::SelfAdjointEigenSolver<Mat2> eig(mean);
    if (eig.info() != Eigen::Success)
      throw std::runtime_error("direction_constancy: eigensolver failed");
    Vec2 d = eig.eigenvectors().col(1);
    if (d.x() < -1e-14 || (std::abs(d.x()) <= 1e-14 && d.y() < 0)) d = -d;
    rep.direction = d;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// ellipticity of the rank-one curve
// ---------------------------------------------------------------------------

struct EllipticityReport {
  double constant = -2.0;  // the certified C with C * det(D) = |D|^2
  double max_abs_dev = 0;  // worst |C * det(D) - |D|^2| over the sample pairs
  bool certified = false;  // identity holds within 1e-12 at every pair
};

/// Checks the exact identity -2 det(G(t) - G(s)) = |G(t) - G(s)|^2 for the
/// curve G(t) = e(t) (x) e(t) of unit rank-one projectors. The identity is
/// algebraic, so the deviation is pure roundoff; 1e-12 certifies C = -2.
inline EllipticityReport gamma_ellipticity(const std::vector<std::pair<double, double>>& pairs) {
  EllipticityReport rep;
  for (const auto& [t, s] : pairs) {
    const Vec2 et(std::cos(t), std::sin(t));
    const Vec2 es(std::cos(s), std::sin(s));
    const Mat2 D = outer(et, et) - outer(es, es);
    const double lhs = -2.0 * (D(0, 0) * D(1, 1) - D(0, 1) * D(1, 0));
    const double rhs = D.squaredNorm();
    rep.max_abs_dev = std::max(rep.max_abs_dev, std::abs(lhs - rhs));
  }
  rep.certified = rep.max_abs_dev <= 1e-12;
  return rep;
}

}  // namespace lamlab
