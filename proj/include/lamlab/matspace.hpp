#pragma once

// State space for velocity/stress pairs: X = (v, M) with v in R^2 and M a
// 2x2 matrix, carried as one 3x2 block with Frobenius geometry
// |X|^2 = |v|^2 + |M|^2. The constitutive cone is {(y, y (x) y)} and its
// one-dimensional rays select a fixed direction for y.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "lamlab/numeric.hpp"

namespace lamlab {

template <class S>
using Vec2T = Eigen::Matrix<S, 2, 1>;
template <class S>
using Mat2T = Eigen::Matrix<S, 2, 2>;

using Vec2 = Vec2T<double>;
using Mat2 = Mat2T<double>;
using Vec3 = Eigen::Matrix<double, 3, 1>;
using Mat32 = Eigen::Matrix<double, 3, 2>;

/// Velocity/stress state. v is the vector part, M the matrix part.
template <class S = double>
struct BlockMatrix {
  Vec2T<S> v = Vec2T<S>::Zero();
  Mat2T<S> M = Mat2T<S>::Zero();

  BlockMatrix() = default;
  BlockMatrix(const Vec2T<S>& v_, const Mat2T<S>& M_) : v(v_), M(M_) {}

  S squaredNorm() const { return v.squaredNorm() + M.squaredNorm(); }

  BlockMatrix operator+(const BlockMatrix& o) const { return {v + o.v, M + o.M}; }
  BlockMatrix operator-(const BlockMatrix& o) const { return {v - o.v, M - o.M}; }
  BlockMatrix operator-() const { return {-v, -M}; }
  BlockMatrix operator*(const S& c) const { return {Vec2T<S>(v * c), Mat2T<S>(M * c)}; }
  friend BlockMatrix operator*(const S& c, const BlockMatrix& X) { return X * c; }

  bool operator==(const BlockMatrix& o) const {
    for (int i = 0; i < 2; ++i)
      if (!(v(i) == o.v(i))) return false;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        if (!(M(i, j) == o.M(i, j))) return false;
    return true;
  }
  bool operator!=(const BlockMatrix& o) const { return !(*this == o); }

  template <class T>
  BlockMatrix<T> cast() const {
    BlockMatrix<T> out;
    for (int i = 0; i < 2; ++i) out.v(i) = static_cast<T>(v(i));
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) out.M(i, j) = static_cast<T>(M(i, j));
    return out;
  }
};

inline BlockMatrix<double> to_double(const BlockMatrix<QuadExt>& X) {
  BlockMatrix<double> out;
  for (int i = 0; i < 2; ++i) out.v(i) = X.v(i).to_double();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) out.M(i, j) = X.M(i, j).to_double();
  return out;
}
inline const BlockMatrix<double>& to_double(const BlockMatrix<double>& X) { return X; }

template <class S>
Mat2T<S> outer(const Vec2T<S>& a, const Vec2T<S>& b) {
  Mat2T<S> m;
  m(0, 0) = a(0) * b(0);
  m(0, 1) = a(0) * b(1);
  m(1, 0) = a(1) * b(0);
  m(1, 1) = a(1) * b(1);
  return m;
}

/// Lift of a velocity y to the constitutive cone: (y, y (x) y).
template <class S>
BlockMatrix<S> lift(const Vec2T<S>& y) {
  return {y, outer<S>(y, y)};
}

/// Counterclockwise quarter turn J: (x, y) -> (-y, x). J^2 = -Id.
template <class S>
Vec2T<S> rot90(const Vec2T<S>& a) {
  Vec2T<S> r;
  r(0) = -a(1);
  r(1) = a(0);
  return r;
}

template <class S>
Mat2T<S> rot90_matrix() {
  Mat2T<S> J;
  J(0, 0) = S(0);
  J(0, 1) = S(-1);
  J(1, 0) = S(1);
  J(1, 1) = S(0);
  return J;
}

/// Cofactor matrix: cof([[a,b],[c,d]]) = [[d,-b],[-c,a]]. Linear in 2x2,
/// and cof(M)^T = J M J^T with J the quarter turn.
template <class S>
Mat2T<S> cof(const Mat2T<S>& m) {
  Mat2T<S> c;
  c(0, 0) = m(1, 1);
  c(0, 1) = -m(0, 1);
  c(1, 0) = -m(1, 0);
  c(1, 1) = m(0, 0);
  return c;
}

template <class S>
S det2(const Mat2T<S>& m) {
  return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
}

inline Mat32 stacked(const BlockMatrix<double>& X) {
  Mat32 A;
  A.row(0) = X.v.transpose();
  A.block<2, 2>(1, 0) = X.M;
  return A;
}

/// Unit direction in the plane. Normalizes on construction; the zero vector
/// is rejected. Sign is kept as given unless canonicalized().
class RayDirection {
 public:
  explicit RayDirection(const Vec2& a) {
    const double n = a.norm();
    if (!(n > 0) || !std::isfinite(n)) throw std::invalid_argument("RayDirection: zero or non-finite direction");
    u_ = a / n;
  }
  static RayDirection e1() { return RayDirection(Vec2(1, 0)); }
  static RayDirection e2() { return RayDirection(Vec2(0, 1)); }

  const Vec2& unit() const { return u_; }

  /// Flips sign so the first nonzero coordinate is positive.
  RayDirection canonicalized() const {
    Vec2 u = u_;
    if (u(0) < 0 || (u(0) == 0 && u(1) < 0)) u = -u;
    return RayDirection(u);
  }

 private:
  Vec2 u_;
};

namespace detail {

// Real roots of 2 t^3 + p t - c = 0 (derivative of the ray objective).
inline std::array<double, 3> depressed_cubic_roots(double p, double c, int* count) {
  // monic form t^3 + P t + Q = 0
  const double P = p / 2.0, Q = -c / 2.0;
  std::array<double, 3> roots{0, 0, 0};
  if (P == 0 && Q == 0) {
    *count = 1;
    return roots;
  }
  const double disc = -4.0 * P * P * P - 27.0 * Q * Q;
  if (P < 0 && disc > 0) {
    // three real roots, trigonometric form
    const double m = 2.0 * std::sqrt(-P / 3.0);
    double arg = 3.0 * Q / (P * m);
    arg = std::clamp(arg, -1.0, 1.0);
    const double theta = std::acos(arg) / 3.0;
    for (int k = 0; k < 3; ++k)
      roots[static_cast<size_t>(k)] = m * std::cos(theta - 2.0 * M_PI * k / 3.0);
    *count = 3;
    return roots;
  }
  // one real root, Cardano with cancellation-safe branch
  const double rad = std::sqrt(std::max(0.0, Q * Q / 4.0 + P * P * P / 27.0));
  const double u3 = -Q / 2.0 + (Q >= 0 ? -rad : rad);
  const double u = std::cbrt(u3);
  const double t = (u != 0.0) ? u - P / (3.0 * u) : std::cbrt(-Q);
  roots[0] = t;
  *count = 1;
  return roots;
}

}  // namespace detail

/// Distance from X to the ray {(t a, t^2 a (x) a) : t >= 0} union its mirror
/// t < 0, i.e. to the full one-directional cone line K_a. The objective in t
/// is the quartic t^4 + (1 - 2 c2) t^2 - 2 c1 t + |X|^2 with c1 = (a, v),
/// c2 = (a, M a); its stationary points solve a depressed cubic.
inline double dist_to_Ka(const BlockMatrix<double>& X, const RayDirection& ray) {
  const Vec2& a = ray.unit();
  const double c1 = a.dot(X.v);
  const double c2 = a.dot(X.M * a);
  const double n2 = X.squaredNorm();
  const auto g = [&](double t) {
    const double t2 = t * t;
    return t2 * t2 + (1.0 - 2.0 * c2) * t2 - 2.0 * c1 * t + n2;
  };
  const auto dg = [&](double t) { return 4.0 * t * t * t + 2.0 * (1.0 - 2.0 * c2) * t - 2.0 * c1; };
  const auto ddg = [&](double t) { return 12.0 * t * t + 2.0 * (1.0 - 2.0 * c2); };

  int count = 0;
  auto roots = detail::depressed_cubic_roots(1.0 - 2.0 * c2, c1, &count);
  double best = g(0.0);
  for (int k = 0; k < count; ++k) {
    double t = roots[static_cast<size_t>(k)];
    if (!std::isfinite(t)) continue;
    // polish the stationary point
    for (int it = 0; it < 4; ++it) {
      const double h = ddg(t);
      if (h == 0) break;
      const double step = dg(t) / h;
      if (!std::isfinite(step)) break;
      t -= step;
    }
    if (std::isfinite(t)) best = std::min(best, g(t));
  }
  if (!std::isfinite(best)) {
    // dense scan fallback; only reachable for extreme inputs
    const double T = 2.0 * (1.0 + std::sqrt(n2));
    best = g(0.0);
    for (int i = 0; i <= 4096; ++i) {
      const double t = -T + 2.0 * T * i / 4096.0;
      best = std::min(best, g(t));
    }
  }
  return std::sqrt(std::max(0.0, best));
}

/// Exact distance of the centered state (0, a Id) to either axis ray line:
/// sqrt(a^2 + a - 1/4) once a >= 1/2, and a*sqrt(2) below that.
inline double center_ray_distance(double a) {
  if (a >= 0.5) return std::sqrt(a * a + a - 0.25);
  return std::abs(a) * std::sqrt(2.0);
}

/// Exact distance of a lifted on-axis state lift(s e_i), s^2 = a, to the ray
/// line of the other axis: sqrt(a + a^2).
inline double cross_ray_distance(double a) { return std::sqrt(a + a * a); }

struct KSearchConfig {
  int grid = 64;       // coarse grid per side over the search square
  int starts = 8;      // damped-Newton descents from the best grid cells
  int max_iter = 80;
  double grad_tol = 1e-13;
};

struct KSearchResult {
  double value = 0;    // distance, not squared
  Vec2 argmin = Vec2::Zero();
  bool converged = false;
};

/// Distance from X to the full cone {(y, y (x) y) : y in R^2}. Coarse grid
/// over a ball of radius 2(1+|X|) followed by damped Newton descents; the
/// objective h(y) = |y - v|^2 + |y (x) y - M|^2 is quartic with gradient
/// 2(y - v) + 4|y|^2 y - 4 sym(M) y.
inline KSearchResult dist_to_K_search(const BlockMatrix<double>& X, const KSearchConfig& cfg = {}) {
  const Mat2 Ms = 0.5 * (X.M + X.M.transpose());
  const auto h = [&](const Vec2& y) {
    return (y - X.v).squaredNorm() + (outer<double>(y, y) - X.M).squaredNorm();
  };
  const auto grad = [&](const Vec2& y) -> Vec2 {
    return 2.0 * (y - X.v) + 4.0 * y.squaredNorm() * y - 4.0 * (Ms * y);
  };
  const auto hess = [&](const Vec2& y) -> Mat2 {
    Mat2 H = (2.0 + 4.0 * y.squaredNorm()) * Mat2::Identity();
    H += 8.0 * outer<double>(y, y);
    H -= 4.0 * Ms;
    return H;
  };

  const double r0 = 2.0 * (1.0 + std::sqrt(X.squaredNorm()));
  const int g = std::max(2, cfg.grid);
  std::vector<std::pair<double, Vec2>> cand;
  cand.reserve(static_cast<size_t>(g) * static_cast<size_t>(g));
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) {
      Vec2 y(-r0 + 2.0 * r0 * i / (g - 1), -r0 + 2.0 * r0 * j / (g - 1));
      cand.emplace_back(h(y), y);
    }
  }
  const int starts = std::min<int>(std::max(1, cfg.starts), static_cast<int>(cand.size()));
  std::partial_sort(cand.begin(), cand.begin() + starts, cand.end(),
                    [](const auto& a, const auto& b) { return a.first < b.first; });

  KSearchResult best;
  best.value = std::numeric_limits<double>::infinity();
  for (int s = 0; s < starts; ++s) {
    Vec2 y = cand[static_cast<size_t>(s)].second;
    double fy = h(y);
    double mu = 0.0;
    bool conv = false;
    for (int it = 0; it < cfg.max_iter; ++it) {
      const Vec2 gvec = grad(y);
      if (gvec.norm() <= cfg.grad_tol * std::max(1.0, fy)) {
        conv = true;
        break;
      }
      Mat2 H = hess(y);
      Vec2 step;
      for (int tries = 0; tries < 60; ++tries) {
        Mat2 Hm = H + mu * Mat2::Identity();
        const double d = det2<double>(Hm);
        if (std::abs(d) > 1e-300) {
          step = -Hm.inverse() * gvec;
          const Vec2 yn = y + step;
          const double fn = h(yn);
          if (fn < fy) {
            y = yn;
            fy = fn;
            mu = mu * 0.25;
            break;
          }
        }
        mu = (mu == 0.0) ? 1e-6 : mu * 8.0;
        if (tries == 59) {
          conv = gvec.norm() <= 1e-9 * std::max(1.0, fy);
          it = cfg.max_iter;  // give up on this start
        }
      }
    }
    const double gn = grad(y).norm();
    if (fy < best.value) {
      best.value = fy;
      best.argmin = y;
      best.converged = conv || gn <= 1e-9 * std::max(1.0, 1.0 + fy);
    }
  }
  best.value = std::sqrt(std::max(0.0, best.value));
  return best;
}

inline double dist_to_K(const BlockMatrix<double>& X, const KSearchConfig& cfg = {}) {
  return dist_to_K_search(X, cfg).value;
}

}  // namespace lamlab
