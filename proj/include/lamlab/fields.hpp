#pragma once

// Piecewise constant planar fields on grids or convex cell lists, weak form
// residual functionals against polynomial test bumps, and the conversions
// between potentials, velocity-stress pairs, and block gradients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lamlab/geometry.hpp"
#include "lamlab/matspace.hpp"
#include "lamlab/parallel.hpp"
#include "lamlab/realize.hpp"

namespace lamlab {

// ---------------------------------------------------------------------------
// quadrature
// ---------------------------------------------------------------------------

struct GaussRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;  // sum to 2
};

/// Gauss-Legendre rule of the given order, cached. Nodes come from Newton
/// iteration on the Legendre recurrence; order n integrates polynomials of
/// degree 2n - 1 exactly.
inline const GaussRule& gauss_legendre(int order) {
  if (order < 1 || order > 64) throw std::invalid_argument("gauss_legendre: order out of range");
  static std::mutex mu;
  static std::map<int, GaussRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(order);
  if (it != cache.end()) return it->second;

  GaussRule rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  const int n = order;
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double p1 = 0, dp = 1;
    for (int iter = 0; iter < 100; ++iter) {
      double pa = 1, pb = x;
      for (int k = 2; k <= n; ++k) {
        const double pc = ((2 * k - 1) * x * pb - (k - 1) * pa) / k;
        pa = pb;
        pb = pc;
      }
      p1 = pb;
      dp = n * (x * pb - pa) / (x * x - 1);
      const double step = p1 / dp;
      x -= step;
      if (std::abs(step) < 1e-15) break;
    }
    rule.nodes[i] = x;
    rule.weights[i] = 2.0 / ((1 - x * x) * dp * dp);
  }
  return cache.emplace(order, std::move(rule)).first->second;
}

/// Integrates f over a convex polygon: fan triangulation, each triangle
/// mapped through the degenerate bilinear (Duffy) transform and integrated
/// with a tensor Gauss rule. The map is bilinear, so the result is exact
/// whenever f is a polynomial with per-variable degree <= 2*order - 3.
template <class T, class F>
T integrate_polygon(const ConvexPolygon& poly, F&& f, T acc, int order = 8) {
  if (poly.empty()) return acc;
  const GaussRule& g = gauss_legendre(order);
  const auto& v = poly.vertices();
  const Vec2 v0 = v[0];
  for (std::size_t t = 1; t + 1 < v.size(); ++t) {
    const Vec2 e1 = v[t] - v0;
    const Vec2 e2 = v[t + 1] - v[t];
    const double c = e1.x() * e2.y() - e1.y() * e2.x();  // twice the signed triangle area
    if (c == 0) continue;
    for (int a = 0; a < order; ++a) {
      const double xi = 0.5 * (g.nodes[a] + 1);
      const double wa = 0.5 * g.weights[a] * xi * c;  // xi * c is the Duffy Jacobian
      for (int b = 0; b < order; ++b) {
        const double eta = 0.5 * (g.nodes[b] + 1);
        const Vec2 x = v0 + xi * (e1 + eta * e2);
        acc += (wa * 0.5 * g.weights[b]) * f(x);
      }
    }
  }
  return acc;
}

// ---------------------------------------------------------------------------
// sampled fields
// ---------------------------------------------------------------------------

inline double value_norm(double v) { return std::abs(v); }
inline double value_norm(const Vec2& v) { return v.norm(); }
inline double value_norm(const Mat2& v) { return v.norm(); }
inline double value_norm(const BlockMatrix<double>& v) { return block_norm(v); }

template <class T>
struct FieldCell {
  ConvexPolygon poly;
  T value;
};

/// Piecewise constant field over a rectangular domain. Always carries the
/// grid geometry; `values` holds cell-center samples (row major, may be empty
/// for purely cell-based fields) and `cells` an optional exact polygonal
/// representation whose cells tile the domain.
template <class T>
struct SampledField {
  PlanarDomain domain;
  std::size_t nx = 0, ny = 0;
  double hx = 0, hy = 0;
  std::vector<T> values;
  std::vector<FieldCell<T>> cells;

  bool exact() const { return !cells.empty(); }
  bool has_grid() const { return !values.empty(); }

  Vec2 center(std::size_t i, std::size_t j) const {
    return Vec2(domain.x0 + (i + 0.5) * hx, domain.y0 + (j + 0.5) * hy);
  }
  ConvexPolygon cell_rect(std::size_t i, std::size_t j) const {
    return ConvexPolygon::rect(domain.x0 + i * hx, domain.y0 + j * hy,
                               domain.x0 + (i + 1) * hx, domain.y0 + (j + 1) * hy);
  }
  const T& grid_value(std::size_t i, std::size_t j) const { return values[j * nx + i]; }

  /// Exact fields answer from the first cell containing p; grid fields from
  /// the sample whose cell contains p (clamped to the domain).
  T value_at(const Vec2& p) const {
    if (exact()) {
      const double tol = 1e-12 * (domain.diameter() + 1.0);
      const FieldCell<T>* best = nullptr;
      double best_gap = std::numeric_limits<double>::infinity();
      for (const auto& c : cells) {
        const double gap = c.poly.outside_gap(p);
        if (gap <= tol) return c.value;
        if (gap < best_gap) {
          best_gap = gap;
          best = &c;
        }
      }
      if (best) return best->value;
      throw std::out_of_range("SampledField: point outside every cell");
    }
    if (!has_grid()) throw std::logic_error("SampledField: empty field");
    const auto clampi = [](double t, std::size_t n) {
      const long k = static_cast<long>(std::floor(t));
      return static_cast<std::size_t>(std::clamp<long>(k, 0, static_cast<long>(n) - 1));
    };
    return grid_value(clampi((p.x() - domain.x0) / hx, nx), clampi((p.y() - domain.y0) / hy, ny));
  }
};

using ScalarField = SampledField<double>;
using VectorField = SampledField<Vec2>;
using MatrixField = SampledField<Mat2>;
using BlockField = SampledField<BlockMatrix<double>>;

inline std::size_t grid_steps(double extent, double h) {
  if (!(h > 0)) throw std::invalid_argument("SampledField: spacing must be positive");
  return std::max<std::size_t>(static_cast<std::size_t>(std::ceil(extent / h - 1e-9)), 1);
}

/// Grid field sampling f at cell centers. The requested spacing is rounded so
/// the cells tile the domain exactly.
template <class T, class F>
SampledField<T> make_grid_field(const PlanarDomain& dom, double h, F&& f) {
  dom.validate();
  SampledField<T> out;
  out.domain = dom;
  out.nx = grid_steps(dom.width(), h);
  out.ny = grid_steps(dom.height(), h);
  out.hx = dom.width() / static_cast<double>(out.nx);
  out.hy = dom.height() / static_cast<double>(out.ny);
  out.values.resize(out.nx * out.ny);
  for (std::size_t j = 0; j < out.ny; ++j)
    for (std::size_t i = 0; i < out.nx; ++i) out.values[j * out.nx + i] = f(out.center(i, j));
  return out;
}

/// Cell field over an explicit polygonal tiling. When fill_grid is set the
/// companion grid is sampled from the cells (intended for small cell counts).
template <class T>
SampledField<T> make_cell_field(const PlanarDomain& dom, std::vector<FieldCell<T>> cells, double h,
                                bool fill_grid = false) {
  dom.validate();
  SampledField<T> out;
  out.domain = dom;
  out.nx = grid_steps(dom.width(), h);
  out.ny = grid_steps(dom.height(), h);
  out.hx = dom.width() / static_cast<double>(out.nx);
  out.hy = dom.height() / static_cast<double>(out.ny);
  out.cells = std::move(cells);
  if (fill_grid) {
    out.values.resize(out.nx * out.ny);
    for (std::size_t j = 0; j < out.ny; ++j)
      for (std::size_t i = 0; i < out.nx; ++i) out.values[j * out.nx + i] = out.value_at(out.center(i, j));
  }
  return out;
}

/// Copies the structure of a field while mapping every stored value.
template <class T, class F>
auto transform_field(const SampledField<T>& f, F&& fn)
    -> SampledField<std::decay_t<decltype(fn(std::declval<const T&>()))>> {
  using U = std::decay_t<decltype(fn(std::declval<const T&>()))>;
  SampledField<U> out;
  out.domain = f.domain;
  out.nx = f.nx;
  out.ny = f.ny;
  out.hx = f.hx;
  out.hy = f.hy;
  out.values.reserve(f.values.size());
  for (const auto& v : f.values) out.values.push_back(fn(v));
  out.cells.reserve(f.cells.size());
  for (const auto& c : f.cells) out.cells.push_back({c.poly, fn(c.value)});
  return out;
}

// ---------------------------------------------------------------------------
// example velocity fields
// ---------------------------------------------------------------------------

/// Unidirectional shear: u(x) = profile(a . x) * a_perp / |a| where a_perp is
/// the clockwise quarter turn of a, so shear_flow(e1, id) gives u = x * (-e2).
/// Divergence free for any profile since a_perp . a = 0.
inline VectorField shear_flow(const Vec2& a, const std::function<double(double)>& profile,
                              const PlanarDomain& dom, double h) {
  const double len = a.norm();
  if (!(len > 0)) throw std::invalid_argument("shear_flow: direction must be nonzero");
  const Vec2 d = Vec2(a.y(), -a.x()) / len;
  return make_grid_field<Vec2>(dom, h, [&](const Vec2& x) { return profile(a.dot(x)) * d; });
}

/// Stationary weak solution with a wedge of rest: e1 below the horizontal
/// axis, e1 + e2 above the diagonal y = x, zero in the wedge between. Both
/// interfaces are characteristic (u . n = 0 on each side), so momentum and
/// divergence residuals vanish for tests supported inside the domain. The
/// velocity is not a single shear: the flow direction changes across cells.
inline VectorField wedge_counterexample(const PlanarDomain& dom, double h) {
  if (!(dom.x0 >= 0 && dom.x1 <= 1))
    throw std::invalid_argument("wedge_counterexample: domain must lie in the unit strip 0 <= x <= 1");
  const ConvexPolygon full = dom.polygon();
  const auto lower_upper = full.split(Vec2(0, 1), 0.0);
  const auto wedge_top = lower_upper.second.split(Vec2(-1, 1), 0.0);
  std::vector<FieldCell<Vec2>> cells;
  if (!lower_upper.first.empty()) cells.push_back({lower_upper.first, Vec2(1, 0)});
  if (!wedge_top.first.empty()) cells.push_back({wedge_top.first, Vec2(0, 0)});
  if (!wedge_top.second.empty()) cells.push_back({wedge_top.second, Vec2(1, 1)});
  return make_cell_field<Vec2>(dom, std::move(cells), h, true);
}

// ---------------------------------------------------------------------------
// potentials and pairs
// ---------------------------------------------------------------------------

struct PotentialCell {
  ConvexPolygon poly;
  Vec2 dg;   // gradient of the scalar potential
  Mat2 dG;   // Jacobian of the matrix potential
};

struct PotentialTriple {
  PlanarDomain domain;
  std::vector<PotentialCell> cells;
};

inline PotentialTriple potential_from_map(const PiecewiseAffineMap& map) {
  PotentialTriple out;
  out.domain = map.domain;
  out.cells.reserve(map.cells.size());
  for (const auto& c : map.cells) out.cells.push_back({c.poly, c.G.v, c.G.M});
  return out;
}

struct FlowPair {
  VectorField u;
  MatrixField X;
};

/// u = -J dg and X = u (x) u - cof(dG)^T on the shared cell tiling. When the
/// potential gradient sits on the cone, cof(y (x) y)^T equals the recomputed
/// u (x) u bitwise and X is exactly zero.
inline FlowPair potential_to_pair(const PotentialTriple& pot) {
  const double h = pot.domain.diameter() / static_cast<double>(std::max(pot.domain.hint, 2));
  std::vector<FieldCell<Vec2>> ucells;
  std::vector<FieldCell<Mat2>> xcells;
  ucells.reserve(pot.cells.size());
  xcells.reserve(pot.cells.size());
  for (const auto& c : pot.cells) {
    const Vec2 u = Vec2(c.dg.y(), -c.dg.x());  // -J dg
    const Mat2 X = outer(u, u) - cof(c.dG).transpose().eval();
    ucells.push_back({c.poly, u});
    xcells.push_back({c.poly, X});
  }
  FlowPair out;
  out.u = make_cell_field<Vec2>(pot.domain, std::move(ucells), h, false);
  out.X = make_cell_field<Mat2>(pot.domain, std::move(xcells), h, false);
  return out;
}

/// A = (J u ; J u (x) J u + J X J). Round trip with potential_to_pair
/// recovers (dg ; dG) up to one rounding in X per entry.
inline BlockField pair_to_block(const VectorField& u, const MatrixField& X) {
  const Mat2 Jm = rot90_matrix<double>();
  const auto lift_pair = [&](const Vec2& uv, const Mat2& xv) {
    BlockMatrix<double> A;
    A.v = rot90(uv);
    A.M = outer(A.v, A.v) + (Jm * xv * Jm).eval();
    return A;
  };
  BlockField out;
  out.domain = u.domain;
  out.nx = u.nx;
  out.ny = u.ny;
  out.hx = u.hx;
  out.hy = u.hy;
  if (u.exact()) {
    if (!X.exact() || X.cells.size() != u.cells.size())
      throw std::invalid_argument("pair_to_block: cell structure mismatch");
    out.cells.reserve(u.cells.size());
    for (std::size_t c = 0; c < u.cells.size(); ++c)
      out.cells.push_back({u.cells[c].poly, lift_pair(u.cells[c].value, X.cells[c].value)});
    return out;
  }
  if (u.nx != X.nx || u.ny != X.ny || !u.has_grid() || !X.has_grid())
    throw std::invalid_argument("pair_to_block: grid structure mismatch");
  out.values.reserve(u.values.size());
  for (std::size_t k = 0; k < u.values.size(); ++k)
    out.values.push_back(lift_pair(u.values[k], X.values[k]));
  return out;
}

// ---------------------------------------------------------------------------
// test functions
// ---------------------------------------------------------------------------

/// Tensor product bumps b(x) = (1 - xi^2)^3 (1 - eta^2)^3 in normalized box
/// coordinates. C^2, supported on the box, polynomial of degree 6 per
/// variable inside it, with analytic gradients.
class TestFunctionFamily {
 public:
  struct Bump {
    Vec2 center;
    Vec2 radius;
  };

  /// per_side x per_side bumps on an even partition of the domain, supports
  /// shrunk to stay strictly interior.
  static TestFunctionFamily interior_grid(const PlanarDomain& dom, int per_side = 5,
                                          double shrink = 0.98) {
    dom.validate();
    if (per_side < 1) throw std::invalid_argument("TestFunctionFamily: per_side must be >= 1");
    TestFunctionFamily fam;
    const double bw = dom.width() / per_side, bh = dom.height() / per_side;
    for (int j = 0; j < per_side; ++j)
      for (int i = 0; i < per_side; ++i)
        fam.bumps_.push_back({Vec2(dom.x0 + (i + 0.5) * bw, dom.y0 + (j + 0.5) * bh),
                              Vec2(0.5 * shrink * bw, 0.5 * shrink * bh)});
    return fam;
  }

  static TestFunctionFamily single(const Vec2& center, const Vec2& radius) {
    if (!(radius.x() > 0 && radius.y() > 0))
      throw std::invalid_argument("TestFunctionFamily: radius must be positive");
    TestFunctionFamily fam;
    fam.bumps_.push_back({center, radius});
    return fam;
  }

  /// One bump whose support extends past the domain boundary, for boundary
  /// flux probes. Only meaningful with the global residual forms.
  static TestFunctionFamily spanning(const PlanarDomain& dom, double scale = 1.5) {
    dom.validate();
    if (!(scale > 0)) throw std::invalid_argument("TestFunctionFamily: scale must be positive");
    return single(Vec2(0.5 * (dom.x0 + dom.x1), 0.5 * (dom.y0 + dom.y1)),
                  Vec2(0.5 * scale * dom.width(), 0.5 * scale * dom.height()));
  }

  std::size_t size() const { return bumps_.size(); }
  const Bump& bump(std::size_t k) const { return bumps_[k]; }

  bool inside_domain(const PlanarDomain& dom) const {
    const double tol = 1e-12 * dom.diameter();
    for (const auto& b : bumps_) {
      if (b.center.x() - b.radius.x() < dom.x0 - tol || b.center.x() + b.radius.x() > dom.x1 + tol ||
          b.center.y() - b.radius.y() < dom.y0 - tol || b.center.y() + b.radius.y() > dom.y1 + tol)
        return false;
    }
    return true;
  }

  double value(std::size_t k, const Vec2& p) const {
    const Bump& b = bumps_[k];
    return edge((p.x() - b.center.x()) / b.radius.x()) * edge((p.y() - b.center.y()) / b.radius.y());
  }

  Vec2 gradient(std::size_t k, const Vec2& p) const {
    const Bump& b = bumps_[k];
    const double xi = (p.x() - b.center.x()) / b.radius.x();
    const double eta = (p.y() - b.center.y()) / b.radius.y();
    return Vec2(dedge(xi) * edge(eta) / b.radius.x(), edge(xi) * dedge(eta) / b.radius.y());
  }

  ConvexPolygon support_box(std::size_t k) const {
    const Bump& b = bumps_[k];
    return ConvexPolygon::rect(b.center.x() - b.radius.x(), b.center.y() - b.radius.y(),
                               b.center.x() + b.radius.x(), b.center.y() + b.radius.y());
  }

  static double edge(double t) {
    const double s = 1 - t * t;
    return s <= 0 ? 0.0 : s * s * s;
  }
  static double dedge(double t) {
    const double s = 1 - t * t;
    return s <= 0 ? 0.0 : -6.0 * t * s * s;
  }
  /// Antiderivative of edge, clamped to the support.
  static double edge_antideriv(double t) {
    const double c = std::clamp(t, -1.0, 1.0);
    const double c2 = c * c;
    return c * (1 + c2 * (-1 + c2 * (3.0 / 5.0 - c2 / 7.0)));
  }

 private:
  std::vector<Bump> bumps_;
};

// ---------------------------------------------------------------------------
// weak form residuals
// ---------------------------------------------------------------------------

struct ResidualReport {
  double max_abs = 0;
  std::vector<double> per_test;
};

namespace detail {

inline ConvexPolygon clip_to_box(const ConvexPolygon& poly, const TestFunctionFamily::Bump& b) {
  ConvexPolygon r = poly.clipped({Vec2(1, 0), b.center.x() + b.radius.x()});
  r = r.clipped({Vec2(-1, 0), -(b.center.x() - b.radius.x())});
  r = r.clipped({Vec2(0, 1), b.center.y() + b.radius.y()});
  r = r.clipped({Vec2(0, -1), -(b.center.y() - b.radius.y())});
  return r;
}

/// Exact integral of grad b over an axis-aligned rectangle, via the product
/// antiderivatives of the bump factors.
inline Vec2 rect_grad_integral(const TestFunctionFamily::Bump& b, double x0, double y0, double x1,
                               double y1) {
  const auto nx = [&](double x) { return (x - b.center.x()) / b.radius.x(); };
  const auto ny = [&](double y) { return (y - b.center.y()) / b.radius.y(); };
  const double ex = TestFunctionFamily::edge(std::clamp(nx(x1), -1.0, 1.0)) -
                    TestFunctionFamily::edge(std::clamp(nx(x0), -1.0, 1.0));
  const double ey = TestFunctionFamily::edge(std::clamp(ny(y1), -1.0, 1.0)) -
                    TestFunctionFamily::edge(std::clamp(ny(y0), -1.0, 1.0));
  const double ix = b.radius.x() * (TestFunctionFamily::edge_antideriv(nx(x1)) -
                                    TestFunctionFamily::edge_antideriv(nx(x0)));
  const double iy = b.radius.y() * (TestFunctionFamily::edge_antideriv(ny(y1)) -
                                    TestFunctionFamily::edge_antideriv(ny(y0)));
  return Vec2(ex * iy, ix * ey);
}

/// Calls visit(cell_value_index, grad_integral) for every field cell meeting
/// the support of bump k. Works for grid and exact fields; the integral is
/// exact in both modes.
template <class T, class Visit>
void for_each_test_cell(const SampledField<T>& f, const TestFunctionFamily& tests, std::size_t k,
                        const Visit& visit) {
  const auto& b = tests.bump(k);
  if (f.exact()) {
    const double bx0 = b.center.x() - b.radius.x(), bx1 = b.center.x() + b.radius.x();
    const double by0 = b.center.y() - b.radius.y(), by1 = b.center.y() + b.radius.y();
    for (std::size_t c = 0; c < f.cells.size(); ++c) {
      const auto box = f.cells[c].poly.bbox();
      if (box.min().x() > bx1 || box.max().x() < bx0 || box.min().y() > by1 || box.max().y() < by0)
        continue;
      const ConvexPolygon clip = clip_to_box(f.cells[c].poly, b);
      if (clip.empty()) continue;
      const Vec2 ig = integrate_polygon(
          clip, [&](const Vec2& x) { return tests.gradient(k, x); }, Vec2(0.0, 0.0));
      visit(c, ig);
    }
    return;
  }
  if (!f.has_grid()) throw std::logic_error("residual: empty field");
  const auto lo = [](double t, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<long>(static_cast<long>(std::floor(t)), 0,
                                                     static_cast<long>(n) - 1));
  };
  const auto hi = [](double t, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<long>(static_cast<long>(std::ceil(t)), 1,
                                                     static_cast<long>(n)));
  };
  const std::size_t i0 = lo((b.center.x() - b.radius.x() - f.domain.x0) / f.hx, f.nx);
  const std::size_t i1 = hi((b.center.x() + b.radius.x() - f.domain.x0) / f.hx, f.nx);
  const std::size_t j0 = lo((b.center.y() - b.radius.y() - f.domain.y0) / f.hy, f.ny);
  const std::size_t j1 = hi((b.center.y() + b.radius.y() - f.domain.y0) / f.hy, f.ny);
  for (std::size_t j = j0; j < j1; ++j) {
    const double y0 = f.domain.y0 + j * f.hy, y1 = y0 + f.hy;
    for (std::size_t i = i0; i < i1; ++i) {
      const double x0 = f.domain.x0 + i * f.hx;
      const Vec2 ig = rect_grad_integral(b, x0, y0, x0 + f.hx, y1);
      if (ig.x() != 0 || ig.y() != 0) visit(j * f.nx + i, ig);
    }
  }
}

template <class T>
const T& cell_value(const SampledField<T>& f, std::size_t idx) {
  return f.exact() ? f.cells[idx].value : f.values[idx];
}

inline void require_interior(const TestFunctionFamily& tests, const PlanarDomain& dom) {
  if (!tests.inside_domain(dom))
    throw std::invalid_argument("residual: test support crosses the domain boundary");
}

template <class T>
void require_nonempty(const SampledField<T>& f) {
  if (!f.exact() && !f.has_grid()) throw std::invalid_argument("residual: empty field");
}

}  // namespace detail

/// Momentum residual max_k |sum_cells row_i(u (x) u - X) . integral of
/// grad b_k| over both coordinate rows. X may be null for the pressureless
/// form without stress. Exact quadrature per cell, so the only error in a
/// weak solution is roundoff accumulation.
inline ResidualReport momentum_residual(const VectorField& u, const MatrixField* X,
                                        const TestFunctionFamily& tests) {
  detail::require_interior(tests, u.domain);
  detail::require_nonempty(u);
  if (X) {
    if (X->exact() != u.exact())
      throw std::invalid_argument("momentum_residual: representation mismatch");
    const std::size_t nu = u.exact() ? u.cells.size() : u.values.size();
    const std::size_t nx = X->exact() ? X->cells.size() : X->values.size();
    if (nu != nx) throw std::invalid_argument("momentum_residual: cell structure mismatch");
  }
  ResidualReport rep;
  rep.per_test.assign(2 * tests.size(), 0.0);
  parallel_for(tests.size(), [&](std::size_t k) {
    Vec2 acc = Vec2::Zero();
    detail::for_each_test_cell(u, tests, k, [&](std::size_t idx, const Vec2& ig) {
      const Vec2& uv = detail::cell_value(u, idx);
      Mat2 S = outer(uv, uv);
      if (X) S -= detail::cell_value(*X, idx);
      acc += S * ig;
    });
    rep.per_test[2 * k] = acc.x();
    rep.per_test[2 * k + 1] = acc.y();
  });
  for (double r : rep.per_test) rep.max_abs = std::max(rep.max_abs, std::abs(r));
  return rep;
}

/// Divergence residual max_k |sum_cells u . integral of grad b_k|. With
/// global set, test supports may cross the domain boundary and the form
/// integrates over the domain only, so it sees boundary flux.
inline ResidualReport divergence_residual(const VectorField& u, const TestFunctionFamily& tests,
                                          bool global = false) {
  if (!global) detail::require_interior(tests, u.domain);
  detail::require_nonempty(u);
  ResidualReport rep;
  rep.per_test.assign(tests.size(), 0.0);
  parallel_for(tests.size(), [&](std::size_t k) {
    double acc = 0;
    detail::for_each_test_cell(u, tests, k, [&](std::size_t idx, const Vec2& ig) {
      acc += detail::cell_value(u, idx).dot(ig);
    });
    rep.per_test[k] = acc;
  });
  for (double r : rep.per_test) rep.max_abs = std::max(rep.max_abs, std::abs(r));
  return rep;
}

/// Weak curl of each row of a block field: max_k |sum_cells row . J integral
/// of grad b_k|, three rows per test. Vanishes up to roundoff when the field
/// is the gradient of a continuous piecewise affine potential.
inline ResidualReport curl_residual(const BlockField& A, const TestFunctionFamily& tests) {
  detail::require_interior(tests, A.domain);
  detail::require_nonempty(A);
  ResidualReport rep;
  rep.per_test.assign(3 * tests.size(), 0.0);
  parallel_for(tests.size(), [&](std::size_t k) {
    Vec3 acc = Vec3::Zero();
    detail::for_each_test_cell(A, tests, k, [&](std::size_t idx, const Vec2& ig) {
      const Mat32 rows = stacked(detail::cell_value(A, idx));
      const Vec2 jig = rot90(ig);
      for (int r = 0; r < 3; ++r) acc[r] += rows.row(r).dot(jig);
    });
    for (int r = 0; r < 3; ++r) rep.per_test[3 * k + r] = acc[r];
  });
  for (double r : rep.per_test) rep.max_abs = std::max(rep.max_abs, std::abs(r));
  return rep;
}

struct RenormalizationReport {
  ResidualReport residual;
  double precheck_max = 0;   // worst divergence residual among the beta_i u
  bool precheck_ok = false;
};

/// Residuals of the renormalized forms sum f(beta) u . grad b. Each beta_i u
/// must itself be weakly divergence free (checked against tol_in and
/// reported); f must have at most linear growth, which is sampled over the
/// occurring beta values and enforced.
inline RenormalizationReport renormalization_residual(
    const VectorField& u, const std::vector<ScalarField>& betas,
    const std::function<double(const Eigen::VectorXd&)>& f, const TestFunctionFamily& tests,
    double tol_in = 1e-8) {
  detail::require_interior(tests, u.domain);
  detail::require_nonempty(u);
  const std::size_t n = u.exact() ? u.cells.size() : u.values.size();
  for (const auto& b : betas) {
    const std::size_t nb = b.exact() ? b.cells.size() : b.values.size();
    if (nb != n || b.exact() != u.exact())
      throw std::invalid_argument("renormalization_residual: beta structure mismatch");
  }

  // f(beta) per cell, with the linear growth check |f(z)| <= C (1 + |z|).
  std::vector<double> fv(n);
  Eigen::VectorXd z(static_cast<Eigen::Index>(betas.size()));
  constexpr double growth_cap = 1e6;
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t i = 0; i < betas.size(); ++i)
      z[static_cast<Eigen::Index>(i)] = detail::cell_value(betas[i], c);
    fv[c] = f(z);
    if (!std::isfinite(fv[c]) || std::abs(fv[c]) > growth_cap * (1 + z.norm()))
      throw std::invalid_argument("renormalization_residual: f violates the linear growth bound");
  }

  RenormalizationReport rep;
  for (const auto& beta : betas) {
    VectorField bu = u;
    if (u.exact()) {
      for (std::size_t c = 0; c < n; ++c) bu.cells[c].value *= beta.cells[c].value;
    } else {
      for (std::size_t c = 0; c < n; ++c) bu.values[c] *= beta.values[c];
    }
    rep.precheck_max = std::max(rep.precheck_max, divergence_residual(bu, tests).max_abs);
  }
  rep.precheck_ok = rep.precheck_max <= tol_in;

  rep.residual.per_test.assign(tests.size(), 0.0);
  parallel_for(tests.size(), [&](std::size_t k) {
    double acc = 0;
    detail::for_each_test_cell(u, tests, k, [&](std::size_t idx, const Vec2& ig) {
      acc += fv[idx] * detail::cell_value(u, idx).dot(ig);
    });
    rep.residual.per_test[k] = acc;
  });
  for (double r : rep.residual.per_test)
    rep.residual.max_abs = std::max(rep.residual.max_abs, std::abs(r));
  return rep;
}

// ---------------------------------------------------------------------------
// norms and map statistics
// ---------------------------------------------------------------------------

/// L^p norm of a piecewise constant field, exact over its own tiling.
template <class T>
double lp_norm(const SampledField<T>& f, double p) {
  if (!(p >= 1)) throw std::invalid_argument("lp_norm: p must be >= 1");
  double acc = 0;
  if (f.exact()) {
    for (const auto& c : f.cells) acc += c.poly.area() * std::pow(value_norm(c.value), p);
  } else if (f.has_grid()) {
    for (const auto& v : f.values) acc += std::pow(value_norm(v), p);
    acc *= f.hx * f.hy;
  } else {
    throw std::logic_error("lp_norm: empty field");
  }
  return std::pow(acc, 1.0 / p);
}

struct WStatRow {
  double p = 0;
  double scalar_norm = 0;  // || Dg ||_p over the domain
  double matrix_norm = 0;  // || DG ||_{p/2}
  double ratio = 0;        // scalar_norm / sqrt(matrix_norm)
};

/// Sobolev statistics of a realized potential pair: the L^p norm of the
/// scalar gradient, the L^{p/2} norm of the matrix Jacobian, and their scale
/// ratio, which is exactly 1 for a map whose gradient sits on the cone.
inline WStatRow wstat(const PiecewiseAffineMap& map, double p) {
  if (!(p > 0)) throw std::invalid_argument("wstat: p must be positive");
  WStatRow row;
  row.p = p;
  double sg = 0, sG = 0;
  for (const auto& c : map.cells) {
    const double a = c.poly.area();
    sg += a * std::pow(c.G.v.norm(), p);
    sG += a * std::pow(c.G.M.norm(), 0.5 * p);
  }
  row.scalar_norm = std::pow(sg, 1.0 / p);
  row.matrix_norm = std::pow(sG, 2.0 / p);
  row.ratio = row.scalar_norm / std::sqrt(row.matrix_norm);
  return row;
}

/// Domain average of the cone distance of the gradient.
inline double cone_distance_avg(const PiecewiseAffineMap& map) {
  std::vector<double> contrib(map.cells.size());
  parallel_for(map.cells.size(), [&](std::size_t i) {
    contrib[i] = map.cells[i].poly.area() * dist_to_K(map.cells[i].G);
  });
  double acc = 0;
  for (double v : contrib) acc += v;
  return acc / map.domain.area();
}

}  // namespace lamlab
