#pragma once

// Convex polygon utilities for piecewise affine constructions: halfplane
// clipping, areas, centroids, and extent queries along a direction.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lamlab/matspace.hpp"

namespace lamlab {

/// Halfplane {x : n . x <= c}.
struct HalfPlane {
  Vec2 n;
  double c = 0;
};

/// Convex polygon, counterclockwise vertex order. Fewer than three vertices
/// means empty. Clipping two polygons against complementary halfplanes
/// produces bitwise identical points on the cut, so adjacent pieces share
/// their interface exactly.
class ConvexPolygon {
 public:
  ConvexPolygon() = default;
  explicit ConvexPolygon(std::vector<Vec2> pts) : pts_(std::move(pts)) {
    if (pts_.size() >= 3 && signed_area() < 0) std::reverse(pts_.begin(), pts_.end());
  }

  static ConvexPolygon rect(double x0, double y0, double x1, double y1) {
    return ConvexPolygon({Vec2(x0, y0), Vec2(x1, y0), Vec2(x1, y1), Vec2(x0, y1)});
  }

  const std::vector<Vec2>& vertices() const { return pts_; }
  bool empty() const { return pts_.size() < 3; }
  std::size_t size() const { return pts_.size(); }

  double signed_area() const {
    double a = 0;
    for (std::size_t i = 0; i < pts_.size(); ++i) {
      const Vec2& p = pts_[i];
      const Vec2& q = pts_[(i + 1) % pts_.size()];
      a += p.x() * q.y() - q.x() * p.y();
    }
    return 0.5 * a;
  }
  double area() const { return empty() ? 0.0 : std::abs(signed_area()); }

  double perimeter() const {
    double s = 0;
    for (std::size_t i = 0; i < pts_.size(); ++i)
      s += (pts_[(i + 1) % pts_.size()] - pts_[i]).norm();
    return s;
  }

  Vec2 centroid() const {
    if (empty()) return Vec2::Zero();
    double a = 0;
    Vec2 c = Vec2::Zero();
    for (std::size_t i = 0; i < pts_.size(); ++i) {
      const Vec2& p = pts_[i];
      const Vec2& q = pts_[(i + 1) % pts_.size()];
      const double w = p.x() * q.y() - q.x() * p.y();
      a += w;
      c += w * (p + q);
    }
    if (a == 0) {  // degenerate: fall back to vertex mean
      c = Vec2::Zero();
      for (const auto& p : pts_) c += p;
      return c / static_cast<double>(pts_.size());
    }
    return c / (3.0 * a);
  }

  /// Min and max of dir . x over the vertices.
  std::pair<double, double> range(const Vec2& dir) const {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& p : pts_) {
      const double t = dir.dot(p);
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
    return {lo, hi};
  }

  Eigen::AlignedBox2d bbox() const {
    Eigen::AlignedBox2d b;
    for (const auto& p : pts_) b.extend(p);
    return b;
  }

  /// Sutherland-Hodgman clip against one halfplane. The crossing parameter
  /// t = dP / (dP - dQ) is invariant under negating the halfplane, so the
  /// two complementary clips cut through bitwise identical points.
  ConvexPolygon clipped(const HalfPlane& h) const {
    if (empty()) return {};
    std::vector<Vec2> out;
    out.reserve(pts_.size() + 2);
    const std::size_t n = pts_.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = h.n.dot(pts_[i]) - h.c;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = (i + 1) % n;
      const bool in_i = d[i] <= 0, in_j = d[j] <= 0;
      if (in_i) out.push_back(pts_[i]);
      if (in_i != in_j) {
        const double t = d[i] / (d[i] - d[j]);
        out.push_back(pts_[i] + t * (pts_[j] - pts_[i]));
      }
    }
    ConvexPolygon poly;
    poly.pts_ = std::move(out);
    if (poly.pts_.size() < 3) poly.pts_.clear();
    return poly;
  }

  /// Both sides of the line n . x = c; shared cut points are bitwise equal.
  std::pair<ConvexPolygon, ConvexPolygon> split(const Vec2& n, double c) const {
    return {clipped({n, c}), clipped({-n, -c})};
  }

  /// Signed distance outside the polygon: <= 0 inside, > 0 outside by that
  /// amount. Bounding box gaps participate so that a degenerate polygon,
  /// whose edges may all share one support line, still rejects far points.
  double outside_gap(const Vec2& p) const {
    if (empty()) return std::numeric_limits<double>::infinity();
    double gap = -std::numeric_limits<double>::infinity();
    const auto box = bbox();
    gap = std::max({gap, box.min().x() - p.x(), p.x() - box.max().x(),
                    box.min().y() - p.y(), p.y() - box.max().y()});
    for (std::size_t i = 0; i < pts_.size(); ++i) {
      const Vec2& a = pts_[i];
      const Vec2& b = pts_[(i + 1) % pts_.size()];
      const Vec2 e = b - a;
      const double len = e.norm();
      if (!(len > 0)) continue;
      const double cross = e.x() * (p.y() - a.y()) - e.y() * (p.x() - a.x());
      gap = std::max(gap, -cross / len);
    }
    return gap;
  }

  /// tol is a distance: points up to tol outside still count.
  bool contains(const Vec2& p, double tol = 1e-12) const {
    return !empty() && outside_gap(p) <= tol;
  }

  /// Drops repeated consecutive vertices and middle vertices of (anti)collinear
  /// edge pairs. Repeated clips can leave such degeneracies behind, and a
  /// near-zero edge has no usable normal. Vertices are only deleted, never
  /// moved, so the surviving coordinates stay bitwise intact.
  ConvexPolygon cleaned(double rel_tol = 1e-12) const {
    if (pts_.size() < 3) return {};
    const double scale = bbox().diagonal().norm() + 1e-300;
    std::vector<Vec2> v = pts_;
    bool changed = true;
    while (changed && v.size() >= 3) {
      changed = false;
      std::vector<Vec2> w;
      w.reserve(v.size());
      for (const auto& p : v) {
        if (!w.empty() && (p - w.back()).norm() <= rel_tol * scale) {
          changed = true;
          continue;
        }
        w.push_back(p);
      }
      while (w.size() >= 2 && (w.front() - w.back()).norm() <= rel_tol * scale) {
        w.pop_back();
        changed = true;
      }
      v.clear();
      const std::size_t n = w.size();
      for (std::size_t i = 0; i < n && n >= 3; ++i) {
        const Vec2 e1 = w[i] - w[(i + n - 1) % n];
        const Vec2 e2 = w[(i + 1) % n] - w[i];
        const double cross = e1.x() * e2.y() - e1.y() * e2.x();
        if (std::abs(cross) <= rel_tol * e1.norm() * e2.norm()) {
          changed = true;
          continue;
        }
        v.push_back(w[i]);
      }
    }
    ConvexPolygon poly;
    if (v.size() >= 3) poly.pts_ = std::move(v);
    return poly;
  }

 private:
  std::vector<Vec2> pts_;
};

/// Axis-aligned rectangular domain with a sampling resolution hint.
struct PlanarDomain {
  double x0 = 0, y0 = 0, x1 = 1, y1 = 1;
  int hint = 256;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  double diameter() const { return std::hypot(width(), height()); }
  ConvexPolygon polygon() const { return ConvexPolygon::rect(x0, y0, x1, y1); }
  bool contains(const Vec2& p, double tol = 0.0) const {
    return p.x() >= x0 - tol && p.x() <= x1 + tol && p.y() >= y0 - tol && p.y() <= y1 + tol;
  }
  void validate() const {
    if (!(x1 > x0) || !(y1 > y0)) throw std::invalid_argument("PlanarDomain: empty rectangle");
    if (hint < 2) throw std::invalid_argument("PlanarDomain: resolution hint must be >= 2");
  }
};

}  // namespace lamlab
