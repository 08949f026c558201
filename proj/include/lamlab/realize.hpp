#pragma once

// Piecewise affine realization of laminate certificates. Each split of the
// measure turns every cell carrying the target gradient into a fine sawtooth
// lamination: periodic strips where the gradient alternates between the two
// child states, glued to the cell boundary through thin transition tents.
// Each tent is preceded by a collar where the map stays bitwise equal to the
// parent affine data, so cells touching the domain boundary always evaluate
// exactly like the root map.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lamlab/geometry.hpp"
#include "lamlab/matspace.hpp"
#include "lamlab/measures.hpp"
#include "lamlab/parallel.hpp"
#include "lamlab/staircase.hpp"

namespace lamlab {

/// Shared affine evaluation so identical data yields bitwise identical
/// values regardless of which wrapper calls it.
inline Vec3 affine_eval(const BlockMatrix<double>& G, const Vec3& off, const Vec2& x) {
  return Vec3(G.v.x() * x.x() + G.v.y() * x.y() + off[0],
              G.M(0, 0) * x.x() + G.M(0, 1) * x.y() + off[1],
              G.M(1, 0) * x.x() + G.M(1, 1) * x.y() + off[2]);
}

struct AffineMapR3 {
  BlockMatrix<double> G;
  Vec3 off = Vec3::Zero();
  Vec3 eval(const Vec2& x) const { return affine_eval(G, off, x); }
};

struct AffineCell {
  ConvexPolygon poly;
  BlockMatrix<double> G;
  Vec3 off = Vec3::Zero();
  Vec3 eval(const Vec2& x) const { return affine_eval(G, off, x); }
};

inline double block_norm(const BlockMatrix<double>& X) { return std::sqrt(X.squaredNorm()); }

/// Rank-one factor D = a (x) b of the gradient jump B - C, with b a unit
/// planar direction snapped onto the axes when nearly axis aligned.
struct RankOneFactor {
  Vec3 a = Vec3::Zero();
  Vec2 b = Vec2::Zero();
  bool ok = false;
};

inline RankOneFactor rank_one_factor(const BlockMatrix<double>& B, const BlockMatrix<double>& C) {
  const Mat32 D = stacked(B - C);
  int best = 0;
  double best2 = -1;
  for (int i = 0; i < 3; ++i) {
    const double n2 = D.row(i).squaredNorm();
    if (n2 > best2) {
      best2 = n2;
      best = i;
    }
  }
  if (!(best2 > 0)) return {};
  Vec2 b = D.row(best).transpose();
  const double nb = b.norm();
  if (std::abs(b.x()) <= 1e-12 * nb) b.x() = 0;
  if (std::abs(b.y()) <= 1e-12 * nb) b.y() = 0;
  b.normalize();
  const bool flip = (std::abs(b.x()) >= std::abs(b.y())) ? (b.x() < 0) : (b.y() < 0);
  if (flip) b = -b;
  RankOneFactor f;
  f.b = b;
  for (int i = 0; i < 3; ++i) f.a[i] = D.row(i).dot(b);
  f.ok = true;
  return f;
}

/// G + a (x) w applied to the stacked 3x2 representation.
inline BlockMatrix<double> add_outer(const BlockMatrix<double>& G, const Vec3& a, const Vec2& w) {
  BlockMatrix<double> r = G;
  r.v += a[0] * w;
  r.M.row(0) += a[1] * w.transpose();
  r.M.row(1) += a[2] * w.transpose();
  return r;
}

/// One lamination pass over a single cell.
struct LaminationSpec {
  BlockMatrix<double> B, C;  // child gradients; parent G ~ s B + (1-s) C
  double s = 0.5;
  double h = 1.0;           // requested period along the lamination direction
  double band_ratio = 1.0 / 128;
  double collar_ratio = 0.5;  // zero-margin width as a fraction of the band
  double slope_cap = std::numeric_limits<double>::infinity();
  double drop_area_factor = 1e-14;
};

/// Splits `parent` into sawtooth cells. Within each period [tau_j, tau_j+1)
/// along direction b the profile w rises with slope (1-s) over the B share
/// and falls with slope s over the C share, vanishing at every tau_j. Near
/// each parent edge the realized profile is min(w, ramp) where the ramp is 0
/// on a collar of the edge and climbs with slope m; collar cells keep the
/// parent data bitwise, w cells carry exactly B or C.
inline std::vector<AffineCell> laminate_cell(const AffineCell& parent, const LaminationSpec& spec) {
  std::vector<AffineCell> out;
  if (parent.poly.empty()) return out;
  const RankOneFactor fac = rank_one_factor(spec.B, spec.C);
  if (!fac.ok) {
    out.push_back(parent);
    return out;
  }
  // Degenerate edges would spawn duplicate support lines below; strip them
  // up front so every region is owned by exactly one edge.
  const ConvexPolygon base = parent.poly.cleaned();
  if (base.empty()) return out;
  const Vec2 b = fac.b;
  const Vec3 a3 = fac.a;
  const auto [t0, t1] = base.range(b);
  const double extent = t1 - t0;
  if (!(extent > 0)) {
    out.push_back(parent);
    return out;
  }
  const int periods = std::max(1, static_cast<int>(std::ceil(extent / spec.h - 1e-9)));
  const double h = extent / periods;
  const auto [q0, q1] = base.range(rot90(b));
  const double perp = q1 - q0;
  const double amp = spec.s * (1 - spec.s) * h;

  double band = std::min(spec.band_ratio * h, perp / 6);
  band = std::max(band, 1e-300);
  double m = amp / band;
  if (m > spec.slope_cap) m = spec.slope_cap;
  if (!(m > 0)) m = 1;
  const double collar = spec.collar_ratio * (amp / m);

  const auto& pts = base.vertices();
  const std::size_t ne = pts.size();
  const double line_tol = 1e-12 * (base.bbox().diagonal().norm() + 1.0);
  std::vector<Vec2> en(ne);
  std::vector<double> ec(ne);
  for (std::size_t i = 0; i < ne; ++i) {
    const Vec2 e = pts[(i + 1) % ne] - pts[i];
    const Vec2 n = Vec2(e.y(), -e.x()).normalized();
    en[i] = n;
    ec[i] = n.dot(pts[i]);
  }

  // Voronoi-style regions: R_i collects points whose nearest edge is i.
  // Edges whose support lines coincide over this polygon must resolve to a
  // single owner, else both would emit the same pieces. Distinct parallel
  // lines pass through the general clip (a zero dn keeps all or nothing,
  // which is the correct nearest-line verdict).
  std::vector<ConvexPolygon> regions(ne);
  for (std::size_t i = 0; i < ne; ++i) {
    ConvexPolygon r = base;
    for (std::size_t f = 0; f < ne && !r.empty(); ++f) {
      if (f == i) continue;
      const Vec2 dn = en[f] - en[i];
      const double dc = ec[f] - ec[i];
      double dev = 0;
      for (const auto& p : pts) dev = std::max(dev, std::abs(dn.dot(p) - dc));
      if (dev <= line_tol) {
        if (f < i) r = ConvexPolygon();
        continue;
      }
      r = r.clipped({dn, dc});
    }
    regions[i] = r;
  }

  const double drop = spec.drop_area_factor * base.area();
  auto emit = [&](ConvexPolygon&& poly, const BlockMatrix<double>& G, const Vec3& off) {
    if (poly.empty() || poly.area() <= drop) return;
    // Clip noise can leave slivers of essentially zero width whose area is
    // roundoff; they carry no area worth keeping and would defeat any
    // point-location distance test.
    const double diag = poly.bbox().diagonal().norm();
    if (poly.area() <= 1e-9 * diag * diag) return;
    AffineCell c;
    c.poly = std::move(poly);
    c.G = G;
    c.off = off;
    out.push_back(std::move(c));
  };

  // Ramp data per edge: value m * (d_e - collar), d_e = c_e - n_e . x.
  std::vector<BlockMatrix<double>> rampG(ne);
  std::vector<Vec3> rampOff(ne);
  for (std::size_t e = 0; e < ne; ++e) {
    rampG[e] = add_outer(parent.G, a3, -m * en[e]);
    rampOff[e] = parent.off + (m * (ec[e] - collar)) * a3;
  }

  for (std::size_t e = 0; e < ne; ++e) {
    if (regions[e].empty()) continue;
    const auto [rlo, rhi] = regions[e].range(b);
    for (int j = 0; j < periods; ++j) {
      const double tau = t0 + j * h;
      const double tau_next = t0 + (j + 1) * h;
      if (tau_next < rlo || tau > rhi) continue;  // region does not reach this period
      const double tmid = tau + spec.s * h;
      const double tend = (j + 1 == periods) ? std::max(t1, tau_next) : tau_next;
      // part 0: rising share, w = (1-s)(t - tau); part 1: falling share,
      // w = s(tau_next - t).
      for (int part = 0; part < 2; ++part) {
        const double lo = part == 0 ? tau : tmid;
        const double hi = part == 0 ? tmid : tend;
        ConvexPolygon strip = regions[e].clipped({-b, -lo}).clipped({b, hi});
        if (strip.empty()) continue;
        const double alpha = part == 0 ? -(1 - spec.s) * tau : spec.s * tau_next;
        const Vec2 beta = part == 0 ? Vec2((1 - spec.s) * b) : Vec2(-spec.s * b);
        // collar: d_e <= collar, map stays bitwise the parent's
        auto [collar_piece, inner] = strip.split(-en[e], collar - ec[e]);
        emit(std::move(collar_piece), parent.G, parent.off);
        if (inner.empty()) continue;
        // w side: w <= m (d_e - collar)
        const Vec2 ln = beta + m * en[e];
        const double lc = m * (ec[e] - collar) - alpha;
        auto [wside, ramp] = inner.split(ln, lc);
        emit(std::move(wside), part == 0 ? spec.B : spec.C, parent.off + alpha * a3);
        emit(std::move(ramp), rampG[e], rampOff[e]);
      }
    }
  }
  return out;
}

/// Gradient-indexed piecewise affine map over a rectangular domain.
class PiecewiseAffineMap {
 public:
  PlanarDomain domain;
  AffineMapR3 root;
  std::vector<AffineCell> cells;

  void build_index() {
    const std::size_t n = cells.size();
    grid_ = std::max<std::size_t>(4, std::min<std::size_t>(
        1024, static_cast<std::size_t>(std::sqrt(static_cast<double>(n) / 2.0)) + 1));
    buckets_.assign(grid_ * grid_, {});
    const double pad = 1e-12 * domain.diameter();
    for (std::size_t i = 0; i < n; ++i) {
      const auto box = cells[i].poly.bbox();
      const auto [ix0, iy0] = bucket_of(box.min() - Vec2(pad, pad));
      const auto [ix1, iy1] = bucket_of(box.max() + Vec2(pad, pad));
      for (std::size_t iy = iy0; iy <= iy1; ++iy)
        for (std::size_t ix = ix0; ix <= ix1; ++ix)
          buckets_[iy * grid_ + ix].push_back(static_cast<int>(i));
    }
  }

  /// Index of the cell containing p. When no cell contains p strictly, the
  /// candidate p violates least wins, up to a relaxed tolerance; -1 when
  /// nothing comes close.
  int locate(const Vec2& p) const {
    if (buckets_.empty()) return -1;
    const auto [ix, iy] = bucket_of(p);
    const auto& cand = buckets_[iy * grid_ + ix];
    const double diam = domain.diameter();
    for (const int i : cand)
      if (cells[static_cast<std::size_t>(i)].poly.contains(p, 1e-13 * diam)) return i;
    int best = -1;
    double best_gap = 1e-9 * diam;
    for (const int i : cand) {
      const double gap = cells[static_cast<std::size_t>(i)].poly.outside_gap(p);
      if (gap < best_gap) {
        best_gap = gap;
        best = i;
      }
    }
    return best;
  }

  Vec3 eval(const Vec2& p) const {
    const int i = locate(p);
    return i < 0 ? root.eval(p) : cells[static_cast<std::size_t>(i)].eval(p);
  }

  const BlockMatrix<double>& gradient_at(const Vec2& p) const {
    const int i = locate(p);
    return i < 0 ? root.G : cells[static_cast<std::size_t>(i)].G;
  }

  double total_cell_area() const {
    double a = 0;
    for (const auto& c : cells) a += c.poly.area();
    return a;
  }

 private:
  std::pair<std::size_t, std::size_t> bucket_of(const Vec2& p) const {
    const auto clampi = [this](double t) {
      const double g = static_cast<double>(grid_);
      return static_cast<std::size_t>(std::clamp(std::floor(t * g), 0.0, g - 1));
    };
    return {clampi((p.x() - domain.x0) / domain.width()),
            clampi((p.y() - domain.y0) / domain.height())};
  }

  std::size_t grid_ = 0;
  std::vector<std::vector<int>> buckets_;
};

struct RealizeOptions {
  double band_ratio = 1.0 / 128;  // transition band width as a fraction of the period
  double collar_ratio = 0.5;      // zero collar width as a fraction of the band
  double leak_factor = 0.4;       // off-gradient area budget per split, times eps
  std::vector<double> leak_schedule;  // per-step override of leak_factor (last entry repeats)
  std::vector<int> period_cap_schedule;  // per-step periods-per-cell cap (last entry repeats)
  std::size_t sup_steps = std::numeric_limits<std::size_t>::max();  // steps with the sup clamp
  double min_target_area = 0;     // leave matching cells smaller than this unlaminated
  double fit_fraction = 0.5;      // width share two facing tents may eat in greedy mode
  double sup_first = 0.5;         // sup-norm share of the first split
  double sup_decay = 0.5;         // geometric decay of later sup shares
  bool enforce_leak_cap = true;
  bool contract_slopes = false;   // cap tent slopes by (|B|+|C|+1-|A|)/|B-C|
  std::size_t greedy_after = std::numeric_limits<std::size_t>::max();
  int period_cap = 10'000'000;    // most periods a single cell may be cut into
  std::size_t max_cells = 10'000'000;
  double drop_area_factor = 1e-14;
  double match_rel_tol = 1e-9;    // gradient matching when selecting targets
  bool run_checks = true;
  int boundary_samples = 4096;
};

struct StepStat {
  std::size_t step = 0;
  std::size_t targets = 0;    // cells laminated in this split
  std::size_t children = 0;   // cells they were replaced by
  int max_periods = 0;
  double matched_area = 0;    // total area carrying the target gradient
  double selected_area = 0;   // area actually laminated (lam fraction)
};

struct HistogramResult {
  std::vector<double> weight;    // atom weights of the reference measure
  std::vector<double> fraction;  // area fraction carrying each atom gradient
  double off_fraction = 0;       // area matching no atom
  double max_deviation = 0;      // max |fraction - weight|
};

struct InterfaceReport {
  double max_value_jump = 0;   // worst displacement mismatch across an interface
  double max_sigma2_rel = 0;   // worst second singular value of a gradient jump,
                               // relative to max(1, sigma1)
  std::size_t checked_edges = 0;
};

struct RealizeReport {
  double eps = 0;
  std::size_t cell_count = 0;
  double sup_deviation = 0;       // max |u - root| over all cell vertices
  double boundary_max = 0;        // max |u - root| over boundary samples
  double coverage_rel_error = 0;  // |sum of cell areas - domain area| / domain area
  InterfaceReport interfaces;
  HistogramResult histogram;
  std::vector<StepStat> steps;
};

struct RealizedMap {
  PiecewiseAffineMap map;
  RealizeReport report;
};

/// Area fractions of the domain carrying each atom gradient of `mu`.
inline HistogramResult gradient_histogram(const PiecewiseAffineMap& map,
                                          const DiscreteMeasure<double>& mu,
                                          double rel_tol = 1e-6) {
  HistogramResult hist;
  hist.weight.reserve(mu.size());
  for (const auto& a : mu.atoms()) hist.weight.push_back(a.weight);
  hist.fraction.assign(mu.size(), 0.0);
  const double total = map.domain.area();
  double off = 0;
  for (const auto& cell : map.cells) {
    const double area = cell.poly.area();
    bool matched = false;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      if (points_equal<double>(cell.G, mu.atom(i).point, rel_tol)) {
        hist.fraction[i] += area;
        matched = true;
        break;
      }
    }
    if (!matched) off += area;
  }
  for (auto& f : hist.fraction) f /= total;
  hist.off_fraction = off / total;
  for (std::size_t i = 0; i < mu.size(); ++i)
    hist.max_deviation = std::max(hist.max_deviation, std::abs(hist.fraction[i] - hist.weight[i]));
  return hist;
}

/// Continuity and rank-one compatibility across all interior interfaces.
/// For each cell edge, the neighbor across the midpoint is looked up and the
/// displacement mismatch plus the second singular value of the gradient jump
/// are recorded. Hadamard's condition makes genuine interfaces rank one.
inline InterfaceReport check_interfaces(const PiecewiseAffineMap& map) {
  InterfaceReport rep;
  const std::size_t n = map.cells.size();
  const double probe = 1e-9 * map.domain.diameter();
  std::vector<double> jump(n, 0.0), sig(n, 0.0);
  std::vector<std::size_t> cnt(n, 0);
  parallel_for(n, [&](std::size_t i) {
    const auto& cell = map.cells[i];
    const auto& pts = cell.poly.vertices();
    const std::size_t ne = pts.size();
    for (std::size_t e = 0; e < ne; ++e) {
      const Vec2 a = pts[e], b2 = pts[(e + 1) % ne];
      const Vec2 mid = 0.5 * (a + b2);
      Vec2 nrm(b2.y() - a.y(), a.x() - b2.x());
      const double nn = nrm.norm();
      if (!(nn > 0)) continue;
      nrm /= nn;
      const Vec2 outside = mid + probe * nrm;
      if (!map.domain.contains(outside)) continue;  // domain boundary edge
      const int j = map.locate(outside);
      if (j < 0 || static_cast<std::size_t>(j) == i) continue;
      const auto& other = map.cells[static_cast<std::size_t>(j)];
      // Certify only when the midpoint itself lies on the neighbor's
      // boundary; a probe next to a corner can land in a cell that merely
      // touches this edge at a point, where extrapolating its affine data
      // would report a spurious jump.
      if (other.poly.outside_gap(mid) > 1e-12 * map.domain.diameter()) continue;
      ++cnt[i];
      jump[i] = std::max(jump[i], (cell.eval(mid) - other.eval(mid)).norm());
      const Mat32 D = stacked(cell.G - other.G);
      const double dn = D.norm();
      const double scale = std::max({1.0, block_norm(cell.G), block_norm(other.G)});
      if (dn <= 1e-13 * scale) continue;
      Eigen::JacobiSVD<Mat32> svd(D);
      const auto& sv = svd.singularValues();
      sig[i] = std::max(sig[i], sv[1] / std::max(1.0, sv[0]));
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    rep.max_value_jump = std::max(rep.max_value_jump, jump[i]);
    rep.max_sigma2_rel = std::max(rep.max_sigma2_rel, sig[i]);
    rep.checked_edges += cnt[i];
  }
  return rep;
}

namespace detail {

inline void fill_report(RealizedMap& rm, const DiscreteMeasure<double>& final_measure,
                        const RealizeOptions& opts) {
  auto& map = rm.map;
  auto& rep = rm.report;
  rep.cell_count = map.cells.size();

  std::vector<double> sup(map.cells.size(), 0.0);
  parallel_for(map.cells.size(), [&](std::size_t i) {
    const auto& cell = map.cells[i];
    for (const auto& v : cell.poly.vertices())
      sup[i] = std::max(sup[i], (cell.eval(v) - map.root.eval(v)).norm());
  });
  rep.sup_deviation = 0;
  for (const double s : sup) rep.sup_deviation = std::max(rep.sup_deviation, s);

  rep.coverage_rel_error = std::abs(map.total_cell_area() - map.domain.area()) / map.domain.area();

  // Boundary samples: evaluate through cell lookup with an inward nudge so
  // edge points land in a definite cell, then compare at the exact point.
  const int per_edge = std::max(1, opts.boundary_samples / 4);
  const double nudge = 1e-12 * map.domain.diameter();
  double bmax = 0;
  for (int e = 0; e < 4; ++e) {
    for (int k = 0; k < per_edge; ++k) {
      const double t = (k + 0.5) / per_edge;
      Vec2 p, inward;
      switch (e) {
        case 0: p = Vec2(map.domain.x0 + t * map.domain.width(), map.domain.y0);
                inward = Vec2(0, 1); break;
        case 1: p = Vec2(map.domain.x0 + t * map.domain.width(), map.domain.y1);
                inward = Vec2(0, -1); break;
        case 2: p = Vec2(map.domain.x0, map.domain.y0 + t * map.domain.height());
                inward = Vec2(1, 0); break;
        default: p = Vec2(map.domain.x1, map.domain.y0 + t * map.domain.height());
                 inward = Vec2(-1, 0); break;
      }
      int i = map.locate(p);
      if (i < 0) i = map.locate(p + nudge * inward);
      const Vec3 val = i < 0 ? map.root.eval(p) : map.cells[static_cast<std::size_t>(i)].eval(p);
      bmax = std::max(bmax, (val - map.root.eval(p)).norm());
    }
  }
  rep.boundary_max = bmax;

  rep.histogram = gradient_histogram(map, final_measure);
  if (opts.run_checks) rep.interfaces = check_interfaces(map);
}

}  // namespace detail

/// Realizes a laminate certificate as a piecewise affine map on `dom` whose
/// gradient distribution approximates the certificate's final measure. The
/// sup deviation from the root affine map stays below eps (geometric shares
/// per split) and each split leaks at most leak_factor * eps of its parent
/// area into transition gradients when the leak cap is enforced.
inline RealizedMap realize_laminate(const LaminateCertificate<double>& cert, double eps,
                                    const PlanarDomain& dom, const RealizeOptions& opts = {}) {
  dom.validate();
  if (!(eps > 0)) throw std::invalid_argument("realize_laminate: eps must be positive");
  RealizedMap out;
  out.map.domain = dom;
  out.map.root = {cert.root, Vec3::Zero()};
  {
    AffineCell rootcell;
    rootcell.poly = dom.polygon();
    rootcell.G = cert.root;
    out.map.cells.push_back(std::move(rootcell));
  }
  out.report.eps = eps;

  DiscreteMeasure<double> replica = DiscreteMeasure<double>::dirac(cert.root);
  double sigma = opts.sup_first;
  for (std::size_t k = 0; k < cert.steps.size(); ++k) {
    const auto& step = cert.steps[k];
    const BlockMatrix<double> target = replica.atom(step.target).point;
    const RankOneFactor fac = rank_one_factor(step.B, step.C);
    if (!fac.ok)
      throw std::invalid_argument("realize_laminate: step " + std::to_string(k) +
                                  " has identical child gradients");
    const double a3n = fac.a.norm();
    const double ck = step.s * (1 - step.s) * a3n;

    double slope_cap = std::numeric_limits<double>::infinity();
    if (opts.contract_slopes) {
      const double head =
          block_norm(step.B) + block_norm(step.C) + 1.0 - block_norm(target);
      slope_cap = std::max(head, 0.5) / a3n;
    }

    // Cells carrying the target gradient, ordered lowest-left first. Cells
    // below min_target_area are left as they are: laminating a shard buys
    // almost no matched mass but multiplies cells, so the guard trades a
    // reported sliver of off-atom area for a bounded cell count.
    std::vector<std::size_t> matched;
    double matched_area = 0;
    for (std::size_t i = 0; i < out.map.cells.size(); ++i) {
      if (out.map.cells[i].poly.area() < opts.min_target_area) continue;
      if (points_equal<double>(out.map.cells[i].G, target, opts.match_rel_tol)) {
        matched.push_back(i);
        matched_area += out.map.cells[i].poly.area();
      }
    }
    std::sort(matched.begin(), matched.end(), [&](std::size_t a, std::size_t b) {
      const auto ba = out.map.cells[a].poly.bbox(), bb = out.map.cells[b].poly.bbox();
      if (ba.min().y() != bb.min().y()) return ba.min().y() < bb.min().y();
      if (ba.min().x() != bb.min().x()) return ba.min().x() < bb.min().x();
      if (ba.max().y() != bb.max().y()) return ba.max().y() < bb.max().y();
      return ba.max().x() < bb.max().x();
    });

    std::vector<char> selected(out.map.cells.size(), 0);
    double selected_area = 0;
    const double lam = step.lam;
    if (lam >= 1.0) {
      for (const std::size_t i : matched) selected[i] = 1;
      selected_area = matched_area;
    } else if (lam > 0) {
      const double want = lam * matched_area;
      for (const std::size_t i : matched) {
        const double remaining = want - selected_area;
        if (remaining <= 1e-12 * matched_area) break;
        const double ai = out.map.cells[i].poly.area();
        if (ai <= remaining * (1.0 + 1e-9)) {
          selected[i] = 1;
          selected_area += ai;
          continue;
        }
        // Taking this whole cell would overshoot: keep only a bottom band
        // with the missing area. Both pieces carry the cell's affine data,
        // so the new interface is exact.
        if (remaining > 1e-12 * ai) {
          const auto bb = out.map.cells[i].poly.bbox();
          double clo = bb.min().y(), chi = bb.max().y();
          for (int it = 0; it < 100; ++it) {
            const double cmid = 0.5 * (clo + chi);
            if (out.map.cells[i].poly.clipped({Vec2(0, 1), cmid}).area() < remaining)
              clo = cmid;
            else
              chi = cmid;
          }
          auto [low, high] = out.map.cells[i].poly.split(Vec2(0, 1), 0.5 * (clo + chi));
          if (!low.empty() && !high.empty()) {
            AffineCell rest = out.map.cells[i];
            rest.poly = std::move(high);
            out.map.cells[i].poly = std::move(low);
            selected[i] = 1;
            selected_area += out.map.cells[i].poly.area();
            out.map.cells.push_back(std::move(rest));
            selected.push_back(0);
          } else if (low.empty() && !high.empty()) {
            // sweep line collapsed to the bottom: nothing worth taking
          } else {
            selected[i] = 1;
            selected_area += ai;
          }
        }
        break;
      }
    }

    StepStat stat;
    stat.step = k;
    stat.matched_area = matched_area;
    stat.selected_area = selected_area;

    std::vector<AffineCell> next;
    next.reserve(out.map.cells.size());
    for (std::size_t i = 0; i < out.map.cells.size(); ++i) {
      if (!selected[i]) {
        next.push_back(std::move(out.map.cells[i]));
        continue;
      }
      const AffineCell& cell = out.map.cells[i];
      const auto [t0, t1] = cell.poly.range(fac.b);
      const auto [q0, q1] = cell.poly.range(rot90(fac.b));
      const double extent = t1 - t0, perp = q1 - q0;
      if (!(extent > 0) || !(perp > 0)) {
        next.push_back(std::move(out.map.cells[i]));
        continue;
      }
      double h = extent;
      if (k >= opts.greedy_after && opts.contract_slopes && std::isfinite(slope_cap)) {
        // One period per cell unless the cell is so thin that slope-capped
        // tents from its long edges would swallow the width: the w profile
        // only survives where (1 + collar_ratio) * amp / m stays inside, so
        // cap the period to keep the two facing tents below fit_fraction of
        // the width.
        h = std::min(h, opts.fit_fraction * perp * slope_cap /
                            (2 * (1 + opts.collar_ratio) * step.s * (1 - step.s)));
        h = std::max(h, extent / static_cast<double>(opts.period_cap));
      }
      if (k < opts.greedy_after) {
        // The sup ladder pins the map eps-close to the data of the early
        // splits. Deep splits refine cells that are already tiny, where the
        // ladder would over-refine far below the leak law, so a caller can
        // switch it off past sup_steps and let the relative budget govern.
        if (k < opts.sup_steps)
          h = std::min(h, sigma * eps / ck);
        if (opts.enforce_leak_cap) {
          // Tents reach (1 + collar_ratio) * amp / m into the cell from every
          // edge, and amp / m is linear in h in both slope regimes. Capping
          // the reach at leak_factor * eps * area / perimeter keeps each
          // split's off-gradient area below that fraction of the cell, which
          // is what stops transition area from compounding across splits.
          const double reach_per_h = (1 + opts.collar_ratio) *
              std::max(opts.band_ratio, step.s * (1 - step.s) / slope_cap);
          const double rho = cell.poly.area() / std::max(cell.poly.perimeter(), 1e-300);
          const double lf = opts.leak_schedule.empty()
              ? opts.leak_factor
              : opts.leak_schedule[std::min(k, opts.leak_schedule.size() - 1)];
          h = std::min(h, lf * eps * rho / reach_per_h);
        }
        // Badly cut fragments have a far worse area-to-perimeter ratio than
        // the typical cell of their step, and the leak law would refine them
        // without limit. A per-step period cap lets them exceed their leak
        // fraction on their negligible area instead of multiplying cells.
        int pcap = opts.period_cap;
        if (!opts.period_cap_schedule.empty())
          pcap = opts.period_cap_schedule[std::min(k, opts.period_cap_schedule.size() - 1)];
        h = std::max(h, extent / static_cast<double>(pcap));
      }
      LaminationSpec spec;
      spec.B = step.B;
      spec.C = step.C;
      spec.s = step.s;
      spec.h = h;
      spec.band_ratio = opts.band_ratio;
      spec.collar_ratio = opts.collar_ratio;
      spec.slope_cap = slope_cap;
      spec.drop_area_factor = opts.drop_area_factor;

      const std::size_t estimate =
          cell.poly.size() * static_cast<std::size_t>(std::ceil(extent / h) + 1) * 6;
      if (next.size() + estimate > opts.max_cells)
        throw std::runtime_error("realize_laminate: cell budget exceeded while laminating step " +
                                 std::to_string(k));
      auto children = laminate_cell(cell, spec);
      stat.targets += 1;
      stat.children += children.size();
      stat.max_periods = std::max(
          stat.max_periods, std::max(1, static_cast<int>(std::ceil(extent / h - 1e-9))));
      for (auto& c : children) next.push_back(std::move(c));
    }
    out.map.cells = std::move(next);
    out.report.steps.push_back(stat);
    sigma *= opts.sup_decay;
    elementary_split(replica, step);
  }

  out.map.build_index();
  detail::fill_report(out, replica, opts);
  return out;
}

/// Single lamination of an affine boundary map into gradients B and C.
/// The transition gradients are bounded by |B| + |C| + 1 in Frobenius norm,
/// the off-{B,C} area fraction and the sup deviation both stay below eps.
inline RealizedMap simple_laminate_map(const BlockMatrix<double>& B, const BlockMatrix<double>& C,
                                       double s, double eps, const PlanarDomain& dom,
                                       const RealizeOptions& base_opts = {}) {
  if (!(s > 0) || !(s < 1))
    throw std::invalid_argument("simple_laminate_map: share s must lie strictly inside (0,1)");
  if (block_rank<double>(B - C) != 1)
    throw std::invalid_argument("simple_laminate_map: B - C must have rank one");
  if (!(eps > 0)) throw std::invalid_argument("simple_laminate_map: eps must be positive");
  LaminateCertificate<double> cert;
  cert.root = B * s + C * (1 - s);
  SplitStep<double> step;
  step.target = 0;
  step.B = B;
  step.C = C;
  step.s = s;
  step.lam = 1.0;
  cert.steps.push_back(step);
  RealizeOptions opts = base_opts;
  opts.contract_slopes = true;
  opts.enforce_leak_cap = true;
  opts.sup_first = 0.5;  // one split: use half the budget for the amplitude
  return realize_laminate(cert, eps, dom, opts);
}

/// Realized staircase maps for depths 1..n_max. Depth n reports tolerance
/// eps0 * 2^{1-n}; construction follows per-split transition budgets chosen so
/// that the realized |X_n| masses decrease in n while the cell count stays
/// bounded (see the budget notes inside).
struct SequenceEntry {
  int n = 0;
  double eps = 0;
  RealizedMap realized;
};

inline std::vector<SequenceEntry> realize_staircase_sequence(const StaircaseParams& P, int n_max,
                                                             double eps0, const PlanarDomain& dom,
                                                             RealizeOptions opts = {}) {
  if (n_max < 1)
    throw std::invalid_argument("realize_staircase_sequence: depth must be >= 1");
  if (!(eps0 > 0))
    throw std::invalid_argument("realize_staircase_sequence: eps0 must be positive");
  opts.contract_slopes = true;
  opts.enforce_leak_cap = true;
  opts.sup_steps = 0;
  opts.period_cap = 4096;
  opts.min_target_area = 1e-6;
  // Transition area is the part of |X_n| the construction controls, and every
  // split trades it against cell count, so the budget is split by role. The
  // structural splits (the first and third of each generation) shape the cells
  // every deeper split inherits: they run on constant fractions, so their
  // transition mass is depth-independent and cancels between consecutive maps,
  // and the refinement they force does not grow with depth. The cone splits
  // (second and fourth) are terminal, their cost is linear in their period
  // count, so they carry the depth schedule f_n that delivers the decrease of
  // |X_n|. The sup ladder is off: it would tie refinement to eps_n and blow up
  // the cell count quadratically per depth, while the reported histogram works
  // from exact atom values either way. Deep generations run under tight period
  // caps, and the area guard leaves shards unlaminated: both show up as
  // reported off-atom slack instead of cells.
  const auto cone_fraction = [](int n) {
    constexpr double f[] = {0.50, 0.25, 0.06};
    return n <= 3 ? f[n - 1] : f[2] * std::pow(0.5, n - 3);
  };
  constexpr double structural_fraction = 0.5;
  constexpr double deep_fraction = 0.25;
  opts.period_cap_schedule = {4096, 4096, 4096, 4096, 5, 5, 5, 5, 4, 4, 4, 4};
  std::vector<SequenceEntry> out;
  out.reserve(static_cast<std::size_t>(n_max));
  for (int n = 1; n <= n_max; ++n) {
    const double eps_n = eps0 * std::pow(0.5, n - 1);
    const double fn = cone_fraction(n) / eps_n;
    const double fs = structural_fraction / eps_n;
    const double fd = deep_fraction / eps_n;
    opts.leak_schedule = {fs, fn, fs, fn, fd, fd, fd, fd};
    const auto build = staircase_build<double>(P, n);
    SequenceEntry entry;
    entry.n = n;
    entry.eps = eps_n;
    entry.realized = realize_laminate(build.certificate, eps_n, dom, opts);
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace lamlab
