#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <random>

#include "lamlab/realize.hpp"

using namespace lamlab;

namespace {

BlockMatrix<double> state(double v0, double v1, double m00, double m01, double m10, double m11) {
  BlockMatrix<double> X;
  X.v = Vec2(v0, v1);
  X.M << m00, m01, m10, m11;
  return X;
}

bool same_block(const BlockMatrix<double>& a, const BlockMatrix<double>& b) {
  return a.v.x() == b.v.x() && a.v.y() == b.v.y() && a.M(0, 0) == b.M(0, 0) &&
         a.M(0, 1) == b.M(0, 1) && a.M(1, 0) == b.M(1, 0) && a.M(1, 1) == b.M(1, 1);
}

}  // namespace

TEST_CASE("laminate_cell: partition, gradients, continuity, zero boundary") {
  AffineCell parent;
  parent.poly = ConvexPolygon::rect(0, 0, 1, 1);
  parent.G = state(0, 0, 0, 0, 0, 0);
  parent.off = Vec3::Zero();

  LaminationSpec spec;
  spec.B = state(1, 0, 0, 0, 0, 0);
  spec.C = state(-1, 0, 0, 0, 0, 0);
  spec.s = 0.5;
  spec.h = 0.25;
  spec.band_ratio = 1.0 / 16;
  spec.collar_ratio = 0.5;

  const auto children = laminate_cell(parent, spec);
  REQUIRE(children.size() > 10);

  double total = 0, areaB = 0, areaC = 0, areaParent = 0, areaRamp = 0;
  for (const auto& c : children) {
    const double a = c.poly.area();
    total += a;
    if (same_block(c.G, spec.B)) {
      areaB += a;
    } else if (same_block(c.G, spec.C)) {
      areaC += a;
    } else if (same_block(c.G, parent.G)) {
      // collar keeps the parent data bitwise, offset included
      CHECK(c.off == parent.off);
      areaParent += a;
    } else {
      areaRamp += a;
    }
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(areaParent > 0);
  CHECK(areaRamp > 0);
  // equal shares: B and C areas agree and carry most of the cell
  CHECK(areaB == doctest::Approx(areaC).epsilon(1e-9));
  CHECK(areaB > 0.4);

  // continuity: every point must get the same value from all covering cells
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0;
  for (int trial = 0; trial < 4000; ++trial) {
    const Vec2 p(u(rng), u(rng));
    bool found = false;
    Vec3 first = Vec3::Zero();
    for (const auto& c : children) {
      if (!c.poly.contains(p, 1e-9)) continue;
      const Vec3 v = c.eval(p);
      if (!found) {
        first = v;
        found = true;
      } else {
        worst = std::max(worst, (v - first).norm());
      }
    }
    CHECK(found);
  }
  CHECK(worst <= 1e-12);

  // the sawtooth vanishes on the parent boundary: any covering cell gives
  // the parent value bitwise there
  for (int k = 0; k < 200; ++k) {
    const double t = (k + 0.5) / 200.0;
    const Vec2 probes[4] = {Vec2(t, 0), Vec2(t, 1), Vec2(0, t), Vec2(1, t)};
    for (const Vec2& p : probes) {
      for (const auto& c : children) {
        if (!c.poly.contains(p, 1e-12)) continue;
        const Vec3 v = c.eval(p);
        const Vec3 want = parent.eval(p);
        CHECK(v[0] == want[0]);
        CHECK(v[1] == want[1]);
        CHECK(v[2] == want[2]);
      }
    }
  }
}

TEST_CASE("laminate_cell: one period on a degenerate-direction cell passes through") {
  AffineCell parent;
  parent.poly = ConvexPolygon::rect(0, 0, 1, 1);
  parent.G = state(0, 0, 0, 0, 0, 0);
  LaminationSpec spec;
  spec.B = parent.G;
  spec.C = parent.G;  // B == C: no factor, passthrough
  const auto children = laminate_cell(parent, spec);
  REQUIRE(children.size() == 1);
  CHECK(same_block(children[0].G, parent.G));
}

TEST_CASE("simple_laminate_map honors its contract") {
  // velocity jump along e2: gradients differ in the first row only
  const auto B = state(0, 1, 0, 0, 0, 0);
  const auto C = state(0, -1, 0, 0, 0, 0);
  const double s = 0.5, eps = 0.1;
  PlanarDomain dom{0, 0, 1, 1, 256};
  const auto rm = simple_laminate_map(B, C, s, eps, dom);
  const auto& rep = rm.report;

  CHECK(rep.sup_deviation <= eps);
  CHECK(rep.boundary_max == 0.0);
  CHECK(rep.coverage_rel_error <= 1e-9);
  CHECK(rep.interfaces.max_sigma2_rel <= 1e-8);
  CHECK(rep.interfaces.max_value_jump <= 1e-9);

  // gradients away from {B, C} cover at most an eps fraction, and every
  // transition gradient obeys the norm bound |B| + |C| + 1
  const double headroom = block_norm(B) + block_norm(C) + 1.0;
  double off_area = 0;
  for (const auto& cell : rm.map.cells) {
    if (same_block(cell.G, B) || same_block(cell.G, C)) continue;
    off_area += cell.poly.area();
    CHECK(block_norm(cell.G) <= headroom + 1e-9);
  }
  CHECK(off_area / dom.area() <= eps);

  CHECK_THROWS_AS(simple_laminate_map(B, B, s, eps, dom), std::invalid_argument);
  CHECK_THROWS_AS(simple_laminate_map(B, C, 1.0, eps, dom), std::invalid_argument);
  CHECK_THROWS_AS(simple_laminate_map(B, C, s, -1.0, dom), std::invalid_argument);
}

TEST_CASE("realize_laminate reproduces the one-block staircase fractions") {
  const StaircaseParams P;
  const auto sl = step_laminate<double>(P, 1);
  PlanarDomain dom{0, 0, 1, 1, 256};
  const double eps = 0.1;
  const auto rm = realize_laminate(sl.certificate, eps, dom);
  const auto& rep = rm.report;

  CHECK(rep.cell_count > 1000);
  CHECK(rep.sup_deviation <= eps);
  CHECK(rep.boundary_max == 0.0);
  CHECK(rep.coverage_rel_error <= 1e-9);
  CHECK(rep.interfaces.max_sigma2_rel <= 1e-8);
  CHECK(rep.interfaces.max_value_jump <= 1e-9);

  // area fractions approximate the atom weights (1/4, 1/4, 1/8, 1/8, 1/4)
  REQUIRE(rep.histogram.weight.size() == 5);
  CHECK(rep.histogram.max_deviation <= 0.03);
  CHECK(rep.histogram.off_fraction <= 4 * 0.4 * eps);

  // spot check against the measure the certificate replays to
  const auto mu = replay(sl.certificate);
  const auto hist = gradient_histogram(rm.map, mu);
  for (std::size_t i = 0; i < mu.size(); ++i)
    CHECK(hist.fraction[i] == doctest::Approx(hist.weight[i]).epsilon(0.2));

  MESSAGE("one-block realize: ", rep.cell_count, " cells, hist dev ",
          rep.histogram.max_deviation, ", off ", rep.histogram.off_fraction, ", sup ",
          rep.sup_deviation);
}

TEST_CASE("lam fraction selects part of the matched area") {
  LaminateCertificate<double> cert;
  cert.root = state(0, 0, 2, 0, 0, 2);
  SplitStep<double> step;
  step.target = 0;
  step.B = state(0, 0, 2, 0, 0, 0);
  step.C = state(0, 0, 2, 0, 0, 4);
  step.s = 0.5;
  step.lam = 0.5;
  cert.steps.push_back(step);

  PlanarDomain dom{0, 0, 1, 1, 256};
  const auto rm = realize_laminate(cert, 0.2, dom);
  REQUIRE(rm.report.steps.size() == 1);
  // half the root area gets laminated
  CHECK(rm.report.steps[0].selected_area ==
        doctest::Approx(0.5).epsilon(0.1));
  // the untouched half keeps the root gradient: fractions near (1/2, 1/4, 1/4)
  const auto mu = replay(cert);
  const auto hist = gradient_histogram(rm.map, mu);
  REQUIRE(hist.weight.size() == 3);
  CHECK(hist.max_deviation <= 0.06);
}

TEST_CASE("cell budget overflow names the offending step") {
  const StaircaseParams P;
  const auto sl = step_laminate<double>(P, 1);
  PlanarDomain dom{0, 0, 1, 1, 256};
  RealizeOptions opts;
  opts.max_cells = 40;
  try {
    realize_laminate(sl.certificate, 0.05, dom, opts);
    FAIL("expected a cell budget exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("realization is deterministic") {
  const StaircaseParams P;
  const auto sl = step_laminate<double>(P, 1);
  PlanarDomain dom{0, 0, 1, 1, 256};
  RealizeOptions opts;
  opts.run_checks = false;
  const auto a = realize_laminate(sl.certificate, 0.15, dom, opts);
  const auto b = realize_laminate(sl.certificate, 0.15, dom, opts);
  REQUIRE(a.report.cell_count == b.report.cell_count);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const Vec2 p(u(rng), u(rng));
    const Vec3 va = a.map.eval(p), vb = b.map.eval(p);
    CHECK(va[0] == vb[0]);
    CHECK(va[1] == vb[1]);
    CHECK(va[2] == vb[2]);
  }
}

TEST_CASE("staircase sequence: shrinking accuracy, sound interfaces") {
  const StaircaseParams P;
  PlanarDomain dom{0, 0, 1, 1, 256};
  const auto seq = realize_staircase_sequence(P, 2, 0.5, dom);
  REQUIRE(seq.size() == 2);
  CHECK(seq[0].eps == 0.5);
  CHECK(seq[1].eps == 0.25);
  for (const auto& entry : seq) {
    CHECK(entry.realized.report.cell_count > 50);
    CHECK(entry.realized.report.coverage_rel_error <= 1e-9);
    CHECK(entry.realized.report.boundary_max == 0.0);
    CHECK(entry.realized.report.interfaces.max_sigma2_rel <= 1e-8);
    // deeper maps refine: more cells
  }
  CHECK(seq[1].realized.report.cell_count > seq[0].realized.report.cell_count);
  MESSAGE("sequence cells: n=1 ", seq[0].realized.report.cell_count, ", n=2 ",
          seq[1].realized.report.cell_count);
}
