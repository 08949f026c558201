#pragma once
// Serialization for the artifacts the laboratory emits: JSON for structured
// objects (measures, certificates, maps, reports, verdicts) and CSV for
// plot-ready tables. CSV floats are printed with 17 significant digits
// through locale-independent to_chars, so equal inputs give byte-identical
// files; exact scalars travel as numerator/denominator strings and survive a
// round trip bit for bit.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "json.hpp"

#include <lamlab/fields.hpp>
#include <lamlab/measures.hpp>
#include <lamlab/numeric.hpp>
#include <lamlab/realize.hpp>
#include <lamlab/rigidity.hpp>
#include <lamlab/staircase.hpp>

namespace lamlab {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// primitives
// ---------------------------------------------------------------------------

inline std::string fmt_double(double v) {
  char buf[48];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  if (res.ec != std::errc()) throw std::runtime_error("fmt_double: conversion failed");
  return std::string(buf, res.ptr);
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return content;
}

// scalar encoding: doubles are JSON numbers; exact scalars are objects whose
// rational parts are numerator/denominator strings, exact at any size
inline json scalar_to_json(double v) { return json(v); }
inline json scalar_to_json(const QuadExt& v) {
  return json{{"q0", v.rational_part().str()},
              {"q1", v.radical_part().str()},
              {"d", v.radicand()}};
}

template <class S>
S scalar_from_json(const json& j);

template <>
inline double scalar_from_json<double>(const json& j) {
  return j.get<double>();
}

template <>
inline QuadExt scalar_from_json<QuadExt>(const json& j) {
  const Rational q0(j.at("q0").get<std::string>());
  const Rational q1(j.at("q1").get<std::string>());
  const long long d = j.at("d").get<long long>();
  if (d == 0) {
    if (q1 != 0) throw std::invalid_argument("scalar_from_json: radical part without radicand");
    return QuadExt(q0);
  }
  const auto root = QuadExt::sqrt_rational(Rational(d));
  if (!root) throw std::invalid_argument("scalar_from_json: radicand is not radical");
  return QuadExt(q0) + QuadExt(q1) * *root;
}

// block matrices flatten to six entries in row-major order (v1, v2, M11,
// M12, M21, M22)
template <class S>
json block_to_json(const BlockMatrix<S>& X) {
  json arr = json::array();
  arr.push_back(scalar_to_json(X.v(0)));
  arr.push_back(scalar_to_json(X.v(1)));
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) arr.push_back(scalar_to_json(X.M(r, c)));
  return arr;
}

template <class S>
BlockMatrix<S> block_from_json(const json& j) {
  if (!j.is_array() || j.size() != 6)
    throw std::invalid_argument("block_from_json: expected a flat array of six entries");
  BlockMatrix<S> X;
  X.v(0) = scalar_from_json<S>(j[0]);
  X.v(1) = scalar_from_json<S>(j[1]);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) X.M(r, c) = scalar_from_json<S>(j[2 + 2 * r + c]);
  return X;
}

// ---------------------------------------------------------------------------
// measures and certificates
// ---------------------------------------------------------------------------

template <class S>
json measure_to_json(const DiscreteMeasure<S>& m) {
  json atoms = json::array();
  for (const auto& a : m.atoms())
    atoms.push_back(json{{"weight", scalar_to_json(a.weight)}, {"point", block_to_json(a.point)}});
  return json{{"atoms", std::move(atoms)}};
}

template <class S>
DiscreteMeasure<S> measure_from_json(const json& j) {
  std::vector<Atom<S>> atoms;
  for (const auto& a : j.at("atoms")) {
    atoms.push_back(
        {scalar_from_json<S>(a.at("weight")), block_from_json<S>(a.at("point"))});
  }
  return DiscreteMeasure<S>(std::move(atoms));
}

template <class S>
json certificate_to_json(const LaminateCertificate<S>& cert) {
  json steps = json::array();
  for (const auto& st : cert.steps) {
    steps.push_back(json{{"target", st.target},
                         {"B", block_to_json(st.B)},
                         {"C", block_to_json(st.C)},
                         {"s", scalar_to_json(st.s)},
                         {"lam", scalar_to_json(st.lam)}});
  }
  return json{{"root", block_to_json(cert.root)}, {"steps", std::move(steps)}};
}

template <class S>
LaminateCertificate<S> certificate_from_json(const json& j) {
  LaminateCertificate<S> cert;
  cert.root = block_from_json<S>(j.at("root"));
  for (const auto& st : j.at("steps")) {
    SplitStep<S> step;
    step.target = st.at("target").get<std::size_t>();
    step.B = block_from_json<S>(st.at("B"));
    step.C = block_from_json<S>(st.at("C"));
    step.s = scalar_from_json<S>(st.at("s"));
    step.lam = scalar_from_json<S>(st.at("lam"));
    cert.steps.push_back(std::move(step));
  }
  return cert;
}

// ---------------------------------------------------------------------------
// staircase bound reports
// ---------------------------------------------------------------------------

inline std::string bound_report_csv(const BoundReport& rep) {
  std::string out = "n,m_n,d_n,r_n1,r_n2\n";
  for (const auto& row : rep.rows) {
    out += std::to_string(row.n);
    out += ',' + fmt_double(row.m) + ',' + fmt_double(row.d) + ',' + fmt_double(row.r1) + ',' +
           fmt_double(row.r2) + '\n';
  }
  return out;
}

inline json bound_report_json(const BoundReport& rep) {
  json rows = json::array();
  for (const auto& row : rep.rows) {
    rows.push_back(json{{"n", row.n},
                        {"m_n", row.m},
                        {"d_n", row.d},
                        {"r_n1", row.r1},
                        {"r_n2", row.r2},
                        {"d_ref", row.d_ref}});
  }
  return json{{"p", rep.p},
              {"n_max", rep.n_max},
              {"rows", std::move(rows)},
              {"moment_bounded", rep.moment_bounded},
              {"dist_upper", rep.dist_upper},
              {"ray_lower", rep.ray_lower},
              {"increment_ratio_threshold", rep.increment_ratio_threshold},
              {"max_increment_ratio", rep.max_increment_ratio},
              {"min_increment", rep.min_increment},
              {"note", rep.note}};
}

// ---------------------------------------------------------------------------
// piecewise affine maps
// ---------------------------------------------------------------------------

inline json domain_to_json(const PlanarDomain& dom) {
  return json{{"x0", dom.x0}, {"y0", dom.y0}, {"x1", dom.x1}, {"y1", dom.y1}};
}

inline json map_to_json(const PiecewiseAffineMap& map) {
  json cells = json::array();
  for (const auto& c : map.cells) {
    json poly = json::array();
    for (const auto& v : c.poly.vertices()) poly.push_back(json::array({v.x(), v.y()}));
    cells.push_back(json{{"poly", std::move(poly)},
                         {"gradient", block_to_json(c.G)},
                         {"offset", json::array({c.off[0], c.off[1], c.off[2]})}});
  }
  return json{{"domain", domain_to_json(map.domain)},
              {"root", json{{"gradient", block_to_json(map.root.G)},
                            {"offset", json::array({map.root.off[0], map.root.off[1],
                                                    map.root.off[2]})}}},
              {"cell_count", map.cells.size()},
              {"cells", std::move(cells)}};
}

/// Flat sampling of the map on a resolution x resolution grid of cell
/// centers: position, the three map values, and the six gradient entries.
/// The map must have its spatial index built.
inline std::string map_sample_csv(const PiecewiseAffineMap& map, int resolution) {
  if (resolution < 2) throw std::invalid_argument("map_sample_csv: resolution must be >= 2");
  std::string out = "x,y,v1,v2,v3,g1,g2,g3,g4,g5,g6\n";
  const double hx = map.domain.width() / resolution;
  const double hy = map.domain.height() / resolution;
  for (int j = 0; j < resolution; ++j) {
    for (int i = 0; i < resolution; ++i) {
      const Vec2 p(map.domain.x0 + (i + 0.5) * hx, map.domain.y0 + (j + 0.5) * hy);
      const Vec3 v = map.eval(p);
      const BlockMatrix<double>& G = map.gradient_at(p);
      out += fmt_double(p.x()) + ',' + fmt_double(p.y());
      for (int r = 0; r < 3; ++r) out += ',' + fmt_double(v[r]);
      out += ',' + fmt_double(G.v(0)) + ',' + fmt_double(G.v(1));
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) out += ',' + fmt_double(G.M(r, c));
      out += '\n';
    }
  }
  return out;
}

inline json histogram_to_json(const HistogramResult& hist) {
  return json{{"weight", hist.weight},
              {"fraction", hist.fraction},
              {"off_fraction", hist.off_fraction},
              {"max_deviation", hist.max_deviation}};
}

inline std::string histogram_csv(const HistogramResult& hist) {
  std::string out = "atom,weight,fraction\n";
  for (std::size_t i = 0; i < hist.weight.size(); ++i)
    out += std::to_string(i) + ',' + fmt_double(hist.weight[i]) + ',' +
           fmt_double(hist.fraction[i]) + '\n';
  return out;
}

inline json realize_report_json(const RealizeReport& rep) {
  json steps = json::array();
  for (const auto& st : rep.steps) {
    steps.push_back(json{{"step", st.step},
                         {"targets", st.targets},
                         {"children", st.children},
                         {"max_periods", st.max_periods},
                         {"matched_area", st.matched_area},
                         {"selected_area", st.selected_area}});
  }
  return json{{"eps", rep.eps},
              {"cell_count", rep.cell_count},
              {"sup_deviation", rep.sup_deviation},
              {"boundary_max", rep.boundary_max},
              {"coverage_rel_error", rep.coverage_rel_error},
              {"interfaces", json{{"max_value_jump", rep.interfaces.max_value_jump},
                                  {"max_sigma2_rel", rep.interfaces.max_sigma2_rel},
                                  {"checked_edges", rep.interfaces.checked_edges}}},
              {"histogram", histogram_to_json(rep.histogram)},
              {"steps", std::move(steps)}};
}

// ---------------------------------------------------------------------------
// sampled fields
// ---------------------------------------------------------------------------

namespace detail {

inline int component_count(const std::string& kind) {
  if (kind == "scalar") return 1;
  if (kind == "vector") return 2;
  if (kind == "matrix") return 4;
  throw std::invalid_argument("field io: unknown value kind: " + kind);
}

inline void append_components(std::string& out, double v) { out += ',' + fmt_double(v); }
inline void append_components(std::string& out, const Vec2& v) {
  out += ',' + fmt_double(v.x()) + ',' + fmt_double(v.y());
}
inline void append_components(std::string& out, const Mat2& v) {
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) out += ',' + fmt_double(v(r, c));
}

inline const char* kind_name(const double*) { return "scalar"; }
inline const char* kind_name(const Vec2*) { return "vector"; }
inline const char* kind_name(const Mat2*) { return "matrix"; }

}  // namespace detail

/// Header describing a grid export: domain, resolution, spacing, value kind,
/// and the basename of the companion CSV holding the rows.
template <class T>
json field_header_json(const SampledField<T>& f, const std::string& csv_name) {
  return json{{"domain", domain_to_json(f.domain)},
              {"nx", f.nx},
              {"ny", f.ny},
              {"hx", f.hx},
              {"hy", f.hy},
              {"kind", detail::kind_name(static_cast<const T*>(nullptr))},
              {"data", csv_name}};
}

/// Grid CSV of a field: one row per cell in row-major order. Exact cell
/// fields are sampled at the grid centers they carry.
template <class T>
std::string field_csv(const SampledField<T>& f) {
  std::string out = "x,y";
  const int comps = detail::component_count(detail::kind_name(static_cast<const T*>(nullptr)));
  for (int c = 1; c <= comps; ++c) out += ",c" + std::to_string(c);
  out += '\n';
  for (std::size_t j = 0; j < f.ny; ++j) {
    for (std::size_t i = 0; i < f.nx; ++i) {
      const Vec2 p = f.center(i, j);
      out += fmt_double(p.x()) + ',' + fmt_double(p.y());
      detail::append_components(out, f.has_grid() ? f.grid_value(i, j) : f.value_at(p));
      out += '\n';
    }
  }
  return out;
}

/// Rebuilds a vector field from a header written by field_header_json and
/// the rows of its companion CSV. Malformed content throws.
inline VectorField vector_field_from_csv(const json& header, const std::string& csv) {
  if (header.at("kind").get<std::string>() != "vector")
    throw std::invalid_argument("field import: expected a vector field");
  PlanarDomain dom;
  dom.x0 = header.at("domain").at("x0").get<double>();
  dom.y0 = header.at("domain").at("y0").get<double>();
  dom.x1 = header.at("domain").at("x1").get<double>();
  dom.y1 = header.at("domain").at("y1").get<double>();
  dom.validate();
  VectorField f;
  f.domain = dom;
  f.nx = header.at("nx").get<std::size_t>();
  f.ny = header.at("ny").get<std::size_t>();
  if (f.nx == 0 || f.ny == 0) throw std::invalid_argument("field import: empty grid");
  f.hx = dom.width() / static_cast<double>(f.nx);
  f.hy = dom.height() / static_cast<double>(f.ny);
  f.values.reserve(f.nx * f.ny);

  std::size_t pos = csv.find('\n');
  if (pos == std::string::npos) throw std::invalid_argument("field import: missing CSV header");
  ++pos;
  while (pos < csv.size()) {
    std::size_t eol = csv.find('\n', pos);
    if (eol == std::string::npos) eol = csv.size();
    if (eol > pos) {
      const std::string_view line(csv.data() + pos, eol - pos);
      double cols[4];
      std::size_t field = 0, start = 0;
      for (std::size_t k = 0; k <= line.size() && field < 4; ++k) {
        if (k == line.size() || line[k] == ',') {
          const auto res =
              std::from_chars(line.data() + start, line.data() + k, cols[field]);
          if (res.ec != std::errc() || res.ptr != line.data() + k)
            throw std::invalid_argument("field import: malformed number in CSV");
          ++field;
          start = k + 1;
        }
      }
      if (field != 4) throw std::invalid_argument("field import: expected x,y,c1,c2 rows");
      f.values.emplace_back(cols[2], cols[3]);
    }
    pos = eol + 1;
  }
  if (f.values.size() != f.nx * f.ny)
    throw std::invalid_argument("field import: row count does not match the grid");
  return f;
}

inline std::string residual_csv(const ResidualReport& rep) {
  std::string out = "test,residual\n";
  for (std::size_t i = 0; i < rep.per_test.size(); ++i)
    out += std::to_string(i) + ',' + fmt_double(rep.per_test[i]) + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// rigidity verdicts
// ---------------------------------------------------------------------------

inline std::string profile_csv(const MonotonicityProfile& prof) {
  std::string out = "R,f\n";
  for (std::size_t k = 0; k < prof.radii.size(); ++k)
    out += fmt_double(prof.radii[k]) + ',' + fmt_double(prof.values[k]) + '\n';
  return out;
}

inline json monotonicity_json(const MonotonicityProfile& prof) {
  return json{{"monotone", prof.monotone},
              {"div_ok", prof.div_ok},
              {"decay_consistent", prof.decay_consistent},
              {"tol_mono", prof.tol_mono},
              {"max_drop", prof.max_drop},
              {"div_residual", prof.div_residual},
              {"center", json::array({prof.center.x(), prof.center.y()})},
              {"radii", prof.radii},
              {"values", prof.values},
              {"estimates", prof.estimates}};
}

inline json shear_json(const std::optional<ShearDetection>& det) {
  if (!det) return json{{"is_shear", false}};
  json profile = json::array();
  for (const auto& s : det->profile) profile.push_back(json::array({s.x(), s.y()}));
  return json{{"is_shear", true},
              {"degenerate", det->degenerate},
              {"axis", json::array({det->axis.x(), det->axis.y()})},
              {"sigma_min", det->sigma_min},
              {"constancy_dev", det->constancy_dev},
              {"profile", std::move(profile)}};
}

inline json direction_json(const DirectionReport& rep) {
  json j{{"deviation", rep.deviation}, {"zero_fraction", rep.zero_fraction}};
  if (rep.direction)
    j["direction"] = json::array({rep.direction->x(), rep.direction->y()});
  else
    j["direction"] = nullptr;
  return j;
}

inline json ellipticity_json(const EllipticityReport& rep) {
  return json{{"constant", rep.constant},
              {"max_abs_dev", rep.max_abs_dev},
              {"certified", rep.certified}};
}

// ---------------------------------------------------------------------------
// map sequence statistics
// ---------------------------------------------------------------------------

inline std::string wstat_csv(const std::vector<WStatRow>& rows) {
  std::string out = "p,scalar_norm,matrix_norm,ratio\n";
  for (const auto& r : rows)
    out += fmt_double(r.p) + ',' + fmt_double(r.scalar_norm) + ',' + fmt_double(r.matrix_norm) +
           ',' + fmt_double(r.ratio) + '\n';
  return out;
}

}  // namespace lamlab
