#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "lamlab/cli.hpp"

using namespace lamlab;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"lamlab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / "lamlab_io_cli_test";
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string prefix(const std::string& stem) const { return (path / stem).string(); }
};

std::size_t line_count(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("fmt_double round-trips exactly") {
  for (double v : {1.0 / 3.0, 0.1, -2.718281828459045e-7, 1e-300, 0.0, 12345.6789,
                   2.2250738585072014e-308}) {
    const std::string s = fmt_double(v);
    CHECK(std::strtod(s.c_str(), nullptr) == v);
    CHECK(s.find(',') == std::string::npos);
  }
}

TEST_CASE("exact scalars and blocks survive JSON round trips bitwise") {
  const auto r2 = QuadExt::sqrt_rational(Rational(2));
  REQUIRE(r2.has_value());
  const QuadExt x = QuadExt(Rational(3, 7)) + QuadExt(Rational(22, 5)) * *r2;
  CHECK(scalar_from_json<QuadExt>(scalar_to_json(x)) == x);

  const QuadExt pure(Rational(-41, 13));
  CHECK(scalar_from_json<QuadExt>(scalar_to_json(pure)) == pure);

  const auto X = lifted_axis_state<QuadExt>(Rational(8), 1, -1);
  const auto back = block_from_json<QuadExt>(block_to_json(X));
  CHECK(back == X);
}

TEST_CASE("rational-mode measures and certificates round-trip bit-exactly") {
  const StaircaseParams P;
  const auto build = staircase_build<QuadExt>(P, 3);

  const auto measure_back = measure_from_json<QuadExt>(measure_to_json(build.measure));
  CHECK(measures_equal(measure_back, build.measure));

  const auto cert_back =
      certificate_from_json<QuadExt>(certificate_to_json(build.certificate));
  CHECK(cert_back.root == build.certificate.root);
  REQUIRE(cert_back.steps.size() == build.certificate.steps.size());
  for (std::size_t i = 0; i < cert_back.steps.size(); ++i) {
    CHECK(cert_back.steps[i].target == build.certificate.steps[i].target);
    CHECK(cert_back.steps[i].B == build.certificate.steps[i].B);
    CHECK(cert_back.steps[i].C == build.certificate.steps[i].C);
    CHECK(cert_back.steps[i].s == build.certificate.steps[i].s);
    CHECK(cert_back.steps[i].lam == build.certificate.steps[i].lam);
  }

  // double mode uses plain JSON numbers
  const auto md = to_double(build.measure);
  const auto j = measure_to_json(md);
  CHECK(j.at("atoms")[0].at("weight").is_number());
  CHECK(measures_close(measure_from_json<double>(j), md));
}

TEST_CASE("bound report exports") {
  const auto rep = verify_bounds(StaircaseParams{}, 6, 1.5);
  const std::string csv = bound_report_csv(rep);
  CHECK(line_count(csv) == 7);  // header + 6 rows
  CHECK(csv.rfind("n,m_n,d_n,r_n1,r_n2\n", 0) == 0);
  const json j = bound_report_json(rep);
  CHECK(j.at("rows").size() == 6);
  CHECK(j.at("moment_bounded").is_boolean());
  CHECK(j.at("ray_lower").get<bool>());
}

TEST_CASE("map exports: JSON cells and CSV samples") {
  BlockMatrix<double> B, C;
  B.v = Vec2(0, 1);
  B.M = Mat2::Zero();
  C.v = Vec2(0, -1);
  C.M = Mat2::Zero();
  const auto rm = simple_laminate_map(B, C, 0.5, 0.2, {0, 0, 1, 1, 256});

  const json mj = map_to_json(rm.map);
  CHECK(mj.at("cell_count").get<std::size_t>() == rm.map.cells.size());
  CHECK(mj.at("cells").size() == rm.map.cells.size());
  CHECK(mj.at("cells")[0].at("gradient").size() == 6);
  CHECK(mj.at("cells")[0].at("offset").size() == 3);

  const std::string csv = map_sample_csv(rm.map, 16);
  CHECK(line_count(csv) == 16 * 16 + 1);
  CHECK(csv.rfind("x,y,v1,v2,v3,g1,g2,g3,g4,g5,g6\n", 0) == 0);
  CHECK(map_sample_csv(rm.map, 16) == csv);  // deterministic
  CHECK_THROWS_AS(map_sample_csv(rm.map, 1), std::invalid_argument);

  const json rj = realize_report_json(rm.report);
  CHECK(rj.at("cell_count").get<std::size_t>() == rm.report.cell_count);
  CHECK(rj.at("interfaces").at("checked_edges").get<std::size_t>() > 0);
}

TEST_CASE("field grid export imports back bitwise") {
  const PlanarDomain dom{-1, 0, 1, 1, 64};
  const auto u = shear_flow(Vec2(1, 0), [](double t) { return t * t; }, dom, 0.11);
  const std::string csv = field_csv(u);
  const json header = field_header_json(u, "u.csv");
  CHECK(header.at("kind").get<std::string>() == "vector");

  const auto back = vector_field_from_csv(header, csv);
  REQUIRE(back.nx == u.nx);
  REQUIRE(back.ny == u.ny);
  REQUIRE(back.values.size() == u.values.size());
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    CHECK(back.values[i].x() == u.values[i].x());
    CHECK(back.values[i].y() == u.values[i].y());
  }

  CHECK_THROWS_AS(vector_field_from_csv(header, "x,y,c1,c2\n1,2,nope,4\n"),
                  std::invalid_argument);
  json bad = header;
  bad["kind"] = "matrix";
  CHECK_THROWS_AS(vector_field_from_csv(bad, csv), std::invalid_argument);
}

TEST_CASE("verdict and table helpers have stable shapes") {
  ResidualReport rr;
  rr.per_test = {1e-12, -2e-13};
  rr.max_abs = 1e-12;
  CHECK(line_count(residual_csv(rr)) == 3);

  MonotonicityProfile prof;
  prof.radii = {0.1, 0.2};
  prof.values = {1.0, 2.0};
  prof.estimates = {0.0, 0.0};
  CHECK(line_count(profile_csv(prof)) == 3);
  const json pj = monotonicity_json(prof);
  CHECK(pj.at("values").size() == 2);

  CHECK(shear_json(std::nullopt).at("is_shear").get<bool>() == false);
  DirectionReport dr;
  dr.deviation = 0.5;
  CHECK(direction_json(dr).at("direction").is_null());

  const auto er = gamma_ellipticity({{0.0, 1.0}});
  CHECK(ellipticity_json(er).at("certified").get<bool>());
}

TEST_CASE("cli: staircase exit codes follow the bound verdicts") {
  TempDir tmp;
  CHECK(run_cli({"--out", tmp.prefix("a"), "staircase", "--n-max", "20", "--p", "1.5"}) == 0);
  CHECK(fs::exists(tmp.prefix("a") + "_bounds.csv"));
  CHECK(fs::exists(tmp.prefix("a") + "_bounds_flags.json"));
  CHECK(run_cli({"--out", tmp.prefix("b"), "staircase", "--n-max", "20", "--p", "2.5"}) == 1);
  CHECK(run_cli({"--out", tmp.prefix("c"), "staircase", "--n-max", "0"}) == 2);

  // 20-row table per the contract
  const std::string csv = read_text_file(tmp.prefix("a") + "_bounds.csv");
  CHECK(line_count(csv) == 21);

  // identical config reruns byte-identically
  CHECK(run_cli({"--out", tmp.prefix("a2"), "staircase", "--n-max", "20", "--p", "1.5"}) == 0);
  CHECK(read_text_file(tmp.prefix("a2") + "_bounds.csv") == csv);

  // json format writes the table as json instead
  CHECK(run_cli({"--out", tmp.prefix("j"), "--format", "json", "staircase", "--n-max", "3",
                 "--p", "1.5"}) == 0);
  const json bj = json::parse(read_text_file(tmp.prefix("j") + "_bounds.json"));
  CHECK(bj.at("rows").size() == 3);
}

TEST_CASE("cli: realize modes and parameter validation") {
  TempDir tmp;
  CHECK(run_cli({"--out", tmp.prefix("atom"), "realize", "--laminate", "atom", "--eps",
                 "0.1"}) == 0);
  const json rep = json::parse(read_text_file(tmp.prefix("atom") + "_report.json"));
  CHECK(rep.at("cell_count").get<std::size_t>() == 1);
  CHECK(fs::exists(tmp.prefix("atom") + "_sample.csv"));

  CHECK(run_cli({"--out", tmp.prefix("step"), "realize", "--laminate", "step", "--n", "1",
                 "--eps", "0.15", "--resolution", "64"}) == 0);
  const json srep = json::parse(read_text_file(tmp.prefix("step") + "_report.json"));
  CHECK(srep.at("sup_deviation").get<double>() <= 0.15);
  CHECK(srep.at("histogram").at("weight").size() == 5);
  CHECK(fs::exists(tmp.prefix("step") + "_hist.csv"));

  CHECK(run_cli({"realize", "--laminate", "step", "--eps", "-1"}) == 2);
  CHECK(run_cli({"realize", "--laminate", "step", "--resolution", "8"}) == 2);
  CHECK(run_cli({"realize", "--laminate", "bogus"}) == 2);
  CHECK(run_cli({"bogus-subcommand"}) == 2);
}

TEST_CASE("cli: verify-field sources, import, and failure modes") {
  TempDir tmp;
  CHECK(run_cli({"--out", tmp.prefix("z"), "verify-field", "--source", "zero"}) == 0);
  const json verdicts = json::parse(read_text_file(tmp.prefix("z") + "_verdicts.json"));
  CHECK(verdicts.at("detect_shear").at("is_shear").get<bool>());
  CHECK(verdicts.at("detect_shear").at("degenerate").get<bool>());

  CHECK(run_cli({"--out", tmp.prefix("w"), "verify-field", "--source", "counterexample"}) == 0);
  const json wv = json::parse(read_text_file(tmp.prefix("w") + "_verdicts.json"));
  CHECK(wv.at("detect_shear").at("is_shear").get<bool>() == false);
  CHECK(wv.at("direction_constancy").at("error").get<std::string>() == "hypothesis-violated");

  // the exported field imports back and passes the same residuals
  CHECK(run_cli({"--out", tmp.prefix("w2"), "verify-field", "--import",
                 tmp.prefix("w") + "_field.json"}) == 0);

  CHECK(run_cli({"verify-field", "--source", "bogus"}) == 2);
  CHECK(run_cli({"--out", tmp.prefix("x"), "verify-field", "--import",
                 tmp.prefix("missing") + ".json"}) == 2);
  const std::string badp = tmp.prefix("bad") + ".json";
  write_text_file(badp, "not json");
  CHECK(run_cli({"--out", tmp.prefix("x2"), "verify-field", "--import", badp}) == 2);
}
