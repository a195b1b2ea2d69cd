#include <doctest.h>

#include "adopt/report.hpp"

using namespace adopt;

namespace {

io::json coef(const std::string& name, double est, double t) {
  return {{"name", name}, {"estimate", est}, {"t_stat", t}};
}

io::json adoption_json() {
  io::json fit = {{"loglik", -100.0}, {"null_loglik", -200.0}, {"parameters", 5}, {"observations", 50},
                  {"aic", 9999.0}, {"bic", 9999.0}, {"rho_bar2", 0.0}, {"null_definition", "all coefficients zero"}};
  return {{"coefficients", io::json::array({coef("membership.imitator.asc", 2.0, 3.1),
                                            coef("innovator.asc", -7.88, -12.4),
                                            coef("imitator.social", 0.14, 2.2)})},
          {"class_shares", {{"innovator", 0.1}, {"imitator", 0.3}, {"nonadopter", 0.6}}},
          {"params", {{"phi", 1.0}}},
          {"fit", fit}};
}

std::vector<ForecastRow> rows() {
  std::vector<ForecastRow> out;
  for (const char* s : {"base", "new_station"}) {
    for (int m = 26; m <= 28; ++m) {
      ForecastRow r;
      r.scenario = s;
      r.month = m;
      r.mean_Y = 100.0 + m + (std::string(s) == "base" ? 0.0 : 5.0);
      r.q = {r.mean_Y - 10, r.mean_Y - 3, r.mean_Y, r.mean_Y + 3, r.mean_Y + 10};
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("fit table recomputes AIC and BIC from the log-likelihood") {
  ReportInputs in;
  in.adoption = adoption_json();
  const auto b = emit_report(in);
  // -2(-100) + 2*5 and -2(-100) + 5 ln 50.
  CHECK(b.markdown.find("| LCCM | -100.00 | 0.4750 | 210.00 | 219.56 | 5 | 50 |") != std::string::npos);
  CHECK(b.markdown.find("9999") == std::string::npos);
  CHECK(b.markdown.find("-7.88 (-12.40)") != std::string::npos);
  CHECK(b.markdown.find("Scenario forecasts") == std::string::npos);
  CHECK(b.csv.empty());
}

TEST_CASE("Bass forecasts are identical across scenarios") {
  const BassParams bass{0.0051, 0.2108, 2200.0};
  const auto f = bass_scenario_forecast(bass, rows());
  REQUIRE(f.size() == 2);
  CHECK(f.at("base") == f.at("new_station"));
  const auto s = bass_simulate(bass, 28);
  CHECK(f.at("base") == std::vector<double>{s.Y[26], s.Y[27], s.Y[28]});

  ReportInputs in;
  in.bass = io::to_json(bass);
  in.forecast = rows();
  const auto b = emit_report(in);
  CHECK(b.markdown.find("Bass forecasts identical across scenarios: yes") != std::string::npos);
  CHECK(b.markdown.find("LCCM forecasts identical across scenarios: no") != std::string::npos);
  REQUIRE(b.csv.count("adoption_curves.csv") == 1);
  const auto t = io::parse_csv(b.csv.at("adoption_curves.csv"), "curves");
  CHECK(t.rows.size() == 12);
}

TEST_CASE("report output is byte-stable") {
  ReportInputs in;
  in.adoption = adoption_json();
  in.bass = io::to_json(BassParams{0.0051, 0.2108, 2200.0});
  in.forecast = rows();
  const auto a = emit_report(in), b = emit_report(in);
  CHECK(a.markdown == b.markdown);
  CHECK(a.csv == b.csv);
}
