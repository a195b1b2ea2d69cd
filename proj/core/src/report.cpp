#include "adopt/report.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "adopt/lccm.hpp"

namespace adopt {

namespace {

std::string fixed(double v, int digits = 2) {
  if (!std::isfinite(v)) return "--";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string cell_with_t(const io::json& c) {
  const double est = c.at("estimate").get<double>();
  const auto& t = c.at("t_stat");
  return fixed(est) + " (" + (t.is_null() ? std::string("--") : fixed(t.get<double>())) + ")";
}

const io::json* find_coef(const io::json& coefs, const std::string& name) {
  for (const auto& c : coefs) {
    if (c.at("name").get<std::string>() == name) return &c;
  }
  return nullptr;
}

std::string coef_or_dash(const io::json& coefs, const std::string& name) {
  const auto* c = find_coef(coefs, name);
  return c ? cell_with_t(*c) : "--";
}

void fit_row(std::string& md, const std::string& model, const io::json& fit) {
  const auto recorded = io::fit_stats_from_json(fit);
  const auto f = fit_stats(recorded.loglik, recorded.parameters, recorded.observations, recorded.null_loglik);
  md += "| " + model + " | " + fixed(f.loglik) + " | " + fixed(f.rho_bar2, 4) + " | " + fixed(f.aic) + " | " +
        fixed(f.bic) + " | " + std::to_string(f.parameters) + " | " + std::to_string(f.observations) + " |\n";
}

}  // namespace

std::vector<ForecastRow> read_forecast_csv(const io::fs::path& path) {
  const auto t = io::read_csv(path);
  const std::size_t c_s = t.column("scenario"), c_m = t.column("month"), c_ms = t.column("mean_S"),
                    c_my = t.column("mean_Y");
  const std::array<std::size_t, 5> cq = {t.column("q025"), t.column("q25"), t.column("q50"), t.column("q75"),
                                         t.column("q975")};
  std::vector<ForecastRow> rows;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    ForecastRow row;
    row.scenario = t.text(r, c_s);
    row.month = static_cast<int>(t.integer(r, c_m));
    row.mean_S = t.number(r, c_ms);
    row.mean_Y = t.number(r, c_my);
    for (std::size_t q = 0; q < 5; ++q) row.q[q] = t.number(r, cq[q]);
    rows.push_back(row);
  }
  return rows;
}

std::map<std::string, std::vector<double>> bass_scenario_forecast(const BassParams& params,
                                                                  const std::vector<ForecastRow>& rows) {
  int last = 1;
  for (const auto& r : rows) last = std::max(last, r.month);
  const auto series = bass_simulate(params, last);
  std::map<std::string, std::vector<double>> out;
  for (const auto& r : rows) out[r.scenario].push_back(series.Y[static_cast<std::size_t>(std::max(0, r.month))]);
  return out;
}

ReportBundle emit_report(const ReportInputs& in) {
  ReportBundle b;
  std::string& md = b.markdown;
  md += "# Adoption model report\n\n";

  if (in.dc) {
    md += "## Destination choice\n\n| Variable | Estimate (t) |\n|---|---|\n";
    for (const auto& c : in.dc->at("coefficients")) {
      md += "| " + c.at("name").get<std::string>() + " | " + cell_with_t(c) + " |\n";
    }
    md += "\nLog-likelihood " + fixed(in.dc->at("loglik").get<double>()) + " over " +
          std::to_string(in.dc->at("trips").get<std::size_t>()) + " trips.\n\n";
  }

  if (in.adoption) {
    const auto& coefs = in.adoption->at("coefficients");
    md += "## Class membership\n\n| Variable | Innovators | Imitators | Non-adopters |\n|---|---|---|---|\n";
    for (const auto& [label, key] : {std::pair{"Constant", "asc"}, {"Monthly income ($1000)", "income"},
                                     std::pair{"Male", "male"}}) {
      md += std::string("| ") + label + " | -- | " + coef_or_dash(coefs, std::string("membership.imitator.") + key) +
            " | " + coef_or_dash(coefs, std::string("membership.nonadopter.") + key) + " |\n";
    }
    const auto& shares = in.adoption->at("class_shares");
    md += "\nClass shares: innovators " + fixed(100 * shares.at("innovator").get<double>()) + "%, imitators " +
          fixed(100 * shares.at("imitator").get<double>()) + "%, non-adopters " +
          fixed(100 * shares.at("nonadopter").get<double>()) + "%.\n\n";

    md += "## Class-specific adoption\n\n| Variable | Innovators | Imitators | Non-adopters |\n|---|---|---|---|\n";
    const std::vector<std::array<const char*, 4>> rows = {
        {"Constant", "innovator.asc", "imitator.asc", "nonadopter.asc"},
        {"Technology firm employee", "innovator.tech", "imitator.tech", ""},
        {"Station in home zone", "innovator.station", "", ""},
        {"On-street parking in home zone", "innovator.onstreet", "", ""},
        {"Accessibility, covered zone", "innovator.access_covered", "imitator.access_covered", ""},
        {"Accessibility, uncovered zone", "innovator.access_uncovered", "imitator.access_uncovered", ""},
        {"Cumulative adopters at t-1 (100s)", "", "imitator.social", ""},
    };
    for (const auto& r : rows) {
      md += std::string("| ") + r[0];
      for (int k = 1; k < 4; ++k) md += " | " + (*r[k] ? coef_or_dash(coefs, r[k]) : std::string("--"));
      md += " |\n";
    }
    md += "| Distance friction phi | " + fixed(in.adoption->at("params").at("phi").get<double>()) + " (--) | | |\n\n";

    md += "## Model fit\n\n| Model | Log-likelihood | rho-bar^2 | AIC | BIC | k | N |\n|---|---|---|---|---|---|---|\n";
    if (in.adoption->contains("mnl")) {
      for (const auto& m : in.adoption->at("mnl")) {
        fit_row(md, "MNL (" + m.at("covariates").get<std::string>() + ")", m.at("fit"));
      }
    }
    fit_row(md, "LCCM", in.adoption->at("fit"));
    md += "\nNull model: " + in.adoption->at("fit").at("null_definition").get<std::string>() + ".\n\n";
  }

  if (in.bass) {
    const auto p = io::bass_params_from_json(*in.bass);
    md += "## Bass baseline\n\np = " + fixed(p.p, 4) + ", q = " + fixed(p.q, 4) + ", M = " + fixed(p.M, 0);
    if (in.bass->contains("r_squared")) md += ", R^2 = " + fixed(in.bass->at("r_squared").get<double>(), 4);
    md += ".\n\n";
  }

  if (!in.forecast.empty()) {
    std::vector<std::string> order;
    std::set<std::string> seen;
    for (const auto& r : in.forecast) {
      if (seen.insert(r.scenario).second) order.push_back(r.scenario);
    }
    md += "## Scenario forecasts\n\nCumulative adopters in the last forecast month.\n\n";
    md += "| Scenario | Month | LCCM mean | LCCM 2.5% | LCCM 97.5% |";
    std::map<std::string, std::vector<double>> bass;
    if (in.bass) {
      bass = bass_scenario_forecast(io::bass_params_from_json(*in.bass), in.forecast);
      md += " Bass |";
    }
    md += "\n|---|---|---|---|---|" + std::string(in.bass ? "---|" : "") + "\n";
    for (const auto& name : order) {
      const ForecastRow* last = nullptr;
      std::size_t k = 0, idx = 0;
      for (const auto& r : in.forecast) {
        if (r.scenario != name) continue;
        if (!last || r.month >= last->month) {
          last = &r;
          idx = k;
        }
        ++k;
      }
      md += "| " + name + " | " + std::to_string(last->month) + " | " + fixed(last->mean_Y, 1) + " | " +
            fixed(last->q[0], 1) + " | " + fixed(last->q[4], 1) + " |";
      if (in.bass) md += " " + fixed(bass[name][idx], 1) + " |";
      md += "\n";
    }
    if (in.bass) {
      bool bass_same = true, lccm_same = true;
      for (const auto& name : order) {
        bass_same = bass_same && bass[name] == bass[order.front()];
        std::vector<double> a, b2;
        for (const auto& r : in.forecast) {
          if (r.scenario == name) a.push_back(r.mean_Y);
          if (r.scenario == order.front()) b2.push_back(r.mean_Y);
        }
        lccm_same = lccm_same && a == b2;
      }
      md += std::string("\nBass forecasts identical across scenarios: ") + (bass_same ? "yes" : "no") +
            ". LCCM forecasts identical across scenarios: " + (lccm_same ? "yes" : "no") + ".\n";
    }
    md += "\n";

    io::CsvWriter curves({"scenario", "model", "month", "mean", "q025", "q25", "q50", "q75", "q975"});
    for (const auto& r : in.forecast) {
      curves.cell(r.scenario).cell("lccm").cell(r.month).cell(r.mean_Y);
      for (double q : r.q) curves.cell(q);
      curves.end_row();
    }
    if (in.bass) {
      for (const auto& name : order) {
        std::size_t k = 0;
        for (const auto& r : in.forecast) {
          if (r.scenario != name) continue;
          const double y = bass[name][k++];
          curves.cell(name).cell("bass").cell(r.month).cell(y);
          for (int q = 0; q < 5; ++q) curves.cell(y);
          curves.end_row();
        }
      }
    }
    b.csv["adoption_curves.csv"] = curves.str();
  }
  return b;
}

}  // namespace adopt
