#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adopt/bass.hpp"
#include "adopt/io.hpp"

namespace adopt {

struct ForecastRow {
  std::string scenario;
  int month = 0;
  double mean_S = 0.0, mean_Y = 0.0;
  std::array<double, 5> q{};
};

std::vector<ForecastRow> read_forecast_csv(const io::fs::path& path);

struct ReportInputs {
  std::optional<io::json> dc;         // dc_params.json
  std::optional<io::json> adoption;   // adoption_params.json
  std::optional<io::json> bass;       // bass_params.json
  std::vector<ForecastRow> forecast;  // empty: no forecast section
};

struct ReportBundle {
  std::string markdown;
  std::map<std::string, std::string> csv;  // file name -> content
};

/// Deterministic: identical inputs give identical bytes.
ReportBundle emit_report(const ReportInputs& inputs);

/// Bass cumulative forecast for each scenario's months; identical across scenarios.
std::map<std::string, std::vector<double>> bass_scenario_forecast(const BassParams& params,
                                                                  const std::vector<ForecastRow>& rows);

}  // namespace adopt
