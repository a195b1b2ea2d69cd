#pragma once

#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adopt/bass.hpp"
#include "adopt/destination_choice.hpp"
#include "adopt/forecast.hpp"
#include "adopt/lccm.hpp"
#include "adopt/model.hpp"
#include "adopt/synthgen.hpp"

namespace adopt::io {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Files

std::string read_file(const fs::path& path);
/// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const fs::path& path, std::string_view content);
std::string sha256_hex(std::string_view data);
std::string sha256_file(const fs::path& path);

// ---------------------------------------------------------------------------
// CSV: header row, comma separated, '.' decimals, optional double quotes.

struct CsvTable {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // 1-based source line of each row

  /// Column index of `name`; ParseError naming the file when absent.
  std::size_t column(std::string_view name) const;
  std::optional<std::size_t> find_column(std::string_view name) const;

  double number(std::size_t row, std::size_t col) const;
  std::int64_t integer(std::size_t row, std::size_t col) const;
  bool flag(std::size_t row, std::size_t col) const;  // 0/1, true/false
  const std::string& text(std::size_t row, std::size_t col) const;
  [[noreturn]] void error(std::size_t row, std::size_t col, const std::string& detail) const;
};

CsvTable parse_csv(std::string_view text, std::string source);
CsvTable read_csv(const fs::path& path);

/// Shortest representation that parses back to the same double.
std::string format_double(double v);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  CsvWriter& cell(std::string_view v);
  CsvWriter& cell(double v);
  CsvWriter& cell(std::int64_t v);
  CsvWriter& cell(int v) { return cell(static_cast<std::int64_t>(v)); }
  CsvWriter& cell(std::size_t v) { return cell(static_cast<std::int64_t>(v)); }
  CsvWriter& empty();
  void end_row();
  const std::string& str() const noexcept { return out_; }

 private:
  std::size_t columns_, in_row_ = 0;
  std::string out_;
};

// ---------------------------------------------------------------------------
// Domain tables

std::vector<Person> read_persons(const fs::path& path);
std::string persons_csv(std::span<const Person> persons);

std::vector<Zone> read_zones(const fs::path& path);
std::string zones_csv(const NetworkTimeline& network);
/// Upper triangle is enough; missing pairs are an error.
std::vector<double> read_distances(const fs::path& path, std::span<const Zone> zones);
std::string distances_csv(const NetworkTimeline& network);
/// Adds activation months to `zones` (earliest row per zone and facility wins).
void read_supply(const fs::path& path, std::vector<Zone>& zones);
std::string supply_csv(const NetworkTimeline& network);
NetworkTimeline read_network(const fs::path& zones, const fs::path& distances, const fs::path& supply,
                             int horizon);

std::vector<Trip> read_trips(const fs::path& path);
std::string trips_csv(std::span<const Trip> trips);

std::string accessibility_csv(const AccessibilityField& field);
std::string posterior_csv(const std::vector<PersonId>& ids, const Eigen::MatrixXd& posterior);

/// month, new_adopters
AdoptionSeries read_adoption_series(const fs::path& path);
std::string adoption_series_csv(const AdoptionSeries& series);
/// month, S, Y
std::string bass_forecast_csv(const AdoptionSeries& series, int first_month);

std::string forecast_csv(const ForecastResult& result);
std::string holdout_csv(const HoldoutResult& result);

// ---------------------------------------------------------------------------
// JSON

json to_json(const DcSpec& spec);
DcSpec dc_spec_from_json(const json& j);
json to_json(const DcModel& model);
DcModel dc_model_from_json(const json& j);
json to_json(const DcEstimate& est);

json to_json(const AdoptionParams& params);
AdoptionParams adoption_params_from_json(const json& j);
json to_json(const FitStats& fit);
FitStats fit_stats_from_json(const json& j);
json to_json(const EmResult& em, int window_end);
json to_json(const MnlResult& mnl);
Eigen::MatrixXd matrix_from_json(const json& j);
json to_json(const Eigen::MatrixXd& m);

json to_json(const BassParams& p);
BassParams bass_params_from_json(const json& j);
json to_json(const BassFit& fit);

json to_json(const Scenario& s);
Scenario scenario_from_json(const json& j);
std::vector<Scenario> scenarios_from_json(const json& j);

struct WeightsConfig {
  PopulationFractions fractions;
  std::optional<double> population_size;
  std::optional<int> horizon;
};
json to_json(const WeightsConfig& w);
WeightsConfig weights_config_from_json(const json& j);

SynthConfig synth_config_from_json(const json& j);
json to_json(const SynthConfig& c);

json parse_json(std::string_view text, const std::string& source);
json read_json(const fs::path& path);
/// Canonical text: two-space indent, trailing newline.
std::string dump(const json& j);

// ---------------------------------------------------------------------------
// Bundles and manifests

/// persons.csv, trips.csv, supply.csv, zones.csv, distances.csv, truth.json,
/// weights.json and dc_spec.json under `dir`. Returns the written paths.
std::vector<fs::path> write_synth_bundle(const SynthData& data, const fs::path& dir);

struct Manifest {
  std::string command;
  std::string version;
  std::optional<std::uint64_t> seed;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256
  json options = json::object();
};
json to_json(const Manifest& m);

}  // namespace adopt::io
