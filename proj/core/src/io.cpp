#include "adopt/io.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

namespace adopt::io {

// ---------------------------------------------------------------------------
// Files

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) fail(ErrorKind::Io, "cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) fail(ErrorKind::Io, "write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorKind::Io, "cannot move output into place at '" + path.string() + "'");
  }
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    fail(ErrorKind::Internal, "SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

CsvTable parse_csv(std::string_view text, std::string source) {
  CsvTable t;
  t.source = std::move(source);
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::size_t line = 1, pos = 0;
  bool have_header = false;
  while (pos < text.size()) {
    std::vector<std::string> fields;
    std::string field;
    const std::size_t row_line = line;
    bool quoted = false, was_quoted = false, row_done = false;
    while (!row_done) {
      if (pos >= text.size()) {
        if (quoted) throw ParseError(t.source, row_line, fields.size() + 1, "unterminated quoted field");
        break;
      }
      const char ch = text[pos++];
      if (quoted) {
        if (ch == '"') {
          if (pos < text.size() && text[pos] == '"') {
            field.push_back('"');
            ++pos;
          } else {
            quoted = false;
          }
        } else {
          if (ch == '\n') ++line;
          field.push_back(ch);
        }
        continue;
      }
      switch (ch) {
        case '"':
          if (!trim(field).empty()) {
            throw ParseError(t.source, row_line, fields.size() + 1, "quote inside unquoted field");
          }
          field.clear();
          quoted = was_quoted = true;
          break;
        case ',':
          fields.push_back(was_quoted ? field : std::string(trim(field)));
          field.clear();
          was_quoted = false;
          break;
        case '\n':
          ++line;
          row_done = true;
          break;
        default:
          field.push_back(ch);
      }
    }
    fields.push_back(was_quoted ? field : std::string(trim(field)));
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      std::set<std::string> seen;
      for (std::size_t c = 0; c < t.header.size(); ++c) {
        if (!seen.insert(t.header[c]).second) {
          throw ParseError(t.source, row_line, c + 1, "duplicate column '" + t.header[c] + "'");
        }
      }
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw ParseError(t.source, row_line, std::min(fields.size(), t.header.size()) + 1,
                       "expected " + std::to_string(t.header.size()) + " fields, found " +
                           std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.lines.push_back(row_line);
  }
  if (!have_header) throw ParseError(t.source, 1, 1, "missing header row");
  return t;
}

CsvTable read_csv(const fs::path& path) { return parse_csv(read_file(path), path.string()); }

std::optional<std::size_t> CsvTable::find_column(std::string_view name) const {
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == name) return c;
  }
  return std::nullopt;
}

std::size_t CsvTable::column(std::string_view name) const {
  if (auto c = find_column(name)) return *c;
  throw ParseError(source, 1, header.size() + 1, "missing column '" + std::string(name) + "'");
}

void CsvTable::error(std::size_t row, std::size_t col, const std::string& detail) const {
  throw ParseError(source, lines.at(row), col + 1, detail);
}

const std::string& CsvTable::text(std::size_t row, std::size_t col) const { return rows.at(row).at(col); }

double CsvTable::number(std::size_t row, std::size_t col) const {
  const std::string& s = text(row, col);
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc{} || ptr != end) error(row, col, "expected a number, found '" + s + "'");
  if (!std::isfinite(v)) error(row, col, "non-finite number '" + s + "'");
  return v;
}

std::int64_t CsvTable::integer(std::size_t row, std::size_t col) const {
  const std::string& s = text(row, col);
  std::int64_t v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc{} || ptr != end) error(row, col, "expected an integer, found '" + s + "'");
  return v;
}

bool CsvTable::flag(std::size_t row, std::size_t col) const {
  const std::string& s = text(row, col);
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  error(row, col, "expected 0/1, found '" + s + "'");
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) fail(ErrorKind::Internal, "number formatting failed");
  return std::string(buf, ptr);
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
  for (const auto& h : header) cell(h);
  end_row();
}

CsvWriter& CsvWriter::cell(std::string_view v) {
  if (in_row_++ > 0) out_.push_back(',');
  if (v.find_first_of(",\"\n\r") != std::string_view::npos || (!v.empty() && (v.front() == ' ' || v.back() == ' '))) {
    out_.push_back('"');
    for (char ch : v) {
      if (ch == '"') out_.push_back('"');
      out_.push_back(ch);
    }
    out_.push_back('"');
  } else {
    out_.append(v);
  }
  return *this;
}

CsvWriter& CsvWriter::cell(double v) { return cell(std::string_view(format_double(v))); }

CsvWriter& CsvWriter::cell(std::int64_t v) { return cell(std::string_view(std::to_string(v))); }

CsvWriter& CsvWriter::empty() { return cell(std::string_view{}); }

void CsvWriter::end_row() {
  if (in_row_ != columns_) {
    fail(ErrorKind::Internal, "CSV row has " + std::to_string(in_row_) + " cells, header has " +
                                  std::to_string(columns_));
  }
  out_.push_back('\n');
  in_row_ = 0;
}

// ---------------------------------------------------------------------------
// Domain tables

std::vector<Person> read_persons(const fs::path& path) {
  const auto t = read_csv(path);
  const auto c_id = t.column("id"), c_home = t.column("home_zone"), c_inc = t.column("income_k"),
             c_male = t.column("male"), c_tech = t.column("tech_firm_employee"), c_str = t.column("stratum"),
             c_adopt = t.column("adoption_month");
  std::vector<Person> out;
  out.reserve(t.rows.size());
  std::set<PersonId> ids;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    Person p;
    p.id = t.integer(r, c_id);
    if (!ids.insert(p.id).second) t.error(r, c_id, "duplicate person id " + std::to_string(p.id));
    p.home_zone = t.integer(r, c_home);
    p.income_k = t.number(r, c_inc);
    p.male = t.flag(r, c_male);
    p.tech_firm_employee = t.flag(r, c_tech);
    try {
      p.stratum = stratum_from_string(t.text(r, c_str));
    } catch (const Error& e) {
      t.error(r, c_str, e.what());
    }
    if (!t.text(r, c_adopt).empty()) {
      const auto m = t.integer(r, c_adopt);
      if (m < 1) t.error(r, c_adopt, "adoption month must be >= 1");
      p.adoption_month = static_cast<int>(m);
    }
    if (p.stratum == Stratum::PopulationSample && p.adoption_month) {
      t.error(r, c_adopt, "population-sample persons cannot have an adoption month");
    }
    out.push_back(p);
  }
  return out;
}

std::string persons_csv(std::span<const Person> persons) {
  CsvWriter w({"id", "home_zone", "income_k", "male", "tech_firm_employee", "stratum", "adoption_month"});
  for (const auto& p : persons) {
    w.cell(p.id).cell(p.home_zone).cell(p.income_k).cell(p.male ? 1 : 0).cell(p.tech_firm_employee ? 1 : 0);
    w.cell(to_string(p.stratum));
    if (p.adoption_month) {
      w.cell(*p.adoption_month);
    } else {
      w.empty();
    }
    w.end_row();
  }
  return w.str();
}

std::vector<Zone> read_zones(const fs::path& path) {
  const auto t = read_csv(path);
  const auto c_id = t.column("id"), c_emp = t.column("employment_density");
  std::vector<Zone> zones;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    Zone z;
    z.id = t.integer(r, c_id);
    z.employment_density = t.number(r, c_emp);
    if (z.employment_density < 0.0) t.error(r, c_emp, "employment density must be >= 0");
    zones.push_back(z);
  }
  return zones;
}

std::string zones_csv(const NetworkTimeline& network) {
  CsvWriter w({"id", "employment_density"});
  for (const auto& z : network.zones()) {
    w.cell(z.id).cell(z.employment_density);
    w.end_row();
  }
  return w.str();
}

std::vector<double> read_distances(const fs::path& path, std::span<const Zone> zones) {
  const auto t = read_csv(path);
  const auto c_from = t.column("from_zone"), c_to = t.column("to_zone"), c_km = t.column("km");
  std::map<ZoneId, std::size_t> index;
  for (std::size_t i = 0; i < zones.size(); ++i) index[zones[i].id] = i;
  const std::size_t n = zones.size();
  std::vector<double> d(n * n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 0.0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto a = index.find(t.integer(r, c_from));
    if (a == index.end()) t.error(r, c_from, "unknown zone");
    const auto b = index.find(t.integer(r, c_to));
    if (b == index.end()) t.error(r, c_to, "unknown zone");
    const double km = t.number(r, c_km);
    if (km < 0.0) t.error(r, c_km, "distance must be >= 0");
    const std::size_t i = a->second, j = b->second;
    for (const auto& [x, y] : {std::pair{i, j}, std::pair{j, i}}) {
      double& cell = d[x * n + y];
      if (!std::isnan(cell) && std::abs(cell - km) > 1e-9) {
        t.error(r, c_km, "distance conflicts with an earlier row for the same pair");
      }
      cell = km;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isnan(d[i * n + j])) {
        throw ParseError(t.source, t.lines.empty() ? 1 : t.lines.back(), 1,
                         "no distance between zones " + std::to_string(zones[i].id) + " and " +
                             std::to_string(zones[j].id));
      }
    }
  }
  return d;
}

std::string distances_csv(const NetworkTimeline& network) {
  CsvWriter w({"from_zone", "to_zone", "km"});
  for (std::size_t i = 0; i < network.size(); ++i) {
    for (std::size_t j = i + 1; j < network.size(); ++j) {
      w.cell(network.zone(i).id).cell(network.zone(j).id).cell(network.distance(i, j));
      w.end_row();
    }
  }
  return w.str();
}

void read_supply(const fs::path& path, std::vector<Zone>& zones) {
  const auto t = read_csv(path);
  const auto c_zone = t.column("zone"), c_type = t.column("facility_type"), c_month = t.column("activation_month");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const ZoneId id = t.integer(r, c_zone);
    auto it = std::find_if(zones.begin(), zones.end(), [&](const Zone& z) { return z.id == id; });
    if (it == zones.end()) t.error(r, c_zone, "unknown zone " + std::to_string(id));
    Facility f{};
    try {
      f = facility_from_string(t.text(r, c_type));
    } catch (const Error& e) {
      t.error(r, c_type, e.what());
    }
    const auto m = t.integer(r, c_month);
    if (m < 1) t.error(r, c_month, "activation month must be >= 1");
    auto& slot = f == Facility::Station ? it->station_from : it->onstreet_from;
    slot = slot ? std::min(*slot, static_cast<int>(m)) : static_cast<int>(m);
  }
}

std::string supply_csv(const NetworkTimeline& network) {
  CsvWriter w({"zone", "facility_type", "activation_month"});
  for (const auto& z : network.zones()) {
    if (z.station_from) {
      w.cell(z.id).cell(to_string(Facility::Station)).cell(*z.station_from);
      w.end_row();
    }
    if (z.onstreet_from) {
      w.cell(z.id).cell(to_string(Facility::OnStreet)).cell(*z.onstreet_from);
      w.end_row();
    }
  }
  return w.str();
}

NetworkTimeline read_network(const fs::path& zones_path, const fs::path& distances, const fs::path& supply,
                             int horizon) {
  auto zones = read_zones(zones_path);
  read_supply(supply, zones);
  auto d = read_distances(distances, zones);
  return NetworkTimeline(std::move(zones), std::move(d), horizon);
}

std::vector<Trip> read_trips(const fs::path& path) {
  const auto t = read_csv(path);
  const auto c_p = t.column("person_id"), c_o = t.column("origin_zone"), c_d = t.column("dest_zone"),
             c_m = t.column("month");
  std::vector<Trip> trips;
  trips.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    Trip trip;
    trip.person = t.integer(r, c_p);
    trip.origin = t.integer(r, c_o);
    trip.destination = t.integer(r, c_d);
    const auto m = t.integer(r, c_m);
    if (m < 1) t.error(r, c_m, "trip month must be >= 1");
    trip.month = static_cast<int>(m);
    trips.push_back(trip);
  }
  return trips;
}

std::string trips_csv(std::span<const Trip> trips) {
  CsvWriter w({"person_id", "origin_zone", "dest_zone", "month"});
  for (const auto& t : trips) {
    w.cell(t.person).cell(t.origin).cell(t.destination).cell(t.month);
    w.end_row();
  }
  return w.str();
}

std::string accessibility_csv(const AccessibilityField& field) {
  CsvWriter w({"person_id", "month", "value", "covered_flag"});
  for (std::size_t n = 0; n < field.person_count(); ++n) {
    for (int t = 1; t <= field.horizon(); ++t) {
      w.cell(field.person_ids()[n]).cell(t).cell(field.value(n, t)).cell(field.covered(n, t) ? 1 : 0);
      w.end_row();
    }
  }
  return w.str();
}

std::string posterior_csv(const std::vector<PersonId>& ids, const Eigen::MatrixXd& posterior) {
  require(posterior.rows() == static_cast<Eigen::Index>(ids.size()) && posterior.cols() == kClassCount,
          ErrorKind::InvalidInput, "posterior matrix does not match the person list");
  CsvWriter w({"person_id", "p_innovator", "p_imitator", "p_nonadopter"});
  for (std::size_t n = 0; n < ids.size(); ++n) {
    const auto i = static_cast<Eigen::Index>(n);
    w.cell(ids[n]).cell(posterior(i, 0)).cell(posterior(i, 1)).cell(posterior(i, 2));
    w.end_row();
  }
  return w.str();
}

AdoptionSeries read_adoption_series(const fs::path& path) {
  const auto t = read_csv(path);
  const auto c_m = t.column("month"), c_s = t.column("new_adopters");
  std::vector<double> s;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto m = t.integer(r, c_m);
    if (m != static_cast<std::int64_t>(r + 1)) t.error(r, c_m, "months must run 1, 2, ... without gaps");
    const double v = t.number(r, c_s);
    if (v < 0.0) t.error(r, c_s, "new adopters must be >= 0");
    s.push_back(v);
  }
  return AdoptionSeries::from_new_adopters(s);
}

std::string adoption_series_csv(const AdoptionSeries& series) {
  CsvWriter w({"month", "new_adopters"});
  for (int t = 1; t <= series.horizon(); ++t) {
    w.cell(t).cell(series.S[static_cast<std::size_t>(t)]);
    w.end_row();
  }
  return w.str();
}

std::string bass_forecast_csv(const AdoptionSeries& series, int first_month) {
  CsvWriter w({"month", "S", "Y"});
  for (int t = std::max(1, first_month); t <= series.horizon(); ++t) {
    w.cell(t).cell(series.S[static_cast<std::size_t>(t)]).cell(series.Y[static_cast<std::size_t>(t)]);
    w.end_row();
  }
  return w.str();
}

std::string forecast_csv(const ForecastResult& result) {
  CsvWriter w({"scenario", "month", "mean_S", "mean_Y", "q025", "q25", "q50", "q75", "q975"});
  for (const auto& sf : result.scenarios) {
    for (std::size_t m = 0; m < sf.months.size(); ++m) {
      w.cell(sf.name).cell(sf.months[m]).cell(sf.mean_S[m]).cell(sf.mean_Y[m]);
      for (const auto& q : sf.quantile_Y) w.cell(q[m]);
      w.end_row();
    }
  }
  return w.str();
}

std::string holdout_csv(const HoldoutResult& result) {
  CsvWriter w({"month", "actual", "point", "mean", "q025", "q25", "q50", "q75", "q975", "in_box", "in_whiskers"});
  for (const auto& m : result.months) {
    w.cell(m.month).cell(m.actual).cell(m.point).cell(m.mean);
    for (double q : m.quantiles) w.cell(q);
    w.cell(m.in_box ? 1 : 0).cell(m.in_whiskers ? 1 : 0);
    w.end_row();
  }
  return w.str();
}

// ---------------------------------------------------------------------------
// JSON

namespace {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

void wrap_json_error(const std::function<void()>& fn, const std::string& what) {
  try {
    fn();
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, what + ": " + e.what());
  }
}

}  // namespace

json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
    rows.push_back(std::move(r));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& r = j.at(static_cast<std::size_t>(i));
    require(static_cast<Eigen::Index>(r.size()) == cols, ErrorKind::Parse, "ragged matrix in JSON");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = r.at(static_cast<std::size_t>(k)).get<double>();
  }
  return m;
}

json to_json(const DcSpec& spec) {
  return {{"hub_zones", spec.hub_zones},
          {"tech_zones", spec.tech_zones},
          {"downtown_zones", spec.downtown_zones},
          {"airport_zones", spec.airport_zones},
          {"size_floor", spec.size_floor}};
}

DcSpec dc_spec_from_json(const json& j) {
  DcSpec s;
  wrap_json_error([&] {
    s.hub_zones = get_or<std::vector<ZoneId>>(j, "hub_zones", {});
    s.tech_zones = get_or<std::vector<ZoneId>>(j, "tech_zones", {});
    s.downtown_zones = get_or<std::vector<ZoneId>>(j, "downtown_zones", {});
    s.airport_zones = get_or<std::vector<ZoneId>>(j, "airport_zones", {});
    s.size_floor = get_or(j, "size_floor", 1.0);
  }, "destination-choice spec");
  return s;
}

json to_json(const DcModel& model) {
  json asc = json::object();
  for (const auto& [zone, v] : model.params.asc) asc[std::to_string(zone)] = v;
  const auto& p = model.params;
  return {{"spec", to_json(model.spec)},
          {"params",
           {{"distance_100km", p.beta_distance},
            {"log_employment_density", p.alpha_logsize},
            {"home", p.delta_home},
            {"onstreet_parking", p.theta_onstreet},
            {"pair_tech_downtown", p.pair_tech_downtown},
            {"pair_tech_airport", p.pair_tech_airport},
            {"asc", asc}}}};
}

namespace {

// Synth configs may leave the spec empty for the generator to fill in, so
// validation is left to the caller.
DcModel parse_dc_model(const json& j) {
  const json& m = j.contains("model") ? j.at("model") : j;
  DcModel model;
  wrap_json_error([&] {
    model.spec = dc_spec_from_json(m.at("spec"));
    const auto& p = m.at("params");
    model.params.beta_distance = p.at("distance_100km").get<double>();
    model.params.alpha_logsize = p.at("log_employment_density").get<double>();
    model.params.delta_home = p.at("home").get<double>();
    model.params.theta_onstreet = p.at("onstreet_parking").get<double>();
    model.params.pair_tech_downtown = p.at("pair_tech_downtown").get<double>();
    model.params.pair_tech_airport = p.at("pair_tech_airport").get<double>();
    if (p.contains("asc")) {
      for (const auto& [k, v] : p.at("asc").items()) model.params.asc[std::stoll(k)] = v.get<double>();
    }
  }, "destination-choice model");
  for (ZoneId h : model.spec.hub_zones) model.params.asc.try_emplace(h, 0.0);
  return model;
}

}  // namespace

DcModel dc_model_from_json(const json& j) {
  DcModel model = parse_dc_model(j);
  model.validate();
  return model;
}

json to_json(const DcEstimate& est) {
  json coefs = json::array();
  for (std::size_t i = 0; i < est.names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    coefs.push_back({{"name", est.names[i]},
                     {"estimate", est.estimates[k]},
                     {"std_error", est.std_errors[k]},
                     {"t_stat", est.t_stats[k]},
                     {"identified", static_cast<bool>(est.identified[i])}});
  }
  return {{"model", to_json(est.model)},
          {"coefficients", coefs},
          {"covariance", to_json(est.covariance)},
          {"loglik", est.loglik},
          {"null_loglik", est.null_loglik},
          {"grad_norm", est.grad_norm},
          {"iterations", est.iterations},
          {"trips", est.trips},
          {"single_destination_trips", est.single_destination_trips},
          {"warnings", est.warnings}};
}

json to_json(const AdoptionParams& p) {
  auto mem = [](const MembershipCoefs& m) { return json{{"asc", m.asc}, {"income", m.income}, {"male", m.male}}; };
  return {{"phi", p.phi},
          {"membership", {{"imitator", mem(p.imitator_membership)}, {"nonadopter", mem(p.nonadopter_membership)}}},
          {"innovator",
           {{"asc", p.innovator.asc},
            {"tech", p.innovator.tech},
            {"station", p.innovator.station},
            {"onstreet", p.innovator.onstreet},
            {"access_covered", p.innovator.access_covered},
            {"access_uncovered", p.innovator.access_uncovered}}},
          {"imitator",
           {{"asc", p.imitator.asc},
            {"tech", p.imitator.tech},
            {"access_covered", p.imitator.access_covered},
            {"access_uncovered", p.imitator.access_uncovered},
            {"social", p.imitator.social}}},
          {"nonadopter", {{"asc", p.nonadopter.asc}}}};
}

AdoptionParams adoption_params_from_json(const json& j) {
  const json& b = j.contains("params") ? j.at("params") : j;
  AdoptionParams p;
  wrap_json_error([&] {
    p.phi = b.at("phi").get<double>();
    auto mem = [](const json& m) {
      return MembershipCoefs{m.at("asc").get<double>(), m.at("income").get<double>(), m.at("male").get<double>()};
    };
    p.imitator_membership = mem(b.at("membership").at("imitator"));
    p.nonadopter_membership = mem(b.at("membership").at("nonadopter"));
    const auto& a = b.at("innovator");
    p.innovator = {a.at("asc").get<double>(),      a.at("tech").get<double>(),
                   a.at("station").get<double>(),  a.at("onstreet").get<double>(),
                   a.at("access_covered").get<double>(), a.at("access_uncovered").get<double>()};
    const auto& m = b.at("imitator");
    p.imitator = {m.at("asc").get<double>(), m.at("tech").get<double>(), m.at("access_covered").get<double>(),
                  m.at("access_uncovered").get<double>(), m.at("social").get<double>()};
    p.nonadopter = {b.at("nonadopter").at("asc").get<double>()};
  }, "adoption parameters");
  p.validate();
  return p;
}

json to_json(const FitStats& f) {
  return {{"loglik", f.loglik},   {"null_loglik", f.null_loglik}, {"parameters", f.parameters},
          {"observations", f.observations}, {"aic", f.aic}, {"bic", f.bic},
          {"rho_bar2", f.rho_bar2}, {"null_definition", f.null_definition}};
}

FitStats fit_stats_from_json(const json& j) {
  FitStats f;
  wrap_json_error([&] {
    f.loglik = j.at("loglik").get<double>();
    f.null_loglik = j.at("null_loglik").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                   : j.at("null_loglik").get<double>();
    f.parameters = j.at("parameters").get<int>();
    f.observations = j.at("observations").get<std::size_t>();
    f.aic = j.at("aic").get<double>();
    f.bic = j.at("bic").get<double>();
    f.rho_bar2 = j.at("rho_bar2").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                             : j.at("rho_bar2").get<double>();
    f.null_definition = get_or<std::string>(j, "null_definition", f.null_definition);
  }, "fit statistics");
  return f;
}

json to_json(const EmResult& em, int window_end) {
  const auto& names = AdoptionParams::names();
  const Eigen::VectorXd theta = em.params.to_vector();
  json coefs = json::array();
  for (Eigen::Index i = 0; i < AdoptionParams::kSize; ++i) {
    const double se = em.std_errors.size() ? em.std_errors[i] : 0.0;
    const bool free = em.free.empty() || em.free[static_cast<std::size_t>(i)];
    coefs.push_back({{"name", std::string(names[static_cast<std::size_t>(i)])},
                     {"estimate", theta[i]},
                     {"std_error", se},
                     {"t_stat", free && se > 0.0 ? json(theta[i] / se) : json(nullptr)},
                     {"free", free}});
  }
  return {{"params", to_json(em.params)},
          {"estimation_window", window_end},
          {"coefficients", coefs},
          {"covariance", to_json(em.covariance)},
          {"fit", to_json(em.fit)},
          {"loglik", em.loglik},
          {"iterations", em.iterations},
          {"converged", em.converged},
          {"degenerate", em.degenerate},
          {"class_shares",
           {{"innovator", em.class_shares[0]}, {"imitator", em.class_shares[1]}, {"nonadopter", em.class_shares[2]}}},
          {"best_restart", em.best_restart},
          {"restart_logliks", em.restart_logliks},
          {"trajectory", em.trajectory},
          {"warnings", em.warnings}};
}

json to_json(const MnlResult& mnl) {
  json coefs = json::array();
  for (std::size_t i = 0; i < mnl.names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double se = mnl.std_errors[k];
    coefs.push_back({{"name", mnl.names[i]},
                     {"estimate", mnl.coefficients[k]},
                     {"std_error", se},
                     {"t_stat", se > 0.0 ? json(mnl.coefficients[k] / se) : json(nullptr)}});
  }
  return {{"covariates", mnl.covariates == MnlCovariates::Union ? "union" : "innovator-template"},
          {"coefficients", coefs},
          {"loglik", mnl.loglik},
          {"iterations", mnl.iterations},
          {"converged", mnl.converged},
          {"fit", to_json(mnl.fit)}};
}

json to_json(const BassParams& p) { return {{"p", p.p}, {"q", p.q}, {"M", p.M}}; }

BassParams bass_params_from_json(const json& j) {
  const json& b = j.contains("params") ? j.at("params") : j;
  BassParams p;
  wrap_json_error([&] {
    p.p = b.at("p").get<double>();
    p.q = b.at("q").get<double>();
    p.M = b.at("M").get<double>();
  }, "Bass parameters");
  p.validate();
  return p;
}

json to_json(const BassFit& fit) {
  return {{"params", to_json(fit.params)},
          {"regression", {{"a", fit.a}, {"b", fit.b}, {"c", fit.c}}},
          {"r_squared", fit.r_squared},
          {"observations", fit.observations},
          {"residuals", fit.residuals}};
}

json to_json(const Scenario& s) {
  json edits = json::array();
  for (const auto& e : s.edits) {
    edits.push_back({{"zone", e.zone}, {"facility", std::string(to_string(e.facility))}, {"month", e.month}});
  }
  return {{"name", s.name}, {"edits", edits}, {"horizon", s.horizon}};
}

Scenario scenario_from_json(const json& j) {
  Scenario s;
  wrap_json_error([&] {
    s.name = j.at("name").get<std::string>();
    s.horizon = get_or(j, "horizon", 12);
    for (const auto& e : get_or(j, "edits", json::array())) {
      s.edits.push_back({e.at("zone").get<ZoneId>(), facility_from_string(e.at("facility").get<std::string>()),
                         e.at("month").get<int>()});
    }
  }, "scenario");
  return s;
}

std::vector<Scenario> scenarios_from_json(const json& j) {
  const json& list = j.is_object() && j.contains("scenarios") ? j.at("scenarios") : j;
  require(list.is_array(), ErrorKind::Parse, "scenarios must be a JSON list");
  std::vector<Scenario> out;
  std::set<std::string> names;
  for (const auto& s : list) {
    out.push_back(scenario_from_json(s));
    require(names.insert(out.back().name).second, ErrorKind::InvalidScenario,
            "duplicate scenario name '" + out.back().name + "'");
  }
  return out;
}

json to_json(const WeightsConfig& w) {
  json j = {{"population_fractions",
             {{"adopter_sample", w.fractions.adopter_sample}, {"population_sample", w.fractions.population_sample}}}};
  if (w.population_size) j["population_size"] = *w.population_size;
  if (w.horizon) j["horizon"] = *w.horizon;
  return j;
}

WeightsConfig weights_config_from_json(const json& j) {
  WeightsConfig w;
  wrap_json_error([&] {
    const auto& f = j.at("population_fractions");
    w.fractions = {f.at("adopter_sample").get<double>(), f.at("population_sample").get<double>()};
    if (j.contains("population_size")) w.population_size = j.at("population_size").get<double>();
    if (j.contains("horizon")) w.horizon = j.at("horizon").get<int>();
  }, "weights config");
  return w;
}

SynthConfig synth_config_from_json(const json& j) {
  SynthConfig c = SynthConfig::defaults();
  wrap_json_error([&] {
    c.seed = get_or(j, "seed", c.seed);
    c.n_zones = get_or(j, "n_zones", c.n_zones);
    c.n_persons = get_or(j, "n_persons", c.n_persons);
    c.horizon = get_or(j, "horizon", c.horizon);
    c.plane_km = get_or(j, "plane_km", c.plane_km);
    c.nonadopter_sample_fraction = get_or(j, "nonadopter_sample_fraction", c.nonadopter_sample_fraction);
    c.income_median_k = get_or(j, "income_median_k", c.income_median_k);
    c.income_sigma = get_or(j, "income_sigma", c.income_sigma);
    c.zone_income = get_or(j, "zone_income", c.zone_income);
    c.male_share = get_or(j, "male_share", c.male_share);
    c.tech_share = get_or(j, "tech_share", c.tech_share);
    c.home_zone_weights = get_or(j, "home_zone_weights", c.home_zone_weights);
    c.employment_median = get_or(j, "employment_median", c.employment_median);
    c.employment_sigma = get_or(j, "employment_sigma", c.employment_sigma);
    c.covered_share = get_or(j, "covered_share", c.covered_share);
    c.activation_share = get_or(j, "activation_share", c.activation_share);
    c.onstreet_share = get_or(j, "onstreet_share", c.onstreet_share);
    c.trip_months = get_or(j, "trip_months", c.trip_months);
    c.trips_per_month = get_or(j, "trips_per_month", c.trips_per_month);
    if (j.contains("population_size")) c.population_size = j.at("population_size").get<double>();
  }, "synth config");
  if (j.contains("truth")) c.truth = adoption_params_from_json(j.at("truth"));
  if (j.contains("dc_model")) {
    const DcModel m = parse_dc_model(j.at("dc_model"));
    c.dc_spec = m.spec;
    c.dc = m.params;
  }
  c.validate();
  return c;
}

json to_json(const SynthConfig& c) {
  json j = {{"seed", c.seed},
            {"n_zones", c.n_zones},
            {"n_persons", c.n_persons},
            {"horizon", c.horizon},
            {"plane_km", c.plane_km},
            {"nonadopter_sample_fraction", c.nonadopter_sample_fraction},
            {"income_median_k", c.income_median_k},
            {"income_sigma", c.income_sigma},
            {"zone_income", c.zone_income},
            {"male_share", c.male_share},
            {"tech_share", c.tech_share},
            {"home_zone_weights", c.home_zone_weights},
            {"employment_median", c.employment_median},
            {"employment_sigma", c.employment_sigma},
            {"covered_share", c.covered_share},
            {"activation_share", c.activation_share},
            {"onstreet_share", c.onstreet_share},
            {"trip_months", c.trip_months},
            {"trips_per_month", c.trips_per_month},
            {"truth", to_json(c.truth)},
            {"dc_model", to_json(DcModel{c.dc_spec, c.dc})}};
  if (c.population_size) j["population_size"] = *c.population_size;
  return j;
}

json parse_json(std::string_view text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // Map the byte offset onto a line and column.
    const std::size_t at = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < at; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(source, line, col, e.what());
  }
}

json read_json(const fs::path& path) { return parse_json(read_file(path), path.string()); }

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Bundles and manifests

std::vector<fs::path> write_synth_bundle(const SynthData& data, const fs::path& dir) {
  std::vector<fs::path> written;
  auto put = [&](const char* name, const std::string& content) {
    const fs::path p = dir / name;
    write_file_atomic(p, content);
    written.push_back(p);
  };
  put("persons.csv", persons_csv(data.persons));
  put("trips.csv", trips_csv(data.trips));
  put("supply.csv", supply_csv(data.network));
  put("zones.csv", zones_csv(data.network));
  put("distances.csv", distances_csv(data.network));

  json classes = json::array();
  for (std::size_t i = 0; i < data.persons.size(); ++i) {
    classes.push_back({{"person_id", data.persons[i].id}, {"class", std::string(to_string(data.classes[i]))}});
  }
  json truth = {{"params", to_json(data.config.truth)},
                {"dc_model", to_json(data.dc)},
                {"seed", data.config.seed},
                {"population_persons", data.config.n_persons},
                {"population_adopters", data.population_adopters},
                {"population_y", data.population_y},
                {"analytic_shares",
                 {{"innovator", data.analytic_shares[0]},
                  {"imitator", data.analytic_shares[1]},
                  {"nonadopter", data.analytic_shares[2]}}},
                {"weights", {{"adopter_sample", data.weights.adopter_sample},
                             {"population_sample", data.weights.population_sample}}},
                {"classes", classes},
                {"warnings", data.warnings}};
  put("truth.json", dump(truth));

  WeightsConfig w{data.fractions, data.config.population_size, data.config.horizon};
  if (!w.population_size) w.population_size = static_cast<double>(data.config.n_persons);
  put("weights.json", dump(to_json(w)));
  put("dc_spec.json", dump(to_json(data.dc.spec)));
  return written;
}

json to_json(const Manifest& m) {
  json j = {{"command", m.command}, {"version", m.version}};
  j["seed"] = m.seed ? json(*m.seed) : json(nullptr);
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["options"] = m.options;
  return j;
}

}  // namespace adopt::io
