#include "adopt/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "adopt/bass.hpp"
#include "adopt/destination_choice.hpp"
#include "adopt/error.hpp"
#include "adopt/forecast.hpp"
#include "adopt/io.hpp"
#include "adopt/lccm.hpp"
#include "adopt/parallel.hpp"
#include "adopt/report.hpp"
#include "adopt/synthgen.hpp"

#ifndef ADOPT_VERSION
#define ADOPT_VERSION "0.0.0"
#endif

namespace adopt::cli {
namespace {

namespace fs = std::filesystem;
using io::json;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Records every file read and written so the manifest can hash them.
class Run {
 public:
  Run(std::string command, std::ostream& out) : command_(std::move(command)), out_(out) {}

  const fs::path& input(const fs::path& p) {
    if (!fs::exists(p)) fail(ErrorKind::Io, "input file '" + p.string() + "' does not exist");
    inputs_[p.string()] = io::sha256_file(p);
    return p;
  }
  void write(const fs::path& p, std::string_view content) {
    io::write_file_atomic(p, content);
    outputs_[p.string()] = io::sha256_hex(content);
  }
  void written(const fs::path& p) { outputs_[p.string()] = io::sha256_file(p); }
  void seed(std::uint64_t s) { seed_ = s; }
  json& options() { return options_; }

  void line(const std::string& s) { summary_.push_back(s); }

  void finish(const fs::path& manifest_path) {
    io::Manifest m;
    m.command = command_;
    m.version = ADOPT_VERSION;
    m.seed = seed_;
    m.inputs = inputs_;
    m.outputs = outputs_;
    m.options = options_;
    io::write_file_atomic(manifest_path, io::dump(io::to_json(m)));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    out_ << command_ << "\n";
    for (const auto& s : summary_) out_ << "  " << s << "\n";
    out_ << "  manifest: " << manifest_path.string() << "\n";
    out_ << "  runtime: " << fmt("%.2f s", secs) << "\n";
  }

 private:
  std::string command_;
  std::ostream& out_;
  std::map<std::string, std::string> inputs_, outputs_;
  std::optional<std::uint64_t> seed_;
  json options_ = json::object();
  std::vector<std::string> summary_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

fs::path manifest_for(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

// Input locations. Anything left empty defaults to the file of the same name
// under --data.
struct DataPaths {
  fs::path data = ".";
  fs::path persons, zones, distances, supply, trips, dc_params, dc_spec, weights;
  int horizon = 0;

  void add(CLI::App* app, bool with_trips = false) {
    app->add_option("--data", data, "Directory holding the input tables");
    app->add_option("--persons", persons, "persons.csv");
    app->add_option("--zones", zones, "zones.csv");
    app->add_option("--distances", distances, "distances.csv");
    app->add_option("--supply", supply, "supply.csv");
    app->add_option("--weights-config", weights, "weights.json with population fractions");
    app->add_option("--horizon", horizon, "Last observed month (default: weights.json, then data)");
    if (with_trips) {
      app->add_option("--trips", trips, "trips.csv");
      app->add_option("--dc-spec", dc_spec, "dc_spec.json");
    }
  }
  fs::path or_default(const fs::path& p, const char* name) const { return p.empty() ? data / name : p; }
};

struct Data {
  std::vector<Person> persons;
  NetworkTimeline network;
  SamplingWeights weights;
  io::WeightsConfig weights_config;
  bool weighted = false;
  int horizon = 0;
};

Data load_data(Run& run, const DataPaths& paths) {
  Data d;
  d.persons = io::read_persons(run.input(paths.or_default(paths.persons, "persons.csv")));
  const auto weights_path = paths.or_default(paths.weights, "weights.json");
  if (!paths.weights.empty() || fs::exists(weights_path)) {
    d.weights_config = io::weights_config_from_json(io::read_json(run.input(weights_path)));
    d.weights = compute_weights(count_strata(d.persons), d.weights_config.fractions);
    d.weighted = true;
  } else {
    run.line("warning: no weights config, every observation has weight 1");
  }
  int horizon = paths.horizon;
  if (horizon <= 0 && d.weights_config.horizon) horizon = *d.weights_config.horizon;
  if (horizon <= 0) {
    for (const auto& p : d.persons) horizon = std::max(horizon, p.adoption_month.value_or(0));
  }
  require(horizon > 0, ErrorKind::InvalidInput, "cannot infer the observed horizon; pass --horizon");
  d.horizon = horizon;
  for (const auto& p : d.persons) validate_person(p, horizon);
  d.network = io::read_network(run.input(paths.or_default(paths.zones, "zones.csv")),
                               run.input(paths.or_default(paths.distances, "distances.csv")),
                               run.input(paths.or_default(paths.supply, "supply.csv")), horizon);
  return d;
}

DcModel load_dc(Run& run, const fs::path& path) { return io::dc_model_from_json(io::read_json(run.input(path))); }

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    const auto* end = item.data() + item.size();
    const auto r = std::from_chars(item.data(), end, v);
    require(r.ec == std::errc{} && r.ptr == end && v > 0.0, ErrorKind::InvalidInput,
            "phi grid entry '" + item + "' is not a positive number");
    grid.push_back(v);
  }
  require(!grid.empty(), ErrorKind::InvalidInput, "phi grid is empty");
  return grid;
}

struct CalibrateTo {
  int month = 0;
  std::optional<double> adopters;
};

// "month=30,adopters=120"; adopters defaults to the observed count.
CalibrateTo parse_calibrate_to(const std::string& text) {
  CalibrateTo c;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    require(eq != std::string::npos, ErrorKind::InvalidInput, "--calibrate-to expects key=value pairs");
    const auto key = item.substr(0, eq), value = item.substr(eq + 1);
    try {
      if (key == "month") {
        c.month = std::stoi(value);
      } else if (key == "adopters") {
        c.adopters = std::stod(value);
      } else {
        fail(ErrorKind::InvalidInput, "unknown --calibrate-to key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      fail(ErrorKind::InvalidInput, "--calibrate-to value '" + value + "' is not a number");
    }
  }
  require(c.month >= 1, ErrorKind::InvalidInput, "--calibrate-to needs month >= 1");
  return c;
}

void require_seed(const std::optional<std::uint64_t>& seed, const std::string& command) {
  require(seed.has_value(), ErrorKind::InvalidInput, command + " is stochastic and needs --seed");
}

std::string params_line(const AdoptionParams& p) {
  return "innovator asc " + fmt("%.3f", p.innovator.asc) + ", imitator asc " + fmt("%.3f", p.imitator.asc) +
         ", social " + fmt("%.4f", p.imitator.social) + ", phi " + fmt("%.2f", p.phi);
}

// ---------------------------------------------------------------------------
// Stages

struct SynthOpts {
  fs::path config, out = "synth";
  std::optional<std::uint64_t> seed;
};

void cmd_synth(const SynthOpts& o, std::ostream& out) {
  Run run("synth", out);
  SynthConfig cfg = SynthConfig::defaults();
  bool seeded = false;
  if (!o.config.empty()) {
    const auto j = io::read_json(run.input(o.config));
    cfg = io::synth_config_from_json(j);
    seeded = j.contains("seed");
  }
  if (o.seed) cfg.seed = *o.seed;
  require(seeded || o.seed.has_value(), ErrorKind::InvalidInput, "synth needs --seed or a seed in the config");
  run.seed(cfg.seed);
  run.options() = io::to_json(cfg);

  const auto data = generate(cfg);
  for (const auto& p : io::write_synth_bundle(data, o.out)) run.written(p);

  std::vector<double> monthly(static_cast<std::size_t>(cfg.horizon));
  for (int t = 1; t <= cfg.horizon; ++t) {
    monthly[static_cast<std::size_t>(t - 1)] =
        data.population_y[static_cast<std::size_t>(t)] - data.population_y[static_cast<std::size_t>(t - 1)];
  }
  run.write(o.out / "adoption_series.csv", io::adoption_series_csv(AdoptionSeries::from_new_adopters(monthly)));

  // Base case plus one station in the first zone without a facility.
  std::vector<Scenario> scenarios{{"base", {}, 12}};
  for (const auto& z : data.network.zones()) {
    if (!z.covered(cfg.horizon)) {
      scenarios.push_back({"station_zone_" + std::to_string(z.id), {{z.id, Facility::Station, cfg.horizon + 1}}, 12});
      break;
    }
  }
  json sj = json::array();
  for (const auto& s : scenarios) sj.push_back(io::to_json(s));
  run.write(o.out / "scenarios.json", io::dump(sj));

  run.line("sample persons: " + std::to_string(data.persons.size()) + ", trips: " + std::to_string(data.trips.size()));
  run.line("population adopters by month " + std::to_string(cfg.horizon) + ": " +
           std::to_string(data.population_adopters));
  run.line("analytic class shares: " + fmt("%.3f", data.analytic_shares[0]) + " / " +
           fmt("%.3f", data.analytic_shares[1]) + " / " + fmt("%.3f", data.analytic_shares[2]));
  for (const auto& w : data.warnings) run.line("warning: " + w);
  run.finish(o.out / "manifest.json");
}

struct DcOpts {
  DataPaths paths;
  fs::path out = "dc_params.json";
};

DcEstimate estimate_dc(Run& run, const DataPaths& paths, const Data& d) {
  const auto trips = io::read_trips(run.input(paths.or_default(paths.trips, "trips.csv")));
  const auto spec = io::dc_spec_from_json(io::read_json(run.input(paths.or_default(paths.dc_spec, "dc_spec.json"))));
  return dc_estimate(trips, d.network, d.persons, spec);
}

void cmd_estimate_dc(const DcOpts& o, std::ostream& out) {
  Run run("estimate-dc", out);
  const auto d = load_data(run, o.paths);
  const auto est = estimate_dc(run, o.paths, d);
  run.write(o.out, io::dump(io::to_json(est)));
  run.line("trips: " + std::to_string(est.trips) + ", loglik " + fmt("%.3f", est.loglik) + " (null " +
           fmt("%.3f", est.null_loglik) + ")");
  run.line("distance " + fmt("%.3f", est.model.params.beta_distance) + ", log size " +
           fmt("%.3f", est.model.params.alpha_logsize) + ", home " + fmt("%.3f", est.model.params.delta_home));
  for (const auto& w : est.warnings) run.line("warning: " + w);
  run.finish(manifest_for(o.out));
}

struct AccessOpts {
  DataPaths paths;
  fs::path dc_params = "dc_params.json", out = "accessibility.csv";
  double phi = 1.0;
};

void cmd_compute_access(const AccessOpts& o, std::ostream& out) {
  Run run("compute-access", out);
  require(o.phi > 0.0, ErrorKind::InvalidInput, "--phi must be > 0");
  const auto d = load_data(run, o.paths);
  const auto dc = load_dc(run, o.dc_params);
  run.options() = {{"phi", o.phi}};
  const auto field = accessibility_field(dc, d.persons, d.network, o.phi);
  run.write(o.out, io::accessibility_csv(field));
  run.line("persons: " + std::to_string(field.person_count()) + ", months: " + std::to_string(field.horizon()));
  if (field.negative_source_imputations() > 0) {
    run.line("warning: " + std::to_string(field.negative_source_imputations()) +
             " imputations from a negative logsum");
  }
  run.finish(manifest_for(o.out));
}

struct LccmOpts {
  DataPaths paths;
  fs::path dc_params, out = "adoption_params.json", posterior;
  std::string phi_grid = "0.5,1.0,1.5";
  int window = 0;
  int restarts = 5;
  bool tempered = false;
  std::optional<std::uint64_t> seed;
};

void cmd_estimate_lccm(const LccmOpts& o, std::ostream& out) {
  Run run("estimate-lccm", out);
  require_seed(o.seed, "estimate-lccm");
  require(o.restarts >= 1, ErrorKind::InvalidInput, "--restarts must be >= 1");
  run.seed(*o.seed);
  const auto d = load_data(run, o.paths);
  const int window = o.window > 0 ? o.window : d.horizon;
  require(window <= d.horizon, ErrorKind::InvalidInput, "--window exceeds the observed horizon");
  DcModel dc;
  std::optional<DcEstimate> dc_est;
  if (!o.dc_params.empty()) {
    dc = load_dc(run, o.dc_params);
  } else {
    dc_est = estimate_dc(run, o.paths, d);
    dc = dc_est->model;
  }
  const auto grid = parse_grid(o.phi_grid);
  EmConfig em;
  em.seed = *o.seed;
  em.restarts = o.restarts;
  em.tempered_posterior = o.tempered;
  run.options() = {{"phi_grid", grid}, {"window", window}, {"restarts", o.restarts}, {"tempered", o.tempered}};

  const auto search = phi_grid_search(d.persons, d.network, dc, d.weights, grid, window, em);
  const auto& best = search.best;
  const auto field = accessibility_field(dc, d.persons, d.network, search.best_phi);
  const AdoptionPanel panel(d.persons, field, cumulative_adopters(d.persons, window), window, d.weights);

  json j = io::to_json(best, window);
  json profile = json::array();
  for (const auto& p : search.profile) profile.push_back({{"phi", p.phi}, {"loglik", p.loglik}});
  j["phi_profile"] = profile;
  json mnl = json::array();
  for (auto cov : {MnlCovariates::Union, MnlCovariates::InnovatorTemplate}) {
    mnl.push_back(io::to_json(mnl_baseline_estimate(panel, cov)));
  }
  j["mnl"] = mnl;
  j["weights"] = {{"adopter_sample", d.weights.adopter_sample}, {"population_sample", d.weights.population_sample}};
  if (dc_est) j["dc"] = io::to_json(*dc_est);
  run.write(o.out, io::dump(j));

  std::vector<PersonId> ids;
  ids.reserve(panel.size());
  for (const auto& r : panel.rows()) ids.push_back(r.id);
  const auto posterior_path = o.posterior.empty() ? o.out.parent_path() / "posterior.csv" : o.posterior;
  run.write(posterior_path, io::posterior_csv(ids, best.posterior));

  std::string prof = "phi profile:";
  for (const auto& p : search.profile) prof += " " + fmt("%.2f", p.phi) + " -> " + fmt("%.3f", p.loglik);
  run.line(prof);
  run.line("loglik " + fmt("%.3f", best.loglik) + ", AIC " + fmt("%.2f", best.fit.aic) + ", BIC " +
           fmt("%.2f", best.fit.bic) + ", iterations " + std::to_string(best.iterations));
  run.line(params_line(best.params));
  run.line("class shares: " + fmt("%.3f", best.class_shares[0]) + " / " + fmt("%.3f", best.class_shares[1]) + " / " +
           fmt("%.3f", best.class_shares[2]));
  for (const auto& w : best.warnings) run.line("warning: " + w);
  run.finish(manifest_for(o.out));
}

struct FitBassOpts {
  fs::path series = "adoption_series.csv", out = "bass_params.json";
};

void cmd_fit_bass(const FitBassOpts& o, std::ostream& out) {
  Run run("fit-bass", out);
  const auto series = io::read_adoption_series(run.input(o.series));
  const auto fit = bass_fit_ols(series);
  json j = io::to_json(fit);
  j["series_horizon"] = series.horizon();
  run.write(o.out, io::dump(j));
  run.line("p " + fmt("%.5f", fit.params.p) + ", q " + fmt("%.5f", fit.params.q) + ", M " + fmt("%.1f", fit.params.M));
  run.line("R^2 " + fmt("%.4f", fit.r_squared) + " over " + std::to_string(fit.observations) + " months");
  for (const auto& w : fit.params.validate()) run.line("warning: " + w);
  run.finish(manifest_for(o.out));
}

struct ForecastBassOpts {
  fs::path params = "bass_params.json", series, out = "bass_forecast.csv";
  int horizon = 12;
};

void cmd_forecast_bass(const ForecastBassOpts& o, std::ostream& out) {
  Run run("forecast-bass", out);
  require(o.horizon >= 1, ErrorKind::InvalidInput, "--horizon must be >= 1");
  const auto params = io::bass_params_from_json(io::read_json(run.input(o.params)));
  run.options() = {{"horizon", o.horizon}};
  std::string csv;
  AdoptionSeries s;
  int first = 1;
  if (!o.series.empty()) {
    const auto observed = io::read_adoption_series(run.input(o.series));
    s = bass_forecast(params, observed, o.horizon);
    first = observed.horizon() + 1;
  } else {
    s = bass_simulate(params, o.horizon);
  }
  run.write(o.out, io::bass_forecast_csv(s, first));
  run.line("months " + std::to_string(first) + ".." + std::to_string(s.horizon()) + ", final Y " +
           fmt("%.1f", s.Y.back()));
  run.finish(manifest_for(o.out));
}

struct ParamsFile {
  json doc;
  AdoptionParams params;
  Eigen::MatrixXd covariance;
  int window = 0;
};

ParamsFile load_params(Run& run, const fs::path& path) {
  ParamsFile f;
  f.doc = io::read_json(run.input(path));
  f.params = io::adoption_params_from_json(f.doc);
  f.covariance = f.doc.contains("covariance") ? io::matrix_from_json(f.doc.at("covariance"))
                                              : Eigen::MatrixXd::Zero(AdoptionParams::kSize, AdoptionParams::kSize);
  require(f.covariance.rows() == AdoptionParams::kSize && f.covariance.cols() == AdoptionParams::kSize,
          ErrorKind::InvalidInput, "'" + path.string() + "': covariance must be 18 x 18");
  f.window = f.doc.value("estimation_window", 0);
  return f;
}

struct CalibrateOpts {
  DataPaths paths;
  fs::path params = "adoption_params.json", dc_params = "dc_params.json", out = "calibrated_params.json";
  int month = 0;
  std::optional<double> adopters;
  std::optional<double> population_size;
};

struct Calibrated {
  ForecastPopulation population;
  CalibrationResult result;
};

Calibrated calibrate_on(const ParamsFile& pf, const Data& d, const DcModel& dc, const CalibrateTo& to,
                        std::optional<double> population_size) {
  require(to.month <= d.horizon, ErrorKind::InvalidInput,
          "calibration month " + std::to_string(to.month) + " is after the observed horizon");
  if (!population_size) population_size = d.weights_config.population_size;
  auto pop = make_population(pf.params, d.persons, dc, d.network, d.weights, to.month, population_size);
  const double target = to.adopters ? *to.adopters : observed_new_adopters(pop, to.month);
  const auto field = accessibility_field(dc, pop.persons, d.network, pf.params.phi);
  auto res = calibrate_ascs(pf.params, pop, field, target);
  return {std::move(pop), std::move(res)};
}

json calibration_json(const CalibrationResult& r, int month) {
  return {{"month", month},         {"target", r.target},         {"achieved", r.achieved},
          {"shift", r.shift},       {"iterations", r.iterations}};
}

void cmd_calibrate(const CalibrateOpts& o, std::ostream& out) {
  Run run("calibrate", out);
  const auto d = load_data(run, o.paths);
  const auto pf = load_params(run, o.params);
  const auto dc = load_dc(run, o.dc_params);
  const CalibrateTo to{o.month > 0 ? o.month : d.horizon, o.adopters};
  run.options() = {{"month", to.month}};
  if (to.adopters) run.options()["adopters"] = *to.adopters;
  const auto cal = calibrate_on(pf, d, dc, to, o.population_size);
  json j = pf.doc;
  j["params"] = io::to_json(cal.result.params);
  j["calibration"] = calibration_json(cal.result, to.month);
  run.write(o.out, io::dump(j));
  run.line("month " + std::to_string(to.month) + ": target " + fmt("%.3f", cal.result.target) + ", achieved " +
           fmt("%.3f", cal.result.achieved));
  run.line("shift " + fmt("%.6f", cal.result.shift) + " after " + std::to_string(cal.result.iterations) +
           " bisection steps");
  run.finish(manifest_for(o.out));
}

struct ForecastOpts {
  DataPaths paths;
  fs::path params = "adoption_params.json", dc_params = "dc_params.json", scenarios = "scenarios.json",
           out = "forecast.csv";
  int draws = 1000;
  std::optional<std::uint64_t> seed;
  std::string calibrate_to;
  std::string mode = "parametric";
  bool fixed_membership = false;
  std::optional<double> population_size;
};

void cmd_forecast(const ForecastOpts& o, std::ostream& out) {
  Run run("forecast", out);
  require_seed(o.seed, "forecast");
  require(o.draws >= 1, ErrorKind::InvalidInput, "--draws must be >= 1");
  run.seed(*o.seed);
  const auto d = load_data(run, o.paths);
  auto pf = load_params(run, o.params);
  const auto dc = load_dc(run, o.dc_params);
  const auto scenarios = io::scenarios_from_json(io::read_json(run.input(o.scenarios)));
  require(!scenarios.empty(), ErrorKind::InvalidInput, "'" + o.scenarios.string() + "' lists no scenarios");

  BootstrapConfig bc;
  bc.draws = o.draws;
  bc.seed = *o.seed;
  bc.mode = bootstrap_mode_from_string(o.mode);
  bc.redraw_membership = !o.fixed_membership;
  bc.resample_em.seed = *o.seed;
  run.options() = {{"draws", o.draws}, {"mode", o.mode}, {"redraw_membership", bc.redraw_membership}};

  const auto population_size = o.population_size ? o.population_size : d.weights_config.population_size;
  std::optional<ForecastPopulation> pop;
  int window_end = pf.window;
  if (!o.calibrate_to.empty()) {
    const auto to = parse_calibrate_to(o.calibrate_to);
    auto cal = calibrate_on(pf, d, dc, to, population_size);
    bc.shift = cal.result.shift;
    pop = std::move(cal.population);
    window_end = std::max(window_end, to.month);
    run.options()["calibrate_to"] = {{"month", to.month}, {"target", cal.result.target}};
    run.line("calibrated month " + std::to_string(to.month) + ": target " + fmt("%.3f", cal.result.target) +
             ", shift " + fmt("%.6f", cal.result.shift));
  } else {
    int start = pf.window + 1;
    if (pf.doc.contains("calibration")) {
      start = pf.doc.at("calibration").at("month").get<int>();
      window_end = std::max(window_end, start);
    }
    start = std::min(start, d.horizon + 1);
    pop = make_population(pf.params, d.persons, dc, d.network, d.weights, start, population_size);
  }
  const auto inputs = prepare_scenarios(dc, pf.params.phi, *pop, d.network, scenarios, window_end);
  const auto result = bootstrap_forecast(pf.params, pf.covariance, *pop, inputs, bc);
  run.write(o.out, io::forecast_csv(result));

  for (const auto& s : result.scenarios) {
    run.line(s.name + ": months " + std::to_string(s.months.front()) + ".." + std::to_string(s.months.back()) +
             ", E[Y] end " + fmt("%.1f", s.mean_Y.back()) + " [" + fmt("%.1f", s.quantile_Y[0].back()) + ", " +
             fmt("%.1f", s.quantile_Y[4].back()) + "]");
  }
  for (const auto& w : result.warnings) run.line("warning: " + w);
  run.finish(manifest_for(o.out));
}

struct HoldoutOpts {
  DataPaths paths;
  fs::path dc_params = "dc_params.json", out = "holdout.csv";
  int split = 24, calib = 25, end = 0;
  int draws = 1000;
  int restarts = 5;
  double phi = 1.0;
  std::string mode = "parametric";
  std::optional<std::uint64_t> seed;
  std::optional<double> population_size;
};

void cmd_validate_holdout(const HoldoutOpts& o, std::ostream& out) {
  Run run("validate-holdout", out);
  require_seed(o.seed, "validate-holdout");
  run.seed(*o.seed);
  const auto d = load_data(run, o.paths);
  const auto dc = load_dc(run, o.dc_params);
  HoldoutConfig hc;
  hc.split_month = o.split;
  hc.calib_month = o.calib;
  hc.horizon = o.end > 0 ? o.end : d.horizon;
  hc.em.seed = *o.seed;
  hc.em.restarts = o.restarts;
  hc.bootstrap.draws = o.draws;
  hc.bootstrap.seed = *o.seed;
  hc.bootstrap.mode = bootstrap_mode_from_string(o.mode);
  hc.population_size = o.population_size ? o.population_size : d.weights_config.population_size;
  run.options() = {{"split", hc.split_month}, {"calib", hc.calib_month}, {"end", hc.horizon},
                   {"draws", o.draws},        {"restarts", o.restarts},  {"phi", o.phi},
                   {"mode", o.mode}};
  const auto r = holdout_validate(d.persons, d.network, dc, d.weights, o.phi, hc);
  run.write(o.out, io::holdout_csv(r));
  json j = {{"estimate", io::to_json(r.estimate, hc.split_month)},
            {"calibration", calibration_json(r.calibration, hc.calib_month)},
            {"box_coverage", r.box_coverage},
            {"whisker_coverage", r.whisker_coverage},
            {"warnings", r.warnings}};
  auto json_path = o.out;
  json_path.replace_extension(".json");
  run.write(json_path, io::dump(j));
  run.line("estimated on 1.." + std::to_string(hc.split_month) + ", loglik " + fmt("%.3f", r.estimate.loglik));
  run.line("calibrated on " + std::to_string(hc.calib_month) + ", shift " + fmt("%.6f", r.calibration.shift));
  for (const auto& m : r.months) {
    run.line("month " + std::to_string(m.month) + ": actual " + fmt("%.1f", m.actual) + ", box [" +
             fmt("%.1f", m.quantiles[1]) + ", " + fmt("%.1f", m.quantiles[3]) + "]" + (m.in_box ? " in box" : ""));
  }
  run.line("box coverage " + fmt("%.2f", r.box_coverage) + ", whisker coverage " + fmt("%.2f", r.whisker_coverage));
  run.finish(manifest_for(o.out));
}

struct ReportOpts {
  fs::path dc_params, adoption, bass, forecast, out = "report";
};

void cmd_report(const ReportOpts& o, std::ostream& out) {
  Run run("report", out);
  ReportInputs in;
  if (!o.dc_params.empty()) in.dc = io::read_json(run.input(o.dc_params));
  if (!o.adoption.empty()) in.adoption = io::read_json(run.input(o.adoption));
  if (!o.bass.empty()) in.bass = io::read_json(run.input(o.bass));
  if (!o.forecast.empty()) in.forecast = read_forecast_csv(run.input(o.forecast));
  const auto bundle = emit_report(in);
  run.write(o.out / "report.md", bundle.markdown);
  for (const auto& [name, content] : bundle.csv) run.write(o.out / name, content);
  run.line("report: " + (o.out / "report.md").string() + " plus " + std::to_string(bundle.csv.size()) + " CSV files");
  run.finish(o.out / "manifest.json");
}

// ---------------------------------------------------------------------------
// Errors

json error_json(const std::exception& e) {
  json err = {{"message", e.what()}};
  if (const auto* pe = dynamic_cast<const ParseError*>(&e)) {
    err["kind"] = std::string(to_string(pe->kind()));
    err["file"] = pe->file();
    err["line"] = pe->line();
    err["column"] = pe->column();
  } else if (const auto* nc = dynamic_cast<const NonConvergence*>(&e)) {
    err["kind"] = std::string(to_string(nc->kind()));
    err["stage"] = nc->stage();
    err["iterations"] = nc->iterations();
  } else if (const auto* cf = dynamic_cast<const CalibrationFailure*>(&e)) {
    err["kind"] = std::string(to_string(cf->kind()));
    err["target"] = cf->target();
    err["achieved_low"] = cf->achieved_low();
    err["achieved_high"] = cf->achieved_high();
  } else if (const auto* ae = dynamic_cast<const Error*>(&e)) {
    err["kind"] = std::string(to_string(ae->kind()));
  } else {
    err["kind"] = "internal";
  }
  return {{"error", err}};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adoption forecasting for a networked transport service", "adopt"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: ADOPT_THREADS or all cores)");
  app.set_version_flag("--version", ADOPT_VERSION);

  std::function<void()> action;
  auto seed_opt = [](CLI::App* sub, std::optional<std::uint64_t>& seed) {
    sub->add_option("--seed", seed, "Random seed");
  };

  SynthOpts synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset with known truth");
  s->add_option("--config", synth.config, "synth.json");
  s->add_option("--out", synth.out, "Output directory");
  seed_opt(s, synth.seed);
  s->callback([&] { action = [&] { cmd_synth(synth, out); }; });

  DcOpts dco;
  s = app.add_subcommand("estimate-dc", "Estimate the destination-choice model from trips");
  dco.paths.add(s, true);
  s->add_option("--out", dco.out, "dc_params.json");
  s->callback([&] { action = [&] { cmd_estimate_dc(dco, out); }; });

  AccessOpts acc;
  s = app.add_subcommand("compute-access", "Compute logsum accessibility per person and month");
  acc.paths.add(s);
  s->add_option("--dc-params", acc.dc_params, "dc_params.json");
  s->add_option("--phi", acc.phi, "Friction exponent for uncovered zones");
  s->add_option("--out", acc.out, "accessibility.csv");
  s->callback([&] { action = [&] { cmd_compute_access(acc, out); }; });

  LccmOpts lccm;
  s = app.add_subcommand("estimate-lccm", "Estimate the latent-class adoption model by EM");
  lccm.paths.add(s, true);
  s->add_option("--dc-params", lccm.dc_params, "dc_params.json (estimated from trips when omitted)");
  s->add_option("--phi-grid", lccm.phi_grid, "Comma-separated friction exponents");
  s->add_option("--window", lccm.window, "Last month used for estimation");
  s->add_option("--restarts", lccm.restarts, "EM restarts");
  s->add_flag("--tempered", lccm.tempered, "Raise each likelihood to its weight in the E-step");
  s->add_option("--out", lccm.out, "adoption_params.json");
  s->add_option("--posterior", lccm.posterior, "posterior.csv");
  seed_opt(s, lccm.seed);
  s->callback([&] { action = [&] { cmd_estimate_lccm(lccm, out); }; });

  FitBassOpts fb;
  s = app.add_subcommand("fit-bass", "Fit the Bass diffusion model by OLS");
  s->add_option("--series", fb.series, "adoption_series.csv (month, new_adopters)");
  s->add_option("--out", fb.out, "bass_params.json");
  s->callback([&] { action = [&] { cmd_fit_bass(fb, out); }; });

  ForecastBassOpts fcb;
  s = app.add_subcommand("forecast-bass", "Project the Bass model forward");
  s->add_option("--params", fcb.params, "bass_params.json");
  s->add_option("--series", fcb.series, "Observed series to continue");
  s->add_option("--horizon", fcb.horizon, "Months to forecast");
  s->add_option("--out", fcb.out, "Output CSV (month, S, Y)");
  s->callback([&] { action = [&] { cmd_forecast_bass(fcb, out); }; });

  CalibrateOpts cal;
  s = app.add_subcommand("calibrate", "Shift the adoption ASCs to match observed adopters in one month");
  cal.paths.add(s);
  s->add_option("--params", cal.params, "adoption_params.json");
  s->add_option("--dc-params", cal.dc_params, "dc_params.json");
  s->add_option("--month", cal.month, "Target month (default: last observed)");
  s->add_option("--adopters", cal.adopters, "Target new adopters (default: observed)");
  s->add_option("--population-size", cal.population_size, "Population represented by the sample");
  s->add_option("--out", cal.out, "calibrated_params.json");
  s->callback([&] { action = [&] { cmd_calibrate(cal, out); }; });

  ForecastOpts fc;
  s = app.add_subcommand("forecast", "Bootstrap scenario forecasts");
  fc.paths.add(s);
  s->add_option("--params", fc.params, "adoption_params.json");
  s->add_option("--dc-params", fc.dc_params, "dc_params.json");
  s->add_option("--scenarios", fc.scenarios, "scenarios.json");
  s->add_option("--draws", fc.draws, "Bootstrap draws");
  s->add_option("--calibrate-to", fc.calibrate_to, "month=T[,adopters=n]");
  s->add_option("--mode", fc.mode, "parametric, monte-carlo or resample");
  s->add_flag("--fixed-membership", fc.fixed_membership, "Keep point-estimate class weights in every draw");
  s->add_option("--population-size", fc.population_size, "Population represented by the sample");
  s->add_option("--out", fc.out, "forecast.csv");
  seed_opt(s, fc.seed);
  s->callback([&] { action = [&] { cmd_forecast(fc, out); }; });

  HoldoutOpts ho;
  s = app.add_subcommand("validate-holdout", "Estimate on early months and forecast the withheld ones");
  ho.paths.add(s);
  s->add_option("--dc-params", ho.dc_params, "dc_params.json");
  s->add_option("--split", ho.split, "Last estimation month");
  s->add_option("--calib", ho.calib, "Calibration month");
  s->add_option("--end", ho.end, "Last month compared (default: observed horizon)");
  s->add_option("--draws", ho.draws, "Bootstrap draws");
  s->add_option("--restarts", ho.restarts, "EM restarts");
  s->add_option("--phi", ho.phi, "Friction exponent");
  s->add_option("--mode", ho.mode, "parametric, monte-carlo or resample");
  s->add_option("--population-size", ho.population_size, "Population represented by the sample");
  s->add_option("--out", ho.out, "holdout.csv (a .json summary is written alongside)");
  seed_opt(s, ho.seed);
  s->callback([&] { action = [&] { cmd_validate_holdout(ho, out); }; });

  ReportOpts rep;
  s = app.add_subcommand("report", "Emit markdown tables and plot-ready CSV");
  s->add_option("--dc-params", rep.dc_params, "dc_params.json");
  s->add_option("--adoption-params", rep.adoption, "adoption_params.json");
  s->add_option("--bass-params", rep.bass, "bass_params.json");
  s->add_option("--forecast", rep.forecast, "forecast.csv");
  s->add_option("--out", rep.out, "Output directory");
  s->callback([&] { action = [&] { cmd_report(rep, out); }; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << ADOPT_VERSION << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << io::dump(json{{"error", {{"kind", "usage"}, {"message", e.what()}}}});
    return 2;
  }

  try {
    if (threads < 0) fail(ErrorKind::InvalidInput, "--threads must be >= 0");
    if (threads > 0) set_thread_count(threads);
    if (action) action();
    return 0;
  } catch (const std::exception& e) {
    err << io::dump(error_json(e));
    return 1;
  }
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace adopt::cli
