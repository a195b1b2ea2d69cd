#include <doctest.h>

#include <filesystem>
#include <limits>
#include <random>

#include "adopt/error.hpp"
#include "adopt/io.hpp"
#include "fixtures.hpp"

using namespace adopt;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("adopt_io_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ParseError parse_error(std::string_view text) {
  try {
    io::parse_csv(text, "in.csv");
  } catch (const ParseError& e) {
    return e;
  }
  FAIL("expected a parse error");
  return ParseError("", 0, 0, "");
}

std::vector<Zone> zones(int n) {
  std::vector<Zone> z(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) z[static_cast<std::size_t>(i)].id = i + 1;
  return z;
}

}  // namespace

TEST_CASE("CSV parsing: quoting, blank lines and whitespace") {
  const auto t = io::parse_csv("a, b ,c\n1,\"x, \"\"y\"\"\", 3 \n\n\"multi\nline\",2,3\n", "in.csv");
  CHECK(t.header == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][1] == "x, \"y\"");
  CHECK(t.rows[0][2] == "3");
  CHECK(t.rows[1][0] == "multi\nline");
  CHECK(t.lines == std::vector<std::size_t>{2, 4});
  CHECK(t.number(0, 2) == 3.0);
  CHECK(io::parse_csv("\xEF\xBB\xBFid\n7\n", "bom").header[0] == "id");
}

TEST_CASE("CSV errors name file, line and column") {
  auto e = parse_error("a,b\n1,2\n3\n");
  CHECK(e.file() == "in.csv");
  CHECK(e.line() == 3);
  CHECK(e.column() == 2);
  e = parse_error("a,a\n");
  CHECK(e.line() == 1);
  CHECK(e.column() == 2);
  e = parse_error("a\n\"open\n");
  CHECK(e.line() == 2);
  CHECK_THROWS_AS(io::parse_csv("", "empty.csv"), ParseError);

  const auto t = io::parse_csv("x,y\n1,abc\n", "in.csv");
  try {
    t.number(0, 1);
    FAIL("expected a parse error");
  } catch (const ParseError& err) {
    CHECK(err.line() == 2);
    CHECK(err.column() == 2);
    CHECK(std::string(err.what()).find("in.csv") != std::string::npos);
  }
  CHECK_THROWS_AS(t.column("missing"), ParseError);
}

TEST_CASE("doubles format to a round-trippable representation") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
    CHECK(std::stod(io::format_double(v)) == v);
  }
  CHECK(io::format_double(0.1) == "0.1");
  CHECK(io::format_double(-2.0) == "-2");
}

TEST_CASE("persons round trip through CSV") {
  std::vector<Person> ps = {fixtures::person(1, 2, 5, true, 7.25, true), fixtures::person(2, 1)};
  ps[1].income_k = 0.1 + 0.2;
  const auto dir = scratch("persons");
  io::write_file_atomic(dir / "persons.csv", io::persons_csv(ps));
  const auto back = io::read_persons(dir / "persons.csv");
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].id == ps[i].id);
    CHECK(back[i].home_zone == ps[i].home_zone);
    CHECK(back[i].income_k == ps[i].income_k);
    CHECK(back[i].male == ps[i].male);
    CHECK(back[i].tech_firm_employee == ps[i].tech_firm_employee);
    CHECK(back[i].stratum == ps[i].stratum);
    CHECK(back[i].adoption_month == ps[i].adoption_month);
  }
  io::write_file_atomic(dir / "dup.csv", "id,home_zone,income_k,male,tech_firm_employee,stratum,adoption_month\n"
                                         "1,1,5,0,0,population_sample,\n1,1,5,0,0,population_sample,\n");
  CHECK_THROWS_AS(io::read_persons(dir / "dup.csv"), ParseError);
  io::write_file_atomic(dir / "bad.csv", "id,home_zone,income_k,male,tech_firm_employee,stratum,adoption_month\n"
                                         "1,1,5,0,0,population_sample,4\n");
  CHECK_THROWS_AS(io::read_persons(dir / "bad.csv"), ParseError);
  try {
    io::read_persons(dir / "nope.csv");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("nope.csv") != std::string::npos);
  }
}

TEST_CASE("distances: upper triangle is symmetrized, conflicts and gaps rejected") {
  const auto dir = scratch("dist");
  const auto z = zones(3);
  io::write_file_atomic(dir / "d.csv", "from_zone,to_zone,km\n1,2,4.5\n1,3,2\n2,3,1.25\n");
  const auto d = io::read_distances(dir / "d.csv", z);
  CHECK(d == std::vector<double>{0, 4.5, 2, 4.5, 0, 1.25, 2, 1.25, 0});
  io::write_file_atomic(dir / "conflict.csv", "from_zone,to_zone,km\n1,2,4.5\n2,1,4\n1,3,2\n2,3,1\n");
  CHECK_THROWS_AS(io::read_distances(dir / "conflict.csv", z), ParseError);
  io::write_file_atomic(dir / "gap.csv", "from_zone,to_zone,km\n1,2,4.5\n1,3,2\n");
  CHECK_THROWS_AS(io::read_distances(dir / "gap.csv", z), ParseError);
  io::write_file_atomic(dir / "unknown.csv", "from_zone,to_zone,km\n1,9,4.5\n");
  CHECK_THROWS_AS(io::read_distances(dir / "unknown.csv", z), ParseError);
}

TEST_CASE("network tables round trip") {
  const auto data = generate(fixtures::small_synth(8));
  const auto dir = scratch("network");
  io::write_file_atomic(dir / "zones.csv", io::zones_csv(data.network));
  io::write_file_atomic(dir / "distances.csv", io::distances_csv(data.network));
  io::write_file_atomic(dir / "supply.csv", io::supply_csv(data.network));
  const auto back = io::read_network(dir / "zones.csv", dir / "distances.csv", dir / "supply.csv",
                                     data.network.horizon());
  CHECK(back == data.network);
  io::write_file_atomic(dir / "trips.csv", io::trips_csv(data.trips));
  const auto trips = io::read_trips(dir / "trips.csv");
  REQUIRE(trips.size() == data.trips.size());
  CHECK(io::trips_csv(trips) == io::trips_csv(data.trips));
}

TEST_CASE("JSON round trips") {
  std::mt19937_64 rng(3);
  const auto params = fixtures::random_params(rng);
  CHECK(io::adoption_params_from_json(io::to_json(params)) == params);
  const BassParams b{0.0051, 0.2108, 2200.0};
  CHECK(io::bass_params_from_json(io::to_json(b)) == b);
  const Scenario s{"two_stations", {{4, Facility::Station, 27}, {5, Facility::OnStreet, 28}}, 6};
  CHECK(io::scenario_from_json(io::to_json(s)) == s);
  CHECK_THROWS_AS(io::scenarios_from_json(io::json::array({io::to_json(s), io::to_json(s)})), Error);
  const auto cfg = fixtures::small_synth(11);
  CHECK(io::dump(io::to_json(io::synth_config_from_json(io::to_json(cfg)))) == io::dump(io::to_json(cfg)));
  auto dc = fixtures::random_dc(rng, fixtures::dc_spec());
  CHECK(io::dc_model_from_json(io::to_json(dc)).params == dc.params);
  CHECK_THROWS_AS(io::parse_json("{\"a\": ", "x.json"), ParseError);
  CHECK(io::dump(io::json{{"a", 1}}) == "{\n  \"a\": 1\n}\n");
}

TEST_CASE("hashing and bundle determinism") {
  CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const auto data = generate(fixtures::small_synth(9));
  const auto a = scratch("bundle_a"), b = scratch("bundle_b");
  const auto files_a = io::write_synth_bundle(data, a);
  const auto files_b = io::write_synth_bundle(generate(fixtures::small_synth(9)), b);
  REQUIRE(files_a.size() == files_b.size());
  CHECK(files_a.size() == 8);
  for (std::size_t i = 0; i < files_a.size(); ++i) {
    CHECK(files_a[i].filename() == files_b[i].filename());
    CHECK(io::sha256_file(files_a[i]) == io::sha256_file(files_b[i]));
  }
}
