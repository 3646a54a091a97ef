#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "tflow/config.hpp"
#include "tflow/errors.hpp"

using namespace tflow;

namespace {

// a complete, valid run description used as the mutation baseline
const char* kGood = R"(# benchmark run
[model]
epsilon = -2.0
U = 4.0          ; on-site repulsion

[reservoir.left]
gamma_up = 1.0
gamma_dn = 1.0
mu = 0.5
T_final = 0.0

[reservoir.right]
gamma_up = 1.0
gamma_dn = 1.0
mu = -0.5
T_final = 0.0

[grid]
t_max = 10.0
n = 128

[vertex_grid]
n_v = 24
n_w = 9

[stepper]
tol = 1e-5
dtheta_init = 0.5
max_steps = 4000

[path]
kind = simultaneous
T_start = 50.0
T_floor = 0.1

[initial_state]
name = empty

[output]
record_temperatures = 10.0, 1.0, 0.1
)";

// swap one line of the baseline for something else
std::string mutate(const std::string& from, const std::string& to) {
  std::string text = kGood;
  const size_t pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  text.replace(pos, from.size(), to);
  return text;
}

int parse_error_line(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ParseError& e) {
    return e.line;
  }
  return -1;
}

}  // namespace

TEST_CASE("well-formed config lands in the right fields") {
  RunConfig cfg = parse_config(kGood);

  CHECK(cfg.model.epsilon == -2.0);
  CHECK(cfg.model.U == 4.0);
  REQUIRE(cfg.model.reservoirs.size() == 2);
  CHECK(cfg.reservoir_names[0] == "left");
  CHECK(cfg.reservoir_names[1] == "right");
  CHECK(cfg.model.reservoirs[0].mu == 0.5);
  CHECK(cfg.model.reservoirs[1].mu == -0.5);
  CHECK(cfg.model.reservoirs[0].T_final == 0.0);

  CHECK(cfg.grid.t_max == 10.0);
  CHECK(cfg.grid.n == 128);
  // vertex axes inherit the fine grid span
  CHECK(cfg.vertex.v.t_max == 10.0);
  CHECK(cfg.vertex.v.n == 24);
  CHECK(cfg.vertex.w.t_max == 10.0);
  CHECK(cfg.vertex.w.n == 9);

  CHECK(cfg.stepper.tol == 1e-5);
  CHECK(cfg.stepper.dtheta_init == 0.5);
  CHECK(cfg.stepper.max_steps == 4000);

  CHECK(cfg.path_kind == "simultaneous");
  CHECK(cfg.T_start == 50.0);
  CHECK(cfg.T_floor == 0.1);
  CHECK(cfg.initial_state == "empty");
  CHECK(cfg.record_temperatures == std::vector<double>{10.0, 1.0, 0.1});

  TemperaturePath path = cfg.make_path();
  CHECK(path.theta_start() == 50.0);
  CHECK(path.theta_end() == 0.1);
  CHECK(path.n_reservoirs() == 2);
}

TEST_CASE("defaults survive omitted optional sections") {
  // strip stepper, initial_state and output entirely
  std::string text = kGood;
  text.erase(text.find("[stepper]"), text.find("[path]") - text.find("[stepper]"));
  text.erase(text.find("[initial_state]"));

  RunConfig cfg = parse_config(text);
  StepperConfig def;
  CHECK(cfg.stepper.tol == def.tol);
  CHECK(cfg.stepper.max_steps == def.max_steps);
  CHECK(cfg.initial_state == "mixed");
  CHECK(cfg.record_temperatures.empty());
}

TEST_CASE("minimal config gets the documented defaults") {
  RunConfig cfg = parse_config(
      "[model]\n"
      "epsilon = 0.5\n"
      "U = 0.0\n"
      "[reservoir.lead]\n"
      "gamma_up = 1.0\n"
      "gamma_dn = 1.0\n");

  CHECK(cfg.grid.t_max == 10.0);
  CHECK(cfg.grid.n == 256);
  CHECK(cfg.T_start == 50.0);
  CHECK(cfg.T_floor == 0.01);
  CHECK(cfg.path_kind == "simultaneous");
  // vertex axes scale with the fine grid instead of hard-coding a count
  CHECK(cfg.vertex.v.n == 32);
  CHECK(cfg.vertex.w.n == 9);
  CHECK(cfg.make_path().n_reservoirs() == 1);
}

TEST_CASE("parse errors carry the offending position") {
  // the reported line number points at the culprit
  CHECK(parse_error_line(mutate("U = 4.0          ; on-site repulsion", "U == 4.0")) == 4);
  CHECK(parse_error_line(mutate("t_max = 10.0", "t_max = ten")) == 19);

  CHECK_THROWS_AS(parse_config(mutate("[grid]", "[grd]")), ParseError);
  CHECK_THROWS_AS(parse_config(mutate("t_max = 10.0", "tmax = 10.0")), ParseError);
  CHECK_THROWS_AS(parse_config(mutate("n = 128", "n = 128\nn = 64")), ParseError);
  CHECK_THROWS_AS(parse_config(mutate("[grid]", "[grid]\n[grid]")), ParseError);
  CHECK_THROWS_AS(parse_config(mutate("n = 128", "n = 12.5")), ParseError);
  CHECK_THROWS_AS(parse_config(mutate("n = 128", "n =")), ParseError);
  CHECK_THROWS_AS(parse_config(mutate("[model]", "stray = 1\n[model]")), ParseError);
  CHECK_THROWS_AS(parse_config(mutate("[grid]", "[grid")), ParseError);
  CHECK_THROWS_AS(parse_config(mutate("[grid]", "[grid] junk")), ParseError);
  CHECK_THROWS_AS(parse_config(mutate("[grid]", "[]")), ParseError);
  CHECK_THROWS_AS(parse_config(mutate("[reservoir.left]", "[reservoir.]")), ParseError);
  CHECK_THROWS_AS(
      parse_config(mutate("[reservoir.right]", "[reservoir.left]")), ParseError);
}

TEST_CASE("semantic validation rejects inconsistent values") {
  auto bad = [](const std::string& from, const std::string& to) {
    CHECK_THROWS_AS(parse_config(mutate(from, to)), ValidationError);
  };

  bad("gamma_up = 1.0", "gamma_up = -1.0");
  bad("T_final = 0.0", "T_final = -0.5");
  bad("t_max = 10.0", "t_max = 0.0");
  bad("n = 128", "n = 4");
  bad("n_v = 24", "n_v = 3");
  bad("n_v = 24", "n_v = 500");   // exceeds the fine grid
  bad("n_w = 9", "n_w = 48");     // exceeds n_v
  bad("tol = 1e-5", "tol = 0.0");
  bad("max_steps = 4000", "max_steps = 3");
  bad("kind = simultaneous", "kind = adiabatic");
  bad("T_start = 50.0", "T_start = 0.05");  // below the floor
  bad("T_floor = 0.1", "T_floor = -1.0");
  bad("name = empty", "name = thermal");
  bad("record_temperatures = 10.0, 1.0, 0.1", "record_temperatures = 60.0");
  bad("record_temperatures = 10.0, 1.0, 0.1", "record_temperatures = 0.01");

  // a model with no reservoirs at all
  std::string text = kGood;
  while (true) {
    const size_t pos = text.find("[reservoir.");
    if (pos == std::string::npos) break;
    const size_t next = text.find('[', pos + 1);
    text.erase(pos, next - pos);
  }
  CHECK_THROWS_AS(parse_config(text), ValidationError);
}

TEST_CASE("table path rows") {
  std::string text = kGood;
  const std::string from = "kind = simultaneous\nT_start = 50.0\nT_floor = 0.1";
  const size_t pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  text.replace(pos, from.size(),
               "kind = table\nrow = 20.0, 20.0, 20.0\nrow = 5.0, 5.0, 20.0\nrow = 0.5 0.5 0.5");
  // records must lie inside the table span now
  const std::string rec = "record_temperatures = 10.0, 1.0, 0.1";
  text.replace(text.find(rec), rec.size(), "record_temperatures = 5.0");

  RunConfig cfg = parse_config(text);
  CHECK(cfg.path_kind == "table");
  REQUIRE(cfg.path_rows.size() == 3);
  CHECK(cfg.path_rows[1].theta == 5.0);
  CHECK(cfg.path_rows[1].T == std::vector<double>{5.0, 20.0});

  TemperaturePath path = cfg.make_path();
  CHECK(path.theta_start() == 20.0);
  CHECK(path.theta_end() == 0.5);

  // wrong arity: three temperatures for two reservoirs
  std::string badtext = text;
  const std::string row = "row = 5.0, 5.0, 20.0";
  badtext.replace(badtext.find(row), row.size(), "row = 5.0, 5.0, 20.0, 7.0");
  CHECK_THROWS_AS(parse_config(badtext), ValidationError);

  // rows on a non-table path are rejected
  std::string mixed = kGood;
  const std::string kind = "kind = simultaneous";
  mixed.replace(mixed.find(kind), kind.size(), "kind = simultaneous\nrow = 5.0, 5.0, 5.0");
  CHECK_THROWS_AS(parse_config(mixed), ValidationError);
}

TEST_CASE("load_config reads files and reports unreadable ones") {
  CHECK_THROWS_AS(load_config("/nonexistent/dir/run.ini"), FormatError);

  const std::string path = "test_config_roundtrip.ini";
  {
    std::ofstream out(path, std::ios::binary);
    out << kGood;
  }
  RunConfig cfg = load_config(path);
  CHECK(cfg.grid.n == 128);
  CHECK(cfg.reservoir_names.size() == 2);
  std::remove(path.c_str());
}
