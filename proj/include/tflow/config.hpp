#pragma once
#include <string>
#include <vector>

#include "tflow/contractions.hpp"
#include "tflow/flow.hpp"

namespace tflow {

// Parsed and validated run description. The INI dialect is strict: unknown
// sections or keys, duplicate keys and malformed numbers are all ParseError;
// physically inconsistent values are ValidationError.
struct RunConfig {
  ModelParams model;
  std::vector<std::string> reservoir_names;  // file order, parallel to model.reservoirs

  TimeGrid grid;        // fine kernel grid
  VertexGrids vertex;   // coarse vertex axes, t_max tied to grid.t_max
  StepperConfig stepper;

  std::string path_kind = "simultaneous";  // simultaneous | sequential | table
  double T_start = 50.0;
  double T_floor = 0.01;
  std::vector<TemperaturePath::Row> path_rows;  // only for kind = table

  std::string initial_state = "mixed";
  std::vector<double> record_temperatures;

  TemperaturePath make_path() const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& filename);  // FormatError if unreadable

}  // namespace tflow
