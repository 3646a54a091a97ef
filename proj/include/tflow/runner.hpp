#pragma once
#include <string>

namespace tflow {

// Command implementations behind the CLI. Each maps library exceptions to the
// documented exit codes: 0 success, 1 validation failure, 2 config or usage
// problem, 3 numerical failure.
struct RunnerOptions {
  std::string config_path;
  std::string out_dir = ".";
  std::string kernel_out;  // optional kernel dump alongside the CSV
  int threads = 1;         // accepted for interface stability; evaluation is serial
  bool quiet = false;
};

int cmd_run(const RunnerOptions& opt);
int cmd_validate(const std::string& config_path);
int cmd_dump_kernel(const std::string& config_path, const std::string& out_path, bool quiet);
int cmd_load_kernel(const std::string& kernel_path);

}  // namespace tflow
