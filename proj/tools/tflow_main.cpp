#include <CLI11.hpp>
#include <cstdio>

#include "tflow/runner.hpp"
#include "tflow/superop.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Temperature-flow solver for the Anderson impurity memory kernel"};
  app.require_subcommand(1);

  tflow::RunnerOptions opt;
  std::string simd_backend = "auto";

  auto* run = app.add_subcommand("run", "integrate the flow and write observables");
  run->add_option("-c,--config", opt.config_path, "run configuration file")->required();
  run->add_option("-o,--out-dir", opt.out_dir, "directory for observables.csv and manifest.json");
  run->add_option("--dump-kernel", opt.kernel_out, "also write the cold-end kernels here");
  run->add_option("--threads", opt.threads, "worker thread count (evaluation is serial)");
  run->add_flag("-q,--quiet", opt.quiet, "suppress progress output");

  std::string validate_cfg;
  auto* val = app.add_subcommand("validate", "parse and validate a configuration");
  val->add_option("-c,--config", validate_cfg, "run configuration file")->required();

  std::string dump_cfg, dump_out;
  auto* dmp = app.add_subcommand("dump-kernel", "run the flow and write only the kernel file");
  dmp->add_option("-c,--config", dump_cfg, "run configuration file")->required();
  dmp->add_option("-o,--out", dump_out, "kernel file path")->required();
  bool dump_quiet = false;
  dmp->add_flag("-q,--quiet", dump_quiet, "suppress progress output");

  std::string load_path;
  auto* lod = app.add_subcommand("load-kernel", "read a kernel file and print its summary");
  lod->add_option("file", load_path, "kernel file path")->required();

  app.add_option("--simd", simd_backend, "kernel backend: auto, scalar, avx2, neon")
      ->check(CLI::IsMember({"auto", "scalar", "avx2", "neon"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);  // prints the message or help text
    return rc == 0 ? 0 : 2;     // keep the documented usage-error code
  }

  try {
    if (simd_backend == "scalar")
      tflow::simd::force(tflow::simd::Backend::Scalar);
    else if (simd_backend == "avx2")
      tflow::simd::force(tflow::simd::Backend::AVX2);
    else if (simd_backend == "neon")
      tflow::simd::force(tflow::simd::Backend::NEON);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  if (run->parsed()) return tflow::cmd_run(opt);
  if (val->parsed()) return tflow::cmd_validate(validate_cfg);
  if (dmp->parsed()) return tflow::cmd_dump_kernel(dump_cfg, dump_out, dump_quiet);
  if (lod->parsed()) return tflow::cmd_load_kernel(load_path);
  return 2;
}
