// paircond <experiment> --config <file> [--out <dir>] [--seed <int>] [--threads <int>]
//
// Exit codes: 0 success, 2 invalid command line or config (nothing is
// written), 3 solver failure.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "paircond/cli.hpp"

namespace fs = std::filesystem;
using namespace paircond;

namespace {

constexpr int kUsage = 2;
constexpr int kSolver = 3;

bool test_mode() {
  const char* v = std::getenv("PAIRCOND_TEST_MODE");
  return v && std::string(v) == "1";
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw UsageError("cannot write " + p.string());
  os << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BCS-to-GP numerical experiments on Dirichlet domains"};
  std::string experiment, config_path, out_dir = "paircond_out";
  std::uint64_t seed = 0;
  int threads = 1;
  std::string names;
  for (const auto& n : cli::experiments()) names += (names.empty() ? "" : ", ") + n;
  app.add_option("experiment", experiment, "one of: " + names)->required();
  app.add_option("--config", config_path, "JSON run configuration")->required();
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "seed for the GP random restarts");
  app.add_option("--threads", threads, "worker threads for independent scan points")->check(CLI::Range(1, 256));
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  const bool tm = test_mode();
  cli::Context ctx{seed, tm ? 1 : threads};
  cli::ParsedRun run;
  try {
    std::ifstream in(config_path);
    if (!in) throw UsageError("cannot open config file " + config_path);
    nlohmann::json config;
    try {
      in >> config;
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("config file " + config_path + ": " + e.what());
    }
    run = cli::parse(experiment, config, ctx);
  } catch (const UsageError& e) {
    std::cerr << "paircond: " << e.what() << "\n";
    return kUsage;
  }

  try {
    const auto t0 = std::chrono::steady_clock::now();
    cli::RunOutput out = run.job();
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    nlohmann::json report = cli::make_report(experiment, run, out, ctx, tm, wall);

    fs::create_directories(out_dir);
    write_file(fs::path(out_dir) / "report.json", report.dump(2) + "\n");
    if (out.scan) write_file(fs::path(out_dir) / "scan.csv", out.scan->to_csv());
    for (const auto& [name, text] : out.csv) write_file(fs::path(out_dir) / name, text);
    for (const auto& k : out.kernels) export_kernel((fs::path(out_dir) / k.name).string(), k.kernel, k.h, k.kind);
    std::cout << out.results.dump(2) << "\n";
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "paircond: " << e.what() << "\n";
    return kUsage;
  } catch (const SolverError& e) {
    std::cerr << "paircond: solver failure: " << e.what() << "\n";
    return kSolver;
  } catch (const std::exception& e) {
    std::cerr << "paircond: " << e.what() << "\n";
    return kSolver;
  }
}
