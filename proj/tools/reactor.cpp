#include <iostream>

#include "CLI11.hpp"
#include "reactor/cli/commands.hpp"
#include "reactor/cli/selftest.hpp"

int main(int argc, char** argv) {
  using namespace reactor::cli;
  CLI::App app{"Reactor agent core: training, table reproduction and self tests"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::size_t workers = 0;
  auto* train = app.add_subcommand("train", "Train an agent from a JSON experiment config");
  train->add_option("--config", config_path, "Experiment config file")->required();
  auto* seed_opt = train->add_option("--seed", seed, "Override the config seed");
  auto* out_opt = train->add_option("--out", out_dir, "Output directory for metrics and summary");
  auto* workers_opt = train->add_option("--workers", workers, "Override the number of workers")->check(CLI::PositiveNumber);
  auto* det_flag = train->add_flag("--deterministic,!--threaded", "Single-threaded deterministic schedule");

  std::string fixtures = REACTOR_FIXTURE_DIR;
  auto* tables = app.add_subcommand("tables", "Reproduce the comparison tables from score fixtures");
  tables->add_option("--fixtures", fixtures, "Directory holding the score CSVs");

  bool fault = false;
  auto* selftest = app.add_subcommand("selftest", "Run the fast property suites");
  selftest->add_flag("--fault-flip-correction", fault, "Flip the sign of the beta-LOO correction (mutation canary)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kUsage;
  }

  if (*train) {
    TrainOverrides o;
    if (*seed_opt) o.seed = seed;
    if (*out_opt) o.out_dir = out_dir;
    if (*workers_opt) o.workers = workers;
    if (det_flag->count() > 0) o.deterministic = det_flag->as<bool>();
    return run_train(config_path, o, std::cout, std::cerr);
  }
  if (*tables) return run_tables(fixtures, std::cout, std::cerr);
  SelftestOptions options;
  options.fault_flip_correction = fault;
  return run_selftest(options, std::cout);
}
