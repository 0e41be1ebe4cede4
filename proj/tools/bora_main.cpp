// Command-line front end: train runs, export training-dynamics metrics,
// parameter-count tables, gradient checks, and run comparison.
//
// Exit codes: 0 success, 1 internal error or failed gradient check,
// 2 invalid config/usage, 3 training divergence, 4 missing archive,
// 5 incompatible snapshot grids.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "bora/adapters.hpp"
#include "bora/errors.hpp"
#include "bora/grad_check.hpp"
#include "bora/io.hpp"
#include "bora/rng.hpp"
#include "bora/trainer.hpp"

namespace {

using namespace bora;

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  io::run_experiment(config_path, out_dir);
  return 0;
}

int cmd_metrics(const std::string& run_dir, const std::string& mode,
                const std::string& dim, const std::string& csv_path) {
  SeriesMode series_mode;
  if (mode == "consecutive") {
    series_mode = SeriesMode::consecutive;
  } else if (mode == "total") {
    series_mode = SeriesMode::total;
  } else {
    throw ConfigError("mode", "unknown mode '" + mode +
                                  "' (expected consecutive|total)");
  }
  io::export_metrics(run_dir, series_mode, dim, csv_path);
  return 0;
}

int cmd_params(const std::string& arch_path,
               const std::vector<std::string>& method_names,
               const std::vector<int>& ranks,
               const std::vector<std::string>& targets,
               const std::string& csv_path) {
  const ArchSpec arch = io::parse_arch_spec(io::read_file(arch_path));
  std::vector<Method> methods;
  for (const std::string& name : method_names)
    methods.push_back(name == "rslora" ? Method::lora : parse_method(name));
  const std::vector<io::ParamsRow> rows =
      io::params_table(arch, methods, ranks, targets);
  if (csv_path.empty()) {
    std::cout << io::params_table_json(arch, rows);
  } else {
    io::write_file_atomic(csv_path, io::params_table_csv(rows));
  }
  return 0;
}

int cmd_gradcheck(const std::string& method_name, const std::string& dims,
                  int rank, double step, double tol, std::uint64_t seed) {
  int rows = 0, cols = 0;
  if (std::sscanf(dims.c_str(), "%dx%d", &rows, &cols) != 2 || rows < 2 ||
      cols < 2)
    throw ConfigError("dims", "expected ROWSxCOLS with both >= 2, got '" +
                                  dims + "'");
  AdapterConfig config;
  config.method = parse_method(method_name);
  config.rank = rank;
  config.alpha = 2.0 * rank;
  config.seed = seed;
  Rng rng(seed, "gradcheck.data");
  Matrix w0(rows, cols);
  for (double& v : w0.data) v = rng.gaussian();
  AdaptedLinear layer = init_adapter(std::move(w0), config);
  // Move off the all-zero b so the check exercises a generic point.
  Rng perturb(seed, "gradcheck.perturb");
  for (ParamRef& p : trainable_params(layer))
    for (double& v : *p.data) v += 0.05 * perturb.gaussian();
  const int batch = 5;
  Matrix x(batch, cols);
  for (double& v : x.data) v = rng.gaussian();
  Matrix target(batch, rows);
  for (double& v : target.data) v = rng.gaussian();
  const GradCheckReport report =
      grad_check_detailed(adapter_mse_problem(layer, x, target), step);
  std::printf("{\n  \"method\": \"%s\",\n  \"dims\": \"%dx%d\",\n",
              method_name.c_str(), rows, cols);
  std::printf("  \"rank\": %d,\n  \"step\": %g,\n  \"tolerance\": %g,\n", rank,
              step, tol);
  std::printf("  \"max_rel_error\": %.17g,\n", report.max_rel_error);
  std::printf("  \"per_param\": {");
  for (std::size_t i = 0; i < report.per_param.size(); ++i)
    std::printf("%s\"%s\": %.17g", i ? ", " : "",
                report.per_param[i].first.c_str(), report.per_param[i].second);
  std::printf("},\n  \"pass\": %s\n}\n",
              report.max_rel_error < tol ? "true" : "false");
  return report.max_rel_error < tol ? 0 : 1;
}

int cmd_compare(const std::vector<std::string>& run_dirs,
                const std::string& report_path) {
  std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
  io::compare_runs(dirs, report_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bi-dimensional weight-decomposed low-rank adaptation toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  CLI::App* train = app.add_subcommand("train", "Run a training experiment");
  train->add_option("--config", config_path, "Training config JSON")
      ->required();
  train->add_option("--out", out_dir, "Output run directory")->required();

  std::string run_dir, mode = "consecutive", dim = "both", csv_path;
  CLI::App* metrics =
      app.add_subcommand("metrics", "Export magnitude/direction series");
  metrics->add_option("--run", run_dir, "Run directory")->required();
  metrics->add_option("--mode", mode, "consecutive|total");
  metrics->add_option("--dim", dim, "row|col|both");
  metrics->add_option("--csv", csv_path, "Output CSV path")->required();

  std::string arch_path, params_csv;
  std::vector<std::string> method_names{"lora", "dora", "dora_row", "bora"};
  std::vector<int> ranks{64};
  std::vector<std::string> targets;
  CLI::App* params =
      app.add_subcommand("params", "Trainable-parameter count table");
  params->add_option("--arch", arch_path, "Architecture JSON")->required();
  params->add_option("--method", method_names,
                     "Methods (lora|dora|dora_row|bora|rslora)")
      ->delimiter(',');
  params->add_option("--rank", ranks, "Adapter ranks")->delimiter(',');
  params->add_option("--targets", targets, "Target matrix labels")
      ->delimiter(',')
      ->required();
  params->add_option("--csv", params_csv, "Write CSV here instead of JSON");

  std::string gc_method = "bora", gc_dims = "8x6";
  int gc_rank = 2;
  double gc_step = 1e-5, gc_tol = 1e-4;
  std::uint64_t gc_seed = 0;
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "Compare analytic gradients with central differences");
  gradcheck->add_option("--method", gc_method, "lora|dora|dora_row|bora");
  gradcheck->add_option("--dims", gc_dims, "Layer shape, e.g. 8x6");
  gradcheck->add_option("--rank", gc_rank, "Adapter rank");
  gradcheck->add_option("--step", gc_step, "Finite-difference step");
  gradcheck->add_option("--tol", gc_tol, "Pass threshold on max rel error");
  gradcheck->add_option("--seed", gc_seed, "Data seed");

  std::vector<std::string> compare_dirs;
  std::string compare_report;
  CLI::App* compare =
      app.add_subcommand("compare", "Compare runs by training dynamics");
  compare->add_option("--runs", compare_dirs,
                      "Run directories (>= 2, comma- or space-separated)")
      ->required()
      ->delimiter(',')
      ->expected(2, -1);
  compare->add_option("--report", compare_report, "Output JSON path")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // invalid usage
  }

  try {
    if (*train) return cmd_train(config_path, out_dir);
    if (*metrics) return cmd_metrics(run_dir, mode, dim, csv_path);
    if (*params)
      return cmd_params(arch_path, method_names, ranks, targets, params_csv);
    if (*gradcheck)
      return cmd_gradcheck(gc_method, gc_dims, gc_rank, gc_step, gc_tol,
                           gc_seed);
    if (*compare) return cmd_compare(compare_dirs, compare_report);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return bora::io::cli_exit_code(e);
  }
  return 0;
}
