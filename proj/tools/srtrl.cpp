// srtrl: synthetic equivalence experiments, oracle verification and
// checkpoint inspection for stochastic rank-regularized tensor regression.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "srtrl/experiment.hpp"
#include "srtrl/io.hpp"
#include "srtrl/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

int cmd_synth(const std::string& config_path, const std::string& out_dir, const srtrl::PlanOverrides& overrides,
              bool timing, bool dump_data) {
  std::optional<nlohmann::json> file;
  try {
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      if (!is) throw srtrl::ConfigError("cannot open config file " + config_path);
      file = nlohmann::json::parse(is);
    }
    const srtrl::ExperimentPlan plan = srtrl::resolve_plan(file, overrides);
    const auto runs = srtrl::run_plan(plan, out_dir, timing, dump_data);
    for (const auto& r : runs)
      std::cout << std::left << std::setw(32) << srtrl::run_name(r.theta, r.objective) << " objective "
                << std::setprecision(6) << r.final_objective << "  test_mse " << r.final_test_mse << '\n';
    std::cout << "wrote " << runs.size() << " runs to " << out_dir << '\n';
    return kExitOk;
  } catch (const srtrl::DivergedError& e) {
    std::cerr << "error: " << e.what() << " (run recorded in " << (std::filesystem::path(out_dir) / "manifest.json").string()
              << ")\n";
    return kExitNumerical;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: config parse: " << e.what() << '\n';
    return kExitConfig;
  } catch (const srtrl::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

int cmd_verify(const std::string& filter, std::uint64_t seed) {
  srtrl::VerifyOptions options;
  options.filter = filter;
  options.seed = seed;
  const auto results = srtrl::run_verification(options);
  if (results.empty()) {
    std::cerr << "error: no check matches filter '" << filter << "'\n";
    return kExitConfig;
  }
  srtrl::print_report(std::cout, results);
  for (const auto& r : results)
    if (!r.passed) return kExitNumerical;
  return kExitOk;
}

int cmd_inspect(const std::string& path) {
  srtrl::TrlModelXd model;
  try {
    model = srtrl::load_checkpoint(path);
  } catch (const srtrl::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  std::cout << std::setprecision(10);
  std::cout << "weight      " << (model.is_kruskal() ? "kruskal" : "tucker") << ' '
            << srtrl::shape_string(srtrl::full_shape(model.weight)) << '\n';
  std::cout << "sketch      " << srtrl::to_string(model.sketch.scheme) << " theta=" << model.sketch.theta
            << " scale_mode=" << srtrl::to_string(model.scale_mode) << '\n';
  const auto& factors = std::visit([](const auto& w) -> const std::vector<srtrl::MatrixXd>& { return w.factors(); },
                                   model.weight);
  if (model.is_kruskal()) {
    std::cout << "rank        " << model.kruskal().rank() << '\n';
  } else {
    std::cout << "ranks       " << srtrl::shape_string(model.tucker().ranks()) << '\n';
  }
  for (std::size_t k = 0; k < factors.size(); ++k) {
    std::cout << "factor " << k << "    " << factors[k].rows() << "x" << factors[k].cols() << "  column norms";
    for (srtrl::Index r = 0; r < factors[k].cols(); ++r) std::cout << ' ' << factors[k].col(r).norm();
    std::cout << '\n';
  }
  std::cout << "bias        " << model.bias.transpose() << '\n';
  if (model.is_kruskal())
    std::cout << "regularizer " << srtrl::cp_dropout_regularizer(model, model.sketch.theta) << '\n';
  else
    std::cout << "regularizer n/a (Tucker weight)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic rank-regularized tensor regression layers"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", preset, objective, filter;
  std::uint64_t seed = 0, verify_seed = 1234;
  double theta = 1.0;
  bool no_timing = false, dump_data = false;

  auto* synth = app.add_subcommand("synth", "Run the synthetic stochastic-vs-deterministic experiment");
  synth->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  synth->add_option("--out", out_dir, "Output directory")->capture_default_str();
  auto* seed_opt = synth->add_option("--seed", seed, "Top-level seed");
  auto* theta_opt = synth->add_option("--theta", theta, "Single keep-rate theta in (0, 1]");
  auto* objective_opt = synth->add_option("--objective", objective, "stochastic, deterministic or both")
                            ->check(CLI::IsMember({"stochastic", "deterministic", "both"}));
  auto* preset_opt = synth->add_option("--preset", preset, "paper or desk")->check(CLI::IsMember({"paper", "desk"}));
  synth->add_flag("--no-timing", no_timing, "Write 0 in the seconds column for byte-reproducible CSVs");
  synth->add_flag("--dump-data", dump_data, "Also write the generated dataset in tensor text format");

  auto* verify = app.add_subcommand("verify", "Run the oracle verification suites");
  verify->add_option("--filter", filter, "Suite name (algebra, sketch, srr, enum, grad) or check-name substring");
  verify->add_option("--seed", verify_seed, "Seed for the random instances")->capture_default_str();

  std::string checkpoint;
  auto* inspect = app.add_subcommand("inspect", "Describe a saved checkpoint");
  inspect->add_option("checkpoint", checkpoint, "Checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (*synth) {
    srtrl::PlanOverrides overrides;
    if (*preset_opt) overrides.preset = preset;
    if (*seed_opt) overrides.seed = seed;
    if (*theta_opt) overrides.theta = theta;
    if (*objective_opt) overrides.objective = objective;
    return cmd_synth(config_path, out_dir, overrides, !no_timing, dump_data);
  }
  if (*verify) return cmd_verify(filter, verify_seed);
  return cmd_inspect(checkpoint);
}
