#include "srtrl/experiment.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "srtrl/io.hpp"

namespace srtrl {

using nlohmann::json;

ExperimentPlan preset_plan(const std::string& name) {
  ExperimentPlan p;
  if (name == "paper") {
    p.data = SyntheticSpec::paper();
    p.train = TrainConfig::paper();
  } else if (name == "desk") {
    p.data = SyntheticSpec::desk();
    p.train = TrainConfig::desk();
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected paper or desk)");
  }
  return p;
}

namespace {

std::vector<Objective> parse_objectives(const std::string& s) {
  if (s == "both") return {Objective::stochastic, Objective::deterministic};
  return {parse_objective(s)};
}

template <typename T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

Index get_positive(const json& j, const std::string& key) {
  const auto v = get_as<long long>(j, key);
  if (v <= 0) throw ConfigError("config key '" + key + "' must be positive");
  return static_cast<Index>(v);
}

}  // namespace

ExperimentPlan resolve_plan(const std::optional<json>& file, const PlanOverrides& overrides) {
  static const std::set<std::string> known{
      "preset",   "weight_shape", "output_dim", "true_rank", "model_rank", "n_train",        "n_test",
      "epochs",   "batch_size",   "lr_initial", "lr_decay_factor",        "lr_decay_epochs", "thetas",
      "objective", "scheme",      "scale_mode", "masks",      "seed"};
  if (file && !file->is_object()) throw ConfigError("config file must hold a JSON object");
  if (file)
    for (const auto& [key, value] : file->items())
      if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");

  std::string preset = "desk";
  if (file && file->contains("preset")) preset = get_as<std::string>(*file, "preset");
  if (overrides.preset) preset = *overrides.preset;
  ExperimentPlan plan = preset_plan(preset);

  if (file) {
    const json& j = *file;
    if (j.contains("weight_shape")) {
      plan.data.weight_shape.clear();
      for (auto d : get_as<std::vector<long long>>(j, "weight_shape")) {
        if (d <= 0) throw ConfigError("weight_shape entries must be positive");
        plan.data.weight_shape.push_back(static_cast<Index>(d));
      }
    }
    if (j.contains("output_dim")) plan.data.output_dim = get_positive(j, "output_dim");
    if (j.contains("true_rank")) plan.data.true_rank = get_positive(j, "true_rank");
    if (j.contains("model_rank")) plan.train.model_rank = get_positive(j, "model_rank");
    if (j.contains("n_train")) plan.data.n_train = get_positive(j, "n_train");
    if (j.contains("n_test")) plan.data.n_test = get_positive(j, "n_test");
    if (j.contains("epochs")) plan.train.epochs = static_cast<int>(get_positive(j, "epochs"));
    if (j.contains("batch_size")) plan.train.batch_size = get_positive(j, "batch_size");
    if (j.contains("lr_initial")) plan.train.lr_initial = get_as<double>(j, "lr_initial");
    if (j.contains("lr_decay_factor")) plan.train.lr_decay_factor = get_as<double>(j, "lr_decay_factor");
    if (j.contains("lr_decay_epochs")) plan.train.lr_decay_epochs = get_as<std::vector<int>>(j, "lr_decay_epochs");
    if (j.contains("thetas")) plan.thetas = get_as<std::vector<double>>(j, "thetas");
    if (j.contains("objective")) plan.objectives = parse_objectives(get_as<std::string>(j, "objective"));
    if (j.contains("scheme")) plan.train.scheme = parse_scheme(get_as<std::string>(j, "scheme"));
    if (j.contains("scale_mode")) plan.train.scale_mode = parse_scale_mode(get_as<std::string>(j, "scale_mode"));
    if (j.contains("masks")) plan.train.masks = parse_mask_granularity(get_as<std::string>(j, "masks"));
    if (j.contains("seed")) plan.seed = get_as<std::uint64_t>(j, "seed");
  }
  if (overrides.seed) plan.seed = *overrides.seed;
  if (overrides.theta) plan.thetas = {*overrides.theta};
  if (overrides.objective) plan.objectives = parse_objectives(*overrides.objective);

  plan.data.seed = plan.seed;
  plan.train.seed = plan.seed;
  if (plan.thetas.empty()) throw ConfigError("at least one theta is required");
  plan.data.validate();
  for (double theta : plan.thetas) {
    TrainConfig c = plan.train;
    c.theta = theta;
    c.validate();
  }
  return plan;
}

json plan_to_json(const ExperimentPlan& plan) {
  json objectives = json::array();
  for (Objective o : plan.objectives) objectives.push_back(to_string(o));
  return json{
      {"weight_shape", plan.data.weight_shape},
      {"output_dim", plan.data.output_dim},
      {"true_rank", plan.data.true_rank},
      {"model_rank", plan.train.model_rank > 0 ? plan.train.model_rank : plan.data.true_rank},
      {"n_train", plan.data.n_train},
      {"n_test", plan.data.n_test},
      {"epochs", plan.train.epochs},
      {"batch_size", plan.train.batch_size},
      {"lr_initial", plan.train.lr_initial},
      {"lr_decay_factor", plan.train.lr_decay_factor},
      {"lr_decay_epochs", plan.train.lr_decay_epochs},
      {"thetas", plan.thetas},
      {"objectives", objectives},
      {"scheme", to_string(plan.train.scheme)},
      {"scale_mode", to_string(plan.train.scale_mode)},
      {"masks", to_string(plan.train.masks)},
      {"seed", plan.seed},
  };
}

std::string run_name(double theta, Objective objective) {
  std::ostringstream s;
  s << "theta_" << theta << "_" << to_string(objective);
  return s.str();
}

namespace {

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

void dump_dataset(const std::filesystem::path& dir, const SyntheticData& data) {
  auto dump = [&](const std::string& name, const auto& writer) {
    std::ofstream os(dir / name);
    if (!os) throw Error("cannot write " + (dir / name).string());
    writer(os);
  };
  dump("train_x.txt", [&](std::ostream& os) { write_tensor(os, data.train.x); });
  dump("train_y.txt", [&](std::ostream& os) { write_matrix(os, data.train.y); });
  dump("test_x.txt", [&](std::ostream& os) { write_tensor(os, data.test.x); });
  dump("test_y.txt", [&](std::ostream& os) { write_matrix(os, data.test.y); });
  dump("true_weight.txt", [&](std::ostream& os) { write_kruskal(os, data.true_weight); });
}

}  // namespace

std::vector<RunSummary> run_plan(const ExperimentPlan& plan, const std::filesystem::path& out_dir, bool timing,
                                 bool dump_data) {
  std::filesystem::create_directories(out_dir);
  write_json(out_dir / "config.resolved.json", plan_to_json(plan));
  const SyntheticData data = generate_synthetic(plan.data);
  if (dump_data) dump_dataset(out_dir, data);

  std::vector<RunSummary> runs;
  json manifest{{"seed", plan.seed}, {"config", plan_to_json(plan)}, {"status", "ok"}};
  auto write_manifest = [&]() {
    json jr = json::array();
    for (const auto& r : runs)
      jr.push_back({{"theta", r.theta},
                    {"objective", to_string(r.objective)},
                    {"csv", r.csv},
                    {"checkpoint", r.checkpoint},
                    {"final_objective", r.final_objective},
                    {"final_train_loss", r.final_train_loss},
                    {"final_test_mse", r.final_test_mse}});
    manifest["runs"] = jr;
    write_json(out_dir / "manifest.json", manifest);
  };

  for (double theta : plan.thetas) {
    for (Objective objective : plan.objectives) {
      TrainConfig config = plan.train;
      config.theta = theta;
      config.objective = objective;
      ExperimentResult result;
      try {
        result = run_experiment(data, config);
      } catch (const DivergedError& e) {
        manifest["status"] = "diverged";
        manifest["error"] = run_name(theta, objective) + ": " + e.what();
        write_manifest();
        throw;
      }
      RunSummary s;
      s.theta = theta;
      s.objective = objective;
      const std::string stem = run_name(theta, objective);
      s.csv = stem + ".csv";
      s.checkpoint = stem + ".ckpt";
      {
        std::ofstream os(out_dir / s.csv);
        if (!os) throw Error("cannot write " + (out_dir / s.csv).string());
        write_csv(os, result.curve, timing);
      }
      save_checkpoint(out_dir / s.checkpoint, result.model);
      const EpochRecord& last = result.curve.records.back();
      s.final_objective = last.objective;
      s.final_train_loss = last.train_loss;
      s.final_test_mse = last.test_mse;
      runs.push_back(s);
    }
  }
  write_manifest();
  return runs;
}

}  // namespace srtrl
