#include "relaxeq/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "relaxeq/checkpoint.hpp"
#include "relaxeq/intertwiner.hpp"
#include "relaxeq/metrics.hpp"
#include "relaxeq/train.hpp"

namespace relaxeq::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  bool quiet = false;
};

RunConfig resolve_config(const std::string& path, const GlobalOptions& g) {
  RunConfig c = load_config(path);
  if (g.seed) c.seed = *g.seed;
  if (!g.output_dir.empty()) c.output_dir = g.output_dir;
  return c;
}

unsigned sweep_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("RELAXEQ_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(v));
    } catch (const std::exception&) {
      throw ConfigError("RELAXEQ_THREADS must be a positive integer");
    }
  }
  return n;
}

int cmd_train(const std::string& config_path, const std::string& resume_path, const GlobalOptions& g) {
  const RunConfig config = resolve_config(config_path, g);
  RunState state;
  if (resume_path.empty()) {
    state = start_run(config);
  } else {
    state = run_state_from_json(read_json_file(resume_path));
    json saved = to_json(state.config), mine = to_json(config);
    saved.erase("output_dir");
    mine.erase("output_dir");
    if (saved != mine) throw ConfigError("run state '" + resume_path + "' was produced by a different configuration");
    state.config.output_dir = config.output_dir;
  }
  fs::create_directories(config.output_dir);
  const fs::path dir(config.output_dir);
  write_text_file((dir / "config.json").string(), to_json(config).dump(2) + "\n");
  const auto save_state = [&](const RunState& s) { write_text_file((dir / "run_state.json").string(), run_state_to_json(s).dump() + "\n"); };
  try {
    const FitResult r = fit_from(std::move(state), !g.quiet, save_state);
    write_text_file((dir / "metrics.csv").string(), metrics_csv(r.history));
    write_text_file((dir / "checkpoint.json").string(), checkpoint_to_json(r.relaxed, config).dump() + "\n");
    write_text_file((dir / "checkpoint_projected.json").string(), checkpoint_to_json(r.projected, config).dump() + "\n");
    if (!g.quiet && !r.history.empty()) {
      const MetricsRecord& last = r.history.back();
      std::cout << "final projected test metric " << format_float(last.test_metric_projected) << ", outputs in "
                << config.output_dir << "\n";
    }
  } catch (const DivergenceError& e) {
    write_text_file((dir / "metrics.csv").string(), metrics_csv(e.history));
    write_text_file((dir / "checkpoint.json").string(), checkpoint_to_json(e.last_good, config).dump() + "\n");
    std::cerr << "error: training diverged: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_audit(const std::string& checkpoint_path, const std::string& config_path, const GlobalOptions& g) {
  const RunConfig config = resolve_config(config_path, g);
  const json ck = read_json_file(checkpoint_path);
  if (ck.contains("config")) {
    const json echo = ck.at("config");
    const json mine = to_json(config);
    for (const char* section : {"task", "model"}) {
      if (!echo.contains(section) || echo.at(section) != mine.at(section)) {
        throw ConfigError(std::string("checkpoint was trained with a different '") + section + "' configuration");
      }
    }
  }
  const TaskData data = make_task_data(config);
  Rng init(0);
  Model model = build_model(config, data.train, init);
  load_checkpoint(ck, model);
  const json report = audit_report(model, config, data.test);
  if (const std::string err = validate_audit_report(report); !err.empty()) throw NumericalError("audit report invalid: " + err);
  const fs::path dir = g.output_dir.empty() ? fs::path(checkpoint_path).parent_path() : fs::path(g.output_dir);
  if (!dir.empty()) fs::create_directories(dir);
  write_text_file((dir / "audit.json").string(), report.dump(2) + "\n");
  std::cout << report.dump(2) << "\n";
  return kExitOk;
}

int cmd_basis(const std::string& in, const std::string& out, const GlobalOptions&) {
  const SymmetrySpec rep_in = SymmetrySpec::parse(in);
  const SymmetrySpec rep_out = SymmetrySpec::parse(out);
  const IntertwinerBasis basis = solve_basis(rep_in, rep_out);
  std::cout << "rep_in: " << rep_in.name() << " (dim " << rep_in.dim() << ")\n"
            << "rep_out: " << rep_out.name() << " (dim " << rep_out.dim() << ")\n"
            << "d = " << basis.dim() << "\n"
            << "constraint_residual = " << format_float(constraint_residual(basis, rep_in, rep_out)) << "\n";
  return kExitOk;
}

int cmd_schedule(int epochs, std::optional<double> constant) {
  const ThetaSchedule s = constant ? ThetaSchedule::constant(epochs, *constant) : ThetaSchedule::cyclic(epochs);
  std::cout << schedule_csv(s);
  return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& axis, const std::vector<double>& values,
              std::vector<std::uint64_t> seeds, const GlobalOptions& g) {
  const RunConfig config = resolve_config(config_path, g);
  if (seeds.empty()) seeds.push_back(config.seed);
  const auto rows = sweep(config, axis, values, seeds, sweep_threads());
  const std::string csv = sweep_csv(rows);
  fs::create_directories(config.output_dir);
  write_text_file((fs::path(config.output_dir) / "sweep.csv").string(), csv);
  std::cout << csv;
  return kExitOk;
}

}  // namespace

std::string schedule_csv(const ThetaSchedule& schedule) {
  std::string out = "i,theta\n";
  for (int i = 0; i <= schedule.total_epochs(); ++i) out += std::to_string(i) + "," + format_float(schedule.at(i)) + "\n";
  return out;
}

json audit_report(const Model& model, const RunConfig& config, const Dataset& test) {
  Rng rng(config.seed);
  const double theta = model.theta;
  const LieDerivative lie = model_lie_derivative(model, theta, test.inputs, config.eval.lie_step);
  json j;
  j["theta"] = theta;
  j["p_ee"] = p_ee(model, theta, test.inputs, config.eval.p_ee_samples, rng);
  j["p_pe"] = p_pe(model, theta, test.inputs);
  j["lie_total"] = lie.total;
  j["lie_per_generator"] = lie.per_generator;
  j["per_layer_lie"] = per_layer_lie(model, theta, test.inputs);
  j["intertwiner_dims"] = model.intertwiner_dims();
  j["parameter_count"] = model.parameter_count();
  j["test_metric"] = task_metric(model, test, theta);
  return j;
}

std::string validate_audit_report(const json& r) {
  if (!r.is_object()) return "report is not an object";
  for (const char* key : {"theta", "p_ee", "p_pe", "lie_total", "test_metric"}) {
    if (!r.contains(key) || !r.at(key).is_number()) return std::string("'") + key + "' must be a number";
  }
  for (const char* key : {"theta", "p_ee", "p_pe", "lie_total"}) {
    if (r.at(key).get<double>() < 0.0) return std::string("'") + key + "' must be non-negative";
  }
  for (const char* key : {"lie_per_generator", "per_layer_lie"}) {
    if (!r.contains(key) || !r.at(key).is_array()) return std::string("'") + key + "' must be an array";
    for (const auto& v : r.at(key))
      if (!v.is_number() || v.get<double>() < 0.0) return std::string("'") + key + "' must hold non-negative numbers";
  }
  if (!r.contains("intertwiner_dims") || !r.at("intertwiner_dims").is_array()) return "'intertwiner_dims' must be an array";
  const auto count = [](const json& v) { return v.is_number_integer() && v.get<std::int64_t>() >= 0; };
  for (const auto& v : r.at("intertwiner_dims"))
    if (!count(v)) return "'intertwiner_dims' must hold non-negative integers";
  if (!r.contains("parameter_count") || !count(r.at("parameter_count"))) return "'parameter_count' must be a non-negative integer";
  return {};
}

int run(int argc, char** argv) {
  CLI::App app{"Relaxed equivariant training experiments"};
  app.require_subcommand(1);
  GlobalOptions g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Override the configuration seed");
  app.add_option("--output-dir", g.output_dir, "Directory for emitted files");
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  std::string config_path, resume_path, checkpoint_path, rep_in, rep_out, axis;
  int epochs = 0;
  std::optional<double> constant;
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;

  auto* train = app.add_subcommand("train", "Train a model and write metrics and checkpoints");
  train->add_option("config", config_path, "JSON run configuration")->required();
  train->add_option("--resume", resume_path, "Continue from a run_state.json written by an earlier run");
  auto* audit = app.add_subcommand("audit", "Measure equivariance and projection error of a checkpoint");
  audit->add_option("checkpoint", checkpoint_path, "Checkpoint JSON")->required();
  audit->add_option("config", config_path, "JSON run configuration")->required();
  auto* basis = app.add_subcommand("basis", "Intertwiner basis dimension between two representations");
  basis->add_option("rep_in", rep_in, "Input representation, e.g. copies(so2_std,3)")->required();
  basis->add_option("rep_out", rep_out, "Output representation")->required();
  auto* schedule = app.add_subcommand("schedule", "Print the theta schedule as CSV");
  schedule->add_option("epochs", epochs, "Total epochs N_E")->required()->check(CLI::PositiveNumber);
  schedule->add_option("--constant", constant, "Constant theta instead of the cyclic schedule");
  auto* sweep_cmd = app.add_subcommand("sweep", "Method vs baseline over one configuration axis");
  sweep_cmd->add_option("config", config_path, "JSON run configuration")->required();
  sweep_cmd->add_option("--axis", axis, "model_width | depth | dataset_size | lambda_reg")->required();
  sweep_cmd->add_option("--values", values, "Axis values")->required()->delimiter(',');
  sweep_cmd->add_option("--seeds", seeds, "Seeds (default: the configuration seed)")->delimiter(',');
  for (auto* sub : {train, audit, basis, schedule, sweep_cmd}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  if (*seed_opt) g.seed = seed_value;

  try {
    if (*train) return cmd_train(config_path, resume_path, g);
    if (*audit) return cmd_audit(checkpoint_path, config_path, g);
    if (*basis) return cmd_basis(rep_in, rep_out, g);
    if (*schedule) return cmd_schedule(epochs, constant);
    if (*sweep_cmd) return cmd_sweep(config_path, axis, values, seeds, g);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitConfig;
}

int run(const std::vector<std::string>& args) {
  std::vector<std::string> storage = args;
  std::vector<char*> argv;
  argv.reserve(storage.size());
  for (auto& a : storage) argv.push_back(a.data());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace relaxeq::cli
