#include "relaxeq/config.hpp"

#include <fstream>
#include <set>

namespace relaxeq {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) {
      throw ConfigError("unknown key '" + (where.empty() ? "" : where + ".") + item.key() + "'");
    }
  }
}

template <class T>
void read(const json& j, const std::string& where, const char* key, T& out) {
  if (!j.contains(key)) return;
  const std::string field = where.empty() ? key : where + "." + key;
  const json& v = j.at(key);
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(field + ": expected a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(field + ": expected a string");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(field + ": expected an integer");
    } else {
      if (!v.is_number()) throw ConfigError(field + ": expected a number");
    }
    out = v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(field + ": " + e.what());
  }
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

ThetaSchedule RunConfig::theta_schedule() const {
  return schedule.kind == "constant" ? ThetaSchedule::constant(optim.epochs, schedule.value)
                                     : ThetaSchedule::cyclic(optim.epochs);
}

void validate(const RunConfig& c) {
  const auto& t = c.task;
  require(t.name == "polygon2d" || t.name == "shapes3d" || t.name == "nbody", "task.name: unknown task '" + t.name + "'");
  require(t.n_train >= 1, "task.n_train: must be >= 1");
  require(t.n_test >= 1, "task.n_test: must be >= 1");
  require(t.noise_sigma >= 0.0, "task.noise_sigma: must be >= 0");
  if (t.name == "polygon2d") {
    require(t.n_classes >= 2 && t.n_classes <= 8, "task.n_classes: must be in [2, 8]");
    require(t.points_per_cloud >= t.n_classes + 2, "task.points_per_cloud: must be >= n_classes + 2");
  }
  if (t.name == "shapes3d") require(t.points_per_cloud >= 12, "task.points_per_cloud: must be >= 12 for shapes3d");
  if (t.name == "nbody") {
    require(t.n_particles >= 2, "task.n_particles: must be >= 2");
    require(t.n_steps >= 0, "task.n_steps: must be >= 0");
    require(t.dt > 0.0, "task.dt: must be > 0");
  }
  require(c.model.width >= 1, "model.width: must be >= 1");
  require(c.model.depth >= 1, "model.depth: must be >= 1");
  require(c.model.pathway == "standard" || c.model.pathway == "vector_neurons",
          "model.pathway: must be 'standard' or 'vector_neurons'");
  require(c.model.pathway == "standard" || t.name == "shapes3d", "model.pathway: vector_neurons requires task shapes3d");
  require(c.schedule.kind == "cyclic" || c.schedule.kind == "constant", "schedule.kind: must be 'cyclic' or 'constant'");
  require(c.schedule.value >= 0.0, "schedule.value: must be >= 0");
  require(c.reg.lambda_reg >= 0.0, "reg.lambda_reg: must be >= 0");
  const auto& o = c.optim;
  require(o.kind == "adam" || o.kind == "sgd", "optim.kind: must be 'adam' or 'sgd'");
  require(o.lr > 0.0, "optim.lr: must be > 0");
  require(o.weight_decay >= 0.0, "optim.weight_decay: must be >= 0");
  require(o.momentum >= 0.0 && o.momentum < 1.0, "optim.momentum: must be in [0, 1)");
  require(o.beta1 >= 0.0 && o.beta1 < 1.0, "optim.beta1: must be in [0, 1)");
  require(o.beta2 >= 0.0 && o.beta2 < 1.0, "optim.beta2: must be in [0, 1)");
  require(o.eps > 0.0, "optim.eps: must be > 0");
  require(o.batch_size >= 1, "optim.batch_size: must be >= 1");
  require(o.epochs >= 1, "optim.epochs: must be >= 1");
  require(o.lr_decay_factor > 0.0, "optim.lr_decay_factor: must be > 0");
  require(o.lr_decay_every >= 1, "optim.lr_decay_every: must be >= 1");
  require(c.eval.p_ee_samples >= 1, "eval.p_ee_samples: must be >= 1");
  require(c.eval.stride >= 1, "eval.stride: must be >= 1");
  require(c.eval.lie_step > 0.0, "eval.lie_step: must be > 0");
}

RunConfig parse_config(const json& j) {
  RunConfig c;
  check_keys(j, "", {"task", "model", "schedule", "reg", "optim", "eval", "seed", "output_dir"});
  if (j.contains("task")) {
    const json& t = j.at("task");
    check_keys(t, "task", {"name", "n_classes", "points_per_cloud", "noise_sigma", "n_particles", "n_steps", "dt", "n_train", "n_test"});
    read(t, "task", "name", c.task.name);
    if (c.task.name == "shapes3d") c.task.points_per_cloud = 12;
    read(t, "task", "n_classes", c.task.n_classes);
    read(t, "task", "points_per_cloud", c.task.points_per_cloud);
    read(t, "task", "noise_sigma", c.task.noise_sigma);
    read(t, "task", "n_particles", c.task.n_particles);
    read(t, "task", "n_steps", c.task.n_steps);
    read(t, "task", "dt", c.task.dt);
    read(t, "task", "n_train", c.task.n_train);
    read(t, "task", "n_test", c.task.n_test);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, "model", {"width", "depth", "pathway", "relaxed"});
    read(m, "model", "width", c.model.width);
    read(m, "model", "depth", c.model.depth);
    read(m, "model", "pathway", c.model.pathway);
    read(m, "model", "relaxed", c.model.relaxed);
  }
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    check_keys(s, "schedule", {"kind", "value"});
    read(s, "schedule", "kind", c.schedule.kind);
    read(s, "schedule", "value", c.schedule.value);
  }
  if (j.contains("reg")) {
    const json& r = j.at("reg");
    check_keys(r, "reg", {"lambda_reg", "include_lie", "include_actnorm"});
    read(r, "reg", "lambda_reg", c.reg.lambda_reg);
    read(r, "reg", "include_lie", c.reg.include_lie);
    read(r, "reg", "include_actnorm", c.reg.include_actnorm);
  }
  if (j.contains("optim")) {
    const json& o = j.at("optim");
    check_keys(o, "optim", {"kind", "lr", "weight_decay", "momentum", "beta1", "beta2", "eps", "batch_size", "epochs",
                            "lr_decay", "lr_decay_factor", "lr_decay_every", "early_stopping"});
    read(o, "optim", "kind", c.optim.kind);
    read(o, "optim", "lr", c.optim.lr);
    read(o, "optim", "weight_decay", c.optim.weight_decay);
    read(o, "optim", "momentum", c.optim.momentum);
    read(o, "optim", "beta1", c.optim.beta1);
    read(o, "optim", "beta2", c.optim.beta2);
    read(o, "optim", "eps", c.optim.eps);
    read(o, "optim", "batch_size", c.optim.batch_size);
    read(o, "optim", "epochs", c.optim.epochs);
    read(o, "optim", "lr_decay", c.optim.lr_decay);
    read(o, "optim", "lr_decay_factor", c.optim.lr_decay_factor);
    read(o, "optim", "lr_decay_every", c.optim.lr_decay_every);
    read(o, "optim", "early_stopping", c.optim.early_stopping);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    check_keys(e, "eval", {"p_ee_samples", "stride", "lie_step", "validation"});
    read(e, "eval", "p_ee_samples", c.eval.p_ee_samples);
    read(e, "eval", "stride", c.eval.stride);
    read(e, "eval", "lie_step", c.eval.lie_step);
    read(e, "eval", "validation", c.eval.validation);
  }
  read(j, "", "seed", c.seed);
  read(j, "", "output_dir", c.output_dir);
  validate(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json to_json(const RunConfig& c) {
  json j;
  j["task"] = {{"name", c.task.name},         {"n_classes", c.task.n_classes}, {"points_per_cloud", c.task.points_per_cloud},
               {"noise_sigma", c.task.noise_sigma}, {"n_particles", c.task.n_particles}, {"n_steps", c.task.n_steps},
               {"dt", c.task.dt},             {"n_train", c.task.n_train},     {"n_test", c.task.n_test}};
  j["model"] = {{"width", c.model.width}, {"depth", c.model.depth}, {"pathway", c.model.pathway}, {"relaxed", c.model.relaxed}};
  j["schedule"] = {{"kind", c.schedule.kind}, {"value", c.schedule.value}};
  j["reg"] = {{"lambda_reg", c.reg.lambda_reg}, {"include_lie", c.reg.include_lie}, {"include_actnorm", c.reg.include_actnorm}};
  j["optim"] = {{"kind", c.optim.kind},
                {"lr", c.optim.lr},
                {"weight_decay", c.optim.weight_decay},
                {"momentum", c.optim.momentum},
                {"beta1", c.optim.beta1},
                {"beta2", c.optim.beta2},
                {"eps", c.optim.eps},
                {"batch_size", c.optim.batch_size},
                {"epochs", c.optim.epochs},
                {"lr_decay", c.optim.lr_decay},
                {"lr_decay_factor", c.optim.lr_decay_factor},
                {"lr_decay_every", c.optim.lr_decay_every},
                {"early_stopping", c.optim.early_stopping}};
  j["eval"] = {{"p_ee_samples", c.eval.p_ee_samples},
               {"stride", c.eval.stride},
               {"lie_step", c.eval.lie_step},
               {"validation", c.eval.validation}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

}  // namespace relaxeq
