#include "relaxeq/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "relaxeq/checkpoint.hpp"
#include "relaxeq/relaxation.hpp"

namespace relaxeq {

using nlohmann::json;

namespace {

constexpr double kDivergenceLimit = 1e6;

Rng stream(std::uint64_t seed, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose};
  return Rng(seq);
}

enum Stream : std::uint32_t { kTrainData = 1, kTestData = 2, kInit = 3, kShuffle = 4, kMetrics = 5, kSplit = 6 };

// A default tensor shares the scalar shape {} but holds no storage.
bool same_layout(const Tensor& a, const Tensor& b) { return a.shape() == b.shape() && a.size() == b.size(); }

void check_grad(const NamedParam& p, const Tensor& g) {
  if (!g.all_finite()) throw NumericalError("non-finite gradient for parameter " + p.name);
}

Tensor rows_of(const Tensor& m, std::span<const std::size_t> idx) {
  const std::size_t n = m.cols();
  Tensor out(Shape{idx.size(), n});
  for (std::size_t k = 0; k < idx.size(); ++k)
    std::copy_n(m.data().begin() + static_cast<std::ptrdiff_t>(idx[k] * n), n, out.data().begin() + static_cast<std::ptrdiff_t>(k * n));
  return out;
}

SymmetrySpec base_rep(const Dataset& data) {
  const auto& g = data.rep_in.group();
  if (!g) throw ConfigError("task input carries no group action");
  switch (g->family) {
    case GroupId::Family::SO2: return SymmetrySpec::so2_std();
    case GroupId::Family::SO3: return SymmetrySpec::so3_std();
    case GroupId::Family::Cyclic: return SymmetrySpec::cn_rot(g->order);
  }
  throw ConfigError("unsupported group");
}

}  // namespace

OptimizerState OptimizerState::from_config(const OptimConfig& c) {
  OptimizerState s;
  s.kind = c.kind;
  s.lr = c.lr;
  s.weight_decay = c.weight_decay;
  s.momentum = c.momentum;
  s.beta1 = c.beta1;
  s.beta2 = c.beta2;
  s.eps = c.eps;
  return s;
}

void adam_step(OptimizerState& s, const std::vector<NamedParam>& params, const Gradients& grads) {
  ++s.step;
  const double t = static_cast<double>(s.step);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (const NamedParam& p : params) {
    const Tensor g = grads.of(*p.tensor);
    check_grad(p, g);
    Moments& m = s.buffers[p.name];
    if (!same_layout(m.first, *p.tensor)) {
      m.first = Tensor(p.tensor->shape());
      m.second = Tensor(p.tensor->shape());
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i] + s.weight_decay * (*p.tensor)[i];
      m.first[i] = s.beta1 * m.first[i] + (1.0 - s.beta1) * gi;
      m.second[i] = s.beta2 * m.second[i] + (1.0 - s.beta2) * gi * gi;
      const double mhat = m.first[i] / c1;
      const double vhat = m.second[i] / c2;
      (*p.tensor)[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
  }
}

void sgd_step(OptimizerState& s, const std::vector<NamedParam>& params, const Gradients& grads) {
  ++s.step;
  for (const NamedParam& p : params) {
    const Tensor g = grads.of(*p.tensor);
    check_grad(p, g);
    Moments& m = s.buffers[p.name];
    if (!same_layout(m.first, *p.tensor)) m.first = Tensor(p.tensor->shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i] + s.weight_decay * (*p.tensor)[i];
      m.first[i] = s.momentum * m.first[i] + gi;
      (*p.tensor)[i] -= s.lr * m.first[i];
    }
  }
}

void optimizer_step(OptimizerState& s, const std::vector<NamedParam>& params, const Gradients& grads) {
  if (s.kind == "sgd") {
    sgd_step(s, params, grads);
  } else {
    adam_step(s, params, grads);
  }
}

Model build_model(const RunConfig& c, const Dataset& data, Rng& rng) {
  Model model;
  const bool regression = data.kind == TaskKind::EquivariantRegression;
  const bool relaxed = c.model.relaxed;
  const int depth = c.model.depth;
  if (c.model.pathway == "vector_neurons") {
    if (regression || data.rep_in.dim() % 3 != 0 || data.rep_in.group() != GroupId{GroupId::Family::SO3}) {
      throw ConfigError("model.pathway: vector_neurons needs an SO(3) point-cloud classification task");
    }
    std::size_t channels = static_cast<std::size_t>(data.rep_in.dim()) / 3;
    const auto width = static_cast<std::size_t>(c.model.width);
    for (int l = 0; l < depth; ++l) {
      VNRelaxedLinear layer = make_vn_linear(channels, width, relaxed, rng);
      model.layers.emplace_back(layer);
      model.layers.emplace_back(make_gated_norm(layer.rep_out()));
      channels = width;
    }
    model.layers.emplace_back(make_invariant_head(SymmetrySpec::copies(SymmetrySpec::so3_std(), c.model.width),
                                                  static_cast<std::size_t>(data.n_classes), rng));
  } else {
    const SymmetrySpec hidden = SymmetrySpec::copies(base_rep(data), c.model.width);
    SymmetrySpec current = data.rep_in;
    for (int l = 0; l < depth; ++l) {
      const bool last = l == depth - 1;
      const SymmetrySpec out = (last && regression) ? data.rep_out : hidden;
      model.layers.emplace_back(make_relaxed_linear(current, out, relaxed, rng));
      if (!(last && regression)) model.layers.emplace_back(make_gated_norm(out));
      current = out;
    }
    if (!regression) model.layers.emplace_back(make_invariant_head(hidden, static_cast<std::size_t>(data.n_classes), rng));
  }
  model.validate();
  return model;
}

TaskData make_task_data(const RunConfig& c) {
  const auto generate = [&](int n, Rng& rng) {
    const auto& t = c.task;
    if (t.name == "polygon2d") return make_polygon2d(PolygonParams{t.n_classes, t.points_per_cloud, t.noise_sigma, n}, rng);
    if (t.name == "shapes3d") return make_shapes3d(ShapesParams{t.points_per_cloud, t.noise_sigma, n}, rng);
    if (t.name == "nbody") return make_nbody(NBodyParams{t.n_particles, t.n_steps, t.dt, n}, rng);
    throw ConfigError("task.name: unknown task '" + t.name + "'");
  };
  Rng train_rng = stream(c.seed, kTrainData);
  Dataset train = generate(c.task.n_train, train_rng);
  if (c.eval.validation) {
    if (train.size() < 2) throw ConfigError("task.n_train: validation split needs at least 2 samples");
    Rng split_rng = stream(c.seed, kSplit);
    auto [fit_part, val_part] = split_dataset(train, 0.8, split_rng);
    return TaskData{std::move(fit_part), std::move(val_part)};
  }
  Rng test_rng = stream(c.seed, kTestData);
  Dataset test = generate(c.task.n_test, test_rng);
  return TaskData{std::move(train), std::move(test)};
}

double task_metric(const Model& model, const Dataset& data, double theta) {
  if (data.size() == 0) throw ContractError("metric on empty dataset");
  const Tensor out = evaluate(model, data.inputs, theta);
  if (data.kind == TaskKind::InvariantClassification) {
    std::size_t correct = 0;
    for (std::size_t r = 0; r < out.rows(); ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < out.cols(); ++c)
        if (out.at(r, c) > out.at(r, best)) best = c;
      if (static_cast<int>(best) == data.labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(out.rows());
  }
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) total += std::abs(out[i] - data.targets[i]);
  return total / static_cast<double>(out.size());
}

RunState start_run(const RunConfig& config) {
  validate(config);
  RunState st;
  st.config = config;
  st.optimizer = OptimizerState::from_config(config.optim);
  st.shuffle_rng = stream(config.seed, kShuffle);
  st.metrics_rng = stream(config.seed, kMetrics);
  const TaskData data = make_task_data(config);
  Rng init_rng = stream(config.seed, kInit);
  st.model = build_model(config, data.train, init_rng);
  return st;
}

bool RunState::finished() const { return stopped_early || epoch >= config.optim.epochs; }

void run_epoch(RunState& st, const TaskData& data, bool verbose) {
  const RunConfig& config = st.config;
  Model& model = st.model;
  OptimizerState& opt = st.optimizer;
  const int epoch = st.epoch;
  const int epochs = config.optim.epochs;
  const bool classification = data.train.kind == TaskKind::InvariantClassification;
  const std::size_t n = data.train.size();
  const auto batch = static_cast<std::size_t>(config.optim.batch_size);

  const Model last_good = model;
  const double theta = config.theta_schedule().at(epoch);
  model.theta = theta;
  if (config.optim.lr_decay) {
    opt.lr = config.optim.lr * std::pow(config.optim.lr_decay_factor, epoch / config.optim.lr_decay_every);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), st.shuffle_rng);

  double sum_total = 0.0, sum_task = 0.0, sum_reg = 0.0;
  try {
    for (std::size_t start = 0; start < n; start += batch) {
      const std::span<const std::size_t> idx = std::span(order).subspan(start, std::min(batch, n - start));
      const Tensor xb = rows_of(data.train.inputs, idx);
      Tape tape;
      const ForwardResult fr = forward(model, tape, xb, theta);
      Var task;
      if (classification) {
        std::vector<int> yb;
        for (std::size_t i : idx) yb.push_back(data.train.labels[i]);
        task = cross_entropy(fr.output, yb);
      } else {
        task = mse(fr.output, rows_of(data.train.targets, idx));
      }
      const Objective obj = total_objective(task, model, fr, config.reg);
      const double total = obj.total.value().item();
      if (!std::isfinite(total) || total > kDivergenceLimit) {
        throw NumericalError("objective " + format_float(total) + " exceeds divergence limit");
      }
      const Gradients grads = tape.backward(obj.total);
      optimizer_step(opt, model.parameters(), grads);
      const auto w = static_cast<double>(idx.size());
      sum_total += w * total;
      sum_task += w * task.value().item();
      sum_reg += w * obj.regularizer.value().item();
    }
  } catch (const NumericalError& e) {
    throw DivergenceError(std::string("epoch ") + std::to_string(epoch) + ": " + e.what(), last_good, epoch, st.history);
  }

  MetricsRecord rec;
  rec.epoch = epoch;
  rec.theta = theta;
  rec.train_loss = sum_total / static_cast<double>(n);
  rec.task_loss = sum_task / static_cast<double>(n);
  rec.reg_loss = sum_reg / static_cast<double>(n);
  const bool evaluate_now = epoch % config.eval.stride == 0 || epoch == epochs - 1;
  if (evaluate_now) {
    const Tensor& test = data.test.inputs;
    rec.test_metric_projected = task_metric(model, data.test, 0.0);
    rec.test_metric_relaxed = task_metric(model, data.test, theta);
    rec.p_ee = p_ee(model, theta, test, config.eval.p_ee_samples, st.metrics_rng);
    rec.p_pe = p_pe(model, theta, test);
    rec.lie_total = model_lie_derivative(model, theta, test, config.eval.lie_step).total;
    rec.per_layer_lie = per_layer_lie(model, theta, test);
  } else {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    rec.test_metric_projected = rec.test_metric_relaxed = rec.p_ee = rec.p_pe = rec.lie_total = nan;
  }
  st.history.push_back(rec);
  ++st.epoch;
  if (verbose) {
    std::cerr << "epoch " << epoch << " theta " << format_float(theta) << " loss " << format_float(rec.train_loss)
              << " projected " << format_float(rec.test_metric_projected) << " relaxed " << format_float(rec.test_metric_relaxed)
              << "\n";
  }

  if (config.optim.early_stopping && evaluate_now) {
    // Stop once the mean error of the last 5 evaluations exceeds that of the previous 5.
    auto& trace = st.error_trace;
    trace.push_back(classification ? 1.0 - rec.test_metric_projected : rec.test_metric_projected);
    if (trace.size() >= 10) {
      const double recent = std::accumulate(trace.end() - 5, trace.end(), 0.0) / 5.0;
      const double before = std::accumulate(trace.end() - 10, trace.end() - 5, 0.0) / 5.0;
      if (recent > before) st.stopped_early = true;
    }
  }
}

FitResult fit_from(RunState st, bool verbose, const EpochCallback& on_epoch) {
  const TaskData data = make_task_data(st.config);
  while (!st.finished()) {
    run_epoch(st, data, verbose);
    if (on_epoch) on_epoch(st);
  }
  return FitResult{st.config, st.model, project(st.model), st.history, st.stopped_early};
}

FitResult fit(const RunConfig& config, bool verbose, const EpochCallback& on_epoch) {
  return fit_from(start_run(config), verbose, on_epoch);
}

namespace {

json tensor_json(const Tensor& t) { return t.values(); }

void tensor_from(const json& j, Tensor& t, const std::string& where) {
  auto v = j.get<std::vector<double>>();
  if (v.size() != t.size()) throw ConfigError(where + ": size mismatch");
  t.values() = std::move(v);
}

template <class Engine>
std::string engine_text(const Engine& e) {
  std::ostringstream os;
  os << e;
  return os.str();
}

// JSON has no NaN, so non-evaluated metrics travel as null.
json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_from(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

}  // namespace

json run_state_to_json(const RunState& st) {
  json buffers = json::object();
  for (const auto& [name, m] : st.optimizer.buffers) {
    json b{{"first", tensor_json(m.first)}};
    if (m.second.size() > 0) b["second"] = tensor_json(m.second);
    buffers[name] = std::move(b);
  }
  json history = json::array();
  for (const MetricsRecord& r : st.history) {
    history.push_back(json{{"epoch", r.epoch},
                           {"theta", r.theta},
                           {"train_loss", number_or_null(r.train_loss)},
                           {"task_loss", number_or_null(r.task_loss)},
                           {"reg_loss", number_or_null(r.reg_loss)},
                           {"test_metric_projected", number_or_null(r.test_metric_projected)},
                           {"test_metric_relaxed", number_or_null(r.test_metric_relaxed)},
                           {"p_ee", number_or_null(r.p_ee)},
                           {"p_pe", number_or_null(r.p_pe)},
                           {"lie_total", number_or_null(r.lie_total)},
                           {"per_layer_lie", r.per_layer_lie}});
  }
  return json{{"schema", kRunStateSchema},
              {"epoch", st.epoch},
              {"stopped_early", st.stopped_early},
              {"error_trace", st.error_trace},
              {"checkpoint", checkpoint_to_json(st.model, st.config)},
              {"optimizer", {{"step", st.optimizer.step}, {"lr", st.optimizer.lr}, {"buffers", std::move(buffers)}}},
              {"rng", {{"shuffle", engine_text(st.shuffle_rng)}, {"metrics", engine_text(st.metrics_rng)}}},
              {"history", std::move(history)}};
}

RunState run_state_from_json(const json& j) {
  if (!j.is_object() || j.value("schema", 0) != kRunStateSchema) throw ConfigError("run state: unsupported schema");
  try {
    const json& ck = j.at("checkpoint");
    RunState st = start_run(parse_config(ck.at("config")));
    load_checkpoint(ck, st.model);
    st.epoch = j.at("epoch").get<int>();
    if (st.epoch < 0 || st.epoch > st.config.optim.epochs) throw ConfigError("run state: epoch out of range");
    st.stopped_early = j.at("stopped_early").get<bool>();
    st.error_trace = j.at("error_trace").get<std::vector<double>>();
    const json& opt = j.at("optimizer");
    st.optimizer.step = opt.at("step").get<std::size_t>();
    st.optimizer.lr = opt.at("lr").get<double>();
    const auto params = st.model.parameters();
    for (const auto& [name, b] : opt.at("buffers").items()) {
      const auto it = std::find_if(params.begin(), params.end(), [&](const NamedParam& p) { return p.name == name; });
      if (it == params.end()) throw ConfigError("run state: optimizer buffer for unknown parameter '" + name + "'");
      Moments& m = st.optimizer.buffers[name];
      m.first = Tensor(it->tensor->shape());
      tensor_from(b.at("first"), m.first, name);
      if (b.contains("second")) {
        m.second = Tensor(it->tensor->shape());
        tensor_from(b.at("second"), m.second, name);
      }
    }
    std::istringstream(j.at("rng").at("shuffle").get<std::string>()) >> st.shuffle_rng;
    std::istringstream(j.at("rng").at("metrics").get<std::string>()) >> st.metrics_rng;
    for (const json& r : j.at("history")) {
      MetricsRecord rec;
      rec.epoch = r.at("epoch").get<int>();
      rec.theta = r.at("theta").get<double>();
      rec.train_loss = number_from(r.at("train_loss"));
      rec.task_loss = number_from(r.at("task_loss"));
      rec.reg_loss = number_from(r.at("reg_loss"));
      rec.test_metric_projected = number_from(r.at("test_metric_projected"));
      rec.test_metric_relaxed = number_from(r.at("test_metric_relaxed"));
      rec.p_ee = number_from(r.at("p_ee"));
      rec.p_pe = number_from(r.at("p_pe"));
      rec.lie_total = number_from(r.at("lie_total"));
      rec.per_layer_lie = r.at("per_layer_lie").get<std::vector<double>>();
      st.history.push_back(std::move(rec));
    }
    return st;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run state: ") + e.what());
  }
}

std::string metrics_csv(const std::vector<MetricsRecord>& history) {
  std::string out = metrics_csv_header() + "\n";
  for (const MetricsRecord& r : history) out += metrics_csv_row(r) + "\n";
  return out;
}

RunConfig with_axis_value(const RunConfig& base, const std::string& axis, double value) {
  RunConfig c = base;
  const auto as_int = [&] {
    if (value != std::floor(value) || value < 1) throw ConfigError(axis + ": value " + format_float(value) + " is not a positive integer");
    return static_cast<int>(value);
  };
  if (axis == "model_width") {
    c.model.width = as_int();
  } else if (axis == "depth") {
    c.model.depth = as_int();
  } else if (axis == "dataset_size") {
    c.task.n_train = as_int();
  } else if (axis == "lambda_reg") {
    if (value < 0) throw ConfigError("lambda_reg: value must be >= 0");
    c.reg.lambda_reg = value;
    c.eval.validation = true;
  } else {
    throw ConfigError("unknown sweep axis '" + axis + "'");
  }
  validate(c);
  return c;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

std::vector<SweepRow> sweep(const RunConfig& base, const std::string& axis, const std::vector<double>& values,
                            const std::vector<std::uint64_t>& seeds, unsigned threads) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  struct Job {
    RunConfig config;
    std::size_t row;
    bool method;
    double final_metric = std::numeric_limits<double>::quiet_NaN();
    bool failed = false;
  };
  std::vector<Job> jobs;
  for (std::size_t v = 0; v < values.size(); ++v) {
    const RunConfig cell = with_axis_value(base, axis, values[v]);
    for (std::uint64_t seed : seeds) {
      for (bool method : {true, false}) {
        RunConfig c = cell;
        c.seed = seed;
        c.model.relaxed = method;
        jobs.push_back(Job{c, v, method});
      }
    }
  }
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      try {
        const FitResult r = fit(jobs[k].config);
        jobs[k].final_metric = r.history.back().test_metric_projected;
      } catch (const std::exception&) {
        jobs[k].failed = true;
      }
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(jobs.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<SweepRow> rows(values.size());
  for (std::size_t v = 0; v < values.size(); ++v) {
    rows[v].axis = axis;
    rows[v].value = values[v];
    rows[v].seeds = seeds.size();
  }
  for (const Job& j : jobs) {
    SweepRow& r = rows[j.row];
    if (j.failed) {
      ++(j.method ? r.method_failed : r.baseline_failed);
    } else {
      (j.method ? r.method_values : r.baseline_values).push_back(j.final_metric);
    }
  }
  for (SweepRow& r : rows) {
    std::tie(r.method_mean, r.method_std) = mean_std(r.method_values);
    std::tie(r.baseline_mean, r.baseline_std) = mean_std(r.baseline_values);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "axis,value,n_seeds,method_mean,method_std,baseline_mean,baseline_std,method_failed,baseline_failed\n";
  for (const SweepRow& r : rows) {
    out += r.axis + "," + format_float(r.value) + "," + std::to_string(r.seeds) + "," + format_float(r.method_mean) + "," +
           format_float(r.method_std) + "," + format_float(r.baseline_mean) + "," + format_float(r.baseline_std) + "," +
           std::to_string(r.method_failed) + "," + std::to_string(r.baseline_failed) + "\n";
  }
  return out;
}

}  // namespace relaxeq
