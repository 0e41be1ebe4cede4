#include "bora/trainer.hpp"

#include <chrono>
#include <cmath>

#include "bora/errors.hpp"
#include "bora/rng.hpp"
#include "bora/tape.hpp"

namespace bora {

const char* task_kind_name(TaskKind k) {
  return k == TaskKind::planted_lowrank_regression
             ? "planted_lowrank_regression"
             : "toy_classification";
}

TaskKind parse_task_kind(const std::string& name) {
  if (name == "planted_lowrank_regression")
    return TaskKind::planted_lowrank_regression;
  if (name == "toy_classification") return TaskKind::toy_classification;
  throw ConfigError("task.kind",
                    "unknown task kind '" + name +
                        "' (expected planted_lowrank_regression|toy_classification)");
}

namespace {

void validate_task_spec(const TaskSpec& spec) {
  if (spec.input_dim < 1) throw ConfigError("task.input_dim", "must be >= 1");
  if (spec.output_dim < 1) throw ConfigError("task.output_dim", "must be >= 1");
  if (spec.n_train < 1) throw ConfigError("task.n_train", "must be >= 1");
  if (spec.n_eval < 1) throw ConfigError("task.n_eval", "must be >= 1");
  if (spec.noise_std < 0.0) throw ConfigError("task.noise_std", "must be >= 0");
  if (spec.planted_rank < 0 ||
      spec.planted_rank > std::min(spec.input_dim, spec.output_dim))
    throw ConfigError("task.planted_rank",
                      "must lie in [0, min(input_dim, output_dim)]");
}

Matrix gaussian_matrix(Rng& rng, int rows, int cols, double scale) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = scale * rng.gaussian();
  return m;
}

}  // namespace

Dataset make_task(const TaskSpec& spec) {
  validate_task_spec(spec);
  Dataset ds;
  const double w0_scale = 1.0 / std::sqrt(static_cast<double>(spec.input_dim));
  {
    Rng rng(spec.seed, "task.w0");
    ds.w0 = gaussian_matrix(rng, spec.output_dim, spec.input_dim, w0_scale);
  }
  {
    Rng rng(spec.seed, "task.inputs");
    ds.x_train = gaussian_matrix(rng, spec.n_train, spec.input_dim, 1.0);
    ds.x_eval = gaussian_matrix(rng, spec.n_eval, spec.input_dim, 1.0);
  }
  if (spec.kind == TaskKind::planted_lowrank_regression) {
    Matrix target_w = ds.w0;
    if (spec.planted_rank > 0) {
      Rng rng(spec.seed, "task.planted");
      // P*Q entries have the same variance as w0 entries, so the planted
      // update is comparable to the base weight.
      const Matrix p = gaussian_matrix(
          rng, spec.output_dim, spec.planted_rank,
          1.0 / std::sqrt(static_cast<double>(spec.planted_rank)));
      const Matrix q =
          gaussian_matrix(rng, spec.planted_rank, spec.input_dim, w0_scale);
      const Matrix planted = matmul(p, q);
      for (std::size_t i = 0; i < target_w.data.size(); ++i)
        target_w.data[i] += planted.data[i];
    }
    Rng noise(spec.seed, "task.noise");
    const Matrix wt = transposed(target_w);
    ds.y_train = matmul(ds.x_train, wt);
    for (double& v : ds.y_train.data) v += spec.noise_std * noise.gaussian();
    ds.y_eval = matmul(ds.x_eval, wt);
    for (double& v : ds.y_eval.data) v += spec.noise_std * noise.gaussian();
  } else {
    Rng centers_rng(spec.seed, "task.centers");
    const Matrix centers =
        gaussian_matrix(centers_rng, spec.output_dim, spec.input_dim, 2.0);
    Rng labels_rng(spec.seed, "task.labels");
    Rng noise(spec.seed, "task.noise");
    const auto fill = [&](Matrix& x, std::vector<int>& labels, int n) {
      labels.resize(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        const int c = labels_rng.uniform_int(spec.output_dim);
        labels[static_cast<std::size_t>(i)] = c;
        for (int j = 0; j < spec.input_dim; ++j)
          x(i, j) = centers(c, j) + spec.noise_std * noise.gaussian();
      }
    };
    fill(ds.x_train, ds.labels_train, spec.n_train);
    fill(ds.x_eval, ds.labels_eval, spec.n_eval);
  }
  return ds;
}

void validate_train_config(const TrainConfig& config) {
  validate_task_spec(config.task);
  if (config.adapter.rank < 1) throw ConfigError("adapter.rank", "must be >= 1");
  if (config.adapter.rank >=
      std::min(config.task.input_dim, config.task.output_dim))
    throw ConfigError(
        "adapter.rank",
        "rank " + std::to_string(config.adapter.rank) +
            " must be < min(task.output_dim, task.input_dim) = " +
            std::to_string(
                std::min(config.task.input_dim, config.task.output_dim)));
  if (!(config.adapter.alpha > 0.0))
    throw ConfigError("adapter.alpha", "must be > 0");
  if (!(config.adapter.floor > 0.0))
    throw ConfigError("adapter.floor", "must be > 0");
  if (config.steps < 0) throw ConfigError("steps", "must be >= 0");
  if (config.batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (!(config.base_lr > 0.0)) throw ConfigError("base_lr", "must be > 0");
  if (config.warmup_ratio < 0.0 || config.warmup_ratio > 1.0)
    throw ConfigError("warmup_ratio", "must lie in [0, 1]");
  if (config.warmup_ratio > 0.0 && config.steps > 0 &&
      config.warmup_ratio * static_cast<double>(config.steps) < 1.0)
    throw ConfigError("warmup_ratio",
                      "warmup_ratio*steps must be >= 1 when warmup_ratio > 0");
  if (config.weight_decay < 0.0)
    throw ConfigError("weight_decay", "must be >= 0");
  if (config.snapshot_every < 1)
    throw ConfigError("snapshot_every", "must be >= 1");
}

double lr_schedule(long step, long total_steps, double warmup_ratio,
                   double base_lr) {
  if (total_steps < 0) throw ContractError("lr_schedule: total_steps < 0");
  if (step < 0 || step > total_steps)
    throw ContractError("lr_schedule: step " + std::to_string(step) +
                        " outside [0, " + std::to_string(total_steps) + "]");
  const long warmup =
      static_cast<long>(std::ceil(warmup_ratio * static_cast<double>(total_steps)));
  if (step < warmup)
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (total_steps == warmup) return base_lr;  // all-warmup schedule
  const double progress = static_cast<double>(step - warmup) /
                          static_cast<double>(total_steps - warmup);
  return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

void adamw_step(std::span<ParamUpdate> params, AdamWState& state,
                const AdamWHyper& hyper) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
      state.m[p].assign(params[p].value.size(), 0.0);
      state.v[p].assign(params[p].value.size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw ContractError("adamw_step: parameter count changed mid-run");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    ParamUpdate& param = params[p];
    if (param.value.size() != state.m[p].size() ||
        param.grad.size() != param.value.size())
      throw ContractError("adamw_step: size mismatch for parameter " +
                          std::string(param.name));
    for (std::size_t i = 0; i < param.value.size(); ++i) {
      const double g = param.grad[i];
      if (!std::isfinite(g))
        throw NumericError("adamw_step: non-finite gradient in parameter " +
                           std::string(param.name) + " at index " +
                           std::to_string(i));
      state.m[p][i] = hyper.beta1 * state.m[p][i] + (1.0 - hyper.beta1) * g;
      state.v[p][i] =
          hyper.beta2 * state.v[p][i] + (1.0 - hyper.beta2) * g * g;
      const double mhat = state.m[p][i] / bc1;
      const double vhat = state.v[p][i] / bc2;
      param.value[i] *= 1.0 - hyper.lr * hyper.weight_decay;
      param.value[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
    }
  }
}

namespace {

double plain_mse(const Matrix& pred, const Matrix& target) {
  double s = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.data.size());
}

double plain_softmax_ce(const Matrix& logits, std::span<const int> targets) {
  double total = 0.0;
  for (int i = 0; i < logits.rows; ++i) {
    double mx = logits(i, 0);
    for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, logits(i, j));
    double se = 0.0;
    for (int j = 0; j < logits.cols; ++j) se += std::exp(logits(i, j) - mx);
    total += mx + std::log(se) - logits(i, targets[static_cast<std::size_t>(i)]);
  }
  return total / logits.rows;
}

struct EvalResult {
  double loss = 0.0;
  std::optional<double> accuracy;
};

EvalResult evaluate(const AdaptedLinear& layer, const Dataset& ds,
                    const TaskSpec& task, bool on_eval_split) {
  const Matrix& x = on_eval_split ? ds.x_eval : ds.x_train;
  const Matrix pred = matmul(x, transposed(merged_weight(layer)));
  EvalResult r;
  if (task.kind == TaskKind::planted_lowrank_regression) {
    r.loss = plain_mse(pred, on_eval_split ? ds.y_eval : ds.y_train);
  } else {
    const std::vector<int>& labels =
        on_eval_split ? ds.labels_eval : ds.labels_train;
    r.loss = plain_softmax_ce(pred, labels);
    int correct = 0;
    for (int i = 0; i < pred.rows; ++i) {
      int best = 0;
      for (int j = 1; j < pred.cols; ++j)
        if (pred(i, j) > pred(i, best)) best = j;
      if (best == labels[static_cast<std::size_t>(i)]) ++correct;
    }
    r.accuracy = static_cast<double>(correct) / pred.rows;
  }
  return r;
}

}  // namespace

TrainResult train(const TrainConfig& config) {
  validate_train_config(config);
  const auto start = std::chrono::steady_clock::now();
  const Dataset ds = make_task(config.task);
  TrainResult result;
  result.layer = init_adapter(ds.w0, config.adapter);
  AdaptedLinear& layer = result.layer;
  result.report.trainable_count = trainable_count(layer);

  const auto snapshot = [&](long step) {
    result.snapshots.push_back({step, "layer0", "linear", merged_weight(layer)});
  };
  snapshot(0);
  {
    const EvalResult init_train = evaluate(layer, ds, config.task, false);
    const EvalResult init_eval = evaluate(layer, ds, config.task, true);
    result.report.curve.push_back({0, init_train.loss, init_eval.loss});
  }

  const bool regression =
      config.task.kind == TaskKind::planted_lowrank_regression;
  AdamWState opt_state;
  Rng shuffle_rng(config.seed, "train.shuffle");
  std::vector<int> order(static_cast<std::size_t>(config.task.n_train));
  for (int i = 0; i < config.task.n_train; ++i)
    order[static_cast<std::size_t>(i)] = i;
  std::size_t cursor = order.size();  // forces a shuffle on the first step

  for (long step = 1; step <= config.steps; ++step) {
    if (cursor >= order.size()) {
      shuffle_rng.shuffle(order);
      cursor = 0;
    }
    const int bs = static_cast<int>(std::min<std::size_t>(
        static_cast<std::size_t>(config.batch_size), order.size() - cursor));
    Matrix xb(bs, config.task.input_dim);
    Matrix yb(regression ? bs : 0, regression ? config.task.output_dim : 0);
    std::vector<int> lb(regression ? 0 : static_cast<std::size_t>(bs));
    for (int r = 0; r < bs; ++r) {
      const int src = order[cursor + static_cast<std::size_t>(r)];
      for (int j = 0; j < config.task.input_dim; ++j)
        xb(r, j) = ds.x_train(src, j);
      if (regression) {
        for (int j = 0; j < config.task.output_dim; ++j)
          yb(r, j) = ds.y_train(src, j);
      } else {
        lb[static_cast<std::size_t>(r)] =
            ds.labels_train[static_cast<std::size_t>(src)];
      }
    }
    cursor += static_cast<std::size_t>(bs);

    Tape tape;
    const AdapterVars vars = attach(tape, layer);
    const Var pred = adapter_forward(tape, vars, tape.matrix(xb));
    const Var loss = regression
                         ? tape.mse_loss(pred, tape.matrix(yb))
                         : tape.softmax_cross_entropy(pred, lb);
    const double loss_value = tape.value_scalar(loss);
    if (!std::isfinite(loss_value))
      throw DivergenceError(step, "training diverged at step " +
                                      std::to_string(step) +
                                      ": loss is non-finite");
    tape.backward(loss);

    const AdamWHyper hyper{
        lr_schedule(step - 1, config.steps, config.warmup_ratio,
                    config.base_lr),
        0.9, 0.999, 1e-8, config.weight_decay};
    std::vector<ParamUpdate> updates;
    updates.push_back({"a", layer.a.data, tape.grad(vars.a)});
    updates.push_back({"b", layer.b.data, tape.grad(vars.b)});
    if (layer.uses_m_row())
      updates.push_back({"m_row", layer.m_row.data, tape.grad(vars.m_row)});
    if (layer.uses_m_col())
      updates.push_back({"m_col", layer.m_col.data, tape.grad(vars.m_col)});
    adamw_step(updates, opt_state, hyper);

    CurvePoint point{step, loss_value, std::nullopt};
    if (step % config.snapshot_every == 0 || step == config.steps) {
      snapshot(step);
      point.eval_loss = evaluate(layer, ds, config.task, true).loss;
    }
    result.report.curve.push_back(point);
  }

  const EvalResult final_eval = evaluate(layer, ds, config.task, true);
  result.report.final_eval_loss = final_eval.loss;
  result.report.final_accuracy = final_eval.accuracy;
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return result;
}

}  // namespace bora
