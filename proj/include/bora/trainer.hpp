#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bora/adapters.hpp"
#include "bora/dynamics.hpp"
#include "bora/matrix.hpp"

namespace bora {

enum class TaskKind { planted_lowrank_regression, toy_classification };
const char* task_kind_name(TaskKind k);
TaskKind parse_task_kind(const std::string& name);

// Synthetic task description. For the regression task the targets are
// X * (W0 + P*Q)^T plus Gaussian noise, where P*Q has inner dimension
// planted_rank, so an adapter of at least that rank can represent the
// solution exactly. For the classification task, inputs are Gaussian
// clusters (one per output class, spread noise_std) and planted_rank is
// ignored.
struct TaskSpec {
  TaskKind kind = TaskKind::planted_lowrank_regression;
  int input_dim = 0;
  int output_dim = 0;
  int n_train = 0;
  int n_eval = 0;
  int planted_rank = 0;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
};

struct Dataset {
  Matrix x_train, x_eval;
  Matrix y_train, y_eval;                      // regression targets
  std::vector<int> labels_train, labels_eval;  // classification labels
  Matrix w0;                                   // frozen base weight
};

Dataset make_task(const TaskSpec& spec);

struct TrainConfig {
  AdapterConfig adapter;
  TaskSpec task;
  long steps = 0;
  int batch_size = 1;
  double base_lr = 0.0;
  double warmup_ratio = 0.0;
  double weight_decay = 0.0;
  long snapshot_every = 1;
  std::uint64_t seed = 0;
};

// Throws ConfigError naming the offending field.
void validate_train_config(const TrainConfig& config);

// Linear ramp 0 -> base_lr over ceil(warmup_ratio*total_steps) steps, then
// cosine decay to 0 at total_steps. 0 <= step <= total_steps.
double lr_schedule(long step, long total_steps, double warmup_ratio,
                   double base_lr);

struct AdamWHyper {
  double lr = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// First and second moment estimates per parameter, plus the shared step
// count used for bias correction.
struct AdamWState {
  std::vector<std::vector<double>> m, v;
  long t = 0;
};

struct ParamUpdate {
  std::string_view name;
  std::span<double> value;
  std::span<const double> grad;
};

// One decoupled-decay update: value *= (1 - lr*weight_decay), then
// value -= lr * mhat / (sqrt(vhat) + eps). Non-finite gradients raise
// NumericError naming the parameter.
void adamw_step(std::span<ParamUpdate> params, AdamWState& state,
                const AdamWHyper& hyper);

struct CurvePoint {
  long step = 0;
  double train_loss = 0.0;
  std::optional<double> eval_loss;
};

struct TrainReport {
  std::vector<CurvePoint> curve;
  double final_eval_loss = 0.0;
  std::optional<double> final_accuracy;  // classification only
  std::int64_t trainable_count = 0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  TrainReport report;
  std::vector<WeightSnapshot> snapshots;
  AdaptedLinear layer;
};

// Deterministic given the config: snapshots at step 0, every snapshot_every
// steps, and at the final step. Non-finite losses raise DivergenceError with
// the offending step.
TrainResult train(const TrainConfig& config);

}  // namespace bora
