#include "bora/adapters.hpp"

#include <algorithm>
#include <cmath>

#include "bora/errors.hpp"
#include "bora/rng.hpp"

namespace bora {

const char* method_name(Method m) {
  switch (m) {
    case Method::lora: return "lora";
    case Method::dora: return "dora";
    case Method::dora_row: return "dora_row";
    case Method::bora: return "bora";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "lora") return Method::lora;
  if (name == "dora") return Method::dora;
  if (name == "dora_row") return Method::dora_row;
  if (name == "bora") return Method::bora;
  throw ConfigError("method", "unknown method '" + name +
                                  "' (expected lora|dora|dora_row|bora)");
}

const char* scaling_name(ScalingMode m) {
  return m == ScalingMode::standard ? "standard" : "rank_stabilized";
}

ScalingMode parse_scaling(const std::string& name) {
  if (name == "standard") return ScalingMode::standard;
  if (name == "rank_stabilized" || name == "rslora")
    return ScalingMode::rank_stabilized;
  throw ConfigError("scaling", "unknown scaling mode '" + name +
                                   "' (expected standard|rank_stabilized)");
}

const char* norm_mode_name(NormMode m) {
  return m == NormMode::exact ? "exact" : "detached";
}

NormMode parse_norm_mode(const std::string& name) {
  if (name == "exact") return NormMode::exact;
  if (name == "detached") return NormMode::detached;
  throw ConfigError("norm_mode", "unknown norm mode '" + name +
                                     "' (expected exact|detached)");
}

double AdapterConfig::scale() const {
  if (rank < 1) throw ConfigError("rank", "rank must be >= 1");
  return scaling == ScalingMode::standard
             ? alpha / static_cast<double>(rank)
             : alpha / std::sqrt(static_cast<double>(rank));
}

namespace {

void validate_adapter_config(const AdapterConfig& cfg, int h_r, int h_c) {
  if (cfg.rank < 1) throw ConfigError("rank", "rank must be >= 1");
  if (cfg.rank >= std::min(h_r, h_c))
    throw ConfigError("rank", "rank " + std::to_string(cfg.rank) +
                                  " must be < min(out, in) = " +
                                  std::to_string(std::min(h_r, h_c)));
  if (!(cfg.alpha > 0.0)) throw ConfigError("alpha", "alpha must be > 0");
  if (!(cfg.floor > 0.0)) throw ConfigError("floor", "floor must be > 0");
}

Vector init_magnitudes(const Matrix& w0, Dim d, const AdapterConfig& cfg) {
  Vector norms = dim_norms(w0, d);
  if (cfg.norm_policy == ZeroNormPolicy::strict) {
    for (int i = 0; i < norms.len; ++i) {
      if (norms[i] < cfg.floor)
        throw DegenerateNormError(
            "init_adapter: " + std::string(to_string(d)) + " " +
            std::to_string(i) + " of the base weight has norm " +
            std::to_string(norms[i]) + " below floor");
    }
  }
  return norms;
}

}  // namespace

AdaptedLinear init_adapter(Matrix w0, const AdapterConfig& config) {
  if (w0.empty()) throw ShapeError("init_adapter: base weight is empty");
  validate_adapter_config(config, w0.rows, w0.cols);
  AdaptedLinear layer;
  layer.config = config;
  layer.a = Matrix(w0.rows, config.rank);
  layer.b = Matrix(config.rank, w0.cols);  // zeros: the update starts at zero
  Rng rng(config.seed, "adapter.init.a");
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.rank));
  for (double& v : layer.a.data) v = rng.uniform(-bound, bound);
  layer.w0 = std::move(w0);
  if (layer.uses_m_row())
    layer.m_row = init_magnitudes(layer.w0, Dim::row, config);
  if (layer.uses_m_col())
    layer.m_col = init_magnitudes(layer.w0, Dim::col, config);
  return layer;
}

AdapterVars attach(Tape& tape, const AdaptedLinear& layer) {
  const AdapterConfig& cfg = layer.config;
  AdapterVars v;
  v.w0 = tape.matrix(layer.w0, false, "w0");
  v.a = tape.matrix(layer.a, true, "a");
  v.b = tape.matrix(layer.b, true, "b");
  const Var base =
      tape.add(v.w0, tape.scale(tape.matmul(v.a, v.b), cfg.scale()));
  const auto norms = [&](Var m, Dim d) {
    const Var n = tape.dim_norms(m, d);
    return cfg.norm_mode == NormMode::detached ? tape.detach(n) : n;
  };
  switch (cfg.method) {
    case Method::lora:
      v.merged = base;
      break;
    case Method::dora:
      v.m_col = tape.vector(layer.m_col, true, "m_col");
      v.unit_cols = tape.div_dim(base, norms(base, Dim::col), Dim::col,
                                 cfg.floor, cfg.norm_policy);
      v.merged = tape.scale_dim(v.unit_cols, v.m_col, Dim::col);
      break;
    case Method::dora_row:
      v.m_row = tape.vector(layer.m_row, true, "m_row");
      v.unit_rows = tape.div_dim(base, norms(base, Dim::row), Dim::row,
                                 cfg.floor, cfg.norm_policy);
      v.merged = tape.scale_dim(v.unit_rows, v.m_row, Dim::row);
      break;
    case Method::bora: {
      v.m_row = tape.vector(layer.m_row, true, "m_row");
      v.m_col = tape.vector(layer.m_col, true, "m_col");
      v.unit_rows = tape.div_dim(base, norms(base, Dim::row), Dim::row,
                                 cfg.floor, cfg.norm_policy);
      const Var rescaled = tape.scale_dim(v.unit_rows, v.m_row, Dim::row);
      v.unit_cols = tape.div_dim(rescaled, norms(rescaled, Dim::col), Dim::col,
                                 cfg.floor, cfg.norm_policy);
      v.merged = tape.scale_dim(v.unit_cols, v.m_col, Dim::col);
      break;
    }
  }
  return v;
}

Var adapter_forward(Tape& tape, const AdapterVars& vars, Var x) {
  return tape.matmul(x, tape.transpose(vars.merged));
}

Matrix merged_weight(const AdaptedLinear& layer) {
  Tape tape;
  return tape.value_matrix(attach(tape, layer).merged);
}

Matrix adapter_forward(const AdaptedLinear& layer, const Matrix& x) {
  Tape tape;
  const AdapterVars vars = attach(tape, layer);
  return tape.value_matrix(adapter_forward(tape, vars, tape.matrix(x)));
}

Matrix merge_and_freeze(const AdaptedLinear& layer) {
  return merged_weight(layer);
}

std::vector<ParamRef> trainable_params(AdaptedLinear& layer) {
  std::vector<ParamRef> out{{"a", &layer.a.data}, {"b", &layer.b.data}};
  if (layer.uses_m_row()) out.push_back({"m_row", &layer.m_row.data});
  if (layer.uses_m_col()) out.push_back({"m_col", &layer.m_col.data});
  return out;
}

std::int64_t trainable_count(const AdaptedLinear& layer) {
  std::int64_t n = static_cast<std::int64_t>(layer.a.data.size()) +
                   static_cast<std::int64_t>(layer.b.data.size());
  n += layer.m_row.len;
  n += layer.m_col.len;
  return n;
}

namespace {

// Shared scaffolding for the gradient-check problems: evaluate the loss on a
// fresh tape from the layer's current buffers, or run backward once and
// collect the gradients in trainable_params order.
template <typename LossFn>
GradCheckProblem make_problem(AdaptedLinear& layer, LossFn make_loss) {
  GradCheckProblem problem;
  for (ParamRef& p : trainable_params(layer))
    problem.params.emplace_back(p.name, p.data);
  problem.eval = [&layer, make_loss]() {
    Tape tape;
    const AdapterVars vars = attach(tape, layer);
    return tape.value_scalar(make_loss(tape, vars));
  };
  problem.analytic = [&layer, make_loss]() {
    Tape tape;
    const AdapterVars vars = attach(tape, layer);
    tape.backward(make_loss(tape, vars));
    std::vector<std::vector<double>> grads;
    grads.emplace_back(tape.grad(vars.a).begin(), tape.grad(vars.a).end());
    grads.emplace_back(tape.grad(vars.b).begin(), tape.grad(vars.b).end());
    if (layer.uses_m_row())
      grads.emplace_back(tape.grad(vars.m_row).begin(),
                         tape.grad(vars.m_row).end());
    if (layer.uses_m_col())
      grads.emplace_back(tape.grad(vars.m_col).begin(),
                         tape.grad(vars.m_col).end());
    return grads;
  };
  return problem;
}

}  // namespace

GradCheckProblem adapter_mse_problem(AdaptedLinear& layer, const Matrix& x,
                                     const Matrix& target) {
  return make_problem(layer, [x, target](Tape& tape, const AdapterVars& vars) {
    const Var pred = adapter_forward(tape, vars, tape.matrix(x));
    return tape.mse_loss(pred, tape.matrix(target));
  });
}

GradCheckProblem adapter_ce_problem(AdaptedLinear& layer, const Matrix& x,
                                    std::vector<int> targets) {
  return make_problem(
      layer, [x, targets = std::move(targets)](Tape& tape,
                                               const AdapterVars& vars) {
        const Var logits = adapter_forward(tape, vars, tape.matrix(x));
        return tape.softmax_cross_entropy(logits, targets);
      });
}

ParamCount count_trainable(const ArchSpec& arch, Method method, int rank,
                           std::span<const std::string> targets) {
  if (rank < 1) throw ConfigError("rank", "rank must be >= 1");
  if (arch.n_layers < 1)
    throw ConfigError("n_layers", "architecture has no layers");
  if (targets.empty()) throw ConfigError("targets", "no target matrices given");
  std::int64_t per_layer = 0;
  for (const std::string& label : targets) {
    const auto it =
        std::find_if(arch.matrices.begin(), arch.matrices.end(),
                     [&](const ArchMatrix& m) { return m.label == label; });
    if (it == arch.matrices.end())
      throw ConfigError("targets", "unknown target label '" + label + "' in " +
                                       arch.name);
    per_layer += static_cast<std::int64_t>(rank) * (it->out + it->in);
    if (method == Method::dora) per_layer += it->in;
    if (method == Method::dora_row) per_layer += it->out;
    if (method == Method::bora) per_layer += it->out + it->in;
  }
  ParamCount result;
  result.count = per_layer * arch.n_layers;
  const double pct = 100.0 * static_cast<double>(result.count) /
                     static_cast<double>(arch.base_param_total + result.count);
  result.percent = std::floor(pct * 100.0 + 0.5) / 100.0;  // half-up
  return result;
}

}  // namespace bora
