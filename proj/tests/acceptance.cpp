// Acceptance gate: one self-checking criterion per line of output.
// Exit status is the number of failed criteria (0 = all green).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "bora/adapters.hpp"
#include "bora/dynamics.hpp"
#include "bora/errors.hpp"
#include "bora/grad_check.hpp"
#include "bora/io.hpp"
#include "bora/matrix.hpp"
#include "bora/rng.hpp"
#include "bora/tape.hpp"
#include "bora/trainer.hpp"
#include "oracles.hpp"

using namespace bora;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void criterion(int num, const std::string& name,
               const std::function<bool(std::string&)>& body) {
  std::string detail;
  bool ok = false;
  try {
    ok = body(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
    ok = false;
  }
  std::printf("%s %2d: %s%s%s\n", ok ? "PASS" : "FAIL", num, name.c_str(),
              detail.empty() ? "" : " — ", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

AdaptedLinear random_layer(Method method, int out, int in, int rank,
                           std::uint64_t seed) {
  Rng rng(seed, "acceptance.w0");
  AdapterConfig cfg;
  cfg.method = method;
  cfg.rank = rank;
  cfg.alpha = 2.0 * rank;
  cfg.seed = seed;
  return init_adapter(oracle::random_matrix(rng, out, in), cfg);
}

void perturb(AdaptedLinear& layer, std::uint64_t seed) {
  Rng rng(seed, "acceptance.perturb");
  for (auto& p : trainable_params(layer))
    for (double& v : *p.data) v += 0.05 * rng.gaussian();
}

Matrix reference_merged(const AdaptedLinear& layer) {
  const double s = layer.config.scale();
  switch (layer.config.method) {
    case Method::dora:
      return oracle::dora_merged(layer.w0, layer.a, layer.b, s,
                                 layer.m_col.data);
    case Method::dora_row:
      return oracle::dora_row_merged(layer.w0, layer.a, layer.b, s,
                                     layer.m_row.data);
    case Method::bora:
      return oracle::bora_merged(layer.w0, layer.a, layer.b, s,
                                 layer.m_row.data, layer.m_col.data);
    case Method::lora:
      break;
  }
  return oracle::combined(layer.w0, layer.a, layer.b, s);
}

// Shared run recipe for the convergence and symmetry criteria. Everything is
// pinned so reruns measure the same trajectory.
TrainConfig pinned_run(Method method) {
  TrainConfig config;
  config.adapter.method = method;
  config.adapter.rank = 2;
  config.adapter.alpha = 4.0;
  config.adapter.seed = 21;
  config.task.kind = TaskKind::planted_lowrank_regression;
  config.task.input_dim = 6;
  config.task.output_dim = 8;
  config.task.n_train = 64;
  config.task.n_eval = 32;
  config.task.planted_rank = 2;
  config.task.noise_std = 0.0;
  config.task.seed = 9;
  config.steps = 400;
  config.batch_size = 16;
  config.base_lr = 0.02;
  config.warmup_ratio = 0.05;
  config.snapshot_every = 40;
  config.seed = 33;
  return config;
}

double run_symmetry_ratio(const TrainResult& result) {
  return symmetry_ratio(consecutive_series(result.snapshots, Dim::row),
                        consecutive_series(result.snapshots, Dim::col));
}

// Frozen observations from the first verified run of the pinned recipe
// above; later runs must stay within +-20% of them.
constexpr double kFrozenDoraRatio = 1.2350769321240316;
constexpr double kFrozenBoraRatio = 1.0079927925718450;

const Method kAllMethods[] = {Method::lora, Method::dora, Method::dora_row,
                              Method::bora};

}  // namespace

int main() {
  setenv("BORA_LOG", "quiet", 1);
  char fmt_buf[256];

  // 1 — parameter-count tables reproduce the published reference numbers.
  criterion(1, "parameter-count table matches the reference numbers",
            [&](std::string& detail) {
    const auto start = std::chrono::steady_clock::now();
    const ArchSpec arch = io::parse_arch_spec(
        io::read_file(fs::path(BORA_CONFIG_DIR) / "llama2_7b.json"));
    const std::vector<std::string> targets{"q_proj", "k_proj",  "v_proj",
                                           "o_proj", "up_proj", "gate_proj",
                                           "down_proj"};
    struct Expect {
      Method method;
      int rank;
      double percent;
      std::int64_t count;  // -1 when only the percentage is pinned
    };
    const Expect table[] = {
        {Method::lora, 4, 0.15, -1},      {Method::lora, 16, 0.59, -1},
        {Method::lora, 64, 2.32, 159907840}, {Method::lora, 66, 2.39, -1},
        {Method::lora, 128, 4.53, -1},    {Method::dora, 64, 2.33, 161046528},
        {Method::dora, 65, 2.37, -1},     {Method::dora_row, 64, 2.34, 161267712},
        {Method::bora, 4, 0.19, -1},      {Method::bora, 16, 0.63, -1},
        {Method::bora, 64, 2.35, 162406400}, {Method::bora, 128, 4.56, -1},
    };
    for (const Expect& e : table) {
      const ParamCount pc = count_trainable(arch, e.method, e.rank, targets);
      if (std::abs(pc.percent - e.percent) > 0.01) {
        std::snprintf(fmt_buf, sizeof fmt_buf, "%s rank %d: got %.4f%% want %.2f%%",
                      method_name(e.method), e.rank, pc.percent, e.percent);
        detail = fmt_buf;
        return false;
      }
      if (e.count >= 0 && pc.count != e.count) {
        std::snprintf(fmt_buf, sizeof fmt_buf,
                      "%s rank %d: got %lld params want %lld",
                      method_name(e.method), e.rank,
                      static_cast<long long>(pc.count),
                      static_cast<long long>(e.count));
        detail = fmt_buf;
        return false;
      }
    }
    const double elapsed = seconds_since(start);
    if (elapsed >= 1.0) {
      detail = "took " + std::to_string(elapsed) + "s (limit 1s)";
      return false;
    }
    return true;
  });

  // 2 — every method merges to exactly the base weight at initialization.
  criterion(2, "fresh adapters are exact identities across 100 random layers",
            [&](std::string& detail) {
    Rng shapes(2026, "acceptance.c2");
    for (int i = 0; i < 100; ++i) {
      const Method method = kAllMethods[i % 4];
      const int out = 9 + shapes.uniform_int(56);   // up to 64
      const int in = 9 + shapes.uniform_int(40);    // up to 48
      const int rank = 1 + shapes.uniform_int(8);   // 1..8
      const AdaptedLinear layer =
          random_layer(method, out, in, rank, 3000 + i);
      const double diff = max_abs_diff(merged_weight(layer), layer.w0);
      if (!(diff < 1e-12)) {
        std::snprintf(fmt_buf, sizeof fmt_buf, "%s %dx%d rank %d: |diff| %.3e",
                      method_name(method), out, in, rank, diff);
        detail = fmt_buf;
        return false;
      }
    }
    return true;
  });

  // 3 — normalized intermediates keep unit norms; merged column norms equal
  // the column magnitudes.
  criterion(3, "unit-norm invariants of the bi-dimensional merge",
            [&](std::string& detail) {
    for (int i = 0; i < 25; ++i) {
      AdaptedLinear layer = random_layer(Method::bora, 12, 9, 3, 4000 + i);
      perturb(layer, 4100 + i);
      Tape tape;
      const AdapterVars vars = attach(tape, layer);
      const Vector rn = tape.value_vector(tape.dim_norms(vars.unit_rows, Dim::row));
      for (int k = 0; k < rn.len; ++k)
        if (!(std::abs(rn[k] - 1.0) < 1e-9)) {
          detail = "row-normalized row norm drifted";
          return false;
        }
      const Vector cn = tape.value_vector(tape.dim_norms(vars.unit_cols, Dim::col));
      for (int k = 0; k < cn.len; ++k)
        if (!(std::abs(cn[k] - 1.0) < 1e-9)) {
          detail = "column-normalized column norm drifted";
          return false;
        }
      const Vector mc = tape.value_vector(tape.dim_norms(vars.merged, Dim::col));
      for (int k = 0; k < mc.len; ++k)
        if (!(std::abs(mc[k] - std::abs(layer.m_col[k])) < 1e-9)) {
          detail = "merged column norm differs from |column magnitude|";
          return false;
        }
    }
    return true;
  });

  // 4 — magnitude choices collapse the method tower.
  criterion(4, "norm-matched magnitudes reduce the nested method to the simpler ones",
            [&](std::string& detail) {
    for (int i = 0; i < 100; ++i) {
      AdaptedLinear layer = random_layer(Method::bora, 10, 8, 2, 5000 + i);
      perturb(layer, 5100 + i);
      const Matrix combined =
          oracle::combined(layer.w0, layer.a, layer.b, layer.config.scale());
      for (int r = 0; r < layer.m_row.len; ++r)
        layer.m_row[r] = oracle::row_norm(combined, r);
      const Matrix as_dora = oracle::dora_merged(
          layer.w0, layer.a, layer.b, layer.config.scale(), layer.m_col.data);
      const double d1 = max_abs_diff(merged_weight(layer), as_dora);
      if (!(d1 < 1e-10)) {
        std::snprintf(fmt_buf, sizeof fmt_buf,
                      "row-collapse diff %.3e at trial %d", d1, i);
        detail = fmt_buf;
        return false;
      }
      for (int c = 0; c < layer.m_col.len; ++c)
        layer.m_col[c] = oracle::col_norm(combined, c);
      const double d2 = max_abs_diff(merged_weight(layer), combined);
      if (!(d2 < 1e-10)) {
        std::snprintf(fmt_buf, sizeof fmt_buf,
                      "full-collapse diff %.3e at trial %d", d2, i);
        detail = fmt_buf;
        return false;
      }
    }
    return true;
  });

  // 5 — uniform row-magnitude rescaling cancels out of the nested merge.
  criterion(5, "row-magnitude scale invariance of the nested merge",
            [&](std::string& detail) {
    for (int i = 0; i < 10; ++i) {
      AdaptedLinear layer = random_layer(Method::bora, 9, 7, 2, 6000 + i);
      perturb(layer, 6100 + i);
      const Matrix base = merged_weight(layer);
      for (const double c : {0.1, 1.0, 10.0}) {
        AdaptedLinear scaled = layer;
        for (int r = 0; r < scaled.m_row.len; ++r) scaled.m_row[r] *= c;
        const double diff = max_abs_diff(merged_weight(scaled), base);
        if (!(diff < 1e-9)) {
          std::snprintf(fmt_buf, sizeof fmt_buf, "c=%.1f diff %.3e", c, diff);
          detail = fmt_buf;
          return false;
        }
      }
    }
    return true;
  });

  // 6 — analytic gradients agree with central differences for every method.
  criterion(6, "gradient checks pass for all methods within a minute",
            [&](std::string& detail) {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(7000, "acceptance.c6");
    const Matrix x = oracle::random_matrix(rng, 5, 6);
    const Matrix target = oracle::random_matrix(rng, 5, 8);
    for (Method method : kAllMethods) {
      AdaptedLinear layer = random_layer(method, 8, 6, 2, 7100);
      perturb(layer, 7200);
      GradCheckProblem problem = adapter_mse_problem(layer, x, target);
      const double err = grad_check(problem, 1e-5);
      if (!(err < 1e-4)) {
        std::snprintf(fmt_buf, sizeof fmt_buf, "%s max rel err %.3e",
                      method_name(method), err);
        detail = fmt_buf;
        return false;
      }
    }
    const double elapsed = seconds_since(start);
    if (elapsed >= 60.0) {
      detail = "took " + std::to_string(elapsed) + "s (limit 60s)";
      return false;
    }
    return true;
  });

  // 7 — the training-dynamics metrics equal their brute-force definitions.
  criterion(7, "magnitude/direction metrics match brute force and their bounds",
            [&](std::string& detail) {
    Rng rng(8000, "acceptance.c7");
    for (int i = 0; i < 50; ++i) {
      const int rows = 2 + rng.uniform_int(7);
      const int cols = 2 + rng.uniform_int(7);
      const Matrix w1 = oracle::random_matrix(rng, rows, cols);
      const Matrix w2 = oracle::random_matrix(rng, rows, cols);
      for (Dim d : {Dim::row, Dim::col}) {
        const double dm = delta_magnitude(w1, w2, d);
        const double dd = delta_direction(w1, w2, d);
        if (!(std::abs(dm - oracle::delta_m_loops(w1, w2, d)) < 1e-12) ||
            !(std::abs(dd - oracle::delta_d_loops(w1, w2, d)) < 1e-12)) {
          detail = "metric differs from brute force";
          return false;
        }
        if (!(dd >= 0.0 && dd <= 2.0)) {
          detail = "direction metric left [0, 2]";
          return false;
        }
        if (delta_magnitude(w1, w1, d) != 0.0 ||
            !(delta_direction(w1, w1, d) <= 1e-15)) {
          detail = "self metrics are not zero";
          return false;
        }
      }
      if (delta_magnitude(w1, w2, Dim::row) !=
              delta_magnitude(transposed(w1), transposed(w2), Dim::col) ||
          delta_direction(w1, w2, Dim::row) !=
              delta_direction(transposed(w1), transposed(w2), Dim::col)) {
        detail = "transpose duality broke";
        return false;
      }
    }
    return true;
  });

  // 8 — the layer forward equals both the merged matrix product and the
  // fully expanded scalar double sum.
  criterion(8, "forward pass agrees with merged-weight product and scalar loops",
            [&](std::string& detail) {
    Rng rng(9000, "acceptance.c8");
    for (Method method : kAllMethods) {
      AdaptedLinear layer = random_layer(method, 7, 5, 2, 9100);
      perturb(layer, 9200);
      const Matrix x = oracle::random_matrix(rng, 4, 5);
      Tape tape;
      const AdapterVars vars = attach(tape, layer);
      const Matrix y_tape =
          tape.value_matrix(adapter_forward(tape, vars, tape.matrix(x)));
      const Matrix y_plain = matmul(x, transposed(merged_weight(layer)));
      Matrix y_loops(4, 7);
      if (method == Method::bora) {
        y_loops = oracle::bora_forward(x, layer.w0, layer.a, layer.b,
                                       layer.config.scale(), layer.m_row.data,
                                       layer.m_col.data);
      } else if (method == Method::dora) {
        y_loops = oracle::dora_forward(x, layer.w0, layer.a, layer.b,
                                       layer.config.scale(), layer.m_col.data);
      } else {
        y_loops = oracle::matmul_loops(x, transposed(reference_merged(layer)));
      }
      if (!(max_abs_diff(y_tape, y_plain) < 1e-12) ||
          !(max_abs_diff(y_tape, y_loops) < 1e-12)) {
        detail = std::string("forward mismatch for ") + method_name(method);
        return false;
      }
    }
    return true;
  });

  // 9 — rerunning an experiment reproduces the weight archive byte for byte.
  criterion(9, "identical configs produce byte-identical weight archives",
            [&](std::string& detail) {
    const fs::path base = fs::temp_directory_path() / "bora_acceptance_c9";
    fs::remove_all(base);
    fs::create_directories(base);
    const std::string config_text = io::read_file(
        fs::path(BORA_CONFIG_DIR) / "example_train.json");
    io::write_file_atomic(base / "config.json", config_text);
    io::run_experiment(base / "config.json", base / "a");
    io::run_experiment(base / "config.json", base / "b");
    const bool same =
        io::read_file(base / "a" / "snapshots" / "weights.bin") ==
            io::read_file(base / "b" / "snapshots" / "weights.bin") &&
        io::read_file(base / "a" / "snapshots" / "manifest.json") ==
            io::read_file(base / "b" / "snapshots" / "manifest.json");
    if (!same) detail = "archives differ between reruns";
    fs::remove_all(base);
    return same;
  });

  // Shared pinned runs for the last two criteria.
  TrainResult lora_run, dora_run, bora_run;

  // 10 — every method solves the planted task by a wide margin.
  criterion(10, "10x eval-loss reduction on the planted low-rank task",
            [&](std::string& detail) {
    lora_run = train(pinned_run(Method::lora));
    dora_run = train(pinned_run(Method::dora));
    bora_run = train(pinned_run(Method::bora));
    const struct {
      const char* name;
      const TrainResult* result;
    } runs[] = {{"lora", &lora_run}, {"dora", &dora_run}, {"bora", &bora_run}};
    std::string report;
    for (const auto& r : runs) {
      const double initial = *r.result->report.curve.front().eval_loss;
      const double final_loss = r.result->report.final_eval_loss;
      const double factor = initial / final_loss;
      if (!(final_loss > 0.0) || !(factor >= 10.0)) {
        std::snprintf(fmt_buf, sizeof fmt_buf, "%s only reduced %.2fx", r.name,
                      factor);
        detail = fmt_buf;
        return false;
      }
      std::snprintf(fmt_buf, sizeof fmt_buf, "%s %.0fx ", r.name, factor);
      report += fmt_buf;
    }
    detail = report;
    return true;
  });

  // 11 — the nested method balances magnitude updates across dimensions
  // better than column-only scaling, and both ratios stay near their frozen
  // first-run values.
  criterion(11, "update-symmetry ordering and frozen baselines",
            [&](std::string& detail) {
    if (dora_run.snapshots.empty() || bora_run.snapshots.empty()) {
      detail = "pinned runs unavailable (criterion 10 failed earlier)";
      return false;
    }
    const double dora_ratio = run_symmetry_ratio(dora_run);
    const double bora_ratio = run_symmetry_ratio(bora_run);
    std::snprintf(fmt_buf, sizeof fmt_buf, "dora %.17g bora %.17g", dora_ratio,
                  bora_ratio);
    detail = fmt_buf;
    if (!(dora_ratio > bora_ratio)) return false;
    if (!(std::abs(bora_ratio - 1.0) < std::abs(dora_ratio - 1.0)))
      return false;
    if (std::abs(dora_ratio - kFrozenDoraRatio) > 0.2 * kFrozenDoraRatio)
      return false;
    if (std::abs(bora_ratio - kFrozenBoraRatio) > 0.2 * kFrozenBoraRatio)
      return false;
    return true;
  });

  std::printf("%d of 11 criteria failed\n", failures);
  return failures;
}
