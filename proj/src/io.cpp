#include "bora/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iostream>
#include <tuple>

#include "bora/errors.hpp"
#include "bora/rng.hpp"

namespace bora::io {

using nlohmann::json;

namespace {

bool log_enabled() {
  const char* v = std::getenv("BORA_LOG");
  return v == nullptr || std::string_view(v) != "quiet";
}

void log_line(const std::string& s) {
  if (log_enabled()) std::cerr << s << "\n";
}

[[noreturn]] void config_fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path, path.empty() ? msg : path + ": " + msg);
}

json parse_json_or_fail(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    config_fail(what, std::string("invalid JSON: ") + e.what());
  }
}

void check_fields(const json& j, const std::string& prefix,
                  std::initializer_list<const char*> known) {
  if (!j.is_object()) config_fail(prefix, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const bool ok = std::any_of(known.begin(), known.end(),
                                [&](const char* k) { return it.key() == k; });
    if (!ok)
      config_fail(prefix.empty() ? it.key() : prefix + "." + it.key(),
                  "unknown field");
  }
}

template <typename T>
T get_field(const json& j, const std::string& prefix, const char* name) {
  const std::string path = prefix.empty() ? name : prefix + "." + name;
  if (!j.contains(name)) config_fail(path, "missing required field");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception& e) {
    config_fail(path, std::string("wrong type: ") + e.what());
  }
}

template <typename T>
T get_field_or(const json& j, const std::string& prefix, const char* name,
               T fallback) {
  if (!j.contains(name)) return fallback;
  return get_field<T>(j, prefix, name);
}

ZeroNormPolicy parse_norm_policy(const std::string& name) {
  if (name == "strict") return ZeroNormPolicy::strict;
  if (name == "clamp") return ZeroNormPolicy::clamp;
  throw ConfigError("norm_policy", "unknown norm policy '" + name +
                                       "' (expected strict|clamp)");
}

std::string format_sig17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string now_utc_iso() {
  const std::time_t t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void append_f64_le(std::string& out, double d) {
  std::uint64_t u = 0;
  std::memcpy(&u, &d, 8);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

double read_f64_le(const char* p) {
  std::uint64_t u = 0;
  for (int i = 7; i >= 0; --i)
    u = (u << 8) | static_cast<std::uint8_t>(p[static_cast<std::size_t>(i)]);
  double d = 0;
  std::memcpy(&d, &u, 8);
  return d;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read file: " + path.string());
  std::string out((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  return out;
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content) {
  if (!path.parent_path().empty())
    std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_snapshot_archive(const std::filesystem::path& dir,
                            std::span<const WeightSnapshot> snaps) {
  if (snaps.empty())
    throw ContractError("write_snapshot_archive: no snapshots to write");
  std::vector<const WeightSnapshot*> order;
  order.reserve(snaps.size());
  for (const WeightSnapshot& s : snaps) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(),
                   [](const WeightSnapshot* a, const WeightSnapshot* b) {
                     return std::tie(a->layer_id, a->matrix_label, a->timestep) <
                            std::tie(b->layer_id, b->matrix_label, b->timestep);
                   });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (order[i]->layer_id == order[i - 1]->layer_id &&
        order[i]->matrix_label == order[i - 1]->matrix_label &&
        order[i]->timestep == order[i - 1]->timestep)
      throw ContractError("write_snapshot_archive: duplicate snapshot " +
                          order[i]->layer_id + "/" + order[i]->matrix_label +
                          " at timestep " + std::to_string(order[i]->timestep));
  }
  json entries = json::array();
  std::string payload;
  for (const WeightSnapshot* s : order) {
    entries.push_back({{"layer_id", s->layer_id},
                       {"matrix_label", s->matrix_label},
                       {"timestep", s->timestep},
                       {"rows", s->merged.rows},
                       {"cols", s->merged.cols},
                       {"offset", payload.size()}});
    for (double v : s->merged.data) append_f64_le(payload, v);
  }
  const json manifest = {{"version", 1},
                         {"dtype", "f64"},
                         {"byte_order", "little"},
                         {"entries", entries}};
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "weights.bin", payload);
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<WeightSnapshot> read_snapshot_archive(
    const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.json") ||
      !std::filesystem::exists(dir / "weights.bin"))
    throw ArchiveMissingError("snapshot archive not found at " + dir.string());
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::parse_error& e) {
    throw ArchiveError("archive manifest is not valid JSON: " +
                       std::string(e.what()));
  }
  const std::string payload = read_file(dir / "weights.bin");
  std::vector<WeightSnapshot> snaps;
  try {
    if (manifest.at("version").get<int>() != 1)
      throw ArchiveError("unsupported archive version");
    if (manifest.at("dtype").get<std::string>() != "f64")
      throw ArchiveError("unsupported archive dtype");
    if (manifest.at("byte_order").get<std::string>() != "little")
      throw ArchiveError("unsupported archive byte order");
    for (const json& e : manifest.at("entries")) {
      WeightSnapshot s;
      s.layer_id = e.at("layer_id").get<std::string>();
      s.matrix_label = e.at("matrix_label").get<std::string>();
      s.timestep = e.at("timestep").get<long>();
      const int rows = e.at("rows").get<int>();
      const int cols = e.at("cols").get<int>();
      const std::size_t offset = e.at("offset").get<std::size_t>();
      if (rows < 1 || cols < 1)
        throw ArchiveError("archive entry has non-positive shape");
      const std::size_t bytes =
          static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * 8;
      if (offset + bytes > payload.size())
        throw ArchiveError(
            "archive entry overruns weights.bin: offset " +
            std::to_string(offset) + " + " + std::to_string(bytes) +
            " bytes > " + std::to_string(payload.size()));
      s.merged = Matrix(rows, cols);
      for (std::size_t i = 0; i < s.merged.data.size(); ++i)
        s.merged.data[i] = read_f64_le(payload.data() + offset + 8 * i);
      snaps.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ArchiveError("malformed archive manifest: " + std::string(e.what()));
  }
  for (std::size_t i = 1; i < snaps.size(); ++i) {
    if (std::tie(snaps[i].layer_id, snaps[i].matrix_label, snaps[i].timestep) <=
        std::tie(snaps[i - 1].layer_id, snaps[i - 1].matrix_label,
                 snaps[i - 1].timestep))
      throw ArchiveError(
          "archive entries are not sorted by (layer_id, matrix_label, "
          "timestep)");
  }
  return snaps;
}

TrainConfig parse_train_config(const std::string& text) {
  const json j = parse_json_or_fail(text, "config");
  check_fields(j, "", {"adapter", "task", "steps", "batch_size", "base_lr",
                       "warmup_ratio", "weight_decay", "snapshot_every",
                       "seed"});
  TrainConfig config;
  {
    if (!j.contains("adapter")) config_fail("adapter", "missing required field");
    const json& a = j.at("adapter");
    check_fields(a, "adapter",
                 {"method", "rank", "alpha", "scaling", "norm_mode", "floor",
                  "norm_policy", "seed"});
    config.adapter.method =
        parse_method(get_field<std::string>(a, "adapter", "method"));
    config.adapter.rank = get_field<int>(a, "adapter", "rank");
    config.adapter.alpha = get_field<double>(a, "adapter", "alpha");
    config.adapter.scaling = parse_scaling(get_field_or<std::string>(
        a, "adapter", "scaling", "standard"));
    config.adapter.norm_mode = parse_norm_mode(
        get_field_or<std::string>(a, "adapter", "norm_mode", "exact"));
    config.adapter.floor =
        get_field_or<double>(a, "adapter", "floor", kNormFloor);
    config.adapter.norm_policy = parse_norm_policy(
        get_field_or<std::string>(a, "adapter", "norm_policy", "strict"));
    config.adapter.seed =
        get_field_or<std::uint64_t>(a, "adapter", "seed", 0);
  }
  {
    if (!j.contains("task")) config_fail("task", "missing required field");
    const json& t = j.at("task");
    check_fields(t, "task",
                 {"kind", "input_dim", "output_dim", "n_train", "n_eval",
                  "planted_rank", "noise_std", "seed"});
    config.task.kind =
        parse_task_kind(get_field<std::string>(t, "task", "kind"));
    config.task.input_dim = get_field<int>(t, "task", "input_dim");
    config.task.output_dim = get_field<int>(t, "task", "output_dim");
    config.task.n_train = get_field<int>(t, "task", "n_train");
    config.task.n_eval = get_field<int>(t, "task", "n_eval");
    config.task.planted_rank = get_field_or<int>(t, "task", "planted_rank", 0);
    config.task.noise_std = get_field_or<double>(t, "task", "noise_std", 0.0);
    config.task.seed = get_field_or<std::uint64_t>(t, "task", "seed", 0);
  }
  config.steps = get_field<long>(j, "", "steps");
  config.batch_size = get_field<int>(j, "", "batch_size");
  config.base_lr = get_field<double>(j, "", "base_lr");
  config.warmup_ratio = get_field_or<double>(j, "", "warmup_ratio", 0.0);
  config.weight_decay = get_field_or<double>(j, "", "weight_decay", 0.0);
  config.snapshot_every = get_field<long>(j, "", "snapshot_every");
  config.seed = get_field_or<std::uint64_t>(j, "", "seed", 0);
  validate_train_config(config);
  return config;
}

ArchSpec parse_arch_spec(const std::string& text) {
  const json j = parse_json_or_fail(text, "arch");
  check_fields(j, "", {"name", "n_layers", "base_param_total", "matrices"});
  ArchSpec arch;
  arch.name = get_field<std::string>(j, "", "name");
  arch.n_layers = get_field<int>(j, "", "n_layers");
  arch.base_param_total = get_field<std::int64_t>(j, "", "base_param_total");
  if (arch.n_layers < 1) config_fail("n_layers", "must be >= 1");
  if (!j.contains("matrices") || !j.at("matrices").is_array() ||
      j.at("matrices").empty())
    config_fail("matrices", "must be a non-empty array");
  std::int64_t listed = 0;
  for (std::size_t i = 0; i < j.at("matrices").size(); ++i) {
    const json& m = j.at("matrices")[i];
    const std::string prefix = "matrices[" + std::to_string(i) + "]";
    check_fields(m, prefix, {"label", "out", "in"});
    ArchMatrix am;
    am.label = get_field<std::string>(m, prefix, "label");
    am.out = get_field<int>(m, prefix, "out");
    am.in = get_field<int>(m, prefix, "in");
    if (am.out < 1 || am.in < 1) config_fail(prefix, "dimensions must be >= 1");
    for (const ArchMatrix& prev : arch.matrices)
      if (prev.label == am.label)
        config_fail(prefix + ".label", "duplicate label '" + am.label + "'");
    listed += static_cast<std::int64_t>(am.out) * am.in;
    arch.matrices.push_back(std::move(am));
  }
  if (arch.base_param_total <= listed * arch.n_layers)
    config_fail("base_param_total",
                "must exceed the total size of the listed matrices (" +
                    std::to_string(listed * arch.n_layers) + ")");
  return arch;
}

std::string train_report_json(const TrainReport& report) {
  json curve = json::array();
  for (const CurvePoint& p : report.curve) {
    json row = {{"step", p.step}, {"train_loss", p.train_loss}};
    if (p.eval_loss) row["eval_loss"] = *p.eval_loss;
    curve.push_back(std::move(row));
  }
  json j = {{"final_eval_loss", report.final_eval_loss},
            {"trainable_params", report.trainable_count},
            {"wall_seconds", report.wall_seconds},
            {"curve", std::move(curve)}};
  if (report.final_accuracy) j["final_accuracy"] = *report.final_accuracy;
  return j.dump(2) + "\n";
}

TrainReport parse_train_report(const std::string& text) {
  const json j = parse_json_or_fail(text, "report");
  TrainReport report;
  report.final_eval_loss = get_field<double>(j, "report", "final_eval_loss");
  report.trainable_count =
      get_field<std::int64_t>(j, "report", "trainable_params");
  report.wall_seconds = get_field_or<double>(j, "report", "wall_seconds", 0.0);
  if (j.contains("final_accuracy"))
    report.final_accuracy = j.at("final_accuracy").get<double>();
  if (j.contains("curve")) {
    for (const json& row : j.at("curve")) {
      CurvePoint p;
      p.step = row.at("step").get<long>();
      p.train_loss = row.at("train_loss").get<double>();
      if (row.contains("eval_loss"))
        p.eval_loss = row.at("eval_loss").get<double>();
      report.curve.push_back(p);
    }
  }
  return report;
}

std::string run_manifest_json(const RunManifest& manifest) {
  const json j = {
      {"run_id", manifest.run_id},
      {"code_version", manifest.code_version},
      {"started_at", manifest.started_at},
      {"finished_at", manifest.finished_at},
      {"config_echo", manifest.config_echo},
      {"artifacts",
       {{"report", manifest.report_path}, {"archive", manifest.archive_path}}},
      {"metadata",
       {{"scale", "desk"},
        {"cadence_units", "optimizer_steps"},
        {"a_init", "uniform(+-1/sqrt(rank))"},
        {"b_init", "zeros"},
        {"batch_order", "full-shuffle-per-epoch"}}}};
  return j.dump(2) + "\n";
}

RunManifest parse_run_manifest(const std::string& text) {
  const json j = parse_json_or_fail(text, "manifest");
  RunManifest m;
  m.run_id = get_field<std::string>(j, "manifest", "run_id");
  m.code_version = get_field<std::string>(j, "manifest", "code_version");
  m.started_at = get_field_or<std::string>(j, "manifest", "started_at", "");
  m.finished_at = get_field_or<std::string>(j, "manifest", "finished_at", "");
  m.config_echo = get_field<std::string>(j, "manifest", "config_echo");
  if (j.contains("artifacts")) {
    m.report_path = get_field_or<std::string>(j.at("artifacts"),
                                              "manifest.artifacts", "report",
                                              "report.json");
    m.archive_path = get_field_or<std::string>(j.at("artifacts"),
                                               "manifest.artifacts", "archive",
                                               "snapshots");
  } else {
    m.report_path = "report.json";
    m.archive_path = "snapshots";
  }
  return m;
}

std::string compute_run_id(std::string_view config_bytes,
                           std::string_view code_version) {
  std::uint64_t h = fnv1a64(config_bytes);
  const std::uint64_t v = fnv1a64(code_version);
  h ^= v + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

void run_experiment(const std::filesystem::path& config_path,
                    const std::filesystem::path& out_dir) {
  std::string config_text;
  try {
    config_text = read_file(config_path);
  } catch (const Error& e) {
    throw ConfigError("config", e.what());
  }
  const TrainConfig config = parse_train_config(config_text);
  RunManifest manifest;
  manifest.run_id = compute_run_id(config_text, kCodeVersion);
  manifest.code_version = kCodeVersion;
  manifest.config_echo = config_text;
  manifest.report_path = "report.json";
  manifest.archive_path = "snapshots";
  manifest.started_at = now_utc_iso();
  log_line("run " + manifest.run_id + ": training " +
           method_name(config.adapter.method) + " for " +
           std::to_string(config.steps) + " steps");
  const TrainResult result = train(config);
  manifest.finished_at = now_utc_iso();
  std::filesystem::create_directories(out_dir);
  write_snapshot_archive(out_dir / manifest.archive_path, result.snapshots);
  write_file_atomic(out_dir / manifest.report_path,
                    train_report_json(result.report));
  write_file_atomic(out_dir / "manifest.json", run_manifest_json(manifest));
  log_line("run " + manifest.run_id + ": final eval loss " +
           format_sig17(result.report.final_eval_loss) + ", artifacts in " +
           out_dir.string());
}

namespace {

std::vector<Dim> parse_dims(const std::string& dim) {
  if (dim == "row") return {Dim::row};
  if (dim == "col") return {Dim::col};
  if (dim == "both") return {Dim::row, Dim::col};
  throw ConfigError("dim", "unknown dim '" + dim + "' (expected row|col|both)");
}

// Snapshots of one run grouped by (layer_id, matrix_label), in archive order.
std::vector<std::vector<WeightSnapshot>> group_snapshots(
    std::vector<WeightSnapshot> snaps) {
  std::vector<std::vector<WeightSnapshot>> groups;
  for (WeightSnapshot& s : snaps) {
    if (groups.empty() || groups.back().front().layer_id != s.layer_id ||
        groups.back().front().matrix_label != s.matrix_label)
      groups.emplace_back();
    groups.back().push_back(std::move(s));
  }
  return groups;
}

struct LoadedRun {
  std::filesystem::path dir;
  RunManifest manifest;
  TrainReport report;
  TrainConfig config;
  std::vector<std::vector<WeightSnapshot>> groups;
};

LoadedRun load_run(const std::filesystem::path& run_dir) {
  if (!std::filesystem::exists(run_dir / "manifest.json"))
    throw ArchiveMissingError("run manifest not found at " +
                              (run_dir / "manifest.json").string());
  LoadedRun run;
  run.dir = run_dir;
  run.manifest = parse_run_manifest(read_file(run_dir / "manifest.json"));
  run.report =
      parse_train_report(read_file(run_dir / run.manifest.report_path));
  run.config = parse_train_config(run.manifest.config_echo);
  run.groups =
      group_snapshots(read_snapshot_archive(run_dir / run.manifest.archive_path));
  return run;
}

std::vector<long> snapshot_grid(const LoadedRun& run) {
  std::vector<long> grid;
  for (const WeightSnapshot& s : run.groups.front()) grid.push_back(s.timestep);
  return grid;
}

}  // namespace

void export_metrics(const std::filesystem::path& run_dir, SeriesMode mode,
                    const std::string& dim,
                    const std::filesystem::path& csv_path) {
  const std::vector<Dim> dims = parse_dims(dim);
  const LoadedRun run = load_run(run_dir);
  std::string csv = "run_id,layer,matrix,timestep,dim,mode,delta_m,delta_d\n";
  for (const std::vector<WeightSnapshot>& group : run.groups) {
    for (Dim d : dims) {
      const std::string head = run.manifest.run_id + "," +
                               group.front().layer_id + "," +
                               group.front().matrix_label + ",";
      const std::string tail = std::string(",") + to_string(d) + "," +
                               to_string(mode) + ",";
      if (mode == SeriesMode::consecutive) {
        const DynamicsSeries series = consecutive_series(group, d);
        for (const SeriesPoint& p : series.points)
          csv += head + std::to_string(p.timestep) + tail +
                 format_sig17(p.delta_m) + "," + format_sig17(p.delta_d) + "\n";
      } else {
        const TotalChange total = total_change(group, d);
        csv += head + std::to_string(group.back().timestep) + tail +
               format_sig17(total.delta_m) + "," + format_sig17(total.delta_d) +
               "\n";
      }
    }
  }
  write_file_atomic(csv_path, csv);
  log_line("wrote " + csv_path.string());
}

std::vector<ParamsRow> params_table(const ArchSpec& arch,
                                    std::span<const Method> methods,
                                    std::span<const int> ranks,
                                    std::span<const std::string> targets) {
  std::vector<ParamsRow> rows;
  for (Method m : methods) {
    for (int r : ranks) {
      const ParamCount c = count_trainable(arch, m, r, targets);
      rows.push_back({m, r, c.count, c.percent});
    }
  }
  return rows;
}

std::string params_table_json(const ArchSpec& arch,
                              std::span<const ParamsRow> rows) {
  json out = {{"arch", arch.name},
              {"base_param_total", arch.base_param_total},
              {"rows", json::array()}};
  for (const ParamsRow& r : rows)
    out["rows"].push_back({{"method", method_name(r.method)},
                           {"rank", r.rank},
                           {"trainable", r.count},
                           {"percent", r.percent}});
  return out.dump(2) + "\n";
}

std::string params_table_csv(std::span<const ParamsRow> rows) {
  std::string csv = "method,rank,trainable,percent\n";
  for (const ParamsRow& r : rows) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", r.percent);
    csv += std::string(method_name(r.method)) + "," + std::to_string(r.rank) +
           "," + std::to_string(r.count) + "," + buf + "\n";
  }
  return csv;
}

void compare_runs(std::span<const std::filesystem::path> run_dirs,
                  const std::filesystem::path& report_path) {
  if (run_dirs.size() < 2)
    throw ContractError("compare_runs: need at least 2 run directories");
  std::vector<LoadedRun> runs;
  for (const std::filesystem::path& dir : run_dirs) runs.push_back(load_run(dir));
  const std::vector<long> grid = snapshot_grid(runs.front());
  for (const LoadedRun& run : runs) {
    if (snapshot_grid(run) != grid)
      throw GridMismatchError(
          "compare_runs: snapshot grids differ between " +
          runs.front().dir.string() + " and " + run.dir.string());
  }
  json out = {{"runs", json::array()}};
  struct Rated {
    std::string run_id;
    double ratio;
  };
  std::vector<Rated> rated;
  for (const LoadedRun& run : runs) {
    std::vector<DynamicsSeries> row_series, col_series;
    double row_dm = 0, row_dd = 0, col_dm = 0, col_dd = 0;
    for (const std::vector<WeightSnapshot>& group : run.groups) {
      row_series.push_back(consecutive_series(group, Dim::row));
      col_series.push_back(consecutive_series(group, Dim::col));
      const TotalChange tr = total_change(group, Dim::row);
      const TotalChange tc = total_change(group, Dim::col);
      row_dm += tr.delta_m;
      row_dd += tr.delta_d;
      col_dm += tc.delta_m;
      col_dd += tc.delta_d;
    }
    const double ng = static_cast<double>(run.groups.size());
    const double ratio = symmetry_ratio(aggregate_layers(row_series),
                                        aggregate_layers(col_series));
    rated.push_back({run.manifest.run_id, ratio});
    out["runs"].push_back(
        {{"run_id", run.manifest.run_id},
         {"dir", run.dir.string()},
         {"method", method_name(run.config.adapter.method)},
         {"rank", run.config.adapter.rank},
         {"final_eval_loss", run.report.final_eval_loss},
         {"trainable_params", run.report.trainable_count},
         {"total_row", {{"delta_m", row_dm / ng}, {"delta_d", row_dd / ng}}},
         {"total_col", {{"delta_m", col_dm / ng}, {"delta_d", col_dd / ng}}},
         {"symmetry_ratio", ratio}});
  }
  std::vector<std::size_t> order(rated.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rated[a].ratio > rated[b].ratio;
  });
  out["ordering_by_symmetry_ratio"] = json::array();
  for (std::size_t i : order)
    out["ordering_by_symmetry_ratio"].push_back(rated[i].run_id);
  out["pairs"] = json::array();
  for (std::size_t i = 0; i < rated.size(); ++i) {
    for (std::size_t j = i + 1; j < rated.size(); ++j) {
      out["pairs"].push_back({{"a", rated[i].run_id},
                              {"b", rated[j].run_id},
                              {"ratio_a", rated[i].ratio},
                              {"ratio_b", rated[j].ratio},
                              {"a_exceeds_b", rated[i].ratio > rated[j].ratio}});
    }
  }
  write_file_atomic(report_path, out.dump(2) + "\n");
  log_line("wrote " + report_path.string());
}

int cli_exit_code(const std::exception& error) {
  if (dynamic_cast<const ConfigError*>(&error)) return 2;
  if (dynamic_cast<const DivergenceError*>(&error)) return 3;
  if (dynamic_cast<const ArchiveMissingError*>(&error)) return 4;
  if (dynamic_cast<const GridMismatchError*>(&error)) return 5;
  return 1;
}

}  // namespace bora::io
