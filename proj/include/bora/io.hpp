#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bora/adapters.hpp"
#include "bora/dynamics.hpp"
#include "bora/trainer.hpp"

namespace bora::io {

inline constexpr const char* kCodeVersion = "0.1.0";

// ----- files -----
std::string read_file(const std::filesystem::path& path);
// Writes to a temporary sibling and renames, so readers never observe a
// partial file.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content);

// ----- snapshot archive -----
// Layout: <dir>/manifest.json (version, dtype "f64", byte_order "little",
// entry table) plus <dir>/weights.bin holding each snapshot's row-major f64
// little-endian payload at its manifest offset. Entries are sorted by
// (layer_id, matrix_label, timestep).
void write_snapshot_archive(const std::filesystem::path& dir,
                            std::span<const WeightSnapshot> snaps);
std::vector<WeightSnapshot> read_snapshot_archive(
    const std::filesystem::path& dir);

// ----- configuration -----
// Strict parsing: unknown fields are rejected, errors carry the field path.
TrainConfig parse_train_config(const std::string& text);
ArchSpec parse_arch_spec(const std::string& text);

// ----- reports and manifests -----
std::string train_report_json(const TrainReport& report);
TrainReport parse_train_report(const std::string& text);

struct RunManifest {
  std::string run_id;
  std::string code_version;
  std::string started_at;
  std::string finished_at;
  std::string config_echo;  // byte-identical copy of the input config
  std::string report_path;  // relative to the run directory
  std::string archive_path;
};
std::string run_manifest_json(const RunManifest& manifest);
RunManifest parse_run_manifest(const std::string& text);

std::string compute_run_id(std::string_view config_bytes,
                           std::string_view code_version);

// ----- orchestration -----
// Parses and validates the config, trains, and writes manifest.json,
// report.json, and snapshots/ under out_dir.
void run_experiment(const std::filesystem::path& config_path,
                    const std::filesystem::path& out_dir);

// Recomputes series from a run's archive and writes one CSV row per series
// point: run_id,layer,matrix,timestep,dim,mode,delta_m,delta_d with decimal
// values at 17 significant digits. dim is "row", "col", or "both".
void export_metrics(const std::filesystem::path& run_dir, SeriesMode mode,
                    const std::string& dim,
                    const std::filesystem::path& csv_path);

// ----- parameter-count tables -----
struct ParamsRow {
  Method method;
  int rank = 0;
  std::int64_t count = 0;
  double percent = 0.0;
};
std::vector<ParamsRow> params_table(const ArchSpec& arch,
                                    std::span<const Method> methods,
                                    std::span<const int> ranks,
                                    std::span<const std::string> targets);
std::string params_table_json(const ArchSpec& arch,
                              std::span<const ParamsRow> rows);
std::string params_table_csv(std::span<const ParamsRow> rows);

// ----- run comparison -----
// Loads >= 2 runs, checks their snapshot grids agree, and writes a JSON
// report with per-run final losses, total-change metrics, symmetry ratios,
// and the pairwise ratio ordering.
void compare_runs(std::span<const std::filesystem::path> run_dirs,
                  const std::filesystem::path& report_path);

// Exit code the CLI uses for an error: 2 invalid config, 3 divergence,
// 4 missing archive, 5 incompatible snapshot grids, 1 anything else.
int cli_exit_code(const std::exception& error);

}  // namespace bora::io
