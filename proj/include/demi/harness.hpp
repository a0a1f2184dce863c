#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "demi/estimators/training.hpp"

// Command layer behind the demi CLI. Every cmd_* returns a process exit code
// and writes human-readable output to `out`, diagnostics to `err`.
namespace demi::harness {

inline constexpr int kFormatVersion = 1;

/// Exit codes of the CLI.
enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kNumericalAbort = 3,
  kCheckFailed = 4,
};

/// Directory used for outputs given without a directory; $DEMI_OUT_DIR or
/// the working directory.
std::string default_output_dir();
/// `path` unchanged when it has a directory part, else joined onto
/// default_output_dir().
std::string resolve_output(const std::string& path);

/// One trained cell. Round-trips through JSON.
struct RunConfig {
  EstimatorKind estimator = EstimatorKind::nce;
  CriticMode critic = CriticMode::learned;
  /// Where the IS and BO terms take their frozen psi from.
  PsiStarMode psi_star = PsiStarMode::frozen_trained;
  std::string world;  // path of the world JSON
  double target_mi = 0.0;
  std::size_t dims = 0;
  std::size_t k = 128;
  std::size_t batch = 128;
  std::size_t steps = 20000;
  double lr = 5e-4;
  std::uint64_t seed = 0;
  std::size_t eval_interval = 500;
  std::size_t eval_batches = 200;
  std::size_t eval_rows = 0;
  bool shared_encoder = true;
  std::string out;

  /// Throws ConfigError: K >= 1, steps >= 1, lr > 0 plus TrainConfig rules.
  void validate() const;
  TrainConfig train_config() const;

  std::string to_json() const;
  static RunConfig from_json(const std::string& text);

  bool operator==(const RunConfig&) const = default;
};

/// One CSV line. Column order is fixed by csv_header().
struct CsvRow {
  std::string estimator;
  std::string critic_mode;
  double target_mi = 0.0;
  std::size_t dims = 0;
  std::size_t k = 0;
  std::size_t step = 0;
  double bound_nats = 0.0;
  double stderr_nats = 0.0;
  double cap_nats = 0.0;
  std::uint64_t seed = 0;
  double wall_ms = 0.0;

  bool operator==(const CsvRow&) const = default;
};

const std::vector<std::string>& csv_columns();
std::string csv_header();
/// Doubles in shortest round-trip form.
std::string to_csv_line(const CsvRow& row);
/// Throws ConfigError with the line number on a malformed document. An empty
/// document or a bare header yields no rows.
std::vector<CsvRow> parse_csv(const std::string& text);
std::vector<CsvRow> read_csv(const std::string& path);
/// Appends rows, writing the header first when the file is new or empty.
/// Throws ConfigError if an existing file has a different header.
void append_csv(const std::string& path, const std::vector<CsvRow>& rows);
void write_csv(const std::string& path, const std::vector<CsvRow>& rows);

/// CSV rows of one run's learning curve. wall_ms is copied only when
/// `with_wall_time`, so that by default every cell is a function of
/// (config, seed).
std::vector<CsvRow> curve_rows(const RunConfig& config, const TrainResult& result,
                               bool with_wall_time);

/// Ordering of the merged sweep CSV: (estimator, target_mi, K, seed).
bool sweep_order(const CsvRow& a, const CsvRow& b);

struct CellOutcome {
  RunConfig config;
  std::optional<CsvRow> row;  // final estimate; empty on failure
  std::vector<CurvePoint> curve;
  double wall_ms = 0.0;
  std::string error;
  int exit_code = kOk;
};

struct SweepResult {
  std::vector<CellOutcome> cells;  // in sweep_order of their rows
  std::size_t failures() const;
  /// Final-estimate rows of the completed cells, sorted.
  std::vector<CsvRow> rows() const;
};

/// Runs every config on up to `jobs` worker threads. Results do not depend
/// on `jobs`. Throws ConfigError on duplicate (config, seed) cells.
SweepResult run_sweep(const std::vector<RunConfig>& cells, std::size_t jobs);

/// A cap violation found by the report validator.
struct CapViolation {
  std::size_t line = 0;  // 1-based data line
  std::string reason;
};

/// Rows whose bound exceeds cap_nats + 1e-9 or whose cap_nats disagrees
/// with the estimator's known cap.
std::vector<CapViolation> check_caps(const std::vector<CsvRow>& rows);

/// Markdown tables, one per target MI: rows K, one column per estimator
/// (mean +- stderr over seeds of the last step of each run), then the caps
/// log K, 2 log(K/2) and 2 log K.
std::string render_report(const std::vector<CsvRow>& rows);

struct MakeWorldOptions {
  double mi = 5.0;
  std::size_t dims = 20;
  std::uint64_t seed = 0;
  std::string out = "world.json";
};
int cmd_make_world(const MakeWorldOptions& opts, std::ostream& out, std::ostream& err);

struct TrainOptions {
  RunConfig run;
  /// Checkpoint path; empty means `<csv>.ckpt.json`.
  std::string checkpoint;
  bool wall_time = false;
};
int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream& err);

struct SweepOptions {
  std::vector<std::string> worlds;
  std::vector<std::string> estimators;
  std::vector<std::size_t> ks;
  std::vector<std::uint64_t> seeds;
  std::size_t jobs = 1;
  std::string out = "sweep.csv";
  bool wall_time = false;
  /// Settings shared by every cell; estimator, world, K and seed are
  /// overwritten per cell.
  RunConfig base;
};
/// Expands the grid in sweep order.
std::vector<RunConfig> expand_grid(const SweepOptions& opts);
int cmd_sweep(const SweepOptions& opts, std::ostream& out, std::ostream& err);

struct OracleOptions {
  std::string suite = "all";
  std::uint64_t seed = 0;
  std::string out;  // JSON lines; empty means `out` stream only
};
int cmd_oracle(const OracleOptions& opts, std::ostream& out, std::ostream& err);

struct ReportOptions {
  std::string csv;
  std::string out;  // empty means the `out` stream
};
int cmd_report(const ReportOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace demi::harness
