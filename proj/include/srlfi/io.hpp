#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "srlfi/generator.hpp"
#include "srlfi/metrics.hpp"
#include "srlfi/simulators.hpp"

namespace srlfi {

// --- datasets ---------------------------------------------------------------

inline constexpr std::uint32_t kDatasetVersion = 1;

/// Header "SRLFI-DS", u32 version, model name, n, parameter dim, data dim,
/// seed, then the row-major theta block and y block (little-endian f64).
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Columns theta_0..theta_{p-1}, y_0..y_{d-1}.
void write_dataset_csv(std::ostream& out, const Dataset& data);

// --- checkpoints ------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingSummary {
  std::string method;
  std::string rule;  // scoring rule description, or "gan"
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  double final_train_loss = 0.0;
  double final_val_loss = 0.0;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  GeneratorNet generator;
  TrainingSummary summary;
  std::uint64_t config_hash = 0;
};

/// Header "SRLFI-CK", u32 version, u64 payload length, payload, CRC-32 of
/// the payload. Throws VersionError for other versions and FormatError for
/// truncation or a digest mismatch.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

// --- metric reports ---------------------------------------------------------

struct MetricRow {
  std::string method;
  std::string model;
  std::size_t n_train = 0;
  std::size_t m = 0;
  std::string metric;
  std::string component;  // component index, "mean", or "-" for run-level values
  double value = 0.0;
};

/// Long-format rows of one run: nrmse, r2 and calibration_error per
/// component and averaged, plus early_stop_epoch. Wall time is left out so
/// that reruns reproduce the file exactly.
std::vector<MetricRow> report_rows(const MetricsReport& report);

/// Columns method,model,n_train,m,metric,component,value.
void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows);
std::vector<MetricRow> read_metrics_csv(std::istream& in);

struct SummaryRow {
  std::string method;
  std::string model;
  std::size_t n_train = 0;
  std::size_t m = 0;
  std::string metric;
  std::string component;
  double mean = 0.0;
  double sd = 0.0;  // sample sd over runs, 0 for a single run
  std::size_t runs = 0;
};

/// Groups rows over runs (seeds) by everything except the value, sorted.
std::vector<SummaryRow> summarize(std::span<const std::vector<MetricRow>> runs);
void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows);
/// Plain-text table, one line per method x metric (averaged components).
void write_summary_table(std::ostream& out, std::span<const SummaryRow> rows);

/// Writes <dir>/report.csv (all runs, long format), <dir>/summary.csv and
/// <dir>/summary.txt.
std::vector<SummaryRow> emit_report(std::span<const std::vector<MetricRow>> runs, const std::filesystem::path& dir);

/// Shortest round-trip decimal form of a double ("nan", "inf" for specials).
std::string format_double(double v);

}  // namespace srlfi
