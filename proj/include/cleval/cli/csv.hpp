#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cleval::cli {

/// Plain comma-separated table; fields never contain commas or quotes.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Errors name the 1-based line of the offending row.
CsvTable parse_csv(std::string_view text);
std::string write_csv(const CsvTable& table);

/// 17 significant digits, so parse(format(x)) == x.
std::string format_double(double v);
/// Absent values are empty fields.
std::string format_optional(std::optional<double> v);

struct EvalTraceRow {
  std::uint64_t run_seed = 0;
  long t = 0;
  int eval_task = 1;
  std::size_t n_samples = 0;
  double accuracy = 0.0;
};

struct MetricsRow {
  std::uint64_t run_seed = 0;
  long t = 0;
  int current_task = 1;
  double acc_current = 0.0;
  std::optional<double> min_acc;
  double wc_acc = 0.0;
  std::vector<double> wf;  // per window size
  std::vector<double> wp;
};

struct ProbeCsvRow {
  std::uint64_t run_seed = 0;
  long t = 0;
  double loss_plasticity = 0.0;
  double loss_stability = 0.0;
  double grad_norm_plasticity = 0.0;
  double grad_norm_stability = 0.0;
};

struct FinalRow {
  std::string run_seed;  // a seed, or "mean" / "sd"
  std::optional<double> acc;
  std::optional<double> forg;
  std::optional<double> min_acc;
  std::optional<double> wc_acc;
  std::vector<std::optional<double>> wf;
  std::vector<std::optional<double>> wp;
};

std::string eval_trace_csv(const std::vector<EvalTraceRow>& rows);
std::vector<EvalTraceRow> parse_eval_trace(std::string_view text);

std::string metrics_csv(const std::vector<MetricsRow>& rows, const std::vector<int>& windows);
/// Window sizes are recovered from the wf_<w> columns.
std::vector<MetricsRow> parse_metrics(std::string_view text, std::vector<int>* windows = nullptr);

std::string probes_csv(const std::vector<ProbeCsvRow>& rows);
std::vector<ProbeCsvRow> parse_probes(std::string_view text);

std::string final_csv(const std::vector<FinalRow>& rows, const std::vector<int>& windows);
std::vector<FinalRow> parse_final(std::string_view text, std::vector<int>* windows = nullptr);

std::string read_text(const std::string& path);
void write_text(const std::string& path, std::string_view text);

}  // namespace cleval::cli
