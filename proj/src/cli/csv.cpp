#include "cleval/cli/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cleval/error.hpp"

namespace cleval::cli {

namespace {

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw Error(ErrorCode::parse, "line " + std::to_string(line) + ": " + msg);
}

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      return out;
    }
    out.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

double to_double(const std::string& field, std::size_t line, std::string_view column) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  const auto [p, ec] = std::from_chars(field.data(), end, v);
  if (field.empty() || ec != std::errc() || p != end) {
    fail(line, "column " + std::string(column) + ": '" + field + "' is not a number");
  }
  return v;
}

std::optional<double> to_optional(const std::string& field, std::size_t line, std::string_view column) {
  if (field.empty()) {
    return std::nullopt;
  }
  return to_double(field, line, column);
}

template <typename T>
T to_integer(const std::string& field, std::size_t line, std::string_view column) {
  T v{};
  const auto* end = field.data() + field.size();
  const auto [p, ec] = std::from_chars(field.data(), end, v);
  if (field.empty() || ec != std::errc() || p != end) {
    fail(line, "column " + std::string(column) + ": '" + field + "' is not an integer");
  }
  return v;
}

void expect_header(const CsvTable& t, const std::vector<std::string>& expected) {
  if (t.header != expected) {
    std::string want;
    for (const auto& h : expected) {
      want += (want.empty() ? "" : ",") + h;
    }
    fail(1, "unexpected header, expected " + want);
  }
}

std::vector<std::string> windowed_header(std::vector<std::string> head, const std::vector<int>& windows) {
  for (int w : windows) {
    head.push_back("wf_" + std::to_string(w));
  }
  for (int w : windows) {
    head.push_back("wp_" + std::to_string(w));
  }
  return head;
}

// Window sizes from the wf_<w> columns starting at `first`.
std::vector<int> windows_from_header(const CsvTable& t, std::size_t first) {
  std::vector<int> windows;
  for (std::size_t i = first; i < t.header.size(); ++i) {
    const auto& h = t.header[i];
    if (h.rfind("wf_", 0) != 0) {
      break;
    }
    windows.push_back(to_integer<int>(h.substr(3), 1, h));
  }
  if (windows.empty()) {
    fail(1, "no wf_<window> columns");
  }
  return windows;
}

}  // namespace

CsvTable parse_csv(std::string_view text) {
  CsvTable t;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.remove_suffix(1);
    }
    if (line_no == 1) {
      t.header = split_fields(line);
      continue;
    }
    auto fields = split_fields(line);
    if (fields.size() != t.header.size()) {
      fail(line_no, "expected " + std::to_string(t.header.size()) + " fields, got " +
                        std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (line_no == 0) {
    fail(1, "missing header");
  }
  return t;
}

std::string write_csv(const CsvTable& table) {
  std::string out;
  auto emit = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) {
        out += ',';
      }
      out += fields[i];
    }
    out += '\n';
  };
  emit(table.header);
  for (const auto& r : table.rows) {
    emit(r);
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_optional(std::optional<double> v) {
  return v ? format_double(*v) : std::string();
}

std::string eval_trace_csv(const std::vector<EvalTraceRow>& rows) {
  CsvTable t{{"run_seed", "t", "eval_task", "n_samples", "accuracy"}, {}};
  for (const auto& r : rows) {
    t.rows.push_back({std::to_string(r.run_seed), std::to_string(r.t), std::to_string(r.eval_task),
                      std::to_string(r.n_samples), format_double(r.accuracy)});
  }
  return write_csv(t);
}

std::vector<EvalTraceRow> parse_eval_trace(std::string_view text) {
  const CsvTable t = parse_csv(text);
  expect_header(t, {"run_seed", "t", "eval_task", "n_samples", "accuracy"});
  std::vector<EvalTraceRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& f = t.rows[i];
    const std::size_t line = i + 2;
    EvalTraceRow r;
    r.run_seed = to_integer<std::uint64_t>(f[0], line, "run_seed");
    r.t = to_integer<long>(f[1], line, "t");
    r.eval_task = to_integer<int>(f[2], line, "eval_task");
    r.n_samples = to_integer<std::size_t>(f[3], line, "n_samples");
    r.accuracy = to_double(f[4], line, "accuracy");
    out.push_back(r);
  }
  return out;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows, const std::vector<int>& windows) {
  CsvTable t{windowed_header({"run_seed", "t", "current_task", "acc_current", "min_acc", "wc_acc"}, windows), {}};
  for (const auto& r : rows) {
    if (r.wf.size() != windows.size() || r.wp.size() != windows.size()) {
      throw Error(ErrorCode::invalid_argument, "metrics row does not match window sizes");
    }
    std::vector<std::string> f{std::to_string(r.run_seed), std::to_string(r.t),
                               std::to_string(r.current_task), format_double(r.acc_current),
                               format_optional(r.min_acc), format_double(r.wc_acc)};
    for (double v : r.wf) {
      f.push_back(format_double(v));
    }
    for (double v : r.wp) {
      f.push_back(format_double(v));
    }
    t.rows.push_back(std::move(f));
  }
  return write_csv(t);
}

std::vector<MetricsRow> parse_metrics(std::string_view text, std::vector<int>* windows_out) {
  const CsvTable t = parse_csv(text);
  const auto windows = windows_from_header(t, 6);
  expect_header(t, windowed_header({"run_seed", "t", "current_task", "acc_current", "min_acc", "wc_acc"}, windows));
  std::vector<MetricsRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& f = t.rows[i];
    const std::size_t line = i + 2;
    MetricsRow r;
    r.run_seed = to_integer<std::uint64_t>(f[0], line, "run_seed");
    r.t = to_integer<long>(f[1], line, "t");
    r.current_task = to_integer<int>(f[2], line, "current_task");
    r.acc_current = to_double(f[3], line, "acc_current");
    r.min_acc = to_optional(f[4], line, "min_acc");
    r.wc_acc = to_double(f[5], line, "wc_acc");
    for (std::size_t w = 0; w < windows.size(); ++w) {
      r.wf.push_back(to_double(f[6 + w], line, t.header[6 + w]));
      r.wp.push_back(to_double(f[6 + windows.size() + w], line, t.header[6 + windows.size() + w]));
    }
    out.push_back(std::move(r));
  }
  if (windows_out) {
    *windows_out = windows;
  }
  return out;
}

std::string probes_csv(const std::vector<ProbeCsvRow>& rows) {
  CsvTable t{{"run_seed", "t", "loss_plasticity", "loss_stability", "grad_norm_plasticity",
              "grad_norm_stability"},
             {}};
  for (const auto& r : rows) {
    t.rows.push_back({std::to_string(r.run_seed), std::to_string(r.t), format_double(r.loss_plasticity),
                      format_double(r.loss_stability), format_double(r.grad_norm_plasticity),
                      format_double(r.grad_norm_stability)});
  }
  return write_csv(t);
}

std::vector<ProbeCsvRow> parse_probes(std::string_view text) {
  const CsvTable t = parse_csv(text);
  expect_header(t, {"run_seed", "t", "loss_plasticity", "loss_stability", "grad_norm_plasticity",
                    "grad_norm_stability"});
  std::vector<ProbeCsvRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& f = t.rows[i];
    const std::size_t line = i + 2;
    ProbeCsvRow r;
    r.run_seed = to_integer<std::uint64_t>(f[0], line, "run_seed");
    r.t = to_integer<long>(f[1], line, "t");
    r.loss_plasticity = to_double(f[2], line, "loss_plasticity");
    r.loss_stability = to_double(f[3], line, "loss_stability");
    r.grad_norm_plasticity = to_double(f[4], line, "grad_norm_plasticity");
    r.grad_norm_stability = to_double(f[5], line, "grad_norm_stability");
    out.push_back(r);
  }
  return out;
}

std::string final_csv(const std::vector<FinalRow>& rows, const std::vector<int>& windows) {
  CsvTable t{windowed_header({"run_seed", "acc", "forg", "min_acc", "wc_acc"}, windows), {}};
  for (const auto& r : rows) {
    if (r.wf.size() != windows.size() || r.wp.size() != windows.size()) {
      throw Error(ErrorCode::invalid_argument, "final row does not match window sizes");
    }
    std::vector<std::string> f{r.run_seed, format_optional(r.acc), format_optional(r.forg),
                               format_optional(r.min_acc), format_optional(r.wc_acc)};
    for (auto v : r.wf) {
      f.push_back(format_optional(v));
    }
    for (auto v : r.wp) {
      f.push_back(format_optional(v));
    }
    t.rows.push_back(std::move(f));
  }
  return write_csv(t);
}

std::vector<FinalRow> parse_final(std::string_view text, std::vector<int>* windows_out) {
  const CsvTable t = parse_csv(text);
  const auto windows = windows_from_header(t, 5);
  expect_header(t, windowed_header({"run_seed", "acc", "forg", "min_acc", "wc_acc"}, windows));
  std::vector<FinalRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& f = t.rows[i];
    const std::size_t line = i + 2;
    FinalRow r;
    r.run_seed = f[0];
    if (r.run_seed.empty()) {
      fail(line, "empty run_seed");
    }
    r.acc = to_optional(f[1], line, "acc");
    r.forg = to_optional(f[2], line, "forg");
    r.min_acc = to_optional(f[3], line, "min_acc");
    r.wc_acc = to_optional(f[4], line, "wc_acc");
    for (std::size_t w = 0; w < windows.size(); ++w) {
      r.wf.push_back(to_optional(f[5 + w], line, t.header[5 + w]));
      r.wp.push_back(to_optional(f[5 + windows.size() + w], line, t.header[5 + windows.size() + w]));
    }
    out.push_back(std::move(r));
  }
  if (windows_out) {
    *windows_out = windows;
  }
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::io, "cannot read " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::io, "cannot write " + path);
  }
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) {
    throw Error(ErrorCode::io, "write failed for " + path);
  }
}

}  // namespace cleval::cli
