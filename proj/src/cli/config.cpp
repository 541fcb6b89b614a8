#include "cleval/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "cleval/error.hpp"

namespace cleval::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(std::string_view key, std::string_view value, std::string_view expected) {
  throw Error(ErrorCode::config, std::string(key) + ": expected " + std::string(expected) +
                                     ", got '" + std::string(value) + "'");
}

long long parse_integer(std::string_view key, std::string_view value) {
  long long v = 0;
  const auto* end = value.data() + value.size();
  const auto [p, ec] = std::from_chars(value.data(), end, v);
  if (value.empty() || ec != std::errc() || p != end) {
    bad(key, value, "an integer");
  }
  return v;
}

double parse_real(std::string_view key, std::string_view value) {
  double v = 0.0;
  const auto* end = value.data() + value.size();
  const auto [p, ec] = std::from_chars(value.data(), end, v);
  if (value.empty() || ec != std::errc() || p != end || !std::isfinite(v)) {
    bad(key, value, "a finite number");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") {
    return true;
  }
  if (value == "false" || value == "0" || value == "no") {
    return false;
  }
  bad(key, value, "true or false");
}

void require(bool ok, std::string_view key, std::string_view what) {
  if (!ok) {
    throw Error(ErrorCode::config, std::string(key) + " out of range: " + std::string(what));
  }
}

int parse_int_at_least(std::string_view key, std::string_view value, long long lo) {
  const long long v = parse_integer(key, value);
  require(v >= lo && v <= 2147483647LL, key, "must be >= " + std::to_string(lo));
  return static_cast<int>(v);
}

std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out += (i ? ", " : "") + std::to_string(xs[i]);
  }
  return out;
}

struct KeyDef {
  std::string_view name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
  std::vector<MethodKind> methods;  // empty: relevant to every method
};

const std::vector<KeyDef>& key_table() {
  using MK = MethodKind;
  static const std::vector<KeyDef> table = {
      {"dataset",
       [](RunConfig& c, std::string_view v) {
         if (v == "synthetic_split") c.dataset = DatasetKind::synthetic_split;
         else if (v == "mnist_split") c.dataset = DatasetKind::mnist_split;
         else if (v == "permuted") c.dataset = DatasetKind::permuted;
         else bad("dataset", v, "synthetic_split, mnist_split or permuted");
       },
       [](const RunConfig& c) { return std::string(to_string(c.dataset)); }, {}},
      {"scenario",
       [](RunConfig& c, std::string_view v) {
         if (v == "class_incremental") c.scenario = Scenario::class_incremental;
         else if (v == "domain_incremental") c.scenario = Scenario::domain_incremental;
         else if (v == "task_incremental") c.scenario = Scenario::task_incremental;
         else bad("scenario", v, "class_incremental, domain_incremental or task_incremental");
       },
       [](const RunConfig& c) { return std::string(to_string(c.scenario)); }, {}},
      {"n_tasks", [](RunConfig& c, std::string_view v) { c.n_tasks = parse_int_at_least("n_tasks", v, 1); },
       [](const RunConfig& c) { return std::to_string(c.n_tasks); }, {}},
      {"iters_per_task",
       [](RunConfig& c, std::string_view v) {
         const long long n = parse_integer("iters_per_task", v);
         require(n >= 1, "iters_per_task", "must be >= 1");
         c.iters_per_task = static_cast<long>(n);
       },
       [](const RunConfig& c) { return std::to_string(c.iters_per_task); }, {}},
      {"batch_size", [](RunConfig& c, std::string_view v) { c.batch_size = parse_int_at_least("batch_size", v, 1); },
       [](const RunConfig& c) { return std::to_string(c.batch_size); }, {}},
      {"hidden",
       [](RunConfig& c, std::string_view v) {
         c.hidden.clear();
         for (const auto& item : split_list(v)) {
           c.hidden.push_back(parse_int_at_least("hidden", item, 1));
         }
       },
       [](const RunConfig& c) { return join(c.hidden); }, {}},
      {"method",
       [](RunConfig& c, std::string_view v) {
         if (v == "finetune") c.method = MK::finetune;
         else if (v == "er") c.method = MK::er;
         else if (v == "gem") c.method = MK::gem;
         else if (v == "lwf") c.method = MK::lwf;
         else if (v == "ewc") c.method = MK::ewc;
         else bad("method", v, "finetune, er, gem, lwf or ewc");
       },
       [](const RunConfig& c) { return std::string(to_string(c.method)); }, {}},
      {"lr",
       [](RunConfig& c, std::string_view v) {
         c.lr = parse_real("lr", v);
         require(c.lr > 0.0, "lr", "must be > 0");
       },
       [](const RunConfig& c) { return fmt_real(c.lr); }, {}},
      {"momentum",
       [](RunConfig& c, std::string_view v) {
         c.momentum = parse_real("momentum", v);
         require(c.momentum >= 0.0 && c.momentum < 1.0, "momentum", "must lie in [0, 1)");
       },
       [](const RunConfig& c) { return fmt_real(c.momentum); }, {}},
      {"alpha",
       [](RunConfig& c, std::string_view v) {
         c.alpha = parse_real("alpha", v);
         require(c.alpha >= 0.0 && c.alpha <= 1.0, "alpha", "must lie in [0, 1]");
       },
       [](const RunConfig& c) { return fmt_real(c.alpha); }, {MK::er, MK::lwf, MK::ewc}},
      {"buffer_capacity",
       [](RunConfig& c, std::string_view v) {
         c.buffer_capacity = static_cast<std::size_t>(parse_int_at_least("buffer_capacity", v, 0));
       },
       [](const RunConfig& c) { return std::to_string(c.buffer_capacity); }, {MK::er, MK::gem}},
      {"gem_margin",
       [](RunConfig& c, std::string_view v) {
         c.gem_margin = parse_real("gem_margin", v);
         require(c.gem_margin >= 0.0, "gem_margin", "must be >= 0");
       },
       [](const RunConfig& c) { return fmt_real(c.gem_margin); }, {MK::gem}},
      {"lwf_temperature",
       [](RunConfig& c, std::string_view v) {
         c.lwf_temperature = parse_real("lwf_temperature", v);
         require(c.lwf_temperature > 0.0, "lwf_temperature", "must be > 0");
       },
       [](const RunConfig& c) { return fmt_real(c.lwf_temperature); }, {MK::lwf}},
      {"ewc_lambda",
       [](RunConfig& c, std::string_view v) {
         c.ewc_lambda = parse_real("ewc_lambda", v);
         require(c.ewc_lambda >= 0.0, "ewc_lambda", "must be >= 0");
       },
       [](const RunConfig& c) { return fmt_real(c.ewc_lambda); }, {MK::ewc}},
      {"fisher_samples",
       [](RunConfig& c, std::string_view v) {
         c.fisher_samples = static_cast<std::size_t>(parse_int_at_least("fisher_samples", v, 1));
       },
       [](const RunConfig& c) { return std::to_string(c.fisher_samples); }, {MK::ewc}},
      {"ewc_fisher_mode",
       [](RunConfig& c, std::string_view v) {
         if (v == "accumulate") c.fisher_mode = FisherMode::accumulate;
         else if (v == "latest") c.fisher_mode = FisherMode::latest;
         else bad("ewc_fisher_mode", v, "accumulate or latest");
       },
       [](const RunConfig& c) {
         return std::string(c.fisher_mode == FisherMode::accumulate ? "accumulate" : "latest");
       },
       {MK::ewc}},
      {"rho_eval",
       [](RunConfig& c, std::string_view v) {
         const long long n = parse_integer("rho_eval", v);
         require(n >= 1, "rho_eval", "must be >= 1");
         c.rho_eval = static_cast<long>(n);
       },
       [](const RunConfig& c) { return std::to_string(c.rho_eval); }, {}},
      {"eval_subsample",
       [](RunConfig& c, std::string_view v) {
         if (v == "all" || v == "ALL") {
           c.eval_subsample.reset();
         } else {
           c.eval_subsample = static_cast<std::size_t>(parse_int_at_least("eval_subsample", v, 1));
         }
       },
       [](const RunConfig& c) {
         return c.eval_subsample ? std::to_string(*c.eval_subsample) : std::string("all");
       },
       {}},
      {"eval_resample", [](RunConfig& c, std::string_view v) { c.eval_resample = parse_bool("eval_resample", v); },
       [](const RunConfig& c) { return std::string(c.eval_resample ? "true" : "false"); }, {}},
      {"eval_source",
       [](RunConfig& c, std::string_view v) {
         if (v == "eval_split") c.eval_source = EvalSource::eval_split;
         else if (v == "train_split") c.eval_source = EvalSource::train_split;
         else bad("eval_source", v, "eval_split or train_split");
       },
       [](const RunConfig& c) {
         return std::string(c.eval_source == EvalSource::eval_split ? "eval_split" : "train_split");
       },
       {}},
      {"window_sizes",
       [](RunConfig& c, std::string_view v) {
         c.window_sizes.clear();
         for (const auto& item : split_list(v)) {
           c.window_sizes.push_back(parse_int_at_least("window_sizes", item, 2));
         }
         require(!c.window_sizes.empty(), "window_sizes", "needs at least one entry");
       },
       [](const RunConfig& c) { return join(c.window_sizes); }, {}},
      {"force_boundary_eval",
       [](RunConfig& c, std::string_view v) { c.force_boundary_eval = parse_bool("force_boundary_eval", v); },
       [](const RunConfig& c) { return std::string(c.force_boundary_eval ? "true" : "false"); }, {}},
      {"minacc_range",
       [](RunConfig& c, std::string_view v) {
         if (v == "post_learned") c.minacc_range = MinAccRange::post_learned;
         else if (v == "eq2_literal") c.minacc_range = MinAccRange::eq2_literal;
         else bad("minacc_range", v, "post_learned or eq2_literal");
       },
       [](const RunConfig& c) {
         return std::string(c.minacc_range == MinAccRange::post_learned ? "post_learned" : "eq2_literal");
       },
       {}},
      {"seeds",
       [](RunConfig& c, std::string_view v) {
         c.seeds.clear();
         for (const auto& item : split_list(v)) {
           const long long s = parse_integer("seeds", item);
           require(s >= 0, "seeds", "must be >= 0");
           c.seeds.push_back(static_cast<std::uint64_t>(s));
         }
         require(!c.seeds.empty(), "seeds", "needs at least one seed");
       },
       [](const RunConfig& c) { return join(c.seeds); }, {}},
      {"data_seed",
       [](RunConfig& c, std::string_view v) {
         const long long s = parse_integer("data_seed", v);
         require(s >= 0, "data_seed", "must be >= 0");
         c.data_seed = static_cast<std::uint64_t>(s);
       },
       [](const RunConfig& c) { return std::to_string(c.data_seed); }, {}},
      {"output_dir", [](RunConfig& c, std::string_view v) { c.output_dir = std::string(v); },
       [](const RunConfig& c) { return c.output_dir; }, {}},
      {"mnist_dir", [](RunConfig& c, std::string_view v) { c.mnist_dir = std::string(v); },
       [](const RunConfig& c) { return c.mnist_dir; }, {}},
      {"synthetic_dims",
       [](RunConfig& c, std::string_view v) { c.synthetic_dims = parse_int_at_least("synthetic_dims", v, 1); },
       [](const RunConfig& c) { return std::to_string(c.synthetic_dims); }, {}},
      {"synthetic_classes",
       [](RunConfig& c, std::string_view v) { c.synthetic_classes = parse_int_at_least("synthetic_classes", v, 1); },
       [](const RunConfig& c) { return std::to_string(c.synthetic_classes); }, {}},
      {"synthetic_train_per_class",
       [](RunConfig& c, std::string_view v) {
         c.synthetic_train_per_class = parse_int_at_least("synthetic_train_per_class", v, 1);
       },
       [](const RunConfig& c) { return std::to_string(c.synthetic_train_per_class); }, {}},
      {"synthetic_eval_per_class",
       [](RunConfig& c, std::string_view v) {
         c.synthetic_eval_per_class = parse_int_at_least("synthetic_eval_per_class", v, 1);
       },
       [](const RunConfig& c) { return std::to_string(c.synthetic_eval_per_class); }, {}},
      {"synthetic_radius",
       [](RunConfig& c, std::string_view v) {
         c.synthetic_radius = parse_real("synthetic_radius", v);
         require(c.synthetic_radius > 0.0, "synthetic_radius", "must be > 0");
       },
       [](const RunConfig& c) { return fmt_real(c.synthetic_radius); }, {}},
      {"synthetic_shared_offset",
       [](RunConfig& c, std::string_view v) {
         c.synthetic_shared_offset = parse_real("synthetic_shared_offset", v);
         require(c.synthetic_shared_offset >= 0.0, "synthetic_shared_offset", "must be >= 0");
       },
       [](const RunConfig& c) { return fmt_real(c.synthetic_shared_offset); }, {}},
  };
  return table;
}

const KeyDef* find_key(std::string_view key) {
  for (const auto& def : key_table()) {
    if (def.name == key) {
      return &def;
    }
  }
  return nullptr;
}

std::string with_line(std::size_t line, const std::string& msg) {
  return "line " + std::to_string(line) + ": " + msg;
}

}  // namespace

std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  if (trim(value).empty()) {
    return out;
  }
  std::size_t start = 0;
  while (true) {
    const auto comma = value.find(',', start);
    out.emplace_back(trim(value.substr(start, comma == std::string_view::npos ? value.npos : comma - start)));
    if (comma == std::string_view::npos) {
      break;
    }
    start = comma + 1;
  }
  return out;
}

std::string_view to_string(DatasetKind d) {
  switch (d) {
    case DatasetKind::synthetic_split: return "synthetic_split";
    case DatasetKind::mnist_split: return "mnist_split";
    case DatasetKind::permuted: return "permuted";
  }
  return "?";
}

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::class_incremental: return "class_incremental";
    case Scenario::domain_incremental: return "domain_incremental";
    case Scenario::task_incremental: return "task_incremental";
  }
  return "?";
}

std::string_view to_string(MethodKind m) {
  switch (m) {
    case MethodKind::finetune: return "finetune";
    case MethodKind::er: return "er";
    case MethodKind::gem: return "gem";
    case MethodKind::lwf: return "lwf";
    case MethodKind::ewc: return "ewc";
  }
  return "?";
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& def : key_table()) {
    out.emplace_back(def.name);
  }
  return out;
}

void set_key(RunConfig& cfg, std::string_view key, std::string_view value) {
  const KeyDef* def = find_key(key);
  if (def == nullptr) {
    throw Error(ErrorCode::config, "unknown key '" + std::string(key) + "'");
  }
  def->set(cfg, trim(value));
}

void validate(const RunConfig& cfg) {
  if (cfg.dataset == DatasetKind::synthetic_split && cfg.synthetic_classes % cfg.n_tasks != 0) {
    throw Error(ErrorCode::config, "synthetic_classes (" + std::to_string(cfg.synthetic_classes) +
                                       ") must be divisible by n_tasks (" +
                                       std::to_string(cfg.n_tasks) + ")");
  }
  if (cfg.dataset == DatasetKind::mnist_split) {
    if (cfg.mnist_dir.empty()) {
      throw Error(ErrorCode::config, "dataset mnist_split needs mnist_dir");
    }
    if (10 % cfg.n_tasks != 0) {
      throw Error(ErrorCode::config, "10 MNIST classes cannot be split into " +
                                         std::to_string(cfg.n_tasks) + " tasks");
    }
  }
  if (cfg.window_sizes.empty() || cfg.seeds.empty()) {
    throw Error(ErrorCode::config, "window_sizes and seeds must be non-empty");
  }
}

ParsedConfig parse_config(std::string_view text) {
  ParsedConfig out;
  std::set<std::string> explicit_keys;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::config, with_line(line_no, "expected 'key = value'"));
    }
    const std::string key(trim(line.substr(0, eq)));
    try {
      if (explicit_keys.count(key) != 0) {
        throw Error(ErrorCode::config, "duplicate key '" + key + "'");
      }
      set_key(out.config, key, line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(ErrorCode::config, with_line(line_no, e.what()));
    }
    explicit_keys.insert(key);
  }
  validate(out.config);
  for (const auto& key : explicit_keys) {
    const KeyDef* def = find_key(key);
    if (!def->methods.empty() &&
        std::find(def->methods.begin(), def->methods.end(), out.config.method) == def->methods.end()) {
      out.warnings.push_back("key '" + key + "' is ignored by method " +
                             std::string(to_string(out.config.method)));
    }
  }
  if (out.config.dataset == DatasetKind::permuted && explicit_keys.count("scenario") != 0 &&
      out.config.scenario != Scenario::domain_incremental) {
    out.warnings.push_back("permuted streams are always domain_incremental; scenario ignored");
  }
  return out;
}

ParsedConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::io, "cannot read config " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& def : key_table()) {
    out += std::string(def.name) + " = " + def.get(cfg) + "\n";
  }
  return out;
}

MethodConfig method_config(const RunConfig& cfg) {
  MethodConfig m;
  m.kind = cfg.method;
  m.alpha = cfg.alpha;
  m.buffer_capacity = cfg.buffer_capacity;
  m.gem_margin = cfg.gem_margin;
  m.lwf_temperature = cfg.lwf_temperature;
  m.ewc_lambda = cfg.ewc_lambda;
  m.fisher_samples = cfg.fisher_samples;
  m.fisher_mode = cfg.fisher_mode;
  return m;
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.hidden = cfg.hidden;
  t.lr = cfg.lr;
  t.momentum = cfg.momentum;
  t.batch_size = cfg.batch_size;
  return t;
}

EvaluatorConfig evaluator_config(const RunConfig& cfg) {
  EvaluatorConfig e;
  e.rho_eval = cfg.rho_eval;
  e.subsample.sample_size = cfg.eval_subsample;
  e.subsample.resample_each_eval = cfg.eval_resample;
  e.subsample.source = cfg.eval_source;
  e.window_sizes = cfg.window_sizes;
  e.force_boundary_eval = cfg.force_boundary_eval;
  e.min_acc_range = cfg.minacc_range;
  return e;
}

namespace {

SyntheticSpec synthetic_spec(const RunConfig& cfg, int n_tasks) {
  SyntheticSpec spec;
  spec.n_classes = cfg.synthetic_classes;
  spec.dims = cfg.synthetic_dims;
  spec.per_class_train = cfg.synthetic_train_per_class;
  spec.per_class_eval = cfg.synthetic_eval_per_class;
  spec.n_tasks = n_tasks;
  spec.iters_per_task = cfg.iters_per_task;
  spec.radius = cfg.synthetic_radius;
  spec.shared_offset = cfg.synthetic_shared_offset;
  return spec;
}

std::pair<Dataset, Dataset> load_mnist(const std::string& dir) {
  const std::filesystem::path d(dir);
  return {load_idx(d / "train-images-idx3-ubyte", d / "train-labels-idx1-ubyte"),
          load_idx(d / "t10k-images-idx3-ubyte", d / "t10k-labels-idx1-ubyte")};
}

}  // namespace

TaskStream build_stream(const RunConfig& cfg) {
  validate(cfg);
  switch (cfg.dataset) {
    case DatasetKind::synthetic_split:
      return make_split_synthetic(synthetic_spec(cfg, cfg.n_tasks), cfg.data_seed, cfg.scenario);
    case DatasetKind::mnist_split: {
      auto [train, eval] = load_mnist(cfg.mnist_dir);
      return make_split_stream(train, eval, cfg.n_tasks, cfg.iters_per_task, cfg.scenario);
    }
    case DatasetKind::permuted: {
      if (!cfg.mnist_dir.empty()) {
        auto [train, eval] = load_mnist(cfg.mnist_dir);
        return make_permuted_stream(train, eval, cfg.n_tasks, cfg.iters_per_task, cfg.data_seed);
      }
      const TaskStream base = make_split_synthetic(synthetic_spec(cfg, 1), cfg.data_seed);
      return make_permuted_stream(base.tasks[0].train, base.tasks[0].eval, cfg.n_tasks,
                                  cfg.iters_per_task, cfg.data_seed);
    }
  }
  throw Error(ErrorCode::config, "unknown dataset");
}

Grid parse_grid(std::string_view text) {
  Grid grid;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::config, with_line(line_no, "expected 'key = v1, v2, ...'"));
    }
    std::string key(trim(line.substr(0, eq)));
    if (find_key(key) == nullptr) {
      throw Error(ErrorCode::config, with_line(line_no, "unknown key '" + key + "'"));
    }
    if (!seen.insert(key).second) {
      throw Error(ErrorCode::config, with_line(line_no, "duplicate grid key '" + key + "'"));
    }
    auto values = split_list(line.substr(eq + 1));
    if (values.empty()) {
      throw Error(ErrorCode::config, with_line(line_no, "grid key '" + key + "' has no values"));
    }
    grid.emplace_back(std::move(key), std::move(values));
  }
  if (grid.empty()) {
    throw Error(ErrorCode::config, "empty grid");
  }
  return grid;
}

}  // namespace cleval::cli
