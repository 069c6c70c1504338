#pragma once

// Experiment harness behind the CLI: a flat key=value config format, a small
// worker pool, and one cmd_* entry point per subcommand. Every command is
// deterministic given its config and seed; CSV output is byte-stable apart
// from an optional "# generated <timestamp>" first line.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "roundrank/analysis.hpp"
#include "roundrank/datasets.hpp"
#include "roundrank/generators.hpp"
#include "roundrank/io.hpp"
#include "roundrank/matrix.hpp"
#include "roundrank/optim.hpp"
#include "roundrank/svd.hpp"

namespace roundrank {

// ---------------------------------------------------------------------------
// Config files: one "key = value" per line, '#' comments, lists comma-split.
// Lookups record which keys were consumed so finish() can flag typos.

class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig from_stream(std::istream& is, const std::string& source) {
    KeyValueConfig cfg;
    cfg.source_ = source;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument(source + ":" + std::to_string(line_no) +
                                    ": expected 'key = value'");
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty())
        throw std::invalid_argument(source + ":" + std::to_string(line_no) + ": empty key");
      if (!cfg.values_.emplace(key, value).second)
        throw std::invalid_argument(source + ":" + std::to_string(line_no) +
                                    ": duplicate key '" + key + "'");
    }
    return cfg;
  }

  static KeyValueConfig from_file(const std::string& path) {
    auto is = detail::open_input(path);
    return from_stream(is, path);
  }

  const std::string& source() const { return source_; }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    touched_.insert(key);
    return it->second;
  }

  std::string require_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end())
      throw std::invalid_argument(source_ + ": missing required key '" + key + "'");
    touched_.insert(key);
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    return parse_double(key, require_string(key));
  }

  int get_int(const std::string& key, int fallback) const {
    if (!has(key)) return fallback;
    return parse_int(key, require_string(key));
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    const int v = get_int(key, static_cast<int>(fallback));
    if (v < 0) fail(key, "must be non-negative");
    return static_cast<std::size_t>(v);
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string raw = require_string(key);
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(raw, &used);
      if (used != raw.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      fail(key, "expected unsigned integer, got '" + raw + "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    std::string raw = require_string(key);
    std::transform(raw.begin(), raw.end(), raw.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (raw == "true" || raw == "1" || raw == "yes") return true;
    if (raw == "false" || raw == "0" || raw == "no") return false;
    fail(key, "expected true/false, got '" + raw + "'");
  }

  std::vector<std::string> get_string_list(const std::string& key,
                                           std::vector<std::string> fallback) const {
    if (!has(key)) return fallback;
    std::vector<std::string> out;
    for (const std::string& item : split_list(key, require_string(key)))
      out.push_back(item);
    return out;
  }

  std::vector<double> get_double_list(const std::string& key,
                                      std::vector<double> fallback = {}) const {
    if (!has(key)) return fallback;
    std::vector<double> out;
    for (const std::string& item : split_list(key, require_string(key)))
      out.push_back(parse_double(key, item));
    return out;
  }

  std::vector<int> get_int_list(const std::string& key,
                                std::vector<int> fallback = {}) const {
    if (!has(key)) return fallback;
    std::vector<int> out;
    for (const std::string& item : split_list(key, require_string(key)))
      out.push_back(parse_int(key, item));
    return out;
  }

  // Per-method override: "<scope>.<key>" wins over plain "<key>".
  double scoped_double(const std::string& scope, const std::string& key,
                       double fallback) const {
    const std::string scoped = scope + "." + key;
    if (has(scoped)) return parse_double(scoped, require_string(scoped));
    return get_double(key, fallback);
  }

  int scoped_int(const std::string& scope, const std::string& key, int fallback) const {
    const std::string scoped = scope + "." + key;
    if (has(scoped)) return parse_int(scoped, require_string(scoped));
    return get_int(key, fallback);
  }

  std::vector<double> scoped_double_list(const std::string& scope,
                                         const std::string& key) const {
    const std::string scoped = scope + "." + key;
    if (has(scoped)) return get_double_list(scoped);
    return get_double_list(key);
  }

  // Call once a command has read everything it understands.
  void check_consumed() const {
    std::vector<std::string> unused;
    for (const auto& [key, value] : values_)
      if (!touched_.count(key)) unused.push_back(key);
    if (unused.empty()) return;
    std::string msg = source_ + ": unknown key(s):";
    for (const auto& k : unused) msg += " '" + k + "'";
    throw std::invalid_argument(msg);
  }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }

  std::vector<std::string> split_list(const std::string& key, const std::string& raw) const {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(raw);
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) fail(key, "empty item in list");
      out.push_back(item);
    }
    if (out.empty()) fail(key, "empty list");
    return out;
  }

  double parse_double(const std::string& key, const std::string& raw) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(raw, &used);
      if (used != raw.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      fail(key, "expected number, got '" + raw + "'");
    }
  }

  int parse_int(const std::string& key, const std::string& raw) const {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(raw, &used);
      if (used != raw.size()) throw std::invalid_argument("");
      if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
        throw std::invalid_argument("");
      return static_cast<int>(v);
    } catch (const std::exception&) {
      fail(key, "expected integer, got '" + raw + "'");
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw std::invalid_argument(source_ + ": key '" + key + "': " + msg);
  }

  std::string source_ = "<defaults>";
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> touched_;
};

// ---------------------------------------------------------------------------
// Common run plumbing.

struct RunOptions {
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;  // overrides the config's seed key
  std::size_t threads = 1;
  bool no_timestamp = false;
};

namespace detail {

// Runs the jobs on up to n_threads workers. Each job owns its output slot, so
// assembled results do not depend on completion order; the first exception is
// rethrown after all workers drain.
inline void run_jobs(std::size_t n_threads, std::vector<std::function<void()>>& jobs) {
  if (jobs.empty()) return;
  n_threads = std::clamp<std::size_t>(n_threads, 1, jobs.size());
  if (n_threads == 1) {
    for (auto& job : jobs) job();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        jobs[i]();
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline std::string iso8601_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::ofstream open_csv(const RunOptions& run, const std::string& name,
                              const std::string& header) {
  std::filesystem::create_directories(run.out_dir);
  auto f = open_output(run.out_dir + "/" + name);
  if (!run.no_timestamp) f << "# generated " << iso8601_now() << "\n";
  f << header << "\n";
  return f;
}

inline std::string csv_num(double v) {
  std::ostringstream ss;
  ss << std::setprecision(10) << v;
  return ss.str();
}

struct SummaryStat {
  double mean = 0.0;
  double stddev = 0.0;
};

inline SummaryStat summarize(const std::vector<double>& xs) {
  SummaryStat s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() >= 2) {
    double acc = 0.0;
    for (double x : xs) acc += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(acc / static_cast<double>(xs.size() - 1));
  }
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Method identifiers shared by recover/complete/recommend. *_learned
// updates thresholds during training, *_fixed keeps them at their initial
// values.

struct MethodSpec {
  std::string name;
  LossKind loss = LossKind::linear;
  bool fixed_thresholds = true;
};

inline MethodSpec parse_method(const std::string& name) {
  if (name == "linear") return {name, LossKind::linear, true};
  if (name == "round_fixed") return {name, LossKind::round, true};
  if (name == "round_learned") return {name, LossKind::round, false};
  if (name == "multi_sigmoid_fixed") return {name, LossKind::multi_sigmoid, true};
  if (name == "multi_sigmoid_learned") return {name, LossKind::multi_sigmoid, false};
  throw std::invalid_argument(
      "unknown method '" + name +
      "' (expected linear, round_fixed, round_learned, multi_sigmoid_fixed, "
      "multi_sigmoid_learned)");
}

inline std::vector<MethodSpec> parse_methods(const KeyValueConfig& cfg,
                                             std::vector<std::string> fallback) {
  std::vector<MethodSpec> out;
  for (const std::string& name : cfg.get_string_list("methods", std::move(fallback)))
    out.push_back(parse_method(name));
  return out;
}

inline TrainConfig method_train_config(const KeyValueConfig& cfg, const MethodSpec& m,
                                       std::size_t rank, std::uint64_t seed) {
  TrainConfig t;
  t.loss = m.loss;
  t.rank = rank;
  t.learning_rate = cfg.scoped_double(m.name, "learning_rate", 0.05);
  t.lr_decay = cfg.scoped_double(m.name, "lr_decay", 1.0);
  t.l2_reg = cfg.scoped_double(m.name, "l2", 0.0);
  t.max_epochs = cfg.scoped_int(m.name, "epochs", 1000);
  t.patience = cfg.scoped_int(m.name, "patience", 50);
  t.init_scale = cfg.scoped_double(m.name, "init_scale", 0.0);
  t.hinge_smoothing = cfg.scoped_double(m.name, "hinge_smoothing", 0.0);
  t.sharpness = cfg.scoped_double(m.name, "sharpness", 1.0);
  t.boundary_pad = cfg.scoped_double(m.name, "boundary_pad", 0.0);
  t.thresholds_fixed = m.fixed_thresholds;
  t.initial_thresholds = cfg.scoped_double_list(m.name, "thresholds");
  t.seed = seed;
  return t;
}

inline SyntheticSpec synthetic_from_config(const KeyValueConfig& cfg, std::uint64_t seed) {
  SyntheticSpec s;
  const std::string fam = cfg.require_string("family");
  const auto parsed = family_from_name(fam);
  if (!parsed)
    throw std::invalid_argument(cfg.source() + ": key 'family': unknown family '" + fam + "'");
  s.family = *parsed;
  s.n = cfg.get_size("n", 10);
  s.seed = seed;
  if (s.family == MatrixFamily::band_diagonal ||
      s.family == MatrixFamily::complement_band_diagonal)
    s.band_width = cfg.get_int("band_width", 3);
  if (s.family == MatrixFamily::block_diagonal) s.block_size = cfg.get_size("block_size", 0);
  if (s.family == MatrixFamily::random_low_grr) {
    s.rank = cfg.get_size("gen_rank", cfg.get_size("rank", 2));
    s.max_level = cfg.get_int("max_level", 5);
    s.quantile_thresholds = cfg.get_bool("quantile_thresholds", true);
  }
  return s;
}

namespace detail {

inline std::uint64_t base_seed_of(const KeyValueConfig& cfg, const RunOptions& run) {
  const std::uint64_t from_cfg = cfg.get_u64("seed", 0);
  return run.seed ? *run.seed : from_cfg;
}

// Stable per-cell seed: mixes the indices so neighboring cells do not share
// initialization or shuffle streams.
inline std::uint64_t cell_seed(std::uint64_t base, std::size_t a, std::size_t b,
                               std::size_t c) {
  std::uint64_t x = base + 0x9e3779b97f4a7c15ULL;
  for (std::uint64_t v : {static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(b),
                          static_cast<std::uint64_t>(c)}) {
    x ^= v + 0x9e3779b97f4a7c15ULL + (x << 6) + (x >> 2);
    x *= 0xbf58476d1ce4e5b9ULL;
  }
  return x;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// recover: fully observed reconstruction, RMSE curve per epoch.

inline void cmd_recover(const KeyValueConfig& cfg, const RunOptions& run) {
  const std::uint64_t base = detail::base_seed_of(cfg, run);
  const int trials = cfg.get_int("trials", 1);
  detail::require(trials >= 1, "recover: key 'trials': must be >= 1");
  const std::size_t rank = cfg.get_size("rank", 1);
  const auto methods = parse_methods(
      cfg, {"linear", "round_fixed", "round_learned", "multi_sigmoid_fixed",
            "multi_sigmoid_learned"});

  struct Cell {
    TrainReport report;
    double final_rmse = 0.0;
  };
  std::vector<GeneratedMatrix> mats;
  for (int t = 0; t < trials; ++t)
    mats.push_back(generate(synthetic_from_config(cfg, base + static_cast<std::uint64_t>(t))));
  const std::string mat_name = mats.front().name;

  std::vector<Cell> cells(methods.size() * static_cast<std::size_t>(trials));
  std::vector<TrainConfig> train_cfgs;
  for (std::size_t mi = 0; mi < methods.size(); ++mi)
    for (int t = 0; t < trials; ++t)
      train_cfgs.push_back(method_train_config(
          cfg, methods[mi], rank,
          detail::cell_seed(base, mi, static_cast<std::size_t>(t), 0)));
  cfg.check_consumed();

  std::vector<std::function<void()>> jobs;
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    for (int t = 0; t < trials; ++t) {
      const std::size_t idx = mi * static_cast<std::size_t>(trials) + static_cast<std::size_t>(t);
      jobs.push_back([&, mi, t, idx] {
        const ObservationSet obs = observe_all(mats[static_cast<std::size_t>(t)].matrix);
        Cell cell;
        cell.report = train(obs, train_cfgs[idx]);
        const LinkKind link =
            link_for(methods[mi].loss, cell.report.model, train_cfgs[idx].sharpness);
        cell.final_rmse = rmse_on(cell.report.model, link, obs.entries);
        cells[idx] = std::move(cell);
      });
    }
  }
  detail::run_jobs(run.threads, jobs);

  for (LossKind loss : {LossKind::linear, LossKind::round, LossKind::multi_sigmoid}) {
    bool any = false;
    for (const auto& m : methods) any = any || m.loss == loss;
    if (!any) continue;
    auto f = detail::open_csv(run, "recover_" + mat_name + "_" + loss_name(loss) + ".csv",
                              "method,trial,epoch,rmse");
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      if (methods[mi].loss != loss) continue;
      for (int t = 0; t < trials; ++t) {
        const auto& rep = cells[mi * static_cast<std::size_t>(trials) + static_cast<std::size_t>(t)].report;
        for (std::size_t e = 0; e < rep.val_rmse.size(); ++e)
          f << methods[mi].name << "," << t << "," << (e + 1) << ","
            << detail::csv_num(rep.val_rmse[e]) << "\n";
      }
    }
  }

  auto summary = detail::open_csv(run, "recover_" + mat_name + "_summary.csv",
                                  "method,trial,final_rmse,best_epoch,epochs_run,early_stopped");
  for (std::size_t mi = 0; mi < methods.size(); ++mi)
    for (int t = 0; t < trials; ++t) {
      const auto& cell = cells[mi * static_cast<std::size_t>(trials) + static_cast<std::size_t>(t)];
      summary << methods[mi].name << "," << t << "," << detail::csv_num(cell.final_rmse)
              << "," << cell.report.best_epoch << "," << cell.report.epochs_run << ","
              << (cell.report.early_stopped ? 1 : 0) << "\n";
    }
  std::cout << "recover: wrote curves for " << mat_name << " to " << run.out_dir << "\n";
}

// ---------------------------------------------------------------------------
// complete: partial observation, held-out RMSE per (method, fraction, trial).

inline void cmd_complete(const KeyValueConfig& cfg, const RunOptions& run) {
  const std::uint64_t base = detail::base_seed_of(cfg, run);
  const int trials = cfg.get_int("trials", 5);
  detail::require(trials >= 1, "complete: key 'trials': must be >= 1");
  const std::size_t rank = cfg.get_size("rank", 1);
  const double holdout = cfg.get_double("holdout", 0.2);
  const auto fractions = cfg.get_double_list("fractions");
  detail::require(!fractions.empty(), "complete: missing required key 'fractions'");
  for (double f : fractions)
    detail::require(f > 0.0 && f < 1.0 && f + holdout <= 1.0,
                    "complete: key 'fractions': each fraction must lie in (0,1) with "
                    "fraction + holdout <= 1");
  const auto methods = parse_methods(
      cfg, {"linear", "round_fixed", "round_learned", "multi_sigmoid_fixed",
            "multi_sigmoid_learned"});

  std::vector<GeneratedMatrix> mats;
  for (int t = 0; t < trials; ++t)
    mats.push_back(generate(synthetic_from_config(cfg, base + static_cast<std::uint64_t>(t))));
  const std::string mat_name = mats.front().name;

  struct Cell {
    double rmse = 0.0;
    double accuracy = 0.0;
    int best_epoch = -1;
    int epochs_run = 0;
  };
  const std::size_t n_cells = methods.size() * fractions.size() * static_cast<std::size_t>(trials);
  std::vector<Cell> cells(n_cells);
  std::vector<TrainConfig> train_cfgs;
  train_cfgs.reserve(n_cells);
  for (std::size_t mi = 0; mi < methods.size(); ++mi)
    for (std::size_t fi = 0; fi < fractions.size(); ++fi)
      for (int t = 0; t < trials; ++t)
        train_cfgs.push_back(method_train_config(
            cfg, methods[mi], rank,
            detail::cell_seed(base, mi, fi, static_cast<std::size_t>(t))));
  cfg.check_consumed();

  auto cell_index = [&](std::size_t mi, std::size_t fi, int t) {
    return (mi * fractions.size() + fi) * static_cast<std::size_t>(trials) +
           static_cast<std::size_t>(t);
  };

  std::vector<std::function<void()>> jobs;
  for (std::size_t mi = 0; mi < methods.size(); ++mi)
    for (std::size_t fi = 0; fi < fractions.size(); ++fi)
      for (int t = 0; t < trials; ++t)
        jobs.push_back([&, mi, fi, t] {
          const std::size_t idx = cell_index(mi, fi, t);
          // One mask seed per trial: the held-out set is a shuffle prefix, so
          // every fraction of the same trial is scored on identical entries.
          const ObservationSet obs =
              completion_mask(mats[static_cast<std::size_t>(t)].matrix, fractions[fi],
                              holdout, base + 7919 * static_cast<std::uint64_t>(t));
          const TrainReport rep = train(obs, train_cfgs[idx]);
          const LinkKind link =
              link_for(methods[mi].loss, rep.model, train_cfgs[idx].sharpness);
          Cell cell;
          cell.rmse = rmse(rep.model, obs, link);
          cell.accuracy = accuracy_half(rep.model, obs, link);
          cell.best_epoch = rep.best_epoch;
          cell.epochs_run = rep.epochs_run;
          cells[idx] = cell;
        });
  detail::run_jobs(run.threads, jobs);

  auto detail_csv = detail::open_csv(run, "complete_" + mat_name + "_cells.csv",
                                     "method,fraction,trial,rmse,accuracy,best_epoch,epochs_run");
  for (std::size_t mi = 0; mi < methods.size(); ++mi)
    for (std::size_t fi = 0; fi < fractions.size(); ++fi)
      for (int t = 0; t < trials; ++t) {
        const Cell& c = cells[cell_index(mi, fi, t)];
        detail_csv << methods[mi].name << "," << detail::csv_num(fractions[fi]) << "," << t
                   << "," << detail::csv_num(c.rmse) << "," << detail::csv_num(c.accuracy)
                   << "," << c.best_epoch << "," << c.epochs_run << "\n";
      }

  auto summary = detail::open_csv(run, "complete_" + mat_name + "_summary.csv",
                                  "method,fraction,trials,mean_rmse,std_rmse,mean_accuracy");
  for (std::size_t mi = 0; mi < methods.size(); ++mi)
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
      std::vector<double> rmses, accs;
      for (int t = 0; t < trials; ++t) {
        rmses.push_back(cells[cell_index(mi, fi, t)].rmse);
        accs.push_back(cells[cell_index(mi, fi, t)].accuracy);
      }
      const auto rs = detail::summarize(rmses);
      const auto as = detail::summarize(accs);
      summary << methods[mi].name << "," << detail::csv_num(fractions[fi]) << "," << trials
              << "," << detail::csv_num(rs.mean) << "," << detail::csv_num(rs.stddev) << ","
              << detail::csv_num(as.mean) << "\n";
    }

  // Wide layout mirroring the published tables: one row per method, one
  // column per fraction, cells are mean held-out RMSE.
  std::string header = "method";
  for (double f : fractions) header += "," + detail::csv_num(f);
  auto table = detail::open_csv(run, "complete_" + mat_name + "_table.csv", header);
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    table << methods[mi].name;
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
      std::vector<double> rmses;
      for (int t = 0; t < trials; ++t) rmses.push_back(cells[cell_index(mi, fi, t)].rmse);
      table << "," << detail::csv_num(detail::summarize(rmses).mean);
    }
    table << "\n";
  }
  std::cout << "complete: wrote " << mat_name << " tables to " << run.out_dir << "\n";
}

// ---------------------------------------------------------------------------
// figure1: SVD residual curves vs the (constant) witness rank per family.

inline void cmd_figure1(const KeyValueConfig& cfg, const RunOptions& run) {
  const std::size_t n = cfg.get_size("n", 50);
  detail::require(n >= 8, "figure1: key 'n': must be >= 8");
  int k_max = cfg.get_int("k_max", 25);
  detail::require(k_max >= 1, "figure1: key 'k_max': must be >= 1");
  k_max = std::min(k_max, static_cast<int>(n));
  cfg.check_consumed();

  const auto families = figure_one_matrices(n);
  auto f = detail::open_csv(run, "figure1.csv", "family,witness_rank,k,sq_error");
  for (const auto& fam : families) {
    const auto curve = approx_rank_curve(fam.matrix, k_max);
    for (const auto& [k, err] : curve)
      f << fam.name << "," << fam.witness.u.n_cols << "," << k << ","
        << detail::csv_num(err) << "\n";
  }
  std::cout << "figure1: wrote " << families.size() << " family curves to " << run.out_dir
            << "\n";
}

// ---------------------------------------------------------------------------
// recommend: rating data, grid-tuned per (k, method) on validation RMSE.

inline void cmd_recommend(const KeyValueConfig& cfg, const RunOptions& run) {
  const std::uint64_t base = detail::base_seed_of(cfg, run);
  RatingsFormat fmt;
  fmt.min_rating = cfg.get_int("min_rating", 1);
  fmt.max_rating = cfg.get_int("max_rating", 5);
  detail::require(fmt.max_rating > fmt.min_rating,
                  "recommend: key 'max_rating': must exceed min_rating");
  const std::string train_file = cfg.require_string("train_file");

  RatingDataset ds;
  if (cfg.has("test_file")) {
    ds = load_ratings_pair(train_file, cfg.require_string("test_file"), fmt);
  } else {
    ds = load_ratings(train_file, fmt);
    const double holdout = cfg.get_double("holdout", 0.2);
    ds.obs = split_by_user(ds.obs, holdout, base);
  }
  detail::require(ds.obs.count(SplitTag::validation) > 0,
                  "recommend: dataset produced no validation entries");

  const auto ks = cfg.get_int_list("ks");
  detail::require(!ks.empty(), "recommend: missing required key 'ks'");
  for (int k : ks) detail::require(k >= 1, "recommend: key 'ks': ranks must be >= 1");
  const auto methods =
      parse_methods(cfg, {"linear", "round_learned", "multi_sigmoid_learned"});
  const auto grid_lr = cfg.get_double_list("grid_learning_rates", {0.01, 0.05, 0.1});
  const auto grid_l2 = cfg.get_double_list("grid_l2", {0.0, 1e-4, 1e-3});

  struct Cell {
    double lr = 0.0, l2 = 0.0;
    double rmse = std::numeric_limits<double>::quiet_NaN();
    double accuracy = std::numeric_limits<double>::quiet_NaN();
    bool diverged = false;
  };
  const std::size_t n_grid = grid_lr.size() * grid_l2.size();
  std::vector<Cell> cells(ks.size() * methods.size() * n_grid);
  std::vector<TrainConfig> train_cfgs;
  train_cfgs.reserve(cells.size());
  for (std::size_t ki = 0; ki < ks.size(); ++ki)
    for (std::size_t mi = 0; mi < methods.size(); ++mi)
      for (std::size_t gi = 0; gi < n_grid; ++gi) {
        TrainConfig tc = method_train_config(cfg, methods[mi],
                                             static_cast<std::size_t>(ks[ki]),
                                             detail::cell_seed(base, ki, mi, gi));
        tc.learning_rate = grid_lr[gi / grid_l2.size()];
        tc.l2_reg = grid_l2[gi % grid_l2.size()];
        train_cfgs.push_back(tc);
      }
  cfg.check_consumed();

  auto cell_index = [&](std::size_t ki, std::size_t mi, std::size_t gi) {
    return (ki * methods.size() + mi) * n_grid + gi;
  };
  std::vector<std::function<void()>> jobs;
  for (std::size_t ki = 0; ki < ks.size(); ++ki)
    for (std::size_t mi = 0; mi < methods.size(); ++mi)
      for (std::size_t gi = 0; gi < n_grid; ++gi)
        jobs.push_back([&, ki, mi, gi] {
          const std::size_t idx = cell_index(ki, mi, gi);
          Cell cell;
          cell.lr = train_cfgs[idx].learning_rate;
          cell.l2 = train_cfgs[idx].l2_reg;
          try {
            const TrainReport rep = train(ds.obs, train_cfgs[idx]);
            const LinkKind link =
                link_for(methods[mi].loss, rep.model, train_cfgs[idx].sharpness);
            cell.rmse = rmse(rep.model, ds.obs, link);
            cell.accuracy = accuracy_half(rep.model, ds.obs, link);
          } catch (const DivergenceError&) {
            cell.diverged = true;  // a bad grid point is data, not a failure
          }
          cells[idx] = cell;
        });
  detail::run_jobs(run.threads, jobs);

  auto grid_csv = detail::open_csv(run, "recommend_grid.csv",
                                   "k,method,learning_rate,l2,rmse,accuracy,diverged");
  for (std::size_t ki = 0; ki < ks.size(); ++ki)
    for (std::size_t mi = 0; mi < methods.size(); ++mi)
      for (std::size_t gi = 0; gi < n_grid; ++gi) {
        const Cell& c = cells[cell_index(ki, mi, gi)];
        grid_csv << ks[ki] << "," << methods[mi].name << "," << detail::csv_num(c.lr) << ","
                 << detail::csv_num(c.l2) << "," << detail::csv_num(c.rmse) << ","
                 << detail::csv_num(c.accuracy) << "," << (c.diverged ? 1 : 0) << "\n";
      }

  auto best_csv = detail::open_csv(run, "recommend.csv",
                                   "k,method,learning_rate,l2,rmse,accuracy");
  for (std::size_t ki = 0; ki < ks.size(); ++ki)
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      const Cell* best = nullptr;
      for (std::size_t gi = 0; gi < n_grid; ++gi) {
        const Cell& c = cells[cell_index(ki, mi, gi)];
        if (c.diverged) continue;
        if (!best || c.rmse < best->rmse) best = &c;
      }
      if (!best)
        throw std::runtime_error("recommend: every grid point diverged for method " +
                                 methods[mi].name + " at k=" + std::to_string(ks[ki]));
      best_csv << ks[ki] << "," << methods[mi].name << "," << detail::csv_num(best->lr)
               << "," << detail::csv_num(best->l2) << "," << detail::csv_num(best->rmse)
               << "," << detail::csv_num(best->accuracy) << "\n";
    }
  std::cout << "recommend: wrote grid and selection to " << run.out_dir << "\n";
}

// ---------------------------------------------------------------------------
// analyze: JSON-lines report over whichever checks the inputs support.

inline void cmd_analyze(const KeyValueConfig& cfg, const RunOptions& run) {
  using nlohmann::json;
  const std::uint64_t base = detail::base_seed_of(cfg, run);

  std::optional<OrdinalMatrix> y;
  std::vector<double> taus;
  std::optional<GrrWitness> generated_witness;
  if (cfg.has("matrix_file")) {
    const std::string path = cfg.require_string("matrix_file");
    auto is = detail::open_input(path);
    y = read_ordinal_matrix(is, path);
  } else if (cfg.has("family")) {
    const GeneratedMatrix gen = generate(synthetic_from_config(cfg, base));
    y = gen.matrix;
    generated_witness = gen.witness;
    taus = gen.witness.thresholds;
  }
  if (cfg.has("thresholds")) taus = cfg.get_double_list("thresholds");
  if (taus.empty() && y) taus = auto_thresholds(y->max_level);

  std::vector<std::string> checks;
  if (cfg.has("checks")) {
    checks = cfg.get_string_list("checks", {});
  } else {
    if (y) {
      checks.push_back("structure_bounds");
      if (y->n_rows <= 8 && y->n_cols <= 8) checks.push_back("rank1");
      if (generated_witness || cfg.has("witness_file")) checks.push_back("witness");
    }
    checks.push_back("lemmas");
    if (cfg.has("model_file") && cfg.has("observations_file")) checks.push_back("uniqueness");
  }
  detail::require(!checks.empty(), "analyze: nothing to analyze (no inputs given)");

  std::filesystem::create_directories(run.out_dir);
  auto out = detail::open_output(run.out_dir + "/analyze.jsonl");
  auto emit = [&](const json& j) {
    out << j.dump() << "\n";
    std::cout << j.dump() << "\n";
  };

  for (const std::string& check : checks) {
    if (check == "structure_bounds") {
      detail::require(y.has_value(), "analyze: structure_bounds needs a matrix");
      const StructureBound b = rank_lower_bound_structures(*y);
      emit(json{{"check", "structure_bounds"},
                {"identity_size", b.identity_size},
                {"upper_triangle_size", b.upper_triangle_size},
                {"distinct_row_bound", b.distinct_row_bound},
                {"rank_lower_bound", b.bound()}});
    } else if (check == "rank1") {
      detail::require(y.has_value(), "analyze: rank1 needs a matrix");
      const double res = cfg.get_double("resolution", 1e-3);
      const Rank1Decision d = rank1_grf_representable(*y, taus, res);
      json j{{"check", "rank1"},
             {"representable", d.representable},
             {"resolution", d.resolution},
             {"note", d.note}};
      if (d.representable) j["witness_margin"] = d.witness->min_margin;
      emit(j);
    } else if (check == "witness") {
      detail::require(y.has_value(), "analyze: witness check needs a matrix");
      GrrWitness w;
      std::string origin;
      if (cfg.has("witness_file")) {
        w = load_witness(cfg.require_string("witness_file"));
        origin = cfg.get_string("witness_file", "");
      } else {
        detail::require(generated_witness.has_value(),
                        "analyze: witness check needs witness_file or a synthetic family");
        w = *generated_witness;
        origin = "generator";
      }
      emit(json{{"check", "witness"},
                {"source", origin},
                {"rank", w.u.n_cols},
                {"min_margin", w.min_margin},
                {"verified", verify_witness(*y, w)}});
    } else if (check == "lemmas") {
      const int trials = cfg.get_int("lemma_trials", 500);
      const LemmaCheckReport rep = check_lemma_suite(trials, base);
      emit(json{{"check", "lemmas"},
                {"trials", rep.trials},
                {"violations", rep.violations},
                {"failures", rep.failures}});
    } else if (check == "uniqueness") {
      const FactorModel model = load_model(cfg.require_string("model_file"));
      const std::string obs_path = cfg.require_string("observations_file");
      auto is = detail::open_input(obs_path);
      const ObservationSet obs = read_triplets(is, obs_path);
      const OrdinalMatrix ref = grf(predict_real(model), model.thresholds);
      const double eps = cfg.get_double("epsilon", 0.5);
      const UniquenessReport rep = uniqueness_check(ref, obs, model, eps);
      json violations = json::array();
      for (const auto& e : rep.entries) {
        if (e.necessary_ok && e.sufficient_ok) continue;
        if (violations.size() >= 50) break;
        violations.push_back(json{{"row", e.row},
                                  {"col", e.col},
                                  {"coeff_abs_sum", e.coeff_abs_sum},
                                  {"necessary_ok", e.necessary_ok},
                                  {"sufficient_ok", e.sufficient_ok}});
      }
      emit(json{{"check", "uniqueness"},
                {"entries_checked", rep.entries.size()},
                {"unverifiable_columns", rep.unverifiable_columns},
                {"t_min", rep.t_min},
                {"t_max", rep.t_max},
                {"epsilon", rep.epsilon_used},
                {"all_necessary", rep.all_necessary()},
                {"all_sufficient", rep.all_sufficient()},
                {"violations", violations}});
    } else {
      throw std::invalid_argument("analyze: key 'checks': unknown check '" + check + "'");
    }
  }
  cfg.check_consumed();
}

// ---------------------------------------------------------------------------
// lemmas: run the constructive property suite; callers map !all_passed to a
// nonzero exit.

inline LemmaCheckReport cmd_lemmas(const KeyValueConfig& cfg, const RunOptions& run) {
  const std::uint64_t base = detail::base_seed_of(cfg, run);
  const int trials = cfg.get_int("trials", 500);
  cfg.check_consumed();
  const LemmaCheckReport rep = check_lemma_suite(trials, base);
  std::cout << "lemmas: trials=" << rep.trials << " violations=" << rep.violations << "\n";
  for (const auto& f : rep.failures) std::cout << "  " << f << "\n";
  return rep;
}

}  // namespace roundrank
