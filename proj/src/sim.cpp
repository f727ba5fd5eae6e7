#include "finematch/sim.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "finematch/balance.hpp"
#include "finematch/match_network.hpp"
#include "finematch/two_step.hpp"

namespace finematch {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Samplers are hand-rolled on top of mt19937_64 so that streams depend only on
// the engine, not on library-specific distribution algorithms.
class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : engine_(seed) {}

  double uniform01() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  int categorical(const std::vector<double>& probs) {
    const double u = uniform01();
    double cum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      cum += probs[i];
      if (u < cum) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

const std::vector<std::string> kMatchCovariates = {"V1", "V2", "V3", "V4", "V5"};

MetricStats stats_of(const std::vector<double>& values) {
  MetricStats stats;
  if (values.empty()) {
    stats.sd_defined = false;
    return stats;
  }
  stats.mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  if (values.size() < 2) {
    stats.sd = 0.0;
    stats.sd_defined = false;
    return stats;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - stats.mean) * (v - stats.mean);
  stats.sd = std::sqrt(ss / (values.size() - 1));
  return stats;
}

RepMetrics metrics_of(const Cohort& cohort, const MatchResult& result, double seconds) {
  RepMetrics metrics;
  metrics.seconds = seconds;
  metrics.n_c = result.matched_control_count();
  metrics.set_sizes = set_structure(result);

  const int c1 = *cohort.covariate_index("V1");
  std::vector<double> treated_values;
  std::vector<double> control_values;
  std::vector<std::int64_t> matched_per_level(cohort.level_count(), 0);
  {
    std::set<std::string> matched;
    for (const auto& set : result.sets) matched.insert(set.control_ids.begin(), set.control_ids.end());
    for (int i : cohort.treated_indices()) treated_values.push_back(cohort.units()[i].covariates[c1]);
    for (int i : cohort.control_indices()) {
      if (matched.count(cohort.units()[i].id)) {
        control_values.push_back(cohort.units()[i].covariates[c1]);
        matched_per_level[cohort.units()[i].fb_level - 1] += 1;
      }
    }
  }
  const auto sd_pre = pooled_pre_sd(cohort, c1);
  metrics.smd_c1 = sd_pre ? smd(treated_values, control_values, *sd_pre).value_or(0.0) : 0.0;
  metrics.tv_c6 = metrics.n_c > 0
                      ? tv_distance(std::span<const std::int64_t>(cohort.treated_per_level()),
                                    std::span<const std::int64_t>(matched_per_level))
                      : 1.0;
  return metrics;
}

}  // namespace

void SimConfig::validate() const {
  if (n <= 0) throw std::invalid_argument("sim config: n must be positive");
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("sim config: p must be in (0,1)");
  if (replications < 1) throw std::invalid_argument("sim config: replications must be >= 1");
  if (min_controls < 1 || max_controls < min_controls) {
    throw std::invalid_argument("sim config: need 1 <= L <= U");
  }
  if (k_cap < 1) throw std::invalid_argument("sim config: k_cap must be >= 1");
  if (min_stratum_size < 0) throw std::invalid_argument("sim config: min_stratum_size must be >= 0");
  if (cost_scale <= 0) throw std::invalid_argument("sim config: cost_scale must be positive");
  if (kappa_fracs.empty()) throw std::invalid_argument("sim config: kappa_fracs must not be empty");
  for (const auto& frac : kappa_fracs) {
    const Ratio r = Ratio::from_decimal(frac);
    if (r.num() == 0 || Ratio(1, 1) < r) {
      throw std::invalid_argument("sim config: kappa fraction '" + frac + "' must be in (0, 1]");
    }
  }
}

std::string SimConfig::digest() const {
  std::ostringstream out;
  out << n << "|" << p << "|" << mu << "|" << replications << "|" << seed << "|" << min_controls
      << "|" << max_controls << "|" << k_cap << "|" << min_stratum_size << "|" << cost_scale;
  for (const auto& frac : kappa_fracs) out << "|" << frac;
  return out.str();
}

SimConfig parse_sim_config(std::istream& in) {
  SimConfig config;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto strip = [](std::string s) {
      const auto begin = s.find_first_not_of(" \t\r");
      const auto end = s.find_last_not_of(" \t\r");
      return begin == std::string::npos ? std::string{} : s.substr(begin, end - begin + 1);
    };
    const std::string stripped = strip(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("sim config line " + std::to_string(line_number) +
                                  ": expected key = value");
    }
    const std::string key = strip(stripped.substr(0, eq));
    const std::string value = strip(stripped.substr(eq + 1));
    try {
      if (key == "n") {
        config.n = std::stoi(value);
      } else if (key == "p") {
        config.p = std::stod(value);
      } else if (key == "mu") {
        config.mu = std::stod(value);
      } else if (key == "replications") {
        config.replications = std::stoi(value);
      } else if (key == "seed") {
        config.seed = std::stoull(value);
      } else if (key == "kappa_fracs") {
        config.kappa_fracs.clear();
        std::istringstream parts(value);
        std::string part;
        while (std::getline(parts, part, ',')) {
          const auto token = strip(part);
          if (!token.empty()) config.kappa_fracs.push_back(token);
        }
      } else if (key == "L") {
        config.min_controls = std::stoi(value);
      } else if (key == "U") {
        config.max_controls = std::stoi(value);
      } else if (key == "k_cap") {
        config.k_cap = std::stoi(value);
      } else if (key == "min_stratum_size") {
        config.min_stratum_size = std::stoi(value);
      } else if (key == "cost_scale") {
        config.cost_scale = std::stoll(value);
      } else {
        throw std::invalid_argument("sim config line " + std::to_string(line_number) +
                                    ": unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception&) {
      throw std::invalid_argument("sim config line " + std::to_string(line_number) +
                                  ": bad value for '" + key + "'");
    }
  }
  config.validate();
  return config;
}

std::string sim_config_text(const SimConfig& config) {
  std::ostringstream out;
  out << "n = " << config.n << "\n";
  out << "p = " << config.p << "\n";
  out << "mu = " << config.mu << "\n";
  out << "replications = " << config.replications << "\n";
  out << "seed = " << config.seed << "\n";
  out << "kappa_fracs = ";
  for (std::size_t i = 0; i < config.kappa_fracs.size(); ++i) {
    if (i) out << ",";
    out << config.kappa_fracs[i];
  }
  out << "\n";
  out << "L = " << config.min_controls << "\n";
  out << "U = " << config.max_controls << "\n";
  out << "k_cap = " << config.k_cap << "\n";
  out << "min_stratum_size = " << config.min_stratum_size << "\n";
  out << "cost_scale = " << config.cost_scale << "\n";
  return out.str();
}

Cohort generate_dataset(const SimConfig& config, int replication, GenerationLog* log) {
  config.validate();
  if (replication < 0) throw std::invalid_argument("generate_dataset: replication must be >= 0");

  const std::vector<double> treated_c6 = {0.07, 0.48, 0.45};
  const std::vector<double> control_c6 = {0.10, 0.50, 0.40};

  for (int attempt = 0; attempt < 1000; ++attempt) {
    const std::uint64_t sub_seed =
        splitmix64(config.seed ^ splitmix64(static_cast<std::uint64_t>(replication) * 2 + 1) ^
                   splitmix64(static_cast<std::uint64_t>(attempt) * 2));
    Sampler sampler(sub_seed);

    std::vector<RawRecord> records;
    records.reserve(config.n);
    std::vector<std::int64_t> treated_level(3, 0), control_level(3, 0);
    std::int64_t treated_total = 0;
    for (int i = 0; i < config.n; ++i) {
      RawRecord record;
      std::ostringstream id;
      id << "u" << std::setw(5) << std::setfill('0') << i;
      record.id = id.str();
      record.treated = sampler.bernoulli(config.p);
      record.covariates.resize(5);
      record.covariates[0] = sampler.normal() + (record.treated ? config.mu : 0.0);
      for (int j = 1; j < 5; ++j) record.covariates[j] = sampler.normal();
      const int level = sampler.categorical(record.treated ? treated_c6 : control_c6);
      record.fb_label = std::to_string(level + 1);
      if (record.treated) {
        treated_level[level] += 1;
        treated_total += 1;
      } else {
        control_level[level] += 1;
      }
      records.push_back(std::move(record));
    }

    std::string reason;
    if (treated_total == 0 || treated_total == config.n) {
      reason = "degenerate draw: all units in one arm";
    } else {
      for (int b = 0; b < 3 && reason.empty(); ++b) {
        if (treated_level[b] > control_level[b]) {
          reason = "level " + std::to_string(b + 1) + " has " + std::to_string(treated_level[b]) +
                   " treated vs " + std::to_string(control_level[b]) + " controls";
        }
      }
    }
    if (!reason.empty()) {
      if (log) {
        log->attempts += 1;
        log->regenerated.push_back(reason);
      }
      continue;
    }
    return build_cohort(records, {"V1", "V2", "V3", "V4", "V5"});
  }
  throw std::runtime_error("generate_dataset: could not draw a feasible cohort in 1000 attempts");
}

SimRun run_replications(const SimConfig& config, int threads) {
  config.validate();
  const auto wall_start = std::chrono::steady_clock::now();

  const int method_count = static_cast<int>(config.kappa_fracs.size()) + 1;
  std::vector<std::string> method_names;
  for (const auto& frac : config.kappa_fracs) {
    const Ratio r = Ratio::from_decimal(frac);
    method_names.push_back(r == Ratio(1, 1) ? "OS_kappa_max" : "OS_" + frac);
  }
  method_names.push_back("TS");

  // Per replication x method slots; filled by workers, reduced sequentially.
  std::vector<std::vector<RepMetrics>> slots(config.replications,
                                             std::vector<RepMetrics>(method_count));

  const auto run_one = [&](int rep) {
    const Cohort cohort = generate_dataset(config, rep);
    const Ratio ceiling = kappa_max(cohort);

    for (std::size_t f = 0; f < config.kappa_fracs.size(); ++f) {
      const auto start = std::chrono::steady_clock::now();
      try {
        Ratio kappa = Ratio::from_decimal(config.kappa_fracs[f]) * ceiling;
        if (kappa < Ratio(1, 1)) kappa = Ratio(1, 1);  // kappa is defined on [1, kappa_max]
        MatchConfig match_config;
        match_config.min_controls = config.min_controls;
        match_config.max_controls = config.max_controls;
        match_config.kappa = kappa;
        match_config.cost_scale = config.cost_scale;
        const auto result = one_shot_match(cohort, kMatchCovariates, match_config);
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (result) {
          slots[rep][f] = metrics_of(cohort, *result, seconds);
        } else {
          slots[rep][f].failed = true;
          slots[rep][f].failure = "one-shot match infeasible";
        }
      } catch (const std::exception& e) {
        slots[rep][f].failed = true;
        slots[rep][f].failure = e.what();
      }
    }

    try {
      const auto start = std::chrono::steady_clock::now();
      const TwoStepResult two_step =
          two_step_match(cohort, kMatchCovariates, kMatchCovariates, config.k_cap,
                         config.min_stratum_size, config.cost_scale);
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      RepMetrics metrics = metrics_of(cohort, two_step.pooled, seconds);
      metrics.downgraded = two_step.downgrade_count > 0;
      slots[rep][method_count - 1] = metrics;
    } catch (const std::exception& e) {
      slots[rep][method_count - 1].failed = true;
      slots[rep][method_count - 1].failure = e.what();
    }
  };

  int worker_count = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  if (worker_count < 1) worker_count = 1;
  worker_count = std::min(worker_count, config.replications);

  if (worker_count == 1) {
    for (int rep = 0; rep < config.replications; ++rep) run_one(rep);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(worker_count);
    for (int w = 0; w < worker_count; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (int rep = next.fetch_add(1); rep < config.replications; rep = next.fetch_add(1)) {
            run_one(rep);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& worker : workers) worker.join();
    for (const auto& error : errors) {
      if (error) std::rethrow_exception(error);
    }
  }

  SimRun run;
  run.config = config;
  const std::string digest = config.digest();
  for (int m = 0; m < method_count; ++m) {
    SimSummary summary;
    summary.method = method_names[m];
    summary.config_digest = digest;
    summary.replications = config.replications;
    summary.reps.reserve(config.replications);

    std::vector<double> smds, tvs, ncs, secs;
    std::map<int, std::vector<double>> sizes;
    for (int rep = 0; rep < config.replications; ++rep) {
      const RepMetrics& metrics = slots[rep][m];
      summary.reps.push_back(metrics);
      if (metrics.failed) {
        summary.failed_reps += 1;
        continue;  // excluded from aggregates, counted explicitly
      }
      smds.push_back(metrics.smd_c1);
      tvs.push_back(metrics.tv_c6);
      ncs.push_back(static_cast<double>(metrics.n_c));
      secs.push_back(metrics.seconds);
      for (int size = 1; size <= config.max_controls; ++size) {
        const auto it = metrics.set_sizes.find(size);
        sizes[size].push_back(it == metrics.set_sizes.end() ? 0.0
                                                            : static_cast<double>(it->second));
      }
    }
    summary.smd_c1 = stats_of(smds);
    summary.tv_c6 = stats_of(tvs);
    summary.n_c = stats_of(ncs);
    summary.seconds = stats_of(secs);
    for (auto& [size, values] : sizes) summary.set_sizes[size] = stats_of(values);
    run.methods.push_back(std::move(summary));
  }

  for (int rep = 0; rep < config.replications; ++rep) {
    if (slots[rep][method_count - 1].downgraded) run.reps_with_downgrade += 1;
  }
  run.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return run;
}

ComparisonTable compare_methods(const std::vector<SimSummary>& summaries) {
  if (summaries.empty()) throw std::invalid_argument("compare_methods: no summaries");
  for (const auto& summary : summaries) {
    if (summary.config_digest != summaries.front().config_digest) {
      throw std::invalid_argument("compare_methods: summaries come from different configurations");
    }
  }

  ComparisonTable table;
  for (const auto& summary : summaries) table.methods.push_back(summary.method);

  const auto collect = [&](const std::string& name, auto getter) {
    std::vector<MetricStats> row;
    for (const auto& summary : summaries) row.push_back(getter(summary));
    table.rows.emplace_back(name, std::move(row));
  };
  collect("SMD_C1", [](const SimSummary& s) { return s.smd_c1; });
  collect("TV_C6", [](const SimSummary& s) { return s.tv_c6; });
  collect("n_c", [](const SimSummary& s) { return s.n_c; });

  const SimSummary* two_step = nullptr;
  for (const auto& summary : summaries) {
    if (summary.method == "TS") two_step = &summary;
  }
  if (two_step) {
    for (const auto& summary : summaries) {
      if (summary.method == "TS") continue;
      int wins = 0, comparable = 0;
      for (std::size_t rep = 0; rep < summary.reps.size() && rep < two_step->reps.size(); ++rep) {
        if (summary.reps[rep].failed || two_step->reps[rep].failed) continue;
        ++comparable;
        if (summary.reps[rep].n_c > two_step->reps[rep].n_c) ++wins;
      }
      table.dominance_vs_two_step[summary.method] =
          comparable > 0 ? static_cast<double>(wins) / comparable : 0.0;
    }
  }
  return table;
}

std::string render_comparison(const SimRun& run) {
  const ComparisonTable table = compare_methods(run.methods);
  std::ostringstream out;
  out << std::fixed;
  out << "Simulation: n=" << run.config.n << ", p=" << run.config.p << ", mu=" << run.config.mu
      << ", R=" << run.config.replications << ", seed=" << run.config.seed << "\n\n";

  out << std::left << std::setw(22) << "Metric";
  for (const auto& method : table.methods) out << std::right << std::setw(18) << method;
  out << "\n";

  const auto print_row = [&](const std::string& name, const std::vector<MetricStats>& stats,
                             double scale, int precision) {
    out << std::left << std::setw(22) << name;
    for (const auto& stat : stats) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(precision) << stat.mean * scale << " ("
           << std::setprecision(precision) << stat.sd * scale << ")";
      out << std::right << std::setw(18) << cell.str();
      if (!stat.sd_defined) out << "*";
    }
    out << "\n";
  };

  for (const auto& [name, stats] : table.rows) {
    if (name == "SMD_C1") print_row("SMD_C1", stats, 1.0, 3);
    if (name == "TV_C6") print_row("TV_C6 (%)", stats, 100.0, 3);
    if (name == "n_c") print_row("n_c", stats, 1.0, 0);
  }

  out << "Matched set structure\n";
  const char* size_names[] = {"", "Pair", "Triplet", "Quadruplet", "Quintuplet"};
  for (int size = 1; size <= run.config.max_controls; ++size) {
    std::vector<MetricStats> stats;
    for (const auto& summary : run.methods) {
      const auto it = summary.set_sizes.find(size);
      stats.push_back(it == summary.set_sizes.end() ? MetricStats{} : it->second);
    }
    const std::string label = size <= 4 ? std::string("  ") + size_names[size]
                                        : "  1-to-" + std::to_string(size);
    print_row(label, stats, 1.0, 0);
  }
  {
    std::vector<MetricStats> stats;
    for (const auto& summary : run.methods) stats.push_back(summary.seconds);
    print_row("Time (s)", stats, 1.0, 1);
  }

  out << "\nReplications with a two-step downgrade: " << run.reps_with_downgrade << " / "
      << run.config.replications << "\n";
  for (const auto& [method, fraction] : table.dominance_vs_two_step) {
    out << "n_c(" << method << ") > n_c(TS) in " << std::setprecision(1) << 100.0 * fraction
        << "% of replications\n";
  }
  out << "\n* sample SD undefined (single replication)\n";
  return out.str();
}

// Wall-clock timings are reported in the aligned-text comparison only; this
// file must be byte-identical across reruns with the same seed.
std::string summary_csv(const SimRun& run) {
  std::ostringstream out;
  out << "method,metric,mean,sd,sd_defined\n";
  out << std::setprecision(10);
  const auto emit = [&](const std::string& method, const std::string& metric,
                        const MetricStats& stats) {
    out << method << "," << metric << "," << stats.mean << "," << stats.sd << ","
        << (stats.sd_defined ? 1 : 0) << "\n";
  };
  for (const auto& summary : run.methods) {
    emit(summary.method, "smd_c1", summary.smd_c1);
    emit(summary.method, "tv_c6", summary.tv_c6);
    emit(summary.method, "n_c", summary.n_c);
    for (const auto& [size, stats] : summary.set_sizes) {
      emit(summary.method, "sets_1_to_" + std::to_string(size), stats);
    }
  }
  return out.str();
}

}  // namespace finematch
