#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "finematch/balance.hpp"
#include "finematch/cohort.hpp"
#include "finematch/csv.hpp"
#include "finematch/manifest.hpp"
#include "finematch/match_network.hpp"
#include "finematch/sim.hpp"
#include "finematch/two_step.hpp"
#include "finematch/version.hpp"

#include <nlohmann/json.hpp>

namespace {

namespace fm = finematch;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitInputError = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitInternalError = 3;

struct CommonOptions {
  std::string input;
  std::string fb_column;
  std::vector<std::string> covariates;
  std::vector<std::string> exclude;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOptions* options, bool needs_out_dir) {
  cmd->add_option("--input", options->input, "input cohort CSV")->required();
  cmd->add_option("--fb-column", options->fb_column, "fine-balance (nominal) column name")
      ->required();
  cmd->add_option("--covariates", options->covariates,
                  "comma-separated covariate columns (default: all numeric columns)")
      ->delimiter(',');
  cmd->add_option("--exclude", options->exclude, "columns to exclude from covariate autodetection")
      ->delimiter(',');
  auto* out = cmd->add_option("--out-dir", options->out_dir, "output directory");
  if (needs_out_dir) out->required();
}

fm::LoadedCohort load(const CommonOptions& options) {
  fm::CohortCsvOptions csv_options;
  csv_options.fb_column = options.fb_column;
  csv_options.covariates = options.covariates;
  csv_options.exclude = options.exclude;
  return fm::load_cohort_csv(options.input, csv_options);
}

fm::DistanceMetric parse_metric(const std::string& name) {
  if (name == "mahalanobis") return fm::DistanceMetric::mahalanobis;
  if (name == "robust") return fm::DistanceMetric::robust_mahalanobis;
  throw std::invalid_argument("unknown metric '" + name + "' (use mahalanobis or robust)");
}

// Resolves --kappa / --kappa-frac / --k into an exact rational.
fm::Ratio resolve_kappa(const fm::Cohort& cohort, const std::string& kappa_text,
                        const std::string& kappa_frac_text) {
  const fm::Ratio ceiling = fm::kappa_max(cohort);
  if (!kappa_frac_text.empty()) {
    const fm::Ratio frac = fm::Ratio::from_decimal(kappa_frac_text);
    if (frac.num() == 0 || fm::Ratio(1, 1) < frac) {
      throw std::invalid_argument("--kappa-frac must be in (0, 1]");
    }
    fm::Ratio kappa = frac * ceiling;
    if (kappa < fm::Ratio(1, 1)) kappa = fm::Ratio(1, 1);
    return kappa;
  }
  const fm::Ratio kappa = fm::Ratio::from_decimal(kappa_text);
  if (ceiling < kappa) {
    std::ostringstream message;
    message << "kappa exceeds kappa_max ≈ " << std::setprecision(5) << std::fixed
            << ceiling.value();
    throw std::invalid_argument(message.str());
  }
  if (kappa < fm::Ratio(1, 1)) {
    throw std::invalid_argument("kappa must be >= 1");
  }
  return kappa;
}

void write_file(const fs::path& path, const std::string& contents,
                std::vector<std::string>* outputs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write output file '" + path.string() + "'");
  out << contents;
  outputs->push_back(path.string());
}

void write_manifest(const fs::path& out_dir, fm::RunManifest manifest,
                    std::chrono::steady_clock::time_point start) {
  manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const fs::path path = out_dir / "manifest.json";
  manifest.outputs.push_back(path.string());
  std::ofstream out(path);
  out << manifest.to_json() << "\n";
}

int run_match(const CommonOptions& common, const std::string& kappa_text,
              const std::string& kappa_frac_text, int min_controls, int max_controls,
              const std::string& metric_name, std::int64_t cost_scale,
              const std::string& dump_network_path, const std::string& dump_distances_path) {
  const auto start = std::chrono::steady_clock::now();
  const fm::LoadedCohort loaded = load(common);
  for (const auto& warning : loaded.warnings) std::cerr << "warning: " << warning << "\n";

  fm::MatchConfig config;
  config.min_controls = min_controls;
  config.max_controls = max_controls;
  config.kappa = resolve_kappa(loaded.cohort, kappa_text, kappa_frac_text);
  config.cost_scale = cost_scale;

  const fm::FeasibilityReport feasibility = fm::check_feasibility(loaded.cohort, config);
  if (!feasibility.feasible) {
    std::cerr << "infeasible design:\n" << feasibility.to_string();
    return kExitInfeasible;
  }

  const fm::DistanceMatrix distances =
      fm::distance_matrix(loaded.cohort, common.covariates, parse_metric(metric_name));
  if (!dump_distances_path.empty()) {
    std::ofstream dump(dump_distances_path);
    if (!dump) throw std::runtime_error("cannot write '" + dump_distances_path + "'");
    fm::write_distance_csv(distances, dump);
  }
  if (!dump_network_path.empty()) {
    const fm::BuiltNetwork built = fm::build_network(loaded.cohort, distances, config);
    std::ofstream dump(dump_network_path);
    if (!dump) throw std::runtime_error("cannot write '" + dump_network_path + "'");
    fm::write_dimacs(built.network, dump);
  }

  const auto result = fm::one_shot_match(loaded.cohort, distances, config);
  if (!result) {
    std::cerr << "infeasible design:\n" << fm::check_feasibility(loaded.cohort, config).to_string();
    return kExitInfeasible;
  }

  fs::create_directories(common.out_dir);
  const fs::path out_dir(common.out_dir);
  const fm::BalanceReport balance =
      fm::balance_report(loaded.cohort, *result, common.covariates);

  fm::RunManifest manifest;
  manifest.command = "match";
  manifest.config["input"] = common.input;
  manifest.config["fb_column"] = common.fb_column;
  manifest.config["kappa"] = result->kappa_used.str();
  manifest.config["L"] = std::to_string(min_controls);
  manifest.config["U"] = std::to_string(max_controls);
  manifest.config["metric"] = metric_name;
  manifest.config["cost_scale"] = std::to_string(cost_scale);
  manifest.input_digests[common.input] = fm::file_digest(common.input);

  {
    std::ostringstream csv;
    fm::write_match_csv(*result, csv);
    write_file(out_dir / "matched_sets.csv", csv.str(), &manifest.outputs);
  }
  write_file(out_dir / "match.json", fm::match_result_json(loaded.cohort, *result) + "\n",
             &manifest.outputs);
  write_file(out_dir / "balance.txt", fm::balance_report_text(balance), &manifest.outputs);
  write_file(out_dir / "balance.json", fm::balance_report_json(balance) + "\n", &manifest.outputs);
  write_manifest(out_dir, std::move(manifest), start);

  std::cout << "matched " << result->matched_control_count() << " controls to "
            << loaded.cohort.treated_count() << " treated units; discarded "
            << result->discarded_controls.size() << "; total distance " << result->total_distance
            << "\n";
  return kExitOk;
}

int run_twostep(const CommonOptions& common, const std::vector<std::string>& propensity_covariates,
                int k_cap, int min_stratum, const std::string& metric_name,
                std::int64_t cost_scale) {
  const auto start = std::chrono::steady_clock::now();
  // Ingest the union of matching and propensity covariates; each stage then
  // works on its own subset.
  CommonOptions ingest = common;
  if (!ingest.covariates.empty()) {
    for (const auto& name : propensity_covariates) {
      if (std::find(ingest.covariates.begin(), ingest.covariates.end(), name) ==
          ingest.covariates.end()) {
        ingest.covariates.push_back(name);
      }
    }
  }
  const fm::LoadedCohort loaded = load(ingest);
  for (const auto& warning : loaded.warnings) std::cerr << "warning: " << warning << "\n";

  const fm::TwoStepResult result =
      fm::two_step_match(loaded.cohort, common.covariates, propensity_covariates, k_cap,
                         min_stratum, cost_scale, parse_metric(metric_name));

  fs::create_directories(common.out_dir);
  const fs::path out_dir(common.out_dir);
  const fm::BalanceReport balance =
      fm::balance_report(loaded.cohort, result.pooled, common.covariates);

  fm::RunManifest manifest;
  manifest.command = "twostep";
  manifest.config["input"] = common.input;
  manifest.config["fb_column"] = common.fb_column;
  manifest.config["k_cap"] = std::to_string(k_cap);
  manifest.config["min_stratum_size"] = std::to_string(min_stratum);
  manifest.config["metric"] = metric_name;
  manifest.config["cost_scale"] = std::to_string(cost_scale);
  manifest.input_digests[common.input] = fm::file_digest(common.input);

  nlohmann::json strata = nlohmann::json::array();
  for (const auto& log : result.strata) {
    nlohmann::json s;
    s["interval"] = log.interval_label;
    s["n_treated"] = log.n_treated;
    s["n_controls"] = log.n_controls;
    s["attempted_k"] = log.attempted_k;
    if (log.achieved_k) {
      s["achieved_k"] = *log.achieved_k;
    } else {
      s["achieved_k"] = nullptr;
    }
    s["merged_from"] = log.merged_from;
    s["attempts"] = nlohmann::json::array();
    for (const auto& attempt : log.attempts) {
      nlohmann::json a;
      a["k"] = attempt.k;
      a["feasible"] = attempt.feasible;
      if (!attempt.failure_detail.empty()) a["failure"] = attempt.failure_detail;
      s["attempts"].push_back(std::move(a));
    }
    strata.push_back(std::move(s));
  }
  nlohmann::json trace;
  trace["strata"] = std::move(strata);
  trace["downgrade_count"] = result.downgrade_count;
  trace["unmatched_treated"] = result.unmatched_treated;

  {
    std::ostringstream csv;
    fm::write_match_csv(result.pooled, csv);
    write_file(out_dir / "matched_sets.csv", csv.str(), &manifest.outputs);
  }
  write_file(out_dir / "match.json", fm::match_result_json(loaded.cohort, result.pooled) + "\n",
             &manifest.outputs);
  write_file(out_dir / "strata_log.json", trace.dump(2) + "\n", &manifest.outputs);
  write_file(out_dir / "balance.txt", fm::balance_report_text(balance), &manifest.outputs);
  write_file(out_dir / "balance.json", fm::balance_report_json(balance) + "\n", &manifest.outputs);
  write_manifest(out_dir, std::move(manifest), start);

  std::cout << "two-step: " << result.pooled.sets.size() << " matched sets, "
            << result.pooled.matched_control_count() << " matched controls, "
            << result.downgrade_count << " stratum downgrades";
  if (!result.unmatched_treated.empty()) {
    std::cout << ", " << result.unmatched_treated.size() << " unmatched treated (flagged)";
  }
  std::cout << "\n";
  for (const auto& log : result.strata) {
    std::cout << "  stratum " << log.interval_label << ": treated " << log.n_treated
              << ", controls " << log.n_controls << ", attempted k=" << log.attempted_k
              << ", achieved ";
    if (log.achieved_k) {
      std::cout << "k=" << *log.achieved_k;
    } else {
      std::cout << "none";
    }
    std::cout << "\n";
  }
  return kExitOk;
}

int run_check(const CommonOptions& common, const std::string& kappa_text,
              const std::string& kappa_frac_text, int fixed_k, int min_controls,
              int max_controls) {
  const fm::LoadedCohort loaded = load(common);

  fm::MatchConfig config;
  if (fixed_k > 0) {
    config.min_controls = fixed_k;
    config.max_controls = fixed_k;
    config.kappa = fm::Ratio(fixed_k, 1);
  } else {
    config.min_controls = min_controls;
    config.max_controls = max_controls;
    if (kappa_text.empty() && kappa_frac_text.empty()) {
      throw std::invalid_argument("check needs one of --kappa, --kappa-frac, or --k");
    }
    // For pre-flight purposes an out-of-range kappa is a reportable finding,
    // not an input error, so it is not validated against kappa_max here.
    if (!kappa_text.empty()) {
      config.kappa = fm::Ratio::from_decimal(kappa_text);
    } else {
      config.kappa = fm::Ratio::from_decimal(kappa_frac_text) * fm::kappa_max(loaded.cohort);
      if (config.kappa < fm::Ratio(1, 1)) config.kappa = fm::Ratio(1, 1);
    }
  }

  const fm::FeasibilityReport report = fm::check_feasibility(loaded.cohort, config);
  std::cout << report.to_string();
  return report.feasible ? kExitOk : kExitInfeasible;
}

int run_simulate(const std::string& config_path, std::optional<int> replications,
                 std::optional<std::uint64_t> seed, int threads, const std::string& out_dir_text) {
  const auto start = std::chrono::steady_clock::now();
  std::ifstream in(config_path);
  if (!in) throw std::invalid_argument("cannot open config file '" + config_path + "'");
  fm::SimConfig config = fm::parse_sim_config(in);
  if (replications) config.replications = *replications;
  if (seed) config.seed = *seed;
  config.validate();

  const fm::SimRun run = fm::run_replications(config, threads);
  const std::string comparison = fm::render_comparison(run);

  fs::create_directories(out_dir_text);
  const fs::path out_dir(out_dir_text);

  fm::RunManifest manifest;
  manifest.command = "simulate";
  manifest.config["config_file"] = config_path;
  manifest.config["resolved"] = fm::sim_config_text(config);
  manifest.config["threads"] = std::to_string(threads);
  manifest.input_digests[config_path] = fm::file_digest(config_path);
  manifest.seed = config.seed;
  manifest.has_seed = true;

  write_file(out_dir / "summary.csv", fm::summary_csv(run), &manifest.outputs);
  write_file(out_dir / "comparison.txt", comparison, &manifest.outputs);
  write_manifest(out_dir, std::move(manifest), start);

  std::cout << comparison;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variable-ratio matching with exact fine balance via minimum-cost network flow"};
  app.set_version_flag("--version", std::string(fm::kVersion));
  app.require_subcommand(1);

  // match
  CommonOptions match_common;
  std::string match_kappa, match_kappa_frac, match_metric = "mahalanobis";
  std::string match_dump_network, match_dump_distances;
  int match_min = 1, match_max = 4;
  std::int64_t match_scale = 100000;
  auto* match_cmd = app.add_subcommand("match", "one-shot variable-ratio match with fine balance");
  add_common(match_cmd, &match_common, true);
  auto* kappa_opt = match_cmd->add_option("--kappa", match_kappa, "target ratio kappa (decimal)");
  auto* kappa_frac_opt = match_cmd->add_option("--kappa-frac", match_kappa_frac,
                                               "kappa as a fraction of kappa_max, in (0, 1]");
  kappa_opt->excludes(kappa_frac_opt);
  match_cmd->add_option("--L", match_min, "min controls per treated unit")->check(CLI::PositiveNumber);
  match_cmd->add_option("--U", match_max, "max controls per treated unit")->check(CLI::PositiveNumber);
  match_cmd->add_option("--metric", match_metric, "distance metric: mahalanobis | robust");
  match_cmd->add_option("--cost-scale", match_scale, "fixed-point scale for distances");
  match_cmd->add_option("--dump-network", match_dump_network,
                        "write the flow network in DIMACS min-cost-flow format");
  match_cmd->add_option("--dump-distances", match_dump_distances,
                        "write the distance matrix as CSV");

  // twostep
  CommonOptions twostep_common;
  std::vector<std::string> twostep_prop;
  std::string twostep_metric = "mahalanobis";
  int twostep_kcap = 4, twostep_min_stratum = 25;
  std::int64_t twostep_scale = 100000;
  auto* twostep_cmd =
      app.add_subcommand("twostep", "entire-number stratification baseline (divide and conquer)");
  add_common(twostep_cmd, &twostep_common, true);
  twostep_cmd
      ->add_option("--propensity-covariates", twostep_prop,
                   "covariates for the propensity model (default: all)")
      ->delimiter(',');
  twostep_cmd->add_option("--k-cap", twostep_kcap, "largest 1-to-k ratio attempted");
  twostep_cmd->add_option("--min-stratum", twostep_min_stratum,
                          "strata smaller than this merge into the next lower stratum");
  twostep_cmd->add_option("--metric", twostep_metric, "distance metric: mahalanobis | robust");
  twostep_cmd->add_option("--cost-scale", twostep_scale, "fixed-point scale for distances");

  // check
  CommonOptions check_common;
  std::string check_kappa, check_kappa_frac;
  int check_k = 0, check_min = 1, check_max = 4;
  auto* check_cmd = app.add_subcommand("check", "pre-flight feasibility diagnostics");
  add_common(check_cmd, &check_common, false);
  check_cmd->add_option("--kappa", check_kappa, "target ratio kappa (decimal)");
  check_cmd->add_option("--kappa-frac", check_kappa_frac, "kappa as a fraction of kappa_max");
  check_cmd->add_option("--k", check_k, "fixed 1-to-k design (sets L = U = kappa = k)");
  check_cmd->add_option("--L", check_min, "min controls per treated unit");
  check_cmd->add_option("--U", check_max, "max controls per treated unit");

  // simulate
  std::string sim_config_path, sim_out_dir;
  int sim_threads = 0;
  std::optional<int> sim_replications;
  std::optional<std::uint64_t> sim_seed;
  auto* sim_cmd = app.add_subcommand("simulate", "replicated one-shot vs two-step comparison");
  sim_cmd->add_option("--config", sim_config_path, "key = value config file")->required();
  sim_cmd->add_option("--replications", sim_replications, "override replication count");
  sim_cmd->add_option("--seed", sim_seed, "override the random seed");
  sim_cmd->add_option("--threads", sim_threads, "worker threads (0 = hardware concurrency)");
  sim_cmd->add_option("--out-dir", sim_out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return kExitInputError;
  }

  try {
    if (match_cmd->parsed()) {
      if (match_kappa.empty() && match_kappa_frac.empty()) {
        throw std::invalid_argument("match needs one of --kappa or --kappa-frac");
      }
      return run_match(match_common, match_kappa, match_kappa_frac, match_min, match_max,
                       match_metric, match_scale, match_dump_network, match_dump_distances);
    }
    if (twostep_cmd->parsed()) {
      return run_twostep(twostep_common, twostep_prop, twostep_kcap, twostep_min_stratum,
                         twostep_metric, twostep_scale);
    }
    if (check_cmd->parsed()) {
      return run_check(check_common, check_kappa, check_kappa_frac, check_k, check_min, check_max);
    }
    if (sim_cmd->parsed()) {
      return run_simulate(sim_config_path, sim_replications, sim_seed, sim_threads, sim_out_dir);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::logic_error& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternalError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  }
  return kExitInputError;
}
