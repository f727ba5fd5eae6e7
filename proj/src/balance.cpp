#include "finematch/balance.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace finematch {

namespace {

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return ss / static_cast<double>(values.size() - 1);
}

std::vector<double> normalize(std::span<const double> weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) {
    throw std::invalid_argument("tv_distance: counts must sum to a positive value");
  }
  std::vector<double> out(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) out[i] = weights[i] / total;
  return out;
}

}  // namespace

std::optional<double> smd(std::span<const double> treated_values,
                          std::span<const double> control_values, double pooled_pre_sd) {
  if (!(pooled_pre_sd > 0.0) || !std::isfinite(pooled_pre_sd)) return std::nullopt;
  return (mean(treated_values) - mean(control_values)) / pooled_pre_sd;
}

std::optional<double> pooled_pre_sd(const Cohort& cohort, int covariate_index) {
  std::vector<double> treated, control;
  treated.reserve(cohort.treated_indices().size());
  control.reserve(cohort.control_indices().size());
  for (int i : cohort.treated_indices()) treated.push_back(cohort.units()[i].covariates[covariate_index]);
  for (int i : cohort.control_indices()) control.push_back(cohort.units()[i].covariates[covariate_index]);
  if (treated.size() < 2 || control.size() < 2) return std::nullopt;
  return std::sqrt((sample_variance(treated) + sample_variance(control)) / 2.0);
}

double tv_distance(std::span<const double> weights_p, std::span<const double> weights_q) {
  if (weights_p.size() != weights_q.size()) {
    throw std::invalid_argument("tv_distance: distributions must have the same support size");
  }
  const std::vector<double> p = normalize(weights_p);
  const std::vector<double> q = normalize(weights_q);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += std::abs(p[i] - q[i]);
  return total / 2.0;
}

double tv_distance(std::span<const std::int64_t> counts_p, std::span<const std::int64_t> counts_q) {
  std::vector<double> p(counts_p.begin(), counts_p.end());
  std::vector<double> q(counts_q.begin(), counts_q.end());
  return tv_distance(std::span<const double>(p), std::span<const double>(q));
}

std::map<int, std::int64_t> set_structure(const MatchResult& result) {
  std::map<int, std::int64_t> histogram;
  for (const auto& set : result.sets) {
    histogram[static_cast<int>(set.control_ids.size())] += 1;
  }
  return histogram;
}

BalanceReport balance_report(const Cohort& cohort, const MatchResult& result,
                             const std::vector<std::string>& covariates) {
  std::vector<std::string> names = covariates;
  if (names.empty()) names = cohort.covariate_names();
  const std::vector<int> columns = cohort.covariate_indices(names);

  std::set<std::string> matched_controls;
  for (const auto& set : result.sets) {
    matched_controls.insert(set.control_ids.begin(), set.control_ids.end());
  }

  BalanceReport report;
  report.n_treated = cohort.treated_count();
  report.n_c_matched = static_cast<std::int64_t>(matched_controls.size());
  report.set_sizes = set_structure(result);
  report.categorical_smd_convention =
      "multinomial composite: sqrt(d' S^-1 d) over level-proportion differences, "
      "S from averaged proportions";

  std::vector<int> matched_control_rows;
  for (int i : cohort.control_indices()) {
    if (matched_controls.count(cohort.units()[i].id)) matched_control_rows.push_back(i);
  }

  for (std::size_t k = 0; k < names.size(); ++k) {
    const int j = columns[k];
    std::vector<double> treated_values, control_values;
    for (int i : cohort.treated_indices()) treated_values.push_back(cohort.units()[i].covariates[j]);
    for (int i : matched_control_rows) control_values.push_back(cohort.units()[i].covariates[j]);

    CovariateBalanceRow row;
    row.name = names[k];
    row.treated_mean = mean(treated_values);
    row.treated_sd = std::sqrt(sample_variance(treated_values));
    row.control_mean = mean(control_values);
    row.control_sd = std::sqrt(sample_variance(control_values));
    const auto sd_pre = pooled_pre_sd(cohort, j);
    row.smd = sd_pre ? smd(treated_values, control_values, *sd_pre) : std::nullopt;
    report.covariates.push_back(std::move(row));
  }

  // Fine-balance variable: per-level counts and proportions.
  const int levels = cohort.level_count();
  std::vector<std::int64_t> matched_per_level(levels, 0);
  for (int i : matched_control_rows) {
    matched_per_level[cohort.units()[i].fb_level - 1] += 1;
  }
  const double treated_total = static_cast<double>(cohort.treated_count());
  const double control_total = static_cast<double>(matched_control_rows.size());
  for (int b = 0; b < levels; ++b) {
    LevelBalanceRow row;
    row.label = cohort.level_labels()[b];
    row.treated_count = cohort.treated_per_level()[b];
    row.matched_control_count = matched_per_level[b];
    row.treated_percent = treated_total > 0 ? 100.0 * row.treated_count / treated_total : 0.0;
    row.control_percent = control_total > 0 ? 100.0 * row.matched_control_count / control_total : 0.0;
    report.levels.push_back(std::move(row));
  }

  // No matched controls at all means maximal imbalance by convention.
  report.tv_fb = control_total > 0
                     ? tv_distance(std::span<const std::int64_t>(cohort.treated_per_level()),
                                   std::span<const std::int64_t>(matched_per_level))
                     : 1.0;

  // Composite SMD over levels 2..B: sum d_b^2 / pbar_b + (sum d_b)^2 / pbar_1,
  // the closed form of d' S^-1 d for the multinomial covariance at pbar.
  if (levels >= 2 && treated_total > 0 && control_total > 0) {
    double quad = 0.0;
    double d_sum = 0.0;
    bool ok = true;
    for (int b = 1; b < levels; ++b) {
      const double pt = cohort.treated_per_level()[b] / treated_total;
      const double pc = matched_per_level[b] / control_total;
      const double pbar = (pt + pc) / 2.0;
      const double d = pt - pc;
      d_sum += d;
      if (pbar <= 0.0) {
        if (d != 0.0) ok = false;
        continue;
      }
      quad += d * d / pbar;
    }
    const double pbar_first =
        (cohort.treated_per_level()[0] / treated_total + matched_per_level[0] / control_total) / 2.0;
    if (pbar_first > 0.0) {
      quad += d_sum * d_sum / pbar_first;
    } else if (d_sum != 0.0) {
      ok = false;
    }
    if (ok) report.fb_composite_smd = std::sqrt(std::max(quad, 0.0));
  }
  return report;
}

std::string balance_report_text(const BalanceReport& report) {
  std::ostringstream out;
  out << std::fixed;
  out << "n (matched controls / treated): " << report.n_c_matched << " / " << report.n_treated
      << "\n\n";
  out << std::left << std::setw(24) << "Covariate" << std::right << std::setw(12) << "Treated"
      << std::setw(12) << "(SD)" << std::setw(12) << "Control" << std::setw(12) << "(SD)"
      << std::setw(10) << "SMD" << "\n";
  for (const auto& row : report.covariates) {
    out << std::left << std::setw(24) << row.name << std::right << std::setprecision(3)
        << std::setw(12) << row.treated_mean << std::setw(12) << row.treated_sd << std::setw(12)
        << row.control_mean << std::setw(12) << row.control_sd;
    if (row.smd) {
      out << std::setw(10) << std::abs(*row.smd);
    } else {
      out << std::setw(10) << "undef";
    }
    out << "\n";
  }
  out << "\nFine balance variable";
  if (report.fb_composite_smd) {
    out << " (composite SMD " << std::setprecision(3) << *report.fb_composite_smd << ")";
  }
  out << ":\n";
  out << std::left << std::setw(24) << "  Level" << std::right << std::setw(12) << "Treated"
      << std::setw(10) << "(%)" << std::setw(12) << "Control" << std::setw(10) << "(%)" << "\n";
  for (const auto& row : report.levels) {
    out << "  " << std::left << std::setw(22) << row.label << std::right << std::setw(12)
        << row.treated_count << std::setw(10) << std::setprecision(1) << row.treated_percent
        << std::setw(12) << row.matched_control_count << std::setw(10) << row.control_percent
        << "\n";
  }
  out << "\nTV distance (fine balance variable): " << std::setprecision(6) << report.tv_fb << "\n";
  out << "Matched set structure:\n";
  for (const auto& [controls, count] : report.set_sizes) {
    out << "  1-to-" << controls << ": " << count << "\n";
  }
  return out.str();
}

std::string balance_report_json(const BalanceReport& report) {
  nlohmann::json j;
  j["n_treated"] = report.n_treated;
  j["n_c_matched"] = report.n_c_matched;
  j["tv_fb"] = report.tv_fb;
  j["categorical_smd_convention"] = report.categorical_smd_convention;
  if (report.fb_composite_smd) {
    j["fb_composite_smd"] = *report.fb_composite_smd;
  } else {
    j["fb_composite_smd"] = nullptr;
  }
  j["covariates"] = nlohmann::json::array();
  for (const auto& row : report.covariates) {
    nlohmann::json r;
    r["name"] = row.name;
    r["treated_mean"] = row.treated_mean;
    r["treated_sd"] = row.treated_sd;
    r["control_mean"] = row.control_mean;
    r["control_sd"] = row.control_sd;
    if (row.smd) {
      r["smd"] = *row.smd;
    } else {
      r["smd"] = nullptr;
    }
    j["covariates"].push_back(std::move(r));
  }
  j["levels"] = nlohmann::json::array();
  for (const auto& row : report.levels) {
    nlohmann::json r;
    r["label"] = row.label;
    r["treated_count"] = row.treated_count;
    r["matched_control_count"] = row.matched_control_count;
    r["treated_percent"] = row.treated_percent;
    r["control_percent"] = row.control_percent;
    j["levels"].push_back(std::move(r));
  }
  j["set_structure"] = nlohmann::json::object();
  for (const auto& [controls, count] : report.set_sizes) {
    j["set_structure"][std::to_string(controls)] = count;
  }
  return j.dump(2);
}

}  // namespace finematch
