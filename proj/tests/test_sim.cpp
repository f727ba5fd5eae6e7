#include <doctest.h>

#include <cmath>
#include <sstream>

#include "finematch/sim.hpp"
#include "fixtures.hpp"

using namespace finematch;

namespace {

SimConfig small_config() {
  SimConfig config;
  config.n = 400;
  config.p = 0.3;
  config.mu = 0.25;
  config.replications = 3;
  config.seed = 11;
  config.kappa_fracs = {"1.0", "0.9", "0.8"};
  config.min_controls = 1;
  config.max_controls = 4;
  return config;
}

}  // namespace

TEST_SUITE("sim_config") {
  TEST_CASE("round trip through the key=value format") {
    const SimConfig config = small_config();
    std::istringstream in(sim_config_text(config));
    const SimConfig parsed = parse_sim_config(in);
    CHECK(parsed.digest() == config.digest());
  }

  TEST_CASE("unknown keys are rejected with their line") {
    std::istringstream in("n = 100\nbogus = 3\n");
    CHECK_THROWS_WITH_AS(parse_sim_config(in), doctest::Contains("line 2"), std::invalid_argument);
  }

  TEST_CASE("bad values are rejected") {
    std::istringstream in("n = -5\n");
    CHECK_THROWS_AS(parse_sim_config(in), std::invalid_argument);
    std::istringstream in2("p = 1.5\n");
    CHECK_THROWS_AS(parse_sim_config(in2), std::invalid_argument);
    std::istringstream in3("kappa_fracs = 1.2\n");
    CHECK_THROWS_AS(parse_sim_config(in3), std::invalid_argument);
  }
}

TEST_SUITE("generate_dataset") {
  TEST_CASE("deterministic for a fixed (seed, replication)") {
    const SimConfig config = small_config();
    const Cohort a = generate_dataset(config, 2);
    const Cohort b = generate_dataset(config, 2);
    REQUIRE(a.units().size() == b.units().size());
    for (std::size_t i = 0; i < a.units().size(); ++i) {
      CHECK(a.units()[i].id == b.units()[i].id);
      CHECK(a.units()[i].treated == b.units()[i].treated);
      CHECK(a.units()[i].fb_level == b.units()[i].fb_level);
      CHECK(a.units()[i].covariates == b.units()[i].covariates);
    }
    const Cohort c = generate_dataset(config, 3);
    bool identical = true;
    for (std::size_t i = 0; i < a.units().size() && identical; ++i) {
      identical = a.units()[i].covariates == c.units()[i].covariates;
    }
    CHECK_FALSE(identical);
  }

  TEST_CASE("treated count concentrates around n*p") {
    SimConfig config = small_config();
    config.n = 3000;
    double total = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
      const Cohort cohort = generate_dataset(config, rep);
      const double treated = static_cast<double>(cohort.treated_count());
      CHECK(std::abs(treated - 900.0) < 3.0 * std::sqrt(3000 * 0.3 * 0.7));
      total += treated;
    }
    CHECK(std::abs(total / 5.0 - 900.0) < 60.0);
  }

  TEST_CASE("mu=0 gives a near-zero pre-match standardized difference on V1") {
    SimConfig config = small_config();
    config.n = 3000;
    config.mu = 0.0;
    double total = 0.0;
    for (int rep = 0; rep < 3; ++rep) {
      const Cohort cohort = generate_dataset(config, rep);
      const int c1 = *cohort.covariate_index("V1");
      double mean_t = 0.0, mean_c = 0.0;
      for (int i : cohort.treated_indices()) mean_t += cohort.units()[i].covariates[c1];
      for (int i : cohort.control_indices()) mean_c += cohort.units()[i].covariates[c1];
      mean_t /= cohort.treated_count();
      mean_c /= cohort.control_count();
      total += mean_t - mean_c;
      CHECK(std::abs(mean_t - mean_c) < 0.12);  // ~3 SE
    }
    CHECK(std::abs(total / 3.0) < 0.08);
  }

  TEST_CASE("infeasible draws are regenerated and logged") {
    // tiny n with a treated-heavy design makes level-1 violations likely;
    // scan replications until one logs a regeneration
    SimConfig config = small_config();
    config.n = 12;
    config.p = 0.5;
    bool saw_regeneration = false;
    for (int rep = 0; rep < 60 && !saw_regeneration; ++rep) {
      GenerationLog log;
      const Cohort cohort = generate_dataset(config, rep, &log);
      // the returned draw is always feasible
      for (int b = 0; b < cohort.level_count(); ++b) {
        CHECK(cohort.treated_per_level()[b] <= cohort.control_per_level()[b]);
      }
      saw_regeneration = log.attempts > 1 && !log.regenerated.empty();
    }
    CHECK(saw_regeneration);
  }
}

TEST_SUITE("run_replications") {
  TEST_CASE("small run: quota identity, kappa ordering, and summary shape") {
    SimConfig config = small_config();
    const SimRun run = run_replications(config, 2);
    REQUIRE(run.methods.size() == 4);
    CHECK(run.methods[0].method == "OS_kappa_max");
    CHECK(run.methods[1].method == "OS_0.9");
    CHECK(run.methods[2].method == "OS_0.8");
    CHECK(run.methods[3].method == "TS");

    for (const auto& summary : run.methods) {
      CHECK(summary.replications == config.replications);
      CHECK(static_cast<int>(summary.reps.size()) == config.replications);
      CHECK(summary.failed_reps == 0);
    }

    // kappa trade-off: matched-control counts strictly ordered per replication
    for (int rep = 0; rep < config.replications; ++rep) {
      CHECK(run.methods[0].reps[rep].n_c > run.methods[1].reps[rep].n_c);
      CHECK(run.methods[1].reps[rep].n_c > run.methods[2].reps[rep].n_c);
    }

    // one-shot TV is pure flooring noise
    for (int m = 0; m < 3; ++m) {
      CHECK(run.methods[m].tv_c6.mean < 0.02);
    }
  }

  TEST_CASE("deterministic regardless of thread count") {
    SimConfig config = small_config();
    config.replications = 4;
    const SimRun serial = run_replications(config, 1);
    const SimRun parallel = run_replications(config, 2);
    REQUIRE(serial.methods.size() == parallel.methods.size());
    for (std::size_t m = 0; m < serial.methods.size(); ++m) {
      CHECK(serial.methods[m].smd_c1.mean == parallel.methods[m].smd_c1.mean);
      CHECK(serial.methods[m].tv_c6.mean == parallel.methods[m].tv_c6.mean);
      CHECK(serial.methods[m].n_c.mean == parallel.methods[m].n_c.mean);
      for (int rep = 0; rep < config.replications; ++rep) {
        CHECK(serial.methods[m].reps[rep].n_c == parallel.methods[m].reps[rep].n_c);
      }
    }
    CHECK(summary_csv(serial) == summary_csv(parallel));
  }

  TEST_CASE("single replication flags undefined SDs") {
    SimConfig config = small_config();
    config.replications = 1;
    const SimRun run = run_replications(config, 1);
    for (const auto& summary : run.methods) {
      CHECK_FALSE(summary.smd_c1.sd_defined);
      CHECK_FALSE(summary.n_c.sd_defined);
    }
    const std::string rendered = render_comparison(run);
    CHECK(rendered.find("*") != std::string::npos);
  }
}

TEST_SUITE("compare_methods") {
  TEST_CASE("mismatched configs are rejected") {
    SimConfig config = small_config();
    config.replications = 1;
    const SimRun run = run_replications(config, 1);
    auto summaries = run.methods;
    summaries[0].config_digest = "other";
    CHECK_THROWS_AS(compare_methods(summaries), std::invalid_argument);
  }

  TEST_CASE("single-method table works without dominance") {
    SimConfig config = small_config();
    config.replications = 1;
    const SimRun run = run_replications(config, 1);
    const ComparisonTable table = compare_methods({run.methods[0]});
    CHECK(table.methods == std::vector<std::string>{"OS_kappa_max"});
    CHECK(table.dominance_vs_two_step.empty());
  }

  TEST_CASE("dominance fractions are computed against the two-step arm") {
    SimConfig config = small_config();
    const SimRun run = run_replications(config, 2);
    const ComparisonTable table = compare_methods(run.methods);
    REQUIRE(table.dominance_vs_two_step.count("OS_kappa_max") == 1);
    const double share = table.dominance_vs_two_step.at("OS_kappa_max");
    CHECK(share >= 0.0);
    CHECK(share <= 1.0);
  }
}
