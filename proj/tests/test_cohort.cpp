#include <doctest.h>

#include <random>

#include "finematch/cohort.hpp"
#include "fixtures.hpp"

using namespace finematch;

TEST_SUITE("ratio") {
  TEST_CASE("decimal parsing is exact") {
    CHECK(Ratio::from_decimal("0.9") == Ratio(9, 10));
    CHECK(Ratio::from_decimal("1") == Ratio(1, 1));
    CHECK(Ratio::from_decimal("1.25") == Ratio(5, 4));
    CHECK(Ratio::from_decimal("0.125") == Ratio(1, 8));
    CHECK_THROWS_AS(Ratio::from_decimal("1.2.3"), std::invalid_argument);
    CHECK_THROWS_AS(Ratio::from_decimal(""), std::invalid_argument);
    CHECK_THROWS_AS(Ratio::from_decimal("-1"), std::invalid_argument);
  }

  TEST_CASE("floor_times stays on the right side of integer boundaries") {
    // 869/675 * 675 must floor to exactly 869, not 868.
    const Ratio kappa(869, 675);
    CHECK(kappa.floor_times(675) == 869);
    CHECK(kappa.floor_times(182) == 234);
    CHECK(kappa.floor_times(107) == 137);

    // 0.9 * (869/675): floor(9*869*n / (10*675)) exactly.
    const Ratio scaled = Ratio::from_decimal("0.9") * kappa;
    CHECK(scaled == Ratio(9 * 869, 10 * 675));
    CHECK(scaled.floor_times(675) == 782);  // floor(782.1)
  }

  TEST_CASE("ordering by cross multiplication") {
    CHECK(Ratio(1, 3) < Ratio(869, 675));
    CHECK(Ratio(2, 4) == Ratio(1, 2));
    CHECK(Ratio(7, 2) >= Ratio(7, 2));
  }
}

TEST_SUITE("cohort") {
  TEST_CASE("rhc-shaped fixture reproduces the published margins") {
    const Cohort cohort = fixtures::rhc_cohort();
    CHECK(cohort.treated_count() == 1194);
    CHECK(cohort.control_count() == 1804);
    CHECK(cohort.level_count() == 6);
    const std::vector<std::int64_t> treated = {182, 107, 55, 113, 675, 62};
    const std::vector<std::int64_t> control = {429, 167, 86, 158, 869, 95};
    CHECK(cohort.treated_per_level() == treated);
    CHECK(cohort.control_per_level() == control);
    CHECK(cohort.level_labels() == fixtures::kInsuranceLevels);
  }

  TEST_CASE("tiny cohort") {
    const Cohort cohort = fixtures::counts_cohort({2}, {2});
    CHECK(cohort.treated_count() == 2);
    CHECK(cohort.control_count() == 2);
    CHECK(cohort.level_count() == 1);
  }

  TEST_CASE("ingestion errors") {
    std::vector<RawRecord> records = {
        {"a", true, {1.0}, "x"},
        {"a", false, {1.0}, "x"},
    };
    CHECK_THROWS_WITH_AS(build_cohort(records, {"v"}), doctest::Contains("duplicate"),
                         std::invalid_argument);

    records[1].id = "b";
    records[1].covariates.clear();
    CHECK_THROWS_WITH_AS(build_cohort(records, {"v"}), doctest::Contains("missing covariates"),
                         std::invalid_argument);

    // treated level with zero controls: fine balance impossible
    records[1].covariates = {1.0};
    records[1].fb_label = "y";
    records[1].treated = true;
    CHECK_THROWS_WITH_AS(build_cohort(records, {"v"}), doctest::Contains("no controls"),
                         std::invalid_argument);
  }

  TEST_CASE("kappa_max") {
    SUBCASE("rhc fixture: binding level is Private") {
      const Ratio ceiling = kappa_max(fixtures::rhc_cohort());
      CHECK(ceiling == Ratio(869, 675));
      CHECK(ceiling.value() == doctest::Approx(1.28741).epsilon(1e-5));
    }
    SUBCASE("equal counts give exactly 1") {
      CHECK(kappa_max(fixtures::counts_cohort({3, 4}, {3, 4})) == Ratio(1, 1));
    }
    SUBCASE("single level") {
      CHECK(kappa_max(fixtures::counts_cohort({2}, {7})) == Ratio(7, 2));
      CHECK(kappa_max(fixtures::counts_cohort({2}, {7})).value() == doctest::Approx(3.5));
    }
    SUBCASE("levels with no treated units are ignored") {
      CHECK(kappa_max(fixtures::counts_cohort({2, 0}, {4, 9})) == Ratio(2, 1));
    }
    SUBCASE("error when N_b < n_b") {
      const Cohort cohort = Cohort::from_units(
          {
              {"a", true, {}, 1},
              {"b", true, {}, 1},
              {"c", false, {}, 1},
          },
          {}, {"only"});
      CHECK_THROWS_AS(kappa_max(cohort), std::invalid_argument);
    }
  }

  TEST_CASE("discard quotas") {
    SUBCASE("rhc fixture at kappa_max reproduces the matched-control table") {
      const Cohort cohort = fixtures::rhc_cohort();
      const auto quotas = discard_quotas(cohort, kappa_max(cohort));
      const std::vector<std::int64_t> expected = {195, 30, 16, 13, 0, 16};
      CHECK(quotas == expected);
      std::int64_t matched_total = 0;
      for (int b = 0; b < cohort.level_count(); ++b) {
        matched_total += cohort.control_per_level()[b] - quotas[b];
      }
      CHECK(matched_total == 1534);
    }
    SUBCASE("kappa = 1 with equal counts discards nothing") {
      const Cohort cohort = fixtures::counts_cohort({3, 2}, {3, 2});
      const auto quotas = discard_quotas(cohort, Ratio(1, 1));
      CHECK(quotas == std::vector<std::int64_t>{0, 0});
    }
    SUBCASE("n=3, N=5, kappa=1.5") {
      const Cohort cohort = fixtures::counts_cohort({3}, {5});
      const auto quotas = discard_quotas(cohort, Ratio::from_decimal("1.5"));
      CHECK(quotas == std::vector<std::int64_t>{1});  // 5 - floor(4.5)
    }
    SUBCASE("kappa out of range") {
      const Cohort cohort = fixtures::counts_cohort({3}, {5});
      CHECK_THROWS_AS(discard_quotas(cohort, Ratio(2, 1)), std::invalid_argument);
      CHECK_THROWS_AS(discard_quotas(cohort, Ratio(1, 2)), std::invalid_argument);
    }
  }

  TEST_CASE("quota identities over random cohorts") {
    std::mt19937_64 engine(99);
    for (int trial = 0; trial < 200; ++trial) {
      const auto instance = fixtures::random_small_instance(engine);
      const Cohort& cohort = instance.cohort;
      const Ratio kappa = instance.config.kappa;
      const auto quotas = discard_quotas(cohort, kappa);

      std::int64_t quota_sum = 0;
      std::int64_t matched_sum = 0;
      for (int b = 0; b < cohort.level_count(); ++b) {
        const std::int64_t matched = kappa.floor_times(cohort.treated_per_level()[b]);
        matched_sum += matched;
        quota_sum += quotas[b];
        // each treated level keeps at least n_b controls
        CHECK(quotas[b] >= 0);
        CHECK(quotas[b] <= cohort.control_per_level()[b] - (cohort.treated_per_level()[b] > 0
                                                                ? cohort.treated_per_level()[b]
                                                                : 0));
        CHECK(matched >= cohort.treated_per_level()[b]);
      }
      CHECK(matched_sum + quota_sum == cohort.control_count());
    }
  }

  TEST_CASE("kappa_max is monotone under control removal") {
    std::mt19937_64 engine(1234);
    for (int trial = 0; trial < 50; ++trial) {
      const auto instance = fixtures::random_small_instance(engine);
      const Cohort& cohort = instance.cohort;
      if (cohort.control_count() <= 1) continue;
      const Ratio before = kappa_max(cohort);

      // remove one control (the last by id order)
      std::vector<int> keep;
      for (int i = 0; i < static_cast<int>(cohort.units().size()); ++i) keep.push_back(i);
      const int removed = cohort.control_indices().back();
      keep.erase(std::remove(keep.begin(), keep.end(), removed), keep.end());
      const Cohort smaller = cohort.subcohort(keep);

      bool still_valid = true;
      for (int b = 0; b < smaller.level_count(); ++b) {
        if (smaller.treated_per_level()[b] > smaller.control_per_level()[b]) still_valid = false;
      }
      if (!still_valid) continue;
      CHECK(kappa_max(smaller) <= before);
    }
  }

  TEST_CASE("subcohort re-indexes levels densely") {
    const Cohort cohort = fixtures::counts_cohort({1, 2, 1}, {2, 2, 1});
    std::vector<int> pick;
    for (int i = 0; i < static_cast<int>(cohort.units().size()); ++i) {
      if (cohort.units()[i].fb_level != 2) pick.push_back(i);
    }
    const Cohort sub = cohort.subcohort(pick);
    CHECK(sub.level_count() == 2);
    CHECK(sub.level_labels() == std::vector<std::string>{"L1", "L3"});
    CHECK(sub.treated_count() == 2);
  }
}
