#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "finematch/cohort.hpp"

namespace finematch {

enum class DistanceMetric { mahalanobis, robust_mahalanobis, custom };

/// Treated-by-control matrix of covariate distances, row t / column c in the
/// cohort's id-sorted treated/control order.
struct DistanceMatrix {
  int rows = 0;  // T
  int cols = 0;  // C
  std::vector<double> values;  // row-major
  DistanceMetric metric = DistanceMetric::custom;

  double at(int t, int c) const { return values[static_cast<std::size_t>(t) * cols + c]; }
  double& at(int t, int c) { return values[static_cast<std::size_t>(t) * cols + c]; }
};

/// delta_tc = sqrt((x_t - x_c)' S^-1 (x_t - x_c)) with S the sample covariance
/// of the pooled rows. Constant columns are dropped (reported via `warnings`);
/// if the remaining covariance is still not positive definite, a ridge of
/// 1e-8 * trace(S)/p is added before factorization.
DistanceMatrix mahalanobis_matrix(const Eigen::MatrixXd& treated, const Eigen::MatrixXd& control,
                                  std::vector<std::string>* warnings = nullptr);

/// Rank-based variant: covariates are replaced by average ranks over the
/// pooled sample, the rank covariance is rescaled so each variable has the
/// variance of untied ranks, then the Mahalanobis form is applied.
DistanceMatrix robust_mahalanobis_matrix(const Eigen::MatrixXd& treated,
                                         const Eigen::MatrixXd& control,
                                         std::vector<std::string>* warnings = nullptr);

/// Convenience: builds the treated/control covariate matrices for a named
/// covariate subset (empty = all covariates) and dispatches on `metric`.
DistanceMatrix distance_matrix(const Cohort& cohort, const std::vector<std::string>& covariates,
                               DistanceMetric metric, std::vector<std::string>* warnings = nullptr);

/// Writes the matrix as CSV (one row per treated unit) for debugging.
void write_distance_csv(const DistanceMatrix& matrix, std::ostream& out);

/// Logistic regression fit (intercept first coefficient).
struct PropensityModel {
  std::vector<double> coefficients;       // size 1 + #covariates
  std::vector<std::string> covariates;    // names, aligned with coefficients[1..]
  std::vector<int> covariate_columns;     // indices into cohort covariates
  bool converged = false;
  int iterations = 0;
  double max_gradient = 0.0;              // infinity norm of the score at exit
  bool separation_suspected = false;
};

/// Maximum-likelihood logistic fit via iteratively reweighted least squares.
/// Stops when the infinity norm of the log-likelihood gradient is <= 1e-8 or
/// after 100 iterations. Suspected separation is reported, not thrown; the
/// model is returned with converged=false.
PropensityModel fit_propensity(const Cohort& cohort, const std::vector<std::string>& covariates);

/// Fitted probability of treatment for one unit of the cohort the model was
/// fit on (or any cohort with the same covariate layout).
double propensity_score(const PropensityModel& model, const Cohort& cohort, int unit_index);

/// Inverse odds (1 - e) / e of the fitted propensity. Probabilities are
/// clipped to [1e-6, 1 - 1e-6] first; `clipped`, when given, reports whether
/// the cap was hit.
double entire_number(const PropensityModel& model, const Cohort& cohort, int unit_index,
                     bool* clipped = nullptr);

double entire_number_from_propensity(double e, bool* clipped = nullptr);

}  // namespace finematch
