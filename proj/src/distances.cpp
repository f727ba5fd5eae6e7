#include "finematch/distances.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace finematch {

namespace {

// Pooled sample covariance (denominator n-1) of the stacked rows.
Eigen::MatrixXd pooled_covariance(const Eigen::MatrixXd& pooled) {
  const Eigen::Index n = pooled.rows();
  const Eigen::RowVectorXd mean = pooled.colwise().mean();
  const Eigen::MatrixXd centered = pooled.rowwise() - mean;
  return (centered.transpose() * centered) / static_cast<double>(n - 1);
}

// Columns whose pooled values are all identical carry no metric information
// and make S singular; they are dropped with a warning.
std::vector<int> nonconstant_columns(const Eigen::MatrixXd& pooled,
                                     std::vector<std::string>* warnings) {
  std::vector<int> keep;
  for (Eigen::Index j = 0; j < pooled.cols(); ++j) {
    const double lo = pooled.col(j).minCoeff();
    const double hi = pooled.col(j).maxCoeff();
    if (lo == hi) {
      if (warnings) {
        warnings->push_back("covariate column " + std::to_string(j) +
                            " is constant and was dropped from the distance metric");
      }
      continue;
    }
    keep.push_back(static_cast<int>(j));
  }
  return keep;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& m, const std::vector<int>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(cols[k]);
  return out;
}

// Factor S, retrying once with a small ridge if it is not positive definite.
Eigen::LLT<Eigen::MatrixXd> factor_covariance(Eigen::MatrixXd s) {
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() == Eigen::Success) return llt;
  const double ridge = 1e-8 * s.trace() / static_cast<double>(s.rows());
  s.diagonal().array() += std::max(ridge, 1e-300);
  llt.compute(s);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("covariance matrix is not positive definite even after ridge");
  }
  return llt;
}

DistanceMatrix mahalanobis_from_rows(const Eigen::MatrixXd& treated, const Eigen::MatrixXd& control,
                                     DistanceMetric tag) {
  const int t_count = static_cast<int>(treated.rows());
  const int c_count = static_cast<int>(control.rows());
  Eigen::MatrixXd pooled(t_count + c_count, treated.cols());
  pooled.topRows(t_count) = treated;
  pooled.bottomRows(c_count) = control;

  const Eigen::MatrixXd s = pooled_covariance(pooled);
  const auto llt = factor_covariance(s);

  // Whitened coordinates: delta(t,c) = || y_t - y_c || with y = L^-1 x'.
  const Eigen::MatrixXd white = llt.matrixL().solve(pooled.transpose());

  DistanceMatrix out;
  out.rows = t_count;
  out.cols = c_count;
  out.metric = tag;
  out.values.resize(static_cast<std::size_t>(t_count) * c_count);
  for (int t = 0; t < t_count; ++t) {
    for (int c = 0; c < c_count; ++c) {
      const double d2 = (white.col(t) - white.col(t_count + c)).squaredNorm();
      out.values[static_cast<std::size_t>(t) * c_count + c] = std::sqrt(std::max(d2, 0.0));
    }
  }
  return out;
}

void check_inputs(const Eigen::MatrixXd& treated, const Eigen::MatrixXd& control) {
  if (treated.cols() != control.cols()) {
    throw std::invalid_argument("distance matrix: covariate dimension mismatch");
  }
  if (treated.rows() + control.rows() < 2) {
    throw std::invalid_argument("distance matrix: need at least two pooled rows");
  }
  if (!treated.allFinite() || !control.allFinite()) {
    throw std::invalid_argument("distance matrix: non-finite covariate value");
  }
}

// Average ranks (ties averaged) of each column over the pooled rows.
Eigen::MatrixXd to_ranks(const Eigen::MatrixXd& pooled) {
  const Eigen::Index n = pooled.rows();
  Eigen::MatrixXd ranks(n, pooled.cols());
  std::vector<int> order(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < pooled.cols(); ++j) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return pooled(a, j) < pooled(b, j); });
    Eigen::Index i = 0;
    while (i < n) {
      Eigen::Index k = i;
      while (k + 1 < n && pooled(order[k + 1], j) == pooled(order[i], j)) ++k;
      const double avg_rank = (static_cast<double>(i) + static_cast<double>(k)) / 2.0 + 1.0;
      for (Eigen::Index q = i; q <= k; ++q) ranks(order[q], j) = avg_rank;
      i = k + 1;
    }
  }
  return ranks;
}

}  // namespace

DistanceMatrix mahalanobis_matrix(const Eigen::MatrixXd& treated, const Eigen::MatrixXd& control,
                                  std::vector<std::string>* warnings) {
  check_inputs(treated, control);
  Eigen::MatrixXd pooled(treated.rows() + control.rows(), treated.cols());
  pooled.topRows(treated.rows()) = treated;
  pooled.bottomRows(control.rows()) = control;
  const std::vector<int> keep = nonconstant_columns(pooled, warnings);
  if (keep.empty()) {
    throw std::invalid_argument("distance matrix: no non-constant covariate columns left");
  }
  return mahalanobis_from_rows(select_columns(treated, keep), select_columns(control, keep),
                               DistanceMetric::mahalanobis);
}

DistanceMatrix robust_mahalanobis_matrix(const Eigen::MatrixXd& treated,
                                         const Eigen::MatrixXd& control,
                                         std::vector<std::string>* warnings) {
  check_inputs(treated, control);
  const Eigen::Index t_count = treated.rows();
  Eigen::MatrixXd pooled(t_count + control.rows(), treated.cols());
  pooled.topRows(t_count) = treated;
  pooled.bottomRows(control.rows()) = control;

  const std::vector<int> keep = nonconstant_columns(pooled, warnings);
  if (keep.empty()) {
    throw std::invalid_argument("distance matrix: no non-constant covariate columns left");
  }
  const Eigen::MatrixXd ranks = to_ranks(select_columns(pooled, keep));

  // Rescale so each variable's rank variance matches that of untied ranks,
  // n(n+1)/12, then apply the Mahalanobis form to the rank rows.
  const double n = static_cast<double>(ranks.rows());
  const double untied_variance = n * (n + 1.0) / 12.0;
  Eigen::MatrixXd s = pooled_covariance(ranks);
  Eigen::VectorXd scale(s.rows());
  for (Eigen::Index j = 0; j < s.rows(); ++j) {
    scale(j) = s(j, j) > 0 ? std::sqrt(untied_variance / s(j, j)) : 1.0;
  }
  s = scale.asDiagonal() * s * scale.asDiagonal();
  const auto llt = factor_covariance(s);

  const Eigen::MatrixXd white = llt.matrixL().solve(ranks.transpose());
  const int rows = static_cast<int>(t_count);
  const int cols = static_cast<int>(control.rows());
  DistanceMatrix out;
  out.rows = rows;
  out.cols = cols;
  out.metric = DistanceMetric::robust_mahalanobis;
  out.values.resize(static_cast<std::size_t>(rows) * cols);
  for (int t = 0; t < rows; ++t) {
    for (int c = 0; c < cols; ++c) {
      const double d2 = (white.col(t) - white.col(t_count + c)).squaredNorm();
      out.values[static_cast<std::size_t>(t) * cols + c] = std::sqrt(std::max(d2, 0.0));
    }
  }
  return out;
}

DistanceMatrix distance_matrix(const Cohort& cohort, const std::vector<std::string>& covariates,
                               DistanceMetric metric, std::vector<std::string>* warnings) {
  const std::vector<int> columns = covariates.empty()
                                       ? [&] {
                                           std::vector<int> all(cohort.covariate_names().size());
                                           std::iota(all.begin(), all.end(), 0);
                                           return all;
                                         }()
                                       : cohort.covariate_indices(covariates);
  const auto fill = [&](const std::vector<int>& unit_rows) {
    Eigen::MatrixXd m(unit_rows.size(), columns.size());
    for (std::size_t r = 0; r < unit_rows.size(); ++r) {
      const Unit& unit = cohort.units()[unit_rows[r]];
      for (std::size_t j = 0; j < columns.size(); ++j) {
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = unit.covariates[columns[j]];
      }
    }
    return m;
  };
  const Eigen::MatrixXd treated = fill(cohort.treated_indices());
  const Eigen::MatrixXd control = fill(cohort.control_indices());
  switch (metric) {
    case DistanceMetric::mahalanobis:
      return mahalanobis_matrix(treated, control, warnings);
    case DistanceMetric::robust_mahalanobis:
      return robust_mahalanobis_matrix(treated, control, warnings);
    case DistanceMetric::custom:
      break;
  }
  throw std::invalid_argument("distance_matrix: 'custom' requires a caller-provided matrix");
}

void write_distance_csv(const DistanceMatrix& matrix, std::ostream& out) {
  for (int t = 0; t < matrix.rows; ++t) {
    for (int c = 0; c < matrix.cols; ++c) {
      if (c > 0) out << ",";
      out << matrix.at(t, c);
    }
    out << "\n";
  }
}

PropensityModel fit_propensity(const Cohort& cohort, const std::vector<std::string>& covariates) {
  std::vector<std::string> names = covariates;
  if (names.empty()) names = cohort.covariate_names();
  const std::vector<int> columns = cohort.covariate_indices(names);

  const Eigen::Index n = static_cast<Eigen::Index>(cohort.units().size());
  const Eigen::Index p = static_cast<Eigen::Index>(columns.size()) + 1;
  if (cohort.treated_count() == 0 || cohort.control_count() == 0) {
    throw std::invalid_argument("fit_propensity: need at least one treated and one control unit");
  }

  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Unit& unit = cohort.units()[static_cast<std::size_t>(i)];
    x(i, 0) = 1.0;
    for (std::size_t j = 0; j < columns.size(); ++j) {
      x(i, static_cast<Eigen::Index>(j) + 1) = unit.covariates[columns[j]];
    }
    y(i) = unit.treated ? 1.0 : 0.0;
  }

  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < p) {
      throw std::invalid_argument("fit_propensity: design matrix is rank deficient");
    }
  }

  constexpr double kGradientTol = 1e-8;
  constexpr int kMaxIterations = 100;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  PropensityModel model;
  model.covariates = names;
  model.covariate_columns = columns;

  const auto neg_log_likelihood = [&](const Eigen::VectorXd& b) {
    // sum log(1 + exp(eta)) - y'eta, with a stable log1p(exp(.)).
    const Eigen::VectorXd eta = x * b;
    double nll = -y.dot(eta);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = eta(i);
      nll += e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    }
    return nll;
  };

  double nll = neg_log_likelihood(beta);
  int iter = 0;
  double grad_norm = 0.0;
  for (; iter < kMaxIterations; ++iter) {
    const Eigen::VectorXd eta = x * beta;
    Eigen::VectorXd prob(n), weight(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = 1.0 / (1.0 + std::exp(-eta(i)));
      prob(i) = e;
      weight(i) = std::max(e * (1.0 - e), 1e-12);
    }
    const Eigen::VectorXd grad = x.transpose() * (y - prob);
    grad_norm = grad.lpNorm<Eigen::Infinity>();
    if (grad_norm <= kGradientTol) {
      model.converged = true;
      break;
    }
    const Eigen::MatrixXd info = x.transpose() * weight.asDiagonal() * x;
    Eigen::VectorXd step = info.ldlt().solve(grad);
    // Halve the step until the objective stops worsening.
    double step_scale = 1.0;
    Eigen::VectorXd candidate = beta + step;
    double candidate_nll = neg_log_likelihood(candidate);
    int halvings = 0;
    while (candidate_nll > nll + 1e-12 && halvings < 30) {
      step_scale *= 0.5;
      candidate = beta + step_scale * step;
      candidate_nll = neg_log_likelihood(candidate);
      ++halvings;
    }
    beta = candidate;
    nll = candidate_nll;
  }

  model.iterations = iter;
  model.max_gradient = grad_norm;
  model.coefficients.assign(beta.data(), beta.data() + beta.size());
  // Under separation the gradient can still vanish numerically while the
  // coefficients run off; treat such fits as not converged.
  if (beta.lpNorm<Eigen::Infinity>() > 15.0) {
    model.separation_suspected = true;
    model.converged = false;
  }
  return model;
}

double propensity_score(const PropensityModel& model, const Cohort& cohort, int unit_index) {
  const Unit& unit = cohort.units()[unit_index];
  double eta = model.coefficients[0];
  for (std::size_t j = 0; j < model.covariate_columns.size(); ++j) {
    eta += model.coefficients[j + 1] * unit.covariates[model.covariate_columns[j]];
  }
  return 1.0 / (1.0 + std::exp(-eta));
}

double entire_number_from_propensity(double e, bool* clipped) {
  constexpr double kFloor = 1e-6;
  bool hit = false;
  if (e < kFloor) {
    e = kFloor;
    hit = true;
  } else if (e > 1.0 - kFloor) {
    e = 1.0 - kFloor;
    hit = true;
  }
  if (clipped) *clipped = hit;
  return (1.0 - e) / e;
}

double entire_number(const PropensityModel& model, const Cohort& cohort, int unit_index,
                     bool* clipped) {
  return entire_number_from_propensity(propensity_score(model, cohort, unit_index), clipped);
}

}  // namespace finematch
