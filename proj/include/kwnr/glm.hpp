#pragma once

#include "kwnr/data.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace kwnr {

/// Expansion g(.) applied to raw covariates before a logistic fit.
/// Column order: intercept, raw columns, powers 2..degree of each column,
/// then pairwise products when `interactions` is set.
struct DesignSpec {
    int degree = 1;
    bool interactions = false;
};

/// n x p model matrix whose first column is the intercept.
class DesignMatrix {
public:
    /// Validates: finite entries, no all-zero column, exactly one intercept column
    /// (column 0, all ones, labelled "(intercept)").
    DesignMatrix(Eigen::MatrixXd values, std::vector<std::string> labels);

    /// Applies `spec` to raw covariates.
    static DesignMatrix build(const Eigen::MatrixXd &raw, const std::vector<std::string> &names,
                              const DesignSpec &spec = {});

    Eigen::Index rows() const noexcept { return values_.rows(); }
    Eigen::Index cols() const noexcept { return values_.cols(); }
    const Eigen::MatrixXd &values() const noexcept { return values_; }
    const std::vector<std::string> &labels() const noexcept { return labels_; }

private:
    Eigen::MatrixXd values_;
    std::vector<std::string> labels_;
};

inline constexpr const char *kInterceptLabel = "(intercept)";

/// Logistic function, kept strictly inside (0, 1) by a machine-epsilon guard.
double expit(double t) noexcept;

struct FitOptions {
    int max_iterations = 25;
    /// Convergence when |score|_inf < tolerance * (1 + |sum_i w_i x_i|_inf).
    double tolerance = 1e-8;
    /// Coefficient 2-norm above which a still-improving fit is declared separated.
    double separation_norm = 30.0;
    int max_step_halvings = 40;
};

/// Result of a weighted logistic maximum pseudo-likelihood fit.
struct PropensityFit {
    Eigen::VectorXd coefficients;
    std::vector<double> fitted;
    /// Sum_i w_i p_i (1 - p_i) x_i x_i^T at the solution.
    Eigen::MatrixXd info_matrix;
    std::vector<std::string> labels;
    bool converged = false;
    int iterations = 0;
    double max_score_norm = 0.0;
    double log_likelihood = 0.0;
    /// Pseudo-loglikelihood after each accepted iterate (first entry is the start value).
    std::vector<double> log_likelihood_trace;
};

/// Weighted log-likelihood sum_i w_i {y_i log p_i + (1 - y_i) log(1 - p_i)}.
double weighted_log_likelihood(const Eigen::MatrixXd &x, std::span<const double> outcome,
                               std::span<const double> weights, const Eigen::VectorXd &beta);

/// Weighted score sum_i w_i (y_i - p_i) x_i.
Eigen::VectorXd weighted_score(const Eigen::MatrixXd &x, std::span<const double> outcome,
                               std::span<const double> weights, const Eigen::VectorXd &beta);

/// Newton-Raphson with step-halving. Outcomes may be fractional in [0, 1]; the
/// positive-weight rows must carry some mass on both 0 and 1.
/// Throws FitError on non-convergence, separation or a singular information matrix.
PropensityFit fit_weighted_logistic(const DesignMatrix &x, std::span<const double> outcome,
                                    std::span<const double> weights, const FitOptions &options = {});

/// Participation model: cohort rows (label 1, weight 1) stacked over reference
/// rows (label 0, weight d_i). The fitted vector covers the stacked rows.
PropensityFit participation_fit(const CohortSample &cohort, const ReferenceSample &reference,
                                const DesignSpec &spec = {}, const FitOptions &options = {});

/// Full linear predictor alpha + B^T g(x). The intercept is kept: kernel matching
/// only uses score differences, so any common offset cancels.
std::vector<double> balancing_scores(const PropensityFit &fit, const DesignMatrix &x);

} // namespace kwnr
