#include "kwnr/glm.hpp"

#include "kwnr/error.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace kwnr {

namespace {

constexpr double kProbabilityGuard = std::numeric_limits<double>::epsilon();

// log(1 + e^t) without overflow.
double softplus(double t) noexcept {
    return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

void check_lengths(const Eigen::MatrixXd &x, std::span<const double> outcome, std::span<const double> weights) {
    if (outcome.size() != static_cast<std::size_t>(x.rows()) || weights.size() != outcome.size()) {
        throw FitError(FitError::Kind::InvalidInput, "outcome, weights and design rows differ in length");
    }
}

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> s) {
    return {s.data(), static_cast<Eigen::Index>(s.size())};
}

std::string format_coefficients(const Eigen::VectorXd &beta) {
    std::ostringstream out;
    out << '(';
    for (Eigen::Index k = 0; k < beta.size(); ++k) {
        out << (k ? ", " : "") << beta(k);
    }
    out << ')';
    return out.str();
}

} // namespace

DesignMatrix::DesignMatrix(Eigen::MatrixXd values, std::vector<std::string> labels)
    : values_{std::move(values)}, labels_{std::move(labels)} {
    if (static_cast<Eigen::Index>(labels_.size()) != values_.cols()) {
        throw DataError("design matrix labels do not match its columns");
    }
    if (values_.cols() == 0 || labels_.front() != kInterceptLabel) {
        throw DataError("design matrix must start with the intercept column");
    }
    for (Eigen::Index k = 0; k < values_.cols(); ++k) {
        const auto col = values_.col(k);
        if (!col.allFinite()) {
            throw DataError("nonfinite design entry", 0, labels_[static_cast<std::size_t>(k)]);
        }
        if (values_.rows() > 0 && (col.array() == 0.0).all()) {
            throw DataError("design column is identically zero", 0, labels_[static_cast<std::size_t>(k)]);
        }
        const bool all_ones = (col.array() == 1.0).all();
        if (k == 0 && !all_ones) {
            throw DataError("intercept column must be all ones", 0, kInterceptLabel);
        }
        if (k > 0 && (labels_[static_cast<std::size_t>(k)] == kInterceptLabel || (values_.rows() > 0 && all_ones))) {
            throw DataError("intercept column appears more than once", 0, labels_[static_cast<std::size_t>(k)]);
        }
    }
}

DesignMatrix DesignMatrix::build(const Eigen::MatrixXd &raw, const std::vector<std::string> &names,
                                 const DesignSpec &spec) {
    if (spec.degree < 1) {
        throw DataError("design degree must be at least 1");
    }
    if (static_cast<Eigen::Index>(names.size()) != raw.cols()) {
        throw DataError("covariate names do not match covariate columns");
    }
    const Eigen::Index n = raw.rows();
    const Eigen::Index k = raw.cols();
    const Eigen::Index n_powers = k * (spec.degree - 1);
    const Eigen::Index n_inter = spec.interactions ? k * (k - 1) / 2 : 0;
    Eigen::MatrixXd values(n, 1 + k + n_powers + n_inter);
    std::vector<std::string> labels;
    labels.reserve(static_cast<std::size_t>(values.cols()));

    values.col(0).setOnes();
    labels.emplace_back(kInterceptLabel);
    Eigen::Index c = 1;
    for (Eigen::Index j = 0; j < k; ++j, ++c) {
        values.col(c) = raw.col(j);
        labels.push_back(names[static_cast<std::size_t>(j)]);
    }
    for (int power = 2; power <= spec.degree; ++power) {
        for (Eigen::Index j = 0; j < k; ++j, ++c) {
            values.col(c) = raw.col(j).array().pow(power).matrix();
            labels.push_back(names[static_cast<std::size_t>(j)] + "^" + std::to_string(power));
        }
    }
    if (spec.interactions) {
        for (Eigen::Index a = 0; a < k; ++a) {
            for (Eigen::Index b = a + 1; b < k; ++b, ++c) {
                values.col(c) = raw.col(a).cwiseProduct(raw.col(b));
                labels.push_back(names[static_cast<std::size_t>(a)] + ":" + names[static_cast<std::size_t>(b)]);
            }
        }
    }
    return DesignMatrix{std::move(values), std::move(labels)};
}

double expit(double t) noexcept {
    double p;
    if (t >= 0.0) {
        p = 1.0 / (1.0 + std::exp(-t));
    } else {
        const double e = std::exp(t);
        p = e / (1.0 + e);
    }
    return std::clamp(p, kProbabilityGuard, 1.0 - kProbabilityGuard);
}

double weighted_log_likelihood(const Eigen::MatrixXd &x, std::span<const double> outcome,
                               std::span<const double> weights, const Eigen::VectorXd &beta) {
    check_lengths(x, outcome, weights);
    const Eigen::VectorXd eta = x * beta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (weights[u] != 0.0) {
            ll += weights[u] * (outcome[u] * eta(i) - softplus(eta(i)));
        }
    }
    return ll;
}

Eigen::VectorXd weighted_score(const Eigen::MatrixXd &x, std::span<const double> outcome,
                               std::span<const double> weights, const Eigen::VectorXd &beta) {
    check_lengths(x, outcome, weights);
    const Eigen::VectorXd eta = x * beta;
    Eigen::VectorXd resid(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const auto u = static_cast<std::size_t>(i);
        resid(i) = weights[u] * (outcome[u] - expit(eta(i)));
    }
    return x.transpose() * resid;
}

PropensityFit fit_weighted_logistic(const DesignMatrix &design, std::span<const double> outcome,
                                    std::span<const double> weights, const FitOptions &options) {
    const Eigen::MatrixXd &x = design.values();
    check_lengths(x, outcome, weights);
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();

    double mass = 0.0;
    double mass_one = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (!std::isfinite(weights[u]) || weights[u] < 0.0) {
            throw FitError(FitError::Kind::InvalidInput, "weights must be finite and nonnegative");
        }
        if (!(outcome[u] >= 0.0 && outcome[u] <= 1.0)) {
            throw FitError(FitError::Kind::InvalidInput, "outcomes must lie in [0, 1]");
        }
        mass += weights[u];
        mass_one += weights[u] * outcome[u];
    }
    if (!(mass_one > 0.0) || !(mass - mass_one > 0.0)) {
        throw FitError(FitError::Kind::InvalidInput,
                       "outcome needs weighted mass on both 0 and 1 to be estimable");
    }

    const auto w = as_vector(weights);
    const auto y = as_vector(outcome);
    const double score_scale = 1.0 + (x.transpose() * w).lpNorm<Eigen::Infinity>();
    const double threshold = options.tolerance * score_scale;

    PropensityFit fit;
    fit.labels = design.labels();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    const double ybar = mass_one / mass;
    beta(0) = std::log(ybar / (1.0 - ybar));

    double ll = weighted_log_likelihood(x, outcome, weights, beta);
    fit.log_likelihood_trace.push_back(ll);

    Eigen::VectorXd prob(n);
    Eigen::VectorXd score(p);
    Eigen::MatrixXd info(p, p);
    auto evaluate = [&](const Eigen::VectorXd &b) {
        const Eigen::VectorXd eta = x * b;
        for (Eigen::Index i = 0; i < n; ++i) {
            prob(i) = expit(eta(i));
        }
        score = x.transpose() * (w.array() * (y - prob).array()).matrix();
        const Eigen::VectorXd curv = w.array() * prob.array() * (1.0 - prob.array());
        info = x.transpose() * curv.asDiagonal() * x;
    };

    int iter = 0;
    while (true) {
        evaluate(beta);
        fit.max_score_norm = score.lpNorm<Eigen::Infinity>();
        if (fit.max_score_norm < threshold) {
            fit.converged = true;
            break;
        }
        if (iter >= options.max_iterations) {
            throw FitError(FitError::Kind::NotConverged,
                           "logistic fit did not converge in " + std::to_string(options.max_iterations) +
                               " iterations; last score norm " + std::to_string(fit.max_score_norm),
                           fit.max_score_norm);
        }
        Eigen::LLT<Eigen::MatrixXd> llt(info);
        if (llt.info() != Eigen::Success || llt.rcond() < 1e-15) {
            throw FitError(FitError::Kind::Singular, "information matrix is singular at iteration " +
                                                         std::to_string(iter) + ", coefficients " +
                                                         format_coefficients(beta),
                           fit.max_score_norm);
        }
        const Eigen::VectorXd step = llt.solve(score);

        double t = 1.0;
        Eigen::VectorXd candidate = beta + step;
        double ll_new = weighted_log_likelihood(x, outcome, weights, candidate);
        int halvings = 0;
        const double slack = 1e-13 * (1.0 + std::abs(ll));
        while (!(ll_new >= ll - slack) && halvings < options.max_step_halvings) {
            t *= 0.5;
            candidate = beta + t * step;
            ll_new = weighted_log_likelihood(x, outcome, weights, candidate);
            ++halvings;
        }
        ++iter;
        if (!(ll_new >= ll - slack)) {
            // No ascent direction left at working precision.
            evaluate(beta);
            fit.max_score_norm = score.lpNorm<Eigen::Infinity>();
            if (fit.max_score_norm < threshold) {
                fit.converged = true;
                break;
            }
            throw FitError(FitError::Kind::NotConverged,
                           "step-halving exhausted; last score norm " + std::to_string(fit.max_score_norm),
                           fit.max_score_norm);
        }
        const bool improving = ll_new > ll;
        beta = candidate;
        ll = std::max(ll_new, ll);
        fit.log_likelihood_trace.push_back(ll_new);
        if (improving && beta.norm() > options.separation_norm) {
            throw FitError(FitError::Kind::Separation,
                           "coefficients diverge (norm " + std::to_string(beta.norm()) +
                               "): quasi-complete separation",
                           fit.max_score_norm);
        }
    }

    fit.coefficients = beta;
    fit.iterations = iter;
    fit.fitted.assign(prob.data(), prob.data() + n);
    fit.info_matrix = info;
    fit.log_likelihood = weighted_log_likelihood(x, outcome, weights, beta);
    return fit;
}

PropensityFit participation_fit(const CohortSample &cohort, const ReferenceSample &reference,
                                const DesignSpec &spec, const FitOptions &options) {
    if (cohort.covariates().cols() != reference.covariates().cols()) {
        throw DataError("cohort and reference covariate dimensions differ");
    }
    const auto nc = static_cast<Eigen::Index>(cohort.size());
    const auto ns = static_cast<Eigen::Index>(reference.size());
    Eigen::MatrixXd raw(nc + ns, cohort.covariates().cols());
    raw.topRows(nc) = cohort.covariates();
    raw.bottomRows(ns) = reference.covariates();
    const auto design = DesignMatrix::build(raw, cohort.x_names(), spec);

    std::vector<double> label(static_cast<std::size_t>(nc + ns), 0.0);
    std::vector<double> weight(static_cast<std::size_t>(nc + ns), 1.0);
    std::fill_n(label.begin(), nc, 1.0);
    const auto d = reference.design_weights();
    std::copy(d.begin(), d.end(), weight.begin() + nc);
    return fit_weighted_logistic(design, label, weight, options);
}

std::vector<double> balancing_scores(const PropensityFit &fit, const DesignMatrix &x) {
    if (x.cols() != fit.coefficients.size()) {
        throw DataError("design has " + std::to_string(x.cols()) + " columns but the fit has " +
                        std::to_string(fit.coefficients.size()) + " coefficients");
    }
    const Eigen::VectorXd eta = x.values() * fit.coefficients;
    return {eta.data(), eta.data() + eta.size()};
}

} // namespace kwnr
