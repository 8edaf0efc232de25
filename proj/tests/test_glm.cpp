#include "fixtures.hpp"
#include "oracles.hpp"

#include "kwnr/error.hpp"
#include "kwnr/glm.hpp"
#include "kwnr/sim.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace kwnr;

namespace {

DesignMatrix with_intercept(const std::vector<double> &x) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(x.size()), 2);
    for (std::size_t i = 0; i < x.size(); ++i) {
        m(static_cast<Eigen::Index>(i), 0) = 1.0;
        m(static_cast<Eigen::Index>(i), 1) = x[i];
    }
    return DesignMatrix{m, {kInterceptLabel, "x"}};
}

FitError::Kind fit_error_kind(const DesignMatrix &x, const std::vector<double> &y, const std::vector<double> &w) {
    try {
        fit_weighted_logistic(x, y, w);
    } catch (const FitError &e) {
        return e.kind();
    }
    FAIL("expected FitError");
    return FitError::Kind::InvalidInput;
}

} // namespace

TEST_CASE("expit values") {
    CHECK(expit(0.0) == 0.5);
    CHECK(expit(0.2) == doctest::Approx(0.549833997312478).epsilon(1e-14));
    const double big = expit(800.0);
    CHECK(std::isfinite(big));
    CHECK(big < 1.0);
    CHECK(big > 1.0 - 1e-12);
    const double small = expit(-800.0);
    CHECK(small > 0.0);
    CHECK(small < 1e-12);
    CHECK(expit(-3.0) + expit(3.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("design matrix validation") {
    Eigen::MatrixXd m(3, 2);
    m << 1, 0.5, 1, 0.7, 1, 0.9;
    CHECK_NOTHROW(DesignMatrix(m, {kInterceptLabel, "x"}));
    Eigen::MatrixXd no_intercept = m;
    no_intercept(1, 0) = 2.0;
    CHECK_THROWS_AS(DesignMatrix(no_intercept, {kInterceptLabel, "x"}), DataError);
    Eigen::MatrixXd zero_col = m;
    zero_col.col(1).setZero();
    CHECK_THROWS_AS(DesignMatrix(zero_col, {kInterceptLabel, "x"}), DataError);
    Eigen::MatrixXd twice = m;
    twice.col(1).setOnes();
    CHECK_THROWS_AS(DesignMatrix(twice, {kInterceptLabel, "x"}), DataError);
    Eigen::MatrixXd inf = m;
    inf(2, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(DesignMatrix(inf, {kInterceptLabel, "x"}), DataError);
}

TEST_CASE("design expansion: powers and interactions") {
    Eigen::MatrixXd raw(2, 2);
    raw << 1.0, 2.0, 3.0, -1.0;
    const auto d = DesignMatrix::build(raw, {"a", "b"}, {2, true});
    REQUIRE(d.cols() == 6);
    CHECK(d.labels()[0] == kInterceptLabel);
    CHECK(d.values()(1, 1) == 3.0);
    const auto &labels = d.labels();
    const auto col = [&](const std::string &name) {
        return std::find(labels.begin(), labels.end(), name) - labels.begin();
    };
    CHECK(d.values()(1, col("a^2")) == 9.0);
    CHECK(d.values()(1, col("a:b")) == -3.0);
}

TEST_CASE("intercept-only fit on balanced data") {
    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(10, 1);
    const DesignMatrix x{ones, {kInterceptLabel}};
    std::vector<double> y{1, 0, 1, 0, 1, 0, 1, 0, 1, 0};
    const auto fit = fit_weighted_logistic(x, y, std::vector<double>(10, 1.0));
    CHECK(fit.converged);
    CHECK(std::abs(fit.coefficients(0)) < 1e-12);
    for (double p : fit.fitted) {
        CHECK(p == doctest::Approx(0.5));
    }
}

TEST_CASE("duplicated rows at half weight give the same coefficients") {
    const std::vector<double> x{-1.5, -0.8, -0.2, 0.1, 0.4, 0.9, 1.3, 2.0};
    const std::vector<double> y{0, 1, 0, 0, 1, 0, 1, 1};
    const std::vector<double> w{1.0, 2.0, 0.5, 1.5, 1.0, 3.0, 1.0, 0.7};
    std::vector<double> x2;
    std::vector<double> y2;
    std::vector<double> w2;
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (int k = 0; k < 2; ++k) {
            x2.push_back(x[i]);
            y2.push_back(y[i]);
            w2.push_back(w[i] / 2.0);
        }
    }
    const auto a = fit_weighted_logistic(with_intercept(x), y, w);
    const auto b = fit_weighted_logistic(with_intercept(x2), y2, w2);
    CHECK((a.coefficients - b.coefficients).norm() < 1e-10);
}

TEST_CASE("20-row fit matches a grid-search maximizer") {
    std::mt19937_64 rng{123};
    std::normal_distribution<double> normal{0.0, 1.0};
    std::uniform_real_distribution<double> unif{0.0, 1.0};
    std::vector<double> x(20);
    std::vector<double> y(20);
    std::vector<double> w(20);
    for (std::size_t i = 0; i < 20; ++i) {
        x[i] = normal(rng);
        y[i] = unif(rng) < 1.0 / (1.0 + std::exp(-(0.4 + 1.1 * x[i]))) ? 1.0 : 0.0;
        w[i] = 0.2 + 3.0 * unif(rng);
    }
    const auto design = with_intercept(x);
    const auto fit = fit_weighted_logistic(design, y, w);
    const auto grid = kwnr::testing::grid_search_mle(design.values(), y, w);
    CHECK(std::abs(fit.coefficients(0) - grid(0)) < 1e-4);
    CHECK(std::abs(fit.coefficients(1) - grid(1)) < 1e-4);
}

TEST_CASE("fitted probabilities and information are recomputable") {
    const std::vector<double> x{-1.0, -0.5, 0.0, 0.5, 1.0, 1.5};
    const std::vector<double> y{0, 1, 0, 1, 1, 0};
    const std::vector<double> w{1, 2, 1, 2, 1, 2};
    const auto design = with_intercept(x);
    const auto fit = fit_weighted_logistic(design, y, w);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(2, 2);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Eigen::RowVector2d row = design.values().row(static_cast<Eigen::Index>(i));
        const double p = 1.0 / (1.0 + std::exp(-row.dot(fit.coefficients)));
        CHECK(fit.fitted[i] == doctest::Approx(p).epsilon(1e-14));
        info += w[i] * p * (1 - p) * row.transpose() * row;
    }
    CHECK((fit.info_matrix - info).norm() < 1e-12 * info.norm());
}

TEST_CASE("log-likelihood never decreases across accepted steps") {
    std::mt19937_64 rng{9};
    std::normal_distribution<double> normal{0.0, 1.0};
    std::vector<double> x(300);
    std::vector<double> y(300);
    std::vector<double> w(300);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = 3.0 * normal(rng);
        y[i] = normal(rng) < 2.0 * x[i] - 1.0 ? 1.0 : 0.0;
        w[i] = std::exp(normal(rng));
    }
    const auto fit = fit_weighted_logistic(with_intercept(x), y, w);
    REQUIRE(fit.log_likelihood_trace.size() >= 2);
    for (std::size_t k = 1; k < fit.log_likelihood_trace.size(); ++k) {
        CHECK(fit.log_likelihood_trace[k] >= fit.log_likelihood_trace[k - 1]);
    }
}

TEST_CASE("separated data is an error, not garbage") {
    const std::vector<double> x{-2, -1, -0.5, 0.5, 1, 2};
    const std::vector<double> y{0, 0, 0, 1, 1, 1};
    CHECK(fit_error_kind(with_intercept(x), y, std::vector<double>(6, 1.0)) == FitError::Kind::Separation);
}

TEST_CASE("collinear design is singular") {
    Eigen::MatrixXd m(6, 3);
    for (int i = 0; i < 6; ++i) {
        m(i, 0) = 1.0;
        m(i, 1) = i * 0.3 - 0.7;
        m(i, 2) = 2.0 * m(i, 1);
    }
    const DesignMatrix x{m, {kInterceptLabel, "a", "b"}};
    CHECK(fit_error_kind(x, {0, 1, 0, 1, 1, 0}, std::vector<double>(6, 1.0)) == FitError::Kind::Singular);
}

TEST_CASE("one-sided outcome is invalid input") {
    CHECK(fit_error_kind(with_intercept({0.1, 0.2, 0.3}), {1, 1, 1}, {1, 1, 1}) == FitError::Kind::InvalidInput);
    CHECK(fit_error_kind(with_intercept({0.1, 0.2, 0.3}), {1, 0, 1}, {1, 0, 1}) == FitError::Kind::InvalidInput);
}

TEST_CASE("non-convergence reports the last score norm") {
    std::mt19937_64 rng{4};
    std::normal_distribution<double> normal{0.0, 1.0};
    std::vector<double> x(200);
    std::vector<double> y(200);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = normal(rng);
        y[i] = normal(rng) < x[i] ? 1.0 : 0.0;
    }
    FitOptions opts;
    opts.max_iterations = 1;
    try {
        fit_weighted_logistic(with_intercept(x), y, std::vector<double>(200, 1.0), opts);
        FAIL("expected FitError");
    } catch (const FitError &e) {
        CHECK(e.kind() == FitError::Kind::NotConverged);
        CHECK(e.last_score_norm() > 0.0);
    }
}

TEST_CASE("participation fit: exchangeable samples give a null slope") {
    const auto cohort = kwnr::testing::make_cohort(2000, 31, {.shift = 0.0});
    const auto reference = kwnr::testing::make_reference(2000, 32, 1.0);
    const auto fit = participation_fit(cohort, reference);
    const Eigen::MatrixXd cov = fit.info_matrix.inverse();
    CHECK(std::abs(fit.coefficients(1)) < 3.0 * std::sqrt(cov(1, 1)));
    CHECK(fit.fitted.size() == 4000);
}

TEST_CASE("participation fit: doubling reference weights keeps the score ordering") {
    const auto cohort = kwnr::testing::make_cohort(500, 41);
    const auto reference = kwnr::testing::make_reference(400, 42, 50.0);
    const auto doubled = kwnr::testing::make_reference(400, 42, 100.0);
    const auto design = DesignMatrix::build(cohort.covariates(), cohort.x_names());
    const auto a = balancing_scores(participation_fit(cohort, reference), design);
    const auto b = balancing_scores(participation_fit(cohort, doubled), design);
    std::vector<std::size_t> ia(a.size());
    std::iota(ia.begin(), ia.end(), 0);
    auto ib = ia;
    std::stable_sort(ia.begin(), ia.end(), [&](auto i, auto j) { return a[i] < a[j]; });
    std::stable_sort(ib.begin(), ib.end(), [&](auto i, auto j) { return b[i] < b[j]; });
    CHECK(ia == ib);
}

TEST_CASE("participation fit detects size-biased selection") {
    sim::SimScenario scn;
    scn.beta_c = {-1.0, 1.5};
    const auto pop = sim::generate_population(scn, 1);
    const auto draw = sim::draw_pps_cohort(pop, scn.cohort_size, scn.beta_c, 2);
    const auto reference = sim::draw_srs_reference(pop, scn.reference_size, 3);
    const auto fit = participation_fit(draw.cohort, reference);
    const Eigen::MatrixXd cov = fit.info_matrix.inverse();
    CHECK(fit.coefficients(1) > 0.0);
    CHECK(fit.coefficients(1) / std::sqrt(cov(1, 1)) > 5.0);
}

TEST_CASE("balancing scores are the full linear predictor") {
    PropensityFit fit;
    fit.coefficients = Eigen::Vector2d(0.0, 1.0);
    const auto scores = balancing_scores(fit, with_intercept({0.7, 0.7, -1.0}));
    CHECK(scores[0] == doctest::Approx(0.7));
    CHECK(scores[0] == scores[1]);
    CHECK(scores[2] == doctest::Approx(-1.0));
    fit.coefficients = Eigen::Vector2d(0.5, 1.0);
    CHECK(balancing_scores(fit, with_intercept({0.7}))[0] == doctest::Approx(1.2));
    CHECK_THROWS(balancing_scores(fit, DesignMatrix{Eigen::MatrixXd::Ones(2, 1), {kInterceptLabel}}));
}
