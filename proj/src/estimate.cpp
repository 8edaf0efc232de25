#include "kwnr/estimate.hpp"

#include "kwnr/error.hpp"
#include "kwnr/numeric.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace kwnr {

namespace {

constexpr double kMaxCondition = 1e12;

bool in_domain(std::span<const std::uint8_t> subgroup, std::size_t i) {
    return subgroup.empty() || subgroup[i] != 0;
}

void check_alignment(const CohortSample &cohort, const WeightSet &kw, const ResponseFit &rfit,
                     std::span<const std::uint8_t> subgroup) {
    const std::size_t n = cohort.size();
    if (kw.size() != n || rfit.propensity.size() != n || rfit.base_weights.size() != n ||
        static_cast<std::size_t>(rfit.design.rows()) != n) {
        throw DataError("weights and response fit must align with the cohort");
    }
    if (!subgroup.empty() && subgroup.size() != n) {
        throw DataError("subgroup mask must align with the cohort");
    }
}

std::size_t count_if_mask(std::span<const std::uint8_t> mask, std::size_t n) {
    if (mask.empty()) {
        return n;
    }
    std::size_t count = 0;
    for (auto m : mask) {
        count += m != 0 ? 1 : 0;
    }
    return count;
}

} // namespace

VarianceParts make_variance(double estimate, double var1_value, double var2_value) {
    VarianceParts v;
    v.var1 = var1_value;
    v.var2 = var2_value;
    v.total = var1_value + var2_value;
    v.se = std::sqrt(v.total);
    v.ci95 = {estimate - kNormalQuantile975 * v.se, estimate + kNormalQuantile975 * v.se};
    return v;
}

double mean_weighted(std::span<const double> y, std::span<const double> w, std::span<const std::uint8_t> mask) {
    if (y.size() != w.size() || (!mask.empty() && mask.size() != y.size())) {
        throw DataError("mean_weighted: inputs differ in length");
    }
    CompensatedSum num;
    CompensatedSum den;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!in_domain(mask, i) || w[i] == 0.0) {
            continue;
        }
        num.add(w[i] * y[i]);
        den.add(w[i]);
    }
    if (!(den.value() > 0.0)) {
        throw Error("weighted mean over zero weight mass");
    }
    return num.value() / den.value();
}

double estimate_kwnr(const CohortSample &cohort, const WeightSet &kw, const ResponseFit &rfit,
                     std::span<const std::uint8_t> subgroup) {
    check_alignment(cohort, kw, rfit, subgroup);
    CompensatedSum num;
    CompensatedSum den;
    const auto y = cohort.outcome();
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        if (!cohort.responded(i) || !in_domain(subgroup, i)) {
            continue;
        }
        const double w = kw[i] / rfit.propensity[i];
        num.add(w * y[i]);
        den.add(w);
    }
    if (!(den.value() > 0.0)) {
        throw Error("no respondent weight mass in the estimation domain");
    }
    return num.value() / den.value();
}

TaylorDeviates taylor_deviates(const CohortSample &cohort, const WeightSet &kw, const ResponseFit &rfit,
                               double y_center, std::span<const std::uint8_t> subgroup) {
    check_alignment(cohort, kw, rfit, subgroup);
    const std::size_t n = cohort.size();
    const Eigen::MatrixXd &z = rfit.design.values();
    const auto p = z.cols();
    const auto y = cohort.outcome();
    const auto &r = rfit.propensity;
    const auto &r_fit = rfit.fit.fitted;
    const auto dstar = rfit.base_weights.values();

    Eigen::LLT<Eigen::MatrixXd> info(rfit.fit.info_matrix);
    if (info.info() != Eigen::Success || info.rcond() < 1.0 / kMaxCondition) {
        throw Error("pseudo-information matrix is singular or ill-conditioned");
    }

    // Score of the response model at the fitted coefficients, and the
    // outcome-weighted sensitivity of the kwNR weights to the coefficients.
    Eigen::VectorXd score = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd sensitivity = Eigen::VectorXd::Zero(p);
    CompensatedSum denominator;
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const double indicator = cohort.responded(i) ? 1.0 : 0.0;
        score += dstar[i] * (indicator - r_fit[i]) * z.row(row).transpose();
        if (cohort.responded(i) && in_domain(subgroup, i)) {
            const double w = kw[i] / r[i];
            denominator.add(w);
            sensitivity += w * (1.0 - r[i]) * (y[i] - y_center) * z.row(row).transpose();
        }
    }
    const double den = denominator.value();
    if (!(den > 0.0)) {
        throw Error("no respondent weight mass in the estimation domain");
    }
    const Eigen::VectorXd score_term = info.solve(score);
    const Eigen::VectorXd sensitivity_term = info.solve(sensitivity);

    TaylorDeviates td;
    td.delta_c.assign(n, 0.0);
    td.delta_r.assign(n, 0.0);
    for (std::size_t l = 0; l < n; ++l) {
        const auto row = static_cast<Eigen::Index>(l);
        const bool member = cohort.responded(l) && in_domain(subgroup, l);
        const double own = member ? kw[l] / r[l] * (y[l] - y_center) : 0.0;
        const double correction_c = 1.0 - (1.0 - r[l]) * z.row(row).dot(score_term);
        td.delta_c[l] = own * correction_c / den;
        td.delta_r[l] = (own - dstar[l] * z.row(row).dot(sensitivity_term)) / den;
    }
    return td;
}

double var1(std::span<const double> delta_c) {
    const std::size_t n = delta_c.size();
    if (n < 2) {
        throw Error("var1 needs at least two cohort units");
    }
    const double mean = compensated_sum(delta_c) / static_cast<double>(n);
    CompensatedSum ss;
    for (double d : delta_c) {
        ss.add((d - mean) * (d - mean));
    }
    return static_cast<double>(n) / static_cast<double>(n - 1) * ss.value();
}

double var2(std::span<const double> delta_r_respondents, std::size_t n_r, std::size_t n_c) {
    if (n_r > n_c || delta_r_respondents.size() != n_r) {
        throw Error("var2: need n_r <= n_c deviates, one per respondent");
    }
    if (n_r < 2) {
        return 0.0;
    }
    const double mean = compensated_sum(delta_r_respondents) / static_cast<double>(n_r);
    CompensatedSum ss;
    for (double d : delta_r_respondents) {
        ss.add((d - mean) * (d - mean));
    }
    const double s2 = ss.value() / static_cast<double>(n_r - 1);
    const double nr = static_cast<double>(n_r);
    return nr * (1.0 - nr / static_cast<double>(n_c)) * s2;
}

double var2_from_cohort(std::span<const double> delta_r, const CohortSample &cohort) {
    if (delta_r.size() != cohort.size()) {
        throw DataError("deviates must align with the cohort");
    }
    std::vector<double> resp;
    resp.reserve(cohort.respondents());
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        if (cohort.responded(i)) {
            resp.push_back(delta_r[i]);
        }
    }
    return var2(resp, resp.size(), cohort.size());
}

EstimateReport estimate_subgroup(const CohortSample &cohort, const WeightSet &kw, const ResponseFit &rfit,
                                 std::span<const std::uint8_t> subgroup) {
    check_alignment(cohort, kw, rfit, subgroup);
    EstimateReport report;
    report.n_used = count_if_mask(subgroup, cohort.size());
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        if (cohort.responded(i) && in_domain(subgroup, i)) {
            ++report.n_resp;
        }
    }
    if (report.n_used == 0) {
        throw Error("subgroup is empty");
    }
    if (report.n_resp == 0) {
        throw Error("subgroup has no respondents");
    }
    report.estimate = estimate_kwnr(cohort, kw, rfit, subgroup);
    if (report.n_resp < 2) {
        report.note = "n_resp<2";
        return report;
    }
    const auto td = taylor_deviates(cohort, kw, rfit, report.estimate, subgroup);
    report.variance = make_variance(report.estimate, var1(td.delta_c), var2_from_cohort(td.delta_r, cohort));
    return report;
}

EstimateReport estimate_subgroup(const CohortSample &cohort, const WeightSet &kw, const ResponseFit &rfit,
                                 const std::string &label) {
    const auto mask = cohort.subgroup_mask(label);
    return estimate_subgroup(cohort, kw, rfit, mask);
}

EstimateReport estimate_report(const CohortSample &cohort, const WeightSet &kw, const ResponseFit &rfit) {
    return estimate_subgroup(cohort, kw, rfit, std::span<const std::uint8_t>{});
}

EstimateReport estimate_kw(const CohortSample &cohort, const WeightSet &kw, std::span<const std::uint8_t> mask) {
    const std::size_t n = cohort.size();
    if (kw.size() != n || (!mask.empty() && mask.size() != n)) {
        throw DataError("weights and mask must align with the cohort");
    }
    const auto y = cohort.outcome();
    for (std::size_t i = 0; i < n; ++i) {
        if (in_domain(mask, i) && !cohort.has_outcome(i)) {
            throw DataError("KW estimate needs an outcome for every unit in its domain", i + 1, "outcome");
        }
    }
    EstimateReport report;
    report.n_used = count_if_mask(mask, n);
    for (std::size_t i = 0; i < n; ++i) {
        report.n_resp += (in_domain(mask, i) && cohort.responded(i)) ? 1 : 0;
    }
    // Nonmembers may carry NaN outcomes; mean_weighted skips them via the mask.
    std::vector<double> y_safe(y.begin(), y.end());
    for (std::size_t i = 0; i < n; ++i) {
        if (!in_domain(mask, i)) {
            y_safe[i] = 0.0;
        }
    }
    report.estimate = mean_weighted(y_safe, kw.values(), mask);
    CompensatedSum den;
    for (std::size_t i = 0; i < n; ++i) {
        if (in_domain(mask, i)) {
            den.add(kw[i]);
        }
    }
    std::vector<double> delta(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (in_domain(mask, i)) {
            delta[i] = kw[i] * (y_safe[i] - report.estimate) / den.value();
        }
    }
    if (report.n_used < 2) {
        report.note = "n<2";
        return report;
    }
    report.variance = make_variance(report.estimate, var1(delta), 0.0);
    return report;
}

} // namespace kwnr
