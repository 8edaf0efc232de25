#pragma once

#include "kwnr/data.hpp"
#include "kwnr/nr.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kwnr {

inline constexpr double kNormalQuantile975 = 1.959964;

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
};

/// Taylor-linearization variance split into its participation (var1) and
/// response (var2) components.
struct VarianceParts {
    double var1 = 0.0;
    double var2 = 0.0;
    double total = 0.0;
    double se = 0.0;
    Interval ci95;
};

VarianceParts make_variance(double estimate, double var1, double var2);

struct EstimateReport {
    double estimate = 0.0;
    /// Absent when the variance is undefined; `note` then says why.
    std::optional<VarianceParts> variance;
    std::string note;
    /// Units in the (sub)population the estimate refers to.
    std::size_t n_used = 0;
    /// Respondents among them.
    std::size_t n_resp = 0;
};

/// Per-unit Taylor deviates over the cohort: delta_c drives var1, delta_r drives var2.
struct TaylorDeviates {
    std::vector<double> delta_c;
    std::vector<double> delta_r;
};

/// Hajek ratio sum w m y / sum w m. Throws Error when the masked weight mass is zero.
double mean_weighted(std::span<const double> y, std::span<const double> w, std::span<const std::uint8_t> mask);

/// Nonresponse-adjusted KW mean over respondents, optionally restricted to a subgroup mask.
double estimate_kwnr(const CohortSample &cohort, const WeightSet &kw, const ResponseFit &rfit,
                     std::span<const std::uint8_t> subgroup = {});

/// Deviates at centering value `y_center` (the kwNR estimate of the same domain).
/// With a subgroup mask, outcome terms are restricted to members and the
/// denominator is the subgroup's kwNR mass; every unit still contributes through
/// the response-model correction. Outcomes of nonrespondents are never read.
/// Throws Error if the pseudo-information matrix is singular or ill-conditioned.
TaylorDeviates taylor_deviates(const CohortSample &cohort, const WeightSet &kw, const ResponseFit &rfit,
                               double y_center, std::span<const std::uint8_t> subgroup = {});

/// n/(n-1) * sum (delta - mean)^2 over all cohort units. Throws for n < 2.
double var1(std::span<const double> delta_c);

/// n_r (1 - n_r/n_c) s^2, s^2 the sample variance of the respondents' deviates.
/// `delta_r_respondents` holds one entry per respondent. Returns 0 when n_r < 2.
double var2(std::span<const double> delta_r_respondents, std::size_t n_r, std::size_t n_c);

/// var2 for cohort-length deviates, using the respondents' entries.
double var2_from_cohort(std::span<const double> delta_r, const CohortSample &cohort);

/// kwNR estimate with its Taylor-linearization variance.
EstimateReport estimate_report(const CohortSample &cohort, const WeightSet &kw, const ResponseFit &rfit);

/// Subgroup kwNR estimate. Throws Error when the subgroup has no respondents;
/// with a single respondent the estimate is reported and the variance is missing.
EstimateReport estimate_subgroup(const CohortSample &cohort, const WeightSet &kw, const ResponseFit &rfit,
                                 std::span<const std::uint8_t> subgroup);
EstimateReport estimate_subgroup(const CohortSample &cohort, const WeightSet &kw, const ResponseFit &rfit,
                                 const std::string &label);

/// KW-weighted mean over the masked units without nonresponse adjustment
/// (var2 = 0). Every masked unit must have an outcome.
EstimateReport estimate_kw(const CohortSample &cohort, const WeightSet &kw, std::span<const std::uint8_t> mask = {});

} // namespace kwnr
