#include "kwnr/kw.hpp"

#include "kwnr/error.hpp"
#include "kwnr/numeric.hpp"
#include "vector_exp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

namespace kwnr {

namespace {

// Gaussian terms below exp(-kCutoffExponent) ~ 2e-22 of the row maximum are
// skipped. Even n_c ~ 1e5 of them sum to less than the rounding error of a row
// sum >= 1, so the result matches the dense computation.
constexpr double kCutoffExponent = 50.0;

// Type-7 (linear interpolation) sample quantile of sorted data.
double quantile_sorted(const std::vector<double> &sorted, double prob) {
    const double pos = prob * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

} // namespace

KernelType parse_kernel_type(const std::string &name) {
    if (name == "gaussian" || name == "normal") {
        return KernelType::GaussianDensity;
    }
    if (name == "epanechnikov") {
        return KernelType::Epanechnikov;
    }
    if (name == "triweight") {
        return KernelType::Triweight;
    }
    throw Error("unknown kernel '" + name + "' (expected gaussian, epanechnikov or triweight)");
}

const char *to_string(KernelType kernel) noexcept {
    switch (kernel) {
    case KernelType::GaussianDensity:
        return "gaussian";
    case KernelType::Epanechnikov:
        return "epanechnikov";
    case KernelType::Triweight:
        return "triweight";
    }
    return "unknown";
}

double kernel_value(KernelType kernel, double u) noexcept {
    switch (kernel) {
    case KernelType::GaussianDensity:
        return std::exp(-0.5 * u * u) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    case KernelType::Epanechnikov:
        return std::abs(u) < 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
    case KernelType::Triweight: {
        if (std::abs(u) >= 1.0) {
            return 0.0;
        }
        const double v = 1.0 - u * u;
        return 35.0 / 32.0 * v * v * v;
    }
    }
    return 0.0;
}

double silverman_bandwidth(std::span<const double> scores) {
    const std::size_t n = scores.size();
    if (n < 2) {
        throw Error("bandwidth selection needs at least two scores");
    }
    const double mean = compensated_sum(scores) / static_cast<double>(n);
    CompensatedSum ss;
    for (double s : scores) {
        ss.add((s - mean) * (s - mean));
    }
    const double sd = std::sqrt(ss.value() / static_cast<double>(n - 1));
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
    if (!(spread > 0.0)) {
        throw Error("balancing scores have zero spread; bandwidth is undefined");
    }
    return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

double resolve_bandwidth(const KernelSpec &spec, std::span<const double> scores_cohort,
                         std::span<const double> scores_reference) {
    if (spec.bandwidth) {
        if (!(*spec.bandwidth > 0.0) || !std::isfinite(*spec.bandwidth)) {
            throw Error("bandwidth must be positive and finite");
        }
        return *spec.bandwidth;
    }
    std::vector<double> pooled;
    pooled.reserve(scores_cohort.size() + scores_reference.size());
    pooled.insert(pooled.end(), scores_cohort.begin(), scores_cohort.end());
    pooled.insert(pooled.end(), scores_reference.begin(), scores_reference.end());
    return silverman_bandwidth(pooled);
}

WeightSet kw_pseudoweights(std::span<const double> scores_cohort, std::span<const double> scores_reference,
                           std::span<const double> reference_weights, const KernelSpec &spec) {
    if (scores_reference.size() != reference_weights.size()) {
        throw Error("reference scores and weights differ in length");
    }
    if (scores_cohort.empty()) {
        throw Error("cohort is empty");
    }
    const double h = resolve_bandwidth(spec, scores_cohort, scores_reference);
    const double inv_h = 1.0 / h;
    const std::size_t nc = scores_cohort.size();

    // Work on the cohort sorted by score so each reference row only visits the
    // window where the kernel is numerically nonzero.
    std::vector<std::size_t> order(nc);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores_cohort[a] < scores_cohort[b]; });
    std::vector<double> sorted(nc);
    for (std::size_t k = 0; k < nc; ++k) {
        sorted[k] = scores_cohort[order[k]];
    }
    const bool gaussian = spec.kernel == KernelType::GaussianDensity;

    std::vector<double> pseudo_sorted(nc, 0.0);
    std::vector<double> row(nc);
    std::vector<std::size_t> orphans;

    for (std::size_t i = 0; i < scores_reference.size(); ++i) {
        const double bi = scores_reference[i];
        const auto pos = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), bi) - sorted.begin());
        std::size_t lo = pos;
        std::size_t hi = pos;
        double row_sum = 0.0;
        if (gaussian) {
            // The row is normalised, so the density constant and a common factor
            // exp(-min u^2 / 2) cancel; dividing them out keeps the nearest unit at 1.
            double min_sq = std::numeric_limits<double>::infinity();
            if (pos < nc) {
                const double u = (bi - sorted[pos]) * inv_h;
                min_sq = u * u;
            }
            if (pos > 0) {
                const double u = (bi - sorted[pos - 1]) * inv_h;
                min_sq = std::min(min_sq, u * u);
            }
            const double max_sq = min_sq + 2.0 * kCutoffExponent;
            while (lo > 0) {
                const double u = (bi - sorted[lo - 1]) * inv_h;
                if (u * u > max_sq) {
                    break;
                }
                --lo;
            }
            while (hi < nc) {
                const double u = (bi - sorted[hi]) * inv_h;
                if (u * u > max_sq) {
                    break;
                }
                ++hi;
            }
            for (std::size_t j = lo; j < hi; ++j) {
                const double u = (bi - sorted[j]) * inv_h;
                row[j] = -0.5 * (u * u - min_sq);
            }
            detail::exp_inplace(row.data() + lo, hi - lo);
            for (std::size_t j = lo; j < hi; ++j) {
                row_sum += row[j];
            }
        } else {
            // Compact kernels vanish for |u| >= 1.
            while (lo > 0 && std::abs((bi - sorted[lo - 1]) * inv_h) < 1.0) {
                --lo;
            }
            while (hi < nc && std::abs((bi - sorted[hi]) * inv_h) < 1.0) {
                ++hi;
            }
            for (std::size_t j = lo; j < hi; ++j) {
                row[j] = kernel_value(spec.kernel, (bi - sorted[j]) * inv_h);
                row_sum += row[j];
            }
        }
        if (!(row_sum > 0.0) || !std::isfinite(row_sum)) {
            orphans.push_back(i);
            continue;
        }
        const double scale = reference_weights[i] / row_sum;
        for (std::size_t j = lo; j < hi; ++j) {
            pseudo_sorted[j] += scale * row[j];
        }
    }
    if (!orphans.empty()) {
        throw OrphanError(std::move(orphans));
    }
    std::vector<double> pseudo(nc);
    for (std::size_t k = 0; k < nc; ++k) {
        pseudo[order[k]] = pseudo_sorted[k];
    }
    return WeightSet{std::move(pseudo), WeightProvenance::KW};
}

KwResult kw_from_samples(const CohortSample &cohort, const ReferenceSample &reference, const KernelSpec &spec,
                         const DesignSpec &design) {
    KwResult out;
    out.participation = participation_fit(cohort, reference, design);
    const auto design_c = DesignMatrix::build(cohort.covariates(), cohort.x_names(), design);
    const auto design_s = DesignMatrix::build(reference.covariates(), reference.covariate_names(), design);
    out.scores_cohort = balancing_scores(out.participation, design_c);
    out.scores_reference = balancing_scores(out.participation, design_s);
    out.bandwidth = resolve_bandwidth(spec, out.scores_cohort, out.scores_reference);
    KernelSpec resolved = spec;
    resolved.bandwidth = out.bandwidth;
    out.weights = kw_pseudoweights(out.scores_cohort, out.scores_reference, reference.design_weights(), resolved);
    return out;
}

} // namespace kwnr
