#include "kwnr/nr.hpp"

#include "kwnr/error.hpp"

#include <algorithm>

namespace kwnr {

void NrConfig::validate() const {
    if (!(propensity_floor > 0.0 && propensity_floor < 0.5)) {
        throw ConfigError("propensity_floor must lie in (0, 0.5)");
    }
}

ResponseFit fit_response_model(const CohortSample &cohort, const DesignMatrix &z, const WeightSet &kw,
                               const NrConfig &cfg, const FitOptions &options) {
    cfg.validate();
    const std::size_t n = cohort.size();
    if (static_cast<std::size_t>(z.rows()) != n || kw.size() != n) {
        throw DataError("response design and weights must align with the cohort");
    }
    if (cohort.respondents() == 0 || cohort.respondents() == n) {
        throw FitError(FitError::Kind::InvalidInput,
                       "response model needs both respondents and nonrespondents (n_r = " +
                           std::to_string(cohort.respondents()) + " of " + std::to_string(n) + ")");
    }
    if (cfg.base_weight_mode == BaseWeightMode::KW && kw.provenance() != WeightProvenance::KW) {
        throw Error("KW base-weight mode requires KW pseudoweights");
    }
    WeightSet base = cfg.base_weight_mode == BaseWeightMode::KW ? kw : WeightSet::unit(n);

    std::vector<double> indicator(n);
    for (std::size_t i = 0; i < n; ++i) {
        indicator[i] = cohort.responded(i) ? 1.0 : 0.0;
    }
    PropensityFit fit = fit_weighted_logistic(z, indicator, base.values(), options);

    std::vector<double> propensity = fit.fitted;
    std::size_t floored = 0;
    for (double &r : propensity) {
        if (r < cfg.propensity_floor) {
            r = cfg.propensity_floor;
            ++floored;
        }
    }
    return ResponseFit{std::move(fit), z, std::move(base), std::move(propensity), floored, cfg.propensity_floor};
}

ResponseFit fit_response_model(const CohortSample &cohort, const WeightSet &kw, const NrConfig &cfg,
                               const DesignSpec &spec, const FitOptions &options) {
    const auto z = DesignMatrix::build(cohort.response_covariates(), cohort.z_names(), spec);
    return fit_response_model(cohort, z, kw, cfg, options);
}

WeightSet kwnr_weights(const WeightSet &kw, const ResponseFit &fit, const CohortSample &cohort) {
    const std::size_t n = cohort.size();
    if (kw.size() != n || fit.propensity.size() != n) {
        throw DataError("weights and response fit must align with the cohort");
    }
    std::vector<double> values(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!cohort.responded(i)) {
            continue;
        }
        const double r = fit.propensity[i];
        if (!(r >= fit.propensity_floor) || r > 1.0) {
            throw Error("internal invariant violated: response propensity " + std::to_string(r) +
                        " outside [floor, 1] at unit " + std::to_string(i + 1));
        }
        values[i] = kw[i] / r;
    }
    return WeightSet{std::move(values), WeightProvenance::KWNR};
}

} // namespace kwnr
