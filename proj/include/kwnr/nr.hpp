#pragma once

#include "kwnr/data.hpp"
#include "kwnr/glm.hpp"

#include <vector>

namespace kwnr {

enum class BaseWeightMode {
    KW,   ///< pseudo-likelihood weights d*_i = KW pseudoweight
    Unit, ///< d*_i = 1
};

struct NrConfig {
    BaseWeightMode base_weight_mode = BaseWeightMode::KW;
    double propensity_floor = 0.01;

    /// Throws ConfigError unless 0 < propensity_floor < 0.5.
    void validate() const;
};

/// Follow-up response-propensity fit.
struct ResponseFit {
    /// Unfloored logistic fit (fitted = raw r_i, info_matrix = pseudo-information).
    PropensityFit fit;
    /// Rows g(z_i) the model was fitted on.
    DesignMatrix design;
    /// The d*_i used as likelihood weights.
    WeightSet base_weights;
    /// r_i after flooring; this is what the weights and estimators use.
    std::vector<double> propensity;
    std::size_t floored_count = 0;
    double propensity_floor = 0.01;
};

/// Fits the response model on the cohort with outcome I^R and weights d*_i.
ResponseFit fit_response_model(const CohortSample &cohort, const DesignMatrix &z, const WeightSet &kw,
                               const NrConfig &cfg = {}, const FitOptions &options = {});

/// Convenience overload using the default design on the cohort's z columns.
ResponseFit fit_response_model(const CohortSample &cohort, const WeightSet &kw, const NrConfig &cfg = {},
                               const DesignSpec &spec = {}, const FitOptions &options = {});

/// d_i / r_i for respondents, 0 otherwise.
WeightSet kwnr_weights(const WeightSet &kw, const ResponseFit &fit, const CohortSample &cohort);

} // namespace kwnr
