#pragma once

#include "kwnr/data.hpp"
#include "kwnr/glm.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kwnr {

enum class KernelType { GaussianDensity, Epanechnikov, Triweight };

KernelType parse_kernel_type(const std::string &name);
const char *to_string(KernelType kernel) noexcept;

/// Kernel K(u). Nonnegative, symmetric, K(0) > 0.
double kernel_value(KernelType kernel, double u) noexcept;

struct KernelSpec {
    KernelType kernel = KernelType::GaussianDensity;
    /// Explicit bandwidth; nullopt selects Silverman's rule on the pooled scores.
    std::optional<double> bandwidth;
};

/// 0.9 * min(sd, IQR / 1.34) * n^(-1/5); falls back to sd when the IQR is zero.
/// Throws Error on fewer than two scores or zero spread.
double silverman_bandwidth(std::span<const double> scores);

/// Bandwidth the spec resolves to for the given cohort/reference scores.
double resolve_bandwidth(const KernelSpec &spec, std::span<const double> scores_cohort,
                         std::span<const double> scores_reference);

/// Kernel-weighted pseudoweights: every reference unit spreads its design weight
/// over the cohort in proportion to K((b_i - b_j) / h), normalised over the cohort.
/// Throws OrphanError listing reference units whose kernel row has no mass.
WeightSet kw_pseudoweights(std::span<const double> scores_cohort, std::span<const double> scores_reference,
                           std::span<const double> reference_weights, const KernelSpec &spec);

/// Participation fit, balancing scores, resolved bandwidth and KW weights for one cohort/reference pair.
struct KwResult {
    PropensityFit participation;
    std::vector<double> scores_cohort;
    std::vector<double> scores_reference;
    double bandwidth = 0.0;
    WeightSet weights{{}, WeightProvenance::KW};
};

KwResult kw_from_samples(const CohortSample &cohort, const ReferenceSample &reference, const KernelSpec &spec = {},
                         const DesignSpec &design = {});

} // namespace kwnr
