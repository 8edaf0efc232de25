#pragma once

#include "kwnr/data.hpp"
#include "kwnr/glm.hpp"
#include "kwnr/kw.hpp"
#include "kwnr/nr.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace kwnr::sim {

/// How the size-biased cohort is drawn.
enum class PpsMethod {
    /// Sequential draws without replacement, each with probability proportional
    /// to mos among the units not yet drawn.
    Successive,
    /// Systematic PPS on a random permutation of the population.
    Systematic,
};

/// What to do when n_c * mos_k / sum(mos) exceeds 1 for some unit.
enum class PpsOverflow {
    Allow,     ///< keep pi_k = n_c * mos_k / sum(mos) (successive sampling only)
    Certainty, ///< take those units with certainty and redistribute the rest
    Error,     ///< refuse the design
};

using Coefficients = std::array<double, 2>;

struct SimScenario {
    std::size_t population_size = 200000;
    std::size_t cohort_size = 8000;
    std::size_t reference_size = 2000;
    Coefficients beta_y{-0.5, 0.5};
    Coefficients beta_r{0.2, 0.5};
    Coefficients beta_c{-1.0, 0.5};
    std::size_t reps = 2000;
    std::uint64_t master_seed = 20240531;
    NrConfig nr;
    KernelSpec kernel;
    DesignSpec design;
    PpsMethod pps_method = PpsMethod::Successive;
    PpsOverflow pps_overflow = PpsOverflow::Allow;
    /// Reuse the replicate-0 population in every replicate instead of regenerating it.
    bool fixed_population = false;

    /// Throws ConfigError on n_c + n_s > N, reps < 1 or invalid NR settings.
    void validate() const;
};

/// Independent random streams inside one replicate.
enum class Stream : std::uint64_t { Population = 1, Cohort = 2, Reference = 3 };

/// Seed for (master_seed, rep_index, stream): a splitmix64 hash chain, so each
/// replicate and stream gets its own engine and adding a stream never moves another.
std::uint64_t stream_seed(std::uint64_t master_seed, std::uint64_t rep_index, Stream stream) noexcept;

using Engine = std::mt19937_64;

struct Population {
    std::vector<double> x;
    std::vector<std::uint8_t> y;
    std::vector<std::uint8_t> respond;

    std::size_t size() const noexcept { return x.size(); }
    double mean_outcome() const;
    double response_rate() const;
};

/// x ~ N(0, 1); y and I^R independent Bernoullis with logistic means in x.
Population generate_population(const SimScenario &scn, std::uint64_t seed);

/// pi_k = n * mos_k / sum(mos), handled per `overflow`. `certainty_count`
/// receives the number of units with pi_k >= 1.
std::vector<double> pps_inclusion_probabilities(std::span<const double> mos, std::size_t n, PpsOverflow overflow,
                                                std::size_t *certainty_count = nullptr);

struct PpsDraw {
    CohortSample cohort;
    /// 1 / pi_k; benchmark only, never shown to the KW pipeline.
    WeightSet true_weights;
    std::vector<std::size_t> units;
    std::size_t certainty_units = 0;
};

/// Fixed-size PPS draw with mos_k = exp(b0 + b1 x_k). True weights are 1 / pi_k.
/// Systematic sampling needs every pi_k <= 1, so Allow is rejected there.
PpsDraw draw_pps_cohort(const Population &pop, std::size_t n_c, const Coefficients &beta_c, std::uint64_t seed,
                        PpsMethod method = PpsMethod::Successive, PpsOverflow overflow = PpsOverflow::Allow);

/// Simple random sample without replacement, d_i = N / n_s.
ReferenceSample draw_srs_reference(const Population &pop, std::size_t n_s, std::uint64_t seed);

enum class Estimator : std::size_t { TrueWeightedC, UnweightedC, KwC, UnweightedR, KwR, KwnrR };
inline constexpr std::size_t kEstimatorCount = 6;
inline constexpr std::array<Estimator, kEstimatorCount> kEstimators{
    Estimator::TrueWeightedC, Estimator::UnweightedC, Estimator::KwC,
    Estimator::UnweightedR,   Estimator::KwR,         Estimator::KwnrR};

const char *estimator_name(Estimator e) noexcept;
const char *estimator_label(Estimator e) noexcept;

struct ReplicateRecord {
    std::size_t rep = 0;
    bool ok = false;
    std::string error;
    double truth = 0.0;
    std::array<double, kEstimatorCount> estimates{};
    double var_tl = 0.0;
    double var1 = 0.0;
    double var2 = 0.0;
    double cv_true = 0.0;
    double cv_kw = 0.0;
    double cv_kwnr = 0.0;
    double population_response_rate = 0.0;
    std::size_t respondents = 0;
    std::size_t floored = 0;
    std::size_t certainty_units = 0;
    double bandwidth = 0.0;
};

/// One full pipeline pass. Deterministic in (scn.master_seed, rep_index).
/// Pipeline errors are caught and recorded; the record is marked failed.
ReplicateRecord run_replicate(const SimScenario &scn, std::size_t rep_index);

struct EstimatorMetrics {
    double mean_estimate = 0.0;
    double bias = 0.0;
    /// Bias over the mean population value, in percent.
    double rb_pct = 0.0;
    /// Variance of the replicate errors (estimate - population mean), n - 1 denominator.
    double emp_var = 0.0;
    /// bias^2 + emp_var.
    double mse = 0.0;
};

struct SimMetrics {
    std::array<EstimatorMetrics, kEstimatorCount> estimators{};
    /// Mean TL variance of the kwNR estimator over its empirical variance.
    double vr = 0.0;
    double mean_var_tl = 0.0;
    double mean_var1 = 0.0;
    double mean_var2 = 0.0;
    double mean_truth = 0.0;
    double mean_response_rate = 0.0;
    double mean_cv_true = 0.0;
    double mean_cv_kw = 0.0;
    double mean_cv_kwnr = 0.0;
    std::size_t reps = 0;
    std::size_t failures = 0;
    std::vector<std::string> failure_messages;

    const EstimatorMetrics &operator[](Estimator e) const { return estimators[static_cast<std::size_t>(e)]; }
};

/// Folds replicate records in rep order. Failed replicates are counted, not used.
SimMetrics aggregate(const std::vector<ReplicateRecord> &records);

struct MonteCarloResult {
    SimMetrics metrics;
    std::vector<ReplicateRecord> records;
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

/// Runs scn.reps replicates on `threads` workers and aggregates them. The result
/// does not depend on the thread count. Throws Error when more than 1% of the
/// replicates fail.
MonteCarloResult run_monte_carlo(const SimScenario &scn, unsigned threads = 1, const ProgressFn &progress = {});

} // namespace kwnr::sim
