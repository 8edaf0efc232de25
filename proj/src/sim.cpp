#include "kwnr/sim.hpp"

#include "kwnr/error.hpp"
#include "kwnr/estimate.hpp"
#include "kwnr/numeric.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

namespace kwnr::sim {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double logistic_mean(const Coefficients &beta, double x) { return expit(beta[0] + beta[1] * x); }

} // namespace

void SimScenario::validate() const {
    if (cohort_size == 0 || reference_size == 0) {
        throw ConfigError("cohort_size and reference_size must be positive");
    }
    if (cohort_size + reference_size > population_size) {
        throw ConfigError("cohort_size + reference_size must not exceed population_size");
    }
    if (reps < 1) {
        throw ConfigError("reps must be at least 1");
    }
    for (double b : {beta_y[0], beta_y[1], beta_r[0], beta_r[1], beta_c[0], beta_c[1]}) {
        if (!std::isfinite(b)) {
            throw ConfigError("scenario coefficients must be finite");
        }
    }
    nr.validate();
}

std::uint64_t stream_seed(std::uint64_t master_seed, std::uint64_t rep_index, Stream stream) noexcept {
    std::uint64_t h = splitmix64(master_seed);
    h = splitmix64(h ^ rep_index);
    return splitmix64(h ^ static_cast<std::uint64_t>(stream));
}

double Population::mean_outcome() const {
    return static_cast<double>(std::accumulate(y.begin(), y.end(), std::size_t{0})) / static_cast<double>(size());
}

double Population::response_rate() const {
    return static_cast<double>(std::accumulate(respond.begin(), respond.end(), std::size_t{0})) /
           static_cast<double>(size());
}

Population generate_population(const SimScenario &scn, std::uint64_t seed) {
    Engine rng{seed};
    std::normal_distribution<double> normal{0.0, 1.0};
    std::uniform_real_distribution<double> unif{0.0, 1.0};
    Population pop;
    const std::size_t n = scn.population_size;
    pop.x.resize(n);
    pop.y.resize(n);
    pop.respond.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double x = normal(rng);
        pop.x[k] = x;
        pop.y[k] = unif(rng) < logistic_mean(scn.beta_y, x) ? 1 : 0;
        pop.respond[k] = unif(rng) < logistic_mean(scn.beta_r, x) ? 1 : 0;
    }
    return pop;
}

std::vector<double> pps_inclusion_probabilities(std::span<const double> mos, std::size_t n, PpsOverflow overflow,
                                                std::size_t *certainty_count) {
    const std::size_t big_n = mos.size();
    if (n > big_n) {
        throw Error("PPS sample size exceeds the population size");
    }
    std::vector<double> pi(big_n, 0.0);
    std::vector<std::uint8_t> certain(big_n, 0);
    std::size_t n_certain = 0;
    if (overflow == PpsOverflow::Allow) {
        CompensatedSum total;
        for (double m : mos) {
            total.add(m);
        }
        for (std::size_t k = 0; k < big_n; ++k) {
            pi[k] = static_cast<double>(n) * mos[k] / total.value();
            n_certain += pi[k] >= 1.0 ? 1 : 0;
        }
        if (certainty_count) {
            *certainty_count = n_certain;
        }
        return pi;
    }
    while (true) {
        CompensatedSum total;
        for (std::size_t k = 0; k < big_n; ++k) {
            if (!certain[k]) {
                total.add(mos[k]);
            }
        }
        const double remaining = static_cast<double>(n - n_certain);
        bool changed = false;
        double max_pi = 0.0;
        for (std::size_t k = 0; k < big_n; ++k) {
            if (certain[k]) {
                continue;
            }
            pi[k] = remaining * mos[k] / total.value();
            max_pi = std::max(max_pi, pi[k]);
            if (pi[k] >= 1.0) {
                if (overflow == PpsOverflow::Error) {
                    throw Error("PPS inclusion probability n_c * mos_k / sum(mos) = " + std::to_string(max_pi) +
                                " exceeds 1; the constraint pi_k <= 1 is violated (lower beta_c1 or n_c, or "
                                "allow certainty units)");
                }
                certain[k] = 1;
                pi[k] = 1.0;
                ++n_certain;
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
        if (n_certain >= n) {
            // Every draw is a certainty unit; the remaining units cannot be reached.
            for (std::size_t k = 0; k < big_n; ++k) {
                if (!certain[k]) {
                    pi[k] = 0.0;
                }
            }
            break;
        }
    }
    if (certainty_count) {
        *certainty_count = n_certain;
    }
    return pi;
}

PpsDraw draw_pps_cohort(const Population &pop, std::size_t n_c, const Coefficients &beta_c, std::uint64_t seed,
                        PpsMethod method, PpsOverflow overflow) {
    const std::size_t big_n = pop.size();
    std::vector<double> mos(big_n);
    for (std::size_t k = 0; k < big_n; ++k) {
        mos[k] = std::exp(beta_c[0] + beta_c[1] * pop.x[k]);
        if (!std::isfinite(mos[k])) {
            throw Error("measure of size overflows for unit " + std::to_string(k));
        }
    }
    if (method == PpsMethod::Systematic && overflow == PpsOverflow::Allow) {
        throw Error("systematic PPS needs pi_k <= 1: use certainty or error overflow handling");
    }
    std::size_t certainty = 0;
    const auto pi = pps_inclusion_probabilities(mos, n_c, overflow, &certainty);

    Engine rng{seed};
    std::vector<std::size_t> units;
    units.reserve(n_c);
    if (method == PpsMethod::Systematic) {
        std::vector<std::size_t> order(big_n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        std::uniform_real_distribution<double> unif{0.0, 1.0};
        double next = unif(rng);
        double cumulative = 0.0;
        for (std::size_t k : order) {
            cumulative += pi[k];
            if (next < cumulative && units.size() < n_c) {
                units.push_back(k);
                next += 1.0;
            }
        }
        if (units.size() != n_c) {
            throw Error("systematic PPS drew " + std::to_string(units.size()) + " units instead of " +
                        std::to_string(n_c));
        }
    } else {
        // Exponential-key form of successive sampling: the n_c smallest
        // E_k / size_k, E_k ~ Exp(1), are the units a sequential draw would pick.
        // Certainty units are forced in first.
        std::exponential_distribution<double> expo{1.0};
        std::vector<std::pair<double, std::size_t>> keys(big_n);
        for (std::size_t k = 0; k < big_n; ++k) {
            const double key = expo(rng) / mos[k];
            keys[k] = {overflow == PpsOverflow::Certainty && pi[k] >= 1.0 ? -1.0 : key, k};
        }
        std::nth_element(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(n_c), keys.end());
        for (std::size_t i = 0; i < n_c; ++i) {
            units.push_back(keys[i].second);
        }
    }
    std::sort(units.begin(), units.end());

    CohortColumns cols;
    const auto n = static_cast<Eigen::Index>(n_c);
    cols.x.resize(n, 1);
    cols.respond.resize(n_c);
    cols.outcome.resize(n_c);
    std::vector<double> true_w(n_c);
    for (std::size_t i = 0; i < n_c; ++i) {
        const std::size_t k = units[i];
        cols.x(static_cast<Eigen::Index>(i), 0) = pop.x[k];
        cols.respond[i] = pop.respond[k];
        cols.outcome[i] = pop.y[k];
        true_w[i] = 1.0 / pi[k];
    }
    cols.z = cols.x;
    cols.x_names = {"x"};
    cols.z_names = {"x"};
    return PpsDraw{CohortSample{std::move(cols)}, WeightSet{std::move(true_w), WeightProvenance::TrueDesign},
                   std::move(units), certainty};
}

ReferenceSample draw_srs_reference(const Population &pop, std::size_t n_s, std::uint64_t seed) {
    const std::size_t big_n = pop.size();
    if (n_s == 0 || n_s > big_n) {
        throw Error("reference sample size must lie in [1, N]");
    }
    Engine rng{seed};
    std::vector<std::size_t> all(big_n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::size_t> chosen;
    chosen.reserve(n_s);
    std::sample(all.begin(), all.end(), std::back_inserter(chosen), n_s, rng);

    Eigen::MatrixXd x(static_cast<Eigen::Index>(n_s), 1);
    for (std::size_t i = 0; i < n_s; ++i) {
        x(static_cast<Eigen::Index>(i), 0) = pop.x[chosen[i]];
    }
    const double d = static_cast<double>(big_n) / static_cast<double>(n_s);
    return ReferenceSample{std::move(x), std::vector<double>(n_s, d), {"x"}};
}

const char *estimator_name(Estimator e) noexcept {
    switch (e) {
    case Estimator::TrueWeightedC:
        return "true_weighted_C";
    case Estimator::UnweightedC:
        return "unweighted_C";
    case Estimator::KwC:
        return "kw_C";
    case Estimator::UnweightedR:
        return "unweighted_R";
    case Estimator::KwR:
        return "kw_R";
    case Estimator::KwnrR:
        return "kwnr_R";
    }
    return "unknown";
}

const char *estimator_label(Estimator e) noexcept {
    switch (e) {
    case Estimator::TrueWeightedC:
        return "true-weighted (cohort)";
    case Estimator::UnweightedC:
        return "unweighted (cohort)";
    case Estimator::KwC:
        return "kw-weighted (cohort)";
    case Estimator::UnweightedR:
        return "unweighted (respondents)";
    case Estimator::KwR:
        return "kw-weighted (respondents)";
    case Estimator::KwnrR:
        return "kwNR-weighted (respondents)";
    }
    return "unknown";
}

ReplicateRecord run_replicate(const SimScenario &scn, std::size_t rep_index) {
    ReplicateRecord rec;
    rec.rep = rep_index;
    try {
        const std::uint64_t pop_rep = scn.fixed_population ? 0 : rep_index;
        const Population pop =
            generate_population(scn, stream_seed(scn.master_seed, pop_rep, Stream::Population));
        rec.truth = pop.mean_outcome();
        rec.population_response_rate = pop.response_rate();

        auto draw = draw_pps_cohort(pop, scn.cohort_size, scn.beta_c,
                                    stream_seed(scn.master_seed, rep_index, Stream::Cohort), scn.pps_method,
                                    scn.pps_overflow);
        const auto reference =
            draw_srs_reference(pop, scn.reference_size, stream_seed(scn.master_seed, rep_index, Stream::Reference));
        const CohortSample &cohort = draw.cohort;
        rec.certainty_units = draw.certainty_units;

        const auto kwres = kw_from_samples(cohort, reference, scn.kernel, scn.design);
        rec.bandwidth = kwres.bandwidth;
        const WeightSet &kw = kwres.weights;

        const auto rfit = fit_response_model(cohort, kw, scn.nr, scn.design);
        const auto kwnr = kwnr_weights(kw, rfit, cohort);
        rec.floored = rfit.floored_count;
        rec.respondents = cohort.respondents();

        const auto y = cohort.outcome();
        const auto respond = cohort.respond();
        const std::vector<double> unit(cohort.size(), 1.0);
        auto at = [&rec](Estimator e) -> double & { return rec.estimates[static_cast<std::size_t>(e)]; };
        at(Estimator::TrueWeightedC) = mean_weighted(y, draw.true_weights.values(), {});
        at(Estimator::UnweightedC) = mean_weighted(y, unit, {});
        at(Estimator::KwC) = mean_weighted(y, kw.values(), {});
        at(Estimator::UnweightedR) = mean_weighted(y, unit, respond);
        at(Estimator::KwR) = mean_weighted(y, kw.values(), respond);

        const auto report = estimate_report(cohort, kw, rfit);
        at(Estimator::KwnrR) = report.estimate;
        if (!report.variance) {
            throw Error("kwNR variance undefined: " + report.note);
        }
        rec.var_tl = report.variance->total;
        rec.var1 = report.variance->var1;
        rec.var2 = report.variance->var2;
        rec.cv_true = draw.true_weights.cv();
        rec.cv_kw = kw.cv();
        rec.cv_kwnr = kwnr.cv();
        rec.ok = true;
    } catch (const kwnr::Error &e) {
        rec.ok = false;
        rec.error = e.what();
    }
    return rec;
}

SimMetrics aggregate(const std::vector<ReplicateRecord> &records) {
    SimMetrics m;
    std::vector<const ReplicateRecord *> ok;
    for (const auto &rec : records) {
        if (rec.ok) {
            ok.push_back(&rec);
        } else {
            ++m.failures;
            if (m.failure_messages.size() < 10) {
                m.failure_messages.push_back("rep " + std::to_string(rec.rep) + ": " + rec.error);
            }
        }
    }
    m.reps = ok.size();
    if (ok.size() < 2) {
        return m;
    }
    const double count = static_cast<double>(ok.size());
    auto mean_of = [&](auto field) {
        CompensatedSum acc;
        for (const auto *rec : ok) {
            acc.add(field(*rec));
        }
        return acc.value() / count;
    };
    m.mean_truth = mean_of([](const ReplicateRecord &r) { return r.truth; });
    m.mean_response_rate = mean_of([](const ReplicateRecord &r) { return r.population_response_rate; });
    m.mean_cv_true = mean_of([](const ReplicateRecord &r) { return r.cv_true; });
    m.mean_cv_kw = mean_of([](const ReplicateRecord &r) { return r.cv_kw; });
    m.mean_cv_kwnr = mean_of([](const ReplicateRecord &r) { return r.cv_kwnr; });
    m.mean_var_tl = mean_of([](const ReplicateRecord &r) { return r.var_tl; });
    m.mean_var1 = mean_of([](const ReplicateRecord &r) { return r.var1; });
    m.mean_var2 = mean_of([](const ReplicateRecord &r) { return r.var2; });

    for (std::size_t e = 0; e < kEstimatorCount; ++e) {
        auto &em = m.estimators[e];
        em.mean_estimate = mean_of([e](const ReplicateRecord &r) { return r.estimates[e]; });
        em.bias = mean_of([e](const ReplicateRecord &r) { return r.estimates[e] - r.truth; });
        em.rb_pct = em.bias / m.mean_truth * 100.0;
        CompensatedSum ss;
        for (const auto *rec : ok) {
            const double dev = rec->estimates[e] - rec->truth - em.bias;
            ss.add(dev * dev);
        }
        em.emp_var = ss.value() / (count - 1.0);
        em.mse = em.bias * em.bias + em.emp_var;
    }
    const auto &kwnr = m.estimators[static_cast<std::size_t>(Estimator::KwnrR)];
    m.vr = kwnr.emp_var > 0.0 ? m.mean_var_tl / kwnr.emp_var : 0.0;
    return m;
}

MonteCarloResult run_monte_carlo(const SimScenario &scn, unsigned threads, const ProgressFn &progress) {
    scn.validate();
    if (scn.reps < 2) {
        throw ConfigError("Monte Carlo needs at least two replicates");
    }
    MonteCarloResult result;
    result.records.resize(scn.reps);
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::mutex progress_mutex;

    auto worker = [&] {
        while (true) {
            const std::size_t rep = next.fetch_add(1);
            if (rep >= scn.reps) {
                return;
            }
            result.records[rep] = run_replicate(scn, rep);
            const std::size_t finished = done.fetch_add(1) + 1;
            if (progress) {
                std::lock_guard lock{progress_mutex};
                progress(finished, scn.reps);
            }
        }
    };
    const unsigned n_workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(scn.reps)));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(n_workers);
        for (unsigned t = 0; t < n_workers; ++t) {
            pool.emplace_back(worker);
        }
    }

    result.metrics = aggregate(result.records);
    const double failure_rate = static_cast<double>(result.metrics.failures) / static_cast<double>(scn.reps);
    if (failure_rate > 0.01) {
        std::string message = "replicate failure rate " + std::to_string(failure_rate * 100.0) +
                              "% exceeds 1%; first failures:";
        for (const auto &msg : result.metrics.failure_messages) {
            message += "\n  " + msg;
        }
        throw Error(message);
    }
    return result;
}

} // namespace kwnr::sim
