#include "fixtures.hpp"

#include "kwnr/glm.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <unistd.h>

namespace kwnr::testing {

namespace {

double logistic(double t) {
    return 1.0 / (1.0 + std::exp(-t));
}

} // namespace

CohortSample make_cohort(std::size_t n, std::uint64_t seed, const CohortOptions &options) {
    std::mt19937_64 rng{seed};
    std::normal_distribution<double> normal{options.shift, 1.0};
    std::uniform_real_distribution<double> unif{0.0, 1.0};
    CohortColumns cols;
    cols.x.resize(static_cast<Eigen::Index>(n), 1);
    cols.respond.resize(n);
    cols.outcome.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = normal(rng);
        const bool r = unif(rng) < logistic(options.beta_r[0] + options.beta_r[1] * x);
        const double y = unif(rng) < logistic(options.beta_y[0] + options.beta_y[1] * x) ? 1.0 : 0.0;
        cols.x(static_cast<Eigen::Index>(i), 0) = x;
        cols.respond[i] = r ? 1 : 0;
        cols.outcome[i] = (r || options.keep_all_outcomes) ? y : std::numeric_limits<double>::quiet_NaN();
        if (options.subgroups > 0) {
            cols.subgroup.push_back("g" + std::to_string(i % static_cast<std::size_t>(options.subgroups) + 1));
        }
    }
    cols.z = cols.x;
    cols.x_names = {"x"};
    cols.z_names = {"x"};
    return CohortSample{std::move(cols)};
}

ReferenceSample make_reference(std::size_t n, std::uint64_t seed, double design_weight) {
    std::mt19937_64 rng{seed};
    std::normal_distribution<double> normal{0.0, 1.0};
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        x(i, 0) = normal(rng);
    }
    return ReferenceSample{std::move(x), std::vector<double>(n, design_weight), {"x"}};
}

CohortSample cohort_from(const std::vector<double> &x, const std::vector<std::uint8_t> &respond,
                         const std::vector<double> &y, const std::vector<std::string> &subgroup) {
    CohortColumns cols;
    cols.x = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    cols.z = cols.x;
    cols.respond = respond;
    cols.outcome = y;
    cols.subgroup = subgroup;
    cols.x_names = {"x"};
    cols.z_names = {"x"};
    return CohortSample{std::move(cols)};
}

Pipeline run_pipeline(const CohortSample &cohort, const ReferenceSample &reference, const KernelSpec &kernel,
                      const NrConfig &nr) {
    auto kw = kw_from_samples(cohort, reference, kernel);
    auto rfit = fit_response_model(cohort, kw.weights, nr);
    auto kwnr = kwnr_weights(kw.weights, rfit, cohort);
    return Pipeline{std::move(kw), std::move(rfit), std::move(kwnr)};
}

WeightSet scaled(const WeightSet &w, double c) {
    std::vector<double> v(w.values().begin(), w.values().end());
    for (double &x : v) {
        x *= c;
    }
    return WeightSet{std::move(v), w.provenance()};
}

std::filesystem::path fresh_dir(const std::string &tag) {
    static std::atomic<int> counter{0};
    auto dir = std::filesystem::temp_directory_path() /
               ("kwnr_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

void write_text(const std::filesystem::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

double max_rel_diff(const std::vector<double> &a, const std::vector<double> &b, double floor) {
    if (a.size() != b.size()) {
        return std::numeric_limits<double>::infinity();
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

} // namespace kwnr::testing
