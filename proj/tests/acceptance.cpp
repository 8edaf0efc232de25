// Full-size Monte Carlo check of the estimators against reference results.
// Prints one PASS/FAIL line per criterion. KWNR_ACCEPTANCE_REPS sets a smaller
// replicate count for a quick run (bias tolerance widens to 3.0). --report FILE
// keeps a copy of the output.

#include "invariants.hpp"

#include "kwnr/sim.hpp"

#include <array>
#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <thread>
#include <vector>

using namespace kwnr;
using namespace kwnr::sim;

namespace {

std::FILE *g_report = nullptr;

void say(const char *format, ...) {
    va_list args;
    va_start(args, format);
    if (g_report != nullptr) {
        va_list copy;
        va_copy(copy, args);
        std::vfprintf(g_report, format, copy);
        va_end(copy);
    }
    std::vprintf(format, args);
    va_end(args);
    std::fflush(stdout);
}

struct Cell {
    const char *name;
    Coefficients beta_c;
    Coefficients beta_y;
    Coefficients beta_r;
};

constexpr std::array<Cell, 4> kCells{{
    {"primary, beta_c1=0.5", {-1.0, 0.5}, {-0.5, 0.5}, {0.2, 0.5}},
    {"primary, beta_c1=1.5", {-1.0, 1.5}, {-0.5, 0.5}, {0.2, 0.5}},
    {"secondary, beta_c1=0.5", {-1.0, 0.5}, {2.0, 0.5}, {1.0, 0.5}},
    {"secondary, beta_c1=1.5", {-1.0, 1.5}, {2.0, 0.5}, {1.0, 0.5}},
}};

// Relative bias (x100) per estimator, in Estimator order.
constexpr std::array<std::array<double, kEstimatorCount>, 2> kRbTarget{{
    {-0.34, 14.66, 0.26, 20.27, 6.33, 0.18},
    {-1.00, 40.44, 0.77, 44.11, 6.59, 0.72},
}};
// kwNR empirical variance and MSE (x1e4).
constexpr std::array<double, 2> kEmpVarTarget{0.75, 4.84};
constexpr std::array<double, 2> kMseTarget{0.76, 4.91};
constexpr std::array<std::array<double, 2>, 2> kVrBand{{{0.93, 1.15}, {1.00, 1.35}}};
constexpr std::array<double, 2> kCvKwnrTarget{0.87, 3.78};
constexpr std::array<double, 2> kSecondaryVrTarget{1.04, 1.06};
constexpr double kSecondaryOutcome = 0.88;
constexpr double kSecondaryResponse = 0.73;

struct Verdict {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string &what) {
        if (!ok) {
            pass = false;
            if (!detail.empty()) {
                detail += "; ";
            }
            detail += what;
        }
    }
};

std::string fmt(const char *f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::size_t reps_from_env() {
    const char *v = std::getenv("KWNR_ACCEPTANCE_REPS");
    if (v == nullptr || *v == '\0') {
        return 2000;
    }
    return static_cast<std::size_t>(std::strtoull(v, nullptr, 10));
}

void report(int id, const char *title, const Verdict &v, int &failures) {
    say("%s criterion %d: %s%s%s\n", v.pass ? "PASS" : "FAIL", id, title, v.detail.empty() ? "" : " -- ",
                v.detail.c_str());
    failures += v.pass ? 0 : 1;
}

} // namespace

int main(int argc, char **argv) {
    bool strict = false;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--strict") == 0) {
            strict = true;
        } else if (std::strcmp(argv[i], "--report") == 0 && i + 1 < argc) {
            g_report = std::fopen(argv[++i], "w");
            if (g_report == nullptr) {
                std::fprintf(stderr, "cannot open report file %s\n", argv[i]);
                return 1;
            }
        } else {
            std::fprintf(stderr, "usage: kwnr_acceptance [--strict] [--report FILE]\n");
            return 1;
        }
    }
    const std::size_t reps = reps_from_env();
    const unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    const double rb_tol = reps >= 2000 ? 1.5 : 3.0;
    say("acceptance: %zu replicates per cell, %u threads, bias tolerance %.1f\n", reps, threads, rb_tol);

    std::vector<SimMetrics> metrics;
    for (const auto &cell : kCells) {
        SimScenario scn;
        scn.beta_c = cell.beta_c;
        scn.beta_y = cell.beta_y;
        scn.beta_r = cell.beta_r;
        scn.reps = reps;
        const auto start = std::chrono::steady_clock::now();
        try {
            metrics.push_back(run_monte_carlo(scn, threads).metrics);
        } catch (const std::exception &e) {
            say("FAIL %s: %s\n", cell.name, e.what());
            return 1;
        }
        const auto &m = metrics.back();
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        say("\n[%s] %zu reps, %zu failures, %.0f s\n", cell.name, m.reps, m.failures, secs);
        say("  mean outcome %.4f  response rate %.4f  CV true/kw/kwNR %.3f/%.3f/%.3f\n", m.mean_truth,
                    m.mean_response_rate, m.mean_cv_true, m.mean_cv_kw, m.mean_cv_kwnr);
        say("  VR %.3f  (var1 %.3e, var2 %.3e, emp var %.3e)\n", m.vr, m.mean_var1, m.mean_var2,
                    m[Estimator::KwnrR].emp_var);
        say("  %-14s %10s %14s %12s\n", "estimator", "RB x100", "empVar x1e4", "MSE x1e4");
        for (auto e : kEstimators) {
            const auto &em = m[e];
            say("  %-14s %10.3f %14.4f %12.4f\n", estimator_name(e), em.rb_pct, em.emp_var * 1e4,
                        em.mse * 1e4);
        }
    }
    say("\n");

    int failures = 0;

    Verdict c1;
    for (std::size_t c = 0; c < 2; ++c) {
        for (auto e : kEstimators) {
            const double got = metrics[c][e].rb_pct;
            const double want = kRbTarget[c][static_cast<std::size_t>(e)];
            c1.require(std::abs(got - want) <= rb_tol, std::string(kCells[c].name) + " " + estimator_name(e) +
                                                           " RB " + fmt("%.3f", got) + " vs " + fmt("%.2f", want));
        }
    }
    report(1, "relative bias of all six estimators", c1, failures);

    Verdict c2;
    for (std::size_t c = 0; c < 2; ++c) {
        const auto &k = metrics[c][Estimator::KwnrR];
        const double v = k.emp_var * 1e4;
        const double mse = k.mse * 1e4;
        c2.require(std::abs(v / kEmpVarTarget[c] - 1.0) <= 0.30,
                   std::string(kCells[c].name) + " empVar " + fmt("%.3f", v) + " vs " + fmt("%.2f", kEmpVarTarget[c]));
        c2.require(std::abs(mse / kMseTarget[c] - 1.0) <= 0.30,
                   std::string(kCells[c].name) + " MSE " + fmt("%.3f", mse) + " vs " + fmt("%.2f", kMseTarget[c]));
    }
    report(2, "kwNR empirical variance and MSE", c2, failures);

    Verdict c3;
    for (std::size_t c = 0; c < 2; ++c) {
        const auto &m = metrics[c];
        c3.require(m.vr >= kVrBand[c][0] && m.vr <= kVrBand[c][1],
                   std::string(kCells[c].name) + " VR " + fmt("%.3f", m.vr) + " outside [" +
                       fmt("%.2f", kVrBand[c][0]) + ", " + fmt("%.2f", kVrBand[c][1]) + "]");
        c3.require(std::abs(m.mean_cv_kwnr / kCvKwnrTarget[c] - 1.0) <= 0.15,
                   std::string(kCells[c].name) + " CV(kwNR) " + fmt("%.3f", m.mean_cv_kwnr) + " vs " +
                       fmt("%.2f", kCvKwnrTarget[c]));
    }
    report(3, "variance ratio and kwNR weight CV", c3, failures);

    Verdict c4;
    for (std::size_t c = 2; c < 4; ++c) {
        const auto &m = metrics[c];
        c4.require(std::abs(m.mean_truth - kSecondaryOutcome) <= 0.01,
                   std::string(kCells[c].name) + " mean outcome " + fmt("%.4f", m.mean_truth));
        c4.require(std::abs(m.mean_response_rate - kSecondaryResponse) <= 0.01,
                   std::string(kCells[c].name) + " response rate " + fmt("%.4f", m.mean_response_rate));
        c4.require(std::abs(m.vr - kSecondaryVrTarget[c - 2]) <= 0.15,
                   std::string(kCells[c].name) + " VR " + fmt("%.3f", m.vr) + " vs " +
                       fmt("%.2f", kSecondaryVrTarget[c - 2]));
    }
    report(4, "secondary scenario rates and variance ratio", c4, failures);

    Verdict c5;
    for (std::size_t c = 0; c < 4; ++c) {
        const auto &m = metrics[c];
        const double a = m[Estimator::KwnrR].mse;
        const double b = m[Estimator::KwR].mse;
        const double u = m[Estimator::UnweightedR].mse;
        c5.require(a < b && b < u, std::string(kCells[c].name) + " MSE order " + fmt("%.3e", a) + ", " +
                                       fmt("%.3e", b) + ", " + fmt("%.3e", u));
    }
    report(5, "MSE(kwNR) < MSE(KW respondents) < MSE(unweighted respondents)", c5, failures);

    Verdict c6;
    for (const auto &check : kwnr::testing::run_invariant_suite()) {
        say("  invariant %-66s %s  %s\n", check.name.c_str(), check.pass ? "ok" : "FAILED",
                    check.detail.c_str());
        c6.require(check.pass, check.name);
    }
    report(6, "invariant suite", c6, failures);

    say("\n%d of 6 criteria failed\n", failures);
    if (g_report != nullptr) {
        std::fclose(g_report);
    }
    return strict && failures > 0 ? 1 : 0;
}
