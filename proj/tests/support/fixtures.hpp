#pragma once

#include "kwnr/data.hpp"
#include "kwnr/kw.hpp"
#include "kwnr/nr.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace kwnr::testing {

struct CohortOptions {
    std::array<double, 2> beta_r{0.2, 0.5};
    std::array<double, 2> beta_y{-0.5, 0.5};
    /// Mean of x in the cohort; the reference sample is centered at 0.
    double shift = 0.5;
    /// Number of subgroup labels g1..gk assigned round-robin; 0 for none.
    int subgroups = 0;
    /// Keep outcomes of nonrespondents (simulation truth).
    bool keep_all_outcomes = false;
};

CohortSample make_cohort(std::size_t n, std::uint64_t seed, const CohortOptions &options = {});
ReferenceSample make_reference(std::size_t n, std::uint64_t seed, double design_weight = 100.0);

/// Cohort with explicit columns (one covariate x, z = x).
CohortSample cohort_from(const std::vector<double> &x, const std::vector<std::uint8_t> &respond,
                         const std::vector<double> &y, const std::vector<std::string> &subgroup = {});

struct Pipeline {
    KwResult kw;
    ResponseFit rfit;
    WeightSet kwnr;
};

Pipeline run_pipeline(const CohortSample &cohort, const ReferenceSample &reference, const KernelSpec &kernel = {},
                      const NrConfig &nr = {});

/// Copy of `w` with every entry multiplied by c.
WeightSet scaled(const WeightSet &w, double c);

/// Fresh empty directory under the system temp dir.
std::filesystem::path fresh_dir(const std::string &tag);

void write_text(const std::filesystem::path &path, const std::string &text);

double max_rel_diff(const std::vector<double> &a, const std::vector<double> &b, double floor = 1e-300);

} // namespace kwnr::testing
