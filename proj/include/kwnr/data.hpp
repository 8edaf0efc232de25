#pragma once

#include "kwnr/csv.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kwnr {

/// Probability reference sample: covariates and design weights.
class ReferenceSample {
public:
    /// Throws DataError when a weight is nonpositive or nonfinite, or sizes disagree.
    ReferenceSample(Eigen::MatrixXd covariates, std::vector<double> design_weights,
                    std::vector<std::string> covariate_names = {});

    std::size_t size() const noexcept { return weights_.size(); }
    const Eigen::MatrixXd &covariates() const noexcept { return x_; }
    std::span<const double> design_weights() const noexcept { return weights_; }
    const std::vector<std::string> &covariate_names() const noexcept { return names_; }
    double total_weight() const;

private:
    Eigen::MatrixXd x_;
    std::vector<double> weights_;
    std::vector<std::string> names_;
};

/// Column data used to build a CohortSample.
struct CohortColumns {
    Eigen::MatrixXd x;
    Eigen::MatrixXd z;
    std::vector<std::uint8_t> respond;
    /// NaN marks a missing outcome. Required for every respondent.
    std::vector<double> outcome;
    /// Empty, or one label per unit; an empty label means "no subgroup".
    std::vector<std::string> subgroup;
    std::vector<std::string> x_names;
    std::vector<std::string> z_names;
};

/// Nonprobability cohort: baseline covariates, follow-up response and outcome.
///
/// Outcomes of nonrespondents may be present (simulation truth) but the
/// follow-up estimators only ever read outcomes of respondents.
class CohortSample {
public:
    explicit CohortSample(CohortColumns columns);

    std::size_t size() const noexcept { return cols_.respond.size(); }
    std::size_t respondents() const noexcept { return n_resp_; }

    const Eigen::MatrixXd &covariates() const noexcept { return cols_.x; }
    const Eigen::MatrixXd &response_covariates() const noexcept { return cols_.z; }
    std::span<const std::uint8_t> respond() const noexcept { return cols_.respond; }
    bool responded(std::size_t i) const { return cols_.respond[i] != 0; }

    /// Raw outcome column (NaN where missing).
    std::span<const double> outcome() const noexcept { return cols_.outcome; }
    bool has_outcome(std::size_t i) const;

    bool has_subgroups() const noexcept { return !cols_.subgroup.empty(); }
    const std::vector<std::string> &subgroup() const noexcept { return cols_.subgroup; }
    /// Distinct nonempty labels in first-appearance order.
    std::vector<std::string> subgroup_levels() const;
    /// 0/1 membership indicator for one label.
    std::vector<std::uint8_t> subgroup_mask(const std::string &label) const;

    const std::vector<std::string> &x_names() const noexcept { return cols_.x_names; }
    const std::vector<std::string> &z_names() const noexcept { return cols_.z_names; }

private:
    CohortColumns cols_;
    std::size_t n_resp_ = 0;
};

enum class WeightProvenance { TrueDesign, KW, KWNR, Unit };

const char *to_string(WeightProvenance provenance) noexcept;

/// Weights aligned to cohort units. KWNR entries of nonrespondents are 0.
class WeightSet {
public:
    WeightSet(std::vector<double> values, WeightProvenance provenance);

    static WeightSet unit(std::size_t n) { return {std::vector<double>(n, 1.0), WeightProvenance::Unit}; }

    std::size_t size() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    WeightProvenance provenance() const noexcept { return provenance_; }

    double sum() const;
    /// Standard deviation over mean across the nonzero entries (sample sd, n - 1).
    double cv() const;

private:
    std::vector<double> values_;
    WeightProvenance provenance_;
};

/// Coefficient of variation of the nonzero entries of an arbitrary weight vector.
double weight_cv(std::span<const double> values);

struct ReferenceSchema {
    std::string weight;
    std::vector<std::string> covariates;
};

struct CohortSchema {
    std::string respond;
    std::optional<std::string> outcome;
    std::vector<std::string> x;
    /// Defaults to x when empty.
    std::vector<std::string> z;
    std::optional<std::string> subgroup;
};

ReferenceSample reference_from_table(const csv::Table &table, const ReferenceSchema &schema);
CohortSample cohort_from_table(const csv::Table &table, const CohortSchema &schema);

ReferenceSample load_reference_csv(const std::filesystem::path &path, const ReferenceSchema &schema);
CohortSample load_cohort_csv(const std::filesystem::path &path, const CohortSchema &schema);

/// Writers mirror the loaders. The reference file carries the covariate columns
/// followed by `weight_column`; the cohort file carries x and z columns (shared
/// names written once), then respond, outcome and, when present, subgroup.
void write_reference_csv(const std::filesystem::path &path, const ReferenceSample &sample,
                         const std::string &weight_column = "d");
void write_cohort_csv(const std::filesystem::path &path, const CohortSample &sample,
                      const std::string &respond_column = "respond",
                      const std::string &outcome_column = "y",
                      const std::string &subgroup_column = "group");

} // namespace kwnr
