#include "kwnr/data.hpp"

#include "kwnr/error.hpp"
#include "kwnr/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_set>

namespace kwnr {

namespace {

std::vector<std::string> default_names(std::vector<std::string> names, Eigen::Index count,
                                       const std::string &prefix) {
    if (names.empty()) {
        for (Eigen::Index k = 0; k < count; ++k) {
            names.push_back(prefix + std::to_string(k + 1));
        }
    }
    if (static_cast<Eigen::Index>(names.size()) != count) {
        throw DataError("number of " + prefix + " names does not match column count");
    }
    return names;
}

void require_finite(const Eigen::MatrixXd &m, const std::vector<std::string> &names) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index k = 0; k < m.cols(); ++k) {
            if (!std::isfinite(m(i, k))) {
                throw DataError("nonfinite covariate", static_cast<std::size_t>(i) + 1,
                                names[static_cast<std::size_t>(k)]);
            }
        }
    }
}

double cell_number(const csv::Table &table, std::size_t row, std::size_t col) {
    const auto value = csv::parse_number(table.rows[row][col]);
    if (!value || !std::isfinite(*value)) {
        throw DataError("nonnumeric cell '" + table.rows[row][col] + "'", row + 1, table.header[col]);
    }
    return *value;
}

Eigen::MatrixXd numeric_block(const csv::Table &table, const std::vector<std::string> &columns) {
    std::vector<std::size_t> idx;
    idx.reserve(columns.size());
    for (const auto &name : columns) {
        idx.push_back(table.require(name));
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        for (std::size_t k = 0; k < idx.size(); ++k) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = cell_number(table, r, idx[k]);
        }
    }
    return m;
}

std::ofstream open_out(const std::filesystem::path &path) {
    std::ofstream out{path, std::ios::binary};
    if (!out) {
        throw DataError("cannot write file '" + path.string() + "'");
    }
    return out;
}

} // namespace

ReferenceSample::ReferenceSample(Eigen::MatrixXd covariates, std::vector<double> design_weights,
                                 std::vector<std::string> covariate_names)
    : x_{std::move(covariates)}, weights_{std::move(design_weights)},
      names_{default_names(std::move(covariate_names), x_.cols(), "x")} {
    if (static_cast<std::size_t>(x_.rows()) != weights_.size()) {
        throw DataError("covariate rows and design weights differ in length");
    }
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        if (!std::isfinite(weights_[i]) || weights_[i] <= 0.0) {
            throw DataError("design weight must be positive and finite", i + 1, "weight");
        }
    }
    require_finite(x_, names_);
}

double ReferenceSample::total_weight() const { return compensated_sum(weights_); }

CohortSample::CohortSample(CohortColumns columns) : cols_{std::move(columns)} {
    const std::size_t n = cols_.respond.size();
    cols_.x_names = default_names(std::move(cols_.x_names), cols_.x.cols(), "x");
    cols_.z_names = default_names(std::move(cols_.z_names), cols_.z.cols(), "z");
    if (static_cast<std::size_t>(cols_.x.rows()) != n || static_cast<std::size_t>(cols_.z.rows()) != n) {
        throw DataError("x and z covariate rows must match the number of units");
    }
    if (cols_.outcome.empty()) {
        cols_.outcome.assign(n, std::numeric_limits<double>::quiet_NaN());
    }
    if (cols_.outcome.size() != n) {
        throw DataError("outcome column length does not match the number of units");
    }
    if (!cols_.subgroup.empty() && cols_.subgroup.size() != n) {
        throw DataError("subgroup column length does not match the number of units");
    }
    require_finite(cols_.x, cols_.x_names);
    require_finite(cols_.z, cols_.z_names);
    for (std::size_t i = 0; i < n; ++i) {
        if (cols_.respond[i] > 1) {
            throw DataError("respond must be 0 or 1", i + 1, "respond");
        }
        if (cols_.respond[i] == 1) {
            ++n_resp_;
            if (!std::isfinite(cols_.outcome[i])) {
                throw DataError("respondent is missing its outcome", i + 1, "outcome");
            }
        }
    }
}

bool CohortSample::has_outcome(std::size_t i) const { return std::isfinite(cols_.outcome[i]); }

std::vector<std::string> CohortSample::subgroup_levels() const {
    std::vector<std::string> levels;
    std::unordered_set<std::string> seen;
    for (const auto &label : cols_.subgroup) {
        if (!label.empty() && seen.insert(label).second) {
            levels.push_back(label);
        }
    }
    return levels;
}

std::vector<std::uint8_t> CohortSample::subgroup_mask(const std::string &label) const {
    std::vector<std::uint8_t> mask(size(), 0);
    for (std::size_t i = 0; i < cols_.subgroup.size(); ++i) {
        mask[i] = cols_.subgroup[i] == label ? 1 : 0;
    }
    return mask;
}

const char *to_string(WeightProvenance provenance) noexcept {
    switch (provenance) {
    case WeightProvenance::TrueDesign:
        return "true";
    case WeightProvenance::KW:
        return "kw";
    case WeightProvenance::KWNR:
        return "kwnr";
    case WeightProvenance::Unit:
        return "unit";
    }
    return "unknown";
}

WeightSet::WeightSet(std::vector<double> values, WeightProvenance provenance)
    : values_{std::move(values)}, provenance_{provenance} {
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i]) || values_[i] < 0.0) {
            throw DataError("weights must be finite and nonnegative", i + 1);
        }
    }
}

double WeightSet::sum() const { return compensated_sum(values_); }

double WeightSet::cv() const { return weight_cv(values_); }

double weight_cv(std::span<const double> values) {
    CompensatedSum total;
    std::size_t count = 0;
    for (double v : values) {
        if (v != 0.0) {
            total.add(v);
            ++count;
        }
    }
    if (count < 2) {
        return 0.0;
    }
    const double mean = total.value() / static_cast<double>(count);
    CompensatedSum ss;
    for (double v : values) {
        if (v != 0.0) {
            ss.add((v - mean) * (v - mean));
        }
    }
    return std::sqrt(ss.value() / static_cast<double>(count - 1)) / mean;
}

ReferenceSample reference_from_table(const csv::Table &table, const ReferenceSchema &schema) {
    if (schema.weight.empty() || schema.covariates.empty()) {
        throw DataError("reference schema needs a weight column and at least one covariate");
    }
    const std::size_t wcol = table.require(schema.weight);
    Eigen::MatrixXd x = numeric_block(table, schema.covariates);
    std::vector<double> d(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        d[r] = cell_number(table, r, wcol);
        if (d[r] <= 0.0) {
            throw DataError("design weight must be positive", r + 1, schema.weight);
        }
    }
    return ReferenceSample{std::move(x), std::move(d), schema.covariates};
}

CohortSample cohort_from_table(const csv::Table &table, const CohortSchema &schema) {
    if (schema.respond.empty() || schema.x.empty()) {
        throw DataError("cohort schema needs a respond column and at least one x covariate");
    }
    const auto &z_cols = schema.z.empty() ? schema.x : schema.z;
    CohortColumns cols;
    cols.x = numeric_block(table, schema.x);
    cols.z = numeric_block(table, z_cols);
    cols.x_names = schema.x;
    cols.z_names = z_cols;
    const std::size_t n = table.rows.size();
    const std::size_t rcol = table.require(schema.respond);
    const std::optional<std::size_t> ycol =
        schema.outcome ? std::optional{table.require(*schema.outcome)} : std::nullopt;
    const std::optional<std::size_t> gcol =
        schema.subgroup ? std::optional{table.require(*schema.subgroup)} : std::nullopt;
    cols.respond.resize(n);
    cols.outcome.assign(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t r = 0; r < n; ++r) {
        const double flag = cell_number(table, r, rcol);
        if (flag != 0.0 && flag != 1.0) {
            throw DataError("respond value must be 0 or 1", r + 1, schema.respond);
        }
        cols.respond[r] = flag == 1.0 ? 1 : 0;
        if (ycol) {
            const auto &cell = table.rows[r][*ycol];
            if (!cell.empty()) {
                cols.outcome[r] = cell_number(table, r, *ycol);
            }
        }
        if (cols.respond[r] == 1 && !std::isfinite(cols.outcome[r])) {
            throw DataError("respondent is missing its outcome", r + 1,
                            schema.outcome.value_or("<no outcome column>"));
        }
        if (gcol) {
            cols.subgroup.push_back(table.rows[r][*gcol]);
        }
    }
    return CohortSample{std::move(cols)};
}

ReferenceSample load_reference_csv(const std::filesystem::path &path, const ReferenceSchema &schema) {
    return reference_from_table(csv::read_file(path), schema);
}

CohortSample load_cohort_csv(const std::filesystem::path &path, const CohortSchema &schema) {
    return cohort_from_table(csv::read_file(path), schema);
}

void write_reference_csv(const std::filesystem::path &path, const ReferenceSample &sample,
                         const std::string &weight_column) {
    auto out = open_out(path);
    auto header = sample.covariate_names();
    header.push_back(weight_column);
    csv::write_row(out, header);
    const auto &x = sample.covariates();
    const auto d = sample.design_weights();
    std::vector<std::string> fields;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        fields.clear();
        for (Eigen::Index k = 0; k < x.cols(); ++k) {
            fields.push_back(csv::format_number(x(static_cast<Eigen::Index>(i), k)));
        }
        fields.push_back(csv::format_number(d[i]));
        csv::write_row(out, fields);
    }
}

void write_cohort_csv(const std::filesystem::path &path, const CohortSample &sample,
                      const std::string &respond_column, const std::string &outcome_column,
                      const std::string &subgroup_column) {
    auto out = open_out(path);
    // x columns first, then z columns whose names are not already written.
    std::vector<std::string> header = sample.x_names();
    std::vector<Eigen::Index> z_extra;
    for (std::size_t k = 0; k < sample.z_names().size(); ++k) {
        const auto &name = sample.z_names()[k];
        if (std::find(header.begin(), header.end(), name) == header.end()) {
            header.push_back(name);
            z_extra.push_back(static_cast<Eigen::Index>(k));
        }
    }
    header.push_back(respond_column);
    header.push_back(outcome_column);
    if (sample.has_subgroups()) {
        header.push_back(subgroup_column);
    }
    csv::write_row(out, header);

    const auto &x = sample.covariates();
    const auto &z = sample.response_covariates();
    std::vector<std::string> fields;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        fields.clear();
        for (Eigen::Index k = 0; k < x.cols(); ++k) {
            fields.push_back(csv::format_number(x(row, k)));
        }
        for (Eigen::Index k : z_extra) {
            fields.push_back(csv::format_number(z(row, k)));
        }
        fields.push_back(sample.responded(i) ? "1" : "0");
        fields.push_back(sample.has_outcome(i) ? csv::format_number(sample.outcome()[i]) : "");
        if (sample.has_subgroups()) {
            fields.push_back(sample.subgroup()[i]);
        }
        csv::write_row(out, fields);
    }
}

} // namespace kwnr
