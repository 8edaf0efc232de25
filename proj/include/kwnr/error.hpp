#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace kwnr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input data. Carries the 1-based data row (0 when not row-specific)
/// and the offending column name (empty when not column-specific).
class DataError : public Error {
public:
    DataError(const std::string &message, std::size_t row = 0, std::string column = {});

    std::size_t row() const noexcept { return row_; }
    const std::string &column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

/// Logistic fitting failed: non-convergence, separation or a singular information matrix.
class FitError : public Error {
public:
    enum class Kind { NotConverged, Separation, Singular, InvalidInput };

    FitError(Kind kind, const std::string &message, double last_score_norm = 0.0);

    Kind kind() const noexcept { return kind_; }
    double last_score_norm() const noexcept { return last_score_norm_; }

private:
    Kind kind_;
    double last_score_norm_;
};

/// Reference units whose kernel row carries no mass over the cohort.
class OrphanError : public Error {
public:
    explicit OrphanError(std::vector<std::size_t> orphans);

    const std::vector<std::size_t> &orphans() const noexcept { return orphans_; }

private:
    std::vector<std::size_t> orphans_;
};

/// Configuration problems (bad scenario values, unknown fields, parse errors).
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace kwnr
