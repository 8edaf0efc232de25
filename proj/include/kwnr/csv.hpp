#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kwnr::csv {

/// An RFC-4180 table: one header row plus data rows of equal width.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of the named column, or nullopt.
    std::optional<std::size_t> find(std::string_view name) const;
    /// Index of the named column; throws DataError naming the column when absent.
    std::size_t require(std::string_view name) const;
};

/// Parses CSV text. Lines starting with '#' before the header and between records
/// are comments. Throws DataError on ragged rows or unterminated quotes.
Table parse(std::istream &in);
Table read_file(const std::filesystem::path &path);

/// Writes one record, quoting fields that need it.
void write_row(std::ostream &out, const std::vector<std::string> &fields);
void write_table(std::ostream &out, const Table &table);

/// Renders a number with 17 significant digits (round-trips exactly).
std::string format_number(double value);

/// Parses a full-cell decimal number. Returns nullopt for anything else,
/// including the empty string.
std::optional<double> parse_number(std::string_view text);

} // namespace kwnr::csv
