#include "kwnr/csv.hpp"

#include "kwnr/error.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

namespace kwnr::csv {

std::optional<std::size_t> Table::find(std::string_view name) const {
    for (std::size_t k = 0; k < header.size(); ++k) {
        if (header[k] == name) {
            return k;
        }
    }
    return std::nullopt;
}

std::size_t Table::require(std::string_view name) const {
    if (auto idx = find(name)) {
        return *idx;
    }
    throw DataError("missing column", 0, std::string{name});
}

namespace {

// Reads one logical record. Returns false at end of input.
bool read_record(std::istream &in, std::vector<std::string> &fields, std::size_t &line_no) {
    fields.clear();
    int ch = in.peek();
    if (ch == std::char_traits<char>::eof()) {
        return false;
    }
    std::string field;
    bool quoted = false;
    bool field_started = false;
    ++line_no;
    while (true) {
        ch = in.get();
        if (ch == std::char_traits<char>::eof()) {
            if (quoted) {
                throw DataError("unterminated quoted field at line " + std::to_string(line_no));
            }
            fields.push_back(std::move(field));
            return true;
        }
        const char c = static_cast<char>(ch);
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get();
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') {
                    ++line_no;
                }
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && !field_started) {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
            field_started = false;
        } else if (c == '\r') {
            if (in.peek() == '\n') {
                in.get();
            }
            fields.push_back(std::move(field));
            return true;
        } else if (c == '\n') {
            fields.push_back(std::move(field));
            return true;
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
}

void skip_comments(std::istream &in, std::size_t &line_no) {
    std::string discard;
    while (in.peek() == '#') {
        std::getline(in, discard);
        ++line_no;
    }
}

void skip_bom(std::istream &in) {
    static constexpr char bom[] = "\xEF\xBB\xBF";
    char got[3];
    int n = 0;
    while (n < 3 && in.peek() == static_cast<unsigned char>(bom[n])) {
        got[n++] = static_cast<char>(in.get());
    }
    if (n > 0 && n < 3) {
        while (n > 0) {
            in.putback(got[--n]);
        }
    }
}

bool needs_quotes(const std::string &field) {
    return field.find_first_of(",\"\r\n") != std::string::npos ||
           (!field.empty() && (field.front() == ' ' || field.back() == ' ' || field.front() == '#'));
}

} // namespace

Table parse(std::istream &in) {
    Table table;
    std::size_t line_no = 0;
    skip_bom(in);
    skip_comments(in, line_no);
    if (!read_record(in, table.header, line_no)) {
        throw DataError("empty CSV input: header row required");
    }
    std::vector<std::string> fields;
    while (true) {
        skip_comments(in, line_no);
        if (!read_record(in, fields, line_no)) {
            break;
        }
        if (fields.size() == 1 && fields.front().empty()) {
            continue; // blank line
        }
        if (fields.size() != table.header.size()) {
            throw DataError("expected " + std::to_string(table.header.size()) + " fields, found " +
                                std::to_string(fields.size()),
                            table.rows.size() + 1);
        }
        table.rows.push_back(fields);
    }
    return table;
}

Table read_file(const std::filesystem::path &path) {
    std::ifstream in{path, std::ios::binary};
    if (!in) {
        throw DataError("cannot open file '" + path.string() + "'");
    }
    return parse(in);
}

void write_row(std::ostream &out, const std::vector<std::string> &fields) {
    for (std::size_t k = 0; k < fields.size(); ++k) {
        if (k > 0) {
            out << ',';
        }
        const auto &field = fields[k];
        if (needs_quotes(field)) {
            out << '"';
            for (char c : field) {
                if (c == '"') {
                    out << '"';
                }
                out << c;
            }
            out << '"';
        } else {
            out << field;
        }
    }
    out << '\n';
}

void write_table(std::ostream &out, const Table &table) {
    write_row(out, table.header);
    for (const auto &row : table.rows) {
        write_row(out, row);
    }
}

std::string format_number(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

std::optional<double> parse_number(std::string_view text) {
    while (!text.empty() && text.front() == ' ') {
        text.remove_prefix(1);
    }
    while (!text.empty() && text.back() == ' ') {
        text.remove_suffix(1);
    }
    if (text.empty()) {
        return std::nullopt;
    }
    if (text.front() == '+') {
        text.remove_prefix(1);
    }
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        return std::nullopt;
    }
    return value;
}

} // namespace kwnr::csv
