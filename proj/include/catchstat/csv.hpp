#ifndef CATCHSTAT_CSV_HPP
#define CATCHSTAT_CSV_HPP

#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "catchstat/errors.hpp"

namespace catchstat {

/// Locale-independent, round-trip-exact formatting for doubles. All file
/// output goes through this so runs are byte-reproducible.
inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

namespace csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }

    int require_column(const std::string& name, const std::string& path) const {
        const int c = column(name);
        if (c < 0) throw IoError(path + ": missing required column '" + name + "'");
        return c;
    }
};

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(field);
            field.clear();
        } else if (ch != '\r') {
            field.push_back(ch);
        }
    }
    out.push_back(field);
    return out;
}

/// Reads a CSV file with an optional block of '#' comment lines before the
/// header row. Empty lines are skipped.
inline Table read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path);
    Table t;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_line(line);
        if (!have_header) {
            t.header = std::move(fields);
            have_header = true;
        } else {
            t.rows.push_back(std::move(fields));
        }
    }
    if (!have_header) throw IoError(path + ": no header row found");
    return t;
}

inline double parse_double(const std::string& s, const std::string& context) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw IoError(context + ": cannot parse number '" + s + "'");
    return v;
}

inline long parse_long(const std::string& s, const std::string& context) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw IoError(context + ": cannot parse integer '" + s + "'");
    return v;
}

inline std::optional<double> parse_optional_double(const std::string& s,
                                                   const std::string& context) {
    if (s.empty()) return std::nullopt;
    return parse_double(s, context);
}

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path) {
        if (!out_) throw IoError("cannot open file for writing: " + path);
    }

    void comment(const std::string& text) { out_ << "# " << text << "\n"; }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << fields[i];
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

}  // namespace csv
}  // namespace catchstat

#endif  // CATCHSTAT_CSV_HPP
