#pragma once

// Plain comma-separated tables. Numbers are written in shortest round-trip
// form so that parsing an emitted file reproduces the in-memory doubles.

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "shortcut/digest.hpp"
#include "shortcut/error.hpp"

namespace shortcut {

inline std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw DataError("CSV is missing column '" + std::string(name) + "'");
    }

    double number(std::size_t row, std::size_t col) const {
        const std::string& s = rows.at(row).at(col);
        double v = 0.0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            throw DataError("CSV row " + std::to_string(row + 2) + ", column '" + header.at(col) +
                            "': not a number: '" + s + "'");
        return v;
    }

    std::optional<double> optional_number(std::size_t row, std::size_t col) const {
        if (rows.at(row).at(col).empty()) return std::nullopt;
        return number(row, col);
    }

    std::string text() const {
        std::string out;
        const auto line = [&out](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
            out += '\n';
        };
        line(header);
        for (const auto& r : rows) line(r);
        return out;
    }
};

inline CsvTable parse_csv(std::string_view text, const std::string& origin = "<csv>") {
    CsvTable t;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size())
            throw DataError(origin + ":" + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                            " fields, found " + std::to_string(cells.size()));
        t.rows.push_back(std::move(cells));
    }
    if (t.header.empty()) throw DataError(origin + ": empty CSV file");
    return t;
}

inline CsvTable read_csv(const std::string& path) { return parse_csv(read_file_bytes(path), path); }

inline void write_text(const std::string& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write file: " + path);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw DataError("write failed: " + path);
}

/// One time point of an NTK run.
struct SeriesRecord {
    int step = 0;
    double t = 0.0;
    double ixz_upper = 0.0;
    double ixz_lower = 0.0;
    double izy = 0.0;
    double train_mse = 0.0;
    double clean_test_mse = 0.0;
    double clean_test_expected_mse = 0.0;

    bool operator==(const SeriesRecord&) const = default;
};

inline const std::vector<std::string>& series_header() {
    static const std::vector<std::string> h{"step",      "t",         "I_XZ_upper",     "I_XZ_lower",
                                            "I_ZY",      "train_mse", "clean_test_mse", "clean_test_expected_mse"};
    return h;
}

inline CsvTable series_table(const std::vector<SeriesRecord>& records) {
    CsvTable t;
    t.header = series_header();
    for (const auto& r : records)
        t.rows.push_back({std::to_string(r.step), format_number(r.t), format_number(r.ixz_upper),
                          format_number(r.ixz_lower), format_number(r.izy), format_number(r.train_mse),
                          format_number(r.clean_test_mse), format_number(r.clean_test_expected_mse)});
    return t;
}

inline std::vector<SeriesRecord> series_from(const CsvTable& t) {
    std::vector<std::size_t> col;
    for (const auto& name : series_header()) col.push_back(t.column(name));
    std::vector<SeriesRecord> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        SeriesRecord r;
        r.step = static_cast<int>(t.number(i, col[0]));
        r.t = t.number(i, col[1]);
        r.ixz_upper = t.number(i, col[2]);
        r.ixz_lower = t.number(i, col[3]);
        r.izy = t.number(i, col[4]);
        r.train_mse = t.number(i, col[5]);
        r.clean_test_mse = t.number(i, col[6]);
        r.clean_test_expected_mse = t.number(i, col[7]);
        if (!out.empty() && !(r.t > out.back().t))
            throw DataError("series CSV: t is not strictly increasing at row " + std::to_string(i + 2));
        out.push_back(r);
    }
    return out;
}

inline void write_series_csv(const std::string& path, const std::vector<SeriesRecord>& records) {
    write_text(path, series_table(records).text());
}

inline std::vector<SeriesRecord> read_series_csv(const std::string& path) { return series_from(read_csv(path)); }

} // namespace shortcut
