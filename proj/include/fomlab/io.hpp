#pragma once

// CSV and JSON helpers. CSV numbers are written with 9 significant digits.

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "fomlab/error.hpp"

namespace fomlab::io {

using json = nlohmann::json;

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw ConfigError("CSV column '" + std::string(name) + "' not found");
    }

    bool has_column(std::string_view name) const {
        for (const auto& h : header)
            if (h == name) return true;
        return false;
    }

    std::vector<double> column_values(std::size_t c) const {
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r.at(c));
        return out;
    }

    std::vector<double> column_values(std::string_view name) const { return column_values(column(name)); }
};

inline std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == sep) {
            out.push_back(trim(line.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

/// Parse a numeric CSV with a single header row. Lines starting with '#' and
/// blank lines are skipped.
inline CsvTable parse_csv(std::istream& in, const std::string& source = "<stream>") {
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        auto fields = split(s);
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size())
            throw ConfigError(fmt::format("{}:{}: expected {} fields, got {}", source, lineno, t.header.size(),
                                          fields.size()));
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) {
            char* end = nullptr;
            const double v = std::strtod(f.c_str(), &end);
            if (end == f.c_str() || *end != '\0')
                throw ConfigError(fmt::format("{}:{}: cannot parse number '{}'", source, lineno, f));
            row.push_back(v);
        }
        t.rows.push_back(std::move(row));
    }
    if (t.header.empty()) throw ConfigError(source + ": empty CSV");
    return t;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    return parse_csv(in, path.string());
}

inline json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

inline std::string fmt9(double v) { return fmt::format("{:.9g}", v); }

/// Write a header line and numeric rows with 9 significant digits.
inline void write_csv(std::ostream& out, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << fmt9(r[i]);
        out << '\n';
    }
}

inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    write_csv(out, header, rows);
}

/// Resolve a data file: absolute paths pass through, relative paths are
/// looked up against base first and then the installed data directory.
inline std::filesystem::path resolve_data_path(const std::filesystem::path& p,
                                               const std::filesystem::path& base = {}) {
    if (p.is_absolute()) return p;
    if (!base.empty() && std::filesystem::exists(base / p)) return base / p;
    if (std::filesystem::exists(p)) return p;
#ifdef FOMLAB_DATA_DIR
    const std::filesystem::path d = std::filesystem::path(FOMLAB_DATA_DIR) / p;
    if (std::filesystem::exists(d)) return d;
#endif
    return base.empty() ? p : base / p;
}

inline std::filesystem::path default_data_dir() {
    if (const char* env = std::getenv("FOMLAB_DATA_DIR")) return env;
#ifdef FOMLAB_DATA_DIR
    return FOMLAB_DATA_DIR;
#else
    return "data";
#endif
}

}  // namespace fomlab::io
