// Numeric result tables and their CSV form.
//
// CSV layout: header line, then a `# meta:` comment carrying the config
// hash, seed, and artifact version, then one comma-separated row per record.
// Reals are written with std::to_chars at 17 significant digits, so the
// bytes are a pure function of the numeric content.

#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mlmcopt {

inline constexpr std::string_view kArtifactVersion = "0.1.0";

/// FNV-1a, used to fingerprint configurations in output metadata.
inline std::uint64_t fnv1a_hash(std::string_view data) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::string format_double(double v) {
    char buf[64];
    const auto res =
        std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

struct ResultTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    std::string meta;  // "config_hash=... seed=... version=..."
    std::vector<std::string> trailing_comments;

    void add_row(std::vector<double> row) {
        if (row.size() != header.size()) {
            throw std::length_error("ResultTable: row width " +
                                    std::to_string(row.size()) +
                                    " != header width " +
                                    std::to_string(header.size()));
        }
        rows.push_back(std::move(row));
    }

    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        throw std::invalid_argument("ResultTable: no column named " +
                                    std::string(name));
    }

    bool has_column(std::string_view name) const {
        for (const auto& h : header) {
            if (h == name) return true;
        }
        return false;
    }

    std::vector<double> column_values(std::string_view name) const {
        const std::size_t c = column(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r[c]);
        return out;
    }
};

inline std::string make_meta(std::uint64_t config_hash, std::uint64_t seed) {
    std::ostringstream os;
    os << "config_hash=" << config_hash << " seed=" << seed << " version="
       << kArtifactVersion;
    return os.str();
}

inline std::string to_csv(const ResultTable& table) {
    std::string out;
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (i) out += ',';
        out += table.header[i];
    }
    out += '\n';
    out += "# meta: " + table.meta + '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += format_double(row[i]);
        }
        out += '\n';
    }
    for (const auto& c : table.trailing_comments) {
        out += "# " + c + '\n';
    }
    return out;
}

inline void write_csv(const ResultTable& table,
                      const std::filesystem::path& path) {
    if (!path.parent_path().empty()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("write_csv: cannot open " + path.string());
    }
    f << to_csv(table);
}

inline ResultTable read_csv(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("read_csv: cannot open " + path.string());
    }
    ResultTable table;
    std::string line;
    bool have_header = false;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        if (line.starts_with("# meta: ")) {
            table.meta = line.substr(8);
            continue;
        }
        if (line.starts_with("# ")) {
            table.trailing_comments.push_back(line.substr(2));
            continue;
        }
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const std::size_t pos = line.find(',', start);
            cells.push_back(line.substr(
                start, pos == std::string::npos ? pos : pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        if (!have_header) {
            table.header = std::move(cells);
            have_header = true;
            continue;
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) {
            double v = 0.0;
            const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
            if (res.ec != std::errc{}) {
                throw std::runtime_error("read_csv: bad numeric cell '" + c +
                                         "' in " + path.string());
            }
            row.push_back(v);
        }
        table.add_row(std::move(row));
    }
    if (!have_header) {
        throw std::runtime_error("read_csv: empty file " + path.string());
    }
    return table;
}

}  // namespace mlmcopt
