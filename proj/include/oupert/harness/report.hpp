#pragma once

// CSV reports: header `experiment,param_json,value,ci_low,ci_high,seed`,
// numbers printed with 17 significant digits so they round-trip exactly.

#include "oupert/core.hpp"

#include "json.hpp"

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace oupert::harness {

struct ReportRow {
    std::string experiment;
    nlohmann::json params = nlohmann::json::object();
    double value = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::uint64_t seed = 0;
};

inline constexpr const char* kCsvHeader = "experiment,param_json,value,ci_low,ci_high,seed";

namespace detail {

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string fmt17(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

/// Splits one CSV record; `pos` advances past the record terminator.
inline std::vector<std::string> csv_record(const std::string& text, std::size_t& pos) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    while (pos < text.size()) {
        const char c = text[pos];
        if (quoted) {
            if (c == '"') {
                if (pos + 1 < text.size() && text[pos + 1] == '"') {
                    cur += '"';
                    ++pos;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
            ++pos;
            continue;
        }
        if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && pos + 1 < text.size() && text[pos + 1] == '\n') ++pos;
            ++pos;
            fields.push_back(std::move(cur));
            return fields;
        } else {
            cur += c;
        }
        ++pos;
    }
    if (quoted) throw ConfigError("report: unterminated quoted field");
    fields.push_back(std::move(cur));
    return fields;
}

} // namespace detail

inline std::string to_csv(const std::vector<ReportRow>& rows) {
    require(!rows.empty(), "emit_report: no rows to write");
    std::ostringstream os;
    os << kCsvHeader << '\n';
    for (const auto& r : rows) {
        os << detail::csv_quote(r.experiment) << ',' << detail::csv_quote(r.params.dump()) << ','
           << detail::fmt17(r.value) << ',' << detail::fmt17(r.ci_low) << ',' << detail::fmt17(r.ci_high) << ','
           << r.seed << '\n';
    }
    return os.str();
}

inline void emit_report(const std::vector<ReportRow>& rows, const std::string& path) {
    const std::string text = to_csv(rows);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("emit_report: cannot write " + path);
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("emit_report: write failed for " + path);
}

inline std::vector<ReportRow> parse_csv(const std::string& text) {
    std::size_t pos = 0;
    const auto header = detail::csv_record(text, pos);
    std::string joined;
    for (std::size_t i = 0; i < header.size(); ++i) joined += (i ? "," : "") + header[i];
    if (joined != kCsvHeader) throw ConfigError("report: unexpected CSV header \"" + joined + "\"");
    std::vector<ReportRow> rows;
    while (pos < text.size()) {
        const auto f = detail::csv_record(text, pos);
        if (f.size() == 1 && f[0].empty()) continue;
        if (f.size() != 6) throw ConfigError("report: expected 6 fields, got " + std::to_string(f.size()));
        ReportRow r;
        r.experiment = f[0];
        try {
            r.params = nlohmann::json::parse(f[1]);
            r.value = std::stod(f[2]);
            r.ci_low = std::stod(f[3]);
            r.ci_high = std::stod(f[4]);
            r.seed = std::stoull(f[5]);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("report: malformed row: ") + e.what());
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::vector<ReportRow> load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("report: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str());
}

} // namespace oupert::harness
