#pragma once

// Scan files and tabular export.
//
// Two-column text: one "x y" pair per line, separated by whitespace or a comma.
// Lines starting with '#' and blank lines are skipped; the first remaining line may
// be a header. Native JSON scans:
//   {"kind": "rocking"|"energy", "x_unit": "mrad"|"gamma", "x": [...], "y": [...],
//    "theta_mrad": .., "abundance": .., "source": "model"|"oracle"}
// Numbers are written with 12 significant digits, independent of the locale.

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fanocav/errors.hpp"

namespace fanocav {

inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 12);
    return std::string(buf.data(), end);
}

/// v rounded to 12 significant digits (what format_number prints).
inline double round12(double v) {
    if (!std::isfinite(v)) return v;
    const std::string s = format_number(v);
    double out = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), out);
    return out;
}

struct Scan {
    std::string kind = "energy";
    std::string x_unit = "gamma";
    std::optional<double> theta_mrad;
    std::optional<double> abundance;
    std::string source;
    std::vector<double> x;
    std::vector<double> y;
};

namespace detail {

inline bool parse_double(std::string_view s, double& out) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> f;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == ',' || line[i] == '\r')) ++i;
        const std::size_t start = i;
        while (i < line.size() && !(line[i] == ' ' || line[i] == '\t' || line[i] == ',' || line[i] == '\r')) ++i;
        if (i > start) f.push_back(line.substr(start, i - start));
    }
    return f;
}

} // namespace detail

inline Scan parse_two_column(const std::string& text, const std::string& where = "scan") {
    Scan s;
    s.kind.clear();
    s.x_unit.clear();
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        const auto fields = detail::split_fields(line);
        if (fields.empty() || fields.front().front() == '#') continue;
        double x = 0, y = 0;
        const bool ok = fields.size() == 2 && detail::parse_double(fields[0], x) && detail::parse_double(fields[1], y);
        if (!ok) {
            if (first && fields.size() == 2) {
                first = false;
                continue; // header
            }
            throw InputError(where + ":" + std::to_string(lineno) + ": expected two numeric columns");
        }
        first = false;
        s.x.push_back(x);
        s.y.push_back(y);
    }
    if (s.x.empty()) throw InputError(where + ": no data rows");
    return s;
}

inline Scan parse_scan_json(const nlohmann::json& j, const std::string& where = "scan") {
    if (!j.is_object()) throw InputError(where + ": expected a JSON object");
    static const std::array<const char*, 7> allowed{"kind", "x_unit", "theta_mrad", "abundance", "source", "x", "y"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) known = known || it.key() == k;
        if (!known) throw InputError(where + "." + it.key() + ": unknown key");
    }
    Scan s;
    try {
        if (j.contains("kind")) s.kind = j.at("kind").get<std::string>();
        if (j.contains("x_unit")) s.x_unit = j.at("x_unit").get<std::string>();
        if (j.contains("source")) s.source = j.at("source").get<std::string>();
        if (j.contains("theta_mrad")) s.theta_mrad = j.at("theta_mrad").get<double>();
        if (j.contains("abundance")) s.abundance = j.at("abundance").get<double>();
        s.x = j.at("x").get<std::vector<double>>();
        s.y = j.at("y").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(where + ": " + e.what());
    }
    if (s.x.size() != s.y.size()) throw InputError(where + ": x and y lengths differ");
    if (s.x.empty()) throw InputError(where + ": no data rows");
    return s;
}

/// Reads either format; JSON is recognised by a leading '{'.
inline Scan read_scan(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    const auto pos = text.find_first_not_of(" \t\r\n");
    if (pos != std::string::npos && text[pos] == '{') {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw InputError(path + ": " + e.what());
        }
        return parse_scan_json(j, path);
    }
    return parse_two_column(text, path);
}

inline nlohmann::json rounded_array(const std::vector<double>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (double d : v) a.push_back(round12(d));
    return a;
}

inline nlohmann::json scan_to_json(const Scan& s) {
    nlohmann::json j;
    j["kind"] = s.kind;
    j["x_unit"] = s.x_unit;
    if (s.theta_mrad) j["theta_mrad"] = round12(*s.theta_mrad);
    if (s.abundance) j["abundance"] = round12(*s.abundance);
    if (!s.source.empty()) j["source"] = s.source;
    j["x"] = rounded_array(s.x);
    j["y"] = rounded_array(s.y);
    return j;
}

inline std::string scan_to_csv(const Scan& s, const std::string& x_name) {
    std::string out = x_name + ",R2\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) out += format_number(s.x[i]) + "," + format_number(s.y[i]) + "\n";
    return out;
}

} // namespace fanocav
