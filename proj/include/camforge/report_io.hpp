#pragma once

// Minimal ordered JSON emitter. Floats are written with 17 significant
// digits; non-finite values become the strings "NaN", "Infinity" and
// "-Infinity".

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace camforge::report_io {

inline std::string number(double v) {
    if (std::isnan(v)) return "\"NaN\"";
    if (std::isinf(v)) return v > 0 ? "\"Infinity\"" : "\"-Infinity\"";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Plain %.17g for CSV cells (nan/inf spelled as by printf).
inline std::string csv_number(double v) {
    if (std::isnan(v)) return "NaN";
    if (std::isinf(v)) return v > 0 ? "Infinity" : "-Infinity";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    return out + "\"";
}

/// Builds one JSON object with keys in insertion order.
class Object {
public:
    Object& raw(const std::string& key, const std::string& json) {
        fields_.emplace_back(key, json);
        return *this;
    }
    Object& num(const std::string& key, double v) { return raw(key, number(v)); }
    Object& integer(const std::string& key, long long v) { return raw(key, std::to_string(v)); }
    Object& str(const std::string& key, const std::string& v) { return raw(key, quoted(v)); }
    Object& boolean(const std::string& key, bool v) { return raw(key, v ? "true" : "false"); }

    std::string dump(int indent = 0) const {
        if (fields_.empty()) return "{}";
        const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
        std::string out = "{\n";
        for (std::size_t i = 0; i < fields_.size(); ++i) {
            out += pad + quoted(fields_[i].first) + ": " + fields_[i].second;
            out += i + 1 < fields_.size() ? ",\n" : "\n";
        }
        return out + std::string(static_cast<std::size_t>(indent), ' ') + "}";
    }

private:
    std::vector<std::pair<std::string, std::string>> fields_;
};

inline std::string array(const std::vector<std::string>& items, int indent = 0) {
    if (items.empty()) return "[]";
    const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
    std::string out = "[\n";
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += pad + items[i];
        out += i + 1 < items.size() ? ",\n" : "\n";
    }
    return out + std::string(static_cast<std::size_t>(indent), ' ') + "]";
}

/// Single-line array, used for long numeric lists.
inline std::string inline_array(const std::vector<std::string>& items) {
    std::string out = "[";
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += items[i];
    }
    return out + "]";
}

}  // namespace camforge::report_io
