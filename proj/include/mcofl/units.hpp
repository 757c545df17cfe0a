#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mcofl {

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

inline double linear_to_db(double ratio) { return 10.0 * std::log10(ratio); }

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

inline double watts_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }

// Parses "3.5 GHz", "30MHz", "-70 dB", "20 dBm", "2.5 Mbit", "6.07 J", "35 s"
// into SI base units (Hz, W from dBm, linear ratio from dB, bits, J, s).
// A bare number is returned unchanged, i.e. it is already in base units.
inline double parse_quantity(std::string_view text) {
    size_t pos = 0;
    while (pos < text.size() && (std::isspace(static_cast<unsigned char>(text[pos])))) pos++;
    size_t start = pos;
    while (pos < text.size() &&
           (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '+' ||
            text[pos] == '-' || text[pos] == '.' || text[pos] == 'e' || text[pos] == 'E'))
        pos++;
    double value;
    try {
        value = std::stod(std::string(text.substr(start, pos - start)));
    } catch (const std::exception&) {
        throw std::invalid_argument("unparseable quantity: '" + std::string(text) + "'");
    }
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) pos++;
    std::string suffix(text.substr(pos));
    while (!suffix.empty() && std::isspace(static_cast<unsigned char>(suffix.back()))) suffix.pop_back();

    if (suffix.empty()) return value;
    if (suffix == "GHz") return value * 1e9;
    if (suffix == "MHz") return value * 1e6;
    if (suffix == "kHz") return value * 1e3;
    if (suffix == "Hz") return value;
    if (suffix == "dB") return db_to_linear(value);
    if (suffix == "dBm") return dbm_to_watts(value);
    if (suffix == "Mbit" || suffix == "Mbits") return value * 1e6;
    if (suffix == "kbit" || suffix == "kbits") return value * 1e3;
    if (suffix == "bit" || suffix == "bits") return value;
    if (suffix == "GB") return value * 8e9;
    if (suffix == "MB") return value * 8e6;
    if (suffix == "J" || suffix == "s" || suffix == "W") return value;
    if (suffix == "mJ" || suffix == "ms" || suffix == "mW") return value * 1e-3;
    throw std::invalid_argument("unknown unit suffix '" + suffix + "'");
}

} // namespace mcofl
