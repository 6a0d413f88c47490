#include "pinning/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pinning {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* expected) {
    throw std::invalid_argument(key + ": expected " + expected + ", got '" + value + "'");
}

double parse_double(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) bad(key, text, "a number");
        return v;
    } catch (const std::logic_error&) {
        bad(key, text, "a number");
    }
}

std::int64_t parse_int(const std::string& key, const std::string& text) {
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec == std::errc() && ptr == text.data() + text.size()) return v;
    // accept integral values written as 1e4
    const double d = parse_double(key, text);
    if (d != std::floor(d) || std::fabs(d) > 9.0e18) bad(key, text, "an integer");
    return static_cast<std::int64_t>(d);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected key = value");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key.empty()) throw std::invalid_argument("config: empty key");
    values_[key] = value;
}

std::string RunConfig::raw(const std::string& key) const { return values_.at(key); }

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? raw(key) : fallback;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    return has(key) ? parse_double(key, raw(key)) : fallback;
}

std::optional<double> RunConfig::find_double(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return parse_double(key, raw(key));
}

std::int64_t RunConfig::get_int(const std::string& key, std::int64_t fallback) const {
    return has(key) ? parse_int(key, raw(key)) : fallback;
}

std::uint64_t RunConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string text = raw(key);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec == std::errc() && ptr == text.data() + text.size()) return v;
    const std::int64_t i = parse_int(key, text);
    if (i < 0) bad(key, text, "a nonnegative integer");
    return static_cast<std::uint64_t>(i);
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    std::string v = raw(key);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    bad(key, raw(key), "a boolean");
}

std::vector<int> RunConfig::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
    if (!has(key)) return fallback;
    std::vector<int> out;
    for (const auto& item : split_list(raw(key))) {
        const auto c1 = item.find(':');
        if (c1 == std::string::npos) {
            out.push_back(static_cast<int>(parse_int(key, item)));
            continue;
        }
        const auto c2 = item.find(':', c1 + 1);
        if (c2 == std::string::npos) bad(key, item, "a:b:count");
        const double a = parse_double(key, item.substr(0, c1));
        const double b = parse_double(key, item.substr(c1 + 1, c2 - c1 - 1));
        const auto k = parse_int(key, item.substr(c2 + 1));
        if (!(a > 0 && b >= a) || k < 1) bad(key, item, "0 < a <= b and count >= 1");
        for (std::int64_t i = 0; i < k; ++i) {
            const double t = k == 1 ? 0.0 : static_cast<double>(i) / (k - 1);
            const int v = static_cast<int>(std::lround(a * std::pow(b / a, t)));
            if (out.empty() || out.back() != v) out.push_back(v);
        }
    }
    if (out.empty()) bad(key, raw(key), "a nonempty list");
    return out;
}

std::vector<double> RunConfig::get_double_list(const std::string& key, const std::vector<double>& fallback) const {
    if (!has(key)) return fallback;
    std::vector<double> out;
    for (const auto& item : split_list(raw(key))) out.push_back(parse_double(key, item));
    if (out.empty()) bad(key, raw(key), "a nonempty list");
    return out;
}

void RunConfig::require_known(const std::set<std::string>& allowed) const {
    for (const auto& [key, value] : values_)
        if (!allowed.count(key)) throw std::invalid_argument(key + ": unknown key for this command");
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [key, value] : values_) j[key] = value;
    return j;
}

}  // namespace pinning
