#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace pinning {

/// Flat key = value run configuration. Lines starting with '#' are comments.
/// Typed getters throw std::invalid_argument naming the offending key.
class RunConfig {
public:
    static RunConfig parse(const std::string& text, const std::string& origin = "config");
    static RunConfig load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::optional<double> find_double(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    // Comma or whitespace separated; "a:b:k" expands to k geometric points from a to b.
    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;
    std::vector<double> get_double_list(const std::string& key, const std::vector<double>& fallback) const;

    // Rejects keys outside `allowed`.
    void require_known(const std::set<std::string>& allowed) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    nlohmann::json to_json() const;

private:
    std::string raw(const std::string& key) const;
    std::map<std::string, std::string> values_;
};

}  // namespace pinning
