#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace pinning {

inline constexpr const char* kCodeVersion = "pinning-lab 1.0.0";

using Cell = std::variant<std::int64_t, double, std::string>;

/// Tabular experiment output: a provenance header, one row per grid point,
/// and a footer of acceptance checks.
struct ExperimentReport {
    nlohmann::json header = nlohmann::json::object();
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
    nlohmann::json footer = nlohmann::json::object();

    void add_row(std::vector<Cell> row);
    std::size_t column(const std::string& name) const;
    double number(std::size_t row, const std::string& name) const;

    nlohmann::json to_json() const;
    std::string to_csv() const;
    void write_csv(const std::filesystem::path& path) const;
    void write_json(const std::filesystem::path& path) const;
};

// Shortest round-trip formatting with 17 significant digits at most.
std::string format_double(double x);

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// Minimal standalone SVG line chart.
std::string render_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<PlotSeries>& series);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace pinning
