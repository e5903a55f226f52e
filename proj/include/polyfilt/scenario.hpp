#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "polyfilt/filter.hpp"

namespace polyfilt {

struct SimulationSpec
{
    Eigen::VectorXd x0;
    std::uint64_t seed = 1;
};

/// A complete experiment: model, filter settings, and where the measurements come from.
struct Scenario
{
    std::string name;
    SystemModel model;
    FilterConfig filter;
    std::size_t horizon = 1;
    /// Either simulate the model or use the given measurements (one row per step).
    std::optional<SimulationSpec> simulation;
    std::optional<Eigen::MatrixXd> measurements;
    /// Directions whose certified offsets are reported at every step.
    std::vector<Eigen::VectorXd> report_directions;
};

/// Parses scenario JSON. `origin` names the source in error messages. Throws ConfigError
/// with a line number for syntax errors and a JSON pointer for bad fields.
Scenario parse_scenario(const std::string& text, const std::string& origin = "<scenario>");
Scenario load_scenario(const std::string& path);

/// Set description as used in scenarios: {"norm": "inf"|"2", "radius": r, "center": [...]},
/// {"box": {"lower": [...], "upper": [...]}} or {"constraints": [...], "sample_box": {...}}.
struct ParsedSet
{
    SemialgebraicSet set;
    std::optional<Box> box;
};

ParsedSet parse_set(const nlohmann::json& j, std::size_t n_vars, const std::string& where);

}  // namespace polyfilt
