#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "polyfilt/filter.hpp"
#include "polyfilt/scenario.hpp"

namespace polyfilt::app {

/// Command-line overrides applied on top of a scenario.
struct Overrides
{
    std::optional<std::uint64_t> seed;      ///< filter and simulation seed
    std::optional<int> sos_half_degree;
    std::optional<std::size_t> max_halfspaces;
    std::optional<std::size_t> points;
    std::optional<int> threads;             ///< 0 = available parallelism
};

void apply(Scenario& scenario, const Overrides& overrides);

/// Simulates the scenario and writes trajectory.json and trajectory.csv.
Trajectory run_simulate(const Scenario& scenario, const std::filesystem::path& out);

struct FilterOutcome
{
    std::vector<StepResult> steps;
    std::optional<Trajectory> truth;
};

/// Runs the filter over the scenario horizon, writing filter.json, timings.json,
/// certificates/step_NNN.json and the trajectory. InconsistentMeasurement and SdpFailure
/// are rethrown after the partial results are written.
FilterOutcome run_filter(const Scenario& scenario, const std::filesystem::path& out);

struct VerifyReport
{
    std::size_t checked = 0;
    std::size_t failed = 0;
    double max_identity_residual = 0.0;
    double min_eigenvalue = 0.0;
    std::vector<std::string> failures;
    bool ok() const { return failed == 0 && checked > 0; }
};

/// Re-checks every saved certificate under `out` and that each one matches the half-space
/// it certifies.
VerifyReport run_verify(const std::filesystem::path& out, double tol_identity = 1e-6, double tol_psd = 1e-6);

/// Writes plot.svg (boxes, polytopes, true trajectory). Two-dimensional states only.
std::filesystem::path run_plot(const std::filesystem::path& out);

/// Writes report.csv and returns a plain-text table of box widths and volumes per step.
std::string run_report(const std::filesystem::path& out);

/// Corner points of the polygon box intersected with the polytope (2-D only), in order.
std::vector<Eigen::Vector2d> clip_polygon(const Polytope& polytope, const Box& box);

}  // namespace polyfilt::app
