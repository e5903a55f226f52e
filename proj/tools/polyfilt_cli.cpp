#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "polyfilt/polyfilt.h"

namespace {

struct Options
{
    std::string scenario;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::optional<int> sos_degree;
    std::optional<std::size_t> max_halfspaces;
    std::optional<std::size_t> points;
    std::optional<int> threads;
};

int report_error(pf_status s, const char* what)
{
    std::fprintf(stderr, "polyfilt: %s: %s\n", pf_status_name(s), what);
    return static_cast<int>(s);
}

int check(pf_status s)
{
    return s == PF_OK ? 0 : report_error(s, pf_last_error());
}

class ScenarioHandle
{
public:
    ~ScenarioHandle() { pf_scenario_free(ptr_); }
    pf_scenario* get() const { return ptr_; }
    pf_scenario** out() { return &ptr_; }

private:
    pf_scenario* ptr_ = nullptr;
};

int load(const Options& o, ScenarioHandle& h)
{
    if (int rc = check(pf_scenario_load(o.scenario.c_str(), h.out())))
        return rc;
    if (o.seed)
        if (int rc = check(pf_scenario_set_seed(h.get(), *o.seed)))
            return rc;
    if (o.sos_degree)
        if (int rc = check(pf_scenario_set_sos_degree(h.get(), *o.sos_degree)))
            return rc;
    if (o.max_halfspaces)
        if (int rc = check(pf_scenario_set_max_halfspaces(h.get(), *o.max_halfspaces)))
            return rc;
    if (o.points)
        if (int rc = check(pf_scenario_set_points(h.get(), *o.points)))
            return rc;
    if (o.threads)
        if (int rc = check(pf_scenario_set_threads(h.get(), *o.threads)))
            return rc;
    return 0;
}

int cmd_simulate(const Options& o)
{
    ScenarioHandle h;
    if (int rc = load(o, h))
        return rc;
    if (int rc = check(pf_simulate(h.get(), o.out.c_str())))
        return rc;
    std::printf("trajectory written to %s\n", o.out.c_str());
    return 0;
}

int cmd_filter(const Options& o)
{
    ScenarioHandle h;
    if (int rc = load(o, h))
        return rc;
    std::size_t failed = 0;
    const pf_status s = pf_filter(h.get(), o.out.c_str(), &failed);
    if (s != PF_OK)
    {
        if (failed > 0)
            std::fprintf(stderr, "polyfilt: stopped at step %zu; partial results in %s\n", failed, o.out.c_str());
        return check(s);
    }
    std::printf("filter results written to %s\n", o.out.c_str());
    return 0;
}

int cmd_verify(const Options& o)
{
    pf_verify_summary sum{};
    const pf_status s = pf_verify(o.out.c_str(), &sum);
    if (s == PF_OK || s == PF_ERR_VERIFY)
    {
        std::printf("certificates checked: %zu, failed: %zu, max identity residual: %.3e, min eigenvalue: %.3e\n",
                    sum.checked, sum.failed, sum.max_identity_residual, sum.min_eigenvalue);
    }
    return check(s);
}

int cmd_plot(const Options& o)
{
    char path[4096];
    if (int rc = check(pf_plot(o.out.c_str(), path, sizeof path)))
        return rc;
    std::printf("%s\n", path);
    return 0;
}

int cmd_report(const Options& o)
{
    char* text = nullptr;
    if (int rc = check(pf_report(o.out.c_str(), &text)))
        return rc;
    std::fputs(text, stdout);
    pf_string_free(text);
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Guaranteed state estimation for polynomial systems"};
    app.set_version_flag("--version", pf_version());
    app.require_subcommand(1);

    Options o;
    auto add_run_flags = [&](CLI::App* sub) {
        sub->add_option("--scenario", o.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "Output directory")->capture_default_str();
        sub->add_option("--seed", o.seed, "Seed for simulation and sampling");
        sub->add_option("--sos-degree", o.sos_degree, "SOS relaxation half-degree")->check(CLI::PositiveNumber);
        sub->add_option("--max-halfspaces", o.max_halfspaces, "Half-space budget including the box faces");
        sub->add_option("--points", o.points, "Sample points per step")->check(CLI::PositiveNumber);
        sub->add_option("--threads", o.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
    };
    auto add_out_flag = [&](CLI::App* sub) {
        sub->add_option("--out", o.out, "Directory holding filter results")->capture_default_str();
    };

    auto* simulate = app.add_subcommand("simulate", "Simulate the scenario model");
    add_run_flags(simulate);
    auto* filter = app.add_subcommand("filter", "Run the set-membership filter");
    add_run_flags(filter);
    auto* verify = app.add_subcommand("verify", "Re-check saved certificates");
    add_out_flag(verify);
    auto* plot = app.add_subcommand("plot", "Draw boxes, polytopes and trajectory as SVG");
    add_out_flag(plot);
    auto* report = app.add_subcommand("report", "Tabulate box widths and volumes");
    add_out_flag(report);

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(PF_ERR_CONFIG);
    }

    if (simulate->parsed())
        return cmd_simulate(o);
    if (filter->parsed())
        return cmd_filter(o);
    if (verify->parsed())
        return cmd_verify(o);
    if (plot->parsed())
        return cmd_plot(o);
    return cmd_report(o);
}
