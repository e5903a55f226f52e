#include "polyfilt/polyfilt.h"

#include <cstring>
#include <new>
#include <string>

#include "polyfilt/app.hpp"
#include "polyfilt/error.hpp"
#include "polyfilt/log.hpp"
#include "polyfilt/sos.hpp"

struct pf_scenario
{
    polyfilt::Scenario scenario;
};

namespace {

thread_local std::string last_error;

pf_status fail(pf_status s, const std::string& what)
{
    last_error = what;
    return s;
}

// Maps exceptions from the core onto status codes. Order matters: specific types first.
template <class Fn>
pf_status guarded(Fn&& fn, std::size_t* failed_step = nullptr)
{
    last_error.clear();
    try
    {
        polyfilt::log::init();
        return fn();
    }
    catch (const polyfilt::InconsistentMeasurement& e)
    {
        if (failed_step)
            *failed_step = e.step();
        return fail(PF_ERR_INCONSISTENT, e.what());
    }
    catch (const polyfilt::SdpFailure& e)
    {
        if (failed_step)
            *failed_step = e.step();
        return fail(PF_ERR_SDP, e.what());
    }
    catch (const polyfilt::ConfigError& e)
    {
        return fail(PF_ERR_CONFIG, e.what());
    }
    catch (const nlohmann::json::exception& e)
    {
        return fail(PF_ERR_CONFIG, e.what());
    }
    catch (const std::ios_base::failure& e)
    {
        return fail(PF_ERR_IO, e.what());
    }
    catch (const std::filesystem::filesystem_error& e)
    {
        return fail(PF_ERR_IO, e.what());
    }
    catch (const std::invalid_argument& e)
    {
        return fail(PF_ERR_ARGUMENT, e.what());
    }
    catch (const std::bad_alloc&)
    {
        return fail(PF_ERR_INTERNAL, "out of memory");
    }
    catch (const std::exception& e)
    {
        return fail(PF_ERR_INTERNAL, e.what());
    }
    catch (...)
    {
        return fail(PF_ERR_INTERNAL, "unknown error");
    }
}

pf_status overrides(pf_scenario* s, const polyfilt::app::Overrides& o)
{
    if (!s)
        return fail(PF_ERR_ARGUMENT, "null scenario");
    return guarded([&] {
        // A bad override is a configuration problem, not a programming error.
        try
        {
            polyfilt::app::apply(s->scenario, o);
            s->scenario.filter.validate();
        }
        catch (const std::invalid_argument& e)
        {
            throw polyfilt::ConfigError(e.what());
        }
        return PF_OK;
    });
}

}  // namespace

extern "C" {

const char* pf_version(void)
{
    return "0.1.0";
}

const char* pf_last_error(void)
{
    return last_error.c_str();
}

const char* pf_status_name(pf_status status)
{
    switch (status)
    {
    case PF_OK: return "ok";
    case PF_ERR_CONFIG: return "config error";
    case PF_ERR_IO: return "i/o error";
    case PF_ERR_INCONSISTENT: return "inconsistent measurement";
    case PF_ERR_SDP: return "sdp failure";
    case PF_ERR_VERIFY: return "verification failed";
    case PF_ERR_ARGUMENT: return "invalid argument";
    case PF_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

pf_status pf_scenario_load(const char* path, pf_scenario** out)
{
    if (!path || !out)
        return fail(PF_ERR_ARGUMENT, "null argument");
    *out = nullptr;
    return guarded([&] {
        *out = new pf_scenario{polyfilt::load_scenario(path)};
        return PF_OK;
    });
}

pf_status pf_scenario_parse(const char* json_text, pf_scenario** out)
{
    if (!json_text || !out)
        return fail(PF_ERR_ARGUMENT, "null argument");
    *out = nullptr;
    return guarded([&] {
        *out = new pf_scenario{polyfilt::parse_scenario(json_text)};
        return PF_OK;
    });
}

void pf_scenario_free(pf_scenario* scenario)
{
    delete scenario;
}

pf_status pf_scenario_set_seed(pf_scenario* scenario, uint64_t seed)
{
    polyfilt::app::Overrides o;
    o.seed = seed;
    return overrides(scenario, o);
}

pf_status pf_scenario_set_sos_degree(pf_scenario* scenario, int half_degree)
{
    polyfilt::app::Overrides o;
    o.sos_half_degree = half_degree;
    return overrides(scenario, o);
}

pf_status pf_scenario_set_max_halfspaces(pf_scenario* scenario, size_t count)
{
    polyfilt::app::Overrides o;
    o.max_halfspaces = count;
    return overrides(scenario, o);
}

pf_status pf_scenario_set_points(pf_scenario* scenario, size_t count)
{
    polyfilt::app::Overrides o;
    o.points = count;
    return overrides(scenario, o);
}

pf_status pf_scenario_set_threads(pf_scenario* scenario, int threads)
{
    polyfilt::app::Overrides o;
    o.threads = threads;
    return overrides(scenario, o);
}

pf_status pf_scenario_horizon(const pf_scenario* scenario, size_t* horizon)
{
    if (!scenario || !horizon)
        return fail(PF_ERR_ARGUMENT, "null argument");
    *horizon = scenario->scenario.horizon;
    return PF_OK;
}

pf_status pf_simulate(const pf_scenario* scenario, const char* out_dir)
{
    if (!scenario || !out_dir)
        return fail(PF_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        polyfilt::app::run_simulate(scenario->scenario, out_dir);
        return PF_OK;
    });
}

pf_status pf_filter(const pf_scenario* scenario, const char* out_dir, size_t* failed_step)
{
    if (failed_step)
        *failed_step = 0;
    if (!scenario || !out_dir)
        return fail(PF_ERR_ARGUMENT, "null argument");
    return guarded(
        [&] {
            polyfilt::app::run_filter(scenario->scenario, out_dir);
            return PF_OK;
        },
        failed_step);
}

pf_status pf_verify(const char* out_dir, pf_verify_summary* summary)
{
    if (!out_dir)
        return fail(PF_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        const auto rep = polyfilt::app::run_verify(out_dir);
        if (summary)
        {
            *summary = {rep.checked, rep.failed, rep.max_identity_residual, rep.min_eigenvalue};
        }
        if (rep.checked == 0)
            return fail(PF_ERR_VERIFY, "no certificates found");
        if (!rep.ok())
        {
            std::string msg;
            for (const auto& f : rep.failures)
                msg += f + "\n";
            return fail(PF_ERR_VERIFY, msg);
        }
        return PF_OK;
    });
}

pf_status pf_plot(const char* out_dir, char* buf, size_t buf_size)
{
    if (!out_dir)
        return fail(PF_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        const std::string path = polyfilt::app::run_plot(out_dir).string();
        if (buf && buf_size > 0)
        {
            const std::size_t n = std::min(path.size(), buf_size - 1);
            std::memcpy(buf, path.data(), n);
            buf[n] = '\0';
        }
        return PF_OK;
    });
}

pf_status pf_report(const char* out_dir, char** text)
{
    if (!out_dir)
        return fail(PF_ERR_ARGUMENT, "null argument");
    if (text)
        *text = nullptr;
    return guarded([&] {
        const std::string table = polyfilt::app::run_report(out_dir);
        if (text)
        {
            *text = new char[table.size() + 1];
            std::memcpy(*text, table.c_str(), table.size() + 1);
        }
        return PF_OK;
    });
}

void pf_string_free(char* text)
{
    delete[] text;
}

pf_status pf_min_halfspace_offset(const char* constraints_json, const double* omega, size_t n_vars, int half_degree,
                                  double* nu)
{
    if (!constraints_json || !omega || !nu || n_vars == 0)
        return fail(PF_ERR_ARGUMENT, "null argument or zero dimension");
    return guarded([&] {
        const auto constraints = nlohmann::json::parse(constraints_json).get<std::vector<polyfilt::Polynomial>>();
        const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(omega, static_cast<Eigen::Index>(n_vars));
        const auto r = polyfilt::sos::min_halfspace_offset(n_vars, constraints, w, half_degree);
        if (r.status == polyfilt::sdp::Status::Unbounded)
            return fail(PF_ERR_INCONSISTENT, "constraint set is empty");
        if (!r.ok())
            return fail(PF_ERR_SDP, r.message.empty() ? polyfilt::sdp::to_string(r.status) : r.message);
        *nu = r.nu;
        return PF_OK;
    });
}

}  // extern "C"
