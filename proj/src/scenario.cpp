#include "polyfilt/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "polyfilt/error.hpp"

namespace polyfilt {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what)
{
    throw ConfigError(where + ": " + what);
}

const json& field(const json& obj, const std::string& key, const std::string& where)
{
    if (!obj.is_object())
    {
        fail(where, "expected an object");
    }
    auto it = obj.find(key);
    if (it == obj.end())
    {
        fail(where + "/" + key, "missing required field");
    }
    return *it;
}

double number(const json& j, const std::string& where)
{
    if (!j.is_number())
    {
        fail(where, "expected a number, got " + std::string(j.type_name()));
    }
    return j.get<double>();
}

std::uint64_t unsigned_int(const json& j, const std::string& where)
{
    if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<long long>() < 0))
    {
        fail(where, "expected a non-negative integer");
    }
    return j.get<std::uint64_t>();
}

VectorXd vector(const json& j, const std::string& where, std::optional<std::size_t> len = std::nullopt)
{
    if (!j.is_array())
    {
        fail(where, "expected an array of numbers");
    }
    if (len && j.size() != *len)
    {
        fail(where, "expected " + std::to_string(*len) + " entries, got " + std::to_string(j.size()));
    }
    VectorXd v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
    {
        v[static_cast<Index>(i)] = number(j[i], where + "/" + std::to_string(i));
    }
    return v;
}

MatrixXd matrix(const json& j, std::size_t rows, std::size_t cols, const std::string& where)
{
    if (!j.is_array() || j.size() != rows)
    {
        fail(where, "expected " + std::to_string(rows) + " rows");
    }
    MatrixXd M(static_cast<Index>(rows), static_cast<Index>(cols));
    for (std::size_t i = 0; i < rows; ++i)
    {
        M.row(static_cast<Index>(i)) = vector(j[i], where + "/" + std::to_string(i), cols).transpose();
    }
    return M;
}

Box parse_box(const json& j, std::size_t n, const std::string& where)
{
    Box b{vector(field(j, "lower", where), where + "/lower", n), vector(field(j, "upper", where), where + "/upper", n)};
    if ((b.lower.array() > b.upper.array()).any())
    {
        fail(where, "lower bound exceeds upper bound");
    }
    return b;
}

std::vector<MatrixXd> matrix_table(const json& j, std::size_t rows, std::size_t cols, const std::string& where)
{
    if (!j.is_array())
    {
        fail(where, "expected an array of matrices");
    }
    std::vector<MatrixXd> out;
    for (std::size_t k = 0; k < j.size(); ++k)
    {
        out.push_back(matrix(j[k], rows, cols, where + "/" + std::to_string(k)));
    }
    return out;
}

std::size_t line_of(const std::string& text, std::size_t byte)
{
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

}  // namespace

ParsedSet parse_set(const json& j, std::size_t n, const std::string& where)
{
    if (!j.is_object())
    {
        fail(where, "expected an object describing a set");
    }
    ParsedSet out;
    if (j.contains("norm"))
    {
        const auto& kind = j.at("norm");
        const double r = number(field(j, "radius", where), where + "/radius");
        if (r < 0.0)
        {
            fail(where + "/radius", "radius must be non-negative");
        }
        VectorXd c = j.contains("center") ? vector(j.at("center"), where + "/center", n) : VectorXd::Zero(static_cast<Index>(n));
        if (kind == "inf")
        {
            out.set = inf_norm_ball(n, r, c);
        }
        else if (kind == "2")
        {
            out.set = two_norm_ball(n, r, c);
        }
        else
        {
            fail(where + "/norm", "expected \"inf\" or \"2\"");
        }
        out.box = cube(n, r, c);
        return out;
    }
    if (j.contains("box"))
    {
        out.box = parse_box(j.at("box"), n, where + "/box");
        out.set = box_set(*out.box);
        return out;
    }
    if (j.contains("constraints"))
    {
        const auto& cs = j.at("constraints");
        if (!cs.is_array() || cs.empty())
        {
            fail(where + "/constraints", "expected a non-empty array of polynomials");
        }
        out.set.n_vars = n;
        for (std::size_t i = 0; i < cs.size(); ++i)
        {
            const std::string w = where + "/constraints/" + std::to_string(i);
            Polynomial p;
            try
            {
                p = cs[i].get<Polynomial>();
            }
            catch (const std::exception& e)
            {
                fail(w, std::string("not a polynomial: ") + e.what());
            }
            if (p.n_vars() != n)
            {
                fail(w, "expected " + std::to_string(n) + " variables, got " + std::to_string(p.n_vars()));
            }
            out.set.constraints.push_back(std::move(p));
        }
        if (j.contains("sample_box"))
        {
            out.box = parse_box(j.at("sample_box"), n, where + "/sample_box");
        }
        return out;
    }
    fail(where, "expected one of \"norm\", \"box\" or \"constraints\"");
}

Scenario parse_scenario(const std::string& text, const std::string& origin)
{
    json root;
    try
    {
        root = json::parse(text);
    }
    catch (const json::parse_error& e)
    {
        throw ConfigError(origin + ":" + std::to_string(line_of(text, e.byte)) + ": invalid JSON (" + e.what() + ")");
    }

    Scenario sc;
    try
    {
        const auto version = unsigned_int(field(root, "version", ""), "/version");
        if (version != 1)
        {
            fail("/version", "unsupported version " + std::to_string(version));
        }
        sc.name = root.value("name", std::string("scenario"));

        const auto& m = field(root, "model", "");
        auto& model = sc.model;
        model.n = unsigned_int(field(m, "n", "/model"), "/model/n");
        model.m_out = unsigned_int(field(m, "m_out", "/model"), "/model/m_out");
        model.degree = static_cast<int>(unsigned_int(field(m, "degree", "/model"), "/model/degree"));
        if (model.n < 1 || model.m_out < 1 || model.degree < 1)
        {
            fail("/model", "n, m_out and degree must be at least 1");
        }
        const std::size_t cols = binomial(model.n + static_cast<std::size_t>(model.degree),
                                          static_cast<std::size_t>(model.degree));
        model.A = matrix(field(m, "A", "/model"), model.n, cols, "/model/A");
        model.C = matrix(field(m, "C", "/model"), model.m_out, cols, "/model/C");
        if (m.contains("A_table"))
        {
            model.A_table = matrix_table(m.at("A_table"), model.n, cols, "/model/A_table");
        }
        if (m.contains("C_table"))
        {
            model.C_table = matrix_table(m.at("C_table"), model.m_out, cols, "/model/C_table");
        }
        auto w = parse_set(field(m, "process_noise", "/model"), model.n, "/model/process_noise");
        auto v = parse_set(field(m, "measurement_noise", "/model"), model.m_out, "/model/measurement_noise");
        auto x0 = parse_set(field(m, "initial_set", "/model"), model.n, "/model/initial_set");
        model.W = std::move(w.set);
        model.V = std::move(v.set);
        model.X0 = std::move(x0.set);
        const bool have_boxes = w.box && v.box && x0.box;
        if (w.box)
        {
            model.W_box = *w.box;
        }
        if (v.box)
        {
            model.V_box = *v.box;
        }
        if (x0.box)
        {
            model.X0_box = *x0.box;
        }

        const json empty = json::object();
        const auto& f = root.contains("filter") ? root.at("filter") : empty;
        auto& cfg = sc.filter;
        if (f.contains("sos_half_degree"))
        {
            cfg.sos_half_degree = static_cast<int>(unsigned_int(f.at("sos_half_degree"), "/filter/sos_half_degree"));
            if (cfg.sos_half_degree < 1)
            {
                fail("/filter/sos_half_degree", "must be at least 1");
            }
        }
        if (f.contains("points"))
        {
            cfg.points = unsigned_int(f.at("points"), "/filter/points");
            if (cfg.points < 1)
            {
                fail("/filter/points", "must be at least 1");
            }
        }
        if (f.contains("max_halfspaces"))
        {
            cfg.max_halfspaces = unsigned_int(f.at("max_halfspaces"), "/filter/max_halfspaces");
        }
        if (f.contains("refine"))
        {
            if (!f.at("refine").is_boolean())
            {
                fail("/filter/refine", "expected true or false");
            }
            cfg.refine = f.at("refine").get<bool>();
        }
        if (f.contains("seed"))
        {
            cfg.seed = unsigned_int(f.at("seed"), "/filter/seed");
        }
        if (f.contains("mc_volume_points"))
        {
            cfg.mc_volume_points = unsigned_int(f.at("mc_volume_points"), "/filter/mc_volume_points");
        }
        if (f.contains("tol_exclude"))
        {
            cfg.tol_exclude = number(f.at("tol_exclude"), "/filter/tol_exclude");
        }
        if (f.contains("horizon"))
        {
            sc.horizon = unsigned_int(f.at("horizon"), "/filter/horizon");
        }
        if (f.contains("sdp"))
        {
            const auto& s = f.at("sdp");
            auto& o = cfg.sos.sdp;
            const std::string w2 = "/filter/sdp";
            if (!s.is_object())
            {
                fail(w2, "expected an object");
            }
            if (s.contains("tol_feas"))
                o.tol_feas = number(s.at("tol_feas"), w2 + "/tol_feas");
            if (s.contains("tol_gap"))
                o.tol_gap = number(s.at("tol_gap"), w2 + "/tol_gap");
            if (s.contains("tol_psd"))
                o.tol_psd = number(s.at("tol_psd"), w2 + "/tol_psd");
            if (s.contains("max_iterations"))
                o.max_iterations = static_cast<int>(unsigned_int(s.at("max_iterations"), w2 + "/max_iterations"));
            if (s.contains("max_variables"))
                o.max_variables = unsigned_int(s.at("max_variables"), w2 + "/max_variables");
            if (s.contains("tol_identity"))
                cfg.sos.tol_identity = number(s.at("tol_identity"), w2 + "/tol_identity");
        }
        if (f.contains("report_directions"))
        {
            const auto& dirs = f.at("report_directions");
            if (!dirs.is_array())
            {
                fail("/filter/report_directions", "expected an array of vectors");
            }
            for (std::size_t i = 0; i < dirs.size(); ++i)
            {
                sc.report_directions.push_back(
                    vector(dirs[i], "/filter/report_directions/" + std::to_string(i), model.n));
            }
        }

        if (root.contains("measurements"))
        {
            const auto& ms = root.at("measurements");
            if (!ms.is_array() || ms.empty())
            {
                fail("/measurements", "expected a non-empty array of measurement vectors");
            }
            sc.measurements = matrix(ms, ms.size(), model.m_out, "/measurements");
            if (!f.contains("horizon"))
            {
                sc.horizon = ms.size();
            }
            if (sc.horizon > ms.size())
            {
                fail("/filter/horizon", "exceeds the number of measurements");
            }
        }
        if (root.contains("simulation"))
        {
            const auto& s = root.at("simulation");
            SimulationSpec sim;
            sim.x0 = vector(field(s, "x0", "/simulation"), "/simulation/x0", model.n);
            if (s.contains("seed"))
            {
                sim.seed = unsigned_int(s.at("seed"), "/simulation/seed");
            }
            if (!have_boxes)
            {
                fail("/simulation", "simulation needs sample boxes for every set given by raw constraints");
            }
            sc.simulation = sim;
        }
        if (!sc.simulation && !sc.measurements)
        {
            fail("", "either \"simulation\" or \"measurements\" is required");
        }
        try
        {
            model.validate();
        }
        catch (const std::exception& e)
        {
            fail("/model", e.what());
        }
    }
    catch (const ConfigError& e)
    {
        throw ConfigError(origin + ": " + e.what());
    }
    catch (const json::exception& e)
    {
        throw ConfigError(origin + ": " + e.what());
    }
    return sc;
}

Scenario load_scenario(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
        throw std::ios_base::failure("cannot open scenario file " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str(), path);
}

}  // namespace polyfilt
