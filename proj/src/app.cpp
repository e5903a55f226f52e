#include "polyfilt/app.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <fmt/format.h>

#include "polyfilt/error.hpp"
#include "polyfilt/log.hpp"
#include "polyfilt/parallel.hpp"

namespace polyfilt::app {

namespace fs = std::filesystem;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text)
{
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
    {
        throw std::ios_base::failure("cannot write " + path.string());
    }
    out << text;
    if (!out)
    {
        throw std::ios_base::failure("write failed for " + path.string());
    }
}

void write_json(const fs::path& path, const json& j)
{
    write_text(path, j.dump(2) + "\n");
}

json read_json(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
        throw std::ios_base::failure("cannot open " + path.string());
    }
    try
    {
        return json::parse(in);
    }
    catch (const json::exception& e)
    {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

json matrix_json(const MatrixXd& M)
{
    json rows = json::array();
    for (Index i = 0; i < M.rows(); ++i)
    {
        rows.push_back(vector_to_json(M.row(i).transpose()));
    }
    return rows;
}

MatrixXd matrix_from_json(const json& j)
{
    if (j.empty())
    {
        return MatrixXd(0, 0);
    }
    const auto cols = static_cast<Index>(j.at(0).size());
    MatrixXd M(static_cast<Index>(j.size()), cols);
    for (std::size_t i = 0; i < j.size(); ++i)
    {
        const VectorXd r = vector_from_json(j.at(i));
        require_dims(r.size() == cols, "ragged matrix in JSON");
        M.row(static_cast<Index>(i)) = r.transpose();
    }
    return M;
}

std::string step_file(std::size_t k)
{
    return fmt::format("certificates/step_{:03d}.json", k);
}

json certificate_file(const StepResult& r)
{
    json certs = json::array();
    for (const auto& lc : r.certificates)
    {
        json c = lc.certificate;
        c.erase("constraints");
        c.erase("n_vars");
        c["label"] = lc.label;
        certs.push_back(std::move(c));
    }
    return {{"step", r.step},
            {"set", {{"n_vars", r.step_set.n_vars}, {"constraints", r.step_set.constraints}}},
            {"certificates", certs}};
}

json trajectory_json(const Scenario& sc, const Trajectory& t)
{
    return {{"scenario", sc.name},
            {"states", matrix_json(t.states)},
            {"measurements", matrix_json(t.measurements)},
            {"process_noise", matrix_json(t.process_noise)},
            {"measurement_noise", matrix_json(t.measurement_noise)}};
}

std::string trajectory_csv(const SystemModel& m, const Trajectory& t)
{
    std::ostringstream out;
    out << std::setprecision(17);
    out << "k";
    for (std::size_t i = 1; i <= m.n; ++i)
        out << ",x" << i;
    for (std::size_t i = 1; i <= m.m_out; ++i)
        out << ",y" << i;
    for (std::size_t i = 1; i <= m.n; ++i)
        out << ",w" << i;
    for (std::size_t i = 1; i <= m.m_out; ++i)
        out << ",v" << i;
    out << "\n";
    for (Index k = 0; k < t.states.rows(); ++k)
    {
        out << k;
        for (Index i = 0; i < t.states.cols(); ++i)
            out << "," << t.states(k, i);
        // y(k) and v(k) exist from k = 1; w(k) drives the step into k + 1.
        for (Index i = 0; i < t.measurements.cols(); ++i)
        {
            out << ",";
            if (k >= 1)
                out << t.measurements(k - 1, i);
        }
        for (Index i = 0; i < t.process_noise.cols(); ++i)
        {
            out << ",";
            if (k < t.process_noise.rows())
                out << t.process_noise(k, i);
        }
        for (Index i = 0; i < t.measurement_noise.cols(); ++i)
        {
            out << ",";
            if (k >= 1)
                out << t.measurement_noise(k - 1, i);
        }
        out << "\n";
    }
    return out.str();
}

void write_trajectory(const Scenario& sc, const Trajectory& t, const fs::path& out)
{
    write_json(out / "trajectory.json", trajectory_json(sc, t));
    write_text(out / "trajectory.csv", trajectory_csv(sc.model, t));
}

}  // namespace

void apply(Scenario& sc, const Overrides& o)
{
    if (o.seed)
    {
        sc.filter.seed = *o.seed;
        if (sc.simulation)
        {
            sc.simulation->seed = *o.seed;
        }
    }
    if (o.sos_half_degree)
    {
        if (*o.sos_half_degree < 1)
        {
            throw std::invalid_argument("--sos-degree must be at least 1");
        }
        sc.filter.sos_half_degree = *o.sos_half_degree;
    }
    if (o.max_halfspaces)
    {
        sc.filter.max_halfspaces = *o.max_halfspaces;
    }
    if (o.points)
    {
        if (*o.points < 1)
        {
            throw std::invalid_argument("--points must be at least 1");
        }
        sc.filter.points = *o.points;
    }
    if (o.threads)
    {
        sc.filter.threads = resolve_threads(*o.threads);
    }
}

Trajectory run_simulate(const Scenario& sc, const fs::path& out)
{
    if (!sc.simulation)
    {
        throw ConfigError("scenario \"" + sc.name + "\" has no simulation section");
    }
    const Trajectory t = simulate(sc.model, sc.simulation->x0, sc.horizon, sc.simulation->seed);
    write_trajectory(sc, t, out);
    log::info("simulated {} steps into {}", sc.horizon, out.string());
    return t;
}

FilterOutcome run_filter(const Scenario& sc, const fs::path& out)
{
    FilterOutcome outcome;
    MatrixXd ys;
    if (sc.simulation)
    {
        outcome.truth = run_simulate(sc, out);
        ys = outcome.truth->measurements;
    }
    else
    {
        ys = sc.measurements->topRows(static_cast<Index>(sc.horizon));
        Trajectory t;
        t.measurements = ys;
        write_trajectory(sc, t, out);
    }

    json steps = json::array();
    json timings = json::array();
    auto write_summary = [&](const std::string& status, std::optional<std::size_t> failed_step, const std::string& error) {
        json j = {{"scenario", sc.name},
                  {"n", sc.model.n},
                  {"sos_half_degree", sc.filter.half_degree_for(sc.model)},
                  {"points", sc.filter.points},
                  {"max_halfspaces", sc.filter.max_halfspaces},
                  {"seed", sc.filter.seed},
                  {"status", status},
                  {"steps", steps}};
        if (failed_step)
        {
            j["failed_step"] = *failed_step;
            j["error"] = error;
        }
        write_json(out / "filter.json", j);
        write_json(out / "timings.json", timings);
    };

    FilterState state = initial_state(sc.model);
    const int d = sc.filter.half_degree_for(sc.model);
    for (std::size_t k = 1; k <= sc.horizon; ++k)
    {
        StepResult res;
        try
        {
            res = filter_step(sc.model, state, ys.row(static_cast<Index>(k - 1)).transpose(), sc.filter);
        }
        catch (const InconsistentMeasurement& e)
        {
            write_summary("inconsistent_measurement", e.step(), e.what());
            throw;
        }
        catch (const SdpFailure& e)
        {
            write_summary("sdp_failure", e.step(), e.what());
            throw;
        }

        json rec = {{"step", res.step},
                    {"measurement", vector_to_json(res.measurement)},
                    {"box", res.box},
                    {"polytope", res.polytope},
                    {"greedy_count", res.greedy_count},
                    {"refine_count", res.refine_count},
                    {"box_volume", res.box_volume},
                    {"polytope_volume", res.polytope_volume}};

        json dirs = json::array();
        for (std::size_t i = 0; i < sc.report_directions.size(); ++i)
        {
            sos::SosOptions opts = sc.filter.sos;
            opts.frame = res.frame;
            const auto r = sos::min_halfspace_offset(res.step_set.n_vars, res.step_set.constraints,
                                                     sc.report_directions[i], d, opts);
            if (!r.ok())
            {
                write_summary("sdp_failure", k, "report direction " + std::to_string(i + 1));
                throw SdpFailure(k, r.status, "report direction " + std::to_string(i + 1) + ": " + sdp::to_string(r.status));
            }
            dirs.push_back({{"omega", vector_to_json(sc.report_directions[i])}, {"nu", r.nu}});
            res.certificates.push_back({"direction" + std::to_string(i + 1), r.certificate});
        }
        if (!dirs.empty())
        {
            rec["directions"] = dirs;
        }

        json labels = json::array();
        for (const auto& c : res.certificates)
        {
            labels.push_back(c.label);
        }
        rec["certificates"] = step_file(k);
        rec["certificate_labels"] = labels;
        if (outcome.truth)
        {
            const VectorXd x = outcome.truth->states.row(static_cast<Index>(k)).transpose();
            rec["true_state"] = vector_to_json(x);
            rec["contains_true_state"] = res.polytope.contains(x, 1e-6);
        }
        write_json(out / step_file(k), certificate_file(res));
        steps.push_back(std::move(rec));
        timings.push_back({{"step", k},
                           {"box", res.times.box},
                           {"greedy", res.times.greedy},
                           {"refine", res.times.refine},
                           {"volume", res.times.volume}});
        outcome.steps.push_back(std::move(res));
    }
    write_summary("ok", std::nullopt, "");
    return outcome;
}

VerifyReport run_verify(const fs::path& out, double tol_identity, double tol_psd)
{
    const json summary = read_json(out / "filter.json");
    VerifyReport rep;
    rep.min_eigenvalue = std::numeric_limits<double>::infinity();
    for (const auto& rec : summary.at("steps"))
    {
        const auto k = rec.at("step").get<std::size_t>();
        const json file = read_json(out / rec.at("certificates").get<std::string>());
        const auto& set = file.at("set");
        const auto n_vars = set.at("n_vars").get<std::size_t>();
        const auto constraints = set.at("constraints").get<std::vector<Polynomial>>();
        const Polytope poly = rec.at("polytope").get<Polytope>();
        const auto& certs = file.at("certificates");
        for (std::size_t i = 0; i < certs.size(); ++i)
        {
            json c = certs[i];
            c["n_vars"] = n_vars;
            c["constraints"] = constraints;
            const auto cert = c.get<sos::Certificate>();
            const auto label = c.value("label", std::to_string(i));
            const auto check = sos::verify_certificate(cert, tol_identity, tol_psd);
            ++rep.checked;
            rep.max_identity_residual = std::max(rep.max_identity_residual, check.identity_residual);
            for (double l : check.min_eigenvalues)
            {
                rep.min_eigenvalue = std::min(rep.min_eigenvalue, l);
            }
            std::string problem;
            if (!check.pass)
            {
                problem = fmt::format("identity residual {:.3e}, min eigenvalue {:.3e}", check.identity_residual,
                                      *std::min_element(check.min_eigenvalues.begin(), check.min_eigenvalues.end()));
            }
            else if (i < poly.size())
            {
                // The i-th certificate must certify the i-th half-space of the polytope.
                const auto& h = poly.halfspaces()[i];
                const bool same = cert.nu == h.nu && cert.omega.head(h.omega.size()) == h.omega &&
                                  cert.omega.tail(cert.omega.size() - h.omega.size()).isZero(0.0);
                if (!same)
                {
                    problem = "does not match half-space " + std::to_string(i + 1) + " of the polytope";
                }
            }
            if (!problem.empty())
            {
                ++rep.failed;
                rep.failures.push_back(fmt::format("step {} certificate {}: {}", k, label, problem));
            }
        }
        if (certs.size() < poly.size())
        {
            ++rep.failed;
            rep.failures.push_back(fmt::format("step {}: {} half-spaces but only {} certificates", k, poly.size(),
                                               certs.size()));
        }
    }
    if (rep.checked == 0)
    {
        rep.min_eigenvalue = 0.0;
    }
    return rep;
}

std::vector<Eigen::Vector2d> clip_polygon(const Polytope& polytope, const Box& box)
{
    require_dims(box.dim() == 2, "clip_polygon: two-dimensional boxes only");
    std::vector<Eigen::Vector2d> poly{{box.lower[0], box.lower[1]},
                                      {box.upper[0], box.lower[1]},
                                      {box.upper[0], box.upper[1]},
                                      {box.lower[0], box.upper[1]}};
    for (const auto& h : polytope.halfspaces())
    {
        require_dims(h.omega.size() == 2, "clip_polygon: two-dimensional half-spaces only");
        std::vector<Eigen::Vector2d> next;
        for (std::size_t i = 0; i < poly.size(); ++i)
        {
            const auto& a = poly[i];
            const auto& b = poly[(i + 1) % poly.size()];
            const double fa = h.omega.dot(a) - h.nu;
            const double fb = h.omega.dot(b) - h.nu;
            if (fa <= 0.0)
            {
                next.push_back(a);
            }
            if ((fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0))
            {
                next.push_back(a + (b - a) * (fa / (fa - fb)));
            }
        }
        poly = std::move(next);
        if (poly.empty())
        {
            break;
        }
    }
    return poly;
}

fs::path run_plot(const fs::path& out)
{
    const json summary = read_json(out / "filter.json");
    if (summary.at("n").get<std::size_t>() != 2)
    {
        throw std::invalid_argument("plot supports two-dimensional states only");
    }
    MatrixXd states(0, 2);
    if (fs::exists(out / "trajectory.json"))
    {
        const auto tj = read_json(out / "trajectory.json");
        const MatrixXd s = matrix_from_json(tj.at("states"));
        if (s.cols() == 2)
        {
            states = s;
        }
    }

    std::vector<Box> boxes;
    std::vector<Polytope> polys;
    for (const auto& rec : summary.at("steps"))
    {
        boxes.push_back(rec.at("box").get<Box>());
        polys.push_back(rec.at("polytope").get<Polytope>());
    }
    Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector2d hi = -lo;
    for (const auto& b : boxes)
    {
        lo = lo.cwiseMin(b.lower);
        hi = hi.cwiseMax(b.upper);
    }
    for (Index i = 0; i < states.rows(); ++i)
    {
        lo = lo.cwiseMin(states.row(i).transpose());
        hi = hi.cwiseMax(states.row(i).transpose());
    }
    if (!lo.allFinite())
    {
        lo.setZero();
        hi.setOnes();
    }
    const Eigen::Vector2d span = (hi - lo).cwiseMax(1e-9);
    lo -= 0.05 * span;
    hi += 0.05 * span;

    constexpr double W = 720.0;
    constexpr double H = 720.0;
    constexpr double M = 60.0;
    auto px = [&](const Eigen::Vector2d& p) {
        return Eigen::Vector2d(M + (p[0] - lo[0]) / (hi[0] - lo[0]) * (W - 2 * M),
                               H - M - (p[1] - lo[1]) / (hi[1] - lo[1]) * (H - 2 * M));
    };

    std::ostringstream svg;
    svg << std::setprecision(6);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 "
        << W << " " << H << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<rect x=\"" << M << "\" y=\"" << M << "\" width=\"" << W - 2 * M << "\" height=\"" << H - 2 * M
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << W / 2 << "\" y=\"" << H - 20 << "\" text-anchor=\"middle\" font-size=\"14\">x1 ["
        << lo[0] << ", " << hi[0] << "]</text>\n";
    svg << "<text x=\"20\" y=\"" << H / 2 << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 20 "
        << H / 2 << ")\">x2 [" << lo[1] << ", " << hi[1] << "]</text>\n";
    for (std::size_t k = 0; k < boxes.size(); ++k)
    {
        const auto a = px(boxes[k].lower);
        const auto b = px(boxes[k].upper);
        svg << "<rect x=\"" << a[0] << "\" y=\"" << b[1] << "\" width=\"" << b[0] - a[0] << "\" height=\""
            << a[1] - b[1] << "\" fill=\"none\" stroke=\"#4a7bd0\" stroke-width=\"0.8\"/>\n";
        const auto pts = clip_polygon(polys[k], boxes[k]);
        if (!pts.empty())
        {
            svg << "<polygon points=\"";
            for (const auto& p : pts)
            {
                const auto q = px(p);
                svg << q[0] << "," << q[1] << " ";
            }
            svg << "\" fill=\"#e07b39\" fill-opacity=\"0.35\" stroke=\"#b3541e\" stroke-width=\"0.8\"/>\n";
        }
    }
    if (states.rows() > 0)
    {
        svg << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1\" points=\"";
        for (Index i = 0; i < states.rows(); ++i)
        {
            const auto q = px(states.row(i).transpose());
            svg << q[0] << "," << q[1] << " ";
        }
        svg << "\"/>\n";
        for (Index i = 0; i < states.rows(); ++i)
        {
            const auto q = px(states.row(i).transpose());
            svg << "<circle cx=\"" << q[0] << "\" cy=\"" << q[1] << "\" r=\"2\" fill=\"black\"/>\n";
        }
    }
    svg << "</svg>\n";
    const fs::path path = out / "plot.svg";
    write_text(path, svg.str());
    return path;
}

std::string run_report(const fs::path& out)
{
    const json summary = read_json(out / "filter.json");
    const auto n = summary.at("n").get<std::size_t>();
    std::ostringstream csv;
    std::ostringstream table;
    csv << std::setprecision(17) << "step";
    table << fmt::format("{:>5}", "step");
    for (std::size_t i = 1; i <= n; ++i)
    {
        csv << ",width_x" << i;
        table << fmt::format(" {:>12}", "width x" + std::to_string(i));
    }
    csv << ",box_volume,polytope_volume,ratio,halfspaces\n";
    table << fmt::format(" {:>13} {:>15} {:>7} {:>10}\n", "box volume", "polytope volume", "ratio", "halfspaces");
    for (const auto& rec : summary.at("steps"))
    {
        const Box b = rec.at("box").get<Box>();
        const double bv = rec.at("box_volume").get<double>();
        const double pv = rec.at("polytope_volume").get<double>();
        const double ratio = bv > 0.0 ? pv / bv : 1.0;
        const auto hs = rec.at("polytope").at("halfspaces").size();
        const auto k = rec.at("step").get<std::size_t>();
        csv << k;
        table << fmt::format("{:>5}", k);
        for (std::size_t i = 0; i < n; ++i)
        {
            const double w = b.upper[static_cast<Index>(i)] - b.lower[static_cast<Index>(i)];
            csv << "," << w;
            table << fmt::format(" {:>12.6g}", w);
        }
        csv << "," << bv << "," << pv << "," << ratio << "," << hs << "\n";
        table << fmt::format(" {:>13.6g} {:>15.6g} {:>7.3f} {:>10}\n", bv, pv, ratio, hs);
    }
    write_text(out / "report.csv", csv.str());
    return table.str();
}

}  // namespace polyfilt::app
