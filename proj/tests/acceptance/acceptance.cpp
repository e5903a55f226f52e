// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "models.hpp"
#include "polyfilt/filter.hpp"
#include "polyfilt/geometry.hpp"
#include "polyfilt/sdp.hpp"
#include "polyfilt/sos.hpp"
#include "sdp_instances.hpp"

using namespace polyfilt;
using Eigen::Vector2d;
using Eigen::VectorXd;

namespace {

struct Outcome
{
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Example 1 (cubic dynamics, y(1) = 0)

struct ExampleOne
{
    SystemModel model = testkit::cubic_example();
    SemialgebraicSet set;
    Vector2d omega{-1.0, -0.5};
    double nu = std::nan("");
    bool solved = false;
};

ExampleOne& example_one()
{
    static ExampleOne ex = [] {
        ExampleOne e;
        e.set = build_step_set(e.model, e.model.X0.constraints, VectorXd::Zero(1), 1);
        return e;
    }();
    return ex;
}

Outcome criterion_example_one()
{
    auto& ex = example_one();
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = sos::min_halfspace_offset(ex.set.n_vars, ex.set.constraints, ex.omega, 2);
    const double secs = seconds_since(t0);
    if (!r.ok())
    {
        return {false, fmt::format("solver status {}: {}", sdp::to_string(r.status), r.message)};
    }
    ex.nu = r.nu;
    ex.solved = true;
    const auto check = sos::verify_certificate(r.certificate, 1e-6, 1e-6);
    const bool pass = r.nu >= 0.40 && r.nu <= 0.50 && check.identity_residual <= 1e-6 && check.pass && secs < 30.0;
    return {pass, fmt::format("nu = {:.6f}, identity residual {:.2e}, {:.2f} s", r.nu, check.identity_residual, secs)};
}

// Points of X_1 drawn straight from the model: x(0) in the disk, w in the disk, keep if the
// measurement y = 0 is reachable.
std::vector<Vector2d> sample_x1(std::size_t count, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto disk = [&](double r) {
        while (true)
        {
            const Vector2d p(u(rng), u(rng));
            if (p.squaredNorm() <= 1.0)
                return Vector2d(r * p);
        }
    };
    std::vector<Vector2d> out;
    while (out.size() < count)
    {
        const Vector2d p = disk(0.2);
        const Vector2d w = disk(0.4);
        const Vector2d f(p[0] * p[0] * p[1] + p[0] * p[1] * p[1], 2.0 * p[0] * p[0] * p[1] + p[0] * p[1] * p[1]);
        const Vector2d x = f + w;
        if (std::abs(0.0 - (x[0] + x[1])) <= 0.5)
            out.push_back(x);
    }
    return out;
}

Outcome criterion_sampling_soundness()
{
    auto& ex = example_one();
    if (!ex.solved)
    {
        return {false, "no certified offset from the Example-1 half-space"};
    }
    const auto t0 = std::chrono::steady_clock::now();
    FilterConfig cfg;
    cfg.sos_half_degree = 2;
    cfg.points = 40;
    cfg.max_halfspaces = 12;
    cfg.seed = 3;
    auto state = initial_state(ex.model);
    StepResult step;
    try
    {
        step = filter_step(ex.model, state, VectorXd::Zero(1), cfg);
    }
    catch (const std::exception& e)
    {
        return {false, std::string("filter step failed: ") + e.what()};
    }
    const auto pts = sample_x1(10000, 99);
    std::vector<HalfSpace> checks{{ex.omega, ex.nu}};
    for (const auto& h : step.polytope.halfspaces())
        checks.push_back(h);
    std::size_t violations = 0;
    double worst = -1e300;
    for (const auto& x : pts)
    {
        for (const auto& h : checks)
        {
            const double excess = h.omega.dot(x) - h.nu;
            worst = std::max(worst, excess);
            violations += excess > 1e-5;
        }
    }
    const double secs = seconds_since(t0);
    return {violations == 0 && secs < 120.0,
            fmt::format("{} points x {} half-spaces, {} violations, max excess {:.2e}, {:.1f} s", pts.size(),
                        checks.size(), violations, worst, secs)};
}

// ---------------------------------------------------------------------------

Outcome criterion_lotka_volterra()
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto model = testkit::lotka_volterra();
    const std::size_t horizon = 40;
    // With this noise draw the predator count stays positive. Draws that push it below zero
    // make the true trajectory blow up within 40 steps.
    const auto truth = simulate(model, Vector2d(0.3, 0.8), horizon, 21);
    FilterConfig cfg;
    cfg.sos_half_degree = 2;
    cfg.points = 20;
    cfg.max_halfspaces = 8;
    cfg.mc_volume_points = 10000;
    cfg.seed = 7;
    auto state = initial_state(model);
    std::size_t inside = 0, smaller = 0, not_larger = 0, max_faces = 0;
    for (std::size_t k = 1; k <= horizon; ++k)
    {
        StepResult res;
        try
        {
            res = filter_step(model, state, truth.measurements.row(static_cast<Eigen::Index>(k - 1)).transpose(), cfg);
        }
        catch (const std::exception& e)
        {
            return {false, fmt::format("step {} failed: {}", k, e.what())};
        }
        inside += res.polytope.contains(truth.states.row(static_cast<Eigen::Index>(k)).transpose());
        not_larger += res.polytope_volume <= res.box_volume;
        smaller += res.polytope_volume < res.box_volume;
        max_faces = std::max(max_faces, res.polytope.size());
    }
    const double secs = seconds_since(t0);
    const bool pass = inside == horizon && not_larger == horizon && smaller >= 30 && max_faces <= 8 && secs < 1800.0;
    return {pass, fmt::format("truth inside {}/{}, volume <= box {}/{}, strictly smaller {}/{}, at most {} faces, "
                              "{:.1f} s",
                              inside, horizon, not_larger, horizon, smaller, horizon, max_faces, secs)};
}

// ---------------------------------------------------------------------------

Outcome criterion_sdp_oracles()
{
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> problems;

    {
        sdp::SdpProblem p;
        const auto y = p.add_scalar();
        const auto s = p.add_scalar(true);
        p.objective.scalars.push_back({y, 1.0});
        p.equalities.push_back({{{{y, 1.0}, {s, -1.0}}, {}}, 3.0});
        const auto sol = sdp::solve(p);
        if (sol.status != sdp::Status::Optimal || std::abs(sol.objective_value - 3.0) / 3.0 > 1e-6)
            problems.push_back(fmt::format("y >= 3 gave {}", sol.objective_value));
    }
    {
        sdp::SdpProblem p;
        const auto y = p.add_scalar();
        const auto b = p.add_block(2);
        p.objective.scalars.push_back({y, 1.0});
        p.equalities.push_back({{{{y, 1.0}}, {{b, 0, 0, -1.0}}}, 0.0});
        p.equalities.push_back({{{{y, 1.0}}, {{b, 1, 1, -1.0}}}, 0.0});
        p.equalities.push_back({{{}, {{b, 1, 0, 1.0}}}, 1.0});
        const auto sol = sdp::solve(p);
        if (sol.status != sdp::Status::Optimal || std::abs(sol.objective_value - 1.0) > 1e-6)
            problems.push_back(fmt::format("[[y,1],[1,y]] gave {}", sol.objective_value));
    }

    std::mt19937_64 rng(31337);
    const int instances = 24;
    double worst = 0.0;
    for (int i = 0; i < instances; ++i)
    {
        const std::vector<std::size_t> sides{2 + static_cast<std::size_t>(i % 3), 3, 4 + static_cast<std::size_t>(i % 2)};
        const auto inst = testkit::random_known_sdp(rng, sides, 5 + static_cast<std::size_t>(i % 6));
        const auto sol = sdp::solve(inst.problem);
        const double rel = std::abs(sol.objective_value - inst.optimum) / std::abs(inst.optimum);
        worst = std::max(worst, rel);
        if (sol.status != sdp::Status::Optimal || rel > 1e-6)
            problems.push_back(fmt::format("random instance {}: {} vs {}", i, sol.objective_value, inst.optimum));
    }
    const double secs = seconds_since(t0);
    std::string detail = fmt::format("2 analytic + {} random instances, worst relative error {:.2e}, {:.2f} s",
                                     instances, worst, secs);
    if (!problems.empty())
        detail += "; " + problems.front();
    return {problems.empty() && secs < 60.0, detail};
}

// ---------------------------------------------------------------------------
// Random convex polygons

struct Polygon
{
    std::vector<Vector2d> vertices;   // counter-clockwise
    SemialgebraicSet set;             // one affine constraint per edge
};

Polygon random_polygon(std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Polygon poly;
    const Vector2d center(4.0 * u(rng) - 2.0, 4.0 * u(rng) - 2.0);
    const double ax = 0.3 + 1.2 * u(rng), ay = 0.3 + 1.2 * u(rng);
    const int k = 3 + static_cast<int>(u(rng) * 6.0);
    std::vector<double> angles;
    for (int i = 0; i < k; ++i)
        angles.push_back(2.0 * M_PI * u(rng));
    std::sort(angles.begin(), angles.end());
    angles.erase(std::unique(angles.begin(), angles.end(), [](double a, double b) { return b - a < 0.05; }),
                 angles.end());
    if (angles.size() < 3)
        angles = {0.0, 2.1, 4.2};
    for (double a : angles)
        poly.vertices.push_back(center + Vector2d(ax * std::cos(a), ay * std::sin(a)));

    poly.set.n_vars = 2;
    const auto x = Polynomial::variable(2, 0), y = Polynomial::variable(2, 1);
    for (std::size_t i = 0; i < poly.vertices.size(); ++i)
    {
        const Vector2d& a = poly.vertices[i];
        const Vector2d& b = poly.vertices[(i + 1) % poly.vertices.size()];
        const Vector2d n = Vector2d(b[1] - a[1], a[0] - b[0]).normalized();   // outward for CCW order
        poly.set.constraints.push_back(n[0] * x + n[1] * y - Polynomial::constant(2, n.dot(a)));
    }
    return poly;
}

double support(const Polygon& p, const Vector2d& w)
{
    double best = -1e300;
    for (const auto& v : p.vertices)
        best = std::max(best, w.dot(v));
    return best;
}

// min over max|omega_i| = 1 of support(omega) - omega.p. Each of the four faces of the unit
// square is a segment on which the objective is convex piecewise linear, so its minimum sits
// at an endpoint or at a crossing of two vertex terms.
double separation_oracle(const Polygon& poly, const Vector2d& p)
{
    double best = 1e300;
    for (int fixed = 0; fixed < 2; ++fixed)
    {
        for (double sign : {1.0, -1.0})
        {
            const int free = 1 - fixed;
            std::vector<double> cands{-1.0, 1.0};
            for (std::size_t i = 0; i < poly.vertices.size(); ++i)
            {
                for (std::size_t j = i + 1; j < poly.vertices.size(); ++j)
                {
                    const Vector2d d = poly.vertices[i] - poly.vertices[j];
                    if (std::abs(d[free]) > 1e-14)
                    {
                        const double t = -sign * d[fixed] / d[free];
                        if (t > -1.0 && t < 1.0)
                            cands.push_back(t);
                    }
                }
            }
            for (double t : cands)
            {
                Vector2d w;
                w[fixed] = sign;
                w[free] = t;
                best = std::min(best, support(poly, w) - w.dot(p));
            }
        }
    }
    return best;
}

Outcome criterion_polygon_exactness()
{
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(5150);
    std::normal_distribution<double> g;
    double worst = 0.0;
    std::size_t failures = 0;
    for (int k = 0; k < 50; ++k)
    {
        const Polygon poly = random_polygon(rng);
        for (int d = 0; d < 50; ++d)
        {
            const Vector2d w = Vector2d(g(rng), g(rng)).normalized();
            const auto r = sos::min_halfspace_offset(2, poly.set.constraints, w, 1);
            if (!r.ok())
            {
                ++failures;
                continue;
            }
            const double err = std::abs(r.nu - support(poly, w));
            worst = std::max(worst, err);
            failures += err > 1e-5;
        }
    }
    const double secs = seconds_since(t0);
    return {failures == 0 && secs < 120.0,
            fmt::format("2500 directions, {} mismatches, worst |nu - vertex LP| {:.2e}, {:.1f} s", failures, worst,
                        secs)};
}

Outcome criterion_refinement_exactness()
{
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(8086);
    std::size_t disagreements = 0, excluded = 0, total = 0, failures = 0;
    for (int k = 0; k < 20; ++k)
    {
        const Polygon poly = random_polygon(rng);
        try
        {
            const auto box = bounding_box(poly.set, 2, 1, {}).box;
            Rng prng(1000 + static_cast<std::uint64_t>(k));
            const Eigen::MatrixXd pts = sample_uniform_box(box, 200, prng);
            const Polytope start = Polytope::from_box(box);
            const auto greedy = greedy_polytope(poly.set, 2, start, pts, 4, 1, {});
            const auto refined =
                refine_polytope(poly.set, 2, greedy.polytope, greedy.remaining, 200, 1, {}, 1e-7);
            for (Eigen::Index i = 0; i < pts.rows(); ++i)
            {
                const Vector2d p = pts.row(i).transpose();
                const bool oracle_out = separation_oracle(poly, p) < -1e-7;
                const bool ours_out = !refined.polytope.contains(p);
                disagreements += oracle_out != ours_out;
                excluded += oracle_out;
                ++total;
            }
        }
        catch (const std::exception& e)
        {
            ++failures;
        }
    }
    const double secs = seconds_since(t0);
    return {disagreements == 0 && failures == 0 && secs < 300.0,
            fmt::format("{} points, {} excluded by the oracle, {} disagreements, {} failed polygons, {:.1f} s", total,
                        excluded, disagreements, failures, secs)};
}

// ---------------------------------------------------------------------------

Outcome criterion_volume_calibration()
{
    const auto t0 = std::chrono::steady_clock::now();
    const Box square{Vector2d(0.0, 0.0), Vector2d(1.0, 1.0)};
    Polytope p = Polytope::from_box(square);
    p.add({Vector2d(0.6, 0.8), 0.7});   // cuts the square through its center
    Rng rng(424242);
    const double v = mc_volume(p, square, 100000, rng);
    const double secs = seconds_since(t0);
    return {std::abs(v - 0.5) <= 0.01 && secs < 5.0, fmt::format("estimate {:.5f}, {:.3f} s", v, secs)};
}

}  // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"example-1 half-space offset", criterion_example_one},
        {"soundness by sampling", criterion_sampling_soundness},
        {"lotka-volterra 40 steps", criterion_lotka_volterra},
        {"sdp oracle suite", criterion_sdp_oracles},
        {"exactness on polygons", criterion_polygon_exactness},
        {"refinement matches separation oracle", criterion_refinement_exactness},
        {"monte-carlo volume calibration", criterion_volume_calibration},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i)
    {
        Outcome o;
        try
        {
            o = criteria[i].second();
        }
        catch (const std::exception& e)
        {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
