#include "polyfilt/filter.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "polyfilt/error.hpp"
#include "polyfilt/log.hpp"
#include "polyfilt/parallel.hpp"

namespace polyfilt {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Polynomial> linear_maps(const MatrixXd& M, std::size_t n, int degree)
{
    const MonomialBasis basis(n, degree);
    std::vector<Polynomial> out;
    for (Index i = 0; i < M.rows(); ++i)
    {
        Polynomial p(n);
        for (std::size_t j = 0; j < basis.size(); ++j)
        {
            const double c = M(i, static_cast<Index>(j));
            if (c != 0.0)
            {
                p = p + Polynomial::monomial(basis[j], c);
            }
        }
        out.push_back(std::move(p));
    }
    return out;
}

Eigen::MatrixXd rows_inside(const Polytope& p, const MatrixXd& points)
{
    std::vector<Index> keep;
    for (Index i = 0; i < points.rows(); ++i)
    {
        if (p.contains(points.row(i).transpose()))
        {
            keep.push_back(i);
        }
    }
    MatrixXd out(static_cast<Index>(keep.size()), points.cols());
    for (std::size_t i = 0; i < keep.size(); ++i)
    {
        out.row(static_cast<Index>(i)) = points.row(keep[i]);
    }
    return out;
}

std::string axis_label(std::size_t i, bool upper)
{
    return std::string(upper ? "box+x" : "box-x") + std::to_string(i + 1);
}

}  // namespace

// ---------------------------------------------------------------------------
// Model and configuration

void SystemModel::validate() const
{
    require_dims(n >= 1, "model: state dimension must be >= 1");
    require_dims(degree >= 1, "model: degree must be >= 1");
    const auto cols = static_cast<Index>(binomial(n + static_cast<std::size_t>(degree), static_cast<std::size_t>(degree)));
    auto check = [&](const MatrixXd& M, std::size_t rows, const char* what) {
        require_dims(M.rows() == static_cast<Index>(rows) && M.cols() == cols,
                     std::string("model: ") + what + " must be " + std::to_string(rows) + " x " + std::to_string(cols));
    };
    check(A, n, "A");
    check(C, m_out, "C");
    for (const auto& M : A_table)
    {
        check(M, n, "A table entry");
    }
    for (const auto& M : C_table)
    {
        check(M, m_out, "C table entry");
    }
    require_dims(W.n_vars == n, "model: process-noise set must have n variables");
    require_dims(V.n_vars == m_out, "model: measurement-noise set must have m_out variables");
    require_dims(X0.n_vars == n, "model: initial set must have n variables");
    for (const auto* s : {&W, &V, &X0})
    {
        if (s->constraints.empty())
        {
            throw std::invalid_argument("model: noise and initial sets need at least one constraint");
        }
        for (const auto& h : s->constraints)
        {
            require_dims(h.n_vars() == s->n_vars, "model: constraint variable count");
        }
    }
}

const MatrixXd& SystemModel::A_at(std::size_t step) const
{
    return step >= 1 && step - 1 < A_table.size() ? A_table[step - 1] : A;
}

const MatrixXd& SystemModel::C_at(std::size_t step) const
{
    return step >= 1 && step - 1 < C_table.size() ? C_table[step - 1] : C;
}

std::vector<Polynomial> SystemModel::dynamics(std::size_t step) const
{
    return linear_maps(A_at(step), n, degree);
}

std::vector<Polynomial> SystemModel::output(std::size_t step) const
{
    return linear_maps(C_at(step), n, degree);
}

VectorXd SystemModel::propagate(const VectorXd& x, std::size_t step) const
{
    require_dims(static_cast<std::size_t>(x.size()) == n, "propagate: state dimension");
    const MonomialBasis basis(n, degree);
    return A_at(step) * basis.evaluate({x.data(), n});
}

VectorXd SystemModel::measure(const VectorXd& x, std::size_t step) const
{
    require_dims(static_cast<std::size_t>(x.size()) == n, "measure: state dimension");
    const MonomialBasis basis(n, degree);
    return C_at(step) * basis.evaluate({x.data(), n});
}

int FilterConfig::half_degree_for(const SystemModel& model) const
{
    return sos_half_degree > 0 ? sos_half_degree : (model.degree + 1) / 2 + 1;
}

void FilterConfig::validate() const
{
    if (points < 1)
    {
        throw std::invalid_argument("filter: points must be >= 1");
    }
    if (sos_half_degree < 0)
    {
        throw std::invalid_argument("filter: SOS half-degree must be >= 1 (or 0 for automatic)");
    }
}

FilterState initial_state(const SystemModel& model)
{
    FilterState s;
    s.prior = model.X0.constraints;
    return s;
}

InconsistentMeasurement::InconsistentMeasurement(std::size_t step, const std::string& what)
    : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step)
{
}

SdpFailure::SdpFailure(std::size_t step, sdp::Status status, const std::string& what)
    : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step), status_(status)
{
}

// ---------------------------------------------------------------------------
// Step set and box

SemialgebraicSet build_step_set(const SystemModel& model, const std::vector<Polynomial>& prior, const VectorXd& y,
                                std::size_t step)
{
    const std::size_t n = model.n;
    require_dims(static_cast<std::size_t>(y.size()) == model.m_out, "measurement length differs from m_out");
    std::vector<std::size_t> current(n);
    std::vector<std::size_t> previous(n);
    std::iota(current.begin(), current.end(), 0);
    std::iota(previous.begin(), previous.end(), n);

    SemialgebraicSet set;
    set.n_vars = 2 * n;
    for (const auto& h : prior)
    {
        require_dims(h.n_vars() == n, "prior constraint must have n variables");
        set.constraints.push_back(h.embed(2 * n, previous));
    }

    const auto f = model.dynamics(step);
    std::vector<Polynomial> w_images;
    for (std::size_t i = 0; i < n; ++i)
    {
        w_images.push_back(Polynomial::variable(2 * n, i) - f[i].embed(2 * n, previous));
    }
    for (const auto& h : model.W.constraints)
    {
        set.constraints.push_back(h.substitute(w_images));
    }

    const auto g = model.output(step);
    std::vector<Polynomial> v_images;
    for (std::size_t i = 0; i < model.m_out; ++i)
    {
        v_images.push_back(Polynomial::constant(2 * n, y[static_cast<Index>(i)]) - g[i].embed(2 * n, current));
    }
    for (const auto& h : model.V.constraints)
    {
        set.constraints.push_back(h.substitute(v_images));
    }
    return set;
}

BoxResult bounding_box(const SemialgebraicSet& set, std::size_t dim, int sos_half_degree,
                       const sos::SosOptions& options, int threads, std::size_t step)
{
    require_dims(dim >= 1 && dim <= set.n_vars, "bounding box: dimension out of range");
    auto results = parallel_map(2 * dim, threads, [&](std::size_t job) {
        VectorXd w = VectorXd::Zero(static_cast<Index>(dim));
        w[static_cast<Index>(job / 2)] = job % 2 == 0 ? 1.0 : -1.0;
        return sos::min_halfspace_offset(set.n_vars, set.constraints, w, sos_half_degree, options);
    });

    BoxResult out;
    out.box.lower = VectorXd::Zero(static_cast<Index>(dim));
    out.box.upper = VectorXd::Zero(static_cast<Index>(dim));
    for (std::size_t job = 0; job < results.size(); ++job)
    {
        const auto& r = results[job];
        const std::size_t i = job / 2;
        const bool upper = job % 2 == 0;
        if (r.status == sdp::Status::Unbounded)
        {
            throw InconsistentMeasurement(step, "the step set is empty (" + axis_label(i, upper) + " unbounded below)");
        }
        if (!r.ok())
        {
            throw SdpFailure(step, r.status,
                             "bounding-box direction " + axis_label(i, upper) + ": " + sdp::to_string(r.status) +
                                 (r.message.empty() ? "" : " (" + r.message + ")"));
        }
        if (upper)
        {
            out.box.upper[static_cast<Index>(i)] = r.nu;
        }
        else
        {
            out.box.lower[static_cast<Index>(i)] = -r.nu;
        }
        out.certificates.push_back({axis_label(i, upper), r.certificate});
    }
    for (std::size_t i = 0; i < dim; ++i)
    {
        const auto k = static_cast<Index>(i);
        if (out.box.lower[k] > out.box.upper[k] + 1e-9)
        {
            throw InconsistentMeasurement(step, "bounding box is empty along x" + std::to_string(i + 1));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Polytope construction

std::optional<HalfSpaceChoice> greedy_halfspace(const SemialgebraicSet& set, std::size_t dim, const MatrixXd& points,
                                                int sos_half_degree, const sos::SosOptions& options, int threads)
{
    auto results = parallel_map(2, threads, [&](std::size_t job) {
        sos::ContainmentSpec spec;
        spec.n_vars = set.n_vars;
        spec.constraints = set.constraints;
        spec.sos_half_degree = sos_half_degree;
        spec.direction = sos::DirectionSpec::normalized(dim, 0, job == 0 ? 1.0 : -1.0, false);
        spec.objective = sos::Objective::Hinge;
        spec.points = points;
        return sos::solve_containment(spec, options);
    });
    std::optional<HalfSpaceChoice> best;
    for (const auto& r : results)
    {
        if (!r.ok())
        {
            log::debug("greedy split omega_1 = {:+.0f}: {} {}", r.omega.size() > 0 ? r.omega[0] : 0.0,
                       sdp::to_string(r.status), r.message);
            continue;
        }
        if (!best || r.objective < best->objective)
        {
            best = HalfSpaceChoice{{r.omega, r.nu}, r.objective, r.certificate};
        }
    }
    return best;
}

PolytopeResult greedy_polytope(const SemialgebraicSet& set, std::size_t dim, const Polytope& start,
                               const MatrixXd& points, std::size_t budget, int sos_half_degree,
                               const sos::SosOptions& options, int threads)
{
    PolytopeResult out;
    out.polytope = start;
    out.remaining = rows_inside(start, points);
    while (out.added < budget && out.remaining.rows() > 0)
    {
        auto choice = greedy_halfspace(set, dim, out.remaining, sos_half_degree, options, threads);
        if (!choice)
        {
            log::warn("greedy half-space: no split solved; stopping with {} added", out.added);
            break;
        }
        Polytope next = out.polytope;
        next.add(choice->halfspace);
        MatrixXd kept = rows_inside(next, out.remaining);
        if (kept.rows() == out.remaining.rows())
        {
            log::debug("greedy half-space omega = ({}), nu = {:.6g} excludes no point; stopping",
                       fmt::join(choice->halfspace.omega.data(), choice->halfspace.omega.data() + dim, ", "),
                       choice->halfspace.nu);
            break;
        }
        log::debug("greedy half-space {}: {} -> {} points", out.added + 1, out.remaining.rows(), kept.rows());
        out.polytope = std::move(next);
        out.remaining = std::move(kept);
        ++out.added;
        out.certificates.push_back({"greedy" + std::to_string(out.added), std::move(choice->certificate)});
    }
    return out;
}

std::optional<HalfSpaceChoice> separating_halfspace(const SemialgebraicSet& set, std::size_t dim,
                                                    const VectorXd& point, int sos_half_degree,
                                                    const sos::SosOptions& options, int threads)
{
    require_dims(static_cast<std::size_t>(point.size()) == dim, "separation: point dimension");
    auto results = parallel_map(2 * dim, threads, [&](std::size_t job) {
        sos::ContainmentSpec spec;
        spec.n_vars = set.n_vars;
        spec.constraints = set.constraints;
        spec.sos_half_degree = sos_half_degree;
        spec.direction = sos::DirectionSpec::normalized(dim, job / 2, job % 2 == 0 ? 1.0 : -1.0, true);
        spec.objective = sos::Objective::Separate;
        spec.points = point.transpose();
        return sos::solve_containment(spec, options);
    });
    std::optional<HalfSpaceChoice> best;
    for (const auto& r : results)
    {
        if (!r.ok())
        {
            continue;
        }
        if (!best || r.objective < best->objective)
        {
            best = HalfSpaceChoice{{r.omega, r.nu}, r.objective, r.certificate};
        }
    }
    return best;
}

PolytopeResult refine_polytope(const SemialgebraicSet& set, std::size_t dim, const Polytope& start,
                               const MatrixXd& points, std::size_t budget, int sos_half_degree,
                               const sos::SosOptions& options, double tol_exclude, int threads)
{
    PolytopeResult out;
    out.polytope = start;
    for (Index i = 0; i < points.rows() && out.added < budget; ++i)
    {
        const VectorXd p = points.row(i).transpose();
        if (!out.polytope.contains(p))
        {
            continue;
        }
        auto choice = separating_halfspace(set, dim, p, sos_half_degree, options, threads);
        if (!choice)
        {
            log::warn("refinement: no separation problem solved for point {}; skipped", i);
            continue;
        }
        if (choice->objective < -tol_exclude)
        {
            out.polytope.add(choice->halfspace);
            ++out.added;
            out.certificates.push_back({"refine" + std::to_string(out.added), std::move(choice->certificate)});
        }
    }
    out.remaining = rows_inside(out.polytope, points);
    return out;
}

double polytope_depth(const Polytope& polytope, const sdp::Options& options)
{
    const std::size_t n = polytope.dim();
    sdp::SdpProblem p;
    std::vector<std::size_t> x(n);
    for (auto& v : x)
    {
        v = p.add_scalar();
    }
    const auto t = p.add_scalar();
    for (const auto& h : polytope.halfspaces())
    {
        sdp::Equality eq;
        for (std::size_t j = 0; j < n; ++j)
        {
            eq.lhs.scalars.push_back({x[j], h.omega[static_cast<Index>(j)]});
        }
        eq.lhs.scalars.push_back({t, h.omega.norm()});
        eq.lhs.scalars.push_back({p.add_scalar(true), 1.0});
        eq.rhs = h.nu;
        p.equalities.push_back(std::move(eq));
    }
    p.equalities.push_back({{{{t, 1.0}, {p.add_scalar(true), 1.0}}, {}}, 1.0});
    p.objective.scalars.push_back({t, -1.0});
    const auto sol = sdp::solve(p, options);
    if (sol.status != sdp::Status::Optimal)
    {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return sol.scalars[static_cast<Index>(t)];
}

// ---------------------------------------------------------------------------
// Recursion

sos::Frame step_frame(const SystemModel& model, const Box& prior_box, std::size_t step)
{
    const std::size_t n = model.n;
    require_dims(prior_box.dim() == n, "step frame: prior box dimension");
    // Grid with three nodes per axis (lower, middle, upper), or corners plus center in
    // higher dimensions where 3^n gets large.
    const std::size_t nodes = n <= 6 ? 3 : 2;
    std::size_t count = 1;
    for (std::size_t i = 0; i < n; ++i)
        count *= nodes;
    VectorXd lo = VectorXd::Constant(static_cast<Index>(n), std::numeric_limits<double>::infinity());
    VectorXd hi = -lo;
    auto visit = [&](const VectorXd& p) {
        const VectorXd x = model.propagate(p, step);
        lo = lo.cwiseMin(x);
        hi = hi.cwiseMax(x);
    };
    for (std::size_t c = 0; c < count; ++c)
    {
        VectorXd p(static_cast<Index>(n));
        std::size_t r = c;
        for (std::size_t i = 0; i < n; ++i)
        {
            const auto k = static_cast<Index>(i);
            const double t = static_cast<double>(r % nodes) / static_cast<double>(nodes - 1);
            r /= nodes;
            p[k] = prior_box.lower[k] + t * (prior_box.upper[k] - prior_box.lower[k]);
        }
        visit(p);
    }
    if (nodes == 2)
    {
        visit(0.5 * (prior_box.lower + prior_box.upper));
    }
    if (model.W_box.dim() == n)
    {
        lo += model.W_box.lower;
        hi += model.W_box.upper;
    }

    auto half_widths = [](const VectorXd& l, const VectorXd& u) {
        const VectorXd c = 0.5 * (l + u);
        VectorXd s = 0.5 * (u - l);
        for (Index i = 0; i < s.size(); ++i)
        {
            s[i] = std::max(s[i], 1e-6 * (1.0 + std::abs(c[i])));
        }
        return std::pair{c, s};
    };
    const auto [xc, xs] = half_widths(lo, hi);
    const auto [pc, ps] = half_widths(prior_box.lower, prior_box.upper);
    sos::Frame f;
    f.center.resize(static_cast<Index>(2 * n));
    f.scale.resize(static_cast<Index>(2 * n));
    f.center << xc, pc;
    f.scale << xs, ps;
    if (!f.center.allFinite() || !f.scale.allFinite())
    {
        return {};
    }
    return f;
}

namespace {

// Box around x(k-1): the previous step's box, the initial-set box, or one certified for X0.
std::optional<Box> prior_box(const SystemModel& model, const FilterState& state, int d, const sos::SosOptions& opts)
{
    if (state.box)
    {
        return state.box;
    }
    if (model.X0_box.dim() == model.n)
    {
        return model.X0_box;
    }
    try
    {
        return bounding_box(model.X0, model.n, d, opts).box;
    }
    catch (const std::exception& e)
    {
        log::debug("no box for the initial set ({}); solving without a frame", e.what());
        return std::nullopt;
    }
}

}  // namespace

StepResult filter_step(const SystemModel& model, FilterState& state, const VectorXd& y, const FilterConfig& config)
{
    config.validate();
    const std::size_t k = state.step + 1;
    const std::size_t n = model.n;
    const int d = config.half_degree_for(model);

    StepResult res;
    res.step = k;
    res.measurement = y;
    res.step_set = build_step_set(model, state.prior, y, k);
    sos::SosOptions opts = config.sos;
    if (const auto pb = prior_box(model, state, d, config.sos))
    {
        opts.frame = step_frame(model, *pb, k);
    }
    res.frame = opts.frame;

    auto t0 = std::chrono::steady_clock::now();
    BoxResult box = bounding_box(res.step_set, n, d, opts, config.threads, k);
    res.times.box = seconds_since(t0);
    res.box = box.box;
    res.certificates = std::move(box.certificates);

    Rng rng(config.seed ^ static_cast<std::uint64_t>(k));
    const MatrixXd points = sample_uniform_box(res.box.inflated(1e-6), config.points, rng);
    const Polytope start = Polytope::from_box(res.box);
    const std::size_t budget = config.max_halfspaces > 2 * n ? config.max_halfspaces - 2 * n : 0;

    t0 = std::chrono::steady_clock::now();
    PolytopeResult greedy = greedy_polytope(res.step_set, n, start, points, budget, d, opts, config.threads);
    res.times.greedy = seconds_since(t0);
    res.greedy_count = greedy.added;
    res.polytope = std::move(greedy.polytope);
    for (auto& c : greedy.certificates)
    {
        res.certificates.push_back(std::move(c));
    }

    if (config.refine && res.greedy_count < budget)
    {
        t0 = std::chrono::steady_clock::now();
        PolytopeResult refined = refine_polytope(res.step_set, n, res.polytope, greedy.remaining,
                                                 budget - res.greedy_count, d, opts, config.tol_exclude,
                                                 config.threads);
        res.times.refine = seconds_since(t0);
        res.refine_count = refined.added;
        res.polytope = std::move(refined.polytope);
        for (auto& c : refined.certificates)
        {
            res.certificates.push_back(std::move(c));
        }
    }

    t0 = std::chrono::steady_clock::now();
    const double depth = polytope_depth(res.polytope, config.sos.sdp);
    if (depth < -1e-9)
    {
        throw InconsistentMeasurement(k, "the outer polytope is empty");
    }
    Rng vrng(config.seed ^ static_cast<std::uint64_t>(k) ^ 0x9e3779b97f4a7c15ULL);
    res.box_volume = res.box.volume();
    res.polytope_volume = mc_volume(res.polytope, res.box, config.mc_volume_points, vrng);
    res.times.volume = seconds_since(t0);

    log::info("step {}: box volume {:.6g}, polytope volume {:.6g}, {} greedy + {} refinement half-spaces", k,
              res.box_volume, res.polytope_volume, res.greedy_count, res.refine_count);

    state.step = k;
    state.prior.clear();
    for (const auto& h : res.polytope.halfspaces())
    {
        state.prior.push_back(h.as_constraint(n));
    }
    state.polytope = res.polytope;
    state.box = res.box;
    return res;
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

VectorXd draw_from(const SemialgebraicSet& set, const Box& box, Rng& rng, const char* what)
{
    constexpr std::size_t kMaxDraws = 100000;
    const MatrixXd pts = rejection_sample(set, box, 1, rng, kMaxDraws);
    if (pts.rows() == 0)
    {
        throw std::runtime_error(std::string("could not sample the ") + what + " set from its bounding box");
    }
    return pts.row(0).transpose();
}

}  // namespace

Trajectory simulate(const SystemModel& model, const VectorXd& x0, const MatrixXd& process_noise,
                    const MatrixXd& measurement_noise)
{
    model.validate();
    require_dims(static_cast<std::size_t>(x0.size()) == model.n, "simulate: x0 dimension");
    require_dims(process_noise.rows() == measurement_noise.rows(), "simulate: noise sequence lengths differ");
    require_dims(static_cast<std::size_t>(process_noise.cols()) == model.n, "simulate: process noise width");
    require_dims(static_cast<std::size_t>(measurement_noise.cols()) == model.m_out,
                 "simulate: measurement noise width");
    if (!model.X0.contains(x0, 1e-12))
    {
        log::warn("simulate: x0 lies outside the initial set");
    }
    const Index T = process_noise.rows();
    Trajectory tr;
    tr.states.resize(T + 1, static_cast<Index>(model.n));
    tr.measurements.resize(T, static_cast<Index>(model.m_out));
    tr.process_noise = process_noise;
    tr.measurement_noise = measurement_noise;
    tr.states.row(0) = x0.transpose();
    for (Index k = 1; k <= T; ++k)
    {
        const auto step = static_cast<std::size_t>(k);
        const VectorXd x = model.propagate(tr.states.row(k - 1).transpose(), step) + process_noise.row(k - 1).transpose();
        tr.states.row(k) = x.transpose();
        tr.measurements.row(k - 1) = (model.measure(x, step) + measurement_noise.row(k - 1).transpose()).transpose();
    }
    return tr;
}

Trajectory simulate(const SystemModel& model, const VectorXd& x0, std::size_t horizon, std::uint64_t seed)
{
    model.validate();
    Rng rng(seed);
    const auto T = static_cast<Index>(horizon);
    MatrixXd w(T, static_cast<Index>(model.n));
    MatrixXd v(T, static_cast<Index>(model.m_out));
    for (Index k = 0; k < T; ++k)
    {
        w.row(k) = draw_from(model.W, model.W_box, rng, "process-noise").transpose();
        v.row(k) = draw_from(model.V, model.V_box, rng, "measurement-noise").transpose();
    }
    return simulate(model, x0, w, v);
}

}  // namespace polyfilt
