#include "polyfilt/sos.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "polyfilt/error.hpp"
#include "polyfilt/log.hpp"

namespace polyfilt::sos {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

int ceil_half(int d)
{
    return (d + 1) / 2;
}

}  // namespace

MultiplierPlan plan_multipliers(const std::vector<Polynomial>& constraints, int sos_half_degree)
{
    if (sos_half_degree < 1)
    {
        throw std::invalid_argument("SOS half-degree must be at least 1, got " + std::to_string(sos_half_degree));
    }
    MultiplierPlan plan;
    plan.sos_half_degree = sos_half_degree;
    int top = 1;   // degree of omega.x - nu
    for (const auto& h : constraints)
    {
        const int hd = std::max(0, sos_half_degree - ceil_half(h.degree()));
        plan.multiplier_half_degrees.push_back(hd);
        top = std::max(top, 2 * hd + h.degree());
    }
    plan.sigma0_half_degree = std::max(sos_half_degree, ceil_half(top));
    plan.identity_degree = 2 * plan.sigma0_half_degree;
    return plan;
}

std::vector<std::size_t> block_sides(const MultiplierPlan& plan, std::size_t n_vars)
{
    std::vector<std::size_t> sides;
    sides.push_back(binomial(n_vars + static_cast<std::size_t>(plan.sigma0_half_degree),
                             static_cast<std::size_t>(plan.sigma0_half_degree)));
    for (int hd : plan.multiplier_half_degrees)
    {
        sides.push_back(binomial(n_vars + static_cast<std::size_t>(hd), static_cast<std::size_t>(hd)));
    }
    return sides;
}

DirectionSpec DirectionSpec::fixed_direction(const VectorXd& omega)
{
    DirectionSpec d;
    d.dim = static_cast<std::size_t>(omega.size());
    d.fixed = omega;
    return d;
}

DirectionSpec DirectionSpec::normalized(std::size_t dim, std::size_t pinned, double value, bool box_others)
{
    require_dims(pinned < dim, "pinned coordinate out of range");
    DirectionSpec d;
    d.dim = dim;
    d.pinned = pinned;
    d.pinned_value = value;
    d.box_others = box_others;
    return d;
}

Polynomial Frame::to_local(const Polynomial& p) const
{
    if (is_identity())
    {
        return p;
    }
    require_dims(static_cast<std::size_t>(center.size()) == p.n_vars(), "frame dimension differs from polynomial");
    const std::size_t n = p.n_vars();
    std::vector<Polynomial> images;
    for (std::size_t i = 0; i < n; ++i)
    {
        const auto k = static_cast<Index>(i);
        images.push_back(Polynomial::constant(n, center[k]) + scale[k] * Polynomial::variable(n, i));
    }
    return p.substitute(images);
}

VectorXd Frame::to_local(const VectorXd& x) const
{
    if (is_identity())
    {
        return x;
    }
    return (x - center).cwiseQuotient(scale);
}

void Frame::validate(std::size_t n_vars) const
{
    if (is_identity())
    {
        return;
    }
    require_dims(static_cast<std::size_t>(center.size()) == n_vars && static_cast<std::size_t>(scale.size()) == n_vars,
                 "frame dimension differs from the number of variables");
    if (!center.allFinite() || !scale.allFinite() || (scale.array() <= 0.0).any())
    {
        throw std::invalid_argument("frame needs finite centers and positive scales");
    }
}

namespace {

/// Variable bookkeeping of a built containment SDP.
struct Built
{
    sdp::SdpProblem problem;
    MultiplierPlan plan;
    std::size_t nu_var = 0;
    std::vector<long> omega_var;   ///< per direction coordinate, -1 if fixed
    VectorXd omega_fixed;          ///< fixed part (zero where free)
    double objective_offset = 0.0;
    std::size_t identity_rows = 0; ///< leading equalities that encode the polynomial identity
};

Built build(const ContainmentSpec& spec)
{
    const std::size_t n = spec.n_vars;
    for (const auto& h : spec.constraints)
    {
        require_dims(h.n_vars() == n, "constraint variable count differs from the set dimension");
    }
    const auto& dir = spec.direction;
    require_dims(dir.dim >= 1 && dir.dim <= n, "direction dimension out of range");
    if (spec.objective != Objective::MinOffset)
    {
        require_dims(static_cast<std::size_t>(spec.points.cols()) == dir.dim || spec.points.rows() == 0,
                     "point dimension differs from the direction dimension");
    }
    if (spec.objective == Objective::Separate)
    {
        require_dims(spec.points.rows() >= 1, "separation needs a point");
    }

    spec.frame.validate(n);
    std::vector<Polynomial> local;
    for (const auto& h : spec.constraints)
    {
        local.push_back(spec.frame.to_local(h));
    }
    const VectorXd center = spec.frame.is_identity() ? VectorXd::Zero(static_cast<Index>(n)) : spec.frame.center;
    const VectorXd scale = spec.frame.is_identity() ? VectorXd::Ones(static_cast<Index>(n)) : spec.frame.scale;

    Built out;
    out.plan = plan_multipliers(local, spec.sos_half_degree);
    auto& p = out.problem;

    // Decision variables
    out.nu_var = p.add_scalar();
    out.omega_var.assign(dir.dim, -1);
    out.omega_fixed = VectorXd::Zero(static_cast<Index>(dir.dim));
    if (dir.is_fixed())
    {
        out.omega_fixed = dir.fixed;
    }
    else
    {
        out.omega_fixed[static_cast<Index>(dir.pinned)] = dir.pinned_value;
        for (std::size_t j = 0; j < dir.dim; ++j)
        {
            if (j != dir.pinned)
            {
                out.omega_var[j] = static_cast<long>(p.add_scalar());
            }
        }
    }

    const auto sides = block_sides(out.plan, n);
    std::vector<MonomialBasis> bases;
    bases.emplace_back(n, out.plan.sigma0_half_degree);
    for (int hd : out.plan.multiplier_half_degrees)
    {
        bases.emplace_back(n, hd);
    }
    for (auto s : sides)
    {
        p.add_block(s);
    }

    // Identity rows, one per monomial up to the identity degree.
    const MonomialBasis id_basis(n, out.plan.identity_degree);
    std::vector<sdp::Equality> rows(id_basis.size());
    auto row_of = [&](const Monomial& m) -> sdp::Equality& {
        const long k = id_basis.index_of(m);
        if (k < 0)
        {
            throw std::logic_error("identity monomial outside the matched basis");
        }
        return rows[static_cast<std::size_t>(k)];
    };

    // + sigma_0
    for (const auto& [m, entries] : gram_linear_map(bases[0]))
    {
        auto& row = row_of(m);
        for (const auto& e : entries)
        {
            row.lhs.entries.push_back({0, e.row, e.col, e.weight});
        }
    }
    // - sigma_s h_s
    for (std::size_t s = 0; s < local.size(); ++s)
    {
        const auto gm = gram_linear_map(bases[s + 1]);
        for (const auto& [beta, entries] : gm)
        {
            for (const auto& [gamma, c] : local[s].terms())
            {
                auto& row = row_of(beta * gamma);
                for (const auto& e : entries)
                {
                    row.lhs.entries.push_back({s + 1, e.row, e.col, -c * e.weight});
                }
            }
        }
    }
    // - nu + omega.(center + scale .* u)  =  0
    auto& constant_row = row_of(Monomial::one(n));
    constant_row.lhs.scalars.push_back({out.nu_var, -1.0});
    for (std::size_t j = 0; j < dir.dim; ++j)
    {
        const auto k = static_cast<Index>(j);
        auto& row = row_of(Monomial::variable(n, j));
        if (out.omega_var[j] >= 0)
        {
            const auto w = static_cast<std::size_t>(out.omega_var[j]);
            row.lhs.scalars.push_back({w, scale[k]});
            if (center[k] != 0.0)
            {
                constant_row.lhs.scalars.push_back({w, center[k]});
            }
        }
        else
        {
            row.rhs -= out.omega_fixed[k] * scale[k];
            constant_row.rhs -= out.omega_fixed[k] * center[k];
        }
    }
    out.identity_rows = rows.size();
    for (auto& r : rows)
    {
        p.equalities.push_back(std::move(r));
    }

    if (dir.box_others && !dir.is_fixed())
    {
        for (std::size_t j = 0; j < dir.dim; ++j)
        {
            if (out.omega_var[j] < 0)
            {
                continue;
            }
            const auto w = static_cast<std::size_t>(out.omega_var[j]);
            const auto a = p.add_scalar(true);
            const auto b = p.add_scalar(true);
            p.equalities.push_back({{{{w, 1.0}, {a, 1.0}}, {}}, 1.0});
            p.equalities.push_back({{{{w, -1.0}, {b, 1.0}}, {}}, 1.0});
        }
    }

    // Objective
    switch (spec.objective)
    {
    case Objective::MinOffset:
        p.objective.scalars.push_back({out.nu_var, 1.0});
        break;
    case Objective::Hinge:
        if (spec.points.rows() == 0)
        {
            p.objective.scalars.push_back({out.nu_var, 1.0});
            break;
        }
        for (Index i = 0; i < spec.points.rows(); ++i)
        {
            // t_i - u_i = nu - omega.p_i
            const auto t = p.add_scalar(true);
            const auto u = p.add_scalar(true);
            sdp::Equality eq;
            eq.lhs.scalars = {{t, 1.0}, {u, -1.0}, {out.nu_var, -1.0}};
            for (std::size_t j = 0; j < dir.dim; ++j)
            {
                const double pj = spec.points(i, static_cast<Index>(j));
                if (out.omega_var[j] >= 0)
                {
                    eq.lhs.scalars.push_back({static_cast<std::size_t>(out.omega_var[j]), pj});
                }
                else
                {
                    eq.rhs -= out.omega_fixed[static_cast<Index>(j)] * pj;
                }
            }
            p.equalities.push_back(std::move(eq));
            p.objective.scalars.push_back({t, 1.0});
        }
        break;
    case Objective::Separate:
        p.objective.scalars.push_back({out.nu_var, 1.0});
        for (std::size_t j = 0; j < dir.dim; ++j)
        {
            const double pj = spec.points(0, static_cast<Index>(j));
            if (out.omega_var[j] >= 0)
            {
                p.objective.scalars.push_back({static_cast<std::size_t>(out.omega_var[j]), -pj});
            }
            else
            {
                out.objective_offset -= out.omega_fixed[static_cast<Index>(j)] * pj;
            }
        }
        break;
    }
    return out;
}

/// Nudges the Gram blocks by the least-norm correction that makes the identity rows hold
/// exactly with nu and omega left as they are.
void repair_identity(const Built& b, std::vector<MatrixXd>& blocks, const VectorXd& scalars)
{
    const auto& p = b.problem;
    std::vector<std::size_t> offset;
    std::size_t cols = 0;
    for (auto side : p.block_sides)
    {
        offset.push_back(cols);
        cols += side * (side + 1) / 2;
    }
    auto column = [&](const sdp::MatrixTerm& t) {
        const std::size_t i = std::max(t.row, t.col);
        const std::size_t j = std::min(t.row, t.col);
        return offset[t.block] + i * (i + 1) / 2 + j;
    };

    const auto m = static_cast<Index>(b.identity_rows);
    MatrixXd A = MatrixXd::Zero(m, static_cast<Index>(cols));
    VectorXd r(m);
    for (Index k = 0; k < m; ++k)
    {
        const auto& eq = p.equalities[static_cast<std::size_t>(k)];
        for (const auto& t : eq.lhs.entries)
        {
            A(k, static_cast<Index>(column(t))) += t.coef;
        }
        r[k] = eq.rhs - sdp::evaluate(eq.lhs, scalars, blocks);
    }
    const VectorXd delta = A.transpose() * (A * A.transpose()).ldlt().solve(r);
    for (std::size_t blk = 0; blk < blocks.size(); ++blk)
    {
        for (std::size_t i = 0; i < p.block_sides[blk]; ++i)
        {
            for (std::size_t j = 0; j <= i; ++j)
            {
                const double d = delta[static_cast<Index>(offset[blk] + i * (i + 1) / 2 + j)];
                blocks[blk](static_cast<Index>(i), static_cast<Index>(j)) += d;
                if (i != j)
                {
                    blocks[blk](static_cast<Index>(j), static_cast<Index>(i)) += d;
                }
            }
        }
    }
}

}  // namespace

sdp::SdpProblem build_sdp(const ContainmentSpec& spec)
{
    return build(spec).problem;
}

SosResult solve_containment(const ContainmentSpec& given, const SosOptions& options)
{
    // A frame on the spec wins over the one in the options.
    ContainmentSpec framed;
    const bool use_options_frame = given.frame.is_identity() && !options.frame.is_identity();
    if (use_options_frame)
    {
        framed = given;
        framed.frame = options.frame;
    }
    const ContainmentSpec& spec = use_options_frame ? framed : given;
    Built b = build(spec);
    const sdp::Solution sol = sdp::solve(b.problem, options.sdp);

    SosResult r;
    r.status = sol.status;
    r.iterations = sol.iterations;
    r.message = sol.message;
    r.nu = sol.scalars[static_cast<Index>(b.nu_var)];
    r.omega = b.omega_fixed;
    for (std::size_t j = 0; j < b.omega_var.size(); ++j)
    {
        if (b.omega_var[j] >= 0)
        {
            r.omega[static_cast<Index>(j)] = sol.scalars[b.omega_var[j]];
        }
    }
    r.objective = sol.objective_value + b.objective_offset;

    auto& c = r.certificate;
    c.n_vars = spec.n_vars;
    c.constraints = spec.constraints;
    c.omega = VectorXd::Zero(static_cast<Index>(spec.n_vars));
    c.omega.head(r.omega.size()) = r.omega;
    c.nu = r.nu;
    c.half_degrees.push_back(b.plan.sigma0_half_degree);
    for (int hd : b.plan.multiplier_half_degrees)
    {
        c.half_degrees.push_back(hd);
    }
    c.gram = sol.blocks;
    c.frame = spec.frame;

    const double tol_psd = options.sdp.tol_psd * 100.0;
    // A stalled solve whose best point is near optimal is still usable once its Gram blocks
    // satisfy the identity; the certificate check below is what makes the bound safe.
    const bool stalled = (sol.status == sdp::Status::NumericalFailure || sol.status == sdp::Status::MaxIterations) &&
                         sol.duality_gap <= options.sdp.tol_reduced_gap && !c.gram.empty();
    if (r.ok() || stalled)
    {
        auto check = verify_certificate(c, options.tol_identity, tol_psd);
        if (!check.pass)
        {
            repair_identity(b, c.gram, sol.scalars);
            check = verify_certificate(c, options.tol_identity, tol_psd);
            if (check.pass)
            {
                log::debug("sos: Gram blocks repaired after {} ({})", sdp::to_string(sol.status), sol.message);
                r.status = sdp::Status::Optimal;
                r.message = "repaired to exact identity";
            }
        }
        else if (stalled)
        {
            r.status = sdp::Status::Optimal;
            r.message = "solved to reduced accuracy";
        }
        if (!check.pass)
        {
            r.status = sdp::Status::NumericalFailure;
            r.message = "certificate check failed (identity residual " + std::to_string(check.identity_residual) +
                        ", smallest Gram eigenvalue " + std::to_string(*std::min_element(check.min_eigenvalues.begin(),
                                                                                         check.min_eigenvalues.end())) +
                        ")";
        }
    }
    return r;
}

SosResult min_halfspace_offset(std::size_t n_vars, const std::vector<Polynomial>& constraints,
                               const VectorXd& omega, int sos_half_degree, const SosOptions& options)
{
    ContainmentSpec spec;
    spec.n_vars = n_vars;
    spec.constraints = constraints;
    spec.sos_half_degree = sos_half_degree;
    spec.direction = DirectionSpec::fixed_direction(omega);
    spec.objective = Objective::MinOffset;
    return solve_containment(spec, options);
}

namespace {

Polynomial identity_mismatch(const Certificate& cert, std::vector<MonomialBasis>& bases)
{
    require_dims(static_cast<std::size_t>(cert.omega.size()) == cert.n_vars, "certificate omega length");
    require_dims(cert.half_degrees.size() == cert.constraints.size() + 1, "certificate multiplier count");
    require_dims(cert.gram.size() == cert.half_degrees.size(), "certificate Gram count");
    bases.clear();
    for (int hd : cert.half_degrees)
    {
        bases.emplace_back(cert.n_vars, hd);
    }
    for (std::size_t s = 0; s < bases.size(); ++s)
    {
        const auto side = static_cast<Index>(bases[s].size());
        require_dims(cert.gram[s].rows() == side && cert.gram[s].cols() == side, "certificate Gram shape");
    }
    cert.frame.validate(cert.n_vars);
    // nu - omega.x with x = center + scale .* u
    VectorXd lin = -cert.omega;
    double constant = cert.nu;
    if (!cert.frame.is_identity())
    {
        lin = lin.cwiseProduct(cert.frame.scale);
        constant -= cert.omega.dot(cert.frame.center);
    }
    Polynomial r = Polynomial::affine({lin.data(), static_cast<std::size_t>(lin.size())}, constant) -
                   gram_expand(bases[0], cert.gram[0]);
    for (std::size_t s = 0; s < cert.constraints.size(); ++s)
    {
        r = r + gram_expand(bases[s + 1], cert.gram[s + 1]) * cert.frame.to_local(cert.constraints[s]);
    }
    return r;
}

double min_eigenvalue(const MatrixXd& Q)
{
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (Q + Q.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

}  // namespace

CertificateCheck verify_certificate(const Certificate& cert, double tol_identity, double tol_psd)
{
    std::vector<MonomialBasis> bases;
    const Polynomial r = identity_mismatch(cert, bases);
    CertificateCheck check;
    check.identity_residual = r.max_abs_coefficient();
    bool psd = true;
    for (const auto& Q : cert.gram)
    {
        const double l = min_eigenvalue(Q);
        check.min_eigenvalues.push_back(l);
        psd = psd && l >= -tol_psd * std::max(1.0, Q.cwiseAbs().maxCoeff());
    }
    check.pass = std::isfinite(check.identity_residual) && check.identity_residual <= tol_identity && psd;
    return check;
}

double soundness_slack(const Certificate& cert, const VectorXd& x)
{
    std::vector<MonomialBasis> bases;
    const Polynomial r = identity_mismatch(cert, bases);
    require_dims(static_cast<std::size_t>(x.size()) == cert.n_vars, "point dimension");
    // The mismatch and the Gram bases live in the local variables; constraints are evaluated at x.
    const VectorXd u = cert.frame.to_local(x);
    const std::span<const double> pt(u.data(), static_cast<std::size_t>(u.size()));
    const std::span<const double> px(x.data(), static_cast<std::size_t>(x.size()));
    double slack = std::abs(r.evaluate(pt));
    for (std::size_t s = 0; s < cert.gram.size(); ++s)
    {
        const double neg = std::max(0.0, -min_eigenvalue(cert.gram[s]));
        if (neg == 0.0)
        {
            continue;
        }
        const double q2 = bases[s].evaluate(pt).squaredNorm();
        const double weight = s == 0 ? 1.0 : std::abs(cert.constraints[s - 1].evaluate(px));
        slack += neg * q2 * weight;
    }
    return slack;
}

void to_json(nlohmann::json& j, const Certificate& c)
{
    nlohmann::json gram = nlohmann::json::array();
    for (const auto& Q : c.gram)
    {
        nlohmann::json rows = nlohmann::json::array();
        for (Index i = 0; i < Q.rows(); ++i)
        {
            std::vector<double> row(static_cast<std::size_t>(Q.cols()));
            for (Index k = 0; k < Q.cols(); ++k)
            {
                row[static_cast<std::size_t>(k)] = Q(i, k);
            }
            rows.push_back(row);
        }
        gram.push_back(rows);
    }
    j = nlohmann::json{{"n_vars", c.n_vars},
                       {"constraints", c.constraints},
                       {"omega", std::vector<double>(c.omega.data(), c.omega.data() + c.omega.size())},
                       {"nu", c.nu},
                       {"half_degrees", c.half_degrees},
                       {"gram", gram}};
    if (!c.frame.is_identity())
    {
        j["frame"] = {{"center", std::vector<double>(c.frame.center.data(), c.frame.center.data() + c.frame.center.size())},
                      {"scale", std::vector<double>(c.frame.scale.data(), c.frame.scale.data() + c.frame.scale.size())}};
    }
}

void from_json(const nlohmann::json& j, Certificate& c)
{
    c.n_vars = j.at("n_vars").get<std::size_t>();
    c.constraints = j.at("constraints").get<std::vector<Polynomial>>();
    const auto om = j.at("omega").get<std::vector<double>>();
    c.omega = Eigen::Map<const VectorXd>(om.data(), static_cast<Index>(om.size()));
    c.nu = j.at("nu").get<double>();
    c.half_degrees = j.at("half_degrees").get<std::vector<int>>();
    c.gram.clear();
    for (const auto& rows : j.at("gram"))
    {
        const auto n = static_cast<Index>(rows.size());
        MatrixXd Q(n, n);
        for (Index i = 0; i < n; ++i)
        {
            const auto row = rows.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
            require_dims(static_cast<Index>(row.size()) == n, "Gram matrix is not square");
            for (Index k = 0; k < n; ++k)
            {
                Q(i, k) = row[static_cast<std::size_t>(k)];
            }
        }
        c.gram.push_back(std::move(Q));
    }
    c.frame = {};
    if (j.contains("frame"))
    {
        const auto center = j.at("frame").at("center").get<std::vector<double>>();
        const auto scale = j.at("frame").at("scale").get<std::vector<double>>();
        c.frame.center = Eigen::Map<const VectorXd>(center.data(), static_cast<Index>(center.size()));
        c.frame.scale = Eigen::Map<const VectorXd>(scale.data(), static_cast<Index>(scale.size()));
    }
}

}  // namespace polyfilt::sos
