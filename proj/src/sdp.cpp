#include "polyfilt/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <utility>

#include "polyfilt/error.hpp"
#include "polyfilt/log.hpp"

namespace polyfilt::sdp {

using Idx = Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Problem helpers

std::size_t SdpProblem::add_scalar(bool nonnegative)
{
    if (nonneg.size() < n_scalars)
    {
        nonneg.resize(n_scalars, false);
    }
    nonneg.push_back(nonnegative);
    return n_scalars++;
}

std::size_t SdpProblem::add_block(std::size_t side)
{
    block_sides.push_back(side);
    return block_sides.size() - 1;
}

std::size_t SdpProblem::variable_count() const
{
    std::size_t n = n_scalars;
    for (auto s : block_sides)
    {
        n += s * (s + 1) / 2;
    }
    return n;
}

namespace {

void validate_functional(const SdpProblem& p, const LinearFunctional& f, const char* what)
{
    for (const auto& t : f.scalars)
    {
        require_dims(t.var < p.n_scalars, std::string(what) + ": scalar index out of range");
        if (!std::isfinite(t.coef))
        {
            throw std::invalid_argument(std::string(what) + ": non-finite coefficient");
        }
    }
    for (const auto& t : f.entries)
    {
        require_dims(t.block < p.block_sides.size(), std::string(what) + ": block index out of range");
        const auto side = p.block_sides[t.block];
        require_dims(t.row < side && t.col < side, std::string(what) + ": block entry out of range");
        if (!std::isfinite(t.coef))
        {
            throw std::invalid_argument(std::string(what) + ": non-finite coefficient");
        }
    }
}

}  // namespace

void SdpProblem::validate() const
{
    require_dims(nonneg.empty() || nonneg.size() == n_scalars, "SdpProblem: nonneg flags length");
    for (auto s : block_sides)
    {
        require_dims(s >= 1, "SdpProblem: block side must be >= 1");
    }
    validate_functional(*this, objective, "objective");
    for (const auto& e : equalities)
    {
        validate_functional(*this, e.lhs, "equality");
        if (!std::isfinite(e.rhs))
        {
            throw std::invalid_argument("equality: non-finite right-hand side");
        }
    }
}

const char* to_string(Status s)
{
    switch (s)
    {
    case Status::Optimal: return "Optimal";
    case Status::Infeasible: return "Infeasible";
    case Status::Unbounded: return "Unbounded";
    case Status::MaxIterations: return "MaxIterations";
    case Status::NumericalFailure: return "NumericalFailure";
    }
    return "Unknown";
}

double evaluate(const LinearFunctional& f, const VectorXd& scalars, const std::vector<MatrixXd>& blocks)
{
    double v = 0.0;
    for (const auto& t : f.scalars)
    {
        v += t.coef * scalars[static_cast<Idx>(t.var)];
    }
    for (const auto& t : f.entries)
    {
        const auto& X = blocks[t.block];
        v += t.coef * 0.5 * (X(static_cast<Idx>(t.row), static_cast<Idx>(t.col)) +
                             X(static_cast<Idx>(t.col), static_cast<Idx>(t.row)));
    }
    return v;
}

ResidualReport check_solution(const SdpProblem& problem, const Solution& solution, double tol_feas,
                              double tol_psd)
{
    require_dims(static_cast<std::size_t>(solution.scalars.size()) == problem.n_scalars,
                 "check_solution: scalar count mismatch");
    require_dims(solution.blocks.size() == problem.block_sides.size(), "check_solution: block count mismatch");
    for (std::size_t b = 0; b < problem.block_sides.size(); ++b)
    {
        const auto side = static_cast<Idx>(problem.block_sides[b]);
        require_dims(solution.blocks[b].rows() == side && solution.blocks[b].cols() == side,
                     "check_solution: block shape mismatch");
    }

    ResidualReport r;
    for (const auto& eq : problem.equalities)
    {
        const double lhs = evaluate(eq.lhs, solution.scalars, solution.blocks);
        r.max_equality_residual = std::max(r.max_equality_residual, std::abs(lhs - eq.rhs));
    }
    r.psd_ok = true;
    for (const auto& X : solution.blocks)
    {
        const MatrixXd S = 0.5 * (X + X.transpose());
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(S, Eigen::EigenvaluesOnly);
        const double lmin = es.eigenvalues().minCoeff();
        r.min_eigenvalues.push_back(lmin);
        if (!(lmin >= -tol_psd))
        {
            r.psd_ok = false;
        }
    }
    for (std::size_t i = 0; i < problem.n_scalars; ++i)
    {
        if (problem.is_nonneg(i))
        {
            const double v = solution.scalars[static_cast<Idx>(i)];
            r.min_nonneg_scalar = std::min(r.min_nonneg_scalar, v);
            if (!(v >= -tol_psd))
            {
                r.psd_ok = false;
            }
        }
    }
    r.objective_value = evaluate(problem.objective, solution.scalars, solution.blocks);
    r.equalities_ok = r.max_equality_residual <= tol_feas;
    return r;
}

nlohmann::json to_json(const SdpProblem& problem)
{
    auto functional = [](const LinearFunctional& f) {
        nlohmann::json s = nlohmann::json::array();
        for (const auto& t : f.scalars)
        {
            s.push_back({t.var, t.coef});
        }
        nlohmann::json e = nlohmann::json::array();
        for (const auto& t : f.entries)
        {
            e.push_back({t.block, t.row, t.col, t.coef});
        }
        return nlohmann::json{{"scalars", s}, {"entries", e}};
    };
    nlohmann::json eqs = nlohmann::json::array();
    for (const auto& eq : problem.equalities)
    {
        eqs.push_back({{"lhs", functional(eq.lhs)}, {"rhs", eq.rhs}});
    }
    std::vector<bool> flags = problem.nonneg;
    flags.resize(problem.n_scalars, false);
    return {{"n_scalars", problem.n_scalars},
            {"nonneg", flags},
            {"block_sides", problem.block_sides},
            {"objective", functional(problem.objective)},
            {"equalities", eqs}};
}

// ---------------------------------------------------------------------------
// Interior-point method

namespace {

struct SparseEntry
{
    Idx p;
    Idx q;
    double v;
};

/// Constraint data of one equality restricted to one PSD block.
struct BlockRow
{
    Idx row;                          ///< equality index
    std::vector<SparseEntry> entries; ///< both triangles listed
    std::vector<Idx> distinct_rows;   ///< distinct p among entries
};

/// Standard-form data: min <C,X> + c_lp.x + c_f.f  s.t. A(X) + A_lp x + F f = b.
struct ConicData
{
    Idx m = 0;
    std::vector<Idx> sides;
    std::vector<std::vector<BlockRow>> block_rows;   // per block
    std::vector<MatrixXd> C;
    Idx n_lp = 0;
    std::vector<std::vector<std::pair<Idx, double>>> lp_cols;   // per lp var: (row, coef)
    VectorXd c_lp;
    MatrixXd F;      // m x n_free
    VectorXd c_f;
    VectorXd b;
};

struct Iterate
{
    std::vector<MatrixXd> X;
    std::vector<MatrixXd> Z;
    VectorXd x;   // lp primal
    VectorXd z;   // lp dual slack
    VectorXd f;
    VectorXd y;
};

double frob_inner(const MatrixXd& A, const MatrixXd& B)
{
    return (A.array() * B.array()).sum();
}

MatrixXd sym(const MatrixXd& A)
{
    return 0.5 * (A + A.transpose());
}

// A(X) + A_lp x + F f
VectorXd apply_A(const ConicData& d, const std::vector<MatrixXd>& X, const VectorXd& x, const VectorXd& f)
{
    VectorXd r = VectorXd::Zero(d.m);
    for (std::size_t b = 0; b < d.sides.size(); ++b)
    {
        for (const auto& br : d.block_rows[b])
        {
            double s = 0.0;
            for (const auto& e : br.entries)
            {
                s += e.v * X[b](e.p, e.q);
            }
            r[br.row] += s;
        }
    }
    for (Idx l = 0; l < d.n_lp; ++l)
    {
        for (const auto& [row, a] : d.lp_cols[static_cast<std::size_t>(l)])
        {
            r[row] += a * x[l];
        }
    }
    if (d.F.cols() > 0)
    {
        r += d.F * f;
    }
    return r;
}

void apply_A_adjoint(const ConicData& d, const VectorXd& y, std::vector<MatrixXd>& S, VectorXd& s_lp, VectorXd& s_f)
{
    S.resize(d.sides.size());
    for (std::size_t b = 0; b < d.sides.size(); ++b)
    {
        S[b] = MatrixXd::Zero(d.sides[b], d.sides[b]);
        for (const auto& br : d.block_rows[b])
        {
            const double yk = y[br.row];
            for (const auto& e : br.entries)
            {
                S[b](e.p, e.q) += yk * e.v;
            }
        }
    }
    s_lp = VectorXd::Zero(d.n_lp);
    for (Idx l = 0; l < d.n_lp; ++l)
    {
        for (const auto& [row, a] : d.lp_cols[static_cast<std::size_t>(l)])
        {
            s_lp[l] += a * y[row];
        }
    }
    s_f = d.F.cols() > 0 ? VectorXd(d.F.transpose() * y) : VectorXd(0);
}

/// Largest alpha in [0, inf) with X + alpha dX PSD; +inf if unrestricted.
double max_step_psd(const MatrixXd& X, const MatrixXd& dX)
{
    Eigen::LLT<MatrixXd> llt(X);
    if (llt.info() != Eigen::Success)
    {
        return 0.0;
    }
    const MatrixXd& L = llt.matrixL();
    MatrixXd W = L.triangularView<Eigen::Lower>().solve(dX);
    W = L.triangularView<Eigen::Lower>().solve(W.transpose()).transpose();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym(W), Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    return lmin >= 0.0 ? std::numeric_limits<double>::infinity() : -1.0 / lmin;
}

double max_step_lp(const VectorXd& x, const VectorXd& dx)
{
    double a = std::numeric_limits<double>::infinity();
    for (Idx i = 0; i < x.size(); ++i)
    {
        if (dx[i] < 0.0)
        {
            a = std::min(a, -x[i] / dx[i]);
        }
    }
    return a;
}

// The Schur complement grows ill-conditioned as the iterates approach the optimum; it is
// factored in extended precision, which costs little at the sizes handled here.
class NewtonSystem
{
public:
    using Real = long double;
    using MatrixR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
    using VectorR = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

    bool factor(const MatrixXd& M, const MatrixXd& F)
    {
        F_ = F.cast<Real>();
        const Idx m = M.rows();
        const MatrixR Ml = M.cast<Real>();
        const Real scale = m > 0 ? std::max<Real>(Ml.diagonal().cwiseAbs().maxCoeff(), 1e-300L) : 1.0L;
        for (Real reg : {0.0L, 1e-18L, 1e-15L, 1e-13L, 1e-11L, 1e-9L})
        {
            MatrixR Mr = Ml;
            if (reg > 0.0L)
            {
                Mr.diagonal().array() += reg * scale;
            }
            llt_.compute(Mr);
            if (llt_.info() == Eigen::Success)
            {
                break;
            }
        }
        if (m > 0 && llt_.info() != Eigen::Success)
        {
            return false;
        }
        if (F_.cols() > 0)
        {
            MinvF_ = llt_.solve(F_);
            const MatrixR S = F_.transpose() * MinvF_;
            ldlt_.compute(S);
            if (ldlt_.info() != Eigen::Success)
            {
                return false;
            }
        }
        return F_.cols() == 0 || MinvF_.allFinite();
    }

    // [M F; F' 0][dy; df] = [h; g]
    void solve(const VectorXd& h, const VectorXd& g, VectorXd& dy, VectorXd& df) const
    {
        if (F_.cols() == 0)
        {
            dy = h.size() > 0 ? VectorXd(llt_.solve(h.cast<Real>()).cast<double>()) : VectorXd(0);
            df.resize(0);
            return;
        }
        const VectorR Minvh = llt_.solve(h.cast<Real>());
        const VectorR dfl = ldlt_.solve(F_.transpose() * Minvh - g.cast<Real>());
        dy = (Minvh - MinvF_ * dfl).cast<double>();
        df = dfl.cast<double>();
    }

private:
    MatrixR F_;
    MatrixR MinvF_;
    Eigen::LLT<MatrixR> llt_;
    Eigen::LDLT<MatrixR> ldlt_;
};

struct Scaling
{
    VectorXd row;        // original row k = scaled row k * row[k]
    double b = 1.0;      // primal variables scaled by 1/b
    double c = 1.0;      // dual variables scaled by 1/c
};

struct Layout
{
    std::vector<std::optional<Idx>> lp_index;    // per scalar
    std::vector<std::optional<Idx>> free_index;  // per scalar
    std::vector<Idx> kept_rows;                   // original equality index of each conic row
};

ConicData build_conic(const SdpProblem& p, Layout& layout, Scaling& scaling, bool& trivially_infeasible)
{
    ConicData d;
    layout.lp_index.assign(p.n_scalars, std::nullopt);
    layout.free_index.assign(p.n_scalars, std::nullopt);
    Idx n_lp = 0;
    Idx n_free = 0;
    for (std::size_t i = 0; i < p.n_scalars; ++i)
    {
        if (p.is_nonneg(i))
        {
            layout.lp_index[i] = n_lp++;
        }
        else
        {
            layout.free_index[i] = n_free++;
        }
    }
    d.n_lp = n_lp;
    for (auto s : p.block_sides)
    {
        d.sides.push_back(static_cast<Idx>(s));
    }

    // Collect each equality into per-block entry maps; drop rows that are identically zero.
    trivially_infeasible = false;
    struct RowData
    {
        std::vector<std::map<std::pair<Idx, Idx>, double>> blocks;
        std::map<Idx, double> lp;
        std::map<Idx, double> fr;
        double rhs;
    };
    std::vector<RowData> rows;
    for (std::size_t k = 0; k < p.equalities.size(); ++k)
    {
        const auto& eq = p.equalities[k];
        RowData rd;
        rd.blocks.resize(p.block_sides.size());
        rd.rhs = eq.rhs;
        for (const auto& t : eq.lhs.entries)
        {
            const Idx r = static_cast<Idx>(t.row);
            const Idx c = static_cast<Idx>(t.col);
            auto& bm = rd.blocks[t.block];
            if (r == c)
            {
                bm[{r, r}] += t.coef;
            }
            else
            {
                bm[{r, c}] += 0.5 * t.coef;
                bm[{c, r}] += 0.5 * t.coef;
            }
        }
        for (const auto& t : eq.lhs.scalars)
        {
            if (auto li = layout.lp_index[t.var])
            {
                rd.lp[*li] += t.coef;
            }
            else
            {
                rd.fr[*layout.free_index[t.var]] += t.coef;
            }
        }
        double norm2 = 0.0;
        for (const auto& bm : rd.blocks)
        {
            for (const auto& [_, v] : bm)
            {
                norm2 += v * v;
            }
        }
        for (const auto& [_, v] : rd.lp)
        {
            norm2 += v * v;
        }
        for (const auto& [_, v] : rd.fr)
        {
            norm2 += v * v;
        }
        if (norm2 == 0.0)
        {
            if (eq.rhs != 0.0)
            {
                trivially_infeasible = true;
            }
            continue;
        }
        layout.kept_rows.push_back(static_cast<Idx>(k));
        rows.push_back(std::move(rd));
    }

    d.m = static_cast<Idx>(rows.size());
    scaling.row = VectorXd::Ones(d.m);
    d.block_rows.resize(p.block_sides.size());
    d.lp_cols.resize(static_cast<std::size_t>(n_lp));
    d.F = MatrixXd::Zero(d.m, n_free);
    d.b = VectorXd::Zero(d.m);
    for (Idx k = 0; k < d.m; ++k)
    {
        auto& rd = rows[static_cast<std::size_t>(k)];
        double norm2 = 0.0;
        for (const auto& bm : rd.blocks)
        {
            for (const auto& [_, v] : bm)
            {
                norm2 += v * v;
            }
        }
        for (const auto& [_, v] : rd.lp)
        {
            norm2 += v * v;
        }
        for (const auto& [_, v] : rd.fr)
        {
            norm2 += v * v;
        }
        const double s = std::sqrt(norm2);
        scaling.row[k] = s;
        for (std::size_t b = 0; b < rd.blocks.size(); ++b)
        {
            if (rd.blocks[b].empty())
            {
                continue;
            }
            BlockRow br;
            br.row = k;
            for (const auto& [pq, v] : rd.blocks[b])
            {
                if (v != 0.0)
                {
                    br.entries.push_back({pq.first, pq.second, v / s});
                }
            }
            for (const auto& e : br.entries)
            {
                if (br.distinct_rows.empty() || br.distinct_rows.back() != e.p)
                {
                    br.distinct_rows.push_back(e.p);
                }
            }
            std::sort(br.distinct_rows.begin(), br.distinct_rows.end());
            br.distinct_rows.erase(std::unique(br.distinct_rows.begin(), br.distinct_rows.end()),
                                   br.distinct_rows.end());
            if (!br.entries.empty())
            {
                d.block_rows[b].push_back(std::move(br));
            }
        }
        for (const auto& [l, v] : rd.lp)
        {
            if (v != 0.0)
            {
                d.lp_cols[static_cast<std::size_t>(l)].push_back({k, v / s});
            }
        }
        for (const auto& [fi, v] : rd.fr)
        {
            d.F(k, fi) = v / s;
        }
        d.b[k] = rd.rhs / s;
    }

    // Objective
    d.C.resize(p.block_sides.size());
    for (std::size_t b = 0; b < p.block_sides.size(); ++b)
    {
        d.C[b] = MatrixXd::Zero(d.sides[b], d.sides[b]);
    }
    d.c_lp = VectorXd::Zero(n_lp);
    d.c_f = VectorXd::Zero(n_free);
    for (const auto& t : p.objective.entries)
    {
        const Idx r = static_cast<Idx>(t.row);
        const Idx c = static_cast<Idx>(t.col);
        if (r == c)
        {
            d.C[t.block](r, r) += t.coef;
        }
        else
        {
            d.C[t.block](r, c) += 0.5 * t.coef;
            d.C[t.block](c, r) += 0.5 * t.coef;
        }
    }
    for (const auto& t : p.objective.scalars)
    {
        if (auto li = layout.lp_index[t.var])
        {
            d.c_lp[*li] += t.coef;
        }
        else
        {
            d.c_f[*layout.free_index[t.var]] += t.coef;
        }
    }

    // Global scaling of b and c to unit-ish magnitude.
    double cnorm2 = d.c_lp.squaredNorm() + d.c_f.squaredNorm();
    for (const auto& Cb : d.C)
    {
        cnorm2 += Cb.squaredNorm();
    }
    scaling.c = std::max(1.0, std::sqrt(cnorm2));
    scaling.b = std::max(1.0, d.b.norm());
    for (auto& Cb : d.C)
    {
        Cb /= scaling.c;
    }
    d.c_lp /= scaling.c;
    d.c_f /= scaling.c;
    d.b /= scaling.b;
    return d;
}

struct Measures
{
    double pobj;
    double dobj;
    double pinf;
    double dinf;
    double gap;
    double mu;
    double ray_primal_infeasible;   // small => primal infeasible
    double ray_dual_infeasible;     // small => primal unbounded
};

}  // namespace

Solution solve(const SdpProblem& problem, const Options& options)
{
    problem.validate();
    if (problem.variable_count() > options.max_variables)
    {
        throw ProblemTooLarge("SDP has " + std::to_string(problem.variable_count()) +
                              " unknowns, above the configured cap of " + std::to_string(options.max_variables));
    }

    Solution sol;
    Layout layout;
    Scaling scaling;
    bool trivially_infeasible = false;
    const ConicData d = build_conic(problem, layout, scaling, trivially_infeasible);
    const std::size_t nb = d.sides.size();
    const Idx m = d.m;
    const Idx n_free = d.F.cols();

    auto finish_shapes = [&](Solution& s) {
        s.scalars = VectorXd::Zero(static_cast<Idx>(problem.n_scalars));
        s.blocks.clear();
        for (auto side : problem.block_sides)
        {
            s.blocks.push_back(MatrixXd::Zero(static_cast<Idx>(side), static_cast<Idx>(side)));
        }
        s.duals = VectorXd::Zero(static_cast<Idx>(problem.equalities.size()));
    };

    if (trivially_infeasible)
    {
        finish_shapes(sol);
        sol.status = Status::Infeasible;
        sol.message = "an equality with no variables has a nonzero right-hand side";
        return sol;
    }

    // Free scalars that appear in no equality are undetermined: unbounded if they carry cost.
    for (Idx j = 0; j < n_free; ++j)
    {
        if (d.F.col(j).squaredNorm() == 0.0 && d.c_f[j] != 0.0)
        {
            finish_shapes(sol);
            sol.status = Status::Unbounded;
            sol.message = "a free scalar with nonzero cost appears in no equality";
            return sol;
        }
    }
    // Columns of F that are zero would make the reduced system singular; pin them.
    std::vector<Idx> active_free;
    for (Idx j = 0; j < n_free; ++j)
    {
        if (d.F.col(j).squaredNorm() > 0.0)
        {
            active_free.push_back(j);
        }
    }
    MatrixXd Fa(m, static_cast<Idx>(active_free.size()));
    VectorXd cfa(static_cast<Idx>(active_free.size()));
    for (std::size_t j = 0; j < active_free.size(); ++j)
    {
        Fa.col(static_cast<Idx>(j)) = d.F.col(active_free[j]);
        cfa[static_cast<Idx>(j)] = d.c_f[active_free[j]];
    }

    // Total barrier degree
    double nu_deg = static_cast<double>(d.n_lp);
    for (auto s : d.sides)
    {
        nu_deg += static_cast<double>(s);
    }
    nu_deg = std::max(nu_deg, 1.0);

    // Initial point: scaled identities.
    Iterate it;
    it.X.resize(nb);
    it.Z.resize(nb);
    for (std::size_t b = 0; b < nb; ++b)
    {
        const Idx n = d.sides[b];
        std::vector<double> normA(static_cast<std::size_t>(m), 0.0);
        for (const auto& br : d.block_rows[b])
        {
            double s = 0.0;
            for (const auto& e : br.entries)
            {
                s += e.v * e.v;
            }
            normA[static_cast<std::size_t>(br.row)] = std::sqrt(s);
        }
        double ratio = 0.0;
        double maxA = 0.0;
        for (Idx k = 0; k < m; ++k)
        {
            ratio = std::max(ratio, (1.0 + std::abs(d.b[k])) / (1.0 + normA[static_cast<std::size_t>(k)]));
            maxA = std::max(maxA, normA[static_cast<std::size_t>(k)]);
        }
        const double sq = std::sqrt(static_cast<double>(n));
        const double xi = std::max({10.0, sq, sq * ratio});
        const double eta = std::max({10.0, sq, maxA, d.C[b].norm()});
        it.X[b] = xi * MatrixXd::Identity(n, n);
        it.Z[b] = eta * MatrixXd::Identity(n, n);
    }
    {
        const double sq = std::sqrt(static_cast<double>(std::max<Idx>(d.n_lp, 1)));
        double ratio = 0.0;
        double maxA = 0.0;
        for (Idx l = 0; l < d.n_lp; ++l)
        {
            for (const auto& [row, a] : d.lp_cols[static_cast<std::size_t>(l)])
            {
                ratio = std::max(ratio, (1.0 + std::abs(d.b[row])) / (1.0 + std::abs(a)));
                maxA = std::max(maxA, std::abs(a));
            }
        }
        const double xi = std::max({10.0, sq, sq * ratio});
        const double eta = std::max({10.0, sq, maxA, d.c_lp.size() > 0 ? d.c_lp.cwiseAbs().maxCoeff() : 0.0});
        it.x = VectorXd::Constant(d.n_lp, xi);
        it.z = VectorXd::Constant(d.n_lp, eta);
    }
    it.f = VectorXd::Zero(static_cast<Idx>(active_free.size()));
    it.y = VectorXd::Zero(m);

    const double norm_b = d.b.norm();
    double norm_c = d.c_lp.squaredNorm() + cfa.squaredNorm();
    for (const auto& Cb : d.C)
    {
        norm_c += Cb.squaredNorm();
    }
    norm_c = std::sqrt(norm_c);

    std::vector<MatrixXd> Rd(nb);
    VectorXd r_lp;
    VectorXd r_f;
    VectorXd rp;

    auto measure = [&]() {
        Measures ms{};
        std::vector<MatrixXd> AtY;
        VectorXd aty_lp;
        VectorXd aty_f;
        apply_A_adjoint(d, it.y, AtY, aty_lp, aty_f);
        VectorXd Fty = Fa.cols() > 0 ? VectorXd(Fa.transpose() * it.y) : VectorXd(0);
        double dres2 = 0.0;
        double ray2 = 0.0;
        ms.pobj = 0.0;
        double xz = 0.0;
        for (std::size_t b = 0; b < nb; ++b)
        {
            Rd[b] = d.C[b] - AtY[b] - it.Z[b];
            dres2 += Rd[b].squaredNorm();
            ray2 += (AtY[b] + it.Z[b]).squaredNorm();
            ms.pobj += frob_inner(d.C[b], it.X[b]);
            xz += frob_inner(it.X[b], it.Z[b]);
        }
        r_lp = d.c_lp - aty_lp - it.z;
        dres2 += r_lp.squaredNorm();
        ray2 += (aty_lp + it.z).squaredNorm();
        ms.pobj += d.c_lp.dot(it.x);
        xz += it.x.dot(it.z);
        r_f = cfa - Fty;
        dres2 += r_f.squaredNorm();
        ray2 += Fty.squaredNorm();
        ms.pobj += cfa.dot(it.f);

        VectorXd Ax = apply_A(d, it.X, it.x, VectorXd::Zero(n_free));
        if (Fa.cols() > 0)
        {
            Ax += Fa * it.f;
        }
        rp = d.b - Ax;
        ms.dobj = d.b.dot(it.y);
        ms.pinf = rp.norm() / (1.0 + norm_b);
        ms.dinf = std::sqrt(dres2) / (1.0 + norm_c);
        ms.mu = xz / nu_deg;
        // Judge the gap in the units of the original problem so that the scaling of b and c
        // cannot make a loose solve look converged.
        const double unit = scaling.b * scaling.c;
        ms.gap = unit * std::max(std::abs(ms.pobj - ms.dobj), std::abs(xz)) /
                 (1.0 + unit * (std::abs(ms.pobj) + std::abs(ms.dobj)));
        ms.ray_primal_infeasible =
            ms.dobj > 0.0 ? std::sqrt(ray2) / ms.dobj : std::numeric_limits<double>::infinity();
        ms.ray_dual_infeasible =
            ms.pobj < 0.0 ? Ax.norm() / -ms.pobj : std::numeric_limits<double>::infinity();
        return ms;
    };

    Status status = Status::MaxIterations;
    Measures ms{};
    int iter = 0;
    int stall = 0;
    NewtonSystem newton;
    // Best iterate seen so far, by its largest tolerance ratio.
    auto score = [&](const Measures& m) {
        return std::max({m.pinf / options.tol_feas, m.dinf / options.tol_feas, m.gap / options.tol_gap});
    };
    Iterate best = it;
    Measures best_ms{};
    double best_score = std::numeric_limits<double>::infinity();
    int best_iter = 0;
    for (;; ++iter)
    {
        ms = measure();
        log::trace("sdp iter {:3d} pobj {:+.9e} dobj {:+.9e} pinf {:.2e} dinf {:.2e} gap {:.2e}", iter, ms.pobj,
                   ms.dobj, ms.pinf, ms.dinf, ms.gap);
        if (const double sc = score(ms); sc < best_score)
        {
            best = it;
            best_ms = ms;
            best_score = sc;
            best_iter = iter;
        }
        else if (best_score < 1e3 && sc > 100.0 * best_score && iter > best_iter + 3)
        {
            // Accuracy is being lost near the optimum; stop and fall back to the best iterate.
            status = Status::NumericalFailure;
            sol.message = "progress lost near the optimum";
            break;
        }
        if (!std::isfinite(ms.pobj) || !std::isfinite(ms.dobj))
        {
            status = Status::NumericalFailure;
            sol.message = "non-finite iterate";
            break;
        }
        if (ms.pinf <= options.tol_feas && ms.dinf <= options.tol_feas && ms.gap <= options.tol_gap)
        {
            status = Status::Optimal;
            break;
        }
        if (ms.ray_primal_infeasible <= options.tol_infeas)
        {
            status = Status::Infeasible;
            sol.message = "dual improving ray found";
            break;
        }
        if (ms.ray_dual_infeasible <= options.tol_infeas)
        {
            status = Status::Unbounded;
            sol.message = "primal improving ray found";
            break;
        }
        if (iter >= options.max_iterations)
        {
            status = Status::MaxIterations;
            break;
        }

        // Schur complement
        std::vector<MatrixXd> Zinv(nb);
        bool ok = true;
        for (std::size_t b = 0; b < nb; ++b)
        {
            Eigen::LLT<MatrixXd> llt(it.Z[b]);
            if (llt.info() != Eigen::Success)
            {
                ok = false;
                break;
            }
            Zinv[b] = sym(llt.solve(MatrixXd::Identity(d.sides[b], d.sides[b])));
        }
        if (!ok)
        {
            status = Status::NumericalFailure;
            sol.message = "dual slack lost definiteness";
            break;
        }

        MatrixXd M = MatrixXd::Zero(m, m);
        for (std::size_t b = 0; b < nb; ++b)
        {
            const Idx n = d.sides[b];
            const MatrixXd& X = it.X[b];
            const MatrixXd& Zi = Zinv[b];
            MatrixXd G(n, n);
            for (const auto& bj : d.block_rows[b])
            {
                // G = X A_j Z^{-1}, built from the nonzero rows of A_j
                G.setZero();
                Eigen::RowVectorXd T(n);
                for (Idx r : bj.distinct_rows)
                {
                    T.setZero();
                    for (const auto& e : bj.entries)
                    {
                        if (e.p == r)
                        {
                            T += e.v * Zi.row(e.q);
                        }
                    }
                    G.noalias() += X.col(r) * T;
                }
                for (const auto& bi : d.block_rows[b])
                {
                    double s = 0.0;
                    for (const auto& e : bi.entries)
                    {
                        s += e.v * G(e.q, e.p);
                    }
                    M(bi.row, bj.row) += s;
                }
            }
        }
        for (Idx l = 0; l < d.n_lp; ++l)
        {
            const double w = it.x[l] / it.z[l];
            const auto& col = d.lp_cols[static_cast<std::size_t>(l)];
            for (const auto& [ri, ai] : col)
            {
                for (const auto& [rj, aj] : col)
                {
                    M(ri, rj) += w * ai * aj;
                }
            }
        }
        M = sym(M);
        if (!newton.factor(M, Fa))
        {
            status = Status::NumericalFailure;
            sol.message = "Schur complement factorization failed";
            break;
        }

        // Direction for given centering target and second-order correction.
        struct Direction
        {
            std::vector<MatrixXd> dX, dZ;
            VectorXd dx, dz, df, dy;
        };
        auto direction = [&](double target_mu, const Direction* corr) {
            Direction dir;
            std::vector<MatrixXd> H(nb);
            for (std::size_t b = 0; b < nb; ++b)
            {
                const Idx n = d.sides[b];
                MatrixXd Hb = -it.X[b] - it.X[b] * Rd[b] * Zinv[b];
                if (target_mu > 0.0)
                {
                    Hb += target_mu * Zinv[b];
                }
                if (corr)
                {
                    Hb -= corr->dX[b] * corr->dZ[b] * Zinv[b];
                }
                H[b] = std::move(Hb);
                (void)n;
            }
            VectorXd h_lp = -it.x - it.x.cwiseProduct(r_lp).cwiseQuotient(it.z);
            if (target_mu > 0.0)
            {
                h_lp += target_mu * it.z.cwiseInverse();
            }
            if (corr)
            {
                h_lp -= corr->dx.cwiseProduct(corr->dz).cwiseQuotient(it.z);
            }
            const VectorXd rhs = rp - apply_A(d, H, h_lp, VectorXd::Zero(n_free));
            newton.solve(rhs, r_f, dir.dy, dir.df);

            std::vector<MatrixXd> AtdY;
            VectorXd atdy_lp;
            VectorXd atdy_f;
            auto expand = [&] {
                apply_A_adjoint(d, dir.dy, AtdY, atdy_lp, atdy_f);
                dir.dZ.resize(nb);
                dir.dX.resize(nb);
                for (std::size_t b = 0; b < nb; ++b)
                {
                    dir.dZ[b] = Rd[b] - AtdY[b];
                    // H already holds the R_d part of -X dZ Z^{-1}
                    dir.dX[b] = sym(H[b] + it.X[b] * AtdY[b] * Zinv[b]);
                }
                dir.dz = r_lp - atdy_lp;
                dir.dx = h_lp + it.x.cwiseProduct(atdy_lp).cwiseQuotient(it.z);
            };
            expand();

            // Iterative refinement against the primal equations A(dX) + F df = r_p.
            for (int pass = 0; pass < 2; ++pass)
            {
                VectorXd e = rp - apply_A(d, dir.dX, dir.dx, VectorXd::Zero(n_free));
                if (Fa.cols() > 0)
                {
                    e -= Fa * dir.df;
                }
                log::trace("  refine pass {} residual {:.3e} (rp {:.3e})", pass, e.norm(), rp.norm());
                if (!(e.norm() > 1e-14 * (1.0 + rp.norm())))
                {
                    break;
                }
                VectorXd ddy;
                VectorXd ddf;
                newton.solve(e, VectorXd::Zero(Fa.cols()), ddy, ddf);
                dir.dy += ddy;
                if (Fa.cols() > 0)
                {
                    dir.df += ddf;
                }
                expand();
            }
            return dir;
        };

        auto step_lengths = [&](const Direction& dir) {
            double ap = std::numeric_limits<double>::infinity();
            double ad = std::numeric_limits<double>::infinity();
            for (std::size_t b = 0; b < nb; ++b)
            {
                ap = std::min(ap, max_step_psd(it.X[b], dir.dX[b]));
                ad = std::min(ad, max_step_psd(it.Z[b], dir.dZ[b]));
            }
            ap = std::min(ap, max_step_lp(it.x, dir.dx));
            ad = std::min(ad, max_step_lp(it.z, dir.dz));
            return std::pair{ap, ad};
        };

        const Direction pred = direction(0.0, nullptr);
        auto [ap_max, ad_max] = step_lengths(pred);
        const double ap_aff = std::min(1.0, ap_max);
        const double ad_aff = std::min(1.0, ad_max);
        double xz_aff = 0.0;
        for (std::size_t b = 0; b < nb; ++b)
        {
            xz_aff += frob_inner(it.X[b] + ap_aff * pred.dX[b], it.Z[b] + ad_aff * pred.dZ[b]);
        }
        xz_aff += (it.x + ap_aff * pred.dx).dot(it.z + ad_aff * pred.dz);
        const double mu_aff = xz_aff / nu_deg;
        double sigma = ms.mu > 0.0 ? std::pow(std::max(mu_aff, 0.0) / ms.mu, 3.0) : 0.0;
        sigma = std::clamp(sigma, 0.0, 1.0);
        // Keep some centering while the iterate is far from feasible.
        if (std::max(ms.pinf, ms.dinf) > 1e-2)
        {
            sigma = std::max(sigma, 0.1);
        }

        const Direction dir = direction(sigma * ms.mu, &pred);
        auto [ap2, ad2] = step_lengths(dir);
        const double gamma = 0.9 + 0.09 * std::min(ap_aff, ad_aff);
        const double ap = std::min(1.0, gamma * ap2);
        const double ad = std::min(1.0, gamma * ad2);
        if (!(ap > 0.0) || !(ad > 0.0) || !std::isfinite(ap) || !std::isfinite(ad))
        {
            status = Status::NumericalFailure;
            sol.message = "zero step length";
            break;
        }

        for (std::size_t b = 0; b < nb; ++b)
        {
            it.X[b] = sym(it.X[b] + ap * dir.dX[b]);
            it.Z[b] = sym(it.Z[b] + ad * dir.dZ[b]);
        }
        it.x += ap * dir.dx;
        it.z += ad * dir.dz;
        if (it.f.size() > 0)
        {
            it.f += ap * dir.df;
        }
        it.y += ad * dir.dy;

        if (std::max(ap, ad) < 1e-9)
        {
            if (++stall >= 3)
            {
                status = Status::NumericalFailure;
                sol.message = "stalled";
                ++iter;
                ms = measure();
                break;
            }
        }
        else
        {
            stall = 0;
        }
    }

    if (status == Status::NumericalFailure || status == Status::MaxIterations)
    {
        const bool feasible = best_ms.pinf <= options.tol_feas && best_ms.dinf <= options.tol_feas;
        const bool nearly = best_ms.pinf <= options.tol_reduced && best_ms.dinf <= options.tol_reduced;
        const bool close = (nearly && best_ms.gap <= options.tol_reduced) ||
                           (feasible && best_ms.gap <= options.tol_reduced_gap);
        if (close)
        {
            log::debug("sdp: {} ({}); using iterate {} at reduced accuracy", to_string(status), sol.message,
                       best_iter);
            it = best;
            ms = best_ms;
            status = Status::Optimal;
            sol.message = "solved to reduced accuracy";
        }
        else if (std::isfinite(best_score))
        {
            // Still hand back the best point; callers may be able to repair it.
            log::debug("sdp: {} ({}) at iteration {}; best iterate {} had pinf {:.2e} dinf {:.2e} gap {:.2e}",
                       to_string(status), sol.message, iter, best_iter, best_ms.pinf, best_ms.dinf, best_ms.gap);
            it = best;
            ms = best_ms;
        }
    }

    // Unscale into problem variables.
    finish_shapes(sol);
    for (std::size_t b = 0; b < nb; ++b)
    {
        sol.blocks[b] = it.X[b] * scaling.b;
    }
    for (std::size_t i = 0; i < problem.n_scalars; ++i)
    {
        if (auto li = layout.lp_index[i])
        {
            sol.scalars[static_cast<Idx>(i)] = it.x[*li] * scaling.b;
        }
        else
        {
            const Idx fi = *layout.free_index[i];
            auto pos = std::find(active_free.begin(), active_free.end(), fi);
            if (pos != active_free.end())
            {
                sol.scalars[static_cast<Idx>(i)] = it.f[static_cast<Idx>(pos - active_free.begin())] * scaling.b;
            }
        }
    }
    for (Idx k = 0; k < m; ++k)
    {
        sol.duals[layout.kept_rows[static_cast<std::size_t>(k)]] = it.y[k] * scaling.c / scaling.row[k];
    }
    sol.status = status;
    sol.iterations = iter;
    sol.objective_value = evaluate(problem.objective, sol.scalars, sol.blocks);
    sol.dual_objective = ms.dobj * scaling.b * scaling.c;
    sol.dual_residual = ms.dinf;
    sol.duality_gap = ms.gap;

    double bnorm = 0.0;
    double res2 = 0.0;
    for (const auto& eq : problem.equalities)
    {
        const double r = eq.rhs - evaluate(eq.lhs, sol.scalars, sol.blocks);
        res2 += r * r;
        bnorm += eq.rhs * eq.rhs;
    }
    sol.primal_residual = std::sqrt(res2) / (1.0 + std::sqrt(bnorm));
    log::debug("sdp: {} after {} iterations (obj {:.12g}, pinf {:.2e}, dinf {:.2e}, gap {:.2e})", to_string(status),
               iter, sol.objective_value, sol.primal_residual, sol.dual_residual, sol.duality_gap);
    return sol;
}

}  // namespace polyfilt::sdp
