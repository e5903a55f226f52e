#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace polyfilt::sdp {

/// coef * s[var] for a scalar decision variable.
struct ScalarTerm
{
    std::size_t var;
    double coef;
};

/// coef * X_b(row, col) for an entry of a symmetric PSD block. (row, col) and (col, row)
/// name the same variable.
struct MatrixTerm
{
    std::size_t block;
    std::size_t row;
    std::size_t col;
    double coef;
};

struct LinearFunctional
{
    std::vector<ScalarTerm> scalars;
    std::vector<MatrixTerm> entries;

    bool empty() const { return scalars.empty() && entries.empty(); }
};

struct Equality
{
    LinearFunctional lhs;
    double rhs = 0.0;
};

/// minimize objective(s, X) subject to equalities, X_b PSD, s_i >= 0 where flagged.
struct SdpProblem
{
    std::size_t n_scalars = 0;
    std::vector<bool> nonneg;              ///< per scalar; empty means all free
    std::vector<std::size_t> block_sides;
    LinearFunctional objective;
    std::vector<Equality> equalities;

    std::size_t add_scalar(bool nonnegative = false);
    std::size_t add_block(std::size_t side);
    bool is_nonneg(std::size_t var) const { return !nonneg.empty() && nonneg[var]; }

    /// Total count of scalar unknowns including the lower triangles of all blocks.
    std::size_t variable_count() const;

    /// Checks index ranges and finiteness; throws DimensionError / std::invalid_argument.
    void validate() const;
};

enum class Status
{
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
    NumericalFailure,
};

const char* to_string(Status s);

struct Options
{
    double tol_feas = 1e-7;
    double tol_gap = 1e-7;
    double tol_psd = 1e-8;
    /// When the iteration stalls or degrades, the best iterate is still reported as optimal
    /// if its residuals and gap are below this.
    double tol_reduced = 1e-6;
    /// Gap allowed on that fallback when the residuals meet tol_feas. A loose gap only costs
    /// tightness; feasibility is what callers rely on.
    double tol_reduced_gap = 1e-5;
    /// Ratio threshold for accepting a normalized infeasibility/unboundedness ray.
    double tol_infeas = 1e-8;
    int max_iterations = 200;
    /// Refuse problems with more unknowns than this.
    std::size_t max_variables = 50000;
};

struct Solution
{
    Status status = Status::NumericalFailure;
    Eigen::VectorXd scalars;
    std::vector<Eigen::MatrixXd> blocks;
    Eigen::VectorXd duals;            ///< one multiplier per equality
    double objective_value = 0.0;
    double dual_objective = 0.0;
    double primal_residual = 0.0;     ///< ||b - A(x)|| / (1 + ||b||)
    double dual_residual = 0.0;
    double duality_gap = 0.0;         ///< |p - d| / (1 + |p| + |d|)
    int iterations = 0;
    std::string message;
};

/// The problem exceeds Options::max_variables.
class ProblemTooLarge : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// Primal-dual path-following interior-point method (HKM direction, Mehrotra
/// predictor-corrector, infeasible start). Free scalars are kept out of the cone and
/// handled by block elimination in the Newton system.
Solution solve(const SdpProblem& problem, const Options& options = {});

struct ResidualReport
{
    double max_equality_residual = 0.0;     ///< max_k |lhs_k - rhs_k|
    std::vector<double> min_eigenvalues;    ///< per block
    double min_nonneg_scalar = 0.0;         ///< smallest flagged scalar (0 if none)
    double objective_value = 0.0;
    bool equalities_ok = false;
    bool psd_ok = false;
    bool ok() const { return equalities_ok && psd_ok; }
};

/// Recomputes residuals of `solution` against `problem` from scratch.
ResidualReport check_solution(const SdpProblem& problem, const Solution& solution, double tol_feas,
                              double tol_psd);

double evaluate(const LinearFunctional& f, const Eigen::VectorXd& scalars,
                const std::vector<Eigen::MatrixXd>& blocks);

/// Debug dump in construction order.
nlohmann::json to_json(const SdpProblem& problem);

}  // namespace polyfilt::sdp
