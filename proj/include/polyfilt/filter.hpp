#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "polyfilt/geometry.hpp"
#include "polyfilt/polynomial.hpp"
#include "polyfilt/sos.hpp"

namespace polyfilt {

/// x(k) = A q_d(x(k-1)) + w(k-1),  y(k) = C q_d(x(k)) + v(k), with q_d the graded-lex
/// monomial basis of degree d in n variables.
struct SystemModel
{
    std::size_t n = 0;
    std::size_t m_out = 0;
    int degree = 1;
    Eigen::MatrixXd A;
    Eigen::MatrixXd C;
    /// Optional per-step maps; entry k-1 is used at step k, falling back to A / C.
    std::vector<Eigen::MatrixXd> A_table;
    std::vector<Eigen::MatrixXd> C_table;

    SemialgebraicSet W;    ///< process noise, n variables
    SemialgebraicSet V;    ///< measurement noise, m_out variables
    SemialgebraicSet X0;   ///< initial state, n variables
    /// Boxes enclosing W, V, X0, used only to draw samples in simulation.
    Box W_box;
    Box V_box;
    Box X0_box;

    void validate() const;
    const Eigen::MatrixXd& A_at(std::size_t step) const;
    const Eigen::MatrixXd& C_at(std::size_t step) const;
    /// Polynomials of the transition into `step`, in n variables.
    std::vector<Polynomial> dynamics(std::size_t step) const;
    /// Output polynomials at `step`, in n variables.
    std::vector<Polynomial> output(std::size_t step) const;
    Eigen::VectorXd propagate(const Eigen::VectorXd& x, std::size_t step) const;
    Eigen::VectorXd measure(const Eigen::VectorXd& x, std::size_t step) const;
};

struct FilterConfig
{
    /// SOS half-degree; 0 picks ceil(degree / 2) + 1.
    int sos_half_degree = 0;
    std::size_t points = 20;
    /// Cap on the number of half-spaces of each polytope, the 2n box faces included.
    std::size_t max_halfspaces = 8;
    bool refine = true;
    std::uint64_t seed = 1;
    std::size_t mc_volume_points = 10000;
    double tol_exclude = 1e-7;
    sos::SosOptions sos;
    int threads = 1;

    int half_degree_for(const SystemModel& model) const;
    void validate() const;
};

struct FilterState
{
    std::size_t step = 0;
    /// Constraints on x(k-1), in n variables.
    std::vector<Polynomial> prior;
    std::optional<Polytope> polytope;
    std::optional<Box> box;
};

FilterState initial_state(const SystemModel& model);

struct LabeledCertificate
{
    std::string label;
    sos::Certificate certificate;
};

struct PhaseTimes
{
    double box = 0.0;
    double greedy = 0.0;
    double refine = 0.0;
    double volume = 0.0;
};

struct StepResult
{
    std::size_t step = 0;
    Eigen::VectorXd measurement;
    Box box;
    Polytope polytope;            ///< box faces first, then greedy, then refinement half-spaces
    std::size_t greedy_count = 0;
    std::size_t refine_count = 0;
    double box_volume = 0.0;
    double polytope_volume = 0.0;  ///< Monte-Carlo estimate
    SemialgebraicSet step_set;
    sos::Frame frame;             ///< change of variables used for the step's SDPs
    std::vector<LabeledCertificate> certificates;   ///< one per half-space, same order
    PhaseTimes times;
};

/// The measurement is inconsistent with the model: the step set is empty.
class InconsistentMeasurement : public std::runtime_error
{
public:
    InconsistentMeasurement(std::size_t step, const std::string& what);
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

/// An SDP needed by the filter did not reach optimality.
class SdpFailure : public std::runtime_error
{
public:
    SdpFailure(std::size_t step, sdp::Status status, const std::string& what);
    std::size_t step() const { return step_; }
    sdp::Status status() const { return status_; }

private:
    std::size_t step_;
    sdp::Status status_;
};

/// Constraints over [x(k); x(k-1)] (2n variables): the prior lifted to the x(k-1) block,
/// then process noise with w substituted, then measurement noise with v substituted.
SemialgebraicSet build_step_set(const SystemModel& model, const std::vector<Polynomial>& prior,
                                const Eigen::VectorXd& y, std::size_t step);

struct BoxResult
{
    Box box;
    std::vector<LabeledCertificate> certificates;   ///< upper then lower face per coordinate
};

/// Tight box over the first `dim` coordinates of `set`. Throws InconsistentMeasurement
/// when the set is certified empty and SdpFailure on any other non-optimal direction.
BoxResult bounding_box(const SemialgebraicSet& set, std::size_t dim, int sos_half_degree,
                       const sos::SosOptions& options, int threads = 1, std::size_t step = 0);

struct HalfSpaceChoice
{
    HalfSpace halfspace;
    double objective = 0.0;
    sos::Certificate certificate;
};

/// Half-space over the first `dim` coordinates containing `set` that minimizes the hinge
/// loss of `points` (rows). Solves the omega_1 = +1 and omega_1 = -1 problems and keeps the
/// better one. Returns nothing when neither problem is solved.
std::optional<HalfSpaceChoice> greedy_halfspace(const SemialgebraicSet& set, std::size_t dim,
                                                const Eigen::MatrixXd& points, int sos_half_degree,
                                                const sos::SosOptions& options, int threads = 1);

struct PolytopeResult
{
    Polytope polytope;
    Eigen::MatrixXd remaining;     ///< points still inside the polytope
    std::vector<LabeledCertificate> certificates;   ///< for the added half-spaces
    std::size_t added = 0;
};

/// Starts from `start` and adds greedy half-spaces until no point is discarded or
/// `budget` half-spaces have been added.
PolytopeResult greedy_polytope(const SemialgebraicSet& set, std::size_t dim, const Polytope& start,
                               const Eigen::MatrixXd& points, std::size_t budget, int sos_half_degree,
                               const sos::SosOptions& options, int threads = 1);

/// Best separating half-space for one point, normalized so that max_i |omega_i| = 1.
/// objective = nu - omega.p; negative values separate the point.
std::optional<HalfSpaceChoice> separating_halfspace(const SemialgebraicSet& set, std::size_t dim,
                                                    const Eigen::VectorXd& point, int sos_half_degree,
                                                    const sos::SosOptions& options, int threads = 1);

/// For each point still inside the polytope, adds its separating half-space when the
/// objective is below -tol_exclude, up to `budget` additions.
PolytopeResult refine_polytope(const SemialgebraicSet& set, std::size_t dim, const Polytope& start,
                               const Eigen::MatrixXd& points, std::size_t budget, int sos_half_degree,
                               const sos::SosOptions& options, double tol_exclude, int threads = 1);

/// Chebyshev-style depth max t s.t. omega_j.x + t |omega_j| <= nu_j, t <= 1. Negative
/// values mean the polytope is empty.
double polytope_depth(const Polytope& polytope, const sdp::Options& options = {});

/// Centers and scales for the step-set variables [x(k); x(k-1)]: x(k-1) from `prior_box`,
/// x(k) from the dynamics evaluated on a grid over that box, widened by the process-noise
/// box when it is known. Only affects conditioning, never the certified sets.
sos::Frame step_frame(const SystemModel& model, const Box& prior_box, std::size_t step);

/// One recursion step for measurement y at step state.step + 1. Updates `state`.
StepResult filter_step(const SystemModel& model, FilterState& state, const Eigen::VectorXd& y,
                       const FilterConfig& config);

struct Trajectory
{
    Eigen::MatrixXd states;               ///< (T+1) x n, row 0 is x(0)
    Eigen::MatrixXd measurements;         ///< T x m_out, row k-1 is y(k)
    Eigen::MatrixXd process_noise;        ///< T x n, row k-1 is w(k-1)
    Eigen::MatrixXd measurement_noise;    ///< T x m_out
};

/// Runs the model for `horizon` steps with noises drawn uniformly from W and V.
Trajectory simulate(const SystemModel& model, const Eigen::VectorXd& x0, std::size_t horizon, std::uint64_t seed);

/// Runs the model with the given noise sequences (rows per step).
Trajectory simulate(const SystemModel& model, const Eigen::VectorXd& x0, const Eigen::MatrixXd& process_noise,
                    const Eigen::MatrixXd& measurement_noise);

}  // namespace polyfilt
