#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "polyfilt/polynomial.hpp"
#include "polyfilt/sdp.hpp"

namespace polyfilt::sos {

/// Half-degrees (Gram basis degrees) chosen for the multipliers of a certificate
///   nu - omega.x = sigma_0(x) - sum_s sigma_s(x) h_s(x),
/// valid on K = {x : h_s(x) <= 0 for all s}.
struct MultiplierPlan
{
    int sos_half_degree = 1;
    int sigma0_half_degree = 1;
    std::vector<int> multiplier_half_degrees;   ///< one per constraint
    int identity_degree = 2;                     ///< monomials matched up to this degree
};

/// sigma_s gets half-degree max(0, d - ceil(deg h_s / 2)); sigma_0 is large enough to
/// balance every product sigma_s h_s. Throws std::invalid_argument for d < 1.
MultiplierPlan plan_multipliers(const std::vector<Polynomial>& constraints, int sos_half_degree);

/// Gram block sides implied by a plan, sigma_0 first.
std::vector<std::size_t> block_sides(const MultiplierPlan& plan, std::size_t n_vars);

/// How the normal omega of the half-space omega.x <= nu is chosen. omega acts on the first
/// `dim` variables; the remaining variables get zero weight.
struct DirectionSpec
{
    std::size_t dim = 0;
    /// Fully fixed direction when fixed.size() == dim.
    Eigen::VectorXd fixed;
    /// Otherwise omega[pinned] = pinned_value and the other entries are decision variables.
    std::size_t pinned = 0;
    double pinned_value = 1.0;
    /// Restrict the free entries to |omega_j| <= 1.
    bool box_others = false;

    static DirectionSpec fixed_direction(const Eigen::VectorXd& omega);
    static DirectionSpec normalized(std::size_t dim, std::size_t pinned, double value, bool box_others);
    bool is_fixed() const { return static_cast<std::size_t>(fixed.size()) == dim && dim > 0; }
};

/// Affine change of variables x = center + scale .* u used to condition the SDP. The
/// multipliers are found in u; omega and nu always refer to x. Empty means u = x.
struct Frame
{
    Eigen::VectorXd center;
    Eigen::VectorXd scale;

    bool is_identity() const { return center.size() == 0; }
    /// The polynomial p(center + scale .* u) in the variables u.
    Polynomial to_local(const Polynomial& p) const;
    Eigen::VectorXd to_local(const Eigen::VectorXd& x) const;
    void validate(std::size_t n_vars) const;
};

enum class Objective
{
    MinOffset,   ///< minimize nu
    Hinge,       ///< minimize sum_i max(0, nu - omega.p_i)
    Separate,    ///< minimize nu - omega.p for a single point p
};

struct ContainmentSpec
{
    std::size_t n_vars = 0;
    std::vector<Polynomial> constraints;
    int sos_half_degree = 1;
    DirectionSpec direction;
    Objective objective = Objective::MinOffset;
    /// Points in the first `direction.dim` coordinates (one per row). Hinge uses all rows,
    /// Separate uses row 0.
    Eigen::MatrixXd points;
    Frame frame;
};

struct Certificate
{
    std::size_t n_vars = 0;
    std::vector<Polynomial> constraints;
    Eigen::VectorXd omega;            ///< length n_vars
    double nu = 0.0;
    std::vector<int> half_degrees;    ///< sigma_0 first, then one per constraint
    std::vector<Eigen::MatrixXd> gram;   ///< in the frame's local variables
    Frame frame;
};

struct CertificateCheck
{
    double identity_residual = 0.0;   ///< largest coefficient of the identity mismatch
    std::vector<double> min_eigenvalues;
    bool pass = false;
};

/// Recomputes the polynomial identity from the stored Gram matrices and checks the
/// eigenvalues, each against tol_psd times the largest entry of its block (at least 1).
/// Independent of the solver.
CertificateCheck verify_certificate(const Certificate& cert, double tol_identity = 1e-6, double tol_psd = 1e-8);

/// Upper bound at x of how far omega.x can exceed nu given the certificate's inexactness:
/// the identity mismatch at x plus the effect of negative Gram eigenvalues.
double soundness_slack(const Certificate& cert, const Eigen::VectorXd& x);

struct SosOptions
{
    sdp::Options sdp;
    double tol_identity = 1e-6;
    /// Used for containment problems whose spec leaves the frame empty.
    Frame frame;
};

struct SosResult
{
    sdp::Status status = sdp::Status::NumericalFailure;
    Eigen::VectorXd omega;           ///< length direction.dim
    double nu = 0.0;
    double objective = 0.0;
    Certificate certificate;
    int iterations = 0;
    std::string message;

    bool ok() const { return status == sdp::Status::Optimal; }
};

/// Builds the SDP for a containment spec. Exposed for inspection and size checks.
sdp::SdpProblem build_sdp(const ContainmentSpec& spec);

SosResult solve_containment(const ContainmentSpec& spec, const SosOptions& options = {});

/// Smallest certified nu with omega.x <= nu on K.
SosResult min_halfspace_offset(std::size_t n_vars, const std::vector<Polynomial>& constraints,
                               const Eigen::VectorXd& omega, int sos_half_degree, const SosOptions& options = {});

void to_json(nlohmann::json& j, const Certificate& c);
void from_json(const nlohmann::json& j, Certificate& c);

}  // namespace polyfilt::sos
