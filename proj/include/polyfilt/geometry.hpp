#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "polyfilt/polynomial.hpp"

namespace polyfilt {

/// Default membership tolerance for half-space and polytope tests.
inline constexpr double kContainsTol = 1e-9;

/// Deterministic random source: mt19937_64 with doubles taken from the top 53 bits.
class Rng
{
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

/// {x : omega . x <= nu}
struct HalfSpace
{
    Eigen::VectorXd omega;
    double nu = 0.0;

    bool contains(const Eigen::VectorXd& x, double tol = kContainsTol) const;
    /// omega.x - nu as a polynomial in n_vars variables (omega padded with zeros).
    Polynomial as_constraint(std::size_t n_vars) const;
};

struct Box
{
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    std::size_t dim() const { return static_cast<std::size_t>(lower.size()); }
    double volume() const;
    bool contains(const Eigen::VectorXd& x, double tol = kContainsTol) const;
    /// Copy with every side widened to at least `min_width` around its midpoint.
    Box inflated(double min_width) const;
};

class Polytope
{
public:
    Polytope() = default;
    explicit Polytope(std::vector<HalfSpace> halfspaces);
    static Polytope from_box(const Box& box);

    std::size_t dim() const;
    const std::vector<HalfSpace>& halfspaces() const { return halfspaces_; }
    std::size_t size() const { return halfspaces_.size(); }
    void add(HalfSpace h);

    bool contains(const Eigen::VectorXd& x, double tol = kContainsTol) const;

private:
    std::vector<HalfSpace> halfspaces_;
};

/// {x : h_s(x) <= 0 for every s}
struct SemialgebraicSet
{
    std::size_t n_vars = 0;
    std::vector<Polynomial> constraints;

    bool contains(const Eigen::VectorXd& x, double tol = 0.0) const;
};

/// {z : |z_i - c_i| <= r for all i} as 2n affine constraints.
SemialgebraicSet inf_norm_ball(std::size_t n, double radius, const Eigen::VectorXd& center = {});
/// {z : ||z - c||^2 - r^2 <= 0}
SemialgebraicSet two_norm_ball(std::size_t n, double radius, const Eigen::VectorXd& center = {});
/// The box as 2n affine constraints.
SemialgebraicSet box_set(const Box& box);
/// Box [c - r, c + r].
Box cube(std::size_t n, double radius, const Eigen::VectorXd& center = {});

/// `count` points uniform in the box, one per row.
Eigen::MatrixXd sample_uniform_box(const Box& box, std::size_t count, Rng& rng);

/// Monte-Carlo volume of the polytope: box volume times the fraction of box samples inside.
double mc_volume(const Polytope& polytope, const Box& box, std::size_t count, Rng& rng);

/// Up to `count` points of `set` found by sampling `box`; gives up after `max_draws` draws.
Eigen::MatrixXd rejection_sample(const SemialgebraicSet& set, const Box& box, std::size_t count, Rng& rng,
                                 std::size_t max_draws);

void to_json(nlohmann::json& j, const HalfSpace& h);
void from_json(const nlohmann::json& j, HalfSpace& h);
void to_json(nlohmann::json& j, const Box& b);
void from_json(const nlohmann::json& j, Box& b);
void to_json(nlohmann::json& j, const Polytope& p);
void from_json(const nlohmann::json& j, Polytope& p);

nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

}  // namespace polyfilt
