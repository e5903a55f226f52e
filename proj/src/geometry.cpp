#include "polyfilt/geometry.hpp"

#include <algorithm>

#include "polyfilt/error.hpp"

namespace polyfilt {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

bool HalfSpace::contains(const VectorXd& x, double tol) const
{
    require_dims(x.size() == omega.size(), "half-space: point dimension");
    return omega.dot(x) <= nu + tol;
}

Polynomial HalfSpace::as_constraint(std::size_t n_vars) const
{
    require_dims(static_cast<std::size_t>(omega.size()) <= n_vars, "half-space wider than variable space");
    std::vector<double> lin(n_vars, 0.0);
    for (Index i = 0; i < omega.size(); ++i)
    {
        lin[static_cast<std::size_t>(i)] = omega[i];
    }
    return Polynomial::affine(lin, -nu);
}

double Box::volume() const
{
    require_dims(lower.size() == upper.size(), "box: bound lengths differ");
    return (upper - lower).cwiseMax(0.0).prod();
}

bool Box::contains(const VectorXd& x, double tol) const
{
    require_dims(x.size() == lower.size(), "box: point dimension");
    return ((x - lower).array() >= -tol).all() && ((upper - x).array() >= -tol).all();
}

Box Box::inflated(double min_width) const
{
    Box b = *this;
    for (Index i = 0; i < lower.size(); ++i)
    {
        if (upper[i] - lower[i] < min_width)
        {
            const double mid = 0.5 * (upper[i] + lower[i]);
            b.lower[i] = mid - 0.5 * min_width;
            b.upper[i] = mid + 0.5 * min_width;
        }
    }
    return b;
}

Polytope::Polytope(std::vector<HalfSpace> halfspaces) : halfspaces_(std::move(halfspaces))
{
    for (const auto& h : halfspaces_)
    {
        require_dims(h.omega.size() == halfspaces_.front().omega.size(), "polytope: mixed dimensions");
    }
}

Polytope Polytope::from_box(const Box& box)
{
    require_dims(box.lower.size() == box.upper.size(), "box: bound lengths differ");
    const Index n = box.lower.size();
    std::vector<HalfSpace> hs;
    for (Index i = 0; i < n; ++i)
    {
        VectorXd e = VectorXd::Zero(n);
        e[i] = 1.0;
        hs.push_back({e, box.upper[i]});
        hs.push_back({-e, -box.lower[i]});
    }
    return Polytope(std::move(hs));
}

std::size_t Polytope::dim() const
{
    return halfspaces_.empty() ? 0 : static_cast<std::size_t>(halfspaces_.front().omega.size());
}

void Polytope::add(HalfSpace h)
{
    require_dims(halfspaces_.empty() || h.omega.size() == halfspaces_.front().omega.size(),
                 "polytope: mixed dimensions");
    halfspaces_.push_back(std::move(h));
}

bool Polytope::contains(const VectorXd& x, double tol) const
{
    return std::all_of(halfspaces_.begin(), halfspaces_.end(), [&](const HalfSpace& h) { return h.contains(x, tol); });
}

bool SemialgebraicSet::contains(const VectorXd& x, double tol) const
{
    require_dims(static_cast<std::size_t>(x.size()) == n_vars, "set: point dimension");
    const std::span<const double> pt(x.data(), n_vars);
    return std::all_of(constraints.begin(), constraints.end(),
                       [&](const Polynomial& h) { return h.evaluate(pt) <= tol; });
}

namespace {

VectorXd center_or_zero(std::size_t n, const VectorXd& center)
{
    if (center.size() == 0)
    {
        return VectorXd::Zero(static_cast<Index>(n));
    }
    require_dims(static_cast<std::size_t>(center.size()) == n, "ball center dimension");
    return center;
}

}  // namespace

SemialgebraicSet box_set(const Box& box)
{
    require_dims(box.lower.size() == box.upper.size(), "box: bound lengths differ");
    SemialgebraicSet s;
    s.n_vars = box.dim();
    for (Index i = 0; i < box.lower.size(); ++i)
    {
        const auto xi = Polynomial::variable(s.n_vars, static_cast<std::size_t>(i));
        s.constraints.push_back(xi - Polynomial::constant(s.n_vars, box.upper[i]));
        s.constraints.push_back(Polynomial::constant(s.n_vars, box.lower[i]) - xi);
    }
    return s;
}

Box cube(std::size_t n, double radius, const VectorXd& center)
{
    const VectorXd c = center_or_zero(n, center);
    return {c.array() - radius, c.array() + radius};
}

SemialgebraicSet inf_norm_ball(std::size_t n, double radius, const VectorXd& center)
{
    return box_set(cube(n, radius, center));
}

SemialgebraicSet two_norm_ball(std::size_t n, double radius, const VectorXd& center)
{
    const VectorXd c = center_or_zero(n, center);
    Polynomial p = Polynomial::constant(n, -radius * radius);
    for (std::size_t i = 0; i < n; ++i)
    {
        const auto d = Polynomial::variable(n, i) - Polynomial::constant(n, c[static_cast<Index>(i)]);
        p = p + d * d;
    }
    return {n, {p}};
}

MatrixXd sample_uniform_box(const Box& box, std::size_t count, Rng& rng)
{
    const Index n = box.lower.size();
    require_dims(box.upper.size() == n, "box: bound lengths differ");
    MatrixXd pts(static_cast<Index>(count), n);
    for (Index i = 0; i < pts.rows(); ++i)
    {
        for (Index j = 0; j < n; ++j)
        {
            pts(i, j) = rng.uniform(box.lower[j], box.upper[j]);
        }
    }
    return pts;
}

double mc_volume(const Polytope& polytope, const Box& box, std::size_t count, Rng& rng)
{
    if (count == 0)
    {
        return box.volume();
    }
    const MatrixXd pts = sample_uniform_box(box, count, rng);
    std::size_t inside = 0;
    for (Index i = 0; i < pts.rows(); ++i)
    {
        if (polytope.contains(pts.row(i).transpose()))
        {
            ++inside;
        }
    }
    return box.volume() * static_cast<double>(inside) / static_cast<double>(count);
}

MatrixXd rejection_sample(const SemialgebraicSet& set, const Box& box, std::size_t count, Rng& rng,
                          std::size_t max_draws)
{
    require_dims(box.dim() == set.n_vars, "rejection sampling: box dimension");
    std::vector<VectorXd> kept;
    VectorXd x(box.lower.size());
    for (std::size_t draw = 0; draw < max_draws && kept.size() < count; ++draw)
    {
        for (Index j = 0; j < x.size(); ++j)
        {
            x[j] = rng.uniform(box.lower[j], box.upper[j]);
        }
        if (set.contains(x))
        {
            kept.push_back(x);
        }
    }
    MatrixXd pts(static_cast<Index>(kept.size()), x.size());
    for (std::size_t i = 0; i < kept.size(); ++i)
    {
        pts.row(static_cast<Index>(i)) = kept[i].transpose();
    }
    return pts;
}

nlohmann::json vector_to_json(const VectorXd& v)
{
    return std::vector<double>(v.data(), v.data() + v.size());
}

VectorXd vector_from_json(const nlohmann::json& j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

void to_json(nlohmann::json& j, const HalfSpace& h)
{
    j = {{"omega", vector_to_json(h.omega)}, {"nu", h.nu}};
}

void from_json(const nlohmann::json& j, HalfSpace& h)
{
    h.omega = vector_from_json(j.at("omega"));
    h.nu = j.at("nu").get<double>();
}

void to_json(nlohmann::json& j, const Box& b)
{
    j = {{"lower", vector_to_json(b.lower)}, {"upper", vector_to_json(b.upper)}};
}

void from_json(const nlohmann::json& j, Box& b)
{
    b.lower = vector_from_json(j.at("lower"));
    b.upper = vector_from_json(j.at("upper"));
    require_dims(b.lower.size() == b.upper.size(), "box: bound lengths differ");
}

void to_json(nlohmann::json& j, const Polytope& p)
{
    j = nlohmann::json{{"halfspaces", p.halfspaces()}};
}

void from_json(const nlohmann::json& j, Polytope& p)
{
    p = Polytope(j.at("halfspaces").get<std::vector<HalfSpace>>());
}

}  // namespace polyfilt
