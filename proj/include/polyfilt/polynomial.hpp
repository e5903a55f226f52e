#pragma once

#include <cstddef>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace polyfilt {

/// Exponent vector of a monomial; one entry per variable.
class Monomial
{
public:
    Monomial() = default;
    explicit Monomial(std::vector<int> exponents);
    Monomial(std::initializer_list<int> exponents);

    /// The constant monomial 1 in `n_vars` variables.
    static Monomial one(std::size_t n_vars);
    /// The monomial x_var.
    static Monomial variable(std::size_t n_vars, std::size_t var);

    std::size_t n_vars() const { return exps_.size(); }
    int degree() const { return degree_; }
    int operator[](std::size_t i) const { return exps_[i]; }
    const std::vector<int>& exponents() const { return exps_; }

    Monomial operator*(const Monomial& other) const;
    double evaluate(std::span<const double> point) const;

    bool operator==(const Monomial& other) const { return exps_ == other.exps_; }
    bool operator!=(const Monomial& other) const { return !(*this == other); }

    std::string to_string() const;

private:
    std::vector<int> exps_;
    int degree_ = 0;
};

/// Graded lexicographic order: ascending total degree, then x1 > x2 > ... within a degree,
/// so that the basis reads [1, x1, ..., xn, x1^2, x1 x2, ...].
struct GradedLexLess
{
    bool operator()(const Monomial& a, const Monomial& b) const;
};

/// Ordered list of all monomials of degree <= max_degree.
class MonomialBasis
{
public:
    MonomialBasis(std::size_t n_vars, int max_degree);

    std::size_t n_vars() const { return n_vars_; }
    int max_degree() const { return max_degree_; }
    std::size_t size() const { return monomials_.size(); }
    const Monomial& operator[](std::size_t i) const { return monomials_[i]; }
    const std::vector<Monomial>& monomials() const { return monomials_; }
    auto begin() const { return monomials_.begin(); }
    auto end() const { return monomials_.end(); }

    /// Position of `m` in the basis, or -1 if absent.
    long index_of(const Monomial& m) const;

    /// q(x): the basis monomials evaluated at a point.
    Eigen::VectorXd evaluate(std::span<const double> point) const;

private:
    std::size_t n_vars_;
    int max_degree_;
    std::vector<Monomial> monomials_;
    std::map<Monomial, std::size_t, GradedLexLess> index_;
};

MonomialBasis monomial_basis(std::size_t n_vars, int degree);

/// binomial(n, k) as an exact integer count.
std::size_t binomial(std::size_t n, std::size_t k);

/// Sparse multivariate polynomial with real coefficients. Immutable value type: every
/// arithmetic operation returns a new polynomial, normalized so that no stored coefficient
/// has magnitude below `kPruneThreshold`.
class Polynomial
{
public:
    using TermMap = std::map<Monomial, double, GradedLexLess>;

    static constexpr double kPruneThreshold = 1e-14;

    Polynomial() = default;
    explicit Polynomial(std::size_t n_vars);
    Polynomial(std::size_t n_vars, TermMap terms);

    static Polynomial constant(std::size_t n_vars, double value);
    static Polynomial variable(std::size_t n_vars, std::size_t var);
    static Polynomial monomial(const Monomial& m, double coef = 1.0);
    /// Affine polynomial sum_i a_i x_i + c.
    static Polynomial affine(std::span<const double> linear, double constant);

    std::size_t n_vars() const { return n_vars_; }
    const TermMap& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }
    /// Degree of the polynomial; the zero polynomial has degree 0.
    int degree() const;
    double coefficient(const Monomial& m) const;

    double evaluate(std::span<const double> point) const;

    Polynomial operator+(const Polynomial& q) const;
    Polynomial operator-(const Polynomial& q) const;
    Polynomial operator-() const;
    Polynomial operator*(const Polynomial& q) const;
    Polynomial operator*(double c) const;
    Polynomial pow(int k) const;

    /// Replaces variable i by images[i]. The result lives in the images' variable space.
    Polynomial substitute(const std::vector<Polynomial>& images) const;

    /// Re-indexes into `n_vars_out` variables, sending variable i to `var_map[i]`.
    Polynomial embed(std::size_t n_vars_out, std::span<const std::size_t> var_map) const;

    /// Largest coefficient magnitude (0 for the zero polynomial).
    double max_abs_coefficient() const;

    bool operator==(const Polynomial& q) const;
    bool operator!=(const Polynomial& q) const { return !(*this == q); }

    std::string to_string() const;

private:
    void normalize();

    std::size_t n_vars_ = 0;
    TermMap terms_;
};

Polynomial operator*(double c, const Polynomial& p);

Polynomial add(const Polynomial& p, const Polynomial& q);
Polynomial scale(const Polynomial& p, double c);
Polynomial multiply(const Polynomial& p, const Polynomial& q);
double evaluate(const Polynomial& p, std::span<const double> point);
Polynomial substitute(const Polynomial& p, const std::vector<Polynomial>& images);

/// One contribution of a Gram entry to a monomial coefficient of q^T Q q.
struct GramEntry
{
    std::size_t row;     ///< row >= col
    std::size_t col;
    double weight;       ///< 1 on the diagonal, 2 off it
};

/// Linear map from the lower triangle of Q to the coefficients of q^T Q q.
using GramMap = std::map<Monomial, std::vector<GramEntry>, GradedLexLess>;

GramMap gram_linear_map(const MonomialBasis& basis);

/// Expands q(x)^T Q q(x) for symmetric Q over `basis`.
Polynomial gram_expand(const MonomialBasis& basis, const Eigen::MatrixXd& Q);

void to_json(nlohmann::json& j, const Polynomial& p);
void from_json(const nlohmann::json& j, Polynomial& p);

}  // namespace polyfilt
