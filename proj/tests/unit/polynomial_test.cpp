#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "polyfilt/error.hpp"
#include "polyfilt/polynomial.hpp"

using polyfilt::Monomial;
using polyfilt::MonomialBasis;
using polyfilt::Polynomial;

namespace {

Polynomial random_poly(std::mt19937_64& rng, std::size_t n_vars, int degree)
{
    std::uniform_real_distribution<double> coef(-2.0, 2.0);
    std::bernoulli_distribution keep(0.6);
    Polynomial p(n_vars);
    for (const auto& m : MonomialBasis(n_vars, degree))
    {
        if (keep(rng))
        {
            p = p + Polynomial::monomial(m, coef(rng));
        }
    }
    return p;
}

std::vector<double> random_point(std::mt19937_64& rng, std::size_t n)
{
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    std::vector<double> x(n);
    for (auto& v : x)
    {
        v = u(rng);
    }
    return x;
}

// Brute-force polynomial evaluation straight from the term list.
double eval_terms(const Polynomial& p, const std::vector<double>& x)
{
    double s = 0.0;
    for (const auto& [m, c] : p.terms())
    {
        double t = c;
        for (std::size_t i = 0; i < x.size(); ++i)
        {
            for (int e = 0; e < m[i]; ++e)
            {
                t *= x[i];
            }
        }
        s += t;
    }
    return s;
}

}  // namespace

TEST(MonomialBasisTest, OrderAndSize)
{
    MonomialBasis b(2, 2);
    ASSERT_EQ(b.size(), 6u);
    EXPECT_EQ(b[0], Monomial({0, 0}));
    EXPECT_EQ(b[1], Monomial({1, 0}));
    EXPECT_EQ(b[2], Monomial({0, 1}));
    EXPECT_EQ(b[3], Monomial({2, 0}));
    EXPECT_EQ(b[4], Monomial({1, 1}));
    EXPECT_EQ(b[5], Monomial({0, 2}));
    for (std::size_t n = 1; n <= 4; ++n)
    {
        for (int d = 0; d <= 4; ++d)
        {
            EXPECT_EQ(MonomialBasis(n, d).size(), polyfilt::binomial(n + d, d));
        }
    }
    EXPECT_EQ(b.index_of(Monomial({1, 1})), 4);
    EXPECT_EQ(b.index_of(Monomial({3, 0})), -1);
}

TEST(PolynomialTest, ArithmeticMatchesPointwiseEvaluation)
{
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial)
    {
        const std::size_t n = 1 + trial % 4;
        const Polynomial p = random_poly(rng, n, 3);
        const Polynomial q = random_poly(rng, n, 2);
        for (int k = 0; k < 5; ++k)
        {
            const auto x = random_point(rng, n);
            const double px = eval_terms(p, x);
            const double qx = eval_terms(q, x);
            EXPECT_NEAR((p + q).evaluate(x), px + qx, 1e-10);
            EXPECT_NEAR((p - q).evaluate(x), px - qx, 1e-10);
            EXPECT_NEAR((p * q).evaluate(x), px * qx, 1e-9);
            EXPECT_NEAR((2.5 * p).evaluate(x), 2.5 * px, 1e-10);
            EXPECT_NEAR(p.pow(3).evaluate(x), px * px * px, 1e-7 * (1 + std::abs(px * px * px)));
        }
    }
}

TEST(PolynomialTest, RingAxioms)
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial)
    {
        const Polynomial p = random_poly(rng, 3, 2);
        const Polynomial q = random_poly(rng, 3, 2);
        const Polynomial r = random_poly(rng, 3, 1);
        EXPECT_TRUE((p * q - q * p).is_zero());
        const Polynomial lhs = p * (q + r);
        const Polynomial rhs = p * q + p * r;
        EXPECT_LE((lhs - rhs).max_abs_coefficient(), 1e-12);
        EXPECT_TRUE((p - p).is_zero());
    }
}

TEST(PolynomialTest, PruneAndDegree)
{
    Polynomial p = Polynomial::monomial(Monomial({2, 1}), 1e-15) + Polynomial::constant(2, 3.0);
    EXPECT_EQ(p.degree(), 0);
    EXPECT_EQ(p.terms().size(), 1u);
    EXPECT_EQ(Polynomial(2).degree(), 0);
    EXPECT_DOUBLE_EQ(p.coefficient(Monomial({0, 0})), 3.0);
}

TEST(PolynomialTest, DimensionMismatchThrows)
{
    const Polynomial p = Polynomial::variable(2, 0);
    const Polynomial q = Polynomial::variable(3, 0);
    EXPECT_THROW(p + q, polyfilt::DimensionError);
    EXPECT_THROW(p * q, polyfilt::DimensionError);
    const std::vector<double> x{1.0};
    EXPECT_THROW((void)p.evaluate(x), polyfilt::DimensionError);
}

TEST(PolynomialTest, SubstituteIsComposition)
{
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial)
    {
        const Polynomial p = random_poly(rng, 2, 3);
        const std::vector<Polynomial> images{random_poly(rng, 3, 2), random_poly(rng, 3, 2)};
        const Polynomial s = p.substitute(images);
        EXPECT_EQ(s.n_vars(), 3u);
        const auto x = random_point(rng, 3);
        const std::vector<double> inner{images[0].evaluate(x), images[1].evaluate(x)};
        EXPECT_NEAR(s.evaluate(x), p.evaluate(inner), 1e-8 * (1 + std::abs(p.evaluate(inner))));
    }
}

TEST(PolynomialTest, QuadraticMapExample)
{
    // x+ = A q(x) with q = [1, x1, x2, x1^2, x1 x2, x2^2]
    const std::vector<double> a1{0, 2, 0, -1, 0, 0};
    const std::vector<double> a2{0, 0, 0.5, 0, 1, 0};
    const MonomialBasis q(2, 2);
    Polynomial f1(2);
    Polynomial f2(2);
    for (std::size_t i = 0; i < q.size(); ++i)
    {
        f1 = f1 + Polynomial::monomial(q[i], a1[i]);
        f2 = f2 + Polynomial::monomial(q[i], a2[i]);
    }
    const std::vector<double> x{1.0, 1.0};
    EXPECT_DOUBLE_EQ(f1.evaluate(x), 1.0);
    EXPECT_DOUBLE_EQ(f2.evaluate(x), 1.5);
}

TEST(PolynomialTest, EmbedMovesVariables)
{
    const Polynomial p = Polynomial::variable(2, 0) * Polynomial::variable(2, 1).pow(2);
    const std::vector<std::size_t> map{3, 1};
    const Polynomial e = p.embed(4, map);
    const std::vector<double> x{7.0, 2.0, 9.0, 3.0};
    EXPECT_DOUBLE_EQ(e.evaluate(x), 3.0 * 4.0);
}

TEST(GramTest, ExpandMatchesQuadraticForm)
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 10; ++trial)
    {
        const MonomialBasis basis(3, 2);
        const auto n = static_cast<Eigen::Index>(basis.size());
        Eigen::MatrixXd R(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                R(i, j) = g(rng);
        const Eigen::MatrixXd Q = R * R.transpose();
        const Polynomial p = polyfilt::gram_expand(basis, Q);
        for (int k = 0; k < 5; ++k)
        {
            const auto x = random_point(rng, 3);
            const Eigen::VectorXd qx = basis.evaluate(x);
            const double expected = qx.dot(Q * qx);
            EXPECT_NEAR(p.evaluate(x), expected, 1e-9 * (1 + std::abs(expected)));
        }
    }
}

TEST(GramTest, LinearMapCoversEveryEntryOnce)
{
    const MonomialBasis basis(2, 3);
    const auto map = polyfilt::gram_linear_map(basis);
    std::size_t count = 0;
    for (const auto& [m, entries] : map)
    {
        EXPECT_LE(m.degree(), 6);
        for (const auto& e : entries)
        {
            EXPECT_GE(e.row, e.col);
            EXPECT_DOUBLE_EQ(e.weight, e.row == e.col ? 1.0 : 2.0);
            ++count;
        }
    }
    EXPECT_EQ(count, basis.size() * (basis.size() + 1) / 2);
    EXPECT_EQ(map.size(), MonomialBasis(2, 6).size());
}

TEST(PolynomialTest, JsonRoundTrip)
{
    std::mt19937_64 rng(21);
    const Polynomial p = random_poly(rng, 4, 3);
    const nlohmann::json j = p;
    const Polynomial q = j.get<Polynomial>();
    EXPECT_EQ(p, q);
    EXPECT_EQ(j.dump(), nlohmann::json(q).dump());
}
