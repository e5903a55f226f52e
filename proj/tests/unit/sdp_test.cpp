#include <gtest/gtest.h>

#include <random>

#include "polyfilt/error.hpp"
#include "polyfilt/sdp.hpp"
#include "sdp_instances.hpp"

using namespace polyfilt::sdp;

TEST(SdpTest, ScalarLowerBound)
{
    // min y  s.t.  y - s = 3, s >= 0
    SdpProblem p;
    const auto y = p.add_scalar();
    const auto s = p.add_scalar(true);
    p.objective.scalars.push_back({y, 1.0});
    p.equalities.push_back({{{{y, 1.0}, {s, -1.0}}, {}}, 3.0});
    const Solution sol = solve(p);
    ASSERT_EQ(sol.status, Status::Optimal) << sol.message;
    EXPECT_NEAR(sol.objective_value, 3.0, 1e-6);
    EXPECT_NEAR(sol.scalars[0], 3.0, 1e-6);
}

TEST(SdpTest, TwoByTwoBlock)
{
    // min y  s.t.  [[y, 1], [1, y]] PSD
    SdpProblem p;
    const auto y = p.add_scalar();
    const auto b = p.add_block(2);
    p.objective.scalars.push_back({y, 1.0});
    p.equalities.push_back({{{{y, 1.0}}, {{b, 0, 0, -1.0}}}, 0.0});
    p.equalities.push_back({{{{y, 1.0}}, {{b, 1, 1, -1.0}}}, 0.0});
    p.equalities.push_back({{{}, {{b, 1, 0, 1.0}}}, 1.0});
    const Solution sol = solve(p);
    ASSERT_EQ(sol.status, Status::Optimal) << sol.message;
    EXPECT_NEAR(sol.objective_value, 1.0, 1e-6);
    const auto rep = check_solution(p, sol, 1e-6, 1e-8);
    EXPECT_TRUE(rep.ok());
}

TEST(SdpTest, RandomKnownOptimum)
{
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 10; ++trial)
    {
        const auto inst = polyfilt::testkit::random_known_sdp(rng, {3, 4, 2}, 6 + trial % 5);
        const Solution sol = solve(inst.problem);
        ASSERT_EQ(sol.status, Status::Optimal) << "trial " << trial << ": " << sol.message;
        EXPECT_LE(std::abs(sol.objective_value - inst.optimum), 1e-6 * std::max(1.0, std::abs(inst.optimum)))
            << "trial " << trial;
    }
}

TEST(SdpTest, ObjectiveScalingKeepsSolution)
{
    std::mt19937_64 rng(77);
    auto inst = polyfilt::testkit::random_known_sdp(rng, {3, 3}, 5);
    const Solution a = solve(inst.problem);
    for (auto& t : inst.problem.objective.entries)
    {
        t.coef *= 1000.0;
    }
    const Solution b = solve(inst.problem);
    ASSERT_EQ(a.status, Status::Optimal);
    ASSERT_EQ(b.status, Status::Optimal);
    EXPECT_NEAR(b.objective_value / 1000.0, a.objective_value, 1e-6 * std::max(1.0, std::abs(a.objective_value)));
    for (std::size_t k = 0; k < a.blocks.size(); ++k)
    {
        EXPECT_LE((a.blocks[k] - b.blocks[k]).cwiseAbs().maxCoeff(), 1e-4);
    }
}

TEST(SdpTest, DetectsInfeasibility)
{
    // X PSD 2x2 with X00 = -1
    SdpProblem p;
    const auto b = p.add_block(2);
    p.objective.entries.push_back({b, 1, 1, 1.0});
    p.equalities.push_back({{{}, {{b, 0, 0, 1.0}}}, -1.0});
    const Solution sol = solve(p);
    EXPECT_EQ(sol.status, Status::Infeasible) << sol.message;
}

TEST(SdpTest, DetectsInfeasibleScalars)
{
    // s >= 0, t >= 0, s + t = -1
    SdpProblem p;
    const auto s = p.add_scalar(true);
    const auto t = p.add_scalar(true);
    p.objective.scalars.push_back({s, 1.0});
    p.equalities.push_back({{{{s, 1.0}, {t, 1.0}}, {}}, -1.0});
    EXPECT_EQ(solve(p).status, Status::Infeasible);
}

TEST(SdpTest, DetectsUnboundedness)
{
    // min -X01 with X00 = 1: X11 can grow so X01 is unbounded.
    SdpProblem p;
    const auto b = p.add_block(2);
    p.objective.entries.push_back({b, 1, 0, -1.0});
    p.equalities.push_back({{{}, {{b, 0, 0, 1.0}}}, 1.0});
    const Solution sol = solve(p);
    EXPECT_EQ(sol.status, Status::Unbounded) << sol.message;
}

TEST(SdpTest, EmptyRowWithNonzeroRhsIsInfeasible)
{
    SdpProblem p;
    const auto y = p.add_scalar();
    p.objective.scalars.push_back({y, 1.0});
    p.equalities.push_back({{}, 1.0});
    p.equalities.push_back({{{{y, 1.0}}, {}}, 2.0});
    EXPECT_EQ(solve(p).status, Status::Infeasible);
}

TEST(SdpTest, ValidationAndSizeCap)
{
    SdpProblem p;
    p.add_block(2);
    p.equalities.push_back({{{}, {{0, 2, 0, 1.0}}}, 0.0});
    EXPECT_THROW(solve(p), polyfilt::DimensionError);

    SdpProblem big;
    big.add_block(400);
    Options o;
    o.max_variables = 1000;
    EXPECT_THROW(solve(big, o), ProblemTooLarge);
}

TEST(SdpTest, CheckSolutionFlagsBadPoint)
{
    SdpProblem p;
    const auto b = p.add_block(2);
    p.equalities.push_back({{{}, {{b, 0, 0, 1.0}}}, 1.0});
    Solution s;
    s.scalars = Eigen::VectorXd(0);
    s.blocks = {Eigen::Matrix2d{{1.0, 2.0}, {2.0, 1.0}}};
    const auto rep = check_solution(p, s, 1e-8, 1e-8);
    EXPECT_TRUE(rep.equalities_ok);
    EXPECT_FALSE(rep.psd_ok);
    EXPECT_NEAR(rep.min_eigenvalues[0], -1.0, 1e-12);
}
