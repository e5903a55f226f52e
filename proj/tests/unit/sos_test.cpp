#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "polyfilt/error.hpp"
#include "polyfilt/sos.hpp"

using polyfilt::Polynomial;
using namespace polyfilt::sos;

namespace {

Polynomial var(std::size_t n, std::size_t i)
{
    return Polynomial::variable(n, i);
}

Polynomial cst(std::size_t n, double c)
{
    return Polynomial::constant(n, c);
}

// Two-step set of the cubic example: variables (x1(1), x2(1), x1(0), x2(0)), y(1) = 0.
std::vector<Polynomial> cubic_example_set()
{
    const std::size_t n = 4;
    const auto x1 = var(n, 0), x2 = var(n, 1), p1 = var(n, 2), p2 = var(n, 3);
    const auto w1 = x1 - p1 * p2 * (p1 + p2);
    const auto w2 = x2 - p1 * p2 * (2.0 * p1 + p2);
    return {p1 * p1 + p2 * p2 - cst(n, 0.04), w1 * w1 + w2 * w2 - cst(n, 0.16), -1.0 * (x1 + x2) - cst(n, 0.5),
            x1 + x2 - cst(n, 0.5)};
}

}  // namespace

TEST(MultiplierPlanTest, Degrees)
{
    const auto h = cubic_example_set();
    const auto plan = plan_multipliers(h, 2);
    EXPECT_EQ(plan.sigma0_half_degree, 3);
    EXPECT_EQ(plan.multiplier_half_degrees, (std::vector<int>{1, 0, 1, 1}));
    EXPECT_EQ(block_sides(plan, 4), (std::vector<std::size_t>{35, 5, 1, 5, 5}));
    EXPECT_THROW(plan_multipliers(h, 0), std::invalid_argument);

    const std::vector<Polynomial> disk{var(2, 0) * var(2, 0) + var(2, 1) * var(2, 1) - cst(2, 1.0)};
    const auto p1 = plan_multipliers(disk, 1);
    EXPECT_EQ(block_sides(p1, 2), (std::vector<std::size_t>{3, 1}));
}

TEST(SosTest, DiskSupport)
{
    const std::vector<Polynomial> disk{var(2, 0) * var(2, 0) + var(2, 1) * var(2, 1) - cst(2, 1.0)};
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    for (int k = 0; k < 5; ++k)
    {
        Eigen::Vector2d w(g(rng), g(rng));
        const auto r = min_halfspace_offset(2, disk, w, 1);
        ASSERT_TRUE(r.ok()) << r.message;
        EXPECT_NEAR(r.nu, w.norm(), 1e-6);
        const auto check = verify_certificate(r.certificate);
        EXPECT_TRUE(check.pass);
        EXPECT_LE(check.identity_residual, 1e-6);
    }
}

TEST(SosTest, CubicExampleBound)
{
    const auto start = std::chrono::steady_clock::now();
    const Eigen::Vector2d w(-1.0, -0.5);
    const auto r = min_halfspace_offset(4, cubic_example_set(), w, 2);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ASSERT_TRUE(r.ok()) << r.message;
    EXPECT_GE(r.nu, 0.40);
    EXPECT_LE(r.nu, 0.50);
    EXPECT_NEAR(r.nu, 0.446729, 1e-4);
    EXPECT_LT(secs, 30.0);
    EXPECT_LE(verify_certificate(r.certificate).identity_residual, 1e-6);
}

TEST(SosTest, EmptySetIsUnbounded)
{
    // x^2 + 1 <= 0 has no solutions; nu can decrease without limit.
    const std::vector<Polynomial> empty{var(1, 0) * var(1, 0) + cst(1, 1.0)};
    Eigen::VectorXd w(1);
    w << 1.0;
    const auto r = min_halfspace_offset(1, empty, w, 1);
    EXPECT_EQ(r.status, polyfilt::sdp::Status::Unbounded) << r.message;
}

TEST(SosTest, WholeSpaceHasNoBound)
{
    Eigen::VectorXd w(2);
    w << 1.0, 0.0;
    const auto r = min_halfspace_offset(2, {}, w, 1);
    EXPECT_EQ(r.status, polyfilt::sdp::Status::Infeasible) << r.message;
}

TEST(SosTest, CertificateJsonRoundTrip)
{
    const std::vector<Polynomial> disk{var(2, 0) * var(2, 0) + var(2, 1) * var(2, 1) - cst(2, 1.0)};
    const auto r = min_halfspace_offset(2, disk, Eigen::Vector2d(1.0, 2.0), 1);
    ASSERT_TRUE(r.ok());
    const nlohmann::json j = r.certificate;
    const Certificate back = j.get<Certificate>();
    const auto a = verify_certificate(r.certificate);
    const auto b = verify_certificate(back);
    EXPECT_EQ(a.identity_residual, b.identity_residual);
    EXPECT_TRUE(b.pass);
}

TEST(SosTest, TamperedCertificateFails)
{
    const std::vector<Polynomial> disk{var(2, 0) * var(2, 0) + var(2, 1) * var(2, 1) - cst(2, 1.0)};
    auto r = min_halfspace_offset(2, disk, Eigen::Vector2d(1.0, 0.0), 1);
    ASSERT_TRUE(r.ok());
    auto cert = r.certificate;
    cert.nu -= 0.1;
    EXPECT_FALSE(verify_certificate(cert).pass);
    cert = r.certificate;
    cert.gram[0](0, 0) -= 5.0;
    EXPECT_FALSE(verify_certificate(cert).pass);
}

TEST(SosTest, SoundnessSlackBoundsViolation)
{
    const std::vector<Polynomial> disk{var(2, 0) * var(2, 0) + var(2, 1) * var(2, 1) - cst(2, 1.0)};
    const auto r = min_halfspace_offset(2, disk, Eigen::Vector2d(0.3, -0.7), 1);
    ASSERT_TRUE(r.ok());
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 200; ++k)
    {
        Eigen::Vector2d x(u(rng), u(rng));
        if (x.squaredNorm() > 1.0)
            continue;
        EXPECT_LE(r.omega.dot(x), r.nu + polyfilt::sos::soundness_slack(r.certificate, x) + 1e-12);
    }
}

TEST(SosTest, DimensionChecks)
{
    const std::vector<Polynomial> h{var(3, 0)};
    EXPECT_THROW(min_halfspace_offset(2, h, Eigen::Vector2d(1, 0), 1), polyfilt::DimensionError);
}

TEST(SosTest, FramedDiskSupport)
{
    // Disk of radius 0.5 around (3, -2), solved in coordinates centered on it.
    const auto x = var(2, 0) - cst(2, 3.0), y = var(2, 1) + cst(2, 2.0);
    const std::vector<Polynomial> disk{x * x + y * y - cst(2, 0.25)};
    Frame frame;
    frame.center = Eigen::Vector2d(3.0, -2.0);
    frame.scale = Eigen::Vector2d(0.5, 0.5);
    SosOptions opts;
    opts.frame = frame;
    for (const Eigen::Vector2d w : {Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(-0.6, 0.8), Eigen::Vector2d(2.0, 1.0)})
    {
        const auto r = min_halfspace_offset(2, disk, w, 1, opts);
        ASSERT_TRUE(r.ok()) << r.message;
        EXPECT_NEAR(r.nu, w.dot(frame.center) + 0.5 * w.norm(), 1e-6);
        EXPECT_FALSE(r.certificate.frame.is_identity());
        EXPECT_TRUE(verify_certificate(r.certificate).pass);

        const nlohmann::json j = r.certificate;
        EXPECT_TRUE(j.contains("frame"));
        EXPECT_TRUE(verify_certificate(j.get<Certificate>()).pass);

        auto moved = r.certificate;
        moved.frame.center[0] += 0.1;
        EXPECT_FALSE(verify_certificate(moved).pass);
    }
}

TEST(SosTest, FrameDoesNotChangeTheBound)
{
    const auto h = cubic_example_set();
    const Eigen::Vector2d w(-1.0, -0.5);
    const auto plain = min_halfspace_offset(4, h, w, 2);
    SosOptions opts;
    opts.frame.center = Eigen::Vector4d(0.01, -0.02, 0.0, 0.05);
    opts.frame.scale = Eigen::Vector4d(0.4, 0.3, 0.2, 0.25);
    const auto framed = min_halfspace_offset(4, h, w, 2, opts);
    ASSERT_TRUE(plain.ok() && framed.ok()) << framed.message;
    EXPECT_NEAR(plain.nu, framed.nu, 1e-5);
}

TEST(SosTest, FrameValidation)
{
    Frame f;
    EXPECT_TRUE(f.is_identity());
    f.center = Eigen::Vector2d(0.0, 0.0);
    f.scale = Eigen::Vector2d(1.0, 0.0);
    EXPECT_THROW(f.validate(2), std::invalid_argument);
    f.scale = Eigen::Vector2d(1.0, 2.0);
    EXPECT_NO_THROW(f.validate(2));
    EXPECT_THROW(f.validate(3), polyfilt::DimensionError);
    const Eigen::Vector2d u = f.to_local(Eigen::Vector2d(3.0, 4.0));
    EXPECT_DOUBLE_EQ(u[0], 3.0);
    EXPECT_DOUBLE_EQ(u[1], 2.0);
}
