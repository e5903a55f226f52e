#include <gtest/gtest.h>

#include <string>

#include "polyfilt/error.hpp"
#include "polyfilt/scenario.hpp"

using namespace polyfilt;

namespace {

const std::string kSource = POLYFILT_SOURCE_DIR;

std::string minimal(const std::string& filter = "{}", const std::string& tail = R"("measurements": [[0.1]])")
{
    return R"({
  "version": 1,
  "model": {
    "n": 1, "m_out": 1, "degree": 1,
    "A": [[0.0, 0.5]], "C": [[0.0, 1.0]],
    "process_noise": {"norm": "inf", "radius": 0.01},
    "measurement_noise": {"norm": "2", "radius": 0.05},
    "initial_set": {"box": {"lower": [0.0], "upper": [1.0]}}
  },
  "filter": )" + filter + ",\n  " + tail + "\n}";
}

std::string error_of(const std::string& text)
{
    try
    {
        parse_scenario(text, "test.json");
    }
    catch (const ConfigError& e)
    {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(ScenarioTest, ShippedLotkaVolterra)
{
    const auto sc = load_scenario(kSource + "/scenarios/lotka_volterra.json");
    EXPECT_EQ(sc.horizon, 40u);
    EXPECT_EQ(sc.model.n, 2u);
    EXPECT_EQ(sc.filter.max_halfspaces, 8u);
    EXPECT_EQ(sc.filter.points, 20u);
    ASSERT_TRUE(sc.simulation.has_value());
    EXPECT_EQ(sc.simulation->x0, Eigen::Vector2d(0.3, 0.8));
    // Initial box edges are exactly on the boundary of X0.
    EXPECT_TRUE(sc.model.X0.contains(Eigen::Vector2d(0.28, 0.82)));
    EXPECT_FALSE(sc.model.X0.contains(Eigen::Vector2d(0.27, 0.8)));
    EXPECT_NEAR(sc.model.propagate(Eigen::Vector2d(0.3, 0.8), 1)[1], 0.45 * 0.8 + 1.1 * 0.24, 1e-15);
}

TEST(ScenarioTest, ShippedExampleOne)
{
    const auto sc = load_scenario(kSource + "/scenarios/example1.json");
    EXPECT_EQ(sc.horizon, 1u);
    ASSERT_TRUE(sc.measurements.has_value());
    ASSERT_EQ(sc.report_directions.size(), 1u);
    EXPECT_EQ(sc.report_directions[0], Eigen::Vector2d(-1.0, -0.5));
    // f(1, 1) = (2, 3) for the cubic dynamics.
    EXPECT_EQ(sc.model.propagate(Eigen::Vector2d(1.0, 1.0), 1), Eigen::Vector2d(2.0, 3.0));
}

TEST(ScenarioTest, DefaultsAndOverrides)
{
    const auto sc = parse_scenario(minimal(R"({"points": 7, "seed": 99, "refine": false})"));
    EXPECT_EQ(sc.filter.points, 7u);
    EXPECT_EQ(sc.filter.seed, 99u);
    EXPECT_FALSE(sc.filter.refine);
    EXPECT_EQ(sc.filter.max_halfspaces, 8u);
    EXPECT_EQ(sc.horizon, 1u);
    EXPECT_TRUE(sc.model.V.contains(Eigen::VectorXd::Constant(1, 0.05)));
    EXPECT_FALSE(sc.model.V.contains(Eigen::VectorXd::Constant(1, 0.051)));
}

TEST(ScenarioTest, SyntaxErrorReportsLine)
{
    const std::string msg = error_of("{\n  \"version\": 1,\n  \"model\": {\n    \"n\": 1\n    \"m_out\": 1\n  }\n}");
    EXPECT_NE(msg.find("test.json:5"), std::string::npos) << msg;
}

TEST(ScenarioTest, FieldErrorsNameTheField)
{
    EXPECT_NE(error_of(minimal(R"({"points": 0})")).find("/filter/points"), std::string::npos);
    EXPECT_NE(error_of(minimal(R"({"refine": 1})")).find("/filter/refine"), std::string::npos);
    EXPECT_NE(error_of(minimal("{}", R"("measurements": [[0.1, 0.2]])")).find("/measurements"), std::string::npos);
    EXPECT_NE(error_of(minimal("{}", R"("other": 1)")).find("simulation"), std::string::npos);
    EXPECT_NE(error_of(minimal(R"({"horizon": 3})")).find("/filter/horizon"), std::string::npos);

    std::string bad_version = minimal();
    bad_version.replace(bad_version.find("\"version\": 1"), 12, "\"version\": 2");
    EXPECT_NE(error_of(bad_version).find("/version"), std::string::npos);

    std::string bad_matrix = minimal();
    bad_matrix.replace(bad_matrix.find("[[0.0, 0.5]]"), 12, "[[0.0]]");
    EXPECT_NE(error_of(bad_matrix).find("/model/A"), std::string::npos);

    std::string bad_norm = minimal();
    bad_norm.replace(bad_norm.find("\"2\""), 3, "\"1\"");
    EXPECT_NE(error_of(bad_norm).find("/model/measurement_noise/norm"), std::string::npos);
}

TEST(ScenarioTest, RawConstraintSetsNeedSampleBoxToSimulate)
{
    std::string text = minimal("{}", R"("simulation": {"x0": [0.5]})");
    const std::string box = R"({"box": {"lower": [0.0], "upper": [1.0]}})";
    text.replace(text.find(box), box.size(),
                 R"({"constraints": [{"n_vars": 1, "terms": [{"exps": [2], "coef": 1.0}, {"exps": [0], "coef": -1.0}]}]})");
    EXPECT_NE(error_of(text).find("/simulation"), std::string::npos);
}

TEST(ScenarioTest, MissingFileIsIoError)
{
    EXPECT_THROW(load_scenario(kSource + "/does/not/exist.json"), std::ios_base::failure);
}
