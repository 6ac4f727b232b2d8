#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "fomlab/config.hpp"

using namespace fomlab;
using config::json;

TEST(Config, DefaultsWhenEmpty) {
    const auto c = config::parse(json::object());
    EXPECT_EQ(c.seed, 1u);
    EXPECT_EQ(c.probe.k, 0.1);
    EXPECT_EQ(c.protocol.runs, 30);
    EXPECT_EQ(c.physics.casimir, "gold");
}

TEST(Config, UnknownKeyListsValidKeys) {
    try {
        config::parse(json{{"probe", {{"stiffness", 0.2}}}});
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        const std::string m = e.what();
        EXPECT_NE(m.find("'stiffness'"), std::string::npos) << m;
        EXPECT_NE(m.find("in probe"), std::string::npos) << m;
        EXPECT_NE(m.find("k, gamma, R"), std::string::npos) << m;
    }
    EXPECT_THROW(config::parse(json{{"colour", "red"}}), ConfigError);
    EXPECT_THROW(config::parse(json{{"analysis", {{"bins", 3}}}}), ConfigError);
}

TEST(Config, TypeErrorsAreConfigErrors) {
    EXPECT_THROW(config::parse(json{{"probe", {{"k", "stiff"}}}}), ConfigError);
    EXPECT_THROW(config::parse(json{{"probe", {{"k", -1.0}}}}), ConfigError);
    EXPECT_THROW(config::parse(json{{"protocol", {{"chi_max", 2.0}}}}), ConfigError);
}

TEST(Config, Presets) {
    const auto quiet = config::parse(json{{"noise", {{"preset", "none"}}}});
    EXPECT_EQ(quiet.noise.detector_noise_density, 0.0);
    EXPECT_EQ(quiet.noise.interference.total_amplitude(), 0.0);
    const auto laser = config::parse(json{{"noise", {{"interference", "laser"}, {"phase_noise", 1e-3}}}});
    EXPECT_EQ(laser.noise.interference.total_amplitude(), 10.0);
    EXPECT_EQ(laser.noise.phase_noise, 1e-3);
    EXPECT_THROW(config::parse(json{{"noise", {{"preset", "loud"}}}}), ConfigError);
    EXPECT_THROW(config::parse(json{{"noise", {{"interference", "radar"}}}}), ConfigError);
    EXPECT_THROW(config::parse(json{{"probe", {{"preset", "other"}}}}), ConfigError);
    EXPECT_THROW(config::parse(json{{"physics", {{"drude_set", "c"}}}}), ConfigError);
}

TEST(Config, LeakageRuleAndFiles) {
    const auto c = config::parse(json{{"analysis", {{"leakage_rule", "half_lag"}}}});
    EXPECT_EQ(c.analysis.leakage_rule, analysis::LeakageRule::half_lag);
    EXPECT_THROW(config::parse(json{{"analysis", {{"leakage_rule", "none"}}}}), ConfigError);
    EXPECT_THROW(config::parse(json{{"physics", {{"topography", "no_such_map.json"}}}}), ConfigError);
    EXPECT_THROW(config::parse(json{{"physics", {{"casimir", "no_such_metal.json"}}}}), ConfigError);
    const auto g = config::parse(json{{"physics", {{"casimir", "gold.json"}}}});
    EXPECT_TRUE(std::filesystem::exists(g.physics.casimir));
}

TEST(Config, ConfigDirLookup) {
    const auto dir = std::filesystem::temp_directory_path() / "fomlab_cfg_test";
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "campaign.json") << R"({"seed": 99, "protocol": {"runs": 4}})";
    ::setenv("FOMLAB_CONFIG_DIR", dir.c_str(), 1);
    const auto c = config::load("campaign.json");
    EXPECT_EQ(c.seed, 99u);
    EXPECT_EQ(c.protocol.runs, 4);
    ::unsetenv("FOMLAB_CONFIG_DIR");
    EXPECT_THROW(config::load("campaign.json"), ConfigError);
    std::filesystem::remove_all(dir);
}

TEST(Config, TruthFollowsPhysics) {
    const auto none = config::make_truth(config::parse(json{{"physics", {{"casimir", "none"}}}}));
    EXPECT_TRUE(none.casimir.is_zero());
    const auto ideal = config::make_truth(
        config::parse(json{{"physics", {{"casimir", "ideal"}, {"water_thickness", 1e-9}, {"V0", 0.01}}}}));
    EXPECT_EQ(ideal.casimir.label(), "ideal");
    EXPECT_EQ(ideal.V0, 0.01);
    EXPECT_EQ(ideal.water_thickness, 1e-9);
    EXPECT_NEAR(ideal.casimir.gradient(100e-9) /
                    (2.0 * std::numbers::pi * 40e-6 * casimir::ideal_pressure(100e-9)),
                1.0, 1e-6);
}
