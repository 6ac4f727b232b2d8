#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "fomlab/simulator.hpp"

using namespace fomlab;
using namespace fomlab::sim;

namespace {

Truth ideal_truth() {
    Truth t = default_truth(false);
    t.casimir = CasimirTruth::ideal(t.probe.R);
    return t;
}

ProtocolConfig short_protocol() {
    ProtocolConfig p;
    p.runs = 2;
    p.schedule = {{1e-6, 300e-9, 100e-9}, {300e-9, 60e-9, 20e-9}};
    p.cal_points = 8;
    p.null_samples = 4;
    return p;
}

std::string dump(const Campaign& c) {
    std::ostringstream os;
    write_jsonl(os, c);
    return os.str();
}

}  // namespace

TEST(Ratchet, TableValues) {
    const ProtocolConfig p;
    EXPECT_DOUBLE_EQ(ratchet_table(p, 5e-6), 48e-9);
    EXPECT_DOUBLE_EQ(ratchet_table(p, 320e-9), 40e-9);
    EXPECT_DOUBLE_EQ(ratchet_table(p, 266.7e-9), 32e-9);
    EXPECT_DOUBLE_EQ(ratchet_table(p, 100e-9), 8e-9);
    EXPECT_DOUBLE_EQ(ratchet_table(p, 45e-9), 4e-9);
    EXPECT_THROW(ratchet_table(p, 0.0), DomainError);
}

TEST(Ratchet, PropertyAmplitudeBoundedAndMonotone) {
    const ProtocolConfig p;
    auto seps = p.approach_separations();
    Ratchet in(p, Direction::approach);
    double prev = 1.0;
    for (double d : seps) {
        const double dd = in.next(d);
        EXPECT_LE(dd / d, p.chi_max + 1e-12);
        EXPECT_LE(dd, prev);
        prev = dd;
    }
    std::reverse(seps.begin(), seps.end());
    Ratchet out(p, Direction::retract);
    prev = 0.0;
    for (double d : seps) {
        const double dd = out.next(d);
        EXPECT_LE(dd / d, p.chi_max + 1e-12);
        EXPECT_GE(dd, prev);
        prev = dd;
    }
}

TEST(Ratchet, Hysteresis) {
    const ProtocolConfig p;
    Ratchet in(p, Direction::approach);
    in.next(200e-9);
    // Moving back out past a threshold does not raise the amplitude on approach.
    EXPECT_DOUBLE_EQ(in.next(400e-9), 24e-9);
    Ratchet out(p, Direction::retract);
    out.next(400e-9);
    EXPECT_DOUBLE_EQ(out.next(200e-9), 30e-9);  // limited only by chi_max
}

TEST(Schedule, ApproachSeparations) {
    const ProtocolConfig p;
    const auto s = p.approach_separations();
    EXPECT_DOUBLE_EQ(s.front(), 5e-6);
    EXPECT_GE(s.back(), 45e-9);
    EXPECT_LT(s.back(), 47e-9);
    for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LT(s[i], s[i - 1]);
}

TEST(Interference, PeriodIsHalfWavelength) {
    const auto f = sld_interference();
    for (double d : {100e-9, 333e-9, 2.1e-6}) EXPECT_NEAR(f.value(d + 430e-9), f.value(d), 1e-12);
    EXPECT_GT(std::abs(f.value(100e-9 + 215e-9) - f.value(100e-9)), 1e-3);
    EXPECT_DOUBLE_EQ(laser_interference().total_amplitude(), 10.0 * sld_interference().total_amplitude());
}

TEST(Kelvin, OffsetBias) {
    const double k = 0.1, gamma = 1.0 / 700e-9, cp = -2e-9;
    EXPECT_EQ(kelvin_loop(cp, 0.025, 0.0, k, gamma, 0.5), 0.025);
    const double b = kelvin_loop(cp, 0.025, 10e-6, k, gamma, 0.5) - 0.025;
    EXPECT_LT(std::abs(b), 10e-3);
    // Bias scales as 1/C'.
    const double b2 = kelvin_loop(2.0 * cp, 0.025, 10e-6, k, gamma, 0.5) - 0.025;
    EXPECT_NEAR(b2 / b, 0.5, 1e-12);
    EXPECT_THROW(kelvin_loop(1e-9, 0.0, 0.0, k, gamma, 1.0), DomainError);
}

TEST(Simulator, NoiselessSignalEncodesGradient) {
    const Truth t = ideal_truth();
    const auto noise = NoiseConfig::none();
    ProtocolConfig p = short_protocol();
    Rng rng(3);
    RunTruth hidden;
    const double gamma = t.probe.gamma;
    const auto rec = simulate_run(t, p, noise, Direction::approach, false, 0.0, gamma, 0.0, rng, &hidden);
    ASSERT_FALSE(rec.jump_to_contact);
    ASSERT_EQ(rec.steps.size(), hidden.gap.size());
    for (std::size_t i = 0; i < rec.steps.size(); ++i) {
        const auto& s = rec.steps[i];
        const double g = hidden.gap[i];
        const double psi =
            hydro::phase_lag(g, p.omega_pz, t.probe.k, t.probe.omega1, t.hydro).radians - p.theta_ref;
        const double X = s.S_I * std::cos(psi) - s.S_Q * std::sin(psi);
        const double measured = X * t.probe.k / (gamma * s.delta_d);
        // Independent route: lock-in demodulation of the static force.
        const double u = s.V_DC + t.V0_Cpp;
        // The force falls with gap, so the first harmonic comes out negated.
        const double oracle = -timedomain::measured_gradient_from_force(
            [&](double x) { return t.casimir.force(x) + 0.5 * std::abs(t.capacitance.cprime(x)) * u * u; }, g,
            s.delta_d);
        EXPECT_NEAR(measured / oracle, 1.0, 1e-4) << "d=" << g;
        EXPECT_DOUBLE_EQ(s.V0_reported, t.V0);
    }
}

TEST(Simulator, CalibrationRunRecords4Omega) {
    const Truth t = ideal_truth();
    ProtocolConfig p = short_protocol();
    Rng rng(5);
    const auto rec = simulate_run(t, p, NoiseConfig::none(), Direction::approach, true, 0.0, t.probe.gamma, 0.0, rng);
    EXPECT_EQ(rec.kind, "calibration");
    ASSERT_EQ(rec.steps.size(), 8u);
    for (const auto& s : rec.steps) {
        EXPECT_FALSE(std::isnan(s.S_4omegaA));
        EXPECT_EQ(s.V_AC, p.V_AC_cal);
        EXPECT_EQ(s.delta_d, 0.0);
    }
}

TEST(Simulator, JumpToContactIsRecorded) {
    Truth t = ideal_truth();
    t.probe.k = 1e-4;
    ProtocolConfig p = short_protocol();
    Rng rng(1);
    const auto rec = simulate_run(t, p, NoiseConfig::none(), Direction::approach, false, 0.0, t.probe.gamma, 0.0, rng);
    EXPECT_TRUE(rec.jump_to_contact);
    EXPECT_LT(rec.steps.size(), p.approach_separations().size());
}

TEST(Simulator, DeterministicAndSeedSensitive) {
    const Truth t = ideal_truth();
    const auto p = short_protocol();
    const NoiseConfig n;
    const auto a = dump(simulate_campaign(t, p, n, 11));
    EXPECT_EQ(a, dump(simulate_campaign(t, p, n, 11)));
    EXPECT_NE(a, dump(simulate_campaign(t, p, n, 12)));
}

TEST(Simulator, JsonlRoundTrip) {
    const Truth t = ideal_truth();
    const auto c = simulate_campaign(t, short_protocol(), NoiseConfig{}, 4);
    const auto text = dump(c);
    std::istringstream in(text);
    const auto back = read_jsonl(in);
    ASSERT_EQ(back.runs.size(), c.runs.size());
    EXPECT_EQ(back.seed, c.seed);
    EXPECT_EQ(back.nominal.k, c.nominal.k);
    for (std::size_t r = 0; r < c.runs.size(); ++r) {
        ASSERT_EQ(back.runs[r].steps.size(), c.runs[r].steps.size());
        EXPECT_EQ(back.runs[r].kind, c.runs[r].kind);
        for (std::size_t i = 0; i < c.runs[r].steps.size(); ++i) {
            EXPECT_EQ(back.runs[r].steps[i].S_I, c.runs[r].steps[i].S_I);
            EXPECT_EQ(back.runs[r].steps[i].parabola_S, c.runs[r].steps[i].parabola_S);
        }
    }
    EXPECT_EQ(dump(back).size() > 0, true);
}

TEST(Simulator, RejectsBadProtocol) {
    ProtocolConfig p;
    p.omega_pz = p.omega_A;
    EXPECT_THROW(p.validate(), ConfigError);
    p = ProtocolConfig{};
    p.chi_max = 1.5;
    EXPECT_THROW(p.validate(), ConfigError);
}
