#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fomlab/hydrodynamics.hpp"
#include "fomlab/simulator.hpp"

using namespace fomlab;
using namespace fomlab::hydro;
using std::numbers::pi;

namespace {

HydroParams reference_params(double b = slip_length_low) {
    const auto p = sim::reference_probe();
    return {eta_air, b, p.gamma0(), p.R};
}

}  // namespace

TEST(Hydro, SlipCorrectionLimits) {
    EXPECT_NEAR(f_star(1e8), 1.0, 1e-7);
    EXPECT_LT(f_star(1e-8), 1e-6);
    EXPECT_THROW(f_star(0.0), DomainError);
    // Closed form and asymptotic series meet at the switch.
    EXPECT_NEAR(f_star(1e3 * (1.0 - 1e-12)), f_star(1e3 * (1.0 + 1e-12)), 1e-9);
}

TEST(Hydro, SlipCorrectionMonotone) {
    double prev = 0.0;
    for (double x : num::logspace(1e-4, 1e4, 400)) {
        const double f = f_star(x);
        EXPECT_GT(f, prev) << x;
        EXPECT_LE(f, 1.0);
        prev = f;
    }
}

TEST(Hydro, SlipPresets) {
    EXPECT_DOUBLE_EQ(slip_length_low, 60e-9);
    EXPECT_DOUBLE_EQ(slip_length_high, 118e-9);
    EXPECT_DOUBLE_EQ(optimal_phase_lag_deg, 2.4);
    // Stronger slip lowers the drag.
    EXPECT_LT(damping(100e-9, reference_params(slip_length_high)), damping(100e-9, reference_params()));
}

TEST(Hydro, DampingFarFieldAndExtendedPrecision) {
    const auto hp = reference_params();
    EXPECT_NEAR(damping(1e3, hp) / hp.Gamma0, 1.0, 1e-6);
    // Direct formula in long double.
    const long double d = 100e-9L, b = 60e-9L, R = 40e-6L, x = d / (6.0L * b);
    const long double fs = 2.0L * x * ((1.0L + x) * std::log1p(1.0L / x) - 1.0L);
    const long double ref = hp.Gamma0 + 6.0L * pi * 1.86e-5L * R * R * fs / d;
    EXPECT_NEAR(damping(100e-9, hp) / static_cast<double>(ref), 1.0, 1e-13);
}

TEST(Hydro, FarFieldPhaseLag) {
    const auto p = sim::reference_probe();
    const auto lag = phase_lag(1e3, 2.0 * pi * 211.0, p.k, p.omega1, reference_params());
    EXPECT_NEAR(lag.radians, 2.11e-4, 1e-9);
    EXPECT_FALSE(lag.outside_validity);
    EXPECT_TRUE(phase_lag(1e-6, p.omega1 / 5.0, p.k, p.omega1, reference_params()).outside_validity);
}

TEST(Hydro, NoSurfaceDragGivesConstantLag) {
    const auto p = sim::reference_probe();
    auto hp = reference_params();
    hp.eta = 1e-40;
    const double a = phase_lag(50e-9, 2.0 * pi * 211.0, p.k, p.omega1, hp).radians;
    const double b = phase_lag(5e-6, 2.0 * pi * 211.0, p.k, p.omega1, hp).radians;
    EXPECT_NEAR(a / b, 1.0, 1e-12);
}

TEST(Hydro, DragAmplitude) {
    const auto hp = reference_params();
    EXPECT_EQ(hydro_force_amplitude(150e-9, 0.0, hp), 0.0);
    EXPECT_DOUBLE_EQ(hydro_force_amplitude(150e-9, 2e-5, hp), 2.0 * hydro_force_amplitude(150e-9, 1e-5, hp));
    const double omega = 2.0 * pi * 211.0, dd = 32e-9;
    EXPECT_NEAR(hydro_force_amplitude(150e-9, omega * dd, hp) / ((damping(150e-9, hp) - hp.Gamma0) * dd * omega), 1.0,
                1e-12);
    EXPECT_THROW(hydro_force_amplitude(150e-9, -1.0, hp), DomainError);
}

TEST(Hydro, PropertyQualityFactorGrowsWithSeparation) {
    const auto p = sim::reference_probe();
    std::mt19937_64 gen(13);
    std::uniform_real_distribution<double> u(std::log(10e-9), std::log(100e-6));
    for (int i = 0; i < 100; ++i) {
        double a = std::exp(u(gen)), b = std::exp(u(gen));
        if (a > b) std::swap(a, b);
        EXPECT_LE(quality_factor(a, p.k, p.omega1, reference_params()), quality_factor(b, p.k, p.omega1, reference_params()));
        EXPECT_LT(quality_factor(b, p.k, p.omega1, reference_params()), p.Q_far * (1.0 + 1e-12));
    }
}
