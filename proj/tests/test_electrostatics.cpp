#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fomlab/electrostatics.hpp"
#include "fomlab/simulator.hpp"

using namespace fomlab;
using namespace fomlab::electrostatics;
using constants::epsilon_0;
using std::numbers::pi;

namespace {

constexpr double R40 = 40e-6;

// Brute-force bispherical sum in long double, stopped at a 1e-10 tail bound:
// C' = 4 pi eps0 [coth(a) S + S'], S = sum 1/sinh(n a), S' = -sum n cosh(n a)/sinh^2(n a).
double cprime_oracle(double d, double R) {
    const long double a = std::acosh(1.0L + static_cast<long double>(d) / R);
    long double S = 0.0L, Sp = 0.0L;
    for (long n = 1;; ++n) {
        const long double sh = std::sinh(n * a), ch = std::cosh(n * a);
        const long double t1 = 1.0L / sh, t2 = -n * ch / (sh * sh);
        S += t1;
        Sp += t2;
        // geometric tail with ratio exp(-a), inflated for the n factor
        const long double q = std::exp(-a);
        if (std::abs(t2) * q / (1.0L - q) * (n + 1.0L) / n < 1e-10L * std::abs(Sp)) break;
    }
    return static_cast<double>(4.0L * pi * epsilon_0 * (std::cosh(a) / std::sinh(a) * S + Sp));
}

}  // namespace

TEST(Electrostatics, ExactSeriesMatchesBruteForceOracle) {
    for (double x : {1e-3, 1e-2, 0.3, 3.0}) {
        const SpherePlateGeometry g{x * R40, R40};
        EXPECT_NEAR(cprime_exact(g) / cprime_oracle(g.d, R40), 1.0, 1e-7) << "d/R = " << x;
        EXPECT_NEAR(cprime_exact(g, {1e-13}) / cprime_oracle(g.d, R40), 1.0, 1e-9) << "d/R = " << x;
    }
    // Frozen: C'/C'_PFA at d/R = 1e-3 from the oracle.
    const SpherePlateGeometry g{1e-3 * R40, R40};
    EXPECT_NEAR(cprime_oracle(g.d, R40) / cprime_pfa(g), 1.0 / 1.00281496, 1e-7);
}

TEST(Electrostatics, LargeSeparationLeadingTerm) {
    // The first non-vanishing term carries the series up to an O(R/d) remainder.
    for (double x : {1e3, 1e4, 1e5}) {
        const SpherePlateGeometry g{x * R40, R40};
        EXPECT_NEAR((cprime_exact(g) / cprime_leading_term(g) - 1.0) * x, 1.0, 0.05) << x;
    }
    const SpherePlateGeometry g{1e6 * R40, R40};
    EXPECT_NEAR(cprime_exact(g) / cprime_leading_term(g), 1.0, 1e-6);
}

TEST(Electrostatics, PfaClosedForm) {
    const SpherePlateGeometry g{100e-9, R40};
    EXPECT_NEAR(cprime_pfa(g), -2.0 * pi * epsilon_0 * 400.0, 1e-20);
    EXPECT_NEAR(cprime_pfa(g), -2.2253e-8, 1e-11);
    EXPECT_NEAR(cdoubleprime_pfa(g), 2.0 * pi * epsilon_0 * R40 / (g.d * g.d), 1e-12);
}

TEST(Electrostatics, PfaIsContactLimit) {
    const SpherePlateGeometry g{1e-6 * R40, R40};
    EXPECT_NEAR(cprime_exact(g) / cprime_pfa(g), 1.0, 1e-4);
    EXPECT_NEAR(cdoubleprime_exact(g) / cdoubleprime_pfa(g), 1.0, 1e-4);
    const SpherePlateGeometry far{1.0 * R40, R40};
    EXPECT_GT(std::abs(cprime_pfa(far) / cprime_exact(far) - 1.0), 0.5);
}

TEST(Electrostatics, CdoubleprimeMatchesFiniteDifference) {
    const double d = 0.01 * R40, h = 1e-4 * d;
    const double fd = (cprime_exact({d + h, R40}) - cprime_exact({d - h, R40})) / (2.0 * h);
    EXPECT_NEAR(cdoubleprime_exact({d, R40}) / fd, 1.0, 1e-4);
}

TEST(Electrostatics, PfaCdoubleprimeErrorBelowCprimeError) {
    for (double x : num::logspace(1e-4, 10.0, 60)) {
        const SpherePlateGeometry g{x * R40, R40};
        const double e1 = std::abs(cprime_pfa(g) / cprime_exact(g) - 1.0);
        const double e2 = std::abs(cdoubleprime_pfa(g) / cdoubleprime_exact(g) - 1.0);
        EXPECT_LE(e2, e1) << "d/R = " << x;
    }
}

TEST(Electrostatics, PropertyCprimeNegativeCdoubleprimePositive) {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(-5.0, 2.0);
    for (int i = 0; i < 40; ++i) {
        const double R = std::pow(10.0, -6.0 + 2.0 * std::abs(u(gen)) / 5.0);
        const SpherePlateGeometry g{std::pow(10.0, u(gen)) * R, R};
        EXPECT_LT(cprime_exact(g), 0.0);
        EXPECT_GT(cdoubleprime_exact(g), 0.0);
    }
}

TEST(Electrostatics, InterpolatorAccuracyAndNodeIdentity) {
    const CapInterpolator ci(R40, default_ratio_min, default_ratio_max, 43);
    double worst = 0.0, worst_lin = 0.0;
    for (double x : num::logspace(default_ratio_min, default_ratio_max, 301)) {
        const SpherePlateGeometry g{x * R40, R40};
        const double exact = cprime_exact(g);
        worst = std::max(worst, std::abs(ci.cprime(g.d) / exact - 1.0));
        worst = std::max(worst, std::abs(ci.cdoubleprime(g.d) / cdoubleprime_exact(g) - 1.0));
        worst_lin = std::max(worst_lin, std::abs(cprime_linear_interpolated(ci, g.d) / exact - 1.0));
    }
    EXPECT_LT(worst, 5e-3);
    EXPECT_GT(worst_lin, worst);
    for (std::size_t i = 0; i < ci.node_ratios().size(); ++i) {
        const double d = ci.node_ratios()[i] * R40;
        EXPECT_NEAR(ci.cprime(d) / cprime_exact({d, R40}), 1.0, 1e-12);
    }
}

TEST(Electrostatics, ForceComponentsKelvinNull) {
    VoltageState v{0.0, -0.025, 0.025};
    const double c1 = -2e-8;
    auto f = electrostatic_force_components(v, c1);
    EXPECT_EQ(f.F_DC, 0.0);
    EXPECT_EQ(f.F_a, 0.0);
    EXPECT_EQ(f.F_b, 0.0);
    v.V_AC = 0.5;
    f = electrostatic_force_components(v, c1);
    EXPECT_EQ(f.F_a, 0.0);
    EXPECT_NE(f.F_b, 0.0);
}

TEST(Electrostatics, ForceComponentsReconstructTimeDomain) {
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double c1 = -3.3e-9;
    for (int trial = 0; trial < 20; ++trial) {
        VoltageState v{std::abs(u(gen)) * 2.0, u(gen), 0.1 * u(gen)};
        const auto f = electrostatic_force_components(v, c1);
        for (int i = 0; i < 16; ++i) {
            const double ph = 2.0 * pi * i / 16.0;
            const double V = v.V_DC + v.V_AC * std::cos(ph);
            const double direct = 0.5 * c1 * (V + v.V0) * (V + v.V0);
            const double sum = f.F_DC + f.F_a * std::cos(ph) + f.F_b * std::cos(2.0 * ph);
            EXPECT_NEAR(sum, direct, 1e-12 * std::max(1e-9, std::abs(direct)));
        }
    }
}

TEST(Electrostatics, FourOmegaAmplitude) {
    const auto p = sim::reference_probe();
    EXPECT_EQ(f_4omega_amplitude(SpherePlateGeometry{1e-6, p.R}, 0.0, p.k), 0.0);
    // PFA form equals the closed form -pi^2 eps0^2 R^2 V^4 / (8 k d^3).
    const SpherePlateGeometry g{300e-9, p.R};
    const double V = 3.0;
    EXPECT_NEAR(f_4omega_amplitude_pfa(g, V, p.k) /
                    (-pi * pi * epsilon_0 * epsilon_0 * p.R * p.R * std::pow(V, 4) / (8.0 * p.k * std::pow(g.d, 3))),
                1.0, 1e-12);
}

TEST(Electrostatics, FourOmegaMatchesFirstOrderTimeDomain) {
    // Force C'(g) V^2 / 2 with the gap displaced by the leading deflection
    // C' V^2 / (2k), expanded to first order in C'', demodulated at 4 w_A.
    const auto p = sim::reference_probe();
    const SpherePlateGeometry g{1e-6, p.R};
    const double c1 = cprime_exact(g), c2 = cdoubleprime_exact(g), V = 8.0;
    auto force = [&](double ph) {
        const double v2 = std::pow(V * std::cos(ph), 2);
        const double z = 0.5 * c1 * v2 / p.k;
        return 0.5 * (c1 + c2 * z) * v2;
    };
    const double x4 = sim::timedomain::demodulate(force, 4, 256).first;
    EXPECT_NEAR(x4 / f_4omega_amplitude(g, V, p.k), 1.0, 1e-9);
}

TEST(Electrostatics, FourOmegaMatchesSelfConsistentDeflectionAtSmallDelta) {
    // Full self-consistent gap g = d + F(g)/k; valid while delta << 1.
    const auto p = sim::reference_probe();
    const SpherePlateGeometry g{5e-6, p.R};
    const double V = 2.0;
    const double delta = second_order_delta(g, V, p.k).value;
    ASSERT_LT(delta, 0.01);
    auto force = [&](double ph) {
        const double v2 = std::pow(V * std::cos(ph), 2);
        double gap = g.d;
        for (int i = 0; i < 50; ++i) gap = g.d + 0.5 * cprime_exact({gap, p.R}) * v2 / p.k;
        return 0.5 * cprime_exact({gap, p.R}) * v2;
    };
    const double x4 = sim::timedomain::demodulate(force, 4, 256).first;
    EXPECT_NEAR(x4 / f_4omega_amplitude(g, V, p.k), 1.0, 3.0 * delta);
}

TEST(Electrostatics, SecondOrderDeltaAtHundredNanometres) {
    const auto p = sim::reference_probe();
    const auto d = second_order_delta_feedback(100e-9, p.gamma, 1e-3);
    EXPECT_NEAR(d.value, 0.014, 1e-3);
    EXPECT_FALSE(d.expansion_invalid);
    EXPECT_EQ(second_order_delta_feedback(100e-9, p.gamma, 0.0).value, 0.0);
}

TEST(Electrostatics, SecondOrderFormsAgreeUnderSetpointLoop) {
    const auto p = sim::reference_probe();
    for (double d : {80e-9, 150e-9, 500e-9, 2e-6}) {
        const SpherePlateGeometry g{d, p.R};
        const double V = vac_for_setpoint(cprime_pfa(g), cdoubleprime_pfa(g), p.k, p.gamma, 1e-3);
        const double a = second_order_delta(g, V, p.k).value;
        const double b = second_order_delta_feedback(d, p.gamma, 1e-3).value;
        EXPECT_NEAR(a / b, 1.0, 2.0 * b) << d;
    }
}

TEST(Electrostatics, PropertySetpointInversion) {
    const auto p = sim::reference_probe();
    std::mt19937_64 gen(23);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 30; ++i) {
        const SpherePlateGeometry g{std::pow(10.0, -7.3 + 2.5 * u(gen)), p.R};
        const double S = 1e-4 + 5e-3 * u(gen);
        const double c1 = cprime_exact(g), c2 = cdoubleprime_exact(g);
        const double V = vac_for_setpoint(c1, c2, p.k, p.gamma, S);
        EXPECT_NEAR(std::abs(s2omega_signal(c1, c2, V, p.k, p.gamma)) / S, 1.0, 1e-12);
    }
}

TEST(Electrostatics, WaterFactor) {
    EXPECT_EQ(water_factor(100e-9, 0.0, 77.0), 1.0);
    EXPECT_NEAR(water_factor(100e-9, 1.5e-9, 77.0), 1.0 / (1.0 + 0.015 * (1.0 / 77.0 - 1.0)), 1e-15);
    EXPECT_NEAR(water_factor(100e-9, 1.5e-9, 77.0), 1.0150, 1e-4);
    EXPECT_THROW(water_factor(1e-9, 2e-9, 77.0), DomainError);
}

TEST(Electrostatics, WaterLayerIsASeparationShift) {
    std::mt19937_64 gen(29);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        const double d = 20e-9 + 1e-6 * u(gen), dW = 3e-9 * u(gen), eW = 2.0 + 100.0 * u(gen);
        const double lhs = parallel_plate_capacitance(d, dW, eW);
        const double rhs = parallel_plate_capacitance(d - dW * (1.0 - 1.0 / eW));
        EXPECT_NEAR(lhs / rhs, 1.0, 4.0 * std::numeric_limits<double>::epsilon());
    }
}

TEST(Electrostatics, CapacitanceModelWithWater) {
    const auto m = CapacitanceModel::interpolated(R40);
    const auto w = m.with_water(1.5e-9, 77.0);
    const double W = water_factor(100e-9, 1.5e-9, 77.0);
    EXPECT_NEAR(w.cprime(100e-9) / m.cprime(100e-9), W, 1e-14);
    EXPECT_NEAR(w.cdoubleprime(100e-9) / m.cdoubleprime(100e-9), W * W, 1e-14);
}
