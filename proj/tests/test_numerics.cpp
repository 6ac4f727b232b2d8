#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fomlab/numerics.hpp"

using namespace fomlab;

TEST(Numerics, GaussRuleIntegratesPolynomialsExactly) {
    // n-point rule is exact to degree 2n - 1.
    const double v = num::gauss_integrate([](double x) { return std::pow(x, 15) + 3 * x * x; }, -1.0, 2.0, 8);
    EXPECT_NEAR(v, (std::pow(2.0, 16) - 1.0) / 16.0 + 9.0, 1e-9);
}

TEST(Numerics, SpacingHelpersHitEndpoints) {
    const auto l = num::logspace(1e-3, 10.0, 43);
    ASSERT_EQ(l.size(), 43u);
    EXPECT_DOUBLE_EQ(l.front(), 1e-3);
    EXPECT_NEAR(l.back(), 10.0, 1e-12);
    const auto s = num::linspace(0.0, 1.0, 11);
    EXPECT_NEAR(s[5], 0.5, 1e-15);
}

TEST(Numerics, LogLogInterpolationIsExactForPowerLaws) {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const double p = -4.0 + 6.0 * u(gen), a = 0.1 + 5.0 * u(gen);
        const auto xs = num::logspace(1e-3, 1e2, 9);
        std::vector<double> ys;
        for (double x : xs) ys.push_back(a * std::pow(x, p));
        num::LogLogInterpolator f(xs, ys);
        for (int k = 0; k < 10; ++k) {
            const double x = std::pow(10.0, -3.0 + 5.0 * u(gen));
            EXPECT_NEAR(f(x) / (a * std::pow(x, p)), 1.0, 1e-10);
        }
    }
}

TEST(Numerics, PolyfitRecoversLine) {
    std::vector<double> x{0, 1, 2, 3, 4}, y;
    for (double v : x) y.push_back(2.5 - 0.75 * v);
    const auto f = num::polyfit(x, y, 1);
    EXPECT_NEAR(f.coeffs(0), 2.5, 1e-12);
    EXPECT_NEAR(f.coeffs(1), -0.75, 1e-12);
    EXPECT_NEAR(f.chi2, 0.0, 1e-20);
}

TEST(Numerics, LevenbergMarquardtFitsExponential) {
    std::vector<double> t, y;
    for (int i = 0; i < 30; ++i) {
        t.push_back(0.1 * i);
        y.push_back(3.0 * std::exp(-1.7 * t.back()) + 0.2);
    }
    auto r = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd out(30);
        for (int i = 0; i < 30; ++i) out(i) = y[i] - (p(0) * std::exp(-p(1) * t[i]) + p(2));
        return out;
    };
    Eigen::VectorXd p0(3);
    p0 << 1.0, 1.0, 0.0;
    const auto res = num::levenberg_marquardt(r, p0);
    EXPECT_TRUE(res.converged);
    EXPECT_NEAR(res.params(0), 3.0, 1e-6);
    EXPECT_NEAR(res.params(1), 1.7, 1e-6);
    EXPECT_NEAR(res.params(2), 0.2, 1e-6);
}

TEST(Numerics, LevenbergMarquardtRejectsNonFiniteResiduals) {
    auto r = [](const Eigen::VectorXd& p) {
        Eigen::VectorXd out(2);
        out << std::log(p(0)), 0.0;
        return out;
    };
    Eigen::VectorXd p0(1);
    p0 << -1.0;
    EXPECT_THROW(num::levenberg_marquardt(r, p0), Error);
}

TEST(Numerics, MedianAndQuantile) {
    EXPECT_DOUBLE_EQ(num::median({5, 1, 3}), 3.0);
    EXPECT_DOUBLE_EQ(num::median({4, 1, 3, 2}), 2.5);
    EXPECT_NEAR(num::stddev(std::vector<double>{1, 2, 3, 4}), std::sqrt(5.0 / 3.0), 1e-15);
}
