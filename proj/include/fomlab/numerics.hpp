#pragma once

// Small numerical toolbox shared by the physics modules: quadrature rules,
// grids, interpolation, descriptive statistics and least-squares solvers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fomlab/error.hpp"

namespace fomlab::num {

struct GaussRule {
    std::vector<double> nodes;    // on [-1, 1]
    std::vector<double> weights;
};

namespace detail {

inline GaussRule make_gauss_legendre(int n) {
    GaussRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            if (n == 1) p0 = 1.0;
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }
    return rule;
}

}  // namespace detail

/// Gauss-Legendre rule of order n, computed once and cached.
inline const GaussRule& gauss_legendre(int n) {
    static std::mutex mtx;
    static std::map<int, GaussRule> cache;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, detail::make_gauss_legendre(n)).first;
    return it->second;
}

/// Integral of f over [a, b] with an n-point Gauss-Legendre rule.
template <class F>
double gauss_integrate(F&& f, double a, double b, int n = 16) {
    const auto& rule = gauss_legendre(n);
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += rule.weights[i] * f(mid + half * rule.nodes[i]);
    return sum * half;
}

inline std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> out(n);
    if (n == 1) {
        out[0] = a;
        return out;
    }
    for (std::size_t i = 0; i < n; ++i) out[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    out.back() = b;
    return out;
}

inline std::vector<double> logspace(double a, double b, std::size_t n) {
    if (a <= 0.0 || b <= 0.0) throw DomainError("logspace endpoints must be positive");
    auto out = linspace(std::log(a), std::log(b), n);
    for (auto& v : out) v = std::exp(v);
    out.front() = a;
    out.back() = b;
    return out;
}

inline double trapezoid(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
    return s;
}

/// Index i such that xs[i] <= x < xs[i+1], clamped to [0, n-2].
inline std::size_t bracket(std::span<const double> xs, double x) {
    auto it = std::upper_bound(xs.begin(), xs.end(), x);
    std::size_t i = (it == xs.begin()) ? 0 : static_cast<std::size_t>(it - xs.begin()) - 1;
    return std::min(i, xs.size() - 2);
}

inline double interp_linear(std::span<const double> xs, std::span<const double> ys, double x) {
    const std::size_t i = bracket(xs, x);
    const double t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    return ys[i] + t * (ys[i + 1] - ys[i]);
}

/// Piecewise-linear interpolation of log|y| against log x. Values keep the
/// sign of the tabulated data; outside the table the end segments extend as
/// power laws.
class LogLogInterpolator {
public:
    LogLogInterpolator() = default;

    LogLogInterpolator(std::span<const double> x, std::span<const double> y) {
        if (x.size() < 2 || x.size() != y.size()) throw DomainError("log-log interpolation needs >= 2 matching points");
        sign_ = y[0] < 0.0 ? -1.0 : 1.0;
        lx_.reserve(x.size());
        ly_.reserve(y.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i] <= 0.0) throw DomainError("log-log interpolation needs positive abscissae");
            if (y[i] * sign_ <= 0.0) throw DomainError("log-log interpolation needs single-signed ordinates");
            if (i > 0 && x[i] <= x[i - 1]) throw DomainError("log-log interpolation abscissae must increase");
            lx_.push_back(std::log(x[i]));
            ly_.push_back(std::log(std::abs(y[i])));
        }
    }

    double operator()(double x) const {
        const double lx = std::log(x);
        const std::size_t i = bracket(lx_, lx);
        const double t = (lx - lx_[i]) / (lx_[i + 1] - lx_[i]);
        return sign_ * std::exp(ly_[i] + t * (ly_[i + 1] - ly_[i]));
    }

    /// d log|y| / d log x of the interpolant at x.
    double log_slope(double x) const {
        const std::size_t i = bracket(lx_, std::log(x));
        return (ly_[i + 1] - ly_[i]) / (lx_[i + 1] - lx_[i]);
    }

    double x_min() const { return std::exp(lx_.front()); }
    double x_max() const { return std::exp(lx_.back()); }
    bool empty() const { return lx_.empty(); }

private:
    std::vector<double> lx_, ly_;
    double sign_ = 1.0;
};

// ---------------------------------------------------------------- statistics

inline double mean(std::span<const double> v) {
    if (v.empty()) throw DataError("mean of empty sample");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator).
inline double stddev(std::span<const double> v) {
    if (v.size() < 2) throw DataError("standard deviation needs >= 2 samples");
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Empirical quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw DataError("quantile of empty sample");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

// ------------------------------------------------------------ least squares

struct LinearFit {
    Eigen::VectorXd coeffs;
    Eigen::MatrixXd covariance;  // (A^T W A)^-1, unscaled
    double chi2 = 0.0;
    std::size_t dof = 0;

    double reduced_chi2() const { return dof > 0 ? chi2 / static_cast<double>(dof) : 0.0; }
};

/// Weighted linear least squares: minimise sum_i w_i (y_i - A_i . c)^2.
/// Empty weights mean unit weights.
inline LinearFit weighted_linear_lsq(const Eigen::MatrixXd& A, const Eigen::VectorXd& y,
                                     std::span<const double> weights = {}) {
    const auto n = A.rows(), p = A.cols();
    if (n < p) throw DataError("linear least squares: fewer points than parameters");
    Eigen::VectorXd sw = Eigen::VectorXd::Ones(n);
    if (!weights.empty()) {
        for (Eigen::Index i = 0; i < n; ++i) sw(i) = std::sqrt(weights[static_cast<std::size_t>(i)]);
    }
    const Eigen::MatrixXd Aw = sw.asDiagonal() * A;
    const Eigen::VectorXd yw = sw.asDiagonal() * y;
    const Eigen::MatrixXd ata = Aw.transpose() * Aw;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(ata);
    if (ldlt.info() != Eigen::Success) throw DataError("linear least squares: singular normal matrix");
    LinearFit fit;
    fit.coeffs = Aw.colPivHouseholderQr().solve(yw);
    fit.covariance = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    fit.chi2 = (yw - Aw * fit.coeffs).squaredNorm();
    fit.dof = static_cast<std::size_t>(n - p);
    return fit;
}

/// Polynomial fit y = c0 + c1 x + ... + c_deg x^deg.
inline LinearFit polyfit(std::span<const double> x, std::span<const double> y, int degree,
                         std::span<const double> weights = {}) {
    Eigen::MatrixXd A(static_cast<Eigen::Index>(x.size()), degree + 1);
    Eigen::VectorXd b(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
        double p = 1.0;
        for (int j = 0; j <= degree; ++j, p *= x[i]) A(static_cast<Eigen::Index>(i), j) = p;
        b(static_cast<Eigen::Index>(i)) = y[i];
    }
    return weighted_linear_lsq(A, b, weights);
}

struct LmOptions {
    int max_iterations = 200;
    double relative_step_tol = 1e-10;
    double initial_lambda = 1e-3;
    double fd_relative_step = 1e-7;
};

struct LmResult {
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance;  // (J^T J)^-1 at the solution, unscaled
    double chi2 = 0.0;
    std::size_t dof = 0;
    int iterations = 0;
    bool converged = false;

    double reduced_chi2() const { return dof > 0 ? chi2 / static_cast<double>(dof) : 0.0; }
    /// Standard errors scaled by the reduced chi-square.
    double std_error(Eigen::Index i) const { return std::sqrt(covariance(i, i) * std::max(reduced_chi2(), 1e-300)); }
};

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

inline Eigen::MatrixXd forward_difference_jacobian(const ResidualFn& f, const Eigen::VectorXd& p,
                                                   const Eigen::VectorXd& r0, double rel_step) {
    Eigen::MatrixXd J(r0.size(), p.size());
    Eigen::VectorXd q = p;
    for (Eigen::Index j = 0; j < p.size(); ++j) {
        const double h = rel_step * std::max(std::abs(p(j)), 1.0);
        q(j) = p(j) + h;
        J.col(j) = (f(q) - r0) / h;
        q(j) = p(j);
    }
    return J;
}

/// Levenberg-Marquardt minimisation of |r(p)|^2 where r returns weighted
/// residuals. Converges when the relative parameter step falls below
/// relative_step_tol. The Jacobian is finite-differenced unless supplied.
inline LmResult levenberg_marquardt(const ResidualFn& residuals, Eigen::VectorXd p, const LmOptions& opt = {},
                                    const JacobianFn& jacobian = nullptr) {
    Eigen::VectorXd r = residuals(p);
    if (r.size() < p.size()) throw DataError("nonlinear least squares: fewer residuals than parameters");
    if (!r.allFinite()) throw DataError("nonlinear least squares: non-finite residuals at the starting point");
    auto jac = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& rx) {
        return jacobian ? jacobian(x) : forward_difference_jacobian(residuals, x, rx, opt.fd_relative_step);
    };
    double chi2 = r.squaredNorm();
    Eigen::MatrixXd J = jac(p, r);
    double lambda = opt.initial_lambda;
    LmResult out;
    for (int it = 0; it < opt.max_iterations; ++it) {
        out.iterations = it + 1;
        const Eigen::MatrixXd jtj = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * r;
        bool accepted = false;
        Eigen::VectorXd step;
        for (int tries = 0; tries < 40; ++tries) {
            Eigen::MatrixXd a = jtj;
            for (Eigen::Index k = 0; k < a.rows(); ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-300);
            step = a.ldlt().solve(-g);
            if (!step.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            const Eigen::VectorXd trial = p + step;
            const Eigen::VectorXd rt = residuals(trial);
            const double chi2t = rt.allFinite() ? rt.squaredNorm() : INFINITY;
            if (chi2t <= chi2) {
                p = trial;
                r = rt;
                chi2 = chi2t;
                lambda = std::max(lambda * 0.3, 1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        const double rel = step.norm() / std::max(p.norm(), 1e-300);
        if (!accepted || rel < opt.relative_step_tol) {
            out.converged = accepted || rel < opt.relative_step_tol || lambda > 1e12;
            break;
        }
        J = jac(p, r);
    }
    J = jac(p, r);
    out.params = p;
    out.chi2 = chi2;
    out.dof = static_cast<std::size_t>(r.size() - p.size());
    const Eigen::MatrixXd jtj = J.transpose() * J;
    out.covariance = jtj.ldlt().solve(Eigen::MatrixXd::Identity(p.size(), p.size()));
    return out;
}

}  // namespace fomlab::num
