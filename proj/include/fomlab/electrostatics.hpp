#pragma once

// Sphere-plate capacitance derivatives (exact bispherical series, PFA and a
// log-log interpolator) and the electrostatic force harmonics produced by a
// voltage V_DC + V_AC cos(w_A t).

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <vector>

#include "fomlab/constants.hpp"
#include "fomlab/error.hpp"
#include "fomlab/numerics.hpp"

namespace fomlab::electrostatics {

using constants::epsilon_0;
using std::numbers::pi;

struct SpherePlateGeometry {
    double d = 0.0;  // surface-to-surface separation, m
    double R = 0.0;  // sphere radius, m

    void validate() const {
        if (!(d > 0.0) || !(R > 0.0)) throw DomainError("sphere-plate geometry needs d > 0 and R > 0");
    }
    /// Bispherical parameter, cosh(alpha) = 1 + d/R.
    double alpha() const { return 2.0 * std::asinh(std::sqrt(d / (2.0 * R))); }
};

struct SeriesOptions {
    double rel_tol = 1e-9;
    std::int64_t max_terms = 10'000'000;
};

namespace detail {

// coth(x) - 1/x
inline double coth_minus_inv(double x) {
    if (x < 1e-2) {
        const double x2 = x * x;
        return x * (1.0 / 3.0 - x2 / 45.0 + 2.0 * x2 * x2 / 945.0);
    }
    return 1.0 / std::tanh(x) - 1.0 / x;
}

// csch^2(x) - 1/x^2
inline double csch2_minus_inv2(double x) {
    if (x < 1e-2) {
        const double x2 = x * x;
        return -1.0 / 3.0 + x2 / 15.0 - 2.0 * x2 * x2 / 189.0;
    }
    const double s = std::sinh(x);
    return 1.0 / (s * s) - 1.0 / (x * x);
}

inline double coth(double x) { return 1.0 / std::tanh(x); }

// 1/sinh(x) without overflow for large x.
inline double csch(double x) {
    if (x > 20.0) {
        const double e = std::exp(-x);
        return 2.0 * e / (1.0 - e * e);
    }
    return 1.0 / std::sinh(x);
}

// n-th term of the C' series and its alpha-derivative.
inline double cprime_term(int64_t n, double a) {
    const double na = static_cast<double>(n) * a;
    return (coth_minus_inv(a) - static_cast<double>(n) * coth_minus_inv(na)) * csch(na);
}

inline double cprime_term_dalpha(int64_t n, double a) {
    const double nd = static_cast<double>(n);
    const double na = nd * a;
    const double cs = csch(na);
    const double bracket = coth_minus_inv(a) - nd * coth_minus_inv(na);
    return (nd * nd * csch2_minus_inv2(na) - csch2_minus_inv2(a)) * cs - nd * bracket * coth(na) * cs;
}

template <class Term>
double sum_series(Term term, double a, const SeriesOptions& opt, const char* what) {
    if (!(opt.rel_tol > 0.0)) throw DomainError("series tolerance must be positive");
    // The n = 1 term vanishes identically; summation starts at n = 2.
    double sum = 0.0;
    int small = 0;
    for (std::int64_t n = 2; n <= opt.max_terms; ++n) {
        const double t = term(n, a);
        sum += t;
        if (std::abs(t) < opt.rel_tol * std::abs(sum)) {
            if (++small == 3) return sum;
        } else {
            small = 0;
        }
    }
    const double last = std::abs(term(opt.max_terms, a) / sum);
    throw ConvergenceError(std::string(what) + ": series term cap reached", last);
}

}  // namespace detail

/// Exact C' from the bispherical series, F/m (negative).
inline double cprime_exact(const SpherePlateGeometry& g, const SeriesOptions& opt = {}) {
    g.validate();
    const double a = g.alpha();
    return 4.0 * pi * epsilon_0 * detail::sum_series(detail::cprime_term, a, opt, "C'");
}

/// Exact C'' by term-wise differentiation of the C' series, F/m^2 (positive).
inline double cdoubleprime_exact(const SpherePlateGeometry& g, const SeriesOptions& opt = {}) {
    g.validate();
    const double a = g.alpha();
    const double s = detail::sum_series(detail::cprime_term_dalpha, a, opt, "C''");
    return 4.0 * pi * epsilon_0 * s / (g.R * std::sinh(a));
}

inline double cprime_pfa(const SpherePlateGeometry& g) {
    g.validate();
    return -2.0 * pi * epsilon_0 * g.R / g.d;
}

inline double cdoubleprime_pfa(const SpherePlateGeometry& g) {
    g.validate();
    return 2.0 * pi * epsilon_0 * g.R / (g.d * g.d);
}

/// Leading (n = 2) term of the series, the far-field form.
inline double cprime_leading_term(const SpherePlateGeometry& g) {
    g.validate();
    return 4.0 * pi * epsilon_0 * detail::cprime_term(2, g.alpha());
}

inline double cdoubleprime_leading_term(const SpherePlateGeometry& g) {
    g.validate();
    const double a = g.alpha();
    return 4.0 * pi * epsilon_0 * detail::cprime_term_dalpha(2, a) / (g.R * std::sinh(a));
}

/// Series truncated after n_max terms (n = 2..n_max); a reference curve
/// showing how slowly the series converges near contact.
inline double cprime_truncated(const SpherePlateGeometry& g, int n_max) {
    g.validate();
    const double a = g.alpha();
    double s = 0.0;
    for (int n = 2; n <= n_max; ++n) s += detail::cprime_term(n, a);
    return 4.0 * pi * epsilon_0 * s;
}

/// Log-log interpolation of exact C' and C'' on log-spaced nodes in d/R.
/// Nodes store log(-C'/eps0) and log(C'' R/eps0), both dimensionless.
/// Below the node range the PFA is used, above it the leading series term.
class CapInterpolator {
public:
    CapInterpolator() = default;

    CapInterpolator(double R, double ratio_min, double ratio_max, int node_count = 43,
                    const SeriesOptions& opt = {})
        : R_(R), ratio_min_(ratio_min), ratio_max_(ratio_max) {
        if (!(R > 0.0)) throw DomainError("sphere radius must be positive");
        if (!(ratio_min > 0.0) || !(ratio_max > ratio_min) || node_count < 2)
            throw DomainError("capacitance interpolator needs 0 < min < max and >= 2 nodes");
        ratios_ = num::logspace(ratio_min, ratio_max, static_cast<std::size_t>(node_count));
        std::vector<double> c1, c2;
        for (double x : ratios_) {
            const SpherePlateGeometry g{x * R, R};
            c1.push_back(-cprime_exact(g, opt) / epsilon_0);
            c2.push_back(cdoubleprime_exact(g, opt) * R / epsilon_0);
        }
        cp_ = num::LogLogInterpolator(ratios_, c1);
        cpp_ = num::LogLogInterpolator(ratios_, c2);
        cp_nodes_ = std::move(c1);
    }

    double R() const { return R_; }
    double ratio_min() const { return ratio_min_; }
    double ratio_max() const { return ratio_max_; }
    const std::vector<double>& node_ratios() const { return ratios_; }
    /// Nodal values -C'/eps0.
    const std::vector<double>& node_values() const { return cp_nodes_; }

    double cprime(double d) const {
        const SpherePlateGeometry g{d, R_};
        g.validate();
        const double x = d / R_;
        if (x < ratio_min_) return cprime_pfa(g);
        if (x > ratio_max_) return cprime_leading_term(g);
        return -epsilon_0 * cp_(x);
    }

    double cdoubleprime(double d) const {
        const SpherePlateGeometry g{d, R_};
        g.validate();
        const double x = d / R_;
        if (x < ratio_min_) return cdoubleprime_pfa(g);
        if (x > ratio_max_) return cdoubleprime_leading_term(g);
        return epsilon_0 * cpp_(x) / R_;
    }

private:
    double R_ = 0.0, ratio_min_ = 0.0, ratio_max_ = 0.0;
    std::vector<double> ratios_, cp_nodes_;
    num::LogLogInterpolator cp_, cpp_;
};

inline constexpr double default_ratio_min = 1e-3;
inline constexpr double default_ratio_max = 10.0;

inline CapInterpolator build_interpolator(double R, double ratio_min = default_ratio_min,
                                          double ratio_max = default_ratio_max, int node_count = 43) {
    return CapInterpolator(R, ratio_min, ratio_max, node_count);
}

/// Plain linear interpolation of C' on the interpolator's nodes; used only
/// to compare interpolation schemes.
inline double cprime_linear_interpolated(const CapInterpolator& ci, double d) {
    const double x = d / ci.R();
    return -epsilon_0 * num::interp_linear(ci.node_ratios(), ci.node_values(), x);
}

/// Water-layer factor W: C' scales by W and C'' by W^2.
inline double water_factor(double d, double d_W, double eps_W) {
    if (!(d_W >= 0.0) || !(eps_W > 1.0)) throw DomainError("water layer needs d_W >= 0 and eps_W > 1");
    const double denom = d + d_W * (1.0 / eps_W - 1.0);
    if (!(denom > 0.0) || !(d > 0.0)) throw DomainError("water layer thicker than the gap");
    return d / denom;
}

struct WaterFactors {
    double cprime = 1.0;
    double cdoubleprime = 1.0;
};

inline WaterFactors water_correction(const SpherePlateGeometry& g, double d_W, double eps_W) {
    g.validate();
    const double W = water_factor(g.d, d_W, eps_W);
    return {W, W * W};
}

/// Parallel-plate capacitance per unit area with a dielectric layer of
/// thickness d_W inside the gap d.
inline double parallel_plate_capacitance(double d, double d_W = 0.0, double eps_W = 1.0) {
    const double gap = (d - d_W) + d_W / eps_W;
    if (!(gap > 0.0) || d_W > d) throw DomainError("dielectric layer thicker than the gap");
    return epsilon_0 / gap;
}

/// Capacitance model used by the fits: exact series via the interpolator,
/// or PFA, optionally with a water layer.
class CapacitanceModel {
public:
    enum class Kind { interpolated, pfa };

    CapacitanceModel() = default;

    static CapacitanceModel interpolated(double R, double ratio_min = default_ratio_min,
                                         double ratio_max = default_ratio_max, int node_count = 43) {
        CapacitanceModel m;
        m.kind_ = Kind::interpolated;
        m.R_ = R;
        m.interp_ = std::make_shared<const CapInterpolator>(R, ratio_min, ratio_max, node_count);
        return m;
    }

    static CapacitanceModel pfa(double R) {
        if (!(R > 0.0)) throw DomainError("sphere radius must be positive");
        CapacitanceModel m;
        m.kind_ = Kind::pfa;
        m.R_ = R;
        return m;
    }

    CapacitanceModel with_water(double d_W, double eps_W) const {
        CapacitanceModel m = *this;
        m.d_W_ = d_W;
        m.eps_W_ = eps_W;
        return m;
    }

    Kind kind() const { return kind_; }
    double R() const { return R_; }
    double water_thickness() const { return d_W_; }

    double cprime(double d) const {
        const double base = kind_ == Kind::pfa ? cprime_pfa({d, R_}) : interp_->cprime(d);
        return d_W_ > 0.0 ? base * water_factor(d, d_W_, eps_W_) : base;
    }

    double cdoubleprime(double d) const {
        const double base = kind_ == Kind::pfa ? cdoubleprime_pfa({d, R_}) : interp_->cdoubleprime(d);
        if (d_W_ <= 0.0) return base;
        const double W = water_factor(d, d_W_, eps_W_);
        return base * W * W;
    }

private:
    Kind kind_ = Kind::pfa;
    double R_ = 0.0;
    double d_W_ = 0.0, eps_W_ = 77.0;
    std::shared_ptr<const CapInterpolator> interp_;
};

struct VoltageState {
    double V_AC = 0.0;
    double V_DC = 0.0;
    double V0 = 0.0;
    double V0_Cpp = 0.0;
    double omega_A = 2.0 * pi * 77.0;
};

struct ForceComponents {
    double F_DC = 0.0;  // static
    double F_a = 0.0;   // amplitude at omega_A
    double F_b = 0.0;   // amplitude at 2 omega_A
};

/// Force harmonics of C'(V(t) + V0)^2 / 2 with V(t) = V_DC + V_AC cos(w_A t).
inline ForceComponents electrostatic_force_components(const VoltageState& v, double cprime) {
    if (v.V_AC < 0.0) throw DomainError("V_AC must be non-negative");
    const double u = v.V_DC + v.V0;
    return {0.5 * cprime * (u * u + 0.5 * v.V_AC * v.V_AC), cprime * v.V_AC * u, 0.25 * cprime * v.V_AC * v.V_AC};
}

/// First-order 4 w_A force amplitude C'' C' V_AC^4 / (32 k).
inline double f_4omega_amplitude(double cprime, double cdoubleprime, double V_AC, double k) {
    if (!(k > 0.0)) throw DomainError("spring constant must be positive");
    const double v2 = V_AC * V_AC;
    return cdoubleprime * cprime * v2 * v2 / (32.0 * k);
}

inline double f_4omega_amplitude(const SpherePlateGeometry& g, double V_AC, double k) {
    return f_4omega_amplitude(cprime_exact(g), cdoubleprime_exact(g), V_AC, k);
}

/// PFA form -pi^2 eps0^2 R^2 V^4 / (8 k d^3).
inline double f_4omega_amplitude_pfa(const SpherePlateGeometry& g, double V_AC, double k) {
    return f_4omega_amplitude(cprime_pfa(g), cdoubleprime_pfa(g), V_AC, k);
}

struct SecondOrderDelta {
    double value = 0.0;
    bool expansion_invalid = false;  // delta >= 1
};

/// delta = eps0 pi R V_AC^2 / (k d^2) (PFA form).
inline SecondOrderDelta second_order_delta(const SpherePlateGeometry& g, double V_AC, double k) {
    g.validate();
    if (!(k > 0.0)) throw DomainError("spring constant must be positive");
    const double v = epsilon_0 * pi * g.R * V_AC * V_AC / (k * g.d * g.d);
    return {v, v >= 1.0};
}

/// delta from the loop-held set point, 2 S_set / (gamma d).
inline SecondOrderDelta second_order_delta_feedback(double d, double gamma, double S_set) {
    if (!(d > 0.0) || !(gamma > 0.0) || !(S_set >= 0.0)) throw DomainError("invalid second-order inputs");
    const double v = 2.0 * S_set / (gamma * d);
    return {v, v >= 1.0};
}

/// S_2w including the second-order oscillation correction for a general
/// capacitance: (gamma/k)(C' V^2/4)(1 + C'' V^2 / (2k)).
inline double s2omega_signal(double cprime, double cdoubleprime, double V_AC, double k, double gamma) {
    const double v2 = V_AC * V_AC;
    return (gamma / k) * 0.25 * cprime * v2 * (1.0 + cdoubleprime * v2 / (2.0 * k));
}

/// V_AC that holds |S_2w| at S_set, solving the quadratic in V_AC^2.
inline double vac_for_setpoint(double cprime, double cdoubleprime, double k, double gamma, double S_set) {
    const double a = (gamma / k) * 0.25 * std::abs(cprime);
    const double b = cdoubleprime / (2.0 * k);
    const double target = S_set / a;  // u (1 + b u) = target, u = V^2
    const double u = b > 0.0 ? 2.0 * target / (1.0 + std::sqrt(1.0 + 4.0 * b * target)) : target;
    return std::sqrt(u);
}

}  // namespace fomlab::electrostatics
