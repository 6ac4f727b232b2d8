#pragma once

// Inverse pipeline: electrostatic calibration fits, separation determination,
// drift/bending/phase corrections, artifact estimators, fundamental limits
// and the quadrature uncertainty budget.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fomlab/casimir.hpp"
#include "fomlab/constants.hpp"
#include "fomlab/electrostatics.hpp"
#include "fomlab/error.hpp"
#include "fomlab/hydrodynamics.hpp"
#include "fomlab/io.hpp"
#include "fomlab/numerics.hpp"
#include "fomlab/simulator.hpp"

namespace fomlab::analysis {

using std::numbers::pi;
using constants::epsilon_0;

namespace detail {
inline constexpr double nan = std::numeric_limits<double>::quiet_NaN();

inline Eigen::VectorXd to_vec(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace detail

// ------------------------------------------------------------ C' fit

struct SecondOrderCorrection {
    bool enabled = true;
    double gamma = 0.0;  // V/m, converts the measured S_2w into delta
};

/// delta = C'' V^2 / 2k from a measured S_2w: with q = 2|S| |C''/C'| / gamma,
/// delta (1 + delta) = q. Reduces to 2 S / (gamma d) in the PFA for small delta.
inline double second_order_delta_from_signal(double S, double cprime, double cdoubleprime, double gamma) {
    const double q = 2.0 * std::abs(S) * std::abs(cdoubleprime / cprime) / gamma;
    return 2.0 * q / (1.0 + std::sqrt(1.0 + 4.0 * q));
}

struct S2OmegaFit {
    double kappa = 0.0;
    double d0 = 0.0;
    double kappa_err = 0.0;
    double d0_err = 0.0;
    double cov_kappa_d0 = 0.0;
    double residual_rms = 0.0;
    bool d0_outside_piezo_range = false;
    int iterations = 0;
};

/// Fit S_2w = (kappa / 2R) C'(x - d0) V_AC^2 (1 + delta) for (kappa, d0).
/// x are piezo positions (relative displacements exact).
inline S2OmegaFit fit_s2omega(const std::vector<double>& x, const std::vector<double>& S,
                              const std::vector<double>& V_AC, const electrostatics::CapacitanceModel& cap, double R,
                              const SecondOrderCorrection& second = {}) {
    const std::size_t n = x.size();
    if (S.size() != n || V_AC.size() != n) throw DomainError("fit_s2omega: series lengths differ");
    if (n < 10) throw InsufficientSignalError("fit_s2omega needs at least 10 separation points");
    if (second.enabled && !(second.gamma > 0.0)) throw DomainError("second-order correction needs gamma > 0");
    // Initial guess from the PFA: V^2 / S = -(x - d0) / (kappa pi eps0).
    Eigen::MatrixXd A(static_cast<Eigen::Index>(n), 2);
    Eigen::VectorXd b(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        A(static_cast<Eigen::Index>(i), 0) = 1.0;
        A(static_cast<Eigen::Index>(i), 1) = x[i];
        b(static_cast<Eigen::Index>(i)) = V_AC[i] * V_AC[i] / S[i];
    }
    // Weight the closest points, where the PFA holds.
    std::vector<double> w(n);
    const double xmin = *std::min_element(x.begin(), x.end());
    for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / std::pow(x[i] - xmin + 1e-7, 2);
    const auto lin = num::weighted_linear_lsq(A, b, w);
    const double slope = lin.coeffs(1), icpt = lin.coeffs(0);
    double d0_guess = -icpt / slope;
    double kappa_guess = -1.0 / (slope * pi * epsilon_0);
    if (!(kappa_guess > 0.0) || !std::isfinite(d0_guess)) throw DataError("fit_s2omega: signal has the wrong sign");
    d0_guess = std::min(d0_guess, xmin - 1e-9);
    {
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (double xi : x) {
            lo = std::min(lo, xi - d0_guess);
            hi = std::max(hi, xi - d0_guess);
        }
        if (hi < 10.0 * lo * 0.999) throw InsufficientSignalError("fit_s2omega needs separations spanning a decade");
    }
    const double ks = kappa_guess, ls = 1e-9;
    auto model = [&](double kappa, double d0, std::size_t i) {
        const double d = x[i] - d0;
        if (!(d > 0.0)) return detail::nan;
        const double c1 = cap.cprime(d);
        const double f = second.enabled ? 1.0 + second_order_delta_from_signal(S[i], c1, cap.cdoubleprime(d), second.gamma) : 1.0;
        return kappa / (2.0 * R) * c1 * V_AC[i] * V_AC[i] * f;
    };
    const double scale = 1.0 / std::max(1e-300, std::sqrt(b.size() > 0 ? [&] {
        double s = 0.0;
        for (double v : S) s += v * v;
        return s / static_cast<double>(n);
    }() : 1.0));
    auto resid = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) r(static_cast<Eigen::Index>(i)) = (model(p(0) * ks, p(1) * ls, i) - S[i]) * scale;
        return r;
    };
    Eigen::VectorXd p0(2);
    p0 << 1.0, d0_guess / ls;
    num::LmOptions opt;
    opt.max_iterations = 400;
    const auto res = num::levenberg_marquardt(resid, p0, opt);
    if (!res.converged) throw ConvergenceError("fit_s2omega did not converge", std::sqrt(res.reduced_chi2()) / scale);
    S2OmegaFit out;
    out.kappa = res.params(0) * ks;
    out.d0 = res.params(1) * ls;
    out.kappa_err = res.std_error(0) * ks;
    out.d0_err = res.std_error(1) * ls;
    out.cov_kappa_d0 = res.covariance(0, 1) * std::max(res.reduced_chi2(), 1e-300) * ks * ls;
    out.residual_rms = std::sqrt(res.chi2 / static_cast<double>(n)) / scale;
    out.iterations = res.iterations;
    out.d0_outside_piezo_range = out.d0 >= xmin || out.d0 < 0.0;
    return out;
}

/// Sensitivity with d0 known: the model is linear in kappa.
inline double fit_kappa_fixed_d0(const std::vector<double>& d, const std::vector<double>& S,
                                 const std::vector<double>& V_AC, const electrostatics::CapacitanceModel& cap, double R,
                                 const SecondOrderCorrection& second = {}) {
    if (d.size() != S.size() || d.size() != V_AC.size()) throw DomainError("fit_kappa_fixed_d0: lengths differ");
    if (d.empty()) throw InsufficientSignalError("fit_kappa_fixed_d0 needs data");
    double smm = 0.0, smy = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!(d[i] > 0.0)) throw DomainError("separation must be positive");
        const double c1 = cap.cprime(d[i]);
        const double f =
            second.enabled ? 1.0 + second_order_delta_from_signal(S[i], c1, cap.cdoubleprime(d[i]), second.gamma) : 1.0;
        const double m = c1 * V_AC[i] * V_AC[i] * f / (2.0 * R);
        smm += m * m;
        smy += m * S[i];
    }
    const double kappa = smy / smm;
    if (!(kappa > 0.0)) throw DataError("fit_kappa_fixed_d0: signal has the wrong sign");
    return kappa;
}

// ----------------------------------------------------------- parabolas

struct ParabolaFit {
    double curvature = 0.0;  // V^-1 (signal per V^2)
    double curvature_err = 0.0;
    double V0_Cpp = 0.0;     // the vertex sits at V = -V0_Cpp
    double V0_Cpp_err = 0.0;
    double offset = 0.0;     // signal at the vertex
};

/// Quadratic least squares S = a (V + V0_Cpp)^2 + c.
inline ParabolaFit fit_parabola(const std::vector<double>& V, const std::vector<double>& S) {
    if (V.size() != S.size()) throw DomainError("fit_parabola: series lengths differ");
    if (V.size() < 5) throw InsufficientSignalError("fit_parabola needs at least 5 voltage points");
    const double vc = num::mean(V);
    std::vector<double> u(V.size());
    for (std::size_t i = 0; i < V.size(); ++i) u[i] = V[i] - vc;
    const auto f = num::polyfit(u, S, 2);
    const double a = f.coeffs(2), b = f.coeffs(1), c = f.coeffs(0);
    if (!(a > 0.0)) throw DataError("parabola has non-positive curvature; check the signal orientation");
    const double s2 = f.dof > 0 ? f.chi2 / static_cast<double>(f.dof) : 0.0;
    ParabolaFit out;
    out.curvature = a;
    out.curvature_err = std::sqrt(f.covariance(2, 2) * s2);
    const double uv = -b / (2.0 * a);
    out.V0_Cpp = -(uv + vc);
    // Vertex error from first-order propagation.
    const double dvb = -1.0 / (2.0 * a), dva = b / (2.0 * a * a);
    out.V0_Cpp_err = std::sqrt(std::max(0.0, s2 * (dvb * dvb * f.covariance(1, 1) + dva * dva * f.covariance(2, 2) +
                                                   2.0 * dva * dvb * f.covariance(1, 2))));
    out.offset = c - b * b / (4.0 * a);
    return out;
}

/// C'' seen through plate modulation of amplitude dd (finite-amplitude
/// lock-in average).
inline double cdoubleprime_measured(const electrostatics::CapacitanceModel& cap, double d, double dd) {
    return sim::demodulated_gradient([&](double g) { return cap.cdoubleprime(g); }, d, dd, 32);
}

struct CppFit {
    double kappa = 0.0;
    double d0 = 0.0;
    double kappa_err = 0.0;
    double d0_err = 0.0;
    double reduced_chi2 = 0.0;
};

/// Fit curvature_i = kappa f_i dd_i C''_meas(x_i - d0) / R. f_i are per-point
/// sensitivity factors (1 for a single run, kappa_run / kappa_ref when runs
/// with different sensitivities are pooled).
inline CppFit fit_cpp(const std::vector<double>& x, const std::vector<double>& curvature,
                      const std::vector<double>& curvature_err, const std::vector<double>& delta_d,
                      const electrostatics::CapacitanceModel& cap, double R, const std::vector<double>& factors = {},
                      double d0_guess = 0.0) {
    const std::size_t n = x.size();
    if (curvature.size() != n || delta_d.size() != n || (!curvature_err.empty() && curvature_err.size() != n) ||
        (!factors.empty() && factors.size() != n))
        throw DomainError("fit_cpp: series lengths differ");
    if (n < 3) throw InsufficientSignalError("fit_cpp needs at least 3 curvatures");
    auto fac = [&](std::size_t i) { return factors.empty() ? 1.0 : factors[i]; };
    auto sig = [&](std::size_t i) { return curvature_err.empty() ? 1.0 : std::max(curvature_err[i], 1e-300); };
    // Linear estimate of kappa at the guessed d0.
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double m = fac(i) * delta_d[i] * cdoubleprime_measured(cap, x[i] - d0_guess, delta_d[i]) / R;
        num += m * curvature[i] / (sig(i) * sig(i));
        den += m * m / (sig(i) * sig(i));
    }
    const double ks = num / den;
    if (!(ks > 0.0)) throw DataError("fit_cpp: curvatures have the wrong sign");
    const double ls = 1e-9;
    double xmin = *std::min_element(x.begin(), x.end());
    auto resid = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const double d = x[i] - p(1) * ls;
            r(static_cast<Eigen::Index>(i)) =
                d - delta_d[i] > 0.0
                    ? (p(0) * ks * fac(i) * delta_d[i] * cdoubleprime_measured(cap, d, delta_d[i]) / R - curvature[i]) /
                          sig(i)
                    : detail::nan;
        }
        return r;
    };
    Eigen::VectorXd p0(2);
    p0 << 1.0, std::min(d0_guess, xmin - 1e-9) / ls;
    const auto res = num::levenberg_marquardt(resid, p0);
    if (!res.converged) throw ConvergenceError("fit_cpp did not converge", std::sqrt(res.reduced_chi2()));
    CppFit out;
    out.kappa = res.params(0) * ks;
    out.d0 = res.params(1) * ls;
    // With explicit errors the covariance is absolute; otherwise scale by chi2.
    const double s = curvature_err.empty() ? std::max(res.reduced_chi2(), 1e-300) : 1.0;
    out.kappa_err = std::sqrt(res.covariance(0, 0) * s) * ks;
    out.d0_err = std::sqrt(res.covariance(1, 1) * s) * ls;
    out.reduced_chi2 = res.reduced_chi2();
    return out;
}

// ------------------------------------------------------ k / gamma split

struct KGamma {
    double k = 0.0;
    double gamma = 0.0;
    double S4_fit = 0.0;  // A / (pi eps0), see below
    double S4_fit_err = 0.0;
    double snr = 0.0;
};

/// Fit S_4w = -A psi(d) V^4 with psi = |C' C''| / (4 pi^2 eps0^2 R^2)
/// (-> 1/d^3 in the PFA) and A = kappa pi^2 eps0^2 R / (4k). With
/// S4_fit = A / (pi eps0): k = (eps0 pi R / 4) kappa / S4_fit and
/// gamma = 2 k kappa / R, so kappa = gamma R / 2k holds exactly.
inline KGamma separate_k_gamma(double kappa, const std::vector<double>& d, const std::vector<double>& S4,
                               const std::vector<double>& V_AC, double R, const electrostatics::CapacitanceModel& cap,
                               double min_snr = 5.0) {
    if (!(kappa > 0.0) || !(R > 0.0)) throw DomainError("separate_k_gamma needs kappa, R > 0");
    if (d.size() != S4.size() || d.size() != V_AC.size()) throw DomainError("separate_k_gamma: series lengths differ");
    if (d.size() < 2) throw InsufficientSignalError("separate_k_gamma needs at least 2 points");
    double smm = 0.0, smy = 0.0;
    std::vector<double> m(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double psi = std::abs(cap.cprime(d[i]) * cap.cdoubleprime(d[i])) / (4.0 * pi * pi * epsilon_0 * epsilon_0 * R * R);
        const double v2 = V_AC[i] * V_AC[i];
        m[i] = -psi * v2 * v2;
        smm += m[i] * m[i];
        smy += m[i] * S4[i];
    }
    const double A = smy / smm;
    double chi2 = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) chi2 += std::pow(S4[i] - A * m[i], 2);
    const double sA = std::sqrt(chi2 / static_cast<double>(d.size() - 1) / smm);
    KGamma out;
    out.snr = sA > 0.0 ? A / sA : std::numeric_limits<double>::infinity();
    if (!(A > 0.0) || out.snr < min_snr) throw InsufficientSignalError("4w_A signal is below the noise floor");
    out.S4_fit = A / (pi * epsilon_0);
    out.S4_fit_err = sA / (pi * epsilon_0);
    out.k = epsilon_0 * pi * R / 4.0 * kappa / out.S4_fit;
    out.gamma = 2.0 * out.k * kappa / R;
    return out;
}

// --------------------------------------------------------------- drift

struct DriftModel {
    double t_ref = 0.0;
    double intercept = 0.0;
    double slope = 0.0;  // m/s
    double operator()(double t) const { return intercept + slope * (t - t_ref); }
};

struct DriftCorrection {
    std::vector<DriftModel> per_run;
    bool global_fallback = false;
};

/// Linear fit of d0 over a window of five runs (two before, two after and
/// the run itself; shifted at the ends). Fewer than five runs fall back to a
/// single global line.
inline DriftCorrection drift_correct(const std::vector<double>& t, const std::vector<double>& d0) {
    if (t.size() != d0.size() || t.empty()) throw DomainError("drift_correct: series lengths differ or are empty");
    const std::size_t n = t.size();
    auto line = [&](std::size_t lo, std::size_t hi, double tref) {
        DriftModel m;
        m.t_ref = tref;
        if (hi - lo == 1) {
            m.intercept = d0[lo];
            return m;
        }
        std::vector<double> tt, yy;
        for (std::size_t i = lo; i < hi; ++i) {
            tt.push_back(t[i] - tref);
            yy.push_back(d0[i]);
        }
        const auto f = num::polyfit(tt, yy, 1);
        m.intercept = f.coeffs(0);
        m.slope = f.coeffs(1);
        return m;
    };
    DriftCorrection out;
    if (n < 5) {
        out.global_fallback = true;
        for (std::size_t i = 0; i < n; ++i) out.per_run.push_back(line(0, n, t[i]));
        return out;
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t lo = i >= 2 ? i - 2 : 0;
        lo = std::min(lo, n - 5);
        out.per_run.push_back(line(lo, lo + 5, t[i]));
    }
    return out;
}

// ------------------------------------------------------------- bending

struct BendingFit {
    double amplitude = 0.0;  // m at 1 um
    double exponent = 0.0;
    double constant = 0.0;   // m
    bool ok = false;
    std::string warning;
    double operator()(double d) const {
        return ok ? amplitude * std::pow(d / 1e-6, -exponent) + constant : constant;
    }
};

/// Phenomenological power law for the static bending deflection/gamma
/// versus separation. `with_constant` adds a separation-independent term.
inline BendingFit bending_correct(const std::vector<double>& d, const std::vector<double>& deflection, double gamma,
                                  bool with_constant = false, double max_bending = 100e-9) {
    if (d.size() != deflection.size()) throw DomainError("bending_correct: series lengths differ");
    if (!(gamma > 0.0)) throw DomainError("bending_correct needs gamma > 0");
    BendingFit out;
    std::vector<double> x, y;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double b = deflection[i] / gamma;
        if (d[i] > 0.0 && std::abs(b) < max_bending) {
            x.push_back(d[i]);
            y.push_back(b);
        }
    }
    if (x.size() < 4) {
        out.warning = "too few points for the bending fit";
        return out;
    }
    const double ymax = *std::max_element(y.begin(), y.end());
    const double ymin = *std::min_element(y.begin(), y.end());
    if (ymax - ymin < 1e-12) {
        // No distance dependence: a pure offset, or no force at all.
        out.constant = with_constant ? num::mean(y) : 0.0;
        out.warning = "no detectable bending";
        return out;
    }
    const std::size_t imin = static_cast<std::size_t>(std::min_element(x.begin(), x.end()) - x.begin());
    const double c0 = with_constant ? y[static_cast<std::size_t>(std::max_element(x.begin(), x.end()) - x.begin())] : 0.0;
    const double a0 = std::max(y[imin] - c0, 1e-13) * std::pow(x[imin] / 1e-6, 3.0);
    const double s = 1e-9;
    auto resid = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(x.size()));
        for (std::size_t i = 0; i < x.size(); ++i)
            r(static_cast<Eigen::Index>(i)) =
                (p(0) * a0 * std::pow(x[i] / 1e-6, -p(1)) + (with_constant ? p(2) * s : 0.0) - y[i]) / s;
        return r;
    };
    Eigen::VectorXd p0(with_constant ? 3 : 2);
    p0(0) = 1.0;
    p0(1) = 3.0;
    if (with_constant) p0(2) = c0 / s;
    const auto res = num::levenberg_marquardt(resid, p0);
    if (!res.converged || !res.params.allFinite()) {
        out.warning = "power-law fit failed; bending correction skipped";
        return out;
    }
    out.ok = true;
    out.amplitude = res.params(0) * a0;
    out.exponent = res.params(1);
    out.constant = with_constant ? res.params(2) * s : 0.0;
    return out;
}

// -------------------------------------------------------- interference

struct InterferenceEstimate {
    double amplitude_half = 0.0;     // lambda/2 component, N/m^2
    double amplitude_quarter = 0.0;  // lambda/4 component
    double phase_half = 0.0, phase_quarter = 0.0;
    double total() const { return amplitude_half + amplitude_quarter; }
};

/// Sinusoids at lambda/2 and lambda/4 periods fitted to force gradient / R
/// (N/m^2) beyond d_min, together with a smooth 1 + d^-3 background. The
/// model is linear, so amplitudes and phases follow from one solve.
inline InterferenceEstimate estimate_interference(const std::vector<double>& d, const std::vector<double>& y,
                                                  double wavelength = 860e-9, double d_min = 500e-9) {
    if (d.size() != y.size()) throw DomainError("estimate_interference: series lengths differ");
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < d.size(); ++i)
        if (d[i] > d_min) {
            xs.push_back(d[i]);
            ys.push_back(y[i]);
        }
    if (xs.size() < 8) throw InsufficientSignalError("interference estimate needs data beyond the cut");
    const double span = *std::max_element(xs.begin(), xs.end()) - *std::min_element(xs.begin(), xs.end());
    if (span < wavelength) throw InsufficientSignalError("interference estimate needs two periods of data");
    Eigen::MatrixXd A(static_cast<Eigen::Index>(xs.size()), 6);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double p1 = 4.0 * pi * xs[i] / wavelength, p2 = 2.0 * p1;
        A(r, 0) = 1.0;
        A(r, 1) = std::pow(xs[i] / d_min, -3.0);
        A(r, 2) = std::sin(p1);
        A(r, 3) = std::cos(p1);
        A(r, 4) = std::sin(p2);
        A(r, 5) = std::cos(p2);
    }
    const auto f = num::weighted_linear_lsq(A, detail::to_vec(ys));
    InterferenceEstimate out;
    out.amplitude_half = std::hypot(f.coeffs(2), f.coeffs(3));
    out.amplitude_quarter = std::hypot(f.coeffs(4), f.coeffs(5));
    out.phase_half = std::atan2(f.coeffs(3), f.coeffs(2));
    out.phase_quarter = std::atan2(f.coeffs(5), f.coeffs(4));
    return out;
}

// ------------------------------------------------------ stochastic noise

struct NoiseBin {
    double lo = 0.0, hi = 0.0;
    double center = 0.0;  // mean separation of the members
    double mean = 0.0;
    double stddev = 0.0;
    double sem = 0.0;
    std::size_t count = 0;
    bool merged = false;
};

/// Bin (d, y) into windows of `width` and report standard errors. Bins with
/// fewer than `min_count` members are merged into their neighbour.
inline std::vector<NoiseBin> stochastic_noise(const std::vector<double>& d, const std::vector<double>& y,
                                              double width = 2e-9, std::size_t min_count = 5) {
    if (d.size() != y.size()) throw DomainError("stochastic_noise: series lengths differ");
    if (!(width > 0.0)) throw DomainError("bin width must be positive");
    std::vector<std::size_t> idx(d.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
    struct Raw {
        double lo, hi;
        std::vector<std::size_t> members;
        bool merged = false;
    };
    std::vector<Raw> raw;
    for (std::size_t i : idx) {
        const double b = std::floor(d[i] / width);
        if (raw.empty() || b * width >= raw.back().hi - 1e-6 * width) raw.push_back({b * width, (b + 1.0) * width, {}});
        raw.back().members.push_back(i);
    }
    // Merge sparse bins forward (the last one backward).
    std::vector<Raw> bins;
    for (auto& r : raw) {
        if (!bins.empty() && bins.back().members.size() < min_count) {
            auto& p = bins.back();
            p.hi = r.hi;
            p.members.insert(p.members.end(), r.members.begin(), r.members.end());
            p.merged = true;
        } else {
            bins.push_back(std::move(r));
        }
    }
    if (bins.size() > 1 && bins.back().members.size() < min_count) {
        auto last = std::move(bins.back());
        bins.pop_back();
        bins.back().hi = last.hi;
        bins.back().members.insert(bins.back().members.end(), last.members.begin(), last.members.end());
        bins.back().merged = true;
    }
    std::vector<NoiseBin> out;
    for (const auto& b : bins) {
        std::vector<double> ys, ds;
        for (std::size_t i : b.members) {
            ys.push_back(y[i]);
            ds.push_back(d[i]);
        }
        NoiseBin nb;
        nb.lo = b.lo;
        nb.hi = b.hi;
        nb.center = num::mean(ds);
        nb.mean = num::mean(ys);
        nb.count = ys.size();
        nb.stddev = ys.size() > 1 ? num::stddev(ys) : 0.0;
        nb.sem = nb.stddev / std::sqrt(static_cast<double>(nb.count));
        nb.merged = b.merged;
        out.push_back(nb);
    }
    return out;
}

/// Groups of consecutive (separation-sorted) points of a fixed size.
inline std::vector<NoiseBin> group_by_count(const std::vector<double>& d, const std::vector<double>& y,
                                            std::size_t group = 50) {
    if (d.size() != y.size() || group < 2) throw DomainError("group_by_count: invalid input");
    std::vector<std::size_t> idx(d.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
    std::vector<NoiseBin> out;
    for (std::size_t s = 0; s + group <= idx.size(); s += group) {
        std::vector<double> ys, ds;
        for (std::size_t j = s; j < s + group; ++j) {
            ys.push_back(y[idx[j]]);
            ds.push_back(d[idx[j]]);
        }
        NoiseBin nb;
        nb.lo = ds.front();
        nb.hi = ds.back();
        nb.center = num::mean(ds);
        nb.mean = num::mean(ys);
        nb.count = group;
        nb.stddev = num::stddev(ys);
        nb.sem = nb.stddev / std::sqrt(static_cast<double>(group));
        out.push_back(nb);
    }
    return out;
}

// --------------------------------------------------------- hydro phase

/// Hydrodynamic drag model fitted to the quadrature channel, giving the
/// cantilever phase lag at the plate frequency.
struct HydroPhaseModel {
    double eta = hydro::eta_air;
    double b = hydro::slip_length_low;
    double R = 0.0;
    double k = 0.0;
    double omega_pz = 0.0;
    double omega1 = 0.0;
    double Q_far = 0.0;

    hydro::HydroParams params() const { return {eta, b, k / (omega1 * Q_far), R}; }
    /// Drag amplitude per unit shake amplitude, N/m.
    double drag_per_amplitude(double d) const { return hydro::surface_damping(d, params()) * omega_pz; }
    double phi_c(double d) const { return hydro::phase_lag(d, omega_pz, k, omega1, params()).radians; }
};

/// Lag at the plate frequency scaled from the lag measured at 2 w_A.
inline double phase_from_electrostatic(double phase_2omegaA, double omega_pz, double omega_A) {
    return phase_2omegaA * omega_pz / (2.0 * omega_A);
}

/// Fit (eta, b) to quadrature amplitudes Y_i = (2 kappa_i / R) drag(d_i) dd_i.
inline HydroPhaseModel fit_hydro_phase(const std::vector<double>& d, const std::vector<double>& Y,
                                       const std::vector<double>& delta_d, const std::vector<double>& kappa,
                                       HydroPhaseModel base) {
    const std::size_t n = d.size();
    if (Y.size() != n || delta_d.size() != n || kappa.size() != n) throw DomainError("fit_hydro_phase: lengths differ");
    if (n < 4) throw InsufficientSignalError("fit_hydro_phase needs at least 4 points");
    double scale = 0.0;
    for (double v : Y) scale = std::max(scale, std::abs(v));
    if (!(scale > 0.0)) throw InsufficientSignalError("no quadrature signal");
    auto resid = [&](const Eigen::VectorXd& p) {
        HydroPhaseModel m = base;
        m.eta = p(0) * hydro::eta_air;
        m.b = p(1) * 1e-7;
        Eigen::VectorXd r(static_cast<Eigen::Index>(n));
        if (!(m.eta > 0.0) || !(m.b > 0.0)) return Eigen::VectorXd(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), detail::nan));
        for (std::size_t i = 0; i < n; ++i)
            r(static_cast<Eigen::Index>(i)) =
                (2.0 * kappa[i] / base.R * hydro::surface_damping(d[i], m.params()) * base.omega_pz * delta_d[i] - Y[i]) /
                scale;
        return r;
    };
    Eigen::VectorXd p0(2);
    p0 << base.eta / hydro::eta_air, base.b / 1e-7;
    const auto res = num::levenberg_marquardt(resid, p0);
    if (!res.converged || !res.params.allFinite()) throw ConvergenceError("hydrodynamic fit did not converge", res.chi2);
    base.eta = res.params(0) * hydro::eta_air;
    base.b = res.params(1) * 1e-7;
    return base;
}

enum class LeakageRule {
    lag_model,  // rotate by the modelled residual angle phi_c(d) - theta_ref
    half_lag,   // subtract S_Q sin(phi_c / 2)
};

struct LeakageCorrected {
    double in_phase = 0.0;
    double quadrature = 0.0;
    double leakage = 0.0;  // removed from the in-phase channel
};

/// Undo a residual demodulation angle psi between conservative (X) and
/// drag (Y) responses: S_I = X cos psi + Y sin psi, S_Q = Y cos psi - X sin psi.
inline LeakageCorrected hydro_leakage_correct(double S_I, double S_Q, double phi_c, LeakageRule rule = LeakageRule::lag_model,
                                              double theta_ref = 0.0) {
    LeakageCorrected out;
    if (rule == LeakageRule::half_lag) {
        out.leakage = S_Q * std::sin(0.5 * phi_c);
        out.in_phase = S_I - out.leakage;
        out.quadrature = S_Q;
        return out;
    }
    const double psi = phi_c - theta_ref;
    out.in_phase = S_I * std::cos(psi) - S_Q * std::sin(psi);
    out.quadrature = S_Q * std::cos(psi) + S_I * std::sin(psi);
    out.leakage = S_I - out.in_phase;
    return out;
}

/// Budgeted hydrodynamic contribution |F_H sin dtheta| + |F_H sin(phi_c/2)|.
inline double hydro_budget_term(double FH, double dtheta_ref, double phi_c) {
    return std::abs(FH * std::sin(dtheta_ref)) + std::abs(FH) * std::abs(std::sin(0.5 * phi_c));
}

// ------------------------------------------------------ V0 artifact fit

struct V0ArtifactFit {
    double V0 = 0.0;
    double offset_term = 0.0;  // c in V0_rep = V0 + c / (C' V_AC)
    double V0_err = 0.0;
};

inline V0ArtifactFit fit_v0_artifact(const std::vector<double>& d, const std::vector<double>& V0_rep,
                                     const std::vector<double>& V_AC, const electrostatics::CapacitanceModel& cap) {
    if (d.size() != V0_rep.size() || d.size() != V_AC.size()) throw DomainError("fit_v0_artifact: lengths differ");
    if (d.size() < 3) throw InsufficientSignalError("fit_v0_artifact needs at least 3 points");
    Eigen::MatrixXd A(static_cast<Eigen::Index>(d.size()), 2);
    for (std::size_t i = 0; i < d.size(); ++i) {
        A(static_cast<Eigen::Index>(i), 0) = 1.0;
        A(static_cast<Eigen::Index>(i), 1) = 1.0 / (cap.cprime(d[i]) * V_AC[i]);
    }
    const auto f = num::weighted_linear_lsq(A, detail::to_vec(V0_rep));
    return {f.coeffs(0), f.coeffs(1), std::sqrt(f.covariance(0, 0) * f.reduced_chi2())};
}

// -------------------------------------------------------------- limits

struct LimitReport {
    double d_min = 0.0;
    double F_min = 0.0;
    double Fprime_min = 0.0;  // at the given shake amplitude
    double delta_d = 0.0;
    double d_max = 0.0;       // for fixed delta_d
    double d_max_bound = 0.0; // for delta_d = chi d
};

inline LimitReport limits(const sim::ProbeParams& probe, double B, double chi, double delta_d = 48e-9,
                          double T = constants::T_default) {
    probe.validate();
    if (!(B > 0.0)) throw DomainError("bandwidth must be positive");
    if (!(chi > 0.0) || !(chi < 1.0)) throw DomainError("chi must lie in (0, 1)");
    if (!(delta_d > 0.0)) throw DomainError("shake amplitude must be positive");
    using constants::hbar, constants::c, constants::k_B;
    const double pi3 = pi * pi * pi;
    LimitReport r;
    r.d_min = std::pow(hbar * c * pi3 / 120.0 * probe.R / probe.k, 0.25);
    const double root = std::sqrt(probe.k * k_B * T / (probe.omega1 * probe.Q_far));
    r.F_min = 2.0 * root * std::sqrt(B);
    r.delta_d = delta_d;
    r.Fprime_min = r.F_min / delta_d;
    r.d_max = std::pow(hbar * c * pi3 * probe.R / 240.0 * delta_d / std::sqrt(B) / root, 0.25);
    r.d_max_bound = std::pow(hbar * c * pi3 * probe.R / 240.0 * chi / std::sqrt(B) / root, 1.0 / 3.0);
    return r;
}

/// Frequency shift -(omega1 / 2k) dF/dd of an FM measurement, rad/s.
inline double fm_shift(double gradient, const sim::ProbeParams& probe) {
    probe.validate();
    return -probe.omega1 / (2.0 * probe.k) * gradient;
}

// -------------------------------------------------------------- budget

inline const std::vector<std::string>& budget_sources() {
    static const std::vector<std::string> s{"calibration", "separation", "interference",
                                            "hydrodynamic", "stochastic", "electrostatic_residual"};
    return s;
}

struct BudgetRow {
    double d = 0.0;
    std::map<std::string, double> contributions;  // N/m
    double total = 0.0;
    std::string dominant;
};

struct UncertaintyBudget {
    std::vector<BudgetRow> rows;
    std::vector<std::string> absent;  // sources flagged missing
    std::optional<double> crossover;  // first d where separation is not dominant
    std::string crossover_to;
    std::string note =
        "sources combined in quadrature as uncorrelated; most separation errors bias the surface to appear closer";
};

/// Per-separation source curves; missing sources are flagged absent and
/// contribute zero.
struct BudgetInputs {
    std::vector<double> grid;
    std::map<std::string, std::vector<double>> sources;
};

inline UncertaintyBudget build_budget(const BudgetInputs& in) {
    UncertaintyBudget b;
    for (const auto& name : budget_sources())
        if (!in.sources.count(name)) b.absent.push_back(name);
    for (const auto& [name, v] : in.sources) {
        if (v.size() != in.grid.size()) throw DomainError("budget source '" + name + "' does not match the grid");
        if (std::find(budget_sources().begin(), budget_sources().end(), name) == budget_sources().end())
            throw ConfigError("unknown budget source '" + name + "'");
    }
    for (std::size_t i = 0; i < in.grid.size(); ++i) {
        BudgetRow r;
        r.d = in.grid[i];
        double s2 = 0.0, best = -1.0;
        for (const auto& name : budget_sources()) {
            double v = 0.0;
            if (auto it = in.sources.find(name); it != in.sources.end()) v = std::abs(it->second[i]);
            r.contributions[name] = v;
            s2 += v * v;
            if (v > best) {
                best = v;
                r.dominant = name;
            }
        }
        r.total = std::sqrt(s2);
        b.rows.push_back(std::move(r));
    }
    for (std::size_t i = 0; i < b.rows.size(); ++i) {
        if (b.rows[i].dominant != "separation" && i > 0 && b.rows[i - 1].dominant == "separation") {
            b.crossover = b.rows[i].d;
            b.crossover_to = b.rows[i].dominant;
            break;
        }
    }
    return b;
}

inline void write_budget_csv(std::ostream& out, const UncertaintyBudget& b) {
    std::vector<std::string> header{"d_m"};
    for (const auto& s : budget_sources()) header.push_back(s + "_N_per_m");
    header.push_back("total_N_per_m");
    std::vector<std::vector<double>> rows;
    for (const auto& r : b.rows) {
        std::vector<double> row{r.d};
        for (const auto& s : budget_sources()) row.push_back(r.contributions.at(s));
        row.push_back(r.total);
        rows.push_back(std::move(row));
    }
    io::write_csv(out, header, rows);
}

// ------------------------------------------------------------- pipeline

/// Theory curve used for F'' in the separation term and for the relative
/// calibration term.
using TheoryCurve = sim::CasimirTruth;

struct AnalysisConfig {
    double calibration_fraction = 0.05;
    double separation_sigma = 2e-9;       // C''-based separation
    double separation_sigma_cprime = 2.3e-9;
    bool use_cpp_separation = true;
    double dtheta_ref = constants::deg_to_rad(0.2);
    LeakageRule leakage_rule = LeakageRule::lag_model;
    bool correct_ratchet_bias = true;
    double bin_width = 2e-9;
    std::size_t min_bin_count = 5;
    double budget_d_min = 30e-9, budget_d_max = 300e-9;
    double interference_d_min = 500e-9;
    double wavelength = 860e-9;
    double hydro_fit_d_max = 2e-6;
    int calibration_iterations = 6;
    bool second_order = true;
};

struct RunFit {
    int run = 0;
    std::string kind;
    double t_mid = 0.0;
    double kappa = 0.0, kappa_err = 0.0;
    double d0 = 0.0, d0_err = 0.0;
    double gamma = 0.0;
    BendingFit bending1, bending2;
};

struct CalibrationResult {
    double kappa = 0.0;       // campaign mean over measurement runs
    double kappa_scatter = 0.0;  // relative std after removing a linear trend
    double d0 = 0.0;          // first run, C' path
    double k = 0.0, gamma = 0.0;
    double k_err = 0.0;
    double kappa_cal = 0.0;
    double cpp_kappa = 0.0, cpp_kappa_err = 0.0;
    double cpp_offset = 0.0, cpp_offset_err = 0.0;  // d0(C'') - d0(C')
    std::size_t parabolas_used = 0, parabolas_rejected = 0;
    double V0_Cpp = 0.0;
    V0ArtifactFit v0_artifact;
    std::vector<RunFit> runs;
    DriftCorrection drift;
    bool drift_fallback = false;
};

struct RecoveredPoint {
    int run = 0;
    double d = 0.0;
    double gradient = 0.0;  // N/m, attractive positive
    double delta_d = 0.0;
};

struct AnalysisResult {
    CalibrationResult calibration;
    HydroPhaseModel hydro;
    InterferenceEstimate interference;
    std::vector<RecoveredPoint> points;
    std::vector<NoiseBin> bins;  // recovered gradient per separation bin
    UncertaintyBudget budget;
    std::vector<std::string> warnings;
    std::map<int, double> prev_kappa;  // per-run kappa from the previous calibration pass
};

inline double calib_prev_kappa(const sim::RunRecord& r, const AnalysisResult& a) {
    const auto it = a.prev_kappa.find(r.index);
    if (it == a.prev_kappa.end()) throw Error("no previous sensitivity for run " + std::to_string(r.index));
    return it->second;
}

inline double kappa_detrended_scatter(const std::vector<double>& t, const std::vector<double>& kappa) {
    if (kappa.size() < 3) return 0.0;
    const auto f = num::polyfit(t, kappa, 1);
    std::vector<double> rel;
    for (std::size_t i = 0; i < kappa.size(); ++i) rel.push_back(kappa[i] / (f.coeffs(0) + f.coeffs(1) * t[i]) - 1.0);
    return num::stddev(rel);
}

namespace detail {

inline double null_offset(const sim::RunRecord& r, double t) {
    const double a = r.null_start.empty() ? 0.0 : num::mean(r.null_start);
    const double b = r.null_end.empty() ? a : num::mean(r.null_end);
    if (r.t_null_end <= r.t_null_start) return a;
    return a + (b - a) * (t - r.t_null_start) / (r.t_null_end - r.t_null_start);
}

/// C' fit of one run. `drift_slope` (m/s) removes a linear d0 drift inside
/// the run; the returned d0 refers to the run's mid time.
inline RunFit fit_run(const sim::RunRecord& r, const electrostatics::CapacitanceModel& cap, double R, double gamma,
                      bool second_order, double drift_slope = 0.0) {
    RunFit f;
    f.run = r.index;
    f.kind = r.kind;
    f.gamma = gamma;
    f.t_mid = 0.5 * (r.steps.front().t + r.steps.back().t);
    std::vector<double> x, S, V, defl1, defl2;
    for (const auto& s : r.steps) {
        x.push_back(s.d_pz - drift_slope * (s.t - f.t_mid));
        S.push_back(s.S_2omegaA);
        V.push_back(s.V_AC);
        defl1.push_back(s.deflection1 - r.deflection_reference);
        defl2.push_back(s.deflection2 - r.deflection_reference);
    }
    // Two passes: bending needs separations, separations need d0.
    double d0 = x.back() < x.front() ? x.back() - 50e-9 : x.front() - 50e-9;
    for (int pass = 0; pass < 3; ++pass) {
        std::vector<double> d(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) d[i] = std::max(x[i] - d0, 1e-9);
        f.bending1 = bending_correct(d, defl1, gamma, true, 1e-6);
        if (r.kind != "calibration") f.bending2 = bending_correct(d, defl2, gamma, false);
        std::vector<double> xc(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) xc[i] = x[i] - f.bending1(d[i]);
        const auto fit = fit_s2omega(xc, S, V, cap, R, {second_order, gamma});
        d0 = fit.d0;
        f.kappa = fit.kappa;
        f.kappa_err = fit.kappa_err;
        f.d0 = fit.d0;
        f.d0_err = fit.d0_err;
    }
    return f;
}

}  // namespace detail

/// Full inverse pipeline over a simulated (or recorded) campaign.
inline AnalysisResult analyze_campaign(const sim::Campaign& c, const TheoryCurve& theory, const AnalysisConfig& cfg = {}) {
    AnalysisResult out;
    const double R = c.nominal.R;
    const auto cap = electrostatics::CapacitanceModel::interpolated(R);
    const auto& proto = c.protocol;
    std::vector<const sim::RunRecord*> meas;
    const sim::RunRecord* cal = nullptr;
    for (const auto& r : c.runs) {
        if (r.steps.size() < 10) {
            out.warnings.push_back(fmt::format("run {} skipped ({} steps{})", r.index, r.steps.size(),
                                               r.jump_to_contact ? ", jump to contact" : ""));
            continue;
        }
        if (r.kind == "calibration")
            cal = &r;
        else
            meas.push_back(&r);
    }
    if (meas.empty()) throw InsufficientSignalError("campaign has no usable measurement runs");
    auto& calib = out.calibration;

    // Outer loop: run fits need gamma (bending, second order); gamma comes
    // from the calibration run, which needs d0 from the run fits.
    double gamma = c.nominal.gamma, k = c.nominal.k;
    std::vector<double> tm, d0s, kap;
    const int outer = cal ? 3 : 2;
    for (int o = 0; o < outer; ++o) {
        const auto previous_drift = calib.drift;
        calib.runs.clear();
        tm.clear();
        d0s.clear();
        kap.clear();
        for (const auto* r : meas) {
            double g_run = gamma, slope = 0.0;
            if (o > 0) {
                g_run = 2.0 * k * calib_prev_kappa(*r, out) / R;
                slope = previous_drift.per_run[calib.runs.size()].slope;
            }
            auto rf = detail::fit_run(*r, cap, R, g_run, cfg.second_order, slope);
            calib.runs.push_back(rf);
            tm.push_back(rf.t_mid);
            d0s.push_back(rf.d0);
            kap.push_back(rf.kappa);
        }
        calib.drift = drift_correct(tm, d0s);
        out.prev_kappa.clear();
        for (const auto& rf : calib.runs) out.prev_kappa[rf.run] = rf.kappa;
        if (!cal) continue;
        const double d0_cal = calib.drift.per_run.back()(cal->steps.front().t);
        for (int it = 0; it < cfg.calibration_iterations; ++it) {
            std::vector<double> d, S2, S4, V;
            for (const auto& s : cal->steps) {
                const double b = (s.deflection1 - cal->deflection_reference) / gamma;
                d.push_back(s.d_pz - d0_cal - b);
                S2.push_back(s.S_2omegaA);
                S4.push_back(s.S_4omegaA);
                V.push_back(s.V_AC);
            }
            const double kappa_cal = fit_kappa_fixed_d0(d, S2, V, cap, R, {cfg.second_order, gamma});
            const auto kg = separate_k_gamma(kappa_cal, d, S4, V, R, cap);
            calib.k_err = kg.k * kg.S4_fit_err / kg.S4_fit;
            calib.kappa_cal = kappa_cal;
            const bool done = std::abs(kg.gamma - gamma) < 1e-9 * gamma;
            gamma = kg.gamma;
            k = kg.k;
            if (done) break;
        }
    }
    if (!cal) out.warnings.push_back("no calibration run; k and gamma are nominal");
    calib.k = k;
    calib.gamma = gamma;
    calib.kappa = num::mean(kap);
    calib.kappa_scatter = kappa_detrended_scatter(tm, kap);
    calib.d0 = d0s.front();
    calib.drift_fallback = calib.drift.global_fallback;
    if (calib.drift_fallback) out.warnings.push_back("fewer than 5 runs; global drift line used");

    // Separation in C' coordinates for every step of every run.
    auto sep_cprime = [&](std::size_t ri, const sim::StepRecord& s) {
        const auto& rf = calib.runs[ri];
        const double d0 = calib.drift.per_run[ri](s.t);
        const double d = s.d_pz - d0;
        return d - rf.bending2(std::max(d, 1e-9));
    };

    // Parabolas: aligned multi-run C'' fit.
    {
        std::vector<double> x, a, ae, dd, fac, v0;
        for (std::size_t ri = 0; ri < meas.size(); ++ri) {
            for (const auto& s : meas[ri]->steps) {
                if (s.parabola_V.size() < 5) continue;
                try {
                    const auto p = fit_parabola(s.parabola_V, s.parabola_S);
                    x.push_back(sep_cprime(ri, s));
                    a.push_back(p.curvature);
                    ae.push_back(std::max(p.curvature_err, 1e-3 * p.curvature));
                    dd.push_back(s.delta_d);
                    fac.push_back(calib.runs[ri].kappa / calib.kappa);
                    if (p.V0_Cpp_err < 5e-3) v0.push_back(p.V0_Cpp);
                    ++calib.parabolas_used;
                } catch (const DataError&) {
                    ++calib.parabolas_rejected;
                }
            }
        }
        if (x.size() >= 3) {
            const auto f = fit_cpp(x, a, ae, dd, cap, R, fac, 0.0);
            calib.cpp_kappa = f.kappa;
            calib.cpp_kappa_err = f.kappa_err;
            calib.cpp_offset = f.d0;
            calib.cpp_offset_err = f.d0_err;
        } else {
            out.warnings.push_back("too few parabolas; C'' separation unavailable");
        }
        calib.V0_Cpp = v0.empty() ? 0.0 : num::median(v0);
    }
    {
        std::vector<double> d, v, V;
        for (std::size_t ri = 0; ri < meas.size(); ++ri)
            for (const auto& s : meas[ri]->steps) {
                d.push_back(std::max(sep_cprime(ri, s), 1e-9));
                v.push_back(s.V0_reported);
                V.push_back(s.V_AC);
            }
        calib.v0_artifact = fit_v0_artifact(d, v, V, cap);
    }
    const bool use_cpp = cfg.use_cpp_separation && calib.parabolas_used >= 3;
    const double offset = use_cpp ? calib.cpp_offset : 0.0;
    auto separation = [&](std::size_t ri, const sim::StepRecord& s) { return sep_cprime(ri, s) - offset; };

    // Hydrodynamic phase model from the quadrature channel (iterated with
    // the rotation it implies).
    HydroPhaseModel hm;
    hm.R = R;
    hm.k = k;
    hm.omega_pz = proto.omega_pz;
    hm.omega1 = c.nominal.omega1;
    hm.Q_far = c.nominal.Q_far;
    for (int it = 0; it < 3; ++it) {
        std::vector<double> d, Y, dd, kk;
        for (std::size_t ri = 0; ri < meas.size(); ++ri)
            for (const auto& s : meas[ri]->steps) {
                const double x = separation(ri, s);
                if (!(x > 0.0) || x > cfg.hydro_fit_d_max) continue;
                const double SI = s.S_I - detail::null_offset(*meas[ri], s.t);
                const auto lc = hydro_leakage_correct(SI, s.S_Q, it == 0 ? proto.theta_ref : hm.phi_c(x),
                                                      LeakageRule::lag_model, proto.theta_ref);
                d.push_back(x);
                Y.push_back(lc.quadrature);
                dd.push_back(s.delta_d);
                kk.push_back(calib.runs[ri].kappa);
            }
        try {
            hm = fit_hydro_phase(d, Y, dd, kk, hm);
        } catch (const Error& e) {
            out.warnings.push_back(std::string("hydrodynamic fit: ") + e.what());
            break;
        }
    }
    out.hydro = hm;

    // Recovered force gradients.
    std::vector<double> es_grad_residual_d, es_grad_residual;
    for (std::size_t ri = 0; ri < meas.size(); ++ri) {
        const double kappa_r = calib.runs[ri].kappa;
        for (const auto& s : meas[ri]->steps) {
            const double x = separation(ri, s);
            if (!(x > 0.0)) continue;
            const double SI = s.S_I - detail::null_offset(*meas[ri], s.t);
            const auto lc = hydro_leakage_correct(SI, s.S_Q, hm.phi_c(x), cfg.leakage_rule, proto.theta_ref);
            double G = lc.in_phase * R / (2.0 * kappa_r * s.delta_d);
            const double u = s.V_DC + calib.V0_Cpp;
            G -= 0.5 * cap.cdoubleprime(x) * u * u;
            if (cfg.correct_ratchet_bias) G /= 1.0 + casimir::ratchet_bias(std::min(s.delta_d / x, 0.99));
            out.points.push_back({meas[ri]->index, x, G, s.delta_d});
        }
    }
    std::vector<double> pd, pg;
    for (const auto& p : out.points) {
        pd.push_back(p.d);
        pg.push_back(p.gradient);
    }
    out.bins = stochastic_noise(pd, pg, cfg.bin_width, cfg.min_bin_count);
    {
        std::vector<double> y(pg.size());
        for (std::size_t i = 0; i < pg.size(); ++i) y[i] = pg[i] / R;
        try {
            out.interference = estimate_interference(pd, y, cfg.wavelength, cfg.interference_d_min);
        } catch (const Error& e) {
            out.warnings.push_back(std::string("interference: ") + e.what());
        }
    }

    // Budget on the bins inside the budget range.
    BudgetInputs bi;
    std::vector<double> calv, sepv, intv, hydv, stov, esv;
    const double sigma_d = use_cpp ? cfg.separation_sigma : cfg.separation_sigma_cprime;
    const double sigma_v0 = std::abs(calib.v0_artifact.V0 - calib.V0_Cpp);
    for (const auto& b : out.bins) {
        if (b.center < cfg.budget_d_min || b.center > cfg.budget_d_max) continue;
        const double d = b.center;
        bi.grid.push_back(d);
        calv.push_back(cfg.calibration_fraction * std::abs(theory.gradient(d)));
        sepv.push_back(sigma_d * std::abs(theory.gradient_derivative(d)));
        intv.push_back(out.interference.total() * R);
        hydv.push_back(hydro_budget_term(hm.drag_per_amplitude(d), cfg.dtheta_ref, hm.phi_c(d)));
        stov.push_back(b.sem);
        esv.push_back(0.5 * cap.cdoubleprime(d) * sigma_v0 * sigma_v0);
    }
    bi.sources = {{"calibration", calv}, {"separation", sepv},  {"interference", intv},
                  {"hydrodynamic", hydv}, {"stochastic", stov}, {"electrostatic_residual", esv}};
    out.budget = build_budget(bi);
    return out;
}

inline io::json calibration_to_json(const CalibrationResult& c) {
    io::json runs = io::json::array();
    for (const auto& r : c.runs)
        runs.push_back({{"run", r.run}, {"kind", r.kind}, {"t_mid_s", r.t_mid}, {"kappa", r.kappa},
                        {"kappa_err", r.kappa_err}, {"d0_m", r.d0}, {"d0_err_m", r.d0_err}, {"gamma", r.gamma}});
    return {{"kappa", c.kappa},
            {"kappa_scatter", c.kappa_scatter},
            {"d0_m", c.d0},
            {"k_N_per_m", c.k},
            {"k_err_N_per_m", c.k_err},
            {"gamma_V_per_m", c.gamma},
            {"kappa_calibration_run", c.kappa_cal},
            {"cpp_kappa", c.cpp_kappa},
            {"cpp_kappa_err", c.cpp_kappa_err},
            {"cpp_d0_offset_m", c.cpp_offset},
            {"cpp_d0_offset_err_m", c.cpp_offset_err},
            {"parabolas_used", c.parabolas_used},
            {"parabolas_rejected", c.parabolas_rejected},
            {"V0_Cpp", c.V0_Cpp},
            {"V0_artifact", {{"V0", c.v0_artifact.V0}, {"offset_term", c.v0_artifact.offset_term}}},
            {"drift_global_fallback", c.drift_fallback},
            {"runs", runs}};
}

}  // namespace fomlab::analysis
