#pragma once

// Finite-temperature Lifshitz pressure between layered planar bodies, the
// PFA sphere-plate gradient and the force-calculation uncertainty sources.
//
// Sign convention: pressures and gradients are positive when attractive.

#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "fomlab/constants.hpp"
#include "fomlab/dielectric.hpp"
#include "fomlab/error.hpp"
#include "fomlab/io.hpp"
#include "fomlab/numerics.hpp"

namespace fomlab::casimir {

using dielectric::DielectricModel;
using std::numbers::pi;

struct Layer {
    std::shared_ptr<const DielectricModel> material;
    double thickness = std::numeric_limits<double>::infinity();  // m; infinite = semi-infinite
};

/// Layers on each side are ordered from the gap outward; the last layer of
/// each side must be semi-infinite.
struct LayerStack {
    std::vector<Layer> side1, side2;
    std::shared_ptr<const DielectricModel> gap;

    void validate() const {
        if (!gap) throw ConfigError("layer stack without gap medium");
        for (const auto* side : {&side1, &side2}) {
            if (side->empty()) throw ConfigError("layer stack side without layers");
            for (std::size_t i = 0; i < side->size(); ++i) {
                const auto& l = (*side)[i];
                if (!l.material) throw ConfigError("layer without material");
                const bool last = i + 1 == side->size();
                if (last != std::isinf(l.thickness)) throw ConfigError("only the outermost layer is semi-infinite");
                if (!last && !(l.thickness > 0.0)) throw ConfigError("layer thickness must be positive");
            }
        }
    }

    /// Total thickness of finite layers on both sides.
    double coating_thickness() const {
        double t = 0.0;
        for (const auto* side : {&side1, &side2})
            for (const auto& l : *side)
                if (!std::isinf(l.thickness)) t += l.thickness;
        return t;
    }

    static LayerStack symmetric(std::shared_ptr<const DielectricModel> bulk,
                                std::shared_ptr<const DielectricModel> gap_medium) {
        LayerStack s;
        s.side1 = {{bulk}};
        s.side2 = {{bulk}};
        s.gap = std::move(gap_medium);
        return s;
    }

    /// Bulk on both sides, each coated with a film of the given thickness.
    static LayerStack coated(std::shared_ptr<const DielectricModel> bulk, std::shared_ptr<const DielectricModel> film,
                             double film_thickness, std::shared_ptr<const DielectricModel> gap_medium) {
        if (!(film_thickness > 0.0)) return symmetric(std::move(bulk), std::move(gap_medium));
        LayerStack s;
        s.side1 = {{film, film_thickness}, {bulk}};
        s.side2 = {{film, film_thickness}, {bulk}};
        s.gap = std::move(gap_medium);
        return s;
    }
};

/// Zero-frequency treatment of metals.
enum class ZeroFrequency {
    drude,   // TE reflection vanishes
    plasma,  // TE reflection of a plasma with the model's omega_p
};

struct LifshitzOptions {
    double matsubara_rel_tol = 1e-6;
    int max_matsubara = 200000;
    int gauss_order = 16;
    std::vector<double> panel_edges{0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0};  // in units of 2 q d
    ZeroFrequency zero_frequency = ZeroFrequency::drude;
};

namespace detail {

struct Medium {
    double eps = 1.0;  // eps(i xi)
    bool perfect = false;
    bool metal = false;
    double omega_p_m = 0.0;  // plasma wavenumber omega_p / c (1/m) for the plasma n = 0 rule
};

struct Reflection {
    double tm = 0.0, te = 0.0;
};

}  // namespace detail

/// Evaluates the Lifshitz pressure for one stack and temperature, caching
/// permittivities at the Matsubara frequencies. Not thread-safe.
class LifshitzCalculator {
public:
    LifshitzCalculator(LayerStack stack, double T = constants::T_default, LifshitzOptions opt = {})
        : stack_(std::move(stack)), T_(T), opt_(std::move(opt)) {
        stack_.validate();
        if (!(T > 0.0)) throw DomainError("temperature must be positive");
    }

    const LayerStack& stack() const { return stack_; }
    double temperature() const { return T_; }
    const LifshitzOptions& options() const { return opt_; }

    /// Pressure at gap width d (m), N/m^2, positive when attractive.
    double pressure(double d) {
        if (!(d > 0.0)) throw DomainError("gap width must be positive");
        const double prefactor = constants::k_B * T_ / pi;
        double sum = 0.5 * matsubara_term(0, d);
        double prev = std::abs(sum);
        for (int n = 1; n <= opt_.max_matsubara; ++n) {
            const double t = matsubara_term(n, d);
            sum += t;
            const double at = std::abs(t);
            const double rho = prev > 0.0 ? at / prev : 1.0;
            prev = at;
            if (n >= 2 && rho < 1.0) {
                const double tail = at * rho / (1.0 - rho);
                if (tail < opt_.matsubara_rel_tol * std::abs(sum)) return prefactor * sum;
            }
            if (at == 0.0 && n > 2) return prefactor * sum;
        }
        throw ConvergenceError("Matsubara sum did not converge", prev / std::abs(sum));
    }

    /// Energy per unit area magnitude, integral of the pressure from d to
    /// infinity (J/m^2).
    double energy(double d) {
        double e = 0.0;
        double a = d;
        for (int i = 0; i < 60; ++i) {
            const double b = a * 1.5;
            e += num::gauss_integrate([this](double x) { return pressure(x); }, a, b, 8);
            if (pressure(b) * b < 1e-9 * e) break;
            a = b;
        }
        return e;
    }

    /// Integrand of the n-th Matsubara term (without the k_B T / pi factor).
    double matsubara_term(int n, double d) {
        const double xi = constants::matsubara_rad_s(n, T_);
        const auto& media = media_at(n);
        const double eps_gap = media.gap.eps;
        const double q_min = std::sqrt(eps_gap) * xi / constants::c;
        const double scale = 1.0 / (2.0 * d);
        const auto& rule = num::gauss_legendre(opt_.gauss_order);
        double total = 0.0;
        for (std::size_t p = 0; p + 1 < opt_.panel_edges.size(); ++p) {
            const double a = opt_.panel_edges[p], b = opt_.panel_edges[p + 1];
            const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
            double s = 0.0;
            for (int i = 0; i < opt_.gauss_order; ++i) {
                const double t = mid + half * rule.nodes[i];
                const double q = q_min + t * scale;
                s += rule.weights[i] * integrand(n, q, xi, d, media);
            }
            total += s * half * scale;
        }
        return total;
    }

private:
    struct MediaSet {
        detail::Medium gap;
        std::vector<detail::Medium> side1, side2;
    };

    detail::Medium medium(const DielectricModel& m, int n, double xi_eV) const {
        detail::Medium out;
        out.metal = m.is_metal();
        out.perfect = m.kind() == dielectric::ModelKind::perfect_conductor;
        if (out.metal && !out.perfect) out.omega_p_m = constants::eV_to_rad_s(m.drude_params().omega_p) / constants::c;
        if (n == 0) {
            out.eps = m.static_permittivity();
        } else if (!out.perfect) {
            out.eps = m.eps(xi_eV);
        }
        return out;
    }

    const MediaSet& media_at(int n) {
        auto it = cache_.find(n);
        if (it != cache_.end()) return it->second;
        const double xi_eV = constants::matsubara_eV(n, T_);
        MediaSet ms;
        ms.gap = medium(*stack_.gap, n, xi_eV);
        for (const auto& l : stack_.side1) ms.side1.push_back(medium(*l.material, n, xi_eV));
        for (const auto& l : stack_.side2) ms.side2.push_back(medium(*l.material, n, xi_eV));
        return cache_.emplace(n, std::move(ms)).first->second;
    }

    // Wavevector normal to the interfaces inside a medium.
    static double normal_k(const detail::Medium& m, double kpar2, double xi2_c2) {
        return std::sqrt(kpar2 + m.eps * xi2_c2);
    }

    detail::Reflection interface(int n, const detail::Medium& a, const detail::Medium& b, double ka, double kb,
                                 double kpar) const {
        if (b.perfect) return {1.0, -1.0};
        if (n == 0) {
            detail::Reflection r;
            if (b.metal) {
                r.tm = 1.0;
                if (opt_.zero_frequency == ZeroFrequency::plasma) {
                    const double kp = std::sqrt(kpar * kpar + b.omega_p_m * b.omega_p_m);
                    r.te = (kpar - kp) / (kpar + kp);
                }
            } else if (a.metal) {
                r.tm = -1.0;
            } else {
                r.tm = (b.eps - a.eps) / (b.eps + a.eps);
            }
            return r;
        }
        return {(b.eps * ka - a.eps * kb) / (b.eps * ka + a.eps * kb), (ka - kb) / (ka + kb)};
    }

    detail::Reflection side_reflection(int n, const detail::Medium& gap, const std::vector<Layer>& layers,
                                       const std::vector<detail::Medium>& media, double kpar2, double xi2_c2,
                                       double k_gap) const {
        const double kpar = std::sqrt(kpar2);
        const std::size_t N = media.size();
        // Work inward from the outermost interface.
        std::vector<double> k(N);
        for (std::size_t j = 0; j < N; ++j) k[j] = normal_k(media[j], kpar2, xi2_c2);
        detail::Reflection R{};
        for (std::size_t j = N; j-- > 0;) {
            const auto& left = j == 0 ? gap : media[j - 1];
            const double kl = j == 0 ? k_gap : k[j - 1];
            const auto rij = interface(n, left, media[j], kl, k[j], kpar);
            if (j == N - 1) {
                R = rij;
            } else {
                const double e = std::exp(-2.0 * k[j] * layers[j].thickness);
                R.tm = (rij.tm + R.tm * e) / (1.0 + rij.tm * R.tm * e);
                R.te = (rij.te + R.te * e) / (1.0 + rij.te * R.te * e);
            }
        }
        return R;
    }

    double integrand(int n, double q, double xi, double d, const MediaSet& ms) const {
        const double xi2_c2 = (xi / constants::c) * (xi / constants::c);
        const double kpar2 = std::max(q * q - ms.gap.eps * xi2_c2, 0.0);
        const auto r1 = side_reflection(n, ms.gap, stack_.side1, ms.side1, kpar2, xi2_c2, q);
        const auto r2 = side_reflection(n, ms.gap, stack_.side2, ms.side2, kpar2, xi2_c2, q);
        const double e = std::exp(-2.0 * q * d);
        double s = 0.0;
        for (double rr : {r1.tm * r2.tm, r1.te * r2.te}) {
            const double x = rr * e;
            s += x / (1.0 - x);
        }
        return q * q * s;
    }

    LayerStack stack_;
    double T_;
    LifshitzOptions opt_;
    std::map<int, MediaSet> cache_;
};

/// Convenience: one-off pressure evaluation.
inline double lifshitz_pressure(const LayerStack& stack, double d, double T = constants::T_default,
                                const LifshitzOptions& opt = {}) {
    LifshitzCalculator calc(stack, T, opt);
    return calc.pressure(d);
}

/// Zero-temperature perfect-conductor pressure pi^2 hbar c / (240 d^4).
inline double ideal_pressure(double d) {
    return pi * pi * constants::hbar * constants::c / (240.0 * std::pow(d, 4));
}

/// PFA sphere-plate force gradient 2 pi R P(d).
template <class PressureFn>
double sphere_plate_gradient(PressureFn&& pp, double R, double d) {
    return 2.0 * pi * R * pp(d);
}

/// Ideal-conductor sphere-plate gradient hbar c pi^3 R / (120 d^4).
inline double ideal_gradient(double R, double d) { return 2.0 * pi * R * ideal_pressure(d); }

struct ForceCurve {
    std::vector<double> separations;
    std::vector<double> values;
    std::string label;

    void validate() const {
        if (separations.size() != values.size()) throw DataError("force curve size mismatch");
        for (std::size_t i = 0; i < separations.size(); ++i) {
            if (!std::isfinite(values[i])) throw DataError("force curve contains non-finite values");
            if (i > 0 && !(separations[i] > separations[i - 1]))
                throw DataError("force curve separations must increase");
        }
    }

    void write_csv(std::ostream& out) const {
        out << "d_m,value,label\n";
        for (std::size_t i = 0; i < separations.size(); ++i)
            out << io::fmt9(separations[i]) << ',' << io::fmt9(values[i]) << ',' << label << '\n';
    }
};

/// Fractional overestimate of a d^-4 gradient measured with a finite shake
/// amplitude chi = dd/d.
inline double ratchet_bias(double chi) {
    if (!(chi >= 0.0) || !(chi < 1.0)) throw DomainError("chi must lie in [0, 1)");
    return 2.5 * chi * chi;
}

struct WaterSweepPoint {
    double d = 0.0;
    double f_low = 0.0, f_mid = 0.0, f_high = 0.0;
    double uncertainty = 0.0;
};

/// |F_low - F_mid| / 2 + |F_high - F_mid| / 2.
inline double water_sweep_uncertainty(double f_low, double f_mid, double f_high) {
    return 0.5 * std::abs(f_low - f_mid) + 0.5 * std::abs(f_high - f_mid);
}

/// Sphere-plate gradients for three water thicknesses on each surface. d is
/// the metal-to-metal separation; the air gap shrinks by twice the film.
inline std::vector<WaterSweepPoint> water_layer_sweep(std::shared_ptr<const DielectricModel> metal,
                                                      std::shared_ptr<const DielectricModel> water,
                                                      std::shared_ptr<const DielectricModel> gap,
                                                      const std::vector<double>& separations, double R,
                                                      const std::vector<double>& thicknesses = {0.75e-9, 1.5e-9,
                                                                                                2.25e-9},
                                                      double T = constants::T_default,
                                                      const LifshitzOptions& opt = {}) {
    if (thicknesses.size() != 3) throw DomainError("water sweep needs exactly three thicknesses");
    std::vector<LifshitzCalculator> calcs;
    for (double t : thicknesses) calcs.emplace_back(LayerStack::coated(metal, water, t, gap), T, opt);
    std::vector<WaterSweepPoint> out;
    for (double d : separations) {
        WaterSweepPoint p;
        p.d = d;
        double f[3];
        for (int i = 0; i < 3; ++i) {
            const double air = d - 2.0 * thicknesses[static_cast<std::size_t>(i)];
            f[i] = 2.0 * pi * R * calcs[static_cast<std::size_t>(i)].pressure(air);
        }
        p.f_low = f[0];
        p.f_mid = f[1];
        p.f_high = f[2];
        p.uncertainty = water_sweep_uncertainty(f[0], f[1], f[2]);
        out.push_back(p);
    }
    return out;
}

/// Per-separation spread of tabulated patch-potential gradients: sample
/// standard deviation (n - 1 denominator) across realizations.
inline ForceCurve patch_potential_uncertainty(const io::CsvTable& table) {
    const std::size_t dcol = table.column("d_m");
    std::vector<std::size_t> cols;
    for (std::size_t i = 0; i < table.header.size(); ++i)
        if (table.header[i].rfind("dFdd_", 0) == 0) cols.push_back(i);
    if (cols.size() < 2) throw DataError("patch-potential data needs at least two realizations");
    ForceCurve fc;
    fc.label = "patch_potential_std";
    for (const auto& row : table.rows) {
        std::vector<double> v;
        for (auto c : cols) v.push_back(row[c]);
        fc.separations.push_back(row[dcol]);
        fc.values.push_back(num::stddev(v));
    }
    fc.validate();
    return fc;
}

inline ForceCurve patch_potential_ingest(const std::filesystem::path& file) {
    return patch_potential_uncertainty(io::read_csv(io::resolve_data_path(file)));
}

/// Sphere-plate gradient curve of a stack, tabulated for interpolation.
inline ForceCurve gradient_curve(LifshitzCalculator& calc, const std::vector<double>& separations, double R,
                                 std::string label) {
    ForceCurve fc;
    fc.label = std::move(label);
    for (double d : separations) {
        fc.separations.push_back(d);
        fc.values.push_back(2.0 * pi * R * calc.pressure(d));
    }
    fc.validate();
    return fc;
}

}  // namespace fomlab::casimir
