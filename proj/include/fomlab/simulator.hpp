#pragma once

// Synthetic force-modulation campaigns: approach/retract runs with the
// three-step protocol (electrostatic lock-in signals with Kelvin and 2w_A
// loops, Casimir gradient by plate modulation, DC voltage parabolas),
// ratcheting of the shake amplitude, noise, drift, interference and
// instrument artifacts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fomlab/casimir.hpp"
#include "fomlab/constants.hpp"
#include "fomlab/dielectric.hpp"
#include "fomlab/electrostatics.hpp"
#include "fomlab/error.hpp"
#include "fomlab/hydrodynamics.hpp"
#include "fomlab/io.hpp"
#include "fomlab/numerics.hpp"

namespace fomlab::sim {

using std::numbers::pi;

struct ProbeParams {
    double k = 0.1;                   // N/m
    double gamma = 1.0 / 700e-9;      // V/m
    double R = 40e-6;                 // m
    double omega1 = 2.0 * pi * 1e4;   // rad/s
    double Q_far = 100.0;
    double L = 250e-6, W = 33e-6;     // m, metadata

    void validate() const {
        if (!(k > 0.0) || !(gamma > 0.0) || !(R > 0.0) || !(omega1 > 0.0) || !(Q_far > 0.0) || !(L > 0.0) ||
            !(W > 0.0))
            throw ConfigError("probe parameters must be positive");
    }
    double kappa() const { return gamma * R / (2.0 * k); }
    double gamma0() const { return hydro::gamma0_from_q(k, omega1, Q_far); }
};

inline ProbeParams reference_probe() { return {}; }

struct RatchetEntry {
    double threshold = 0.0;  // applies for d <= threshold
    double delta_d = 0.0;
};

struct ProtocolConfig {
    double omega_pz = 2.0 * pi * 211.0;
    double omega_A = 2.0 * pi * 77.0;
    double S_set = 1e-3;     // V, 2w_A set point
    double A_set = 0.0;      // m, 2w_A oscillation amplitude set point (derived from S_set / gamma if 0)
    double base_delta_d = 48e-9;
    std::vector<RatchetEntry> ratchet{{320e-9, 40e-9}, {266.7e-9, 32e-9}, {213.3e-9, 24e-9},
                                      {160e-9, 16e-9}, {106.7e-9, 8e-9},  {53.3e-9, 4e-9}};
    double chi_max = 0.15;
    double bandwidth = 1.0;  // Hz
    double V_AC_cal = 8.0;
    double theta_ref = 0.0;  // constant reference-phase compensation subtracted from the lag
    // Separation schedule: coarse, medium and fine segments (start, stop, step).
    struct Segment {
        double start, stop, step;
    };
    std::vector<Segment> schedule{{5e-6, 1e-6, 100e-9}, {1e-6, 300e-9, 20e-9}, {300e-9, 45e-9, 2e-9}};
    double parabola_min_d = 110e-9;
    int parabola_points = 7;
    double parabola_span_max = 1.0;          // V
    double parabola_gradient_fraction = 0.005;  // electrostatic gradient at span edge / k
    double step_duration = 7.7;              // s per separation
    int runs = 30;
    double campaign_hours = 13.0;
    bool calibration_run = true;
    double cal_d_start = 8e-6, cal_d_stop = 2e-6;
    int cal_points = 40;
    int null_samples = 20;

    void validate() const {
        if (!(omega_pz > 0.0) || !(omega_A > 0.0)) throw ConfigError("drive frequencies must be positive");
        for (int m : {1, 2, 4})
            for (int q = 1; q <= 4; ++q)
                if (std::abs(q * omega_pz - m * omega_A) < 1e-6 * omega_A)
                    throw ConfigError("plate frequency collides with a harmonic of omega_A");
        if (!(chi_max > 0.0) || !(chi_max < 1.0)) throw ConfigError("chi_max must lie in (0, 1)");
        if (runs < 1) throw ConfigError("campaign needs at least one run");
    }

    /// Nominal separations of an approach (decreasing, no duplicates).
    std::vector<double> approach_separations() const {
        std::vector<double> out;
        for (const auto& s : schedule) {
            const int n = static_cast<int>(std::llround((s.start - s.stop) / s.step));
            for (int i = 0; i <= n; ++i) {
                const double d = s.start - i * s.step;
                if (out.empty() || d < out.back() - 1e-12) out.push_back(d);
            }
        }
        return out;
    }
};

/// Shake amplitude for separation d from the ratchet table (no hysteresis).
inline double ratchet_table(const ProtocolConfig& p, double d) {
    if (!(d > 0.0)) throw DomainError("separation must be positive");
    double dd = p.base_delta_d;
    for (const auto& e : p.ratchet)
        if (d <= e.threshold) dd = std::min(dd, e.delta_d);
    return std::min(dd, p.chi_max * d);
}

enum class Direction { approach, retract };

/// Stateful ratchet: on approach the amplitude only decreases, on retract it
/// only increases.
class Ratchet {
public:
    Ratchet(const ProtocolConfig& p, Direction dir) : p_(&p), dir_(dir) {}

    double next(double d) {
        const double t = ratchet_table(*p_, d);
        if (!current_) {
            current_ = t;
        } else if (dir_ == Direction::approach) {
            current_ = std::min(*current_, t);
        } else {
            current_ = std::max(*current_, std::min(t, p_->chi_max * d));
        }
        current_ = std::min(*current_, p_->chi_max * d);
        return *current_;
    }

private:
    const ProtocolConfig* p_;
    Direction dir_;
    std::optional<double> current_;
};

inline double ratchet_schedule(const ProtocolConfig& p, double d, Direction) { return ratchet_table(p, d); }

struct InterferenceConfig {
    double amplitude1 = 0.8;   // N/m^2 (force gradient / R units), lambda/2 component
    double amplitude2 = 0.2;   // lambda/4 component
    double wavelength = 860e-9;
    double phase1 = 0.7, phase2 = 2.1;
    double envelope_depth = 0.0;   // slow amplitude modulation
    double envelope_length = 5e-6;

    double value(double d) const {
        const double env = 1.0 + envelope_depth * std::sin(2.0 * pi * d / envelope_length);
        return env * (amplitude1 * std::sin(4.0 * pi * d / wavelength + phase1) +
                      amplitude2 * std::sin(8.0 * pi * d / wavelength + phase2));
    }
    double total_amplitude() const { return amplitude1 + amplitude2; }
};

inline InterferenceConfig sld_interference() { return {0.8, 0.2}; }
inline InterferenceConfig laser_interference() { return {8.0, 2.0}; }

struct NoiseConfig {
    double detector_noise_density = 25e-6;  // V/sqrt(Hz)
    double phase_noise = 2e-4;              // rad, 2w_A phase channel
    double lia_offset = -180e-6;            // V
    double lia_offset_drift = 10e-6;        // V/hour
    double ac_coupling_offset = 10e-6;      // V, into the Kelvin loop
    InterferenceConfig interference = sld_interference();
    double drift_rate = 50e-9 / 3600.0;     // m/s at t = 0
    double drift_time_constant = 10.0 * 3600.0;  // s
    double sensitivity_drift = 0.10;        // fractional change of gamma over the campaign
    double kappa_jitter = 0.01;             // run-to-run relative
    double tracking_error = 1e-9;           // m, per-run error of the nominal separation
    double reference_phase_error = constants::deg_to_rad(0.2);  // rad
    double deflection_noise = 20e-6;        // V

    /// Everything off: noiseless, artifact-free.
    static NoiseConfig none() {
        NoiseConfig n;
        n.detector_noise_density = 0.0;
        n.phase_noise = 0.0;
        n.lia_offset = 0.0;
        n.lia_offset_drift = 0.0;
        n.ac_coupling_offset = 0.0;
        n.interference = {0.0, 0.0};
        n.drift_rate = 0.0;
        n.sensitivity_drift = 0.0;
        n.kappa_jitter = 0.0;
        n.tracking_error = 0.0;
        n.reference_phase_error = 0.0;
        n.deflection_noise = 0.0;
        return n;
    }
};

/// Tabulated attractive Casimir gradient and force of the sphere-plate
/// system, log-log interpolated.
class CasimirTruth {
public:
    CasimirTruth() = default;

    /// Gold-gold Lifshitz pressure converted with the PFA.
    static CasimirTruth lifshitz(const dielectric::DielectricModel& metal, double R, double T = constants::T_default,
                                 double d_min = 10e-9, double d_max = 20e-6, int points = 90) {
        auto m = std::make_shared<const dielectric::DielectricModel>(metal);
        auto vac = std::make_shared<const dielectric::DielectricModel>(dielectric::DielectricModel::vacuum());
        casimir::LifshitzCalculator calc(casimir::LayerStack::symmetric(m, vac), T);
        const auto ds = num::logspace(d_min, d_max, static_cast<std::size_t>(points));
        std::vector<double> P;
        for (double d : ds) P.push_back(calc.pressure(d));
        return from_pressure(ds, P, R, metal.label());
    }

    /// Ideal-conductor law, useful for fast tests.
    static CasimirTruth ideal(double R, double d_min = 5e-9, double d_max = 50e-6) {
        const auto ds = num::logspace(d_min, d_max, 60);
        std::vector<double> P;
        for (double d : ds) P.push_back(casimir::ideal_pressure(d));
        return from_pressure(ds, P, R, "ideal");
    }

    static CasimirTruth zero() {
        CasimirTruth t;
        t.zero_ = true;
        t.label_ = "none";
        return t;
    }

    static CasimirTruth from_pressure(const std::vector<double>& ds, const std::vector<double>& P, double R,
                                      std::string label) {
        CasimirTruth t;
        t.R_ = R;
        t.label_ = std::move(label);
        t.pressure_ = num::LogLogInterpolator(ds, P);
        // Energy per area: integral of P from d to the end of the table plus
        // a power-law tail.
        std::vector<double> E(ds.size());
        const double slope_end = t.pressure_.log_slope(ds.back());
        E.back() = P.back() * ds.back() / (-slope_end - 1.0);
        for (std::size_t i = ds.size() - 1; i-- > 0;) {
            E[i] = E[i + 1] + num::gauss_integrate([&](double x) { return t.pressure_(x); }, ds[i], ds[i + 1], 8);
        }
        t.energy_ = num::LogLogInterpolator(ds, E);
        return t;
    }

    bool is_zero() const { return zero_; }
    const std::string& label() const { return label_; }
    double R() const { return R_; }
    double pressure(double d) const { return zero_ ? 0.0 : pressure_(d); }
    /// Attractive force gradient, N/m (positive).
    double gradient(double d) const { return zero_ ? 0.0 : 2.0 * pi * R_ * pressure_(d); }
    /// Attractive force magnitude, N.
    double force(double d) const { return zero_ ? 0.0 : 2.0 * pi * R_ * energy_(d); }
    /// Second derivative of the force (derivative of the gradient), N/m^2 (negative).
    double gradient_derivative(double d) const {
        return zero_ ? 0.0 : gradient(d) * pressure_.log_slope(d) / d;
    }

private:
    bool zero_ = false;
    std::string label_;
    double R_ = 0.0;
    num::LogLogInterpolator pressure_, energy_;
};

/// Ground-truth physical state of a campaign.
struct Truth {
    ProbeParams probe;
    double V0 = 0.025;      // force-minimizing potential, V
    double V0_Cpp = 0.027;  // gradient-minimizing potential, V
    double d0_initial = 2.0e-6;  // piezo coordinate of contact at t = 0, m
    hydro::HydroParams hydro{};
    double water_thickness = 0.0;
    double eps_water = 77.0;
    CasimirTruth casimir = CasimirTruth::zero();
    electrostatics::CapacitanceModel capacitance;

    /// d0 at time t for the configured drift.
    double d0(double t, const NoiseConfig& n) const {
        if (n.drift_rate == 0.0) return d0_initial;
        return d0_initial + n.drift_rate * n.drift_time_constant * (1.0 - std::exp(-t / n.drift_time_constant));
    }
};

/// Reference probe, exact capacitance, gold Lifshitz Casimir force.
inline Truth default_truth(bool with_casimir = true) {
    Truth t;
    t.probe = reference_probe();
    t.hydro.R = t.probe.R;
    t.hydro.Gamma0 = t.probe.gamma0();
    t.capacitance = electrostatics::CapacitanceModel::interpolated(t.probe.R);
    if (with_casimir) t.casimir = CasimirTruth::lifshitz(dielectric::bundled_gold(), t.probe.R);
    return t;
}

struct StepRecord {
    double d_pz = 0.0;    // piezo coordinate, m
    double t = 0.0;       // s since campaign start
    double delta_d = 0.0; // shake amplitude, m
    // step 1
    double V_AC = 0.0;
    double S_omegaA = 0.0;
    double S_2omegaA = 0.0;
    double phase_2omegaA = 0.0;
    double V0_reported = 0.0;
    double deflection1 = 0.0;
    double S_4omegaA = std::numeric_limits<double>::quiet_NaN();
    // step 2
    double V_DC = 0.0;
    double S_I = 0.0;
    double S_Q = 0.0;
    double deflection2 = 0.0;
    // step 3
    std::vector<double> parabola_V;
    std::vector<double> parabola_S;
};

struct RunRecord {
    int index = 0;
    std::string kind = "approach";  // approach | retract | calibration
    double V_AC_fixed = 0.0;       // calibration runs
    double deflection_reference = 0.0;
    std::vector<double> null_start, null_end;
    double t_null_start = 0.0, t_null_end = 0.0;
    std::vector<StepRecord> steps;
    bool jump_to_contact = false;
    double jtc_d_pz = 0.0;
};

/// Per-run hidden state, kept out of the records.
struct RunTruth {
    int index = 0;
    double gamma = 0.0;
    double kappa = 0.0;
    double tracking_error = 0.0;
    std::vector<double> d0;        // per step
    std::vector<double> gap;       // step-2 true gap, m
    std::vector<double> gradient;  // true Casimir gradient at the step-2 gap, N/m
};

struct Campaign {
    ProbeParams nominal;  // R, omega1, Q_far are known; k and gamma are nominal guesses
    ProtocolConfig protocol;
    std::uint64_t seed = 0;
    std::vector<RunRecord> runs;
    std::vector<RunTruth> truth;
};

// ---------------------------------------------------------------- RNG

/// mt19937_64 with a portable Box-Muller normal.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    double uniform() { return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53; }
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double th = 2.0 * pi * uniform();
        spare_ = r * std::sin(th);
        has_spare_ = true;
        return r * std::cos(th);
    }
    double normal(double sigma) { return sigma == 0.0 ? 0.0 : sigma * normal(); }
    std::uint64_t next_u64() { return eng_(); }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// --------------------------------------------------------- time domain

namespace timedomain {

/// In-phase and quadrature amplitudes of the m-th harmonic of a periodic
/// function f(phase), phase in [0, 2 pi), from n uniform samples.
inline std::pair<double, double> demodulate(const std::function<double(double)>& f, int m, int n = 4096) {
    double x = 0.0, y = 0.0;
    for (int i = 0; i < n; ++i) {
        const double ph = 2.0 * pi * i / n;
        const double v = f(ph);
        x += v * std::cos(m * ph);
        y += v * std::sin(m * ph);
    }
    return {2.0 * x / n, 2.0 * y / n};
}

/// Gradient seen by a lock-in at the plate frequency: first-harmonic force
/// amplitude divided by the shake amplitude, for plate motion g + dd cos.
inline double measured_gradient_from_force(const std::function<double(double)>& force, double g, double dd,
                                           int n = 4096) {
    return demodulate([&](double ph) { return force(g + dd * std::cos(ph)); }, 1, n).first / dd;
}

}  // namespace timedomain

/// Conservative lock-in gradient: (1/pi) int G(g + dd cos t) sin^2 t dt.
inline double demodulated_gradient(const std::function<double(double)>& G, double g, double dd, int n = 64) {
    if (dd == 0.0) return G(g);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const double t = 2.0 * pi * (i + 0.5) / n;
        const double st = std::sin(t);
        s += G(g + dd * std::cos(t)) * st * st;
    }
    return 2.0 * s / n;
}

// ---------------------------------------------------------- Kelvin loop

/// Output of an ideal Kelvin loop nulling S_wA with an offset in the
/// demodulated signal: V0 + offset k / (gamma C' V_AC).
inline double kelvin_loop(double cprime, double V0_true, double offset, double k, double gamma, double V_AC) {
    if (!(cprime < 0.0)) throw DomainError("Kelvin loop needs C' < 0");
    if (!(V_AC > 0.0)) throw DomainError("Kelvin loop needs V_AC > 0");
    return V0_true + offset * k / (gamma * cprime * V_AC);
}

// ------------------------------------------------------------ simulate

class JumpToContact : public Error {
public:
    explicit JumpToContact(double gap) : Error("jump to contact"), gap_(gap) {}
    double gap() const { return gap_; }

private:
    double gap_;
};

namespace detail {

struct Physics {
    const Truth* truth;
    double k;

    double cprime(double g) const { return truth->capacitance.cprime(g); }
    double cdoubleprime(double g) const { return truth->capacitance.cdoubleprime(g); }

    /// Static attractive force for a given electrostatic prefactor u2 such
    /// that F_es = |C'| u2 / 2, and its gradient.
    double force(double g, double u2) const { return truth->casimir.force(g) + 0.5 * std::abs(cprime(g)) * u2; }
    double gradient(double g, double u2) const { return truth->casimir.gradient(g) + 0.5 * cdoubleprime(g) * u2; }

    /// Self-consistent gap g = g0 - F(g)/k. Throws JumpToContact if no
    /// stable solution exists.
    double gap(double g0, double u2) const {
        double g = g0;
        for (int it = 0; it < 100; ++it) {
            if (!(g > 0.0)) throw JumpToContact(g);
            const double G = gradient(g, u2);
            if (G >= k) throw JumpToContact(g);
            const double r = g - g0 + force(g, u2) / k;
            const double step = r / (1.0 - G / k);
            g -= step;
            if (std::abs(step) < 1e-15) break;
        }
        if (!(g > 0.0) || gradient(g, u2) >= k) throw JumpToContact(g);
        return g;
    }
};

}  // namespace detail

struct SimulationOptions {
    bool casimir_in_signals = true;
};

/// Simulate one run. `t0` is the start time; `gamma` and `kappa` jitter are
/// supplied by the campaign.
inline RunRecord simulate_run(const Truth& truth, const ProtocolConfig& protocol, const NoiseConfig& noise,
                              Direction dir, bool calibration, double t0, double gamma, double tracking_error,
                              Rng& rng, RunTruth* hidden = nullptr, int index = 0) {
    protocol.validate();
    const double k = truth.probe.k;
    const double sigma = noise.detector_noise_density * std::sqrt(protocol.bandwidth);
    detail::Physics phys{&truth, k};
    RunRecord rec;
    rec.index = index;
    rec.kind = calibration ? "calibration" : (dir == Direction::approach ? "approach" : "retract");
    rec.V_AC_fixed = calibration ? protocol.V_AC_cal : 0.0;
    const double defl_offset = rng.normal(2e-3);
    rec.deflection_reference = defl_offset + rng.normal(noise.deflection_noise);
    const double dtheta = noise.reference_phase_error;
    auto lia = [&](double t) { return noise.lia_offset + noise.lia_offset_drift * t / 3600.0; };
    rec.t_null_start = t0;
    for (int i = 0; i < protocol.null_samples; ++i) rec.null_start.push_back(lia(t0) + rng.normal(sigma));

    std::vector<double> sched;
    if (calibration) {
        sched = num::logspace(protocol.cal_d_start, protocol.cal_d_stop, static_cast<std::size_t>(protocol.cal_points));
    } else {
        sched = protocol.approach_separations();
        if (dir == Direction::retract) std::reverse(sched.begin(), sched.end());
    }
    Ratchet ratchet(protocol, dir);
    if (hidden) {
        hidden->index = index;
        hidden->gamma = gamma;
        hidden->kappa = gamma * truth.probe.R / (2.0 * k);
        hidden->tracking_error = tracking_error;
    }
    double t = t0 + 1.0;
    const double gk = gamma / k;
    for (double d_nom : sched) {
        StepRecord s;
        s.t = t;
        const double d0 = truth.d0(t, noise);
        // The piezo targets the nominal separation using a tracked d0 that
        // is off by the run's tracking error.
        s.d_pz = d_nom + d0 + tracking_error;
        const double g0 = d_nom + tracking_error;
        s.delta_d = calibration ? 0.0 : ratchet.next(d_nom);
        try {
            // Step 1: 2w_A amplitude loop and Kelvin loop.
            double g1 = g0, V_AC = 0.0, V0_rep = truth.V0;
            for (int it = 0; it < 30; ++it) {
                const double c1 = phys.cprime(g1), c2 = phys.cdoubleprime(g1);
                V_AC = calibration ? protocol.V_AC_cal
                                   : electrostatics::vac_for_setpoint(c1, c2, k, gamma, protocol.S_set);
                V0_rep = kelvin_loop(c1, truth.V0, noise.ac_coupling_offset, k, gamma, V_AC);
                const double u = -V0_rep + truth.V0;
                const double gn = phys.gap(g0, u * u + 0.5 * V_AC * V_AC);
                if (std::abs(gn - g1) < 1e-14) {
                    g1 = gn;
                    break;
                }
                g1 = gn;
            }
            const double c1 = phys.cprime(g1), c2 = phys.cdoubleprime(g1);
            const double q1 = hydro::quality_factor(g1, k, truth.probe.omega1, truth.hydro);
            s.V_AC = V_AC;
            s.S_2omegaA = electrostatics::s2omega_signal(c1, c2, V_AC, k, gamma) + rng.normal(sigma);
            s.S_omegaA = rng.normal(sigma);
            const double loop_noise = rng.normal(sigma) * k / (gamma * std::abs(c1) * V_AC);
            s.V0_reported = V0_rep + loop_noise;
            s.phase_2omegaA = (2.0 * protocol.omega_A / truth.probe.omega1) / q1 + rng.normal(noise.phase_noise);
            {
                const double u = -V0_rep + truth.V0;
                s.deflection1 = gamma * phys.force(g1, u * u + 0.5 * V_AC * V_AC) / k + defl_offset +
                                rng.normal(noise.deflection_noise);
            }
            if (calibration) {
                s.S_4omegaA = gk * electrostatics::f_4omega_amplitude(c1, c2, V_AC, k) + rng.normal(sigma);
                s.V_DC = -s.V0_reported;
                rec.steps.push_back(s);
                t += protocol.step_duration;
                continue;
            }
            // Step 2: plate modulation with V_AC off and V_DC = -V0_reported.
            s.V_DC = -s.V0_reported;
            const double uF = s.V_DC + truth.V0, uG = s.V_DC + truth.V0_Cpp;
            const double g2 = phys.gap(g0, uF * uF);
            if (g2 - s.delta_d <= 0.0) throw JumpToContact(g2 - s.delta_d);
            auto conservative = [&](double u2g) {
                return demodulated_gradient(
                    [&](double g) { return truth.casimir.gradient(g) + 0.5 * phys.cdoubleprime(g) * u2g; }, g2,
                    s.delta_d);
            };
            const double G_meas = conservative(uG * uG);
            const double interf = truth.probe.R * noise.interference.value(g2);
            const double X = gk * (G_meas + interf) * s.delta_d;
            const double FH = hydro::hydro_force_amplitude(g2, s.delta_d * protocol.omega_pz, truth.hydro);
            const double Y = gk * FH;
            const double lag = hydro::phase_lag(g2, protocol.omega_pz, k, truth.probe.omega1, truth.hydro).radians;
            const double psi = dtheta + lag - protocol.theta_ref;
            s.S_I = X * std::cos(psi) + Y * std::sin(psi) + lia(t) + rng.normal(sigma);
            s.S_Q = Y * std::cos(psi) - X * std::sin(psi) + rng.normal(sigma);
            s.deflection2 = gamma * phys.force(g2, uF * uF) / k + defl_offset + rng.normal(noise.deflection_noise);
            if (hidden) {
                hidden->d0.push_back(d0);
                hidden->gap.push_back(g2);
                hidden->gradient.push_back(truth.casimir.gradient(g2));
            }
            // Step 3: DC parabola, V_AC off.
            if (d_nom >= protocol.parabola_min_d) {
                const double span = std::min(protocol.parabola_span_max,
                                             std::sqrt(2.0 * protocol.parabola_gradient_fraction * k /
                                                       phys.cdoubleprime(g2)));
                for (int i = 0; i < protocol.parabola_points; ++i) {
                    const double V = -s.V0_reported + span * (-1.0 + 2.0 * i / (protocol.parabola_points - 1));
                    // The sweep is evaluated at the step-2 gap: the signal model is first
                    // order in G/k, so the voltage-dependent static bending is dropped.
                    const double ug = V + truth.V0_Cpp;
                    const double g3 = g2;
                    const double Gm = demodulated_gradient(
                        [&](double g) { return truth.casimir.gradient(g) + 0.5 * phys.cdoubleprime(g) * ug * ug; },
                        g3, s.delta_d);
                    const double X3 = gk * (Gm + truth.probe.R * noise.interference.value(g3)) * s.delta_d;
                    const double FH3 = hydro::hydro_force_amplitude(g3, s.delta_d * protocol.omega_pz, truth.hydro);
                    const double lag3 = hydro::phase_lag(g3, protocol.omega_pz, k, truth.probe.omega1, truth.hydro).radians;
                    const double psi3 = dtheta + lag3 - protocol.theta_ref;
                    s.parabola_V.push_back(V);
                    s.parabola_S.push_back(X3 * std::cos(psi3) + gk * FH3 * std::sin(psi3) + lia(t) +
                                           rng.normal(sigma));
                }
            }
        } catch (const JumpToContact&) {
            rec.jump_to_contact = true;
            rec.jtc_d_pz = s.d_pz;
            break;
        }
        rec.steps.push_back(std::move(s));
        t += protocol.step_duration;
    }
    rec.t_null_end = t;
    for (int i = 0; i < protocol.null_samples; ++i) rec.null_end.push_back(lia(t) + rng.normal(sigma));
    return rec;
}

/// Run duration in seconds.
inline double run_duration(const ProtocolConfig& p) {
    return (static_cast<double>(p.approach_separations().size()) + 2.0) * p.step_duration;
}

/// Full campaign: alternating approach/retract runs spread over the
/// campaign duration, then one calibration run at V_AC_cal.
inline Campaign simulate_campaign(const Truth& truth, const ProtocolConfig& protocol, const NoiseConfig& noise,
                                  std::uint64_t seed) {
    protocol.validate();
    truth.probe.validate();
    Campaign c;
    c.nominal = truth.probe;
    c.protocol = protocol;
    c.seed = seed;
    Rng rng(seed);
    const double T = protocol.campaign_hours * 3600.0;
    const double spacing = T / protocol.runs;
    auto gamma_at = [&](double t) {
        return truth.probe.gamma * (1.0 + noise.sensitivity_drift * t / T) * (1.0 + rng.normal(noise.kappa_jitter));
    };
    for (int i = 0; i < protocol.runs; ++i) {
        const double t0 = i * spacing;
        const double g = gamma_at(t0);
        const double e = rng.normal(noise.tracking_error);
        RunTruth hidden;
        auto rec = simulate_run(truth, protocol, noise, i % 2 == 0 ? Direction::approach : Direction::retract, false,
                                t0, g, e, rng, &hidden, i);
        c.runs.push_back(std::move(rec));
        c.truth.push_back(std::move(hidden));
    }
    if (protocol.calibration_run) {
        const double t0 = T;
        const double g = gamma_at(t0);
        RunTruth hidden;
        auto rec = simulate_run(truth, protocol, noise, Direction::approach, true, t0, g,
                                rng.normal(noise.tracking_error), rng, &hidden, protocol.runs);
        c.runs.push_back(std::move(rec));
        c.truth.push_back(std::move(hidden));
    }
    return c;
}

// ------------------------------------------------------- serialization

inline io::json to_json(const ProbeParams& p) {
    return {{"k", p.k}, {"gamma", p.gamma}, {"R", p.R}, {"omega1", p.omega1}, {"Q_far", p.Q_far}, {"L", p.L}, {"W", p.W}};
}

inline ProbeParams probe_from_json(const io::json& j) {
    ProbeParams p;
    p.k = j.value("k", p.k);
    p.gamma = j.value("gamma", p.gamma);
    p.R = j.value("R", p.R);
    p.omega1 = j.value("omega1", p.omega1);
    p.Q_far = j.value("Q_far", p.Q_far);
    p.L = j.value("L", p.L);
    p.W = j.value("W", p.W);
    return p;
}

inline io::json protocol_to_json(const ProtocolConfig& p) {
    io::json r = io::json::array();
    for (const auto& e : p.ratchet) r.push_back({e.threshold, e.delta_d});
    io::json s = io::json::array();
    for (const auto& e : p.schedule) s.push_back({e.start, e.stop, e.step});
    return {{"omega_pz", p.omega_pz}, {"omega_A", p.omega_A}, {"S_set", p.S_set}, {"base_delta_d", p.base_delta_d},
            {"ratchet", r}, {"chi_max", p.chi_max}, {"bandwidth", p.bandwidth}, {"V_AC_cal", p.V_AC_cal},
            {"theta_ref", p.theta_ref}, {"schedule", s}, {"parabola_min_d", p.parabola_min_d},
            {"step_duration", p.step_duration}, {"runs", p.runs}, {"campaign_hours", p.campaign_hours}};
}

inline ProtocolConfig protocol_from_json(const io::json& j) {
    ProtocolConfig p;
    p.omega_pz = j.value("omega_pz", p.omega_pz);
    p.omega_A = j.value("omega_A", p.omega_A);
    p.S_set = j.value("S_set", p.S_set);
    p.base_delta_d = j.value("base_delta_d", p.base_delta_d);
    if (j.contains("ratchet")) {
        p.ratchet.clear();
        for (const auto& e : j["ratchet"]) p.ratchet.push_back({e[0].get<double>(), e[1].get<double>()});
    }
    p.chi_max = j.value("chi_max", p.chi_max);
    p.bandwidth = j.value("bandwidth", p.bandwidth);
    p.V_AC_cal = j.value("V_AC_cal", p.V_AC_cal);
    p.theta_ref = j.value("theta_ref", p.theta_ref);
    if (j.contains("schedule")) {
        p.schedule.clear();
        for (const auto& e : j["schedule"]) p.schedule.push_back({e[0].get<double>(), e[1].get<double>(), e[2].get<double>()});
    }
    p.parabola_min_d = j.value("parabola_min_d", p.parabola_min_d);
    p.step_duration = j.value("step_duration", p.step_duration);
    p.runs = j.value("runs", p.runs);
    p.campaign_hours = j.value("campaign_hours", p.campaign_hours);
    return p;
}

inline io::json step_to_json(int run, const StepRecord& s) {
    io::json j{{"type", "step"},       {"run", run},           {"d_pz", s.d_pz},
               {"t", s.t},             {"delta_d", s.delta_d}, {"V_AC", s.V_AC},
               {"S_omegaA", s.S_omegaA}, {"S_2omegaA", s.S_2omegaA}, {"phase_2omegaA", s.phase_2omegaA},
               {"V0_reported", s.V0_reported}, {"deflection1", s.deflection1}, {"V_DC", s.V_DC},
               {"S_I", s.S_I},         {"S_Q", s.S_Q},         {"deflection2", s.deflection2}};
    if (!std::isnan(s.S_4omegaA)) j["S_4omegaA"] = s.S_4omegaA;
    if (!s.parabola_V.empty()) {
        j["parabola_V"] = s.parabola_V;
        j["parabola_S"] = s.parabola_S;
    }
    return j;
}

inline StepRecord step_from_json(const io::json& j) {
    StepRecord s;
    s.d_pz = j.at("d_pz");
    s.t = j.at("t");
    s.delta_d = j.at("delta_d");
    s.V_AC = j.at("V_AC");
    s.S_omegaA = j.at("S_omegaA");
    s.S_2omegaA = j.at("S_2omegaA");
    s.phase_2omegaA = j.at("phase_2omegaA");
    s.V0_reported = j.at("V0_reported");
    s.deflection1 = j.at("deflection1");
    s.V_DC = j.at("V_DC");
    s.S_I = j.at("S_I");
    s.S_Q = j.at("S_Q");
    s.deflection2 = j.at("deflection2");
    if (j.contains("S_4omegaA")) s.S_4omegaA = j["S_4omegaA"];
    if (j.contains("parabola_V")) {
        s.parabola_V = j["parabola_V"].get<std::vector<double>>();
        s.parabola_S = j["parabola_S"].get<std::vector<double>>();
    }
    return s;
}

/// JSON-lines: manifest, then per run a header line followed by its steps.
inline void write_jsonl(std::ostream& out, const Campaign& c) {
    io::json manifest{{"type", "manifest"},
                      {"seed", c.seed},
                      {"probe_nominal", to_json(c.nominal)},
                      {"protocol", protocol_to_json(c.protocol)},
                      {"runs", c.runs.size()}};
    out << manifest.dump() << '\n';
    for (const auto& r : c.runs) {
        io::json h{{"type", "run"},
                   {"run", r.index},
                   {"kind", r.kind},
                   {"V_AC_fixed", r.V_AC_fixed},
                   {"deflection_reference", r.deflection_reference},
                   {"null_start", r.null_start},
                   {"null_end", r.null_end},
                   {"t_null_start", r.t_null_start},
                   {"t_null_end", r.t_null_end},
                   {"jump_to_contact", r.jump_to_contact},
                   {"jtc_d_pz", r.jtc_d_pz},
                   {"steps", r.steps.size()}};
        out << h.dump() << '\n';
        for (const auto& s : r.steps) out << step_to_json(r.index, s).dump() << '\n';
    }
}

inline Campaign read_jsonl(std::istream& in) {
    Campaign c;
    std::string line;
    bool have_manifest = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (io::trim(line).empty()) continue;
        io::json j;
        try {
            j = io::json::parse(line);
        } catch (const io::json::exception& e) {
            throw ConfigError("campaign line " + std::to_string(lineno) + ": " + e.what());
        }
        const std::string type = j.value("type", "");
        if (type == "manifest") {
            c.seed = j.value("seed", std::uint64_t{0});
            c.nominal = probe_from_json(j.at("probe_nominal"));
            c.protocol = protocol_from_json(j.at("protocol"));
            have_manifest = true;
        } else if (type == "run") {
            RunRecord r;
            r.index = j.at("run");
            r.kind = j.at("kind");
            r.V_AC_fixed = j.value("V_AC_fixed", 0.0);
            r.deflection_reference = j.value("deflection_reference", 0.0);
            r.null_start = j.value("null_start", std::vector<double>{});
            r.null_end = j.value("null_end", std::vector<double>{});
            r.t_null_start = j.value("t_null_start", 0.0);
            r.t_null_end = j.value("t_null_end", 0.0);
            r.jump_to_contact = j.value("jump_to_contact", false);
            r.jtc_d_pz = j.value("jtc_d_pz", 0.0);
            c.runs.push_back(std::move(r));
        } else if (type == "step") {
            if (c.runs.empty() || c.runs.back().index != j.at("run").get<int>())
                throw ConfigError("campaign line " + std::to_string(lineno) + ": step outside its run");
            c.runs.back().steps.push_back(step_from_json(j));
        } else {
            throw ConfigError("campaign line " + std::to_string(lineno) + ": unknown record type '" + type + "'");
        }
    }
    if (!have_manifest) throw ConfigError("campaign stream lacks a manifest");
    return c;
}

/// Hidden truth as JSON (kept in a separate sidecar file).
inline io::json truth_to_json(const Campaign& c) {
    io::json runs = io::json::array();
    for (const auto& t : c.truth)
        runs.push_back({{"run", t.index}, {"gamma", t.gamma}, {"kappa", t.kappa}, {"tracking_error", t.tracking_error},
                        {"d0", t.d0}, {"gap", t.gap}, {"gradient", t.gradient}});
    return {{"seed", c.seed}, {"runs", runs}};
}

}  // namespace fomlab::sim
