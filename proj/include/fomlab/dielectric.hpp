#pragma once

// Permittivity models evaluated on the imaginary frequency axis. Frequencies
// are photon energies in eV throughout this header.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fomlab/error.hpp"
#include "fomlab/io.hpp"
#include "fomlab/numerics.hpp"

namespace fomlab::dielectric {

struct OpticalDataset {
    std::vector<double> energies;  // eV, strictly increasing
    std::vector<double> eps_imag;  // epsilon'' >= 0
    std::string provenance;

    void validate() const {
        if (energies.size() < 2 || energies.size() != eps_imag.size())
            throw ConfigError("optical dataset '" + provenance + "' needs >= 2 matching points");
        for (std::size_t i = 0; i < energies.size(); ++i) {
            if (!(energies[i] > 0.0)) throw ConfigError("optical dataset '" + provenance + "': non-positive energy");
            if (i > 0 && !(energies[i] > energies[i - 1]))
                throw ConfigError("optical dataset '" + provenance + "': energies not strictly increasing");
            if (!(eps_imag[i] >= 0.0)) throw ConfigError("optical dataset '" + provenance + "': negative eps''");
        }
    }

    double e_min() const { return energies.front(); }
    double e_max() const { return energies.back(); }

    /// Read `energy_eV, eps2` or `energy_eV, n, k` columns.
    static OpticalDataset from_csv(const std::filesystem::path& path, std::string label = {}) {
        const auto t = io::read_csv(path);
        OpticalDataset ds;
        ds.provenance = label.empty() ? path.filename().string() : std::move(label);
        ds.energies = t.column_values("energy_eV");
        if (t.has_column("eps2")) {
            ds.eps_imag = t.column_values("eps2");
        } else if (t.has_column("n") && t.has_column("k")) {
            const auto n = t.column_values("n");
            const auto k = t.column_values("k");
            ds.eps_imag.resize(n.size());
            for (std::size_t i = 0; i < n.size(); ++i) ds.eps_imag[i] = 2.0 * n[i] * k[i];
        } else {
            throw ConfigError(path.string() + ": expected columns eps2 or n,k");
        }
        ds.validate();
        return ds;
    }
};

struct DrudeParams {
    double omega_p = 0.0;    // eV
    double omega_tau = 0.0;  // eV

    void validate() const {
        if (!(omega_p > 0.0) || !(omega_tau > 0.0)) throw ConfigError("Drude parameters must be positive");
    }
};

/// The two reference parameter sets for gold.
inline constexpr DrudeParams gold_drude_a{8.84, 0.042};
inline constexpr DrudeParams gold_drude_b{7.50, 0.061};

inline double drude_eps_imaginary_axis(const DrudeParams& p, double xi) {
    if (!(xi > 0.0)) throw DomainError("imaginary frequency must be positive");
    return 1.0 + p.omega_p * p.omega_p / (xi * (xi + p.omega_tau));
}

/// Lorentz oscillator term  strength * w^2 / (w^2 + g xi + xi^2).
struct Oscillator {
    double strength = 0.0;
    double omega = 0.0;  // eV
    double damping = 0.0;  // eV
};

/// Debye relaxation term  strength / (1 + xi / omega).
struct DebyeTerm {
    double strength = 0.0;
    double omega = 0.0;  // eV
};

namespace detail {

/// Integral over [0, wc] of 1 / ((w^2 + a^2)(w^2 + b^2)) dw.
inline double lorentzian_product_integral(double a, double b, double wc) {
    auto f = [wc](double x) { return std::atan(wc / x) / x; };
    if (std::abs(b - a) > 1e-6 * std::max(a, b)) return (f(a) - f(b)) / (b * b - a * a);
    const double m = 0.5 * (a + b);
    const double df = -std::atan(wc / m) / (m * m) - wc / (m * (m * m + wc * wc));
    return -df / (2.0 * m);
}

/// Integral over [wl, inf) of C / (w^2 (w^2 + xi^2)) dw.
inline double cubic_tail_integral(double C, double wl, double xi) {
    const double t = xi / wl;
    double g;  // (1 - atan(t)/t) / t^2
    if (t < 1e-3) {
        const double t2 = t * t;
        g = 1.0 / 3.0 - t2 / 5.0 + t2 * t2 / 7.0;
    } else {
        g = (1.0 - std::atan(t) / t) / (t * t);
    }
    return C * g / (wl * wl * wl);
}

}  // namespace detail

enum class ModelKind { vacuum, constant, drude, plasma, tabulated, oscillator, perfect_conductor };

/// Low-frequency extension used below the tabulated range.
enum class LowEnergyExtension { drude, plasma };

/// Permittivity model. Immutable after construction.
class DielectricModel {
public:
    static DielectricModel vacuum() {
        DielectricModel m;
        m.kind_ = ModelKind::vacuum;
        m.label_ = "vacuum";
        return m;
    }

    /// Frequency-independent permittivity (static approximation).
    static DielectricModel constant(double eps, std::string label = "constant") {
        if (!(eps >= 1.0)) throw ConfigError("constant permittivity must be >= 1");
        DielectricModel m;
        m.kind_ = ModelKind::constant;
        m.static_eps_ = eps;
        m.label_ = std::move(label);
        return m;
    }

    static DielectricModel drude(const DrudeParams& p, std::string label = "drude") {
        p.validate();
        DielectricModel m;
        m.kind_ = ModelKind::drude;
        m.drude_ = p;
        m.label_ = std::move(label);
        return m;
    }

    /// Dissipationless plasma model 1 + wp^2 / xi^2.
    static DielectricModel plasma(double omega_p, std::string label = "plasma") {
        if (!(omega_p > 0.0)) throw ConfigError("plasma frequency must be positive");
        DielectricModel m;
        m.kind_ = ModelKind::plasma;
        m.drude_ = {omega_p, 0.0};
        m.label_ = std::move(label);
        return m;
    }

    static DielectricModel perfect_conductor() {
        DielectricModel m;
        m.kind_ = ModelKind::perfect_conductor;
        m.label_ = "perfect conductor";
        return m;
    }

    /// Sum of Debye and Lorentz terms; static_eps (if given) replaces the
    /// zero-frequency limit.
    static DielectricModel oscillators(std::vector<Oscillator> osc, std::optional<DebyeTerm> debye,
                                       std::optional<double> static_eps, std::string label = "oscillator") {
        for (const auto& o : osc)
            if (!(o.strength >= 0.0) || !(o.omega > 0.0) || !(o.damping >= 0.0))
                throw ConfigError("oscillator parameters must be non-negative with positive frequency");
        if (debye && (!(debye->strength >= 0.0) || !(debye->omega > 0.0)))
            throw ConfigError("Debye parameters must be non-negative with positive frequency");
        DielectricModel m;
        m.kind_ = ModelKind::oscillator;
        m.oscillators_ = std::move(osc);
        m.debye_ = debye;
        m.static_eps_ = static_eps;
        m.label_ = std::move(label);
        return m;
    }

    /// Tabulated eps'' data (merged in order) with a low-energy extension
    /// below `crossover` and an optional w^-3 tail above the last point.
    /// crossover <= 0 selects the lowest tabulated energy.
    static DielectricModel tabulated(std::vector<OpticalDataset> datasets, const DrudeParams& drude,
                                     double crossover = 0.0, bool high_energy_tail = true,
                                     double points_per_decade = 400.0, std::string label = "tabulated") {
        if (datasets.empty()) throw ConfigError("tabulated dielectric model needs at least one dataset");
        drude.validate();
        if (!(points_per_decade > 0.0)) throw ConfigError("quadrature resolution must be positive");
        for (const auto& d : datasets) d.validate();
        for (std::size_t i = 1; i < datasets.size(); ++i)
            if (datasets[i].e_min() < datasets[i - 1].e_max())
                throw ConfigError("optical dataset energy ranges overlap or are out of order");
        DielectricModel m;
        m.kind_ = ModelKind::tabulated;
        m.datasets_ = std::move(datasets);
        m.drude_ = drude;
        m.high_energy_tail_ = high_energy_tail;
        m.points_per_decade_ = points_per_decade;
        m.label_ = std::move(label);
        m.crossover_ = crossover > 0.0 ? crossover : m.datasets_.front().e_min();
        if (m.crossover_ < m.datasets_.front().e_min())
            throw ConfigError("crossover energy below the tabulated range");
        m.build_table();
        return m;
    }

    ModelKind kind() const { return kind_; }
    const std::string& label() const { return label_; }
    const DrudeParams& drude_params() const { return drude_; }
    LowEnergyExtension extension() const { return extension_; }
    double crossover() const { return crossover_; }
    double points_per_decade() const { return points_per_decade_; }
    const std::vector<OpticalDataset>& datasets() const { return datasets_; }
    const std::vector<double>& merged_energies() const { return table_e_; }
    const std::vector<double>& merged_eps_imag() const { return table_eps_; }
    bool high_energy_tail() const { return high_energy_tail_; }

    /// Metals have a divergent static permittivity.
    bool is_metal() const {
        return kind_ == ModelKind::drude || kind_ == ModelKind::plasma || kind_ == ModelKind::tabulated ||
               kind_ == ModelKind::perfect_conductor;
    }

    /// Zero-frequency permittivity; infinity for metals.
    double static_permittivity() const {
        switch (kind_) {
            case ModelKind::vacuum: return 1.0;
            case ModelKind::constant: return *static_eps_;
            case ModelKind::oscillator: {
                if (static_eps_) return *static_eps_;
                double s = 1.0;
                for (const auto& o : oscillators_) s += o.strength;
                if (debye_) s += debye_->strength;
                return s;
            }
            default: return std::numeric_limits<double>::infinity();
        }
    }

    /// Copy with a different Drude parameter set (tabulated/drude models).
    DielectricModel with_drude(const DrudeParams& p, std::string label = {}) const {
        p.validate();
        DielectricModel m = *this;
        m.drude_ = p;
        if (!label.empty()) m.label_ = std::move(label);
        return m;
    }

    /// Copy using the plasma extension (no relaxation) below the crossover.
    DielectricModel with_plasma_extension(std::string label = {}) const {
        DielectricModel m = *this;
        if (m.kind_ == ModelKind::drude) m.kind_ = ModelKind::plasma;
        m.extension_ = LowEnergyExtension::plasma;
        if (!label.empty()) m.label_ = std::move(label);
        return m;
    }

    /// Copy with a different KK quadrature resolution.
    DielectricModel with_resolution(double points_per_decade) const {
        DielectricModel m = *this;
        m.points_per_decade_ = points_per_decade;
        if (m.kind_ == ModelKind::tabulated) m.build_table();
        return m;
    }

    /// eps(i xi) for xi > 0 (eV).
    double eps(double xi) const {
        if (!(xi > 0.0)) throw DomainError("imaginary frequency must be positive");
        switch (kind_) {
            case ModelKind::vacuum: return 1.0;
            case ModelKind::constant: return *static_eps_;
            case ModelKind::drude: return drude_eps_imaginary_axis(drude_, xi);
            case ModelKind::plasma: return 1.0 + drude_.omega_p * drude_.omega_p / (xi * xi);
            case ModelKind::perfect_conductor: return std::numeric_limits<double>::infinity();
            case ModelKind::oscillator: {
                double s = 1.0;
                for (const auto& o : oscillators_)
                    s += o.strength * o.omega * o.omega / (o.omega * o.omega + o.damping * xi + xi * xi);
                if (debye_) s += debye_->strength / (1.0 + xi / debye_->omega);
                return s;
            }
            case ModelKind::tabulated: return kk_eps(xi);
        }
        return 1.0;
    }

    /// Contribution of the analytic low-energy extension to eps(i xi) - 1.
    double extension_contribution(double xi) const {
        const double wp2 = drude_.omega_p * drude_.omega_p;
        if (extension_ == LowEnergyExtension::plasma) return wp2 / (xi * xi);
        const double a = drude_.omega_tau;
        return (2.0 / std::numbers::pi) * wp2 * a * detail::lorentzian_product_integral(a, xi, crossover_);
    }

    /// Contribution of the w^-3 tail above the last tabulated point.
    double tail_contribution(double xi) const {
        if (!high_energy_tail_ || table_e_.empty()) return 0.0;
        const double wl = table_e_.back();
        const double C = table_eps_.back() * wl * wl * wl;
        return (2.0 / std::numbers::pi) * detail::cubic_tail_integral(C, wl, xi);
    }

private:
    void build_table() {
        std::vector<double> e, v;
        for (const auto& ds : datasets_) {
            for (std::size_t i = 0; i < ds.energies.size(); ++i) {
                if (!e.empty() && ds.energies[i] <= e.back()) continue;
                e.push_back(ds.energies[i]);
                v.push_back(ds.eps_imag[i]);
            }
        }
        // Clip at the crossover, interpolating the value there.
        if (crossover_ > e.front()) {
            const double v0 = num::interp_linear(e, v, crossover_);
            std::vector<double> e2{crossover_}, v2{v0};
            for (std::size_t i = 0; i < e.size(); ++i)
                if (e[i] > crossover_) {
                    e2.push_back(e[i]);
                    v2.push_back(v[i]);
                }
            e.swap(e2);
            v.swap(v2);
        }
        table_e_ = e;
        table_eps_ = v;
        // Quadrature grid: each table interval split into log-spaced pieces.
        grid_w_.clear();
        grid_f_.clear();
        for (std::size_t i = 0; i + 1 < e.size(); ++i) {
            const int m = std::max(1, static_cast<int>(std::ceil(points_per_decade_ * std::log10(e[i + 1] / e[i]))));
            const double r = std::pow(e[i + 1] / e[i], 1.0 / m);
            double w = e[i];
            for (int j = 0; j < m; ++j, w *= r) {
                const double t = (w - e[i]) / (e[i + 1] - e[i]);
                grid_w_.push_back(w);
                grid_f_.push_back(w * (v[i] + t * (v[i + 1] - v[i])));
            }
        }
        grid_w_.push_back(e.back());
        grid_f_.push_back(e.back() * v.back());
    }

    double kk_eps(double xi) const {
        const double xi2 = xi * xi;
        double s = 0.0;
        for (std::size_t i = 1; i < grid_w_.size(); ++i) {
            const double a = grid_f_[i - 1] / (grid_w_[i - 1] * grid_w_[i - 1] + xi2);
            const double b = grid_f_[i] / (grid_w_[i] * grid_w_[i] + xi2);
            s += 0.5 * (grid_w_[i] - grid_w_[i - 1]) * (a + b);
        }
        return 1.0 + (2.0 / std::numbers::pi) * s + extension_contribution(xi) + tail_contribution(xi);
    }

    ModelKind kind_ = ModelKind::vacuum;
    std::string label_;
    DrudeParams drude_{};
    LowEnergyExtension extension_ = LowEnergyExtension::drude;
    std::optional<double> static_eps_;
    std::vector<Oscillator> oscillators_;
    std::optional<DebyeTerm> debye_;
    std::vector<OpticalDataset> datasets_;
    double crossover_ = 0.0;
    bool high_energy_tail_ = true;
    double points_per_decade_ = 400.0;
    std::vector<double> table_e_, table_eps_, grid_w_, grid_f_;
};

/// Build a model from a JSON description. Relative file names resolve
/// against `base_dir` and then the bundled data directory.
///
///   {"kind": "tabulated", "datasets": [{"file": ..., "label": ...}],
///    "drude": {"omega_p": 8.84, "omega_tau": 0.042}, "crossover_eV": 0.73,
///    "high_energy_tail": true, "points_per_decade": 400}
///   {"kind": "drude" | "plasma", "drude": {...}}
///   {"kind": "constant", "static_eps": 77}
///   {"kind": "oscillator", "debye": {"strength", "omega_eV"},
///    "oscillators": [{"strength", "omega_eV", "damping_eV"}], "static_eps": 77}
///   {"kind": "vacuum"} | {"kind": "perfect_conductor"}
inline DielectricModel model_from_json(const io::json& j, const std::filesystem::path& base_dir = {}) {
    const std::string kind = j.value("kind", "");
    const std::string label = j.value("label", kind);
    auto drude_of = [&]() {
        if (!j.contains("drude")) throw ConfigError("dielectric model '" + label + "' lacks drude parameters");
        const auto& d = j.at("drude");
        return DrudeParams{d.at("omega_p").get<double>(), d.value("omega_tau", 0.0)};
    };
    try {
        if (kind == "vacuum") return DielectricModel::vacuum();
        if (kind == "perfect_conductor") return DielectricModel::perfect_conductor();
        if (kind == "constant") return DielectricModel::constant(j.at("static_eps").get<double>(), label);
        if (kind == "drude") return DielectricModel::drude(drude_of(), label);
        if (kind == "plasma") return DielectricModel::plasma(drude_of().omega_p, label);
        if (kind == "oscillator") {
            std::vector<Oscillator> osc;
            for (const auto& o : j.value("oscillators", io::json::array()))
                osc.push_back({o.at("strength").get<double>(), o.at("omega_eV").get<double>(),
                               o.value("damping_eV", 0.0)});
            std::optional<DebyeTerm> debye;
            if (j.contains("debye"))
                debye = DebyeTerm{j["debye"].at("strength").get<double>(), j["debye"].at("omega_eV").get<double>()};
            std::optional<double> st;
            if (j.contains("static_eps")) st = j["static_eps"].get<double>();
            return DielectricModel::oscillators(std::move(osc), debye, st, label);
        }
        if (kind == "tabulated") {
            std::vector<OpticalDataset> sets;
            for (const auto& d : j.at("datasets")) {
                const auto path = io::resolve_data_path(d.at("file").get<std::string>(), base_dir);
                sets.push_back(OpticalDataset::from_csv(path, d.value("label", std::string{})));
            }
            auto m = DielectricModel::tabulated(std::move(sets), drude_of(), j.value("crossover_eV", 0.0),
                                                j.value("high_energy_tail", true), j.value("points_per_decade", 400.0),
                                                label);
            if (j.value("extension", std::string("drude")) == "plasma") m = m.with_plasma_extension();
            return m;
        }
    } catch (const io::json::exception& e) {
        throw ConfigError("dielectric model '" + label + "': " + e.what());
    }
    throw ConfigError("unknown dielectric model kind '" + kind + "'");
}

inline DielectricModel load_model(const std::filesystem::path& path) {
    const auto resolved = io::resolve_data_path(path);
    return model_from_json(io::read_json(resolved), resolved.parent_path());
}

/// Bundled gold model with the given Drude set.
inline DielectricModel bundled_gold(const DrudeParams& p = gold_drude_a) {
    return load_model("gold.json").with_drude(p, "gold");
}

inline DielectricModel bundled_water() { return load_model("water.json"); }

}  // namespace fomlab::dielectric
