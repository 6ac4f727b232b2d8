#pragma once

// Campaign configuration: strict JSON (unknown keys are errors that list the
// valid ones) mapped onto probe, protocol, noise, physics and analysis
// settings.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "fomlab/analysis.hpp"
#include "fomlab/dielectric.hpp"
#include "fomlab/electrostatics.hpp"
#include "fomlab/error.hpp"
#include "fomlab/io.hpp"
#include "fomlab/simulator.hpp"

namespace fomlab::config {

using io::json;

/// Throws ConfigError naming the unknown key and listing the valid ones.
inline void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> valid) {
    if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* v : valid) ok = ok || it.key() == v;
        if (!ok) {
            std::string list;
            for (const char* v : valid) list += std::string(list.empty() ? "" : ", ") + v;
            throw ConfigError("unknown key '" + it.key() + "' in " + section + "; valid keys: " + list);
        }
    }
}

template <class T>
void read(const json& j, const char* key, T& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

struct PhysicsConfig {
    std::string casimir = "gold";  // gold | ideal | none | path to a dielectric JSON
    std::string drude_set = "a";   // a | b
    double V0 = 0.025;
    double V0_Cpp = 0.027;
    double d0_initial = 2e-6;
    double water_thickness = 0.0;
    double eps_water = 77.0;
    double slip_length = hydro::slip_length_low;
    double eta = hydro::eta_air;
    double temperature = constants::T_default;
    std::string topography;  // map JSON; empty selects the bundled synthetic map
    std::string patch_file = "patch_gradients.csv";
};

struct CampaignConfig {
    std::uint64_t seed = 1;
    sim::ProbeParams probe;
    sim::ProtocolConfig protocol;
    sim::NoiseConfig noise;
    PhysicsConfig physics;
    analysis::AnalysisConfig analysis;
    std::string out;
};

inline sim::NoiseConfig noise_preset(const std::string& name) {
    if (name == "default") return {};
    if (name == "none") return sim::NoiseConfig::none();
    throw ConfigError("unknown noise preset '" + name + "'; valid: default, none");
}

inline sim::InterferenceConfig interference_preset(const std::string& name) {
    if (name == "sld") return sim::sld_interference();
    if (name == "laser") return sim::laser_interference();
    if (name == "none") return {0.0, 0.0};
    throw ConfigError("unknown interference preset '" + name + "'; valid: sld, laser, none");
}

inline dielectric::DrudeParams drude_set(const std::string& s) {
    if (s == "a") return dielectric::gold_drude_a;
    if (s == "b") return dielectric::gold_drude_b;
    throw ConfigError("unknown Drude set '" + s + "'; valid: a, b");
}

inline CampaignConfig parse(const json& j, const std::filesystem::path& base_dir = {}) {
    CampaignConfig c;
    check_keys(j, "config", {"seed", "out", "probe", "protocol", "noise", "physics", "analysis"});
    read(j, "seed", c.seed);
    read(j, "out", c.out);
    if (j.contains("probe")) {
        const auto& p = j["probe"];
        check_keys(p, "probe", {"preset", "k", "gamma", "R", "omega1", "Q_far", "L", "W"});
        std::string preset = "reference";
        read(p, "preset", preset);
        if (preset != "reference") throw ConfigError("unknown probe preset '" + preset + "'; valid: reference");
        read(p, "k", c.probe.k);
        read(p, "gamma", c.probe.gamma);
        read(p, "R", c.probe.R);
        read(p, "omega1", c.probe.omega1);
        read(p, "Q_far", c.probe.Q_far);
        read(p, "L", c.probe.L);
        read(p, "W", c.probe.W);
    }
    if (j.contains("protocol")) {
        const auto& p = j["protocol"];
        check_keys(p, "protocol",
                   {"omega_pz", "omega_A", "S_set", "chi_max", "bandwidth", "V_AC_cal", "theta_ref", "runs",
                    "campaign_hours", "step_duration", "parabola_min_d", "calibration_run", "base_delta_d"});
        read(p, "omega_pz", c.protocol.omega_pz);
        read(p, "omega_A", c.protocol.omega_A);
        read(p, "S_set", c.protocol.S_set);
        read(p, "chi_max", c.protocol.chi_max);
        read(p, "bandwidth", c.protocol.bandwidth);
        read(p, "V_AC_cal", c.protocol.V_AC_cal);
        read(p, "theta_ref", c.protocol.theta_ref);
        read(p, "runs", c.protocol.runs);
        read(p, "campaign_hours", c.protocol.campaign_hours);
        read(p, "step_duration", c.protocol.step_duration);
        read(p, "parabola_min_d", c.protocol.parabola_min_d);
        read(p, "calibration_run", c.protocol.calibration_run);
        read(p, "base_delta_d", c.protocol.base_delta_d);
    }
    if (j.contains("noise")) {
        const auto& n = j["noise"];
        check_keys(n, "noise",
                   {"preset", "interference", "detector_noise_density", "phase_noise", "lia_offset",
                    "lia_offset_drift", "ac_coupling_offset", "drift_rate", "drift_time_constant",
                    "sensitivity_drift", "kappa_jitter", "tracking_error", "reference_phase_error",
                    "deflection_noise"});
        std::string preset = "default";
        read(n, "preset", preset);
        c.noise = noise_preset(preset);
        if (n.contains("interference")) {
            std::string ip;
            read(n, "interference", ip);
            c.noise.interference = interference_preset(ip);
        }
        read(n, "detector_noise_density", c.noise.detector_noise_density);
        read(n, "phase_noise", c.noise.phase_noise);
        read(n, "lia_offset", c.noise.lia_offset);
        read(n, "lia_offset_drift", c.noise.lia_offset_drift);
        read(n, "ac_coupling_offset", c.noise.ac_coupling_offset);
        read(n, "drift_rate", c.noise.drift_rate);
        read(n, "drift_time_constant", c.noise.drift_time_constant);
        read(n, "sensitivity_drift", c.noise.sensitivity_drift);
        read(n, "kappa_jitter", c.noise.kappa_jitter);
        read(n, "tracking_error", c.noise.tracking_error);
        read(n, "reference_phase_error", c.noise.reference_phase_error);
        read(n, "deflection_noise", c.noise.deflection_noise);
    }
    if (j.contains("physics")) {
        const auto& p = j["physics"];
        check_keys(p, "physics",
                   {"casimir", "drude_set", "V0", "V0_Cpp", "d0_initial", "water_thickness",
                    "eps_water", "slip_length", "eta", "temperature", "topography", "patch_file"});
        read(p, "casimir", c.physics.casimir);
        read(p, "drude_set", c.physics.drude_set);
        read(p, "V0", c.physics.V0);
        read(p, "V0_Cpp", c.physics.V0_Cpp);
        read(p, "d0_initial", c.physics.d0_initial);
        read(p, "water_thickness", c.physics.water_thickness);
        read(p, "eps_water", c.physics.eps_water);
        read(p, "slip_length", c.physics.slip_length);
        read(p, "eta", c.physics.eta);
        read(p, "temperature", c.physics.temperature);
        read(p, "topography", c.physics.topography);
        read(p, "patch_file", c.physics.patch_file);
        for (auto* f : {&c.physics.topography, &c.physics.patch_file}) {
            if (f->empty()) continue;
            const auto path = io::resolve_data_path(*f, base_dir);
            if (!std::filesystem::exists(path)) throw ConfigError("physics file not found: " + *f);
            *f = path.string();
        }
        if (c.physics.casimir != "gold" && c.physics.casimir != "ideal" && c.physics.casimir != "none") {
            const auto path = io::resolve_data_path(c.physics.casimir, base_dir);
            if (!std::filesystem::exists(path))
                throw ConfigError("physics.casimir file not found: " + c.physics.casimir);
            c.physics.casimir = path.string();
        }
        drude_set(c.physics.drude_set);
    }
    if (j.contains("analysis")) {
        const auto& a = j["analysis"];
        check_keys(a, "analysis",
                   {"calibration_fraction", "separation_sigma", "separation_sigma_cprime", "use_cpp_separation",
                    "dtheta_ref", "leakage_rule", "correct_ratchet_bias", "bin_width", "budget_d_min",
                    "budget_d_max", "interference_d_min", "second_order"});
        read(a, "calibration_fraction", c.analysis.calibration_fraction);
        read(a, "separation_sigma", c.analysis.separation_sigma);
        read(a, "separation_sigma_cprime", c.analysis.separation_sigma_cprime);
        read(a, "use_cpp_separation", c.analysis.use_cpp_separation);
        read(a, "dtheta_ref", c.analysis.dtheta_ref);
        if (a.contains("leakage_rule")) {
            std::string r;
            read(a, "leakage_rule", r);
            if (r == "lag_model")
                c.analysis.leakage_rule = analysis::LeakageRule::lag_model;
            else if (r == "half_lag")
                c.analysis.leakage_rule = analysis::LeakageRule::half_lag;
            else
                throw ConfigError("analysis.leakage_rule must be lag_model or half_lag");
        }
        read(a, "correct_ratchet_bias", c.analysis.correct_ratchet_bias);
        read(a, "bin_width", c.analysis.bin_width);
        read(a, "budget_d_min", c.analysis.budget_d_min);
        read(a, "budget_d_max", c.analysis.budget_d_max);
        read(a, "interference_d_min", c.analysis.interference_d_min);
        read(a, "second_order", c.analysis.second_order);
    }
    c.probe.validate();
    c.protocol.validate();
    return c;
}

/// Config directory from FOMLAB_CONFIG_DIR, if set.
inline std::filesystem::path config_dir() {
    if (const char* e = std::getenv("FOMLAB_CONFIG_DIR"); e && *e) return e;
    return {};
}

/// Load a config file; relative paths not found from the working directory
/// are looked up in FOMLAB_CONFIG_DIR.
inline CampaignConfig load(const std::filesystem::path& path) {
    std::filesystem::path p = path;
    if (!std::filesystem::exists(p) && p.is_relative() && !config_dir().empty()) p = config_dir() / path;
    if (!std::filesystem::exists(p)) throw ConfigError("config file not found: " + path.string());
    return parse(io::read_json(p), p.parent_path());
}

inline std::shared_ptr<const dielectric::DielectricModel> casimir_material(const PhysicsConfig& p) {
    using dielectric::DielectricModel;
    if (p.casimir == "gold") return std::make_shared<const DielectricModel>(dielectric::bundled_gold(drude_set(p.drude_set)));
    return std::make_shared<const DielectricModel>(dielectric::load_model(p.casimir));
}

/// Ground truth for a campaign config.
inline sim::Truth make_truth(const CampaignConfig& c) {
    sim::Truth t;
    t.probe = c.probe;
    t.V0 = c.physics.V0;
    t.V0_Cpp = c.physics.V0_Cpp;
    t.d0_initial = c.physics.d0_initial;
    t.hydro = {c.physics.eta, c.physics.slip_length, c.probe.gamma0(), c.probe.R};
    t.water_thickness = c.physics.water_thickness;
    t.eps_water = c.physics.eps_water;
    t.capacitance = electrostatics::CapacitanceModel::interpolated(c.probe.R);
    if (c.physics.water_thickness > 0.0)
        t.capacitance = t.capacitance.with_water(c.physics.water_thickness, c.physics.eps_water);
    if (c.physics.casimir == "none") {
        t.casimir = sim::CasimirTruth::zero();
    } else if (c.physics.casimir == "ideal") {
        t.casimir = sim::CasimirTruth::ideal(c.probe.R);
    } else {
        t.casimir = sim::CasimirTruth::lifshitz(*casimir_material(c.physics), c.probe.R, c.physics.temperature);
    }
    return t;
}

}  // namespace fomlab::config
