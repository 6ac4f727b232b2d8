// fomlab: command-line front end for the force-modulation toolkit.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "fomlab/fomlab.hpp"

namespace fs = std::filesystem;
using namespace fomlab;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

config::CampaignConfig load_config(const Globals& g) {
    config::CampaignConfig c;
    if (!g.config.empty()) {
        c = config::load(g.config);
    } else if (!config::config_dir().empty() && fs::exists(config::config_dir() / "fomlab.json")) {
        c = config::load(config::config_dir() / "fomlab.json");
    }
    if (g.seed) c.seed = *g.seed;
    if (!g.out.empty()) c.out = g.out;
    return c;
}

/// Output sink: a file under the output directory, or stdout.
class Sink {
public:
    Sink(const std::string& dir, const std::string& name) {
        if (dir.empty()) return;
        fs::create_directories(dir);
        path_ = fs::path(dir) / name;
        file_.open(path_);
        if (!file_) throw ConfigError("cannot write " + path_.string());
    }
    std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }
    bool to_file() const { return file_.is_open(); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
    std::ofstream file_;
};

void write_csv_to(const std::string& dir, const std::string& name, const std::vector<std::string>& header,
                  const std::vector<std::vector<double>>& rows) {
    Sink s(dir, name);
    io::write_csv(s.stream(), header, rows);
}

std::vector<double> range_points(const std::vector<double>& range, std::size_t n, bool log) {
    if (range.size() != 2 || !(range[1] > range[0])) throw ConfigError("range needs two increasing values");
    if (n < 2) throw ConfigError("need at least two points");
    return log ? num::logspace(range[0], range[1], n) : num::linspace(range[0], range[1], n);
}

sim::Campaign read_campaign(const std::string& input) {
    if (input.empty() || input == "-") return sim::read_jsonl(std::cin);
    std::ifstream in(input);
    if (!in) throw ConfigError("cannot open " + input);
    return sim::read_jsonl(in);
}

// ------------------------------------------------------------ limits

struct LimitsOpts {
    std::string probe = "reference";
    double bandwidth = 1.0, chi = 0.15, delta_d = 48e-9;
    std::optional<double> k, R, T;
    bool json = false;
};

void run_limits(const Globals& g, const LimitsOpts& o) {
    auto c = load_config(g);
    if (o.probe != "reference") throw ConfigError("unknown probe '" + o.probe + "'; valid: reference");
    if (o.k) c.probe.k = *o.k;
    if (o.R) c.probe.R = *o.R;
    const double T = o.T.value_or(c.physics.temperature);
    const auto r = analysis::limits(c.probe, o.bandwidth, o.chi, o.delta_d, T);
    auto k1 = c.probe;
    k1.k = 1.0;
    const auto r1 = analysis::limits(k1, o.bandwidth, o.chi, o.delta_d, T);
    io::json j{{"k_N_per_m", c.probe.k},
               {"R_m", c.probe.R},
               {"bandwidth_Hz", o.bandwidth},
               {"chi", o.chi},
               {"d_min_m", r.d_min},
               {"d_min_k1_m", r1.d_min},
               {"F_min_N", r.F_min},
               {"Fprime_min_N_per_m", r.Fprime_min},
               {"delta_d_m", r.delta_d},
               {"d_max_m", r.d_max},
               {"d_max_bound_m", r.d_max_bound}};
    Sink s(c.out, o.json ? "limits.json" : "limits.txt");
    if (o.json) {
        s.stream() << j.dump(2) << '\n';
        return;
    }
    auto& out = s.stream();
    fmt::print(out, "d_min            {:.4g} nm  (k = {:.3g} N/m)\n", r.d_min * 1e9, c.probe.k);
    fmt::print(out, "d_min(k = 1 N/m) {:.4g} nm\n", r1.d_min * 1e9);
    fmt::print(out, "F_min            {:.4g} fN  (B = {:.3g} Hz)\n", r.F_min * 1e15, o.bandwidth);
    fmt::print(out, "F'_min           {:.4g} uN/m at dd = {:.3g} nm\n", r.Fprime_min * 1e6, r.delta_d * 1e9);
    fmt::print(out, "d_max            {:.4g} um  (fixed dd)\n", r.d_max * 1e6);
    fmt::print(out, "d_max bound      {:.4g} um  (dd = chi d, chi = {:.3g})\n", r.d_max_bound * 1e6, o.chi);
}

// ------------------------------------------------------- capacitance

struct CapOpts {
    std::vector<double> ratio_range{1e-3, 10.0};
    std::size_t points = 200;
    int nodes = 43;
    std::optional<double> R;
};

std::vector<std::vector<double>> capacitance_rows(double R, const std::vector<double>& ratios, int nodes) {
    using namespace electrostatics;
    const CapInterpolator ci(R, default_ratio_min, default_ratio_max, nodes);
    std::vector<std::vector<double>> rows;
    for (double x : ratios) {
        const SpherePlateGeometry geo{x * R, R};
        const double c1 = cprime_exact(geo), c2 = cdoubleprime_exact(geo);
        const double i1 = ci.cprime(geo.d), i2 = ci.cdoubleprime(geo.d);
        const double p1 = cprime_pfa(geo), p2 = cdoubleprime_pfa(geo);
        rows.push_back({geo.d, x, c1, i1, p1, c2, i2, p2, i1 / c1 - 1.0, i2 / c2 - 1.0, p1 / c1 - 1.0, p2 / c2 - 1.0});
    }
    return rows;
}

const std::vector<std::string> cap_header{"d_m",          "d_over_R",       "cprime_exact",   "cprime_interp",
                                          "cprime_pfa",   "cpp_exact",      "cpp_interp",     "cpp_pfa",
                                          "cprime_interp_rel_err", "cpp_interp_rel_err", "cprime_pfa_rel_err",
                                          "cpp_pfa_rel_err"};

void run_capacitance(const Globals& g, const CapOpts& o) {
    const auto c = load_config(g);
    const double R = o.R.value_or(c.probe.R);
    write_csv_to(c.out, "capacitance.csv", cap_header,
                 capacitance_rows(R, range_points(o.ratio_range, o.points, true), o.nodes));
}

// ---------------------------------------------------------- lifshitz

struct LifshitzOpts {
    std::vector<double> d_range{20e-9, 2e-6};
    std::size_t points = 40;
    std::string material;
    std::string drude_set;
    std::string zero_frequency = "drude";
    double water = 0.0;
    std::optional<double> R, T;
};

void run_lifshitz(const Globals& g, const LifshitzOpts& o) {
    auto c = load_config(g);
    if (!o.material.empty()) c.physics.casimir = o.material;
    if (!o.drude_set.empty()) c.physics.drude_set = o.drude_set;
    const double R = o.R.value_or(c.probe.R);
    const double T = o.T.value_or(c.physics.temperature);
    const auto ds = range_points(o.d_range, o.points, true);
    std::shared_ptr<const dielectric::DielectricModel> metal;
    if (c.physics.casimir == "ideal")
        metal = std::make_shared<const dielectric::DielectricModel>(dielectric::DielectricModel::perfect_conductor());
    else if (c.physics.casimir == "none")
        throw ConfigError("lifshitz needs a material; valid: gold, ideal, or a dielectric JSON file");
    else
        metal = config::casimir_material(c.physics);
    casimir::LifshitzOptions lo;
    if (o.zero_frequency == "plasma")
        lo.zero_frequency = casimir::ZeroFrequency::plasma;
    else if (o.zero_frequency != "drude")
        throw ConfigError("zero-frequency treatment must be drude or plasma");
    auto vac = std::make_shared<const dielectric::DielectricModel>(dielectric::DielectricModel::vacuum());
    auto water = std::make_shared<const dielectric::DielectricModel>(dielectric::bundled_water());
    casimir::LifshitzCalculator calc(casimir::LayerStack::coated(metal, water, o.water, vac), T, lo);
    std::vector<std::vector<double>> rows;
    for (double d : ds) {
        const double air = d - 2.0 * o.water;
        if (!(air > 0.0)) throw DomainError("separation smaller than the two water films");
        const double P = calc.pressure(air);
        const double G = 2.0 * std::numbers::pi * R * P;
        rows.push_back({d, P, G, casimir::ideal_gradient(R, d), G / casimir::ideal_gradient(R, d)});
    }
    write_csv_to(c.out, "lifshitz.csv", {"d_m", "pressure_Pa", "gradient_N_per_m", "ideal_gradient_N_per_m", "ratio"},
                 rows);
}

// ------------------------------------------------------------- hydro

struct HydroOpts {
    std::vector<double> d_range{20e-9, 20e-6};
    std::size_t points = 60;
    std::optional<double> slip, eta, omega, amplitude;
};

void run_hydro(const Globals& g, const HydroOpts& o) {
    auto c = load_config(g);
    if (o.slip) c.physics.slip_length = *o.slip;
    if (o.eta) c.physics.eta = *o.eta;
    const double omega = o.omega.value_or(c.protocol.omega_pz);
    const double amp = o.amplitude.value_or(c.protocol.base_delta_d);
    const hydro::HydroParams hp{c.physics.eta, c.physics.slip_length, c.probe.gamma0(), c.probe.R};
    std::vector<std::vector<double>> rows;
    for (double d : range_points(o.d_range, o.points, true)) {
        const auto lag = hydro::phase_lag(d, omega, c.probe.k, c.probe.omega1, hp);
        rows.push_back({d, hydro::damping(d, hp), hydro::quality_factor(d, c.probe.k, c.probe.omega1, hp),
                        lag.radians * 180.0 / std::numbers::pi, hydro::hydro_force_amplitude(d, omega * amp, hp),
                        lag.outside_validity ? 1.0 : 0.0});
    }
    write_csv_to(c.out, "hydro.csv",
                 {"d_m", "damping_kg_per_s", "Q", "phase_lag_deg", "drag_amplitude_N", "outside_validity"}, rows);
}

// --------------------------------------------------------- roughness

struct RoughOpts {
    std::string map;
    std::string generate;
    int lattice = 7;
    int filter_px = 64;
    double spacing_deg = 1.0;
    double d_compare = 100e-9;
    std::optional<double> R_guess;
};

struct RoughnessReport {
    roughness::RoughnessAnalysis a;
    roughness::EnsembleStats stats;
    std::vector<double> rel_es, rel_cas;
};

roughness::TopographyMap load_map(const std::string& path) {
    if (!path.empty()) return roughness::TopographyMap::load(path);
    const auto bundled = io::resolve_data_path("sphere_topography.json");
    if (fs::exists(bundled)) return roughness::TopographyMap::load(bundled);
    return roughness::synthetic_sphere_map();
}

RoughnessReport roughness_report(const roughness::TopographyMap& map, double R_guess, const RoughOpts& o) {
    RoughnessReport r;
    r.a = roughness::analyze_topography(map, R_guess, o.filter_px, o.lattice, o.spacing_deg);
    r.stats = roughness::ensemble_stats(r.a.offsets);
    for (const auto& p : r.a.pols.points) {
        const auto es =
            roughness::oriented_pfa_force(r.a.rough, p, o.d_compare, r.a.fit.R, roughness::electrostatic_gradient_law);
        const auto cs =
            roughness::oriented_pfa_force(r.a.rough, p, o.d_compare, r.a.fit.R, roughness::casimir_gradient_law);
        r.rel_es.push_back(-es.correction / es.smooth);
        r.rel_cas.push_back(-cs.correction / cs.smooth);
    }
    return r;
}

std::vector<std::vector<double>> roughness_rows(const RoughnessReport& r) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < r.a.offsets.size(); ++i) {
        const auto& p = r.a.pols.points[i];
        rows.push_back({static_cast<double>(i), static_cast<double>(p.row), static_cast<double>(p.col), r.a.offsets[i],
                        r.rel_es[i], r.rel_cas[i]});
    }
    return rows;
}

const std::vector<std::string> rough_header{"pols", "row", "col", "es_offset_m", "es_rel_correction",
                                            "casimir_rel_correction"};

void run_roughness(const Globals& g, const RoughOpts& o) {
    const auto c = load_config(g);
    if (!o.generate.empty()) {
        const fs::path header = o.generate;
        auto bin = header;
        bin.replace_extension(".bin");
        if (header.has_parent_path()) fs::create_directories(header.parent_path());
        roughness::synthetic_sphere_map().save_binary(bin, header);
        std::cerr << "wrote " << header.string() << " and " << bin.string() << '\n';
        return;
    }
    const auto map = load_map(o.map.empty() ? c.physics.topography : o.map);
    const auto r = roughness_report(map, o.R_guess.value_or(roughness::SyntheticMapConfig{}.R), o);
    write_csv_to(c.out, "roughness.csv", rough_header, roughness_rows(r));
    std::cerr << fmt::format("fitted R {:.6g} um, roughness rms {:.3g} nm, offset median {:.3g} nm, std {:.3g} nm "
                             "({} POLS)\n",
                             r.a.fit.R * 1e6, r.a.rough.rms() * 1e9, r.stats.central * 1e9, r.stats.stddev * 1e9,
                             r.a.offsets.size());
}

// ---------------------------------------------------------- simulate

struct SimOpts {
    std::optional<int> runs;
    std::string noise, interference, casimir;
    std::string truth;
};

void apply_sim_overrides(config::CampaignConfig& c, const SimOpts& o) {
    if (o.runs) c.protocol.runs = *o.runs;
    if (!o.noise.empty()) {
        const auto interference = c.noise.interference;
        c.noise = config::noise_preset(o.noise);
        if (o.noise == "default") c.noise.interference = interference;
    }
    if (!o.interference.empty()) c.noise.interference = config::interference_preset(o.interference);
    if (!o.casimir.empty()) c.physics.casimir = o.casimir;
    c.protocol.validate();
}

void run_simulate(const Globals& g, const SimOpts& o) {
    auto c = load_config(g);
    apply_sim_overrides(c, o);
    const auto truth = config::make_truth(c);
    const auto campaign = sim::simulate_campaign(truth, c.protocol, c.noise, c.seed);
    Sink s(c.out, "campaign.jsonl");
    sim::write_jsonl(s.stream(), campaign);
    std::string truth_path = o.truth;
    if (truth_path.empty() && !c.out.empty()) truth_path = (fs::path(c.out) / "truth.json").string();
    if (!truth_path.empty()) {
        std::ofstream t(truth_path);
        if (!t) throw ConfigError("cannot write " + truth_path);
        t << sim::truth_to_json(campaign).dump() << '\n';
    }
}

// ----------------------------------------------------------- analyze

struct AnalyzeOpts {
    std::string input;
    std::string theory;
};

analysis::TheoryCurve theory_curve(const config::CampaignConfig& c, const std::string& override_name, double R) {
    const std::string name = override_name.empty() ? c.physics.casimir : override_name;
    if (name == "ideal") return sim::CasimirTruth::ideal(R);
    if (name == "none") throw ConfigError("the analysis budget needs a theory curve; valid: gold, ideal, file");
    auto p = c.physics;
    p.casimir = name == "gold" ? "gold" : io::resolve_data_path(name).string();
    return sim::CasimirTruth::lifshitz(*config::casimir_material(p), R, c.physics.temperature);
}

void write_analysis_files(const std::string& dir, const analysis::AnalysisResult& r,
                          const analysis::TheoryCurve& theory) {
    std::vector<std::vector<double>> pts;
    for (const auto& p : r.points) pts.push_back({static_cast<double>(p.run), p.d, p.gradient, p.delta_d});
    write_csv_to(dir, "points.csv", {"run", "d_m", "gradient_N_per_m", "delta_d_m"}, pts);
    std::vector<std::vector<double>> bins;
    for (const auto& b : r.bins)
        bins.push_back({b.center, b.mean, b.sem, static_cast<double>(b.count), theory.gradient(b.center)});
    write_csv_to(dir, "bins.csv", {"d_m", "gradient_N_per_m", "sem_N_per_m", "count", "theory_N_per_m"}, bins);
    Sink s(dir, "budget.csv");
    analysis::write_budget_csv(s.stream(), r.budget);
}

io::json analysis_summary(const analysis::AnalysisResult& r) {
    auto j = analysis::calibration_to_json(r.calibration);
    j["hydro"] = {{"slip_length_m", r.hydro.b}, {"eta_Pa_s", r.hydro.eta}};
    j["interference_N_per_m2"] = r.interference.total();
    j["budget_crossover_m"] = r.budget.crossover ? io::json(*r.budget.crossover) : io::json(nullptr);
    j["budget_crossover_to"] = r.budget.crossover_to;
    j["budget_absent"] = r.budget.absent;
    j["warnings"] = r.warnings;
    return j;
}

void run_analyze(const Globals& g, const AnalyzeOpts& o) {
    const auto c = load_config(g);
    const auto campaign = read_campaign(o.input);
    const auto theory = theory_curve(c, o.theory, campaign.nominal.R);
    const auto r = analysis::analyze_campaign(campaign, theory, c.analysis);
    Sink s(c.out, "calibration.json");
    s.stream() << analysis_summary(r).dump(2) << '\n';
    if (!c.out.empty()) write_analysis_files(c.out, r, theory);
}

void run_budget(const Globals& g, const AnalyzeOpts& o) {
    const auto c = load_config(g);
    const auto campaign = read_campaign(o.input);
    const auto theory = theory_curve(c, o.theory, campaign.nominal.R);
    const auto r = analysis::analyze_campaign(campaign, theory, c.analysis);
    Sink s(c.out, "budget.csv");
    analysis::write_budget_csv(s.stream(), r.budget);
    if (r.budget.crossover)
        std::cerr << fmt::format("crossover at {:.4g} nm: separation -> {}\n", *r.budget.crossover * 1e9,
                                 r.budget.crossover_to);
    else
        std::cerr << "no crossover inside the budget range\n";
    if (!r.budget.absent.empty()) {
        std::cerr << "absent sources:";
        for (const auto& a : r.budget.absent) std::cerr << ' ' << a;
        std::cerr << '\n';
    }
}

// --------------------------------------------------------- reproduce

struct ReproOpts {
    std::optional<int> runs;
    std::vector<std::string> outputs{"force_gradient", "capacitance", "roughness", "stability", "budget",
                                     "dielectric", "force_uncertainty"};
};

void write_dielectric(const std::string& dir) {
    const auto a = dielectric::bundled_gold(dielectric::gold_drude_a);
    const auto b = dielectric::bundled_gold(dielectric::gold_drude_b);
    const auto da = dielectric::DielectricModel::drude(dielectric::gold_drude_a);
    const auto db = dielectric::DielectricModel::drude(dielectric::gold_drude_b);
    std::vector<std::vector<double>> rows;
    for (double xi : num::logspace(1e-3, 100.0, 121))
        rows.push_back({xi, a.eps(xi), b.eps(xi), da.eps(xi), db.eps(xi)});
    write_csv_to(dir, "dielectric.csv",
                 {"xi_eV", "eps_gold_set_a", "eps_gold_set_b", "eps_drude_only_a", "eps_drude_only_b"}, rows);
}

void write_force_uncertainty(const std::string& dir, const config::CampaignConfig& c) {
    const double R = c.probe.R;
    const auto ds = num::logspace(50e-9, 1e-6, 25);
    auto ma = std::make_shared<const dielectric::DielectricModel>(dielectric::bundled_gold(dielectric::gold_drude_a));
    auto mb = std::make_shared<const dielectric::DielectricModel>(dielectric::bundled_gold(dielectric::gold_drude_b));
    auto vac = std::make_shared<const dielectric::DielectricModel>(dielectric::DielectricModel::vacuum());
    auto water = std::make_shared<const dielectric::DielectricModel>(dielectric::bundled_water());
    casimir::LifshitzCalculator ca(casimir::LayerStack::symmetric(ma, vac), c.physics.temperature);
    casimir::LifshitzCalculator cb(casimir::LayerStack::symmetric(mb, vac), c.physics.temperature);
    const auto sweep = casimir::water_layer_sweep(ma, water, vac, ds, R, {0.75e-9, 1.5e-9, 2.25e-9},
                                                  c.physics.temperature);
    const auto patch = casimir::patch_potential_ingest(c.physics.patch_file);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double d = ds[i];
        const double ga = 2.0 * std::numbers::pi * R * ca.pressure(d);
        const double gb = 2.0 * std::numbers::pi * R * cb.pressure(d);
        const double ps = num::interp_linear(patch.separations, patch.values,
                                             std::clamp(d, patch.separations.front(), patch.separations.back()));
        const double ratchet = casimir::ratchet_bias(c.protocol.chi_max) * ga;
        rows.push_back({d, ga, gb, std::abs(ga - gb) / ga, sweep[i].uncertainty, ps, ratchet});
    }
    write_csv_to(dir, "force_uncertainty.csv",
                 {"d_m", "gradient_set_a_N_per_m", "gradient_set_b_N_per_m", "drude_rel_diff", "water_N_per_m",
                  "patch_std_N_per_m", "ratchet_bias_N_per_m"},
                 rows);
}

void run_reproduce(const Globals& g, const ReproOpts& o) {
    auto c = load_config(g);
    if (c.out.empty()) c.out = "reproduce";
    if (o.runs) c.protocol.runs = *o.runs;
    const ReproOpts all;
    auto want = [&](const char* name) { return std::find(o.outputs.begin(), o.outputs.end(), name) != o.outputs.end(); };
    for (const auto& f : o.outputs)
        if (std::find(all.outputs.begin(), all.outputs.end(), f) == all.outputs.end())
            throw ConfigError(fmt::format("unknown output '{}'; valid: {}", f, fmt::join(all.outputs, ", ")));
    fs::create_directories(c.out);
    const std::string& dir = c.out;

    if (want("capacitance"))
        write_csv_to(dir, "capacitance.csv", cap_header,
                     capacitance_rows(c.probe.R, num::logspace(1e-4, 10.0, 101), 43));
    if (want("dielectric")) write_dielectric(dir);
    if (want("force_uncertainty")) write_force_uncertainty(dir, c);
    if (want("roughness")) {
        RoughOpts ro;
        const auto r = roughness_report(load_map(c.physics.topography), roughness::SyntheticMapConfig{}.R, ro);
        write_csv_to(dir, "roughness.csv", rough_header, roughness_rows(r));
    }
    if (want("force_gradient") || want("stability") || want("budget")) {
        const auto truth = config::make_truth(c);
        const auto campaign = sim::simulate_campaign(truth, c.protocol, c.noise, c.seed);
        const auto& theory = truth.casimir.is_zero() ? sim::CasimirTruth::ideal(c.probe.R) : truth.casimir;
        const auto r = analysis::analyze_campaign(campaign, theory, c.analysis);
        if (want("force_gradient")) {
            std::vector<std::vector<double>> rows;
            for (const auto& b : r.bins) {
                double total = std::nan("");
                for (const auto& row : r.budget.rows)
                    if (row.d == b.center) total = row.total;
                rows.push_back({b.center, b.mean, b.sem, theory.gradient(b.center), total});
            }
            write_csv_to(dir, "force_gradient.csv",
                         {"d_m", "gradient_N_per_m", "sem_N_per_m", "theory_N_per_m", "budget_total_N_per_m"}, rows);
        }
        if (want("stability")) {
            std::vector<std::vector<double>> rows;
            const auto& runs = r.calibration.runs;
            const auto& drift = r.calibration.drift.per_run;
            for (std::size_t i = 0; i < runs.size(); ++i) {
                const auto& rf = runs[i];
                const double fit = i < drift.size() ? drift[i](rf.t_mid) : std::nan("");
                rows.push_back({static_cast<double>(rf.run), rf.t_mid, rf.kappa, rf.kappa_err, rf.d0, rf.d0_err, fit});
            }
            write_csv_to(dir, "stability.csv",
                         {"run", "t_s", "kappa", "kappa_err", "d0_m", "d0_err_m", "d0_drift_fit_m"}, rows);
        }
        if (want("budget")) {
            Sink s(dir, "budget.csv");
            analysis::write_budget_csv(s.stream(), r.budget);
        }
        std::ofstream j(fs::path(dir) / "calibration.json");
        j << analysis_summary(r).dump(2) << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fomlab: force-modulation Casimir measurement toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "campaign config JSON (default: $FOMLAB_CONFIG_DIR/fomlab.json if present)");
    app.add_option("--seed", g.seed, "random seed (u64)");
    app.add_option("--out", g.out, "output directory (default: stdout)");

    LimitsOpts lo;
    auto* limits = app.add_subcommand("limits", "fundamental separation and force limits");
    limits->add_option("--probe", lo.probe, "probe preset")->capture_default_str();
    limits->add_option("--bandwidth", lo.bandwidth, "measurement bandwidth, Hz")->capture_default_str();
    limits->add_option("--chi", lo.chi, "maximum shake amplitude ratio dd/d")->capture_default_str();
    limits->add_option("--delta-d", lo.delta_d, "fixed shake amplitude, m")->capture_default_str();
    limits->add_option("--k", lo.k, "spring constant override, N/m");
    limits->add_option("--R", lo.R, "sphere radius override, m");
    limits->add_option("--T", lo.T, "temperature, K");
    limits->add_flag("--json", lo.json, "emit JSON instead of a text report");
    limits->callback([&] { run_limits(g, lo); });

    CapOpts co;
    auto* cap = app.add_subcommand("capacitance", "exact, interpolated and PFA capacitance derivatives (CSV)");
    cap->add_option("--ratio-range", co.ratio_range, "d/R range (two values)")->expected(2);
    cap->add_option("--points", co.points, "number of log-spaced points")->capture_default_str();
    cap->add_option("--nodes", co.nodes, "interpolator nodes")->capture_default_str();
    cap->add_option("--R", co.R, "sphere radius, m");
    cap->callback([&] { run_capacitance(g, co); });

    LifshitzOpts lfo;
    auto* lif = app.add_subcommand("lifshitz", "Lifshitz pressure and PFA gradient (CSV)");
    lif->add_option("--d-range", lfo.d_range, "separation range, m (two values)")->expected(2);
    lif->add_option("--points", lfo.points, "number of log-spaced points")->capture_default_str();
    lif->add_option("--material", lfo.material, "gold, ideal, or a dielectric JSON file");
    lif->add_option("--drude-set", lfo.drude_set, "gold Drude parameter set: a or b");
    lif->add_option("--zero-frequency", lfo.zero_frequency, "drude or plasma")->capture_default_str();
    lif->add_option("--water", lfo.water, "water film thickness on each surface, m")->capture_default_str();
    lif->add_option("--R", lfo.R, "sphere radius, m");
    lif->add_option("--T", lfo.T, "temperature, K");
    lif->callback([&] { run_lifshitz(g, lfo); });

    HydroOpts ho;
    auto* hyd = app.add_subcommand("hydro", "squeeze-film damping, Q and phase lag (CSV)");
    hyd->add_option("--d-range", ho.d_range, "separation range, m (two values)")->expected(2);
    hyd->add_option("--points", ho.points, "number of log-spaced points")->capture_default_str();
    hyd->add_option("--slip", ho.slip, "slip length, m");
    hyd->add_option("--eta", ho.eta, "air viscosity, Pa s");
    hyd->add_option("--omega", ho.omega, "drive angular frequency, rad/s (default: piezo)");
    hyd->add_option("--amplitude", ho.amplitude, "plate amplitude for the drag column, m");
    hyd->callback([&] { run_hydro(g, ho); });

    RoughOpts ro;
    auto* rough = app.add_subcommand("roughness", "sphere topography analysis and POLS ensemble (CSV)");
    rough->add_option("--map", ro.map, "topography: JSON header (binary data) or CSV grid");
    rough->add_option("--generate", ro.generate, "write the synthetic rough-sphere map to this JSON path and exit");
    rough->add_option("--lattice", ro.lattice, "POLS lattice size per side")->capture_default_str();
    rough->add_option("--filter-px", ro.filter_px, "median filter window, pixels")->capture_default_str();
    rough->add_option("--spacing-deg", ro.spacing_deg, "POLS angular spacing, degrees")->capture_default_str();
    rough->add_option("--compare-d", ro.d_compare, "separation for relative corrections, m")->capture_default_str();
    rough->add_option("--R-guess", ro.R_guess, "initial sphere radius, m");
    rough->callback([&] { run_roughness(g, ro); });

    SimOpts so;
    auto* simc = app.add_subcommand("simulate", "simulate a measurement campaign (JSON lines)");
    simc->add_option("--runs", so.runs, "number of measurement runs");
    simc->add_option("--noise", so.noise, "noise preset: default or none");
    simc->add_option("--interference", so.interference, "interference preset: sld, laser or none");
    simc->add_option("--casimir", so.casimir, "true force: gold, ideal, none or a dielectric JSON file");
    simc->add_option("--truth", so.truth, "write the hidden truth sidecar to this path");
    simc->callback([&] { run_simulate(g, so); });

    AnalyzeOpts ao;
    auto* ana = app.add_subcommand("analyze", "calibrate and extract force gradients from a campaign");
    ana->add_option("--input", ao.input, "campaign JSON lines (default: stdin)");
    ana->add_option("--theory", ao.theory, "theory curve for the budget: gold, ideal or a dielectric JSON file");
    ana->callback([&] { run_analyze(g, ao); });

    AnalyzeOpts bo;
    auto* bud = app.add_subcommand("budget", "uncertainty budget of a campaign (CSV)");
    bud->add_option("--input", bo.input, "campaign JSON lines (default: stdin)");
    bud->add_option("--theory", bo.theory, "theory curve: gold, ideal or a dielectric JSON file");
    bud->callback([&] { run_budget(g, bo); });

    ReproOpts rpo;
    auto* rep = app.add_subcommand("reproduce", "regenerate the standard data products as CSV files");
    rep->add_option("--runs", rpo.runs, "measurement runs in the simulated campaign");
    rep->add_option("--outputs", rpo.outputs, "data products to write")->capture_default_str();
    rep->callback([&] { run_reproduce(g, rpo); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const ConfigError& e) {
        std::cerr << "fomlab: configuration error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "fomlab: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "fomlab: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
