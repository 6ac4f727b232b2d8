// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and exits
// with the number of failures. argv[1] is the path of the fomlab CLI, used
// by the determinism check.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "fomlab/fomlab.hpp"

using namespace fomlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        detail += (detail.empty() ? "" : "; ") + what + (ok ? "" : " [x]");
    }
};

bool within(double v, double lo, double hi) { return v >= lo && v <= hi; }

std::shared_ptr<const dielectric::DielectricModel> shared(dielectric::DielectricModel m) {
    return std::make_shared<const dielectric::DielectricModel>(std::move(m));
}

// ------------------------------------------------------------------ 1

Outcome limits_check() {
    Outcome o;
    const sim::ProbeParams p;
    const auto r = analysis::limits(p, 1.0, 0.15);
    auto stiff = p;
    stiff.k = 1.0;
    const auto r1 = analysis::limits(stiff, 1.0, 0.15);
    o.check(std::abs(r.d_min - 43e-9) <= 1e-9, fmt::format("d_min {:.2f} nm", r.d_min * 1e9));
    o.check(std::abs(r1.d_min - 24e-9) <= 1e-9, fmt::format("d_min(k=1) {:.2f} nm", r1.d_min * 1e9));
    o.check(within(r.F_min, 15e-15, 20e-15), fmt::format("F_min {:.2f} fN", r.F_min * 1e15));
    o.check(std::abs(r.d_max_bound - 1.4e-6) <= 0.1e-6, fmt::format("d_max bound {:.3f} um", r.d_max_bound * 1e6));
    return o;
}

// ------------------------------------------------------------------ 2

Outcome capacitance_check() {
    using namespace electrostatics;
    Outcome o;
    const double R = 40e-6;
    const auto ci = build_interpolator(R);
    double worst = 0.0;
    bool ordering = true;
    for (double d : num::logspace(45e-9, 8e-6, 120)) {
        const SpherePlateGeometry g{d, R};
        const double c1 = cprime_exact(g), c2 = cdoubleprime_exact(g);
        worst = std::max({worst, std::abs(ci.cprime(d) / c1 - 1.0), std::abs(ci.cdoubleprime(d) / c2 - 1.0)});
        ordering = ordering &&
                   std::abs(cdoubleprime_pfa(g) / c2 - 1.0) <= std::abs(cprime_pfa(g) / c1 - 1.0) * (1.0 + 1e-9);
    }
    o.check(ci.node_ratios().size() == 43, "43 nodes");
    o.check(worst < 5e-3, fmt::format("max interpolation error {:.3f}%", worst * 100.0));
    o.check(ordering, "PFA error of C'' <= PFA error of C' over 45 nm - 8 um");
    return o;
}

// ------------------------------------------------------------------ 3

Outcome second_order_check() {
    Outcome o;
    const sim::ProbeParams p;
    const double delta = electrostatics::second_order_delta_feedback(100e-9, p.gamma, 1e-3).value;
    o.check(std::abs(delta - 0.014) <= 1e-3, fmt::format("delta(100 nm) {:.4f}", delta));
    // Paired synthetic C' fits: identical noiseless data fitted with the
    // sensitivity at +-10% of its true value.
    const auto cap = electrostatics::CapacitanceModel::interpolated(p.R);
    std::vector<double> x, S, V;
    const double d0 = 2e-6;
    for (double d : num::logspace(50e-9, 2e-6, 40)) {
        const double c1 = cap.cprime(d), c2 = cap.cdoubleprime(d);
        const double v = electrostatics::vac_for_setpoint(c1, c2, p.k, p.gamma, 1e-3);
        x.push_back(d + d0);
        V.push_back(v);
        S.push_back(electrostatics::s2omega_signal(c1, c2, v, p.k, p.gamma));
    }
    const auto lo = analysis::fit_s2omega(x, S, V, cap, p.R, {true, 0.9 * p.gamma});
    const auto hi = analysis::fit_s2omega(x, S, V, cap, p.R, {true, 1.1 * p.gamma});
    const double spread = std::abs(hi.d0 - lo.d0);
    o.check(within(spread, 0.2e-9, 0.4e-9), fmt::format("C'-path d0 spread {:.3f} nm", spread * 1e9));
    return o;
}

// ------------------------------------------------------------------ 4

Outcome ratchet_check() {
    Outcome o;
    const double d = 100e-9;
    // Gradient ~ d^-4 comes from a force ~ d^-3 / 3.
    auto force = [](double g) { return 1.0 / (3.0 * g * g * g); };
    const double G = std::pow(d, -4.0);
    for (double chi : {0.05, 0.10, 0.15}) {
        const double measured = -sim::timedomain::measured_gradient_from_force(force, d, chi * d, 8192);
        const double ratio = (measured / G - 1.0) / (2.5 * chi * chi);
        o.check(within(ratio, 0.9, 1.1), fmt::format("chi {:.2f}: {:.4f}", chi, ratio));
    }
    return o;
}

// ------------------------------------------------------------------ 5

Outcome water_check() {
    Outcome o;
    double worst = 0.0;
    for (double d : {20e-9, 100e-9, 700e-9})
        for (double dW : {0.5e-9, 1.5e-9, 3e-9})
            for (double eW : {2.0, 77.0, 80.0}) {
                const double lhs = electrostatics::parallel_plate_capacitance(d, dW, eW);
                const double rhs = electrostatics::parallel_plate_capacitance(d - dW * (1.0 - 1.0 / eW));
                worst = std::max(worst, std::abs(lhs / rhs - 1.0));
            }
    o.check(worst <= 4.0 * std::numeric_limits<double>::epsilon(), fmt::format("shift identity {:.1e}", worst));
    const auto gold = shared(dielectric::bundled_gold());
    const auto sweep = casimir::water_layer_sweep(gold, shared(dielectric::bundled_water()),
                                                  shared(dielectric::DielectricModel::vacuum()),
                                                  {60e-9, 120e-9, 250e-9}, 40e-6);
    bool formula = true, monotone = true;
    for (const auto& p : sweep) {
        formula = formula && p.uncertainty == casimir::water_sweep_uncertainty(p.f_low, p.f_mid, p.f_high) &&
                  std::abs(p.uncertainty - (0.5 * std::abs(p.f_mid - p.f_low) + 0.5 * std::abs(p.f_high - p.f_mid))) <=
                      1e-12 * std::abs(p.f_mid);
        monotone = monotone && p.f_low < p.f_mid && p.f_mid < p.f_high;
    }
    o.check(formula, "water-sweep uncertainty formula");
    o.check(monotone, "force rises with water thickness");
    return o;
}

// ------------------------------------------------------------------ 6

Outcome roughness_check() {
    using namespace roughness;
    Outcome o;
    TopographyMap zero(64, 64, 10e-9);
    const auto z = oriented_pfa_force(zero, {32, 32}, 100e-9, 33.2e-6, electrostatic_gradient_law);
    o.check(z.correction == 0.0 && z.corrected == z.smooth, "zero map identity");
    const auto map = TopographyMap::load(io::resolve_data_path("sphere_topography.json"));
    const auto a = analyze_topography(map, SyntheticMapConfig{}.R, 64, 7, 1.0);
    const auto st = ensemble_stats(a.offsets);
    o.check(a.offsets.size() == 49, fmt::format("{} POLS", a.offsets.size()));
    o.check(std::abs(st.stddev - 0.2e-9) <= 0.1e-9, fmt::format("offset std {:.3f} nm", st.stddev * 1e9));
    std::size_t larger = 0;
    for (const auto& p : a.pols.points) {
        const auto es = oriented_pfa_force(a.rough, p, 100e-9, a.fit.R, electrostatic_gradient_law);
        const auto cs = oriented_pfa_force(a.rough, p, 100e-9, a.fit.R, casimir_gradient_law);
        larger += std::abs(cs.correction / cs.smooth) > std::abs(es.correction / es.smooth);
    }
    o.check(larger == a.pols.count(),
            fmt::format("Casimir > electrostatic relative correction at {}/{} POLS", larger, a.pols.count()));
    return o;
}

// ------------------------------------------------------------------ 7

Outcome lifshitz_check() {
    using namespace casimir;
    Outcome o;
    const auto vac = shared(dielectric::DielectricModel::vacuum());
    // The ideal-conductor law is a zero-temperature result; at room
    // temperature the engine must add the low-temperature thermal term
    // (1/3) (2 d k_B T / hbar c)^4.
    const auto pc_model = shared(dielectric::DielectricModel::perfect_conductor());
    LifshitzCalculator cold(LayerStack::symmetric(pc_model, vac), 2.0);
    const double r0 = cold.pressure(1e-6) / ideal_pressure(1e-6) - 1.0;
    o.check(std::abs(r0) < 1e-3, fmt::format("perfect conductor at 1 um, 2 K {:+.3f}%", r0 * 100.0));
    LifshitzCalculator warm(LayerStack::symmetric(pc_model, vac));
    const double t = 2.0 * 1e-6 * constants::k_B * constants::T_default / (constants::hbar * constants::c);
    const double expect = 1.0 + std::pow(t, 4) / 3.0;
    const double r1 = warm.pressure(1e-6) / (ideal_pressure(1e-6) * expect) - 1.0;
    o.check(std::abs(r1) < 1e-3, fmt::format("at {:.0f} K with thermal term {:+.3f}%", constants::T_default, r1 * 100.0));
    const auto gold_a = shared(dielectric::bundled_gold(dielectric::gold_drude_a));
    const auto gold_b = shared(dielectric::bundled_gold(dielectric::gold_drude_b));
    LifshitzCalculator base(LayerStack::symmetric(gold_a, vac));
    LifshitzOptions fine;
    fine.matsubara_rel_tol = 1e-9;
    fine.gauss_order = 32;
    LifshitzCalculator refined(LayerStack::symmetric(gold_a, vac), constants::T_default, fine);
    LifshitzCalculator other(LayerStack::symmetric(gold_b, vac));
    double refine = 0.0, sets = 0.0;
    for (double d : num::logspace(50e-9, 300e-9, 6)) {
        const double pa = base.pressure(d);
        refine = std::max(refine, std::abs(pa / refined.pressure(d) - 1.0));
        sets = std::max(sets, std::abs(other.pressure(d) / pa - 1.0));
    }
    o.check(refine < 1e-3, fmt::format("refinement {:.4f}%", refine * 100.0));
    o.check(sets < 0.03, fmt::format("Drude sets differ by up to {:.2f}%", sets * 100.0));
    return o;
}

// ------------------------------------------------------------- 8 and 9

struct CampaignRun {
    config::CampaignConfig cfg;
    sim::Truth truth;
    sim::Campaign campaign;
    analysis::AnalysisResult result;
};

CampaignRun campaign(std::uint64_t seed, const std::string& interference) {
    CampaignRun c;
    c.cfg.seed = seed;
    c.cfg.noise.interference = config::interference_preset(interference);
    c.truth = config::make_truth(c.cfg);
    c.campaign = sim::simulate_campaign(c.truth, c.cfg.protocol, c.cfg.noise, seed);
    c.result = analysis::analyze_campaign(c.campaign, c.truth.casimir, c.cfg.analysis);
    return c;
}

Outcome closed_loop_check(const CampaignRun& c) {
    Outcome o;
    const auto& cal = c.result.calibration;
    o.check(c.campaign.runs.size() >= 30, fmt::format("{} runs", c.cfg.protocol.runs));
    o.check(within(cal.kappa_scatter, 0.005, 0.015), fmt::format("kappa scatter {:.2f}%", cal.kappa_scatter * 100.0));
    o.check(std::abs(cal.k / c.truth.probe.k - 1.0) < 0.05, fmt::format("k {:.5f} N/m", cal.k));
    std::size_t inside = 0, total = 0;
    for (const auto& row : c.result.budget.rows)
        for (const auto& b : c.result.bins)
            if (b.center == row.d) {
                ++total;
                inside += std::abs(b.mean - c.truth.casimir.gradient(b.center)) <= 2.0 * row.total;
            }
    const double frac = total ? static_cast<double>(inside) / static_cast<double>(total) : 0.0;
    o.check(total > 0 && frac >= 0.95, fmt::format("{}/{} grid points within 2x budget", inside, total));
    const auto& b = c.result.budget;
    o.check(b.crossover && std::abs(*b.crossover - 120e-9) <= 40e-9 &&
                (b.crossover_to == "hydrodynamic" || b.crossover_to == "interference"),
            b.crossover ? fmt::format("crossover at {:.0f} nm to {}", *b.crossover * 1e9, b.crossover_to)
                        : std::string("no crossover"));
    return o;
}

Outcome artifact_check(const CampaignRun& sld, const CampaignRun& laser) {
    Outcome o;
    // Direct injection-recovery on a smooth background.
    const auto inj = sim::sld_interference();
    std::vector<double> d, y;
    for (double x = 500e-9; x < 5e-6; x += 20e-9) {
        d.push_back(x);
        y.push_back(2.0 * std::pow(x / 500e-9, -3.0) + inj.value(x));
    }
    const auto e = analysis::estimate_interference(d, y);
    const double err = std::abs(e.total() / inj.total_amplitude() - 1.0);
    o.check(err < 0.05, fmt::format("injection error {:.2f}%", err * 100.0));
    const double s = sld.result.interference.total(), l = laser.result.interference.total();
    o.check(std::abs(s - 1.0) < 0.05, fmt::format("SLD {:.3f} N/m^2", s));
    o.check(std::abs(l - 10.0) < 0.5, fmt::format("laser {:.2f} N/m^2", l));
    // Kelvin loop: bias times C' is constant, and bounded for a 10 uV offset.
    const sim::ProbeParams p;
    const auto cap = electrostatics::CapacitanceModel::interpolated(p.R);
    double worst = 0.0, lo = 1e300, hi = -1e300;
    for (double x : sim::ProtocolConfig{}.approach_separations()) {
        const double c1 = cap.cprime(x);
        const double V = electrostatics::vac_for_setpoint(c1, cap.cdoubleprime(x), p.k, p.gamma, 1e-3);
        const double bias = sim::kelvin_loop(c1, 0.025, 10e-6, p.k, p.gamma, V) - 0.025;
        worst = std::max(worst, std::abs(bias));
        lo = std::min(lo, bias * c1 * V);
        hi = std::max(hi, bias * c1 * V);
    }
    o.check(hi - lo <= 1e-12 * std::abs(hi), "bias * C' V_AC constant");
    o.check(worst < 10e-3, fmt::format("max V0 error {:.2f} mV", worst * 1e3));
    const auto& v0 = sld.result.calibration.v0_artifact;
    o.check(std::abs(v0.V0 - sld.truth.V0) < 1e-3, fmt::format("artifact fit V0 {:.5f} V", v0.V0));
    return o;
}

// ----------------------------------------------------------------- 10

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome determinism_check(const std::string& cli) {
    Outcome o;
    if (cli.empty()) {
        o.check(false, "CLI path not given");
        return o;
    }
    const auto base = fs::temp_directory_path() / "fomlab_acceptance";
    fs::remove_all(base);
    for (const char* tag : {"a", "b"}) {
        const auto dir = base / tag;
        const std::string cmd = fmt::format("\"{}\" --seed 11 --out \"{}\" simulate --runs 4 && \"{}\" --out \"{}\" "
                                            "analyze --input \"{}\" > /dev/null 2>&1",
                                            cli, dir.string(), cli, dir.string(), (dir / "campaign.jsonl").string());
        o.check(std::system(cmd.c_str()) == 0, fmt::format("run {}", tag));
    }
    std::size_t files = 0;
    bool same = true;
    for (const auto& f : fs::directory_iterator(base / "a")) {
        ++files;
        same = same && slurp(f.path()) == slurp(base / "b" / f.path().filename());
    }
    o.check(files > 0 && same, fmt::format("{} output files byte-identical", files));
    fs::remove_all(base);
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "";
    std::vector<std::pair<std::string, std::function<Outcome()>>> items;
    items.emplace_back("1 limits", limits_check);
    items.emplace_back("2 capacitance", capacitance_check);
    items.emplace_back("3 second order", second_order_check);
    items.emplace_back("4 ratchet bias", ratchet_check);
    items.emplace_back("5 water layer", water_check);
    items.emplace_back("6 roughness", roughness_check);
    items.emplace_back("7 lifshitz", lifshitz_check);
    std::optional<CampaignRun> sld, laser;
    auto campaigns = [&] {
        if (!sld) sld = campaign(7, "sld");
        if (!laser) laser = campaign(7, "laser");
    };
    items.emplace_back("8 closed loop", [&] {
        campaigns();
        return closed_loop_check(*sld);
    });
    items.emplace_back("9 artifacts", [&] {
        campaigns();
        return artifact_check(*sld, *laser);
    });
    items.emplace_back("10 determinism", [&] { return determinism_check(cli); });
    int failures = 0;
    for (const auto& [name, fn] : items) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.check(false, std::string("error: ") + e.what());
        }
        failures += !o.pass;
        fmt::print("{} criterion {}: {}\n", o.pass ? "PASS" : "FAIL", name, o.detail);
        std::fflush(stdout);
    }
    return failures;
}
