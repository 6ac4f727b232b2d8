#pragma once

// Sphere topography: sphere fit, median-filter separation of short-range
// roughness, pixel-wise PFA corrections about a chosen point of least
// separation (POLS), and ensemble statistics over POLS placements.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fomlab/constants.hpp"
#include "fomlab/error.hpp"
#include "fomlab/io.hpp"
#include "fomlab/numerics.hpp"

namespace fomlab::roughness {

using std::numbers::pi;

/// Gridded surface heights, row-major. Heights are measured outward from the
/// sphere, i.e. toward the plate.
class TopographyMap {
public:
    TopographyMap() = default;
    TopographyMap(std::size_t rows, std::size_t cols, double pitch, double fill = 0.0)
        : rows_(rows), cols_(cols), pitch_(pitch), h_(rows * cols, fill) {
        if (!(pitch > 0.0)) throw DomainError("pixel pitch must be positive");
    }
    TopographyMap(std::size_t rows, std::size_t cols, double pitch, std::vector<double> heights)
        : rows_(rows), cols_(cols), pitch_(pitch), h_(std::move(heights)) {
        if (!(pitch > 0.0)) throw DomainError("pixel pitch must be positive");
        if (h_.size() != rows * cols) throw DataError("topography size does not match dimensions");
        for (double v : h_)
            if (!std::isfinite(v)) throw DataError("topography contains non-finite heights");
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return h_.size(); }
    double pitch() const { return pitch_; }
    double& operator()(std::size_t r, std::size_t c) { return h_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return h_[r * cols_ + c]; }
    const std::vector<double>& data() const { return h_; }
    std::vector<double>& data() { return h_; }

    /// Pixel-centre coordinates relative to the map centre, m.
    double x(std::size_t c) const { return (static_cast<double>(c) - 0.5 * static_cast<double>(cols_ - 1)) * pitch_; }
    double y(std::size_t r) const { return (static_cast<double>(r) - 0.5 * static_cast<double>(rows_ - 1)) * pitch_; }

    double rms() const {
        const double m = num::mean(h_);
        double s = 0.0;
        for (double v : h_) s += (v - m) * (v - m);
        return std::sqrt(s / static_cast<double>(h_.size()));
    }

    /// Flat binary of doubles plus a JSON header {rows, cols, pitch_m}.
    void save_binary(const std::filesystem::path& bin, const std::filesystem::path& header) const {
        std::ofstream out(bin, std::ios::binary);
        if (!out) throw ConfigError("cannot write " + bin.string());
        out.write(reinterpret_cast<const char*>(h_.data()), static_cast<std::streamsize>(h_.size() * sizeof(double)));
        io::json j{{"rows", rows_}, {"cols", cols_}, {"pitch_m", pitch_}, {"data", bin.filename().string()}};
        std::ofstream hj(header);
        hj << j.dump(2) << '\n';
    }

    static TopographyMap load_binary(const std::filesystem::path& header) {
        const auto j = io::read_json(header);
        const auto rows = j.at("rows").get<std::size_t>();
        const auto cols = j.at("cols").get<std::size_t>();
        const auto pitch = j.at("pitch_m").get<double>();
        const auto bin = header.parent_path() / j.at("data").get<std::string>();
        std::ifstream in(bin, std::ios::binary);
        if (!in) throw ConfigError("cannot open " + bin.string());
        std::vector<double> h(rows * cols);
        in.read(reinterpret_cast<char*>(h.data()), static_cast<std::streamsize>(h.size() * sizeof(double)));
        if (in.gcount() != static_cast<std::streamsize>(h.size() * sizeof(double)))
            throw ConfigError(bin.string() + ": truncated topography data");
        return TopographyMap(rows, cols, pitch, std::move(h));
    }

    /// CSV grid: one map row per line, no header; pitch supplied separately.
    static TopographyMap load_csv_grid(const std::filesystem::path& path, double pitch) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open " + path.string());
        std::vector<double> h;
        std::size_t rows = 0, cols = 0;
        std::string line;
        while (std::getline(in, line)) {
            const auto s = io::trim(line);
            if (s.empty() || s[0] == '#') continue;
            const auto f = io::split(s);
            if (cols == 0) cols = f.size();
            if (f.size() != cols) throw ConfigError(path.string() + ": ragged topography grid");
            for (const auto& v : f) h.push_back(std::stod(v));
            ++rows;
        }
        return TopographyMap(rows, cols, pitch, std::move(h));
    }

    /// Load either a JSON header (binary data) or a CSV grid.
    static TopographyMap load(const std::filesystem::path& path, double csv_pitch = 10e-9) {
        const auto p = io::resolve_data_path(path);
        if (p.extension() == ".json") return load_binary(p);
        return load_csv_grid(p, csv_pitch);
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    double pitch_ = 1.0;
    std::vector<double> h_;
};

// ------------------------------------------------------------- sphere fit

struct SphereFit {
    TopographyMap residual;
    double R = 0.0;
    double x0 = 0.0, y0 = 0.0, z0 = 0.0;  // sphere centre
    double residual_rms = 0.0;
};

/// Height of the upper cap of a sphere at (x, y).
inline double cap_height(double x, double y, double R, double x0, double y0, double z0) {
    const double r2 = (x - x0) * (x - x0) + (y - y0) * (y - y0);
    return z0 + std::sqrt(std::max(R * R - r2, 0.0));
}

/// Least-squares fit of (x-x0)^2 + (y-y0)^2 + (z-z0)^2 = R^2 to the map
/// (vertical residuals, Levenberg-Marquardt) and removal of the fitted cap.
inline SphereFit remove_sphere_fit(const TopographyMap& map, double R_guess, int stride = 1) {
    if (!(R_guess > 0.0)) throw DomainError("radius guess must be positive");
    std::vector<std::size_t> rs, cs;
    for (std::size_t r = 0; r < map.rows(); r += static_cast<std::size_t>(stride))
        for (std::size_t c = 0; c < map.cols(); c += static_cast<std::size_t>(stride)) {
            rs.push_back(r);
            cs.push_back(c);
        }
    const auto imax = static_cast<std::size_t>(std::max_element(map.data().begin(), map.data().end()) - map.data().begin());
    const double half_w = 0.5 * std::max(map.rows(), map.cols()) * map.pitch();
    if (R_guess <= std::sqrt(2.0) * half_w) throw DomainError("map wider than the sphere");
    Eigen::VectorXd p(4);
    p << R_guess, map.x(imax % map.cols()), map.y(imax / map.cols()), map.data()[imax] - R_guess;
    // Parameters are scaled to O(1): [R, x0, y0, z0 + R] relative to R_guess / pitch.
    const double s = map.pitch();
    Eigen::VectorXd q(4);
    q << p(0) / R_guess, p(1) / s, p(2) / s, (p(3) + p(0) - map.data()[imax]) / s;
    const double zref = map.data()[imax];
    auto unpack = [&](const Eigen::VectorXd& v) {
        const double R = v(0) * R_guess;
        return std::array<double, 4>{R, v(1) * s, v(2) * s, zref + v(3) * s - R};
    };
    auto residuals = [&](const Eigen::VectorXd& v) {
        const auto [R, x0, y0, z0] = unpack(v);
        Eigen::VectorXd res(static_cast<Eigen::Index>(rs.size()));
        for (std::size_t i = 0; i < rs.size(); ++i)
            res(static_cast<Eigen::Index>(i)) =
                (map(rs[i], cs[i]) - cap_height(map.x(cs[i]), map.y(rs[i]), R, x0, y0, z0)) / s;
        return res;
    };
    auto jacobian = [&](const Eigen::VectorXd& v) {
        const auto [R, x0, y0, z0] = unpack(v);
        Eigen::MatrixXd J(static_cast<Eigen::Index>(rs.size()), 4);
        for (std::size_t i = 0; i < rs.size(); ++i) {
            const double dx = map.x(cs[i]) - x0, dy = map.y(rs[i]) - y0;
            const double root = std::sqrt(std::max(R * R - dx * dx - dy * dy, 1e-300));
            const auto ii = static_cast<Eigen::Index>(i);
            // z = zref + v3 s - R + root(R); dz/dR = -1 + R/root
            J(ii, 0) = -(-1.0 + R / root) * R_guess / s;
            J(ii, 1) = -(dx / root);
            J(ii, 2) = -(dy / root);
            J(ii, 3) = -1.0;
        }
        return J;
    };
    num::LmOptions opt;
    opt.max_iterations = 100;
    const auto res = num::levenberg_marquardt(residuals, q, opt, jacobian);
    if (!res.converged)
        throw ConvergenceError("sphere fit did not converge", std::sqrt(res.chi2 / static_cast<double>(rs.size())) * s);
    const auto [R, x0, y0, z0] = unpack(res.params);
    SphereFit out;
    out.R = R;
    out.x0 = x0;
    out.y0 = y0;
    out.z0 = z0;
    out.residual = TopographyMap(map.rows(), map.cols(), map.pitch());
    double ss = 0.0;
    for (std::size_t r = 0; r < map.rows(); ++r)
        for (std::size_t c = 0; c < map.cols(); ++c) {
            const double v = map(r, c) - cap_height(map.x(c), map.y(r), R, x0, y0, z0);
            out.residual(r, c) = v;
            ss += v * v;
        }
    out.residual_rms = std::sqrt(ss / static_cast<double>(map.size()));
    return out;
}

// ---------------------------------------------------------- median filter

namespace detail {

class Fenwick {
public:
    explicit Fenwick(std::size_t n) : t_(n + 1, 0) {
        top_ = 1;
        while (top_ * 2 <= n) top_ *= 2;
    }
    void add(std::size_t i, int v) {
        for (++i; i < t_.size(); i += i & (~i + 1)) t_[i] += v;
    }
    /// Smallest index whose prefix count reaches k (1-based k).
    std::size_t kth(int k) const {
        std::size_t pos = 0;
        for (std::size_t step = top_; step > 0; step >>= 1) {
            if (pos + step < t_.size() && t_[pos + step] < k) {
                pos += step;
                k -= t_[pos];
            }
        }
        return pos;
    }

private:
    std::vector<int> t_;
    std::size_t top_;
};

// Reflect padding: -1 -> 0, -2 -> 1, n -> n-1 (edge pixel repeated).
inline std::size_t reflect(long i, long n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return static_cast<std::size_t>(i);
}

}  // namespace detail

/// Exact square median filter (window w x w, reflect padding). For even
/// windows the median is the mean of the two central order statistics.
inline TopographyMap median_filter(const TopographyMap& map, int w) {
    if (w < 1) throw DomainError("median window must be positive");
    const long R = static_cast<long>(map.rows()), C = static_cast<long>(map.cols());
    if (w > R || w > C) throw DomainError("median window larger than the map");
    const std::size_t n = map.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return map.data()[a] < map.data()[b] || (map.data()[a] == map.data()[b] && a < b);
    });
    std::vector<std::size_t> rank(n);
    for (std::size_t i = 0; i < n; ++i) rank[order[i]] = i;
    detail::Fenwick fw(n);
    const long lo = -(w / 2), hi = lo + w - 1;  // window offsets
    auto rk = [&](long r, long c) { return rank[detail::reflect(r, R) * map.cols() + detail::reflect(c, C)]; };
    const int count = w * w;
    auto median = [&]() {
        const std::size_t a = fw.kth((count + 1) / 2);
        if (count % 2 == 1) return map.data()[order[a]];
        const std::size_t b = fw.kth(count / 2 + 1);
        return 0.5 * (map.data()[order[a]] + map.data()[order[b]]);
    };
    TopographyMap out(map.rows(), map.cols(), map.pitch());
    // Initial window at (0, 0).
    for (long dr = lo; dr <= hi; ++dr)
        for (long dc = lo; dc <= hi; ++dc) fw.add(rk(dr, dc), 1);
    long c = 0;
    for (long r = 0; r < R; ++r) {
        if (r > 0) {  // move down one row at the current column
            for (long dc = lo; dc <= hi; ++dc) {
                fw.add(rk(r - 1 + lo, c + dc), -1);
                fw.add(rk(r + hi, c + dc), 1);
            }
        }
        const bool forward = r % 2 == 0;
        for (long step = 0; step < C; ++step) {
            if (step > 0) {
                const long nc = forward ? c + 1 : c - 1;
                const long drop = forward ? c + lo : c + hi;
                const long add = forward ? nc + hi : nc + lo;
                for (long dr = lo; dr <= hi; ++dr) {
                    fw.add(rk(r + dr, drop), -1);
                    fw.add(rk(r + dr, add), 1);
                }
                c = nc;
            }
            out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = median();
        }
    }
    return out;
}

/// Short-range roughness: residual minus its median-filtered long-range part.
inline TopographyMap separate_roughness(const TopographyMap& residual, int filter_px = 64) {
    const auto med = median_filter(residual, filter_px);
    TopographyMap out(residual.rows(), residual.cols(), residual.pitch());
    for (std::size_t i = 0; i < residual.size(); ++i) out.data()[i] = residual.data()[i] - med.data()[i];
    return out;
}

// ------------------------------------------------------------ POLS + PFA

struct PixelIndex {
    std::size_t row = 0, col = 0;
};

struct PolsEnsemble {
    std::vector<PixelIndex> points;
    std::size_t count() const { return points.size(); }
};

/// n x n lattice of POLS candidates centred on the map, spanning +- extent
/// pixels in each direction.
inline PolsEnsemble pols_lattice(const TopographyMap& map, int n = 7, double extent_px = 174.0) {
    if (n < 1) throw DomainError("lattice size must be positive");
    PolsEnsemble e;
    const double cr = 0.5 * static_cast<double>(map.rows() - 1), cc = 0.5 * static_cast<double>(map.cols() - 1);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double fi = n == 1 ? 0.0 : -1.0 + 2.0 * i / (n - 1);
            const double fj = n == 1 ? 0.0 : -1.0 + 2.0 * j / (n - 1);
            const double r = std::round(cr + fi * extent_px), c = std::round(cc + fj * extent_px);
            if (r < 0 || c < 0 || r >= static_cast<double>(map.rows()) || c >= static_cast<double>(map.cols()))
                throw DomainError("POLS lattice exceeds the map");
            e.points.push_back({static_cast<std::size_t>(r), static_cast<std::size_t>(c)});
        }
    return e;
}

/// Lattice extent in pixels corresponding to an orientation uncertainty.
inline double extent_px_for_angle(double R, double pitch, double angle_deg) {
    return R * constants::deg_to_rad(angle_deg) / pitch;
}

using PlateLaw = std::function<double(double)>;  // per-area quantity vs local gap h

/// Smooth-sphere PFA: 2 pi int_d^{d+R} (R + d - h) f(h) dh.
inline double smooth_sphere_pfa(const PlateLaw& f, double d, double R, int panels = 48) {
    const double L = std::log((d + R) / d);
    double total = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double a = L * p / panels, b = L * (p + 1) / panels;
        total += num::gauss_integrate(
            [&](double s) {
                const double h = d * std::exp(s);
                return (R + d - h) * f(h) * h;
            },
            a, b, 8);
    }
    return 2.0 * pi * total;
}

struct OrientedPfa {
    double smooth = 0.0;      // F_s
    double correction = 0.0;  // sum over pixels of A [f(h_s) - f(h_r)]
    double corrected = 0.0;   // F_r = F_s - correction
};

/// Pixel-wise PFA of a rough sphere whose point of least separation lies at
/// `pols`. Imaged pixels replace the smooth integrand; the rest of the
/// sphere keeps the smooth PFA. Roughness heights are referenced to their
/// median.
inline OrientedPfa oriented_pfa_force(const TopographyMap& rough, const PixelIndex& pols, double d, double R,
                                      const PlateLaw& f, double reference = NAN) {
    if (!(d > 0.0) || !(R > 0.0)) throw DomainError("oriented PFA needs d > 0 and R > 0");
    const double ref = std::isnan(reference) ? num::median(rough.data()) : reference;
    const double area = rough.pitch() * rough.pitch();
    const double pr = static_cast<double>(pols.row), pc = static_cast<double>(pols.col);
    double corr = 0.0;
    for (std::size_t r = 0; r < rough.rows(); ++r) {
        const double dy = (static_cast<double>(r) - pr) * rough.pitch();
        double row_sum = 0.0;
        for (std::size_t c = 0; c < rough.cols(); ++c) {
            const double dx = (static_cast<double>(c) - pc) * rough.pitch();
            const double rho2 = dx * dx + dy * dy;
            if (rho2 >= R * R) continue;
            const double hs = d + rho2 / (R + std::sqrt(R * R - rho2));  // d + R - sqrt(R^2 - rho^2)
            const double hr = hs - (rough(r, c) - ref);
            if (!(hr > 0.0)) throw ContactError(r, c, hr);
            row_sum += f(hs) - f(hr);
        }
        corr += row_sum;
    }
    OrientedPfa out;
    out.smooth = smooth_sphere_pfa(f, d, R);
    out.correction = area * corr;
    out.corrected = out.smooth - out.correction;
    return out;
}

/// Electrostatic gradient per area for unit voltage, eps0 / h^3.
inline double electrostatic_gradient_law(double h) { return constants::epsilon_0 / (h * h * h); }

/// Ideal Casimir gradient per area, d/dh of pi^2 hbar c / (240 h^4).
inline double casimir_gradient_law(double h) {
    return 4.0 * pi * pi * constants::hbar * constants::c / (240.0 * std::pow(h, 5));
}

/// Separation offset delta such that the rough-sphere curve follows the
/// smooth one evaluated at d - delta (scale left free), fitted over
/// [d_lo, d_hi].
inline double separation_offset(const TopographyMap& rough, const PixelIndex& pols, double R, const PlateLaw& f,
                                double d_lo = 50e-9, double d_hi = 1e-6, int points = 10) {
    const auto ds = num::logspace(d_lo, d_hi, static_cast<std::size_t>(points));
    const double ref = num::median(rough.data());
    std::vector<double> fr;
    for (double d : ds) fr.push_back(oriented_pfa_force(rough, pols, d, R, f, ref).corrected);
    auto residuals = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd res(points);
        for (int i = 0; i < points; ++i) {
            const double model = p(0) * smooth_sphere_pfa(f, ds[static_cast<std::size_t>(i)] - p(1) * 1e-9, R, 24);
            res(i) = (fr[static_cast<std::size_t>(i)] - model) / fr[static_cast<std::size_t>(i)];
        }
        return res;
    };
    Eigen::VectorXd p0(2);
    p0 << 1.0, 0.0;
    num::LmOptions opt;
    opt.max_iterations = 50;
    const auto res = num::levenberg_marquardt(residuals, p0, opt);
    return res.params(1) * 1e-9;
}

struct RoughnessAnalysis {
    SphereFit fit;
    TopographyMap rough;
    PolsEnsemble pols;
    std::vector<double> offsets;  // electrostatic separation offset per POLS, m
};

/// Full chain: sphere fit, median-filter separation, POLS lattice with the
/// given angular spacing, electrostatic offset per POLS.
inline RoughnessAnalysis analyze_topography(const TopographyMap& map, double R_guess, int filter_px = 64,
                                            int lattice = 7, double spacing_deg = 1.0) {
    RoughnessAnalysis a;
    a.fit = remove_sphere_fit(map, R_guess);
    a.rough = separate_roughness(a.fit.residual, filter_px);
    const double extent = extent_px_for_angle(a.fit.R, map.pitch(), spacing_deg * 0.5 * (lattice - 1));
    a.pols = pols_lattice(a.rough, lattice, extent);
    for (const auto& p : a.pols.points)
        a.offsets.push_back(separation_offset(a.rough, p, a.fit.R, electrostatic_gradient_law));
    return a;
}

struct EnsembleStats {
    double central = 0.0;  // median
    double lo = 0.0, hi = 0.0;  // shortest interval holding ceil(0.68 n) members
    double stddev = 0.0;
};

inline EnsembleStats ensemble_stats(std::vector<double> v, double coverage = 0.68) {
    if (v.size() < 2) throw DataError("ensemble statistics need >= 2 members");
    EnsembleStats s;
    s.stddev = num::stddev(v);
    std::sort(v.begin(), v.end());
    s.central = num::median(v);
    const auto m = static_cast<std::size_t>(std::ceil(coverage * static_cast<double>(v.size())));
    double best = INFINITY;
    for (std::size_t i = 0; i + m <= v.size(); ++i) {
        const double w = v[i + m - 1] - v[i];
        if (w < best) {
            best = w;
            s.lo = v[i];
            s.hi = v[i + m - 1];
        }
    }
    return s;
}

/// Evenly spaced subset of ensemble indices, e.g. 16 of 49 for display.
inline std::vector<std::size_t> select_subset(std::size_t total, std::size_t n) {
    if (n > total) throw DomainError("subset larger than ensemble");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(n == 1 ? 0 : static_cast<std::size_t>(std::llround(static_cast<double>(i) * (total - 1) / (n - 1))));
    return out;
}

struct Roundness {
    double mean_radius = 0.0;
    double stddev = 0.0;
    double relative = 0.0;
};

/// Radius statistics of a perimeter profile (columns theta_rad, radius_m).
inline Roundness roundness(const io::CsvTable& t) {
    const auto r = t.column_values("radius_m");
    Roundness out;
    out.mean_radius = num::mean(r);
    out.stddev = num::stddev(r);
    out.relative = out.stddev / out.mean_radius;
    return out;
}

// ------------------------------------------------------- synthetic map

struct SyntheticMapConfig {
    std::size_t n = 512;
    double pitch = 10e-9;
    double R = 33.2e-6;
    double distortion_amplitude = 4e-9;  // long-range shape error
    double distortion_wavelength = 4e-6;
    double roughness_rms = 1.0e-9;       // correlated Gaussian component
    double correlation_length = 25e-9;
    int grains = 300;                     // skewed asperities
    double grain_height = 8e-9;          // mean of exponential heights
    double grain_height_cap = 3.0;        // heights truncated at this multiple of the mean
    double grain_radius = 40e-9;
    double grain_cluster_wavelength = 2e-6;  // grain density modulation
    double grain_cluster_depth = 1.0;        // 0 = uniform density
    std::uint64_t seed = 33201;
};

/// Deterministic rough spherical cap (splitmix64 + Box-Muller, no
/// implementation-defined distributions).
inline TopographyMap synthetic_sphere_map(const SyntheticMapConfig& cfg = {}) {
    std::uint64_t state = cfg.seed;
    auto next = [&]() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    };
    auto uniform = [&]() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; };
    auto gauss = [&]() { return std::sqrt(-2.0 * std::log(uniform())) * std::cos(2.0 * pi * uniform()); };
    const std::size_t n = cfg.n;
    TopographyMap m(n, n, cfg.pitch);
    // Correlated roughness: white noise smoothed by a separable Gaussian.
    std::vector<double> white(n * n), tmp(n * n, 0.0);
    for (auto& v : white) v = gauss();
    const double sig = cfg.correlation_length / cfg.pitch;
    const int half = static_cast<int>(std::ceil(3.0 * sig));
    std::vector<double> kern(static_cast<std::size_t>(2 * half + 1));
    for (int i = -half; i <= half; ++i) kern[static_cast<std::size_t>(i + half)] = std::exp(-0.5 * i * i / (sig * sig));
    const long N = static_cast<long>(n);
    for (long r = 0; r < N; ++r)
        for (long c = 0; c < N; ++c) {
            double s = 0.0;
            for (int k = -half; k <= half; ++k)
                s += kern[static_cast<std::size_t>(k + half)] * white[static_cast<std::size_t>(r * N) + detail::reflect(c + k, N)];
            tmp[static_cast<std::size_t>(r * N + c)] = s;
        }
    std::vector<double> rough(n * n, 0.0);
    for (long r = 0; r < N; ++r)
        for (long c = 0; c < N; ++c) {
            double s = 0.0;
            for (int k = -half; k <= half; ++k)
                s += kern[static_cast<std::size_t>(k + half)] * tmp[detail::reflect(r + k, N) * n + static_cast<std::size_t>(c)];
            rough[static_cast<std::size_t>(r * N + c)] = s;
        }
    double ss = 0.0;
    for (double v : rough) ss += v * v;
    const double scale = cfg.roughness_rms / std::sqrt(ss / static_cast<double>(n * n));
    for (auto& v : rough) v *= scale;
    // Grains: Gaussian bumps with exponentially distributed heights.
    const double gr = cfg.grain_radius / cfg.pitch;
    const int gh = static_cast<int>(std::ceil(3.0 * gr));
    const double kc = 2.0 * pi * cfg.pitch / cfg.grain_cluster_wavelength;
    const double pc1 = 2.0 * pi * uniform(), pc2 = 2.0 * pi * uniform();
    for (int g = 0; g < cfg.grains;) {
        const double cr = uniform() * static_cast<double>(n), cc = uniform() * static_cast<double>(n);
        const double density = 0.5 * (1.0 + std::sin(kc * cc + pc1) * std::sin(0.8 * kc * cr + pc2));
        if (uniform() > 1.0 - cfg.grain_cluster_depth * (1.0 - density)) continue;
        ++g;
        const double height = std::min(-cfg.grain_height * std::log(uniform()), cfg.grain_height_cap * cfg.grain_height);
        const double rad = gr * (0.6 + 0.8 * uniform());
        for (int dr = -gh; dr <= gh; ++dr)
            for (int dc = -gh; dc <= gh; ++dc) {
                const long r = static_cast<long>(cr) + dr, c = static_cast<long>(cc) + dc;
                if (r < 0 || c < 0 || r >= N || c >= N) continue;
                const double x = (static_cast<double>(c) - cc) / rad, y = (static_cast<double>(r) - cr) / rad;
                rough[static_cast<std::size_t>(r * N + c)] += height * std::exp(-0.5 * (x * x + y * y));
            }
    }
    const double ph1 = 2.0 * pi * uniform(), ph2 = 2.0 * pi * uniform();
    const double kx = 2.0 * pi / cfg.distortion_wavelength;
    const double hw2 = 0.25 * static_cast<double>(n * n) * cfg.pitch * cfg.pitch;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            const double x = m.x(c), y = m.y(r);
            const double cap = std::sqrt(cfg.R * cfg.R - x * x - y * y) - cfg.R;
            const double distortion = cfg.distortion_amplitude *
                                      (std::sin(kx * x + ph1) * std::cos(0.7 * kx * y + ph2) + 0.5 * x * y / hw2);
            m(r, c) = cap + distortion + rough[r * n + c];
        }
    return m;
}

}  // namespace fomlab::roughness
