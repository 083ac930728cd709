#pragma once

// Maxwellian velocity averaging. The conjugate amplitude is averaged
// coherently (amplitude first, modulus squared after), matching a thin medium
// whose atoms radiate into the same phase-matched mode.
//
// Three node layouts:
//   gauss_hermite     - classic Gauss-Hermite rule for weight exp(-v^2)
//   uniform_trapezoid - equidistant nodes on [-5u, 5u], trapezoid weights
//                       times the Maxwellian
//   resonance_adapted - panel rule that places tan-mapped clusters on the
//                       velocity classes resonant with any beam. The solver
//                       response has Lorentzian structure of width ~gamma/ku
//                       (a few 1e-2 u against ku ~ 43), which the first two
//                       rules cannot resolve at practical node counts; scan
//                       drivers use this layout by default.

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "fwm/exec.hpp"
#include "fwm/floquet.hpp"
#include "fwm/model.hpp"

namespace fwm {

enum class GridScheme { gauss_hermite, uniform_trapezoid, resonance_adapted };

inline const char* to_string(GridScheme s) {
    switch (s) {
        case GridScheme::gauss_hermite: return "gauss-hermite";
        case GridScheme::uniform_trapezoid: return "uniform-trapezoid";
        case GridScheme::resonance_adapted: return "resonance-adapted";
    }
    return "?";
}

struct VelocityGrid {
    std::vector<double> nodes;    // units of the most probable speed u
    std::vector<double> weights;  // Maxwellian-weighted, sum to 1
    GridScheme scheme = GridScheme::gauss_hermite;
};

namespace detail {

// Golub-Welsch nodes/weights for a symmetric weight; off-diagonal recurrence
// coefficients are supplied by the caller.
inline void golub_welsch(const std::vector<double>& offdiag, std::vector<double>& nodes,
                         std::vector<double>& weights) {
    const int n = static_cast<int>(offdiag.size()) + 1;
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k + 1 < n; ++k) {
        j(k, k + 1) = offdiag[static_cast<std::size_t>(k)];
        j(k + 1, k) = offdiag[static_cast<std::size_t>(k)];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
    nodes.resize(static_cast<std::size_t>(n));
    weights.resize(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        nodes[static_cast<std::size_t>(k)] = es.eigenvalues()[k];
        const double v0 = es.eigenvectors()(0, k);
        weights[static_cast<std::size_t>(k)] = v0 * v0;
    }
}

inline void gauss_hermite_rule(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    std::vector<double> off(static_cast<std::size_t>(n - 1));
    for (int k = 1; k < n; ++k) off[static_cast<std::size_t>(k - 1)] = std::sqrt(0.5 * k);
    golub_welsch(off, nodes, weights);
    // enforce exact +-pair symmetry against eigensolver roundoff
    for (int i = 0, j = n - 1; i < j; ++i, --j) {
        const double x = 0.5 * (nodes[static_cast<std::size_t>(j)] - nodes[static_cast<std::size_t>(i)]);
        nodes[static_cast<std::size_t>(i)] = -x;
        nodes[static_cast<std::size_t>(j)] = x;
        const double w =
            0.5 * (weights[static_cast<std::size_t>(i)] + weights[static_cast<std::size_t>(j)]);
        weights[static_cast<std::size_t>(i)] = w;
        weights[static_cast<std::size_t>(j)] = w;
    }
    if (n % 2 == 1) nodes[static_cast<std::size_t>(n / 2)] = 0.0;
}

// Legendre rule on [-1, 1]; golub_welsch returns squared first components
// summing to 1, scaled here by the interval measure.
inline void gauss_legendre_rule(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    if (n == 1) {
        nodes = {0.0};
        weights = {2.0};
        return;
    }
    std::vector<double> off(static_cast<std::size_t>(n - 1));
    for (int k = 1; k < n; ++k)
        off[static_cast<std::size_t>(k - 1)] = k / std::sqrt(4.0 * k * k - 1.0);
    golub_welsch(off, nodes, weights);
    for (auto& w : weights) w *= 2.0;
    for (int i = 0, j = n - 1; i < j; ++i, --j) {  // exact +- pairs
        const double x = 0.5 * (nodes[static_cast<std::size_t>(j)] - nodes[static_cast<std::size_t>(i)]);
        nodes[static_cast<std::size_t>(i)] = -x;
        nodes[static_cast<std::size_t>(j)] = x;
        const double w =
            0.5 * (weights[static_cast<std::size_t>(i)] + weights[static_cast<std::size_t>(j)]);
        weights[static_cast<std::size_t>(i)] = w;
        weights[static_cast<std::size_t>(j)] = w;
    }
    if (n % 2 == 1) nodes[static_cast<std::size_t>(n / 2)] = 0.0;
}

}  // namespace detail

inline void normalize_weights(VelocityGrid& grid) {
    double s = 0.0;
    for (double w : grid.weights) s += w;
    if (s <= 0.0) throw std::runtime_error("velocity grid has nonpositive total weight");
    for (double& w : grid.weights) w /= s;
}

// Gauss-Hermite or uniform-trapezoid grid for the Maxwellian f(v) ~ exp(-v^2).
inline VelocityGrid build_grid(const DopplerParams& params,
                               GridScheme scheme = GridScheme::gauss_hermite) {
    if (params.n_nodes < 1 || params.n_nodes % 2 == 0)
        throw ConfigError("doppler.n_nodes must be an odd positive integer");
    const int n = params.n_nodes;
    VelocityGrid grid;
    grid.scheme = scheme;
    if (n == 1) {
        grid.nodes = {0.0};
        grid.weights = {1.0};
        return grid;
    }
    switch (scheme) {
        case GridScheme::gauss_hermite:
            detail::gauss_hermite_rule(n, grid.nodes, grid.weights);
            break;
        case GridScheme::uniform_trapezoid: {
            const double span = 5.0;
            const double h = 2.0 * span / (n - 1);
            const int mid = (n - 1) / 2;
            grid.nodes.resize(static_cast<std::size_t>(n));
            grid.weights.resize(static_cast<std::size_t>(n));
            for (int k = 0; k < n; ++k) {
                const double v = (k - mid) * h;
                grid.nodes[static_cast<std::size_t>(k)] = v;
                const double trap = (k == 0 || k == n - 1) ? 0.5 : 1.0;
                grid.weights[static_cast<std::size_t>(k)] = trap * std::exp(-v * v);
            }
            break;
        }
        case GridScheme::resonance_adapted:
            throw ConfigError("resonance-adapted grids carry scan state; use "
                              "build_adapted_grid(config, n_nodes)");
    }
    normalize_weights(grid);
    return grid;
}

namespace detail {

// Gauss-Legendre panels for [lo, hi] mapped through v = c + w sinh(s).
// The map is linear at scale w near c and exponential farther out, so
// Lorentzian-like structure of any half-width >= w costs the same few nodes
// per decade, and the smooth Maxwellian envelope is handled by the same
// panels. The s-interval is cut into subpanels of length ~1.7 with m points
// each. With nd == nullptr nothing is emitted and the call just reports the
// subpanel count (used to budget m against a requested node total).
inline int sinh_panel(double lo, double hi, double c, double w, int m,
                      std::vector<double>* nd, std::vector<double>* wt) {
    if (m < 1 || hi <= lo) return 0;
    const double s_lo = std::asinh((lo - c) / w);
    const double s_hi = std::asinh((hi - c) / w);
    const double mid = 0.5 * (s_lo + s_hi);
    const double half = 0.5 * (s_hi - s_lo);
    int p = std::max(1, static_cast<int>(std::ceil((s_hi - s_lo) / 2.2)));
    if (mid == 0.0 && p % 2 == 0) ++p;  // odd subpanel count keeps v = c as a node
    if (!nd) return p;

    std::vector<double> x, gw;
    gauss_legendre_rule(m, x, gw);
    // subpanel boundaries as exact +- pairs in the scaled coordinate, so a
    // symmetric interval yields a node set equal to its own reflection
    std::vector<double> frac(static_cast<std::size_t>(p) + 1);
    for (int k = 0; 2 * k <= p; ++k) {
        const double t = 2.0 * k / p - 1.0;
        frac[static_cast<std::size_t>(k)] = t;
        frac[static_cast<std::size_t>(p - k)] = -t;
    }
    for (int seg = 0; seg < p; ++seg) {
        const double a = mid + half * frac[static_cast<std::size_t>(seg)];
        const double b = mid + half * frac[static_cast<std::size_t>(seg) + 1];
        for (int q = 0; q < m; ++q) {
            const double sv = 0.5 * (a + b) + 0.5 * (b - a) * x[static_cast<std::size_t>(q)];
            nd->push_back(c + w * std::sinh(sv));
            wt->push_back(0.5 * (b - a) * gw[static_cast<std::size_t>(q)] * w * std::cosh(sv));
        }
    }
    return p;
}

// Plain Gauss-Legendre panels (subpanel length ~0.8, the Maxwellian scale)
// for the smooth regions between and beyond resonance clusters.
inline int linear_panel(double lo, double hi, int m, std::vector<double>* nd,
                        std::vector<double>* wt) {
    if (m < 1 || hi - lo < 1e-12) return 0;
    const int p = std::max(1, static_cast<int>(std::ceil((hi - lo) / 1.1)));
    if (!nd) return p;
    std::vector<double> x, gw;
    gauss_legendre_rule(m, x, gw);
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    std::vector<double> frac(static_cast<std::size_t>(p) + 1);
    for (int k = 0; 2 * k <= p; ++k) {
        const double t = 2.0 * k / p - 1.0;
        frac[static_cast<std::size_t>(k)] = t;
        frac[static_cast<std::size_t>(p - k)] = -t;
    }
    for (int seg = 0; seg < p; ++seg) {
        const double a = mid + half * frac[static_cast<std::size_t>(seg)];
        const double b = mid + half * frac[static_cast<std::size_t>(seg) + 1];
        for (int q = 0; q < m; ++q) {
            nd->push_back(0.5 * (a + b) + 0.5 * (b - a) * x[static_cast<std::size_t>(q)]);
            wt->push_back(0.5 * (b - a) * gw[static_cast<std::size_t>(q)]);
        }
    }
    return p;
}

}  // namespace detail

// Velocity classes resonant with any active beam, plus v = 0; the set is
// symmetrized so the grid equals its own reflection.
inline std::vector<double> resonant_velocities(const ModelConfig& cfg) {
    std::vector<double> centers = {0.0};
    const double ku = cfg.doppler.ku;
    if (ku > 0.0) {
        auto add = [&](double rabi, double omega, int dir) {
            if (rabi <= 0.0) return;
            for (double lvl : {cfg.levels.omega_c, cfg.levels.omega_d}) {
                const double v = dir * (omega - lvl) / ku;
                centers.push_back(v);
                centers.push_back(-v);
            }
        };
        add(cfg.fields.rabi_F, cfg.fields.omega_F, cfg.fields.dir_F);
        add(cfg.fields.rabi_B, cfg.fields.omega_B, cfg.fields.dir_B);
        add(cfg.fields.rabi_P, cfg.fields.omega_P, cfg.fields.dir_P);
    }
    std::sort(centers.begin(), centers.end());
    std::vector<double> out;
    for (double c : centers)
        if (out.empty() || c - out.back() > 1e-9) out.push_back(c);
    return out;
}

// Classes where two counterpropagating beams are two-photon resonant. The
// ground-coherence response there is only gamma_g wide, orders of magnitude
// narrower than the optical features.
inline std::vector<double> raman_velocities(const ModelConfig& cfg) {
    std::vector<double> centers;
    const double ku = cfg.doppler.ku;
    if (ku > 0.0) {
        auto add = [&](double rabi1, double omega1, int dir1, double rabi2, double omega2,
                       int dir2) {
            if (rabi1 <= 0.0 || rabi2 <= 0.0 || dir1 == dir2) return;
            const double v = (omega1 - omega2) / (ku * (dir1 - dir2));
            centers.push_back(v);
            centers.push_back(-v);
        };
        const auto& f = cfg.fields;
        add(f.rabi_F, f.omega_F, f.dir_F, f.rabi_B, f.omega_B, f.dir_B);
        add(f.rabi_P, f.omega_P, f.dir_P, f.rabi_B, f.omega_B, f.dir_B);
    }
    std::sort(centers.begin(), centers.end());
    std::vector<double> out;
    for (double c : centers)
        if (out.empty() || c - out.back() > 1e-9) out.push_back(c);
    return out;
}

// Composite panel grid: one segment per resonant class (segment boundaries
// at midpoints between classes), each covered by sinh-mapped Gauss-Legendre
// panels centered on the class. Segments holding a two-photon-resonant class
// use the gamma_g-scale map minimum (and off-center two-photon classes get
// dedicated carved panels). Built symmetric: the v < 0 half mirrors the
// v > 0 half exactly, so the node set equals its own reflection.
inline VelocityGrid build_adapted_grid(const ModelConfig& cfg, int n_nodes) {
    if (n_nodes < 1 || n_nodes % 2 == 0)
        throw ConfigError("doppler.n_nodes must be an odd positive integer");
    VelocityGrid grid;
    grid.scheme = GridScheme::resonance_adapted;
    if (n_nodes == 1 || cfg.doppler.ku == 0.0) {
        grid.nodes = {0.0};
        grid.weights = {1.0};
        return grid;
    }

    const double vmax = 5.0;
    std::vector<double> centers;
    for (double c : resonant_velocities(cfg))
        if (std::abs(c) < vmax - 0.05) centers.push_back(c);
    if (centers.empty()) centers.push_back(0.0);
    const std::vector<double> fine_centers = raman_velocities(cfg);

    const double ku = cfg.doppler.ku;
    const auto& fl = cfg.fields;
    const double rabi2 = fl.rabi_F * fl.rabi_F + fl.rabi_B * fl.rabi_B + fl.rabi_P * fl.rabi_P;
    const double width =
        std::max(0.5 * cfg.relaxation.gamma_e + fl.rabi_F + fl.rabi_B,
                 0.25 * cfg.relaxation.gamma_e) /
        ku;
    const double fine_width =
        (cfg.relaxation.gamma_g + cfg.relaxation.transit_feed + rabi2 / cfg.relaxation.gamma_e) /
        (2.0 * ku);

    const int k_total = static_cast<int>(centers.size());  // odd, symmetric set
    const int j_pos = k_total / 2;                          // centers above zero

    std::vector<double> mids(static_cast<std::size_t>(k_total) - 1);
    for (int k = 0; k + 1 < k_total; ++k)
        mids[static_cast<std::size_t>(k)] =
            0.5 * (centers[static_cast<std::size_t>(k)] + centers[static_cast<std::size_t>(k + 1)]);

    struct PanelJob {
        double lo, hi, c, w;  // w <= 0: plain panels for smooth regions
    };
    auto segment_jobs = [&](double lo, double hi, double c, std::vector<PanelJob>& jobs) {
        const double reach = 60.0 * width;  // beyond this the response is tail-smooth
        const double r_lo = c - lo > reach ? c - reach : lo;
        const double r_hi = hi - c > reach ? c + reach : hi;
        double w_cluster = width;
        std::vector<std::pair<double, double>> carve;
        for (double cf : fine_centers) {
            if (cf <= r_lo || cf >= r_hi) continue;
            if (std::abs(cf - c) <= 4.0 * fine_width) {
                w_cluster = std::min(w_cluster, fine_width);
                continue;  // the cluster map itself resolves it
            }
            const double r2 =
                std::min({60.0 * fine_width, 0.02 * (r_hi - r_lo), 0.5 * std::abs(cf - c)});
            carve.emplace_back(cf - r2, cf + r2);
        }
        std::sort(carve.begin(), carve.end());
        for (std::size_t q = 0; q + 1 < carve.size();) {  // merge overlaps
            if (carve[q].second >= carve[q + 1].first) {
                carve[q].second = std::max(carve[q].second, carve[q + 1].second);
                carve.erase(carve.begin() + static_cast<std::ptrdiff_t>(q) + 1);
            } else {
                ++q;
            }
        }
        if (r_lo > lo) jobs.push_back({lo, r_lo, 0.0, 0.0});
        double cursor = r_lo;
        for (const auto& [f_lo, f_hi] : carve) {
            jobs.push_back({cursor, f_lo, c, w_cluster});
            jobs.push_back({f_lo, f_hi, 0.5 * (f_lo + f_hi), fine_width});
            cursor = f_hi;
        }
        jobs.push_back({cursor, r_hi, c, w_cluster});
        if (r_hi < hi) jobs.push_back({r_hi, hi, 0.0, 0.0});
    };

    std::vector<PanelJob> jobs_center, jobs_pos;
    {
        const double hi = j_pos + 1 <= k_total - 1 ? mids[static_cast<std::size_t>(j_pos)] : vmax;
        segment_jobs(-hi, hi, 0.0, jobs_center);
    }
    for (int k = j_pos + 1; k < k_total; ++k) {
        const double lo = mids[static_cast<std::size_t>(k - 1)];
        const double hi = k == k_total - 1 ? vmax : mids[static_cast<std::size_t>(k)];
        segment_jobs(lo, hi, centers[static_cast<std::size_t>(k)], jobs_pos);
    }

    auto run_panel = [](const auto& j, int m, std::vector<double>* nd, std::vector<double>* wt) {
        return j.w > 0.0 ? detail::sinh_panel(j.lo, j.hi, j.c, j.w, m, nd, wt)
                         : detail::linear_panel(j.lo, j.hi, m, nd, wt);
    };
    int subpanels = 0;
    for (const auto& j : jobs_center) subpanels += run_panel(j, 1, nullptr, nullptr);
    for (const auto& j : jobs_pos) subpanels += 2 * run_panel(j, 1, nullptr, nullptr);
    const int m =
        std::clamp(static_cast<int>(std::llround(static_cast<double>(n_nodes) / subpanels)), 3,
                   30) |
        1;

    std::vector<double> nodes, weights, pos_nodes, pos_weights;
    for (const auto& j : jobs_center) run_panel(j, m, &nodes, &weights);
    for (const auto& j : jobs_pos) run_panel(j, m, &pos_nodes, &pos_weights);
    for (std::size_t q = 0; q < pos_nodes.size(); ++q) {
        nodes.push_back(pos_nodes[q]);
        weights.push_back(pos_weights[q]);
        nodes.push_back(-pos_nodes[q]);
        weights.push_back(pos_weights[q]);
    }

    grid.nodes.resize(nodes.size());
    grid.weights.resize(nodes.size());
    std::vector<std::size_t> order(nodes.size());
    for (std::size_t q = 0; q < order.size(); ++q) order[q] = q;
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return nodes[x] < nodes[y]; });
    for (std::size_t q = 0; q < order.size(); ++q) {
        grid.nodes[q] = nodes[order[q]];
        grid.weights[q] = weights[order[q]] * std::exp(-grid.nodes[q] * grid.nodes[q]);
    }
    normalize_weights(grid);
    return grid;
}

// Conjugate amplitude of one velocity class.
inline cxd single_velocity_conjugate_amplitude(const ModelConfig& cfg, double v) {
    const AtomicFrequencies at = to_atomic_frame(cfg.fields, v, cfg.doppler.ku);
    return conjugate_amplitude_at(cfg, at);
}

// Maxwellian-weighted coherent average of the conjugate amplitude. Nodes are
// evaluated concurrently; the weighted reduction always runs in ascending
// node-index order, so results do not depend on the worker count. The
// incoherent variant (average of |A|^2, returned as its square root) exists
// for comparison only.
inline cxd averaged_conjugate_amplitude(const ModelConfig& cfg, const VelocityGrid& grid,
                                        const ExecPolicy& exec = {}, bool coherent = true) {
    std::vector<cxd> amp(grid.nodes.size());
    std::vector<std::string> failure(grid.nodes.size());
    parallel_for(grid.nodes.size(), exec, [&](std::size_t k) {
        try {
            amp[k] = single_velocity_conjugate_amplitude(cfg, grid.nodes[k]);
        } catch (const std::exception& e) {
            throw SolverError("velocity node " + std::to_string(k) + " (v = " +
                              std::to_string(grid.nodes[k]) + "): " + e.what());
        }
    });
    if (coherent) {
        cxd sum(0.0);
        for (std::size_t k = 0; k < amp.size(); ++k) sum += grid.weights[k] * amp[k];
        return sum;
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < amp.size(); ++k) sum += grid.weights[k] * std::norm(amp[k]);
    return cxd(std::sqrt(sum), 0.0);
}

}  // namespace fwm
