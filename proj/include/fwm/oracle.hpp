#pragma once

// Brute-force validator for the harmonic solver: direct fixed-step RK4
// integration of the full Bloch equations at one velocity, with all field
// phase factors kept explicitly (no perturbative split, no truncation), and
// demodulation of the resulting quasi-periodic steady state at chosen
// harmonic frequencies. Everything here is deliberately independent of the
// machinery in floquet.hpp.

#include <cmath>
#include <complex>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "fwm/floquet.hpp"
#include "fwm/model.hpp"

namespace fwm {

struct OracleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TimeEvolution {
    std::vector<double> times;            // sample instants, transient removed
    std::vector<Eigen::Matrix4cd> rho;    // full density matrix per instant
    double dt = 0.0;                      // sample period
    double dt_step = 0.0;                 // integrator step
    AtomicFrequencies freqs;              // atomic-frame frequencies used
};

namespace detail {

inline Eigen::Matrix4cd bloch_rhs(const Eigen::Matrix4cd& rho, double t,
                                  const ModelConfig& cfg, const AtomicFrequencies& at) {
    const double ge = cfg.relaxation.gamma_e;
    const double feed = cfg.relaxation.branching * ge;
    const double gg = cfg.relaxation.gamma_g;
    const double tf = cfg.relaxation.transit_feed;
    const double sbc = cfg.levels.sign_bc;
    const double sbd = cfg.levels.sign_bd;

    Eigen::Matrix4cd h = Eigen::Matrix4cd::Zero();
    h(level_c, level_c) = cfg.levels.omega_c;
    h(level_d, level_d) = cfg.levels.omega_d;

    const cxd ef = 0.5 * cfg.fields.rabi_F * std::polar(1.0, at.f * t);
    h(level_a, level_c) += ef;
    h(level_a, level_d) += ef;
    const cxd eb = 0.5 * cfg.fields.rabi_B * std::polar(1.0, at.b * t);
    h(level_b, level_c) += sbc * eb;
    h(level_b, level_d) += sbd * eb;
    const cxd ep = 0.5 * cfg.fields.rabi_P * std::polar(1.0, at.p * t);
    h(level_b, level_c) += sbc * ep;
    h(level_b, level_d) += sbd * ep;
    h(level_c, level_a) = std::conj(h(level_a, level_c));
    h(level_d, level_a) = std::conj(h(level_a, level_d));
    h(level_c, level_b) = std::conj(h(level_b, level_c));
    h(level_d, level_b) = std::conj(h(level_b, level_d));

    Eigen::Matrix4cd out = cxd(0.0, -1.0) * (h * rho - rho * h);

    const cxd exc = rho(level_c, level_c) + rho(level_d, level_d);
    out(level_a, level_a) += feed * exc +
                             0.5 * tf * (rho(level_b, level_b) - rho(level_a, level_a));
    out(level_b, level_b) += feed * exc +
                             0.5 * tf * (rho(level_a, level_a) - rho(level_b, level_b));
    out(level_c, level_c) -= ge * rho(level_c, level_c);
    out(level_d, level_d) -= ge * rho(level_d, level_d);
    out(level_a, level_b) -= gg * rho(level_a, level_b);
    out(level_b, level_a) -= gg * rho(level_b, level_a);
    for (int g : {level_a, level_b})
        for (int e : {level_c, level_d}) {
            out(g, e) -= 0.5 * ge * rho(g, e);
            out(e, g) -= 0.5 * ge * rho(e, g);
        }
    out(level_c, level_d) -= ge * rho(level_c, level_d);
    out(level_d, level_c) -= ge * rho(level_d, level_c);
    return out;
}

}  // namespace detail

// Integrates from the zero-field equilibrium (equal ground populations) and
// keeps the second half of the trajectory, decimated by sample_stride.
// Throws when the accumulated trace drift exceeds 1e-6 (step too coarse).
inline TimeEvolution integrate_time_domain(const ModelConfig& cfg, double v, double t_final,
                                           double dt, int sample_stride = 1) {
    if (dt <= 0.0 || t_final <= 0.0) throw OracleError("t_final and dt must be positive");
    if (sample_stride < 1) throw OracleError("sample_stride must be >= 1");

    const AtomicFrequencies at = to_atomic_frame(cfg.fields, v, cfg.doppler.ku);
    const auto n_steps = static_cast<long long>(std::llround(t_final / dt));

    Eigen::Matrix4cd rho = Eigen::Matrix4cd::Zero();
    rho(level_a, level_a) = 0.5;
    rho(level_b, level_b) = 0.5;

    TimeEvolution evo;
    evo.dt = dt * sample_stride;
    evo.dt_step = dt;
    evo.freqs = at;
    const long long keep_from = n_steps / 2;
    evo.times.reserve(static_cast<std::size_t>((n_steps - keep_from) / sample_stride + 2));
    evo.rho.reserve(evo.times.capacity());

    for (long long step = 0; step <= n_steps; ++step) {
        const double t = step * dt;
        if (step >= keep_from && (step - keep_from) % sample_stride == 0) {
            const double drift = std::abs(rho.trace().real() - 1.0) + std::abs(rho.trace().imag());
            if (drift > 1e-6)
                throw OracleError("step-size stability violation: trace drift " +
                                  std::to_string(drift));
            evo.times.push_back(t);
            evo.rho.push_back(rho);
        }
        if (step == n_steps) break;

        const Eigen::Matrix4cd k1 = detail::bloch_rhs(rho, t, cfg, at);
        const Eigen::Matrix4cd k2 = detail::bloch_rhs(rho + 0.5 * dt * k1, t + 0.5 * dt, cfg, at);
        const Eigen::Matrix4cd k3 = detail::bloch_rhs(rho + 0.5 * dt * k2, t + 0.5 * dt, cfg, at);
        const Eigen::Matrix4cd k4 = detail::bloch_rhs(rho + dt * k3, t + dt, cfg, at);
        rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return evo;
}

// Harmonic coefficient by direct projection:
//   (1/M) sum_n rho_ij(t_n) exp(-i f t_n),  f = a wF + b wB + c wP.
//
// The sum runs over an integer number of periods of base_freq (pass the
// fundamental frequency spacing of the configuration for exact tone
// separation on commensurate lattices); with base_freq = 0 the demodulation
// frequency itself sets the window.
inline cxd demodulate(const TimeEvolution& evo, Level i, Level j, const HarmonicIndex& h,
                      const AtomicFrequencies& at, double base_freq = 0.0) {
    if (evo.times.size() < 2) throw OracleError("trajectory too short to demodulate");
    const double f = h.a * at.f + h.b * at.b + h.c * at.p;
    const double dt = evo.dt;
    if (std::abs(f) * dt > 3.0)
        throw OracleError("sample period too coarse for demodulation frequency (aliasing)");

    std::size_t m_used = evo.times.size();
    const double window_base = base_freq != 0.0 ? std::abs(base_freq) : std::abs(f);
    if (window_base > 0.0) {
        const double period = 2.0 * M_PI / window_base;
        const double per_samples = period / dt;
        const double total = static_cast<double>(m_used);
        const double n_periods = std::floor(total / per_samples);
        if (n_periods < 1.0)
            throw OracleError("demodulation window shorter than one beat period");
        m_used = static_cast<std::size_t>(std::llround(n_periods * per_samples));
        if (m_used > evo.times.size()) m_used = evo.times.size();
    }

    cxd acc(0.0, 0.0);
    for (std::size_t n = 0; n < m_used; ++n)
        acc += evo.rho[n](i, j) * std::polar(1.0, -f * evo.times[n]);
    return acc / static_cast<double>(m_used);
}

// Trajectory dump: t followed by re/im of all 16 elements, row-major.
inline void write_trajectory_csv(const TimeEvolution& evo, std::ostream& os) {
    os << "t";
    const char* names = "abcd";
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            os << ",re_rho_" << names[i] << names[j] << ",im_rho_" << names[i] << names[j];
    os << "\n";
    char buf[32];
    for (std::size_t n = 0; n < evo.times.size(); ++n) {
        std::snprintf(buf, sizeof(buf), "%.12g", evo.times[n]);
        os << buf;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                const cxd v = evo.rho[n](i, j);
                std::snprintf(buf, sizeof(buf), ",%.12g", v.real());
                os << buf;
                std::snprintf(buf, sizeof(buf), ",%.12g", v.imag());
                os << buf;
            }
        os << "\n";
    }
}

}  // namespace fwm
