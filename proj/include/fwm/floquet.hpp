#pragma once

// Steady-state harmonic expansion of the optical Bloch equations for the
// double-lambda scheme. Each density-matrix element is expanded in integer
// powers of the field phase factors,
//
//   rho0_ij = sum_{a,b}  sigma0^(a,b)_ij  exp(i (a wF + b wB) t)
//   rhoP_ij = sum_{a,b,c} sigmaP^(a,b,c)_ij exp(i (a wF + b wB + c wP) t)
//
// (atomic-frame frequencies, c = +-1), which turns the steady state into a
// sparse complex linear system coupling neighbor harmonics. The probe enters
// only at first order, so the c = -1 and c = +1 sectors decouple; we solve
// c = -1 and recover c = +1 through Hermiticity.
//
// In every harmonic block the population equation of level a is replaced by
// the block-trace constraint (trace 1 for the DC zeroth block, 0 elsewhere).
// For blocks at nonzero effective frequency this is an identity the exact
// solution satisfies anyway (the four population rows sum to i*f*trace and
// all sources are traceless), and at zero effective frequency it removes the
// genuine rank deficiency that otherwise appears whenever field frequencies
// coincide (v = 0 with omega_B = omega_F, or the ubiquitous omega_P = omega_F).

#include <array>
#include <complex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <json.hpp>

#include "fwm/model.hpp"

namespace fwm {

using cxd = std::complex<double>;

struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct HarmonicIndex {
    int a = 0;
    int b = 0;
    int c = 0;  // 0 for zeroth order, -1/+1 for first order

    bool operator==(const HarmonicIndex&) const = default;
};

struct SolveReport {
    double residual_norm = 0.0;
    int n_unknowns = 0;
    bool converged = false;
};

// Diamond truncation |a| + |b| <= N, blocks in lexicographic (a, b) order so
// every assembly and reduction is reproducible.
class HarmonicBasis {
  public:
    explicit HarmonicBasis(int truncation) : n_(truncation) {
        if (truncation < 1) throw SolverError("truncation must be >= 1");
        const int w = 2 * n_ + 1;
        lookup_.assign(static_cast<std::size_t>(w) * w, -1);
        for (int a = -n_; a <= n_; ++a) {
            for (int b = -(n_ - std::abs(a)); b <= n_ - std::abs(a); ++b) {
                lookup_[slot(a, b)] = static_cast<int>(blocks_.size());
                blocks_.push_back({a, b});
            }
        }
    }

    int truncation() const { return n_; }
    int size() const { return static_cast<int>(blocks_.size()); }
    const std::array<int, 2>& block(int idx) const { return blocks_[static_cast<std::size_t>(idx)]; }

    // -1 when (a, b) falls outside the diamond
    int index(int a, int b) const {
        if (std::abs(a) + std::abs(b) > n_) return -1;
        return lookup_[slot(a, b)];
    }

  private:
    std::size_t slot(int a, int b) const {
        return static_cast<std::size_t>(a + n_) * (2 * n_ + 1) + static_cast<std::size_t>(b + n_);
    }

    int n_;
    std::vector<std::array<int, 2>> blocks_;
    std::vector<int> lookup_;
};

enum class ExpansionOrder { zeroth, first };

// Solution container: 16 complex coefficients per harmonic block. First-order
// solutions store the c = -1 sector; the c = +1 sector is its Hermitian
// mirror, sigma^(a,b,+1)_ij = conj(sigma^(-a,-b,-1)_ji).
class HarmonicDensityMatrix {
  public:
    HarmonicDensityMatrix(ExpansionOrder order, int truncation)
        : order_(order), basis_(truncation),
          coeff_(static_cast<std::size_t>(basis_.size()) * 16, cxd(0.0, 0.0)) {}

    ExpansionOrder order() const { return order_; }
    int truncation() const { return basis_.truncation(); }
    const HarmonicBasis& basis() const { return basis_; }

    std::vector<cxd>& data() { return coeff_; }
    const std::vector<cxd>& data() const { return coeff_; }

    bool has_harmonic(int a, int b) const { return basis_.index(a, b) >= 0; }

    cxd get(Level i, Level j, int a, int b, int c = 0) const {
        if (order_ == ExpansionOrder::zeroth) {
            if (c != 0) throw SolverError("zeroth-order coefficients carry c = 0");
            int idx = basis_.index(a, b);
            return idx < 0 ? cxd(0.0) : coeff_[elem(idx, i, j)];
        }
        if (c == -1) {
            int idx = basis_.index(a, b);
            return idx < 0 ? cxd(0.0) : coeff_[elem(idx, i, j)];
        }
        if (c == +1) {
            int idx = basis_.index(-a, -b);
            return idx < 0 ? cxd(0.0) : std::conj(coeff_[elem(idx, j, i)]);
        }
        throw SolverError("first-order coefficients carry c = +-1");
    }

    static std::size_t elem(int block_idx, int i, int j) {
        return static_cast<std::size_t>(block_idx) * 16 + static_cast<std::size_t>(4 * i + j);
    }

  private:
    ExpansionOrder order_;
    HarmonicBasis basis_;
    std::vector<cxd> coeff_;
};

namespace detail {

using Mat4 = std::array<std::array<double, 4>, 4>;

// superoperator entries (row element, col element, value) acting on vec(sigma),
// element index e = 4 i + j
struct SuperopEntry {
    int row;
    int col;
    double val;
};

inline std::vector<SuperopEntry> commutator_superop(const Mat4& x) {
    std::vector<SuperopEntry> out;
    for (int i = 0; i < 4; ++i)
        for (int k = 0; k < 4; ++k) {
            if (x[i][k] == 0.0) continue;
            for (int j = 0; j < 4; ++j) out.push_back({4 * i + j, 4 * k + j, x[i][k]});
        }
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < 4; ++j) {
            if (x[k][j] == 0.0) continue;
            for (int i = 0; i < 4; ++i) out.push_back({4 * i + j, 4 * i + k, -x[k][j]});
        }
    return out;
}

inline Mat4 transpose(const Mat4& x) {
    Mat4 t{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) t[i][j] = x[j][i];
    return t;
}

// lowering parts of the couplings (the e^{+i phase} partners); raising parts
// are their transposes
inline Mat4 coupling_F() {
    Mat4 x{};
    x[level_a][level_c] = 1.0;
    x[level_a][level_d] = 1.0;
    return x;
}

inline Mat4 coupling_BP(const LevelScheme& levels) {
    Mat4 x{};
    x[level_b][level_c] = static_cast<double>(levels.sign_bc);
    x[level_b][level_d] = static_cast<double>(levels.sign_bd);
    return x;
}

// Relaxation superoperator. Trace-conserving by construction: excited
// populations decay at gamma_e split equally between the ground states,
// optical coherences decay at gamma_e/2, the excited coherence at gamma_e,
// the ground coherence at gamma_g, and the ground populations equalize at
// transit_feed (transit of fresh thermal atoms).
inline std::vector<SuperopEntry> relaxation_superop(const RelaxationParams& r) {
    const double ge = r.gamma_e;
    const double feed = r.branching * ge;
    const double tf = r.transit_feed;
    auto e = [](int i, int j) { return 4 * i + j; };

    std::vector<SuperopEntry> out;
    out.push_back({e(0, 0), e(2, 2), feed});
    out.push_back({e(0, 0), e(3, 3), feed});
    out.push_back({e(0, 0), e(1, 1), 0.5 * tf});
    out.push_back({e(0, 0), e(0, 0), -0.5 * tf});
    out.push_back({e(1, 1), e(2, 2), feed});
    out.push_back({e(1, 1), e(3, 3), feed});
    out.push_back({e(1, 1), e(0, 0), 0.5 * tf});
    out.push_back({e(1, 1), e(1, 1), -0.5 * tf});
    out.push_back({e(2, 2), e(2, 2), -ge});
    out.push_back({e(3, 3), e(3, 3), -ge});
    out.push_back({e(0, 1), e(0, 1), -r.gamma_g});
    out.push_back({e(1, 0), e(1, 0), -r.gamma_g});
    for (auto [i, j] : {std::pair{0, 2}, {0, 3}, {1, 2}, {1, 3}})
        for (auto [p, q] : {std::pair{i, j}, {j, i}})
            out.push_back({e(p, q), e(p, q), -0.5 * ge});
    out.push_back({e(2, 3), e(2, 3), -ge});
    out.push_back({e(3, 2), e(3, 2), -ge});
    return out;
}

struct AssemblyContext {
    HarmonicBasis basis;
    Eigen::SparseMatrix<cxd> matrix;
    Eigen::VectorXcd rhs;
};

constexpr int trace_row_elem = 4 * level_a + level_a;  // replaced population row

// Builds the steady-state system for one sector. freq_offset is 0 for the
// zeroth order and -omega_P^at for the first-order c = -1 sector. `source`
// (if any) supplies the per-block 4x4 inhomogeneity.
template <typename SourceFn>
AssemblyContext assemble(const ModelConfig& cfg, const AtomicFrequencies& at,
                         double freq_offset, bool dc_trace_one, SourceFn&& source) {
    AssemblyContext ctx{HarmonicBasis(cfg.truncation), {}, {}};
    const HarmonicBasis& basis = ctx.basis;
    const int nb = basis.size();
    const int dim = nb * 16;

    const std::array<double, 4> energy = {0.0, 0.0, cfg.levels.omega_c, cfg.levels.omega_d};
    const auto relax = relaxation_superop(cfg.relaxation);
    const Mat4 f_ge = coupling_F();
    const Mat4 bp_ge = coupling_BP(cfg.levels);
    const auto comm_f_ge = commutator_superop(f_ge);
    const auto comm_f_eg = commutator_superop(transpose(f_ge));
    const auto comm_b_ge = commutator_superop(bp_ge);
    const auto comm_b_eg = commutator_superop(transpose(bp_ge));
    const cxd half_f = cxd(0.0, 0.5 * cfg.fields.rabi_F);
    const cxd half_b = cxd(0.0, 0.5 * cfg.fields.rabi_B);

    std::vector<Eigen::Triplet<cxd>> trip;
    trip.reserve(static_cast<std::size_t>(dim) * 24);
    ctx.rhs = Eigen::VectorXcd::Zero(dim);

    auto add_coupling = [&](int row_base, int nb_idx, const std::vector<SuperopEntry>& comm,
                            cxd scale) {
        if (nb_idx < 0 || scale == cxd(0.0)) return;
        const int col_base = nb_idx * 16;
        for (const auto& s : comm) {
            if (s.row == trace_row_elem) continue;
            trip.emplace_back(row_base + s.row, col_base + s.col, scale * s.val);
        }
    };

    for (int bi = 0; bi < nb; ++bi) {
        const auto [a, b] = basis.block(bi);
        const double f_h = a * at.f + b * at.b + freq_offset;
        const int row_base = bi * 16;

        // trace constraint replaces the (a,a) population row
        for (int k = 0; k < 4; ++k)
            trip.emplace_back(row_base + trace_row_elem, row_base + 4 * k + k, cxd(1.0, 0.0));
        if (dc_trace_one && a == 0 && b == 0) ctx.rhs[row_base + trace_row_elem] = cxd(1.0, 0.0);

        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) {
                const int e = 4 * i + j;
                if (e == trace_row_elem) continue;
                trip.emplace_back(row_base + e, row_base + e,
                                  cxd(0.0, f_h + energy[static_cast<std::size_t>(i)] -
                                               energy[static_cast<std::size_t>(j)]));
            }
        }
        for (const auto& s : relax) {
            if (s.row == trace_row_elem) continue;
            trip.emplace_back(row_base + s.row, row_base + s.col, cxd(-s.val, 0.0));
        }

        add_coupling(row_base, basis.index(a - 1, b), comm_f_ge, half_f);
        add_coupling(row_base, basis.index(a + 1, b), comm_f_eg, half_f);
        add_coupling(row_base, basis.index(a, b - 1), comm_b_ge, half_b);
        add_coupling(row_base, basis.index(a, b + 1), comm_b_eg, half_b);

        source(bi, a, b, ctx.rhs);
    }

    ctx.matrix.resize(dim, dim);
    ctx.matrix.setFromTriplets(trip.begin(), trip.end());
    ctx.matrix.makeCompressed();
    return ctx;
}

inline void sparse_solve(AssemblyContext& ctx, HarmonicDensityMatrix& out, SolveReport& report) {
    Eigen::SparseLU<Eigen::SparseMatrix<cxd>, Eigen::COLAMDOrdering<int>> lu;
    lu.analyzePattern(ctx.matrix);
    lu.factorize(ctx.matrix);
    if (lu.info() != Eigen::Success)
        throw SolverError("harmonic steady-state system is singular or ill-conditioned: " +
                          lu.lastErrorMessage());
    Eigen::VectorXcd x = lu.solve(ctx.rhs);
    if (lu.info() != Eigen::Success)
        throw SolverError("sparse solve failed after factorization");

    const double bnorm = ctx.rhs.norm();
    const double rnorm = (ctx.matrix * x - ctx.rhs).norm();
    report.residual_norm = bnorm > 0.0 ? rnorm / bnorm : rnorm;
    report.n_unknowns = static_cast<int>(ctx.matrix.rows());
    report.converged = report.residual_norm < 1e-8;

    auto& coeff = out.data();
    for (int k = 0; k < ctx.matrix.rows(); ++k) coeff[static_cast<std::size_t>(k)] = x[k];
}

}  // namespace detail

// Pump-only steady state (probe ignored at this order).
inline std::pair<HarmonicDensityMatrix, SolveReport> solve_zeroth_order(
    const ModelConfig& cfg, const AtomicFrequencies& at) {
    auto ctx = detail::assemble(cfg, at, 0.0, true,
                                [](int, int, int, Eigen::VectorXcd&) {});
    HarmonicDensityMatrix rho(ExpansionOrder::zeroth, cfg.truncation);
    SolveReport report;
    detail::sparse_solve(ctx, rho, report);
    return {std::move(rho), report};
}

// First-order response to the probe (c = -1 sector; exactly linear in
// rabi_P). rho0 must be a zeroth-order solution for the same config and
// frequencies, with truncation at least as large.
inline std::pair<HarmonicDensityMatrix, SolveReport> solve_first_order(
    const ModelConfig& cfg, const AtomicFrequencies& at, const HarmonicDensityMatrix& rho0) {
    if (rho0.order() != ExpansionOrder::zeroth)
        throw SolverError("solve_first_order requires a zeroth-order solution");
    if (rho0.truncation() < cfg.truncation)
        throw SolverError("zeroth-order solution lacks harmonics required by the source "
                          "(truncation too small)");

    detail::Mat4 p_eg = detail::transpose(detail::coupling_BP(cfg.levels));
    const auto comm_p_eg = detail::commutator_superop(p_eg);
    const cxd src_scale = cxd(0.0, -0.5 * cfg.fields.rabi_P);

    auto source = [&](int bi, int a, int b, Eigen::VectorXcd& rhs) {
        for (const auto& s : comm_p_eg) {
            if (s.row == detail::trace_row_elem) continue;
            const auto j_col = static_cast<Level>(s.col % 4);
            const auto i_col = static_cast<Level>(s.col / 4);
            rhs[bi * 16 + s.row] += src_scale * s.val * rho0.get(i_col, j_col, a, b);
        }
    };
    auto ctx = detail::assemble(cfg, at, -at.p, false, source);
    HarmonicDensityMatrix rho(ExpansionOrder::first, cfg.truncation);
    SolveReport report;
    detail::sparse_solve(ctx, rho, report);
    return {std::move(rho), report};
}

// Phase-matched conjugate amplitude at frequency wF + wB - wP and wavevector
// kF + kB - kP: the (1,1,-1) coherences between level a and the two excited
// levels. Intensity is |amplitude|^2.
inline cxd conjugate_amplitude(const HarmonicDensityMatrix& rhoP) {
    if (rhoP.order() != ExpansionOrder::first)
        throw SolverError("conjugate_amplitude requires a first-order solution");
    if (rhoP.truncation() < 2 || !rhoP.has_harmonic(1, 1))
        throw SolverError("harmonic (1,1,-1) outside truncation; need N_max >= 2");
    return rhoP.get(level_a, level_c, 1, 1, -1) + rhoP.get(level_a, level_d, 1, 1, -1);
}

inline cxd conjugate_amplitude_at(const ModelConfig& cfg, const AtomicFrequencies& at) {
    auto [rho0, rep0] = solve_zeroth_order(cfg, at);
    auto [rhoP, rep1] = solve_first_order(cfg, at, rho0);
    return conjugate_amplitude(rhoP);
}

// Doubles the truncation order until the conjugate amplitude stabilizes;
// returns the converged order. Non-convergence by N = 64 signals fields too
// strong for the expansion.
inline int check_truncation(const ModelConfig& cfg, const AtomicFrequencies& at,
                            double rel_tol = 1e-6) {
    ModelConfig work = cfg;
    cxd prev(0.0);
    int prev_n = 0;
    for (int n = 2; n <= 64; n *= 2) {
        work.truncation = n;
        const cxd amp = conjugate_amplitude_at(work, at);
        if (prev_n > 0) {
            const double scale = std::max(std::abs(amp), std::abs(prev));
            if (scale == 0.0 || std::abs(amp - prev) <= rel_tol * scale) return prev_n;
        }
        prev = amp;
        prev_n = n;
    }
    throw SolverError("conjugate amplitude not converged by N_max = 64; "
                      "fields too strong for the harmonic expansion");
}

// Debug dump, one entry per stored coefficient: [i, j, a, b, c, re, im].
inline nlohmann::json harmonics_to_json(const HarmonicDensityMatrix& rho) {
    nlohmann::json entries = nlohmann::json::array();
    const int c = rho.order() == ExpansionOrder::zeroth ? 0 : -1;
    for (int bi = 0; bi < rho.basis().size(); ++bi) {
        const auto [a, b] = rho.basis().block(bi);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                const cxd v = rho.data()[HarmonicDensityMatrix::elem(bi, i, j)];
                entries.push_back({i, j, a, b, c, v.real(), v.imag()});
            }
    }
    return entries;
}

}  // namespace fwm
