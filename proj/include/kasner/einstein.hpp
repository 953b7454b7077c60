#ifndef KASNER_EINSTEIN_HPP
#define KASNER_EINSTEIN_HPP

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "kasner/background.hpp"
#include "kasner/fields.hpp"

namespace kasner {

enum class Gauge { CMCTC, CMCSH };

/// Per-mode dynamical state in physical variables. Tensors are D*D row-major,
/// (eta)_i^j at index i*D + j.
struct EinsteinModeState {
    int D = 0;
    std::vector<cplx> eta, kappa;
    cplx phi{0, 0}, psi{0, 0};
    double t = 1.0;
    Gauge gauge = Gauge::CMCTC;
};

/// Per-mode state in renormalized variables with renormalization time t_star.
struct EinsteinRenormState {
    int D = 0;
    std::vector<cplx> kappa, upsilon; // upsilon_i^j = eta_i^j + G(i,j) kappa_j^i
    cplx psi{0, 0}, phi_tilde{0, 0};
    double t = 1.0;
};

inline EinsteinModeState make_einstein_state(int D, Gauge gauge = Gauge::CMCTC) {
    EinsteinModeState st;
    st.D = D;
    st.gauge = gauge;
    st.eta.assign(std::size_t(D) * D, cplx(0, 0));
    st.kappa.assign(std::size_t(D) * D, cplx(0, 0));
    return st;
}

namespace detail {

// per-mode coefficient bundle: u_a = t^{2-2p_a} lambda_a, w_a = u_a lambda_a
struct ModeCoeffs {
    int D;
    std::vector<double> u, w;
    double tau2;
    ModeCoeffs(const KasnerBackground& bg, const Mode& lambda, double t) : D(bg.D), u(bg.D), w(bg.D) {
        tau2 = 0;
        for (int a = 0; a < D; ++a) {
            const double f = std::pow(t, 2.0 - 2.0 * bg.p[a]);
            u[a] = f * lambda[a];
            w[a] = u[a] * lambda[a];
            tau2 += w[a];
        }
    }
};

inline cplx tr(const std::vector<cplx>& A, int D) {
    cplx s(0, 0);
    for (int a = 0; a < D; ++a) s += A[std::size_t(a) * D + a];
    return s;
}

} // namespace detail

/// Metric norm of a (1,1) tensor at time t: sum of t^{-2p_a + 2p_b} |A_a^b|^2.
inline double g_norm(const KasnerBackground& bg, double t, const std::vector<cplx>& A) {
    double acc = 0;
    for (int a = 0; a < bg.D; ++a)
        for (int b = 0; b < bg.D; ++b)
            acc += std::pow(t, -2.0 * bg.p[a] + 2.0 * bg.p[b]) *
                   std::norm(A[std::size_t(a) * bg.D + b]);
    return std::sqrt(acc);
}

/// Metric norm of a vector (upper index): sum of t^{2p_j} |v^j|^2.
inline double g_norm(const KasnerBackground& bg, double t, const std::vector<cplx>& v, int) {
    double acc = 0;
    for (int j = 0; j < bg.D; ++j) acc += bg.g_dn(j, t) * std::norm(v[j]);
    return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// Elliptic solves (algebraic per mode)

enum class LapseForm { Automatic, General, ShShortcut };

/// Spatially-harmonic condition residual 2 lambda_j eta_i^j - lambda_i tr eta,
/// largest component magnitude, plus the scale of its constituent terms.
inline std::pair<double, double> sh_residual(const Mode& lambda, const std::vector<cplx>& eta,
                                             int D) {
    const cplx tr_eta = detail::tr(eta, D);
    double worst = 0, scale = 0;
    for (int i = 0; i < D; ++i) {
        cplx r(0, 0);
        double sc = std::abs(double(lambda[i]) * tr_eta);
        for (int j = 0; j < D; ++j) {
            r += 2.0 * double(lambda[j]) * eta[std::size_t(i) * D + j];
            sc += 2.0 * std::abs(double(lambda[j]) * eta[std::size_t(i) * D + j]);
        }
        r -= double(lambda[i]) * tr_eta;
        worst = std::max(worst, std::abs(r));
        scale = std::max(scale, sc);
    }
    return {worst, scale};
}

/// (1 + tau^2) nu = 2 tau^2 tr eta - 2 t^2 g^{ab} lambda_i lambda_a eta_b^i;
/// the spatially-harmonic shortcut replaces the source by tau^2 tr eta.
inline cplx lapse_solve(const KasnerBackground& bg, const Mode& lambda, double t,
                        const std::vector<cplx>& eta, Gauge gauge = Gauge::CMCTC,
                        LapseForm form = LapseForm::Automatic) {
    detail::ModeCoeffs mc(bg, lambda, t);
    const cplx tr_eta = detail::tr(eta, bg.D);
    bool shortcut = form == LapseForm::ShShortcut;
    if (form == LapseForm::Automatic && gauge == Gauge::CMCSH) {
        auto [res, scale] = sh_residual(lambda, eta, bg.D);
        shortcut = res <= 1e-10 * std::max(scale, 1e-300);
    }
    if (shortcut) return mc.tau2 * tr_eta / (1.0 + mc.tau2);
    cplx src = 2.0 * mc.tau2 * tr_eta;
    for (int a = 0; a < bg.D; ++a) {
        cplx acc(0, 0);
        for (int i = 0; i < bg.D; ++i) acc += double(lambda[i]) * eta[std::size_t(a) * bg.D + i];
        src -= 2.0 * mc.u[a] * acc;
    }
    return src / (1.0 + mc.tau2);
}

/// Closed-form division by tau^2 of the Fourier-projected shift equation in
/// spatially harmonic gauge.
inline std::vector<cplx> shift_solve_cmcsh(const KasnerBackground& bg, const Mode& lambda, double t,
                                           const std::vector<cplx>& eta_hat, cplx nu, cplx phi) {
    if (is_zero_mode(lambda)) throw ZeroModeError("shift_solve_cmcsh: lambda = 0");
    detail::ModeCoeffs mc(bg, lambda, t);
    const int D = bg.D;
    cplx tr_tk_eta(0, 0); // tr(t k . eta) = -sum_a p_a eta_a^a
    for (int a = 0; a < D; ++a) tr_tk_eta -= bg.p[a] * eta_hat[std::size_t(a) * D + a];
    std::vector<cplx> chi(D);
    const cplx I(0, 1);
    for (int j = 0; j < D; ++j) {
        cplx s = (2.0 * bg.p[j] - 1.0) * mc.u[j] * nu;
        for (int p = 0; p < D; ++p) s += 4.0 * bg.p[p] * mc.u[p] * eta_hat[std::size_t(p) * D + j];
        s += 2.0 * mc.u[j] * (tr_tk_eta + 2.0 * bg.p_phi * phi);
        chi[j] = I * s / mc.tau2;
    }
    return chi;
}

// ---------------------------------------------------------------------------
// Evolution right-hand sides (all as t d/dt)

/// Linearized Ricci contraction, general (non-harmonic) form.
inline std::vector<cplx> ricci_general(const KasnerBackground& bg, const Mode& lambda, double t,
                                       const std::vector<cplx>& eta) {
    detail::ModeCoeffs mc(bg, lambda, t);
    const int D = bg.D;
    const cplx tr_eta = detail::tr(eta, D);
    std::vector<cplx> ric(std::size_t(D) * D);
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) {
            cplx v = -mc.tau2 * eta[std::size_t(i) * D + j];
            v -= mc.u[j] * double(lambda[i]) * tr_eta;
            cplx sa(0, 0);
            for (int a = 0; a < D; ++a) sa += mc.u[a] * eta[std::size_t(a) * D + j];
            v += double(lambda[i]) * sa;
            cplx sb(0, 0);
            for (int b = 0; b < D; ++b) sb += double(lambda[b]) * eta[std::size_t(i) * D + b];
            v += mc.u[j] * sb;
            ric[std::size_t(i) * D + j] = v;
        }
    return ric;
}

struct EinsteinRhsOptions {
    LapseForm lapse = LapseForm::Automatic;
};

/// CMCSH evolution: spatially-harmonic Ricci shortcut, lapse and shift from
/// their elliptic solves. Returns t d/dt of (eta, kappa, phi, psi) and exposes
/// the solved shift (for the change-of-gauge quadrature).
inline void einstein_rhs_cmcsh(const KasnerBackground& bg, const Mode& lambda, double t,
                               const EinsteinModeState& st, EinsteinModeState& d,
                               std::vector<cplx>* chi_out = nullptr,
                               const EinsteinRhsOptions& opt = {}) {
    if (is_zero_mode(lambda)) throw ZeroModeError("einstein_rhs_cmcsh: lambda = 0");
    const int D = bg.D;
    detail::ModeCoeffs mc(bg, lambda, t);
    const cplx nu = lapse_solve(bg, lambda, t, st.eta, Gauge::CMCSH, opt.lapse);
    const std::vector<cplx> chi = shift_solve_cmcsh(bg, lambda, t, st.eta, nu, st.phi);
    if (chi_out) *chi_out = chi;
    const cplx I(0, 1);
    d.D = D;
    d.eta.resize(std::size_t(D) * D);
    d.kappa.resize(std::size_t(D) * D);
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) {
            const std::size_t ij = std::size_t(i) * D + j;
            cplx de = st.kappa[ij] + 2.0 * (bg.p[i] - bg.p[j]) * st.eta[ij];
            if (i == j) de -= bg.p[i] * nu;
            de -= 0.5 * I * double(lambda[i]) * chi[j];
            de -= 0.5 * I * std::pow(t, 2.0 * (bg.p[i] - bg.p[j])) * double(lambda[j]) * chi[i];
            d.eta[ij] = de;

            cplx dk = -mc.tau2 * st.eta[ij]; // harmonic Ricci
            dk += mc.u[j] * double(lambda[i]) * nu;
            if (i == j) dk += bg.p[i] * nu;
            dk += I * (bg.p[i] - bg.p[j]) * double(lambda[i]) * chi[j];
            d.kappa[ij] = dk;
        }
    d.phi = st.psi + bg.p_phi * nu;
    d.psi = -mc.tau2 * st.phi - bg.p_phi * nu;
    d.t = t;
}

/// CMCTC evolution in physical variables (zero shift, general Ricci form).
inline void einstein_rhs_cmctc(const KasnerBackground& bg, const Mode& lambda, double t,
                               const EinsteinModeState& st, EinsteinModeState& d) {
    if (is_zero_mode(lambda)) throw ZeroModeError("einstein_rhs_cmctc: lambda = 0");
    const int D = bg.D;
    detail::ModeCoeffs mc(bg, lambda, t);
    const cplx nu = lapse_solve(bg, lambda, t, st.eta, Gauge::CMCTC, LapseForm::General);
    const std::vector<cplx> ric = ricci_general(bg, lambda, t, st.eta);
    d.D = D;
    d.eta.resize(std::size_t(D) * D);
    d.kappa.resize(std::size_t(D) * D);
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) {
            const std::size_t ij = std::size_t(i) * D + j;
            cplx de = st.kappa[ij] + 2.0 * (bg.p[i] - bg.p[j]) * st.eta[ij];
            if (i == j) de -= bg.p[i] * nu;
            d.eta[ij] = de;
            cplx dk = ric[ij] + mc.u[j] * double(lambda[i]) * nu;
            if (i == j) dk += bg.p[i] * nu;
            d.kappa[ij] = dk;
        }
    d.phi = st.psi + bg.p_phi * nu;
    d.psi = -mc.tau2 * st.phi - bg.p_phi * nu;
    d.t = t;
}

/// Renormalized CMCTC evolution for (kappa, upsilon, psi, phi_tilde) with
/// renormalization time t_star. Written in fully expanded form with the
/// exactly-cancelling product pairs removed analytically: the naive route
/// (reconstruct eta, then apply the physical equations) computes intermediate
/// products of size (t/t_star)^{2 + 2p_i - 2p_j - 2p_a} with a = j which can
/// dwarf the bounded result on strongly anisotropic backgrounds.
inline void einstein_rhs_cmctc_renorm(const KasnerBackground& bg, const Mode& lambda, double ts,
                                      double t, const EinsteinRenormState& st,
                                      EinsteinRenormState& d) {
    if (is_zero_mode(lambda)) throw ZeroModeError("einstein_rhs_cmctc_renorm: lambda = 0");
    const int D = bg.D;
    detail::ModeCoeffs mc(bg, lambda, t);
    const double L = std::log(ts / t);
    std::vector<double> G(std::size_t(D) * D);
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) G[std::size_t(i) * D + j] = g_integral(bg, i, j, t, ts);
    auto U = [&](int i, int j) -> const cplx& { return st.upsilon[std::size_t(i) * D + j]; };
    auto K = [&](int i, int j) -> const cplx& { return st.kappa[std::size_t(i) * D + j]; };
    auto Gv = [&](int i, int j) { return G[std::size_t(i) * D + j]; };
    const cplx tr_ups = detail::tr(st.upsilon, D);

    // lapse source with eta reconstructed as upsilon - G kappa^T
    cplx nu;
    {
        cplx src = 2.0 * mc.tau2 * tr_ups; // tr eta = tr upsilon under tr kappa = 0
        for (int a = 0; a < D; ++a) {
            cplx acc(0, 0);
            for (int i = 0; i < D; ++i)
                acc += double(lambda[i]) * (U(a, i) - Gv(a, i) * K(i, a));
            src -= 2.0 * mc.u[a] * acc;
        }
        nu = src / (1.0 + mc.tau2);
    }

    d.D = D;
    d.kappa.resize(std::size_t(D) * D);
    d.upsilon.resize(std::size_t(D) * D);
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) {
            const std::size_t ij = std::size_t(i) * D + j;
            // kappa equation
            cplx dk = -mc.tau2 * U(i, j) - mc.u[j] * double(lambda[i]) * tr_ups;
            {
                cplx sa(0, 0), sb(0, 0);
                for (int a = 0; a < D; ++a) sa += mc.u[a] * U(a, j);
                for (int b = 0; b < D; ++b) sb += double(lambda[b]) * U(i, b);
                dk += double(lambda[i]) * sa + mc.u[j] * sb;
            }
            {
                double wsum = 0; // sum_{a != j} w_a; the a = j piece cancels below exactly
                for (int a = 0; a < D; ++a)
                    if (a != j) wsum += mc.w[a];
                dk += Gv(i, j) * K(j, i) * wsum;
                cplx sa(0, 0), sb(0, 0);
                for (int a = 0; a < D; ++a) sa += mc.u[a] * Gv(a, j) * K(j, a);
                for (int b = 0; b < D; ++b)
                    if (b != j) sb += double(lambda[b]) * Gv(i, b) * K(b, i);
                dk -= double(lambda[i]) * sa + mc.u[j] * sb;
            }
            dk += mc.u[j] * double(lambda[i]) * nu;
            if (i == j) dk += bg.p[i] * nu;
            d.kappa[ij] = dk;

            // upsilon equation
            cplx du(0, 0);
            {
                double wsum = 0; // sum_{a != j} w_a
                for (int a = 0; a < D; ++a)
                    if (a != j) wsum += mc.w[a];
                cplx s1(0, 0), s2(0, 0);
                for (int s = 0; s < D; ++s)
                    if (s != j) s1 += mc.u[s] * U(s, i);
                for (int b = 0; b < D; ++b) s2 += double(lambda[b]) * U(j, b);
                du += Gv(i, j) * (-wsum * U(j, i) + double(lambda[j]) * s1 + mc.u[i] * s2);
            }
            {
                // double-G block: exclusions depend on the sign of p_i - p_j
                const bool low = bg.p[i] <= bg.p[j];
                double wsum = 0;
                for (int a = 0; a < D; ++a)
                    if (a != (low ? j : i)) wsum += mc.w[a];
                cplx s2(0, 0), s3(0, 0);
                for (int s = 0; s < D; ++s)
                    if (!low || s != j) s2 += mc.u[s] * Gv(s, i) * K(i, s);
                for (int b = 0; b < D; ++b)
                    if (low || b != i) s3 += double(lambda[b]) * Gv(j, b) * K(b, j);
                du += Gv(i, j) *
                      (Gv(j, i) * K(i, j) * wsum - double(lambda[j]) * s2 - mc.u[i] * s3);
            }
            du += Gv(i, j) * mc.u[i] * double(lambda[j]) * (nu - tr_ups);
            if (i == j) du += bg.p[i] * (L - 1.0) * nu;
            d.upsilon[ij] = du;
        }
    d.psi = -mc.tau2 * st.phi_tilde + mc.tau2 * L * st.psi - bg.p_phi * nu;
    d.phi_tilde = L * d.psi + bg.p_phi * nu;
    d.t = t;
}

// ---------------------------------------------------------------------------
// Conversions between representations

inline EinsteinRenormState renorm_from_physical(const KasnerBackground& bg,
                                                const EinsteinModeState& st, double ts) {
    const int D = bg.D;
    EinsteinRenormState r;
    r.D = D;
    r.kappa = st.kappa;
    r.upsilon.resize(std::size_t(D) * D);
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j)
            r.upsilon[std::size_t(i) * D + j] =
                st.eta[std::size_t(i) * D + j] +
                g_integral(bg, i, j, st.t, ts) * st.kappa[std::size_t(j) * D + i];
    r.psi = st.psi;
    r.phi_tilde = st.phi - st.psi * std::log(st.t / ts);
    r.t = st.t;
    return r;
}

inline EinsteinModeState physical_from_renorm(const KasnerBackground& bg,
                                              const EinsteinRenormState& st, double ts,
                                              Gauge gauge = Gauge::CMCTC) {
    const int D = bg.D;
    EinsteinModeState p = make_einstein_state(D, gauge);
    p.kappa = st.kappa;
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j)
            p.eta[std::size_t(i) * D + j] =
                st.upsilon[std::size_t(i) * D + j] -
                g_integral(bg, i, j, st.t, ts) * st.kappa[std::size_t(j) * D + i];
    p.psi = st.psi;
    p.phi = st.phi_tilde + st.psi * std::log(st.t / ts);
    p.t = st.t;
    return p;
}

// ---------------------------------------------------------------------------
// Constraints

struct ConstraintResidual {
    double cmc = 0, hamiltonian = 0, momentum1 = 0, momentum2 = 0;
    double sym_eta = 0, sym_kappa = 0, sh = 0;
    double scale = 1; // largest term-sum across the constraint expressions
    double max_abs() const {
        return std::max({cmc, hamiltonian, momentum1, momentum2, sym_eta, sym_kappa});
    }
    double max_rel() const { return max_abs() / std::max(scale, 1e-300); }
};

/// Residuals of the per-mode constraint set (Hamiltonian, both momentum forms,
/// both symmetry forms, tr kappa) plus the spatially-harmonic residual.
inline ConstraintResidual constraints_residual(const KasnerBackground& bg, const Mode& lambda,
                                               double t, const EinsteinModeState& st) {
    const int D = bg.D;
    detail::ModeCoeffs mc(bg, lambda, t);
    ConstraintResidual r;
    auto E = [&](int i, int j) -> const cplx& { return st.eta[std::size_t(i) * D + j]; };
    auto K = [&](int i, int j) -> const cplx& { return st.kappa[std::size_t(i) * D + j]; };
    const cplx tr_eta = detail::tr(st.eta, D);
    const cplx tr_kappa = detail::tr(st.kappa, D);
    double scale = 0;

    r.cmc = std::abs(tr_kappa);
    {
        double sc = 0;
        for (int a = 0; a < D; ++a) sc += std::abs(K(a, a));
        scale = std::max(scale, sc);
    }
    {
        cplx h = 2.0 * mc.tau2 * tr_eta;
        double sc = std::abs(h);
        for (int a = 0; a < D; ++a) {
            cplx acc(0, 0);
            for (int i = 0; i < D; ++i) acc += double(lambda[i]) * E(a, i);
            h -= 2.0 * mc.u[a] * acc;
            sc += 2.0 * std::abs(mc.u[a] * acc);
            h -= 2.0 * bg.p[a] * K(a, a);
            sc += 2.0 * std::abs(bg.p[a] * K(a, a));
        }
        h += 4.0 * bg.p_phi * st.psi;
        sc += std::abs(4.0 * bg.p_phi * st.psi);
        r.hamiltonian = std::abs(h);
        scale = std::max(scale, sc);
    }
    {
        cplx matter = 2.0 * bg.p_phi * st.phi;
        cplx tk_eta(0, 0);
        for (int a = 0; a < D; ++a) tk_eta -= bg.p[a] * E(a, a);
        for (int i = 0; i < D; ++i) {
            cplx m(0, 0);
            double sc = 0;
            for (int j = 0; j < D; ++j) {
                m += double(lambda[j]) * K(i, j);
                sc += std::abs(double(lambda[j]) * K(i, j));
            }
            m += double(lambda[i]) * (tk_eta + matter);
            m += bg.p[i] * double(lambda[i]) * tr_eta;
            sc += std::abs(double(lambda[i]) * (tk_eta + matter)) +
                  std::abs(bg.p[i] * double(lambda[i]) * tr_eta);
            r.momentum1 = std::max(r.momentum1, std::abs(m));
            scale = std::max(scale, sc);
        }
        for (int c = 0; c < D; ++c) {
            cplx m(0, 0);
            double sc = 0;
            for (int a = 0; a < D; ++a) {
                const double wa = bg.g_up(a, t) * double(lambda[a]);
                m += wa * K(a, c) + 2.0 * bg.p[a] * wa * E(a, c);
                sc += std::abs(wa * K(a, c)) + std::abs(2.0 * bg.p[a] * wa * E(a, c));
            }
            const double wc = bg.g_up(c, t) * double(lambda[c]);
            m += wc * (tk_eta + matter);
            sc += std::abs(wc * (tk_eta + matter));
            r.momentum2 = std::max(r.momentum2, std::abs(m));
            scale = std::max(scale, sc);
        }
    }
    for (int a = 0; a < D; ++a)
        for (int c = a + 1; c < D; ++c) {
            const double ga = bg.g_up(a, t), gc = bg.g_up(c, t);
            const cplx se = ga * E(a, c) - gc * E(c, a);
            const cplx sk = ga * (K(a, c) + 2.0 * bg.p[a] * E(a, c)) -
                            gc * (K(c, a) + 2.0 * bg.p[c] * E(c, a));
            r.sym_eta = std::max(r.sym_eta, std::abs(se));
            r.sym_kappa = std::max(r.sym_kappa, std::abs(sk));
            scale = std::max(scale, std::abs(ga * E(a, c)) + std::abs(gc * E(c, a)));
            scale = std::max(scale, std::abs(ga * (K(a, c) + 2.0 * bg.p[a] * E(a, c))) +
                                        std::abs(gc * (K(c, a) + 2.0 * bg.p[c] * E(c, a))));
        }
    {
        auto [res, sc] = sh_residual(lambda, st.eta, D);
        r.sh = res;
        scale = std::max(scale, sc);
    }
    // fall back to the state norm when the constraint terms are all tiny
    double stn = std::abs(st.phi) + std::abs(st.psi);
    for (const cplx& v : st.eta) stn += std::abs(v);
    for (const cplx& v : st.kappa) stn += std::abs(v);
    r.scale = std::max(scale, 1e-6 * stn);
    return r;
}

/// Residuals of the asymptotic constraint set, evaluated with metric weights
/// at T = t_star on the limiting quantities.
struct AsymConstraintResidual {
    double cmc = 0, hamiltonian = 0, momentum1 = 0, momentum2 = 0, sym_ups = 0, sym_kappa = 0;
    double scale = 1;
    double max_rel() const {
        return std::max({cmc, hamiltonian, momentum1, momentum2, sym_ups, sym_kappa}) /
               std::max(scale, 1e-300);
    }
};

inline AsymConstraintResidual asymptotic_constraints_residual(const KasnerBackground& bg,
                                                              const Mode& lambda, double ts,
                                                              const std::vector<cplx>& kappa_inf,
                                                              const std::vector<cplx>& ups_inf,
                                                              cplx psi_inf, cplx phi_tilde_inf) {
    const int D = bg.D;
    AsymConstraintResidual r;
    auto K = [&](int i, int j) -> const cplx& { return kappa_inf[std::size_t(i) * D + j]; };
    auto U = [&](int i, int j) -> const cplx& { return ups_inf[std::size_t(i) * D + j]; };
    double scale = 0;
    const cplx tr_ups = detail::tr(ups_inf, D);
    r.cmc = std::abs(detail::tr(kappa_inf, D));
    {
        cplx h(0, 0);
        double sc = 0;
        for (int a = 0; a < D; ++a) {
            h -= bg.p[a] * K(a, a);
            sc += std::abs(bg.p[a] * K(a, a));
        }
        h += 2.0 * bg.p_phi * psi_inf;
        sc += std::abs(2.0 * bg.p_phi * psi_inf);
        r.hamiltonian = std::abs(h);
        scale = std::max(scale, sc);
    }
    {
        cplx tk_ups(0, 0);
        for (int a = 0; a < D; ++a) tk_ups -= bg.p[a] * U(a, a);
        const cplx matter = 2.0 * bg.p_phi * phi_tilde_inf;
        for (int i = 0; i < D; ++i) {
            cplx m(0, 0);
            double sc = 0;
            for (int j = 0; j < D; ++j) {
                m += double(lambda[j]) * K(i, j);
                sc += std::abs(double(lambda[j]) * K(i, j));
            }
            m += double(lambda[i]) * (tk_ups + matter) + bg.p[i] * double(lambda[i]) * tr_ups;
            sc += std::abs(double(lambda[i]) * (tk_ups + matter)) +
                  std::abs(bg.p[i] * double(lambda[i]) * tr_ups);
            r.momentum1 = std::max(r.momentum1, std::abs(m));
            scale = std::max(scale, sc);
        }
        for (int c = 0; c < D; ++c) {
            cplx m(0, 0);
            double sc = 0;
            for (int a = 0; a < D; ++a) {
                const double wa = bg.g_up(a, ts) * double(lambda[a]);
                m += wa * K(a, c) + 2.0 * bg.p[a] * wa * U(a, c);
                sc += std::abs(wa * K(a, c)) + std::abs(2.0 * bg.p[a] * wa * U(a, c));
            }
            const double wc = bg.g_up(c, ts) * double(lambda[c]);
            m += wc * (tk_ups + matter);
            sc += std::abs(wc * (tk_ups + matter));
            r.momentum2 = std::max(r.momentum2, std::abs(m));
            scale = std::max(scale, sc);
        }
    }
    for (int a = 0; a < D; ++a)
        for (int c = a + 1; c < D; ++c) {
            const double ga = bg.g_up(a, ts), gc = bg.g_up(c, ts);
            const cplx su = ga * U(a, c) - gc * U(c, a);
            const cplx sk = ga * (K(a, c) + 2.0 * bg.p[a] * U(a, c)) -
                            gc * (K(c, a) + 2.0 * bg.p[c] * U(c, a));
            r.sym_ups = std::max(r.sym_ups, std::abs(su));
            r.sym_kappa = std::max(r.sym_kappa, std::abs(sk));
            scale = std::max(scale, std::abs(ga * U(a, c)) + std::abs(gc * U(c, a)));
            scale = std::max(scale, std::abs(ga * (K(a, c) + 2.0 * bg.p[a] * U(a, c))) +
                                        std::abs(gc * (K(c, a) + 2.0 * bg.p[c] * U(c, a))));
        }
    double stn = std::abs(psi_inf) + std::abs(phi_tilde_inf);
    for (const cplx& v : kappa_inf) stn += std::abs(v);
    for (const cplx& v : ups_inf) stn += std::abs(v);
    r.scale = std::max(scale, 1e-6 * stn);
    return r;
}

// ---------------------------------------------------------------------------
// Gauge transformations

/// Static change of gauge: eta and kappa transform, scalars are untouched.
/// Weights are taken at the state's own time.
inline void gauge_transform_state(EinsteinModeState& st, const std::vector<cplx>& xi,
                                  const KasnerBackground& bg, const Mode& lambda) {
    const int D = bg.D;
    const cplx I(0, 1);
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) {
            const std::size_t ij = std::size_t(i) * D + j;
            st.eta[ij] += 0.5 * I *
                          (double(lambda[i]) * xi[j] +
                           std::pow(st.t, 2.0 * (bg.p[i] - bg.p[j])) * double(lambda[j]) * xi[i]);
            st.kappa[ij] += I * (bg.p[j] - bg.p[i]) * double(lambda[i]) * xi[j];
        }
}

/// Same transformation acting on renormalized quantities; the metric weights
/// in the upsilon rule sit at the renormalization time T.
inline void gauge_transform_renorm(std::vector<cplx>& kappa, std::vector<cplx>& upsilon,
                                   const std::vector<cplx>& xi, const KasnerBackground& bg,
                                   const Mode& lambda, double T) {
    const int D = bg.D;
    const cplx I(0, 1);
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) {
            const std::size_t ij = std::size_t(i) * D + j;
            upsilon[ij] += 0.5 * I *
                           (double(lambda[i]) * xi[j] +
                            std::pow(T, 2.0 * (bg.p[i] - bg.p[j])) * double(lambda[j]) * xi[i]);
            kappa[ij] += I * (bg.p[j] - bg.p[i]) * double(lambda[i]) * xi[j];
        }
}

/// Solves the elliptic change-of-gauge equation at time t and applies it; the
/// transformed eta satisfies the spatially-harmonic condition exactly.
inline std::vector<cplx> to_cmcsh(const KasnerBackground& bg, const Mode& lambda,
                                  EinsteinModeState& st) {
    if (is_zero_mode(lambda)) throw ZeroModeError("to_cmcsh: lambda = 0");
    const int D = bg.D;
    detail::ModeCoeffs mc(bg, lambda, st.t);
    const cplx tr_eta = detail::tr(st.eta, D);
    std::vector<cplx> xi(D);
    const cplx I(0, 1);
    for (int j = 0; j < D; ++j) {
        cplx r = double(lambda[j]) * tr_eta;
        for (int l = 0; l < D; ++l) r -= 2.0 * double(lambda[l]) * st.eta[std::size_t(j) * D + l];
        xi[j] = -I * std::pow(st.t, 2.0 - 2.0 * bg.p[j]) * r / mc.tau2;
    }
    gauge_transform_state(st, xi, bg, lambda);
    st.gauge = Gauge::CMCSH;
    return xi;
}

/// Closed-form change of gauge making the frequency-adapted condition
/// 2 lambda_j ups_i^j = lambda_i tr ups hold after transformation with
/// T = t_star weights. Vanishes exactly on already-adapted data.
inline std::vector<cplx> cmcfa_xi(const KasnerBackground& bg, const Mode& lambda, double ts,
                                  const std::vector<cplx>& upsilon) {
    if (is_zero_mode(lambda)) throw ZeroModeError("cmcfa_xi: lambda = 0");
    const int D = bg.D;
    const cplx tr_ups = detail::tr(upsilon, D);
    std::vector<cplx> xi(D);
    const cplx I(0, 1);
    for (int j = 0; j < D; ++j) {
        cplx r = double(lambda[j]) * tr_ups;
        for (int l = 0; l < D; ++l) r -= 2.0 * double(lambda[l]) * upsilon[std::size_t(j) * D + l];
        xi[j] = -I * std::pow(ts, 2.0 - 2.0 * bg.p[j]) * r;
    }
    return xi;
}

// ---------------------------------------------------------------------------
// Energies

enum class EnergyRegime { High, Mid, Low };

inline double einstein_energy_high(const KasnerBackground& bg, const Mode& lambda, double t,
                                   const EinsteinModeState& st) {
    const int D = bg.D;
    const double T = tau(bg, lambda, t);
    if (!(T >= bg.tau_ring * (1.0 - 1e-9))) throw RegimeMismatch("einstein_energy_high: tau < tau_ring");
    const double z = zeta(bg, lambda, t);
    double kk = 0, ke = 0, ee = 0;
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) {
            const cplx kij = st.kappa[std::size_t(i) * D + j];
            const cplx kji = st.kappa[std::size_t(j) * D + i];
            const cplx eij = st.eta[std::size_t(i) * D + j];
            const cplx eji = st.eta[std::size_t(j) * D + i];
            kk += std::real(kij * std::conj(kji));
            ke += std::real(kij * std::conj(eji));
            ee += std::real(eij * std::conj(eji));
        }
    const double geom = z * z / T * kk + z / T * ke + (0.5 / T + z * z * T) * ee;
    const double matter = z * z / T * std::norm(st.psi) +
                          z / T * std::real(st.psi * std::conj(st.phi)) +
                          (0.5 / T + z * z * T) * std::norm(st.phi);
    return geom + matter;
}

inline double einstein_energy_mid(const KasnerBackground& bg, const Mode& lambda, double t,
                                  const EinsteinModeState& st) {
    const double T = tau(bg, lambda, t);
    if (!(T >= 1.0 - 1e-9 && T <= bg.tau_ring * (1.0 + 1e-9)))
        throw RegimeMismatch("einstein_energy_mid: tau outside [1, tau_ring]");
    const double ge = g_norm(bg, t, st.eta), gk = g_norm(bg, t, st.kappa);
    return std::norm(st.phi) + std::norm(st.psi) + ge * ge + gk * gk;
}

inline double einstein_energy_low(const KasnerBackground& bg, const Mode& lambda, double ts,
                                  double t, const EinsteinRenormState& st) {
    const int D = bg.D;
    if (!(tau2(bg, lambda, t) <= 1.0 + 1e-9)) throw RegimeMismatch("einstein_energy_low: tau > 1");
    double acc = std::norm(st.psi) + std::norm(st.phi_tilde);
    for (int a = 0; a < D; ++a)
        for (int b = 0; b < D; ++b) {
            const double w = std::pow(ts, -2.0 * bg.p[a] + 2.0 * bg.p[b]);
            acc += w * (std::norm(st.kappa[std::size_t(a) * D + b]) +
                        std::norm(st.upsilon[std::size_t(a) * D + b]));
        }
    return acc;
}

/// Regime-dispatching entry point; the low regime acts on renormalized states.
inline double einstein_energy(const KasnerBackground& bg, const Mode& lambda, double t,
                              const EinsteinModeState& st, EnergyRegime regime) {
    switch (regime) {
        case EnergyRegime::High: return einstein_energy_high(bg, lambda, t, st);
        case EnergyRegime::Mid: return einstein_energy_mid(bg, lambda, t, st);
        default: throw RegimeMismatch("einstein_energy: low regime takes a renormalized state");
    }
}

inline double einstein_energy(const KasnerBackground& bg, const Mode& lambda, double ts, double t,
                              const EinsteinRenormState& st, EnergyRegime regime) {
    if (regime != EnergyRegime::Low)
        throw RegimeMismatch("einstein_energy: renormalized states live in the low regime");
    return einstein_energy_low(bg, lambda, ts, t, st);
}

// ---------------------------------------------------------------------------
// Constraint projection for data generation

/// Orthogonal least-squares projection of a per-mode state onto the linear
/// constraint set (tr kappa, Hamiltonian, first momentum, both symmetry
/// conditions, optionally the spatially-harmonic condition).
inline EinsteinModeState project_constraints(const KasnerBackground& bg, const Mode& lambda,
                                             double t, const EinsteinModeState& st,
                                             bool include_sh) {
    const int D = bg.D;
    const int n = 2 * D * D + 2;
    detail::ModeCoeffs mc(bg, lambda, t);
    auto eidx = [&](int i, int j) { return i * D + j; };
    auto kidx = [&](int i, int j) { return D * D + i * D + j; };
    const int iphi = 2 * D * D, ipsi = 2 * D * D + 1;

    std::vector<std::vector<double>> rows;
    {
        std::vector<double> r(n, 0.0);
        for (int a = 0; a < D; ++a) r[kidx(a, a)] = 1.0;
        rows.push_back(r);
    }
    {
        std::vector<double> r(n, 0.0);
        for (int a = 0; a < D; ++a) {
            r[eidx(a, a)] += 2.0 * mc.tau2;
            for (int i = 0; i < D; ++i) r[eidx(a, i)] -= 2.0 * mc.u[a] * double(lambda[i]);
            r[kidx(a, a)] -= 2.0 * bg.p[a];
        }
        r[ipsi] = 4.0 * bg.p_phi;
        rows.push_back(r);
    }
    for (int i = 0; i < D; ++i) {
        std::vector<double> r(n, 0.0);
        for (int j = 0; j < D; ++j) r[kidx(i, j)] += double(lambda[j]);
        for (int a = 0; a < D; ++a) {
            r[eidx(a, a)] += -double(lambda[i]) * bg.p[a] + bg.p[i] * double(lambda[i]);
        }
        r[iphi] = 2.0 * bg.p_phi * double(lambda[i]);
        rows.push_back(r);
    }
    for (int a = 0; a < D; ++a)
        for (int c = a + 1; c < D; ++c) {
            const double ga = bg.g_up(a, t), gc = bg.g_up(c, t);
            std::vector<double> r(n, 0.0);
            r[eidx(a, c)] = ga;
            r[eidx(c, a)] = -gc;
            rows.push_back(r);
            std::vector<double> rk(n, 0.0);
            rk[kidx(a, c)] = ga;
            rk[eidx(a, c)] = 2.0 * bg.p[a] * ga;
            rk[kidx(c, a)] = -gc;
            rk[eidx(c, a)] = -2.0 * bg.p[c] * gc;
            rows.push_back(rk);
        }
    if (include_sh)
        for (int i = 0; i < D; ++i) {
            std::vector<double> r(n, 0.0);
            for (int j = 0; j < D; ++j) r[eidx(i, j)] += 2.0 * double(lambda[j]);
            for (int a = 0; a < D; ++a) r[eidx(a, a)] -= double(lambda[i]);
            rows.push_back(r);
        }
    // drop identically-zero rows (zero mode)
    std::vector<std::vector<double>> keep;
    for (auto& r : rows) {
        double nn = 0;
        for (double v : r) nn += v * v;
        if (nn > 0) keep.push_back(std::move(r));
    }
    Eigen::MatrixXd A(int(keep.size()), n);
    for (int r = 0; r < int(keep.size()); ++r)
        for (int c = 0; c < n; ++c) A(r, c) = keep[std::size_t(r)][c];

    Eigen::VectorXcd x(n);
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) {
            x[eidx(i, j)] = st.eta[std::size_t(i) * D + j];
            x[kidx(i, j)] = st.kappa[std::size_t(i) * D + j];
        }
    x[iphi] = st.phi;
    x[ipsi] = st.psi;

    // x <- x - A^+ (A x): Moore-Penrose projection onto the kernel of A.
    // The constraint matrix is real, so project the parts separately.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
    const Eigen::MatrixXd pinv = cod.pseudoInverse();
    const Eigen::VectorXd xr = x.real(), xi = x.imag();
    const Eigen::VectorXd dr = pinv * (A * xr), di = pinv * (A * xi);
    for (int c = 0; c < n; ++c) x[c] -= cplx(dr[c], di[c]);

    EinsteinModeState out = st;
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) {
            out.eta[std::size_t(i) * D + j] = x[eidx(i, j)];
            out.kappa[std::size_t(i) * D + j] = x[kidx(i, j)];
        }
    out.phi = x[iphi];
    out.psi = x[ipsi];
    return out;
}

} // namespace kasner

#endif
