#ifndef KASNER_EINSTEIN_SCATTER_HPP
#define KASNER_EINSTEIN_SCATTER_HPP

#include <algorithm>
#include <map>
#include <utility>
#include <vector>

#include "kasner/bounds.hpp"
#include "kasner/einstein.hpp"
#include "kasner/ode.hpp"
#include "kasner/parallel.hpp"
#include "kasner/wave.hpp" // Tolerances

namespace kasner {

/// Cauchy data at t = 1 for the linearized system.
struct EinsteinCauchyData {
    TensorField eta, kappa;
    ScalarField phi, psi;
};

struct EinsteinModeAsym {
    std::vector<cplx> kappa_inf, upsilon_inf; // D*D
    cplx psi_inf{0, 0}, phi_tilde_inf{0, 0};
    std::vector<cplx> xi_inf; // change-of-gauge limit, D components
};

struct EinsteinAsymptotics {
    int D = 0;
    std::vector<cplx> kappa0, upsilon0; // conserved zero-mode tensors
    cplx psi0{0, 0}, varphi0{0, 0};
    std::map<Mode, EinsteinModeAsym> limits;

    TensorField kappa_inf_field() const {
        TensorField f;
        f.D = D;
        f.set(Mode(D, 0), kappa0);
        for (const auto& [lam, v] : limits) f.set(lam, v.kappa_inf);
        return f;
    }
    TensorField upsilon_inf_field() const {
        TensorField f;
        f.D = D;
        f.set(Mode(D, 0), upsilon0);
        for (const auto& [lam, v] : limits) f.set(lam, v.upsilon_inf);
        return f;
    }
    ScalarField psi_inf_field() const {
        ScalarField f;
        f.D = D;
        f.set(Mode(D, 0), psi0);
        for (const auto& [lam, v] : limits) f.set(lam, v.psi_inf);
        return f;
    }
    ScalarField phi_tilde_inf_field() const {
        ScalarField f;
        f.D = D;
        f.set(Mode(D, 0), varphi0);
        for (const auto& [lam, v] : limits) f.set(lam, v.phi_tilde_inf);
        return f;
    }
    VectorField xi_inf_field() const {
        VectorField f;
        f.D = D;
        f.set(Mode(D, 0), std::vector<cplx>(std::size_t(D), cplx(0, 0)));
        for (const auto& [lam, v] : limits) f.set(lam, v.xi_inf);
        return f;
    }
};

struct EinsteinModeDiag {
    Mode lambda;
    double t_star = 1;
    double delta = 0;             // subcriticality margin used for the tail
    double E1 = 0;                // high or mid energy at t = 1
    double E_ring_high = 0, E_ring_mid = 0; // seam values at tau = tau_ring (0 if not crossed)
    double E_tstar_mid = 0, E_tstar_low = 0; // seam values at t = t_star
    double E_low_end = 0;
    double max_constraint_rel = 0; // max relative residual seen at monitor times
    double tail_bound = 0;
};

namespace detail {

// flat layout for the CMCSH phase: eta (D^2), kappa (D^2), phi, psi, I (D)
// where t dI/dt = chi accumulates the change-of-gauge integral
inline OdeSystem cmcsh_system(const KasnerBackground& bg, const Mode& lambda) {
    const int D = bg.D;
    const int nt = D * D;
    OdeSystem sys;
    sys.dim = 2 * nt + 2 + D;
    sys.rhs = [&bg, lambda, D, nt](double t, const cplx* y, cplx* dy) {
        EinsteinModeState st = make_einstein_state(D, Gauge::CMCSH);
        std::copy(y, y + nt, st.eta.begin());
        std::copy(y + nt, y + 2 * nt, st.kappa.begin());
        st.phi = y[2 * nt];
        st.psi = y[2 * nt + 1];
        st.t = t;
        EinsteinModeState d;
        std::vector<cplx> chi;
        einstein_rhs_cmcsh(bg, lambda, t, st, d, &chi);
        std::copy(d.eta.begin(), d.eta.end(), dy);
        std::copy(d.kappa.begin(), d.kappa.end(), dy + nt);
        dy[2 * nt] = d.phi;
        dy[2 * nt + 1] = d.psi;
        for (int j = 0; j < D; ++j) dy[2 * nt + 2 + j] = chi[j];
    };
    return sys;
}

inline OdeSystem renorm_system(const KasnerBackground& bg, const Mode& lambda, double ts) {
    const int D = bg.D;
    const int nt = D * D;
    OdeSystem sys;
    sys.dim = 2 * nt + 2;
    sys.rhs = [&bg, lambda, ts, D, nt](double t, const cplx* y, cplx* dy) {
        EinsteinRenormState st;
        st.D = D;
        st.kappa.assign(y, y + nt);
        st.upsilon.assign(y + nt, y + 2 * nt);
        st.psi = y[2 * nt];
        st.phi_tilde = y[2 * nt + 1];
        st.t = t;
        EinsteinRenormState d;
        einstein_rhs_cmctc_renorm(bg, lambda, ts, t, st, d);
        std::copy(d.kappa.begin(), d.kappa.end(), dy);
        std::copy(d.upsilon.begin(), d.upsilon.end(), dy + nt);
        dy[2 * nt] = d.psi;
        dy[2 * nt + 1] = d.phi_tilde;
    };
    return sys;
}

inline std::vector<cplx> pack_cmcsh(const EinsteinModeState& st, int D) {
    std::vector<cplx> y(2 * D * D + 2 + D, cplx(0, 0));
    std::copy(st.eta.begin(), st.eta.end(), y.begin());
    std::copy(st.kappa.begin(), st.kappa.end(), y.begin() + D * D);
    y[2 * D * D] = st.phi;
    y[2 * D * D + 1] = st.psi;
    return y;
}

inline EinsteinModeState unpack_cmcsh(const std::vector<cplx>& y, int D, double t) {
    EinsteinModeState st = make_einstein_state(D, Gauge::CMCSH);
    std::copy(y.begin(), y.begin() + D * D, st.eta.begin());
    std::copy(y.begin() + D * D, y.begin() + 2 * D * D, st.kappa.begin());
    st.phi = y[2 * D * D];
    st.psi = y[2 * D * D + 1];
    st.t = t;
    return st;
}

inline std::vector<cplx> pack_renorm(const EinsteinRenormState& st, int D) {
    std::vector<cplx> y(2 * D * D + 2);
    std::copy(st.kappa.begin(), st.kappa.end(), y.begin());
    std::copy(st.upsilon.begin(), st.upsilon.end(), y.begin() + D * D);
    y[2 * D * D] = st.psi;
    y[2 * D * D + 1] = st.phi_tilde;
    return y;
}

inline EinsteinRenormState unpack_renorm(const std::vector<cplx>& y, int D, double t) {
    EinsteinRenormState st;
    st.D = D;
    st.kappa.assign(y.begin(), y.begin() + D * D);
    st.upsilon.assign(y.begin() + D * D, y.begin() + 2 * D * D);
    st.psi = y[2 * D * D];
    st.phi_tilde = y[2 * D * D + 1];
    st.t = t;
    return st;
}

// time where tau = target, in (0, t_hint]; same bracketing as t_star
inline double t_of_tau(const KasnerBackground& bg, const Mode& lambda, double target) {
    // tau(t)/target corresponds to scaled mode coefficients lambda_i/target
    // but fractional modes are not representable; bisect on log t directly
    double hi = 1.0;
    while (tau(bg, lambda, hi) < target) hi *= 2.0;
    double lo = hi;
    while (tau(bg, lambda, lo) > target) lo *= 0.5;
    for (int it = 0; it < 200 && hi / lo > 1 + 1e-14; ++it) {
        const double mid = std::sqrt(lo * hi);
        (tau(bg, lambda, mid) < target ? lo : hi) = mid;
    }
    return std::sqrt(lo * hi);
}

} // namespace detail

struct EinsteinScatterOptions {
    double input_residual_tol = 1e-6; // relative, on the Cauchy constraints
    bool monitor_constraints = false;
    int monitor_samples = 24;
    int threads = 1;
};

/// Scattering engine for the linearized system. Construction measures the
/// constant in front of the (t/t_star)^delta tail majorant on probe modes and
/// caches it with a safety factor of 10.
class EinsteinScattering {
  public:
    explicit EinsteinScattering(const KasnerBackground& bg) : bg_(bg) {
        if (!bg.non_degenerate) throw DegenerateBackground("EinsteinScattering: background has max p_i >= 1");
        if (!bg.subcritical) throw NotSubcritical("EinsteinScattering: subcriticality margin delta <= 0");
        calibrate();
    }

    const KasnerBackground& background() const { return bg_; }
    double tail_constant() const { return tail_constant_; }

    double tail_time(double ts, double tol) const {
        const double t0 = ts * std::pow(tol / tail_constant_, 1.0 / bg_.delta);
        if (t0 < 1e-300) throw TailUnreachable("einstein tail_time");
        return t0;
    }

    using Options = EinsteinScatterOptions;

    EinsteinAsymptotics scatter_down(const EinsteinCauchyData& data, const Tolerances& tol,
                                     const Options& opt = EinsteinScatterOptions(),
                                     std::vector<EinsteinModeDiag>* diag = nullptr) const {
        EinsteinAsymptotics out;
        out.D = bg_.D;
        const Mode zero(bg_.D, 0);
        out.kappa0 = data.kappa.at(zero);
        out.upsilon0 = data.eta.at(zero); // Upsilon(1) = eta(1)
        out.psi0 = data.psi.at(zero);
        out.varphi0 = data.phi.at(zero);
        std::vector<Mode> modes;
        for (const auto& [lam, v] : data.eta.coeffs)
            if (!is_zero_mode(lam)) modes.push_back(lam);
        std::vector<EinsteinModeAsym> res(modes.size());
        std::vector<EinsteinModeDiag> dg(modes.size());
        parallel_for(modes.size(), opt.threads, [&](std::size_t k) {
            EinsteinModeState st = make_einstein_state(bg_.D);
            st.eta = data.eta.at(modes[k]);
            st.kappa = data.kappa.at(modes[k]);
            st.phi = data.phi.at(modes[k]);
            st.psi = data.psi.at(modes[k]);
            st.t = 1.0;
            res[k] = scatter_down_mode(modes[k], st, tol, opt, &dg[k]);
        });
        for (std::size_t k = 0; k < modes.size(); ++k) out.limits[modes[k]] = std::move(res[k]);
        if (diag) *diag = std::move(dg);
        return out;
    }

    EinsteinModeAsym scatter_down_mode(const Mode& lam, EinsteinModeState st, const Tolerances& tol,
                                       const Options& opt, EinsteinModeDiag* diag = nullptr) const {
        const int D = bg_.D;
        const int nt = D * D;
        EinsteinModeDiag d;
        d.lambda = lam;
        d.delta = bg_.delta;
        d.t_star = t_star(bg_, lam);
        EinsteinModeAsym out;
        out.kappa_inf.assign(nt, cplx(0, 0));
        out.upsilon_inf.assign(nt, cplx(0, 0));
        out.xi_inf.assign(D, cplx(0, 0));
        bool zero = true;
        for (const cplx& v : st.eta) zero = zero && v == cplx(0, 0);
        for (const cplx& v : st.kappa) zero = zero && v == cplx(0, 0);
        zero = zero && st.phi == cplx(0, 0) && st.psi == cplx(0, 0);
        if (zero) {
            if (diag) *diag = d;
            return out;
        }
        {
            // the frequency-adapted condition at t = 1 is the harmonic one
            const auto cr = constraints_residual(bg_, lam, 1.0, st);
            const double rel = std::max(cr.max_rel(), cr.sh / std::max(cr.scale, 1e-300));
            d.max_constraint_rel = rel;
            if (rel > opt.input_residual_tol)
                throw ConstraintViolation("scatter_down: Cauchy constraints or gauge condition violated");
        }
        IntegratorConfig cfg{tol.rel_tol, tol.abs_tol};
        to_cmcsh(bg_, lam, st); // identity on compliant data
        const double tau1 = tau(bg_, lam, 1.0);
        d.E1 = tau1 >= bg_.tau_ring ? einstein_energy_high(bg_, lam, 1.0, st)
                                    : einstein_energy_mid(bg_, lam, 1.0, st);
        std::vector<cplx> y = detail::pack_cmcsh(st, D);
        std::vector<cplx> I_ts(D, cplx(0, 0));
        if (d.t_star < 1.0) {
            auto sys = detail::cmcsh_system(bg_, lam);
            std::vector<double> samples;
            double t_ring = 0;
            if (tau1 > bg_.tau_ring && bg_.tau_ring > 1.0) {
                t_ring = detail::t_of_tau(bg_, lam, bg_.tau_ring);
                if (t_ring < 1.0 && t_ring > d.t_star) samples.push_back(t_ring);
            }
            if (opt.monitor_constraints)
                for (double t : log_grid(d.t_star * 1.0000001, 0.9999999, opt.monitor_samples))
                    samples.push_back(t);
            std::sort(samples.begin(), samples.end(), std::greater<>());
            integrate_sampled(sys, y, 1.0, d.t_star, cfg, samples,
                              [&](double t, const std::vector<cplx>& yv) {
                                  EinsteinModeState ms = detail::unpack_cmcsh(yv, D, t);
                                  if (t == t_ring) {
                                      d.E_ring_high = einstein_energy_high(bg_, lam, t, ms);
                                      d.E_ring_mid = einstein_energy_mid(bg_, lam, t, ms);
                                  }
                                  if (opt.monitor_constraints) {
                                      const auto cr = constraints_residual(bg_, lam, t, ms);
                                      d.max_constraint_rel =
                                          std::max(d.max_constraint_rel,
                                                   std::max(cr.max_rel(),
                                                            cr.sh / std::max(cr.scale, 1e-300)));
                                  }
                              });
            for (int j = 0; j < D; ++j) I_ts[j] = y[2 * nt + 2 + j];
        }
        EinsteinModeState at_ts = detail::unpack_cmcsh(y, D, d.t_star);
        d.E_tstar_mid = einstein_energy_mid(bg_, lam, d.t_star, at_ts);
        EinsteinRenormState rn = renorm_from_physical(bg_, at_ts, d.t_star);
        d.E_tstar_low = einstein_energy_low(bg_, lam, d.t_star, d.t_star, rn);
        const double t_end = tail_time(d.t_star, tol.tail_tol);
        auto rsys = detail::renorm_system(bg_, lam, d.t_star);
        std::vector<cplx> yr = detail::pack_renorm(rn, D);
        integrate_sampled(rsys, yr, d.t_star, t_end, cfg, {}, nullptr);
        EinsteinRenormState lim = detail::unpack_renorm(yr, D, t_end);
        d.E_low_end = einstein_energy_low(bg_, lam, d.t_star, t_end, lim);
        d.tail_bound = tail_constant_ * std::pow(t_end / d.t_star, bg_.delta) *
                       std::sqrt(d.E_tstar_low);
        // canonical asymptotic gauge: transform the limits so the
        // frequency-adapted condition holds, and assemble xi_inf
        const std::vector<cplx> xi_g = cmcfa_xi(bg_, lam, d.t_star, lim.upsilon);
        gauge_transform_renorm(lim.kappa, lim.upsilon, xi_g, bg_, lam, d.t_star);
        out.kappa_inf = lim.kappa;
        out.upsilon_inf = lim.upsilon;
        out.psi_inf = lim.psi;
        out.phi_tilde_inf = lim.phi_tilde;
        for (int j = 0; j < D; ++j) out.xi_inf[j] = I_ts[j] - xi_g[j];
        if (diag) *diag = d;
        return out;
    }

    EinsteinCauchyData scatter_up(const EinsteinAsymptotics& asym, const Tolerances& tol,
                                  const Options& opt = EinsteinScatterOptions()) const {
        EinsteinCauchyData out;
        out.eta.D = out.kappa.D = bg_.D;
        out.phi.D = out.psi.D = bg_.D;
        const Mode zero(bg_.D, 0);
        out.eta.set(zero, asym.upsilon0);
        out.kappa.set(zero, asym.kappa0);
        out.phi.set(zero, asym.varphi0);
        out.psi.set(zero, asym.psi0);
        std::vector<Mode> modes;
        for (const auto& [lam, v] : asym.limits) modes.push_back(lam);
        std::vector<EinsteinModeState> res(modes.size());
        parallel_for(modes.size(), opt.threads, [&](std::size_t k) {
            res[k] = scatter_up_mode(modes[k], asym.limits.at(modes[k]), tol, opt);
        });
        for (std::size_t k = 0; k < modes.size(); ++k) {
            out.eta.set(modes[k], res[k].eta);
            out.kappa.set(modes[k], res[k].kappa);
            out.phi.set(modes[k], res[k].phi);
            out.psi.set(modes[k], res[k].psi);
        }
        return out;
    }

    EinsteinModeState scatter_up_mode(const Mode& lam, const EinsteinModeAsym& v,
                                      const Tolerances& tol, const Options& opt = EinsteinScatterOptions()) const {
        const int D = bg_.D;
        EinsteinModeState out = make_einstein_state(D, Gauge::CMCSH);
        out.t = 1.0;
        bool zero = true;
        for (const cplx& c : v.kappa_inf) zero = zero && c == cplx(0, 0);
        for (const cplx& c : v.upsilon_inf) zero = zero && c == cplx(0, 0);
        zero = zero && v.psi_inf == cplx(0, 0) && v.phi_tilde_inf == cplx(0, 0);
        if (zero) return out;
        const double ts = t_star(bg_, lam);
        {
            const auto ar = asymptotic_constraints_residual(bg_, lam, ts, v.kappa_inf,
                                                            v.upsilon_inf, v.psi_inf,
                                                            v.phi_tilde_inf);
            if (ar.max_rel() > opt.input_residual_tol)
                throw ConstraintViolation("scatter_up: asymptotic constraints violated");
        }
        IntegratorConfig cfg{tol.rel_tol, tol.abs_tol};
        auto rsys = detail::renorm_system(bg_, lam, ts);
        FuchsianSpec spec;
        spec.t_max = ts;
        spec.epsilon = bg_.delta;
        const double C = tail_constant_, delta = bg_.delta;
        spec.tail_bound = [C, delta, ts](double t) { return C * std::pow(t / ts, delta); };
        EinsteinRenormState vst;
        vst.D = D;
        vst.kappa = v.kappa_inf;
        vst.upsilon = v.upsilon_inf;
        vst.psi = v.psi_inf;
        vst.phi_tilde = v.phi_tilde_inf;
        auto [y0, t0] = fuchsian_launch(rsys, detail::pack_renorm(vst, D), spec, tol.tail_tol, cfg);
        integrate_sampled(rsys, y0, t0, ts, cfg, {}, nullptr);
        EinsteinRenormState at_ts = detail::unpack_renorm(y0, D, ts);
        // enter the spatially-harmonic gauge for the climb above t_star; at
        // t = t_star this is the same transformation as the frequency-adapted one
        const std::vector<cplx> xi = cmcfa_xi(bg_, lam, ts, at_ts.upsilon);
        EinsteinModeState ph = physical_from_renorm(bg_, at_ts, ts, Gauge::CMCSH);
        gauge_transform_state(ph, xi, bg_, lam);
        if (ts < 1.0) {
            auto sys = detail::cmcsh_system(bg_, lam);
            std::vector<cplx> y = detail::pack_cmcsh(ph, D);
            integrate_sampled(sys, y, ts, 1.0, cfg, {}, nullptr);
            ph = detail::unpack_cmcsh(y, D, 1.0);
        }
        return ph;
    }

  private:
    void calibrate() {
        double worst = 0;
        IntegratorConfig cfg{1e-11, 1e-13};
        const int D = bg_.D;
        std::vector<Mode> probes;
        {
            Mode m(D, 0);
            m[0] = 1;
            probes.push_back(m);
            m[0] = 3;
            probes.push_back(m);
            if (D >= 2) {
                Mode m2(D, 0);
                m2[0] = 1;
                m2[1] = 2;
                probes.push_back(m2);
            }
        }
        std::uint64_t rng = 0x2545f4914f6cdd1dULL;
        auto rnd = [&rng]() { return 2.0 * detail_rand(rng) - 1.0; };
        for (const Mode& lam : probes) {
            const double ts = t_star(bg_, lam);
            EinsteinModeState st = make_einstein_state(D);
            for (auto& c : st.eta) c = cplx(rnd(), rnd());
            for (auto& c : st.kappa) c = cplx(rnd(), rnd());
            st.phi = cplx(rnd(), rnd());
            st.psi = cplx(rnd(), rnd());
            st.t = ts;
            st = project_constraints(bg_, lam, ts, st, false);
            EinsteinRenormState rn = renorm_from_physical(bg_, st, ts);
            const double E0 = std::sqrt(einstein_energy_low(bg_, lam, ts, ts, rn));
            if (!(E0 > 0)) continue;
            const double t_ref = ts * std::pow(1e-13, 1.0 / bg_.delta);
            auto rsys = detail::renorm_system(bg_, lam, ts);
            std::vector<cplx> y = detail::pack_renorm(rn, D);
            std::vector<double> samples;
            for (double f = 0.7; f > 100 * t_ref / ts; f *= 0.45) samples.push_back(ts * f);
            std::sort(samples.begin(), samples.end(), std::greater<>());
            std::vector<std::pair<double, std::vector<cplx>>> snap;
            integrate_sampled(rsys, y, ts, std::max(t_ref, 1e-280), cfg, samples,
                              [&](double t, const std::vector<cplx>& yv) { snap.emplace_back(t, yv); });
            for (const auto& [t, yv] : snap) {
                double err = 0;
                for (int i = 0; i < D; ++i)
                    for (int j = 0; j < D; ++j) {
                        const double w = std::pow(ts, -bg_.p[i] + bg_.p[j]);
                        const std::size_t ij = std::size_t(i) * D + j;
                        err += w * std::abs(yv[ij] - y[ij]);
                        err += w * std::abs(yv[D * D + ij] - y[D * D + ij]);
                    }
                err += std::abs(yv[2 * D * D] - y[2 * D * D]) +
                       std::abs(yv[2 * D * D + 1] - y[2 * D * D + 1]);
                const double maj = std::pow(t / ts, bg_.delta) * E0;
                if (maj > 1e-11 * E0) worst = std::max(worst, err / maj);
            }
        }
        tail_constant_ = 10.0 * std::max(worst, 0.1);
    }

    static double detail_rand(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return double(z >> 11) * 0x1.0p-53;
    }

    KasnerBackground bg_;
    double tail_constant_ = 1.0;
};

// ---------------------------------------------------------------------------
// Hilbert-space norms

inline double einstein_cauchy_norm(const EinsteinCauchyData& data, double s) {
    const double a = sobolev_norm(data.eta, s + 1.0);
    const double b = sobolev_norm(data.kappa, s);
    const double c = sobolev_norm(data.phi, s + 1.0);
    const double d = sobolev_norm(data.psi, s);
    return std::sqrt(a * a + b * b + c * c + d * d);
}

inline double einstein_asymptotic_norm(const EinsteinAsymptotics& asym, double s,
                                       const KasnerBackground& bg) {
    const double a = freq_adapted_norm(asym.kappa_inf_field(), s + 0.5, bg);
    const double b = freq_adapted_norm(asym.upsilon_inf_field(), s + 0.5, bg);
    const double c = sobolev_norm(asym.psi_inf_field(), s + 0.5);
    const double d = sobolev_norm(asym.phi_tilde_inf_field(), s + 0.5);
    return std::sqrt(a * a + b * b + c * c + d * d);
}

inline std::pair<double, double> einstein_hilbert_norms(const EinsteinCauchyData& data,
                                                        const EinsteinAsymptotics& asym, double s,
                                                        const KasnerBackground& bg) {
    return {einstein_cauchy_norm(data, s), einstein_asymptotic_norm(asym, s, bg)};
}

// ---------------------------------------------------------------------------
// Elliptic estimate report

struct EllipticCheck {
    double tr_eta_ratio = 0; // |tr eta| / (tau^{-3/2} E^{1/2})
    double nu_ratio = 0;
    double chi_ratio = 0;    // |chi|_g / (t tau^{-3/2} E^{1/2})
    double nu_low_ratio = 0; // low-regime lapse against its log-corrected majorant
};

inline EllipticCheck elliptic_estimates_check(const KasnerBackground& bg, const Mode& lambda,
                                              double t, const EinsteinModeState& st) {
    EllipticCheck out;
    const double T = tau(bg, lambda, t);
    const cplx nu = lapse_solve(bg, lambda, t, st.eta, st.gauge);
    if (T >= bg.tau_ring) {
        const double E = einstein_energy_high(bg, lambda, t, st);
        const double unit = std::pow(T, -1.5) * std::sqrt(std::max(E, 0.0));
        if (unit > 0) {
            out.tr_eta_ratio = std::abs(detail::tr(st.eta, bg.D)) / unit;
            out.nu_ratio = std::abs(nu) / unit;
            const auto chi = shift_solve_cmcsh(bg, lambda, t, st.eta, nu, st.phi);
            out.chi_ratio = g_norm(bg, t, chi, 0) / (t * unit);
        }
    }
    if (T <= 1.0) {
        const double ts = t_star(bg, lambda);
        EinsteinRenormState rn = renorm_from_physical(bg, st, ts);
        const double E = einstein_energy_low(bg, lambda, ts, t, rn);
        double maj = 0;
        for (int a = 0; a < bg.D; ++a)
            maj = std::max(maj, std::pow(t / ts, 2.0 - 2.0 * bg.p[a]));
        maj *= (1.0 + std::log(ts / t)) * std::sqrt(std::max(E, 0.0));
        if (maj > 0) out.nu_low_ratio = std::abs(nu) / maj;
    }
    return out;
}

} // namespace kasner

#endif
