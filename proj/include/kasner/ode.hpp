#ifndef KASNER_ODE_HPP
#define KASNER_ODE_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <ostream>
#include <vector>

#include "kasner/errors.hpp"

namespace kasner {

using cplx = std::complex<double>;

/// Right-hand side in logarithmic time: rhs(t, y, dy) fills dy = t * d y / dt.
/// Every system in this artifact is linear in the state.
struct OdeSystem {
    int dim = 0; // complex state dimension
    std::function<void(double, const cplx*, cplx*)> rhs;
    bool stiff_hint = false;
};

struct IntegratorConfig {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    long max_steps = 4000000;
    std::ostream* step_trace = nullptr; // optional CSV sink: t, state, step size, error estimate
};

inline void write_step_trace_header(std::ostream& os, int dim) {
    os << "t";
    for (int i = 0; i < dim; ++i) os << ",re" << i << ",im" << i;
    os << ",h,err\n";
}

struct IntegrateStats {
    long steps = 0;
    long rejected = 0;
    long rhs_evals = 0;
};

namespace detail {

// Dormand-Prince 5(4) coefficients.
struct Dopri5 {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    // difference between 5th and embedded 4th order weights
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

} // namespace detail

/// Integrator over s = log t with an embedded adaptive RK 5(4) pair. Visits
/// each time in `samples` exactly (samples must be sorted in the direction of
/// integration, strictly inside [t_from, t_to]); on_sample may be null.
inline IntegrateStats integrate_sampled(const OdeSystem& sys, std::vector<cplx>& y, double t_from,
                                        double t_to, const IntegratorConfig& cfg,
                                        const std::vector<double>& samples,
                                        const std::function<void(double, const std::vector<cplx>&)>& on_sample) {
    using D5 = detail::Dopri5;
    if (!(t_from > 0) || !(t_to > 0)) throw Error("integrate: times must be positive");
    if (!(cfg.rel_tol > 0 && cfg.rel_tol <= 1e-2) || !(cfg.abs_tol > 0))
        throw Error("integrate: tolerances must satisfy 0 < rel_tol <= 1e-2, abs_tol > 0");
    IntegrateStats st;
    const int n = sys.dim;
    double s = std::log(t_from);
    const double s_end = std::log(t_to);
    if (s == s_end) return st;
    const double dir = s_end > s ? 1.0 : -1.0;

    std::vector<cplx> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), yt(n), ynew(n);
    auto eval = [&](double sv, const std::vector<cplx>& yv, std::vector<cplx>& out) {
        sys.rhs(std::exp(sv), yv.data(), out.data());
        ++st.rhs_evals;
    };

    std::size_t next_sample = 0;
    eval(s, y, k1);
    // initial step from the ratio of state to derivative scale
    double h;
    {
        double ny = 0, nf = 0;
        for (int i = 0; i < n; ++i) {
            ny += std::norm(y[i]);
            nf += std::norm(k1[i]);
        }
        h = 0.01 * std::sqrt((ny + 1e-30) / (nf + 1e-30));
        h = std::min(h, 0.1 * std::abs(s_end - s));
        h = dir * std::clamp(h, 1e-8, 0.5);
    }

    bool fsal_valid = true;
    while (dir * (s_end - s) > 1e-14 * std::max(1.0, std::abs(s_end))) {
        if (++st.steps > cfg.max_steps) throw StepLimitExceeded("integrate: step limit");
        double s_target = s_end;
        if (next_sample < samples.size()) {
            const double ss = std::log(samples[next_sample]);
            if (dir * (ss - s) > 0) s_target = ss;
            else { ++next_sample; --st.steps; continue; }
        }
        if (dir * (s + h - s_target) > 0) h = s_target - s;
        if (!fsal_valid) { eval(s, y, k1); fsal_valid = true; }

        for (int i = 0; i < n; ++i) yt[i] = y[i] + h * (D5::a21 * k1[i]);
        eval(s + D5::c2 * h, yt, k2);
        for (int i = 0; i < n; ++i) yt[i] = y[i] + h * (D5::a31 * k1[i] + D5::a32 * k2[i]);
        eval(s + D5::c3 * h, yt, k3);
        for (int i = 0; i < n; ++i)
            yt[i] = y[i] + h * (D5::a41 * k1[i] + D5::a42 * k2[i] + D5::a43 * k3[i]);
        eval(s + D5::c4 * h, yt, k4);
        for (int i = 0; i < n; ++i)
            yt[i] = y[i] + h * (D5::a51 * k1[i] + D5::a52 * k2[i] + D5::a53 * k3[i] + D5::a54 * k4[i]);
        eval(s + D5::c5 * h, yt, k5);
        for (int i = 0; i < n; ++i)
            yt[i] = y[i] + h * (D5::a61 * k1[i] + D5::a62 * k2[i] + D5::a63 * k3[i] +
                                D5::a64 * k4[i] + D5::a65 * k5[i]);
        eval(s + h, yt, k6);
        for (int i = 0; i < n; ++i)
            ynew[i] = y[i] + h * (D5::b1 * k1[i] + D5::b3 * k3[i] + D5::b4 * k4[i] +
                                  D5::b5 * k5[i] + D5::b6 * k6[i]);
        eval(s + h, ynew, k7);

        double err2 = 0;
        for (int i = 0; i < n; ++i) {
            const cplx e = h * (D5::e1 * k1[i] + D5::e3 * k3[i] + D5::e4 * k4[i] + D5::e5 * k5[i] +
                                D5::e6 * k6[i] + D5::e7 * k7[i]);
            const double sc = cfg.abs_tol +
                              cfg.rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
            err2 += std::norm(e) / (sc * sc);
        }
        const double err = std::sqrt(err2 / n);
        if (!std::isfinite(err)) throw NonFiniteState("integrate: non-finite error estimate");
        if (err <= 1.0) {
            s += h;
            y = ynew;
            std::swap(k1, k7); // FSAL
            for (const cplx& v : y)
                if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                    throw NonFiniteState("integrate: non-finite state");
            if (cfg.step_trace) {
                char buf[64];
                std::snprintf(buf, sizeof buf, "%.17g", std::exp(s));
                *cfg.step_trace << buf;
                for (const cplx& v : y) {
                    std::snprintf(buf, sizeof buf, ",%.17g,%.17g", v.real(), v.imag());
                    *cfg.step_trace << buf;
                }
                std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", h, err);
                *cfg.step_trace << buf;
            }
            if (next_sample < samples.size() &&
                std::abs(s - std::log(samples[next_sample])) <= 1e-13 * std::max(1.0, std::abs(s))) {
                if (on_sample) on_sample(samples[next_sample], y);
                ++next_sample;
            }
            h *= std::clamp(0.9 * std::pow(std::max(err, 1e-10), -0.2), 1.0, 5.0);
        } else {
            ++st.rejected;
            h *= std::clamp(0.9 * std::pow(err, -0.2), 0.2, 0.9);
            fsal_valid = true; // k1 still matches (s, y)
        }
        if (std::abs(h) < 1e-16 * std::max(1.0, std::abs(s)))
            throw Error("integrate: step size underflow");
    }
    return st;
}

inline std::pair<std::vector<cplx>, IntegrateStats> integrate(const OdeSystem& sys,
                                                              std::vector<cplx> y0, double t_from,
                                                              double t_to,
                                                              const IntegratorConfig& cfg = {}) {
    IntegrateStats st = integrate_sampled(sys, y0, t_from, t_to, cfg, {}, nullptr);
    return {std::move(y0), st};
}

// ---------------------------------------------------------------------------
// Fuchsian launcher

/// Majorant data for starting a solution from its limit at t = 0. tail_bound
/// must be nondecreasing in t and tail_time(tol) must return a t <= t_max with
/// tail_bound(t) <= tol, or throw TailUnreachable.
struct FuchsianSpec {
    std::function<double(double)> tail_bound;
    double t_max = 1.0;
    double epsilon = 1.0; // t^epsilon weight of the right-hand side

    double tail_time(double tol) const {
        if (!(tol > 0)) throw Error("tail_time: tolerance must be positive");
        double hi = t_max;
        if (tail_bound(hi) <= tol) return hi;
        double lo = hi;
        while (tail_bound(lo) > tol) {
            lo *= 0.25;
            if (lo < 1e-300) throw TailUnreachable("tail_time: no admissible start time above 1e-300");
        }
        for (int it = 0; it < 200 && hi / lo > 1.0 + 1e-12; ++it) {
            const double mid = std::sqrt(lo * hi);
            (tail_bound(mid) <= tol ? lo : hi) = mid;
        }
        return lo;
    }
};

namespace detail {

// Adaptive Simpson for vector integrands over u in [a, b], max-norm control.
inline void adaptive_simpson(const std::function<void(double, std::vector<cplx>&)>& f, double a,
                             double b, const std::vector<cplx>& fa, const std::vector<cplx>& fm,
                             const std::vector<cplx>& fb, double tol, int depth,
                             std::vector<cplx>& acc) {
    const int n = int(acc.size());
    const double m = 0.5 * (a + b), h = b - a;
    std::vector<cplx> fl(n), fr(n);
    f(0.5 * (a + m), fl);
    f(0.5 * (m + b), fr);
    double dev = 0;
    std::vector<cplx> s2(n);
    for (int i = 0; i < n; ++i) {
        const cplx s1 = h / 6.0 * (fa[i] + 4.0 * fm[i] + fb[i]);
        s2[i] = h / 12.0 * (fa[i] + 4.0 * fl[i] + 2.0 * fm[i] + 4.0 * fr[i] + fb[i]);
        dev = std::max(dev, std::abs(s2[i] - s1));
    }
    if (depth <= 0 || dev < 15.0 * tol) {
        for (int i = 0; i < n; ++i) acc[i] += s2[i];
        return;
    }
    adaptive_simpson(f, a, m, fa, fl, fm, 0.5 * tol, depth - 1, acc);
    adaptive_simpson(f, m, b, fm, fr, fb, 0.5 * tol, depth - 1, acc);
}

} // namespace detail

/// Starts the solution with limit v at t = 0: picks t0 with tail_bound(t0) <=
/// tail_tol and returns v plus one Picard correction, the integral of the
/// right-hand side frozen at v over (0, t0] in d log t. The correction is
/// evaluated by adaptive quadrature; the returned state deviates from the true
/// solution by O(tail_tol^2) relative to |v|.
inline std::pair<std::vector<cplx>, double> fuchsian_launch(const OdeSystem& sys,
                                                            const std::vector<cplx>& v,
                                                            const FuchsianSpec& spec,
                                                            double tail_tol,
                                                            const IntegratorConfig& = {}) {
    const double t0 = spec.tail_time(tail_tol);
    double t_cut;
    try {
        t_cut = spec.tail_time(tail_tol * tail_tol);
    } catch (const TailUnreachable&) {
        t_cut = 1e-300;
    }
    t_cut = std::min(t_cut, t0);
    std::vector<cplx> y = v;
    if (t_cut < t0) {
        const double U = std::log(t0 / t_cut);
        auto f = [&](double u, std::vector<cplx>& out) { sys.rhs(t0 * std::exp(-u), v.data(), out.data()); };
        double vn = 0;
        for (const cplx& c : v) vn = std::max(vn, std::abs(c));
        const double tol = std::max(tail_tol * tail_tol * (vn + 1.0), 1e-300) / std::max(U, 1.0);
        std::vector<cplx> fa(sys.dim), fm(sys.dim), fb(sys.dim), acc(sys.dim, cplx(0, 0));
        f(0.0, fa);
        f(0.5 * U, fm);
        f(U, fb);
        detail::adaptive_simpson(f, 0.0, U, fa, fm, fb, tol, 40, acc);
        for (int i = 0; i < sys.dim; ++i) y[i] += acc[i];
    }
    return {std::move(y), t0};
}

} // namespace kasner

#endif
