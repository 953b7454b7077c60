#ifndef KASNER_BACKGROUND_HPP
#define KASNER_BACKGROUND_HPP

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "kasner/errors.hpp"

namespace kasner {

using Mode = std::vector<int>; // Fourier mode lambda in Z^D

inline bool is_zero_mode(const Mode& lambda) {
    for (int c : lambda)
        if (c != 0) return false;
    return true;
}

inline double mode_abs2(const Mode& lambda) {
    double s = 0;
    for (int c : lambda) s += double(c) * double(c);
    return s;
}

/// Background Kasner geometry: exponents p_i, scalar coefficient p_phi,
/// and derived quantities cached at construction.
struct KasnerBackground {
    int D = 0;
    std::vector<double> p;
    double p_phi = 0.0;

    double delta = 0.0;      // min over i and j != k of (1 + p_i - p_j - p_k)
    bool non_degenerate = false; // max_i p_i < 1 strictly
    bool subcritical = false;    // delta > 1e-9
    double zeta_min = 0.0;   // min_i 1/(1 - p_i), finite only if non-degenerate
    double zeta_max = 0.0;
    double tau_ring = 1.0;   // high-frequency regime threshold

    double g_dn(int i, double t) const { return std::pow(t, 2.0 * p[i]); }  // diag of g at time t
    double g_up(int i, double t) const { return std::pow(t, -2.0 * p[i]); } // diag of g^{-1}
    // diag of the mixed second fundamental form scaled by t
    double tk(int i) const { return -p[i]; }
};

inline double subcriticality_margin(const std::vector<double>& p) {
    const int D = int(p.size());
    double m = std::numeric_limits<double>::infinity();
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j)
            for (int k = 0; k < D; ++k) {
                if (j == k) continue;
                m = std::min(m, 1.0 + p[i] - p[j] - p[k]);
            }
    return m;
}

inline double subcriticality_margin(const KasnerBackground& bg) {
    return subcriticality_margin(bg.p);
}

namespace detail {

// Positive definiteness of the high-frequency quadratic form on a (kappa, eta)
// entry pair with cross coefficient (zeta/tau)(1 + a*zeta), a = 2p_i - 2p_j:
// need 2 + 4 zeta^2 tau^2 > (1 + a*zeta)^2 on the admissible zeta range.
inline double select_tau_ring(const std::vector<double>& p, double zmin, double zmax) {
    static const double menu[] = {1.0, 1.5, 2.0, 3.0, 4.0, 8.0};
    const int D = int(p.size());
    const int nz = 65;
    for (double cand : menu) {
        bool ok = true;
        for (int i = 0; i < D && ok; ++i)
            for (int j = 0; j < D && ok; ++j) {
                const double a = 2.0 * (p[i] - p[j]);
                for (int m = 0; m < nz; ++m) {
                    const double z = zmin + (zmax - zmin) * double(m) / double(nz - 1);
                    const double lhs = 2.0 + 4.0 * z * z * cand * cand;
                    const double rhs = (1.0 + a * z) * (1.0 + a * z);
                    if (lhs <= rhs * (1.0 + 1e-9)) { ok = false; break; }
                }
            }
        if (ok) return cand;
    }
    return 8.0;
}

} // namespace detail

/// Validates the Kasner relations and caches derived quantities. Degenerate or
/// non-subcritical exponents are flagged, not rejected.
inline KasnerBackground make_background(const std::vector<double>& p, double p_phi) {
    if (p.size() < 2) throw Error("make_background: need D >= 2 exponents");
    double s1 = 0, s2 = 0;
    for (double pi : p) { s1 += pi; s2 += pi * pi; }
    s2 += 2.0 * p_phi * p_phi;
    if (std::abs(s1 - 1.0) > 1e-10 || std::abs(s2 - 1.0) > 1e-10) {
        std::ostringstream os;
        os << "Kasner relations violated: sum p = " << s1 << ", sum p^2 + 2 p_phi^2 = " << s2;
        throw KasnerRelationViolation(os.str());
    }
    KasnerBackground bg;
    bg.D = int(p.size());
    bg.p = p;
    bg.p_phi = p_phi;
    bg.delta = subcriticality_margin(p);
    const double pmax = *std::max_element(p.begin(), p.end());
    bg.non_degenerate = pmax < 1.0;
    bg.subcritical = bg.delta > 1e-9;
    if (bg.non_degenerate) {
        double zmin = std::numeric_limits<double>::infinity(), zmax = 0;
        for (double pi : p) {
            zmin = std::min(zmin, 1.0 / (1.0 - pi));
            zmax = std::max(zmax, 1.0 / (1.0 - pi));
        }
        bg.zeta_min = zmin;
        bg.zeta_max = zmax;
        bg.tau_ring = detail::select_tau_ring(p, zmin, zmax);
    } else {
        bg.zeta_min = bg.zeta_max = std::numeric_limits<double>::quiet_NaN();
        bg.tau_ring = std::numeric_limits<double>::quiet_NaN();
    }
    return bg;
}

/// The isotropic background p_i = 1/D, p_phi = sqrt((D-1)/(2D)).
inline KasnerBackground isotropic_background(int D) {
    std::vector<double> p(D, 1.0 / double(D));
    return make_background(p, std::sqrt((D - 1.0) / (2.0 * D)));
}

namespace detail {

inline double bg_rand(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return double(z >> 11) * 0x1.0p-53;
}

} // namespace detail

/// Deterministic sample from the subcritical variety: p = 1/D + r q with q a
/// random unit direction in the trace-free plane and p_phi fixed by the second
/// Kasner relation. Rejects samples with margin <= margin_min.
inline KasnerBackground random_subcritical_background(std::uint64_t seed, int D,
                                                      double margin_min = 0.05) {
    std::uint64_t st = seed ^ 0x853c49e6748fea9bULL;
    for (int attempt = 0; attempt < 10000; ++attempt) {
        std::vector<double> q(D);
        double mean = 0;
        for (double& v : q) {
            v = 2.0 * detail::bg_rand(st) - 1.0;
            mean += v;
        }
        mean /= D;
        double n2 = 0;
        for (double& v : q) {
            v -= mean;
            n2 += v * v;
        }
        if (n2 < 1e-12) continue;
        const double rmax = std::sqrt(1.0 - 1.0 / D);
        const double r = rmax * detail::bg_rand(st);
        std::vector<double> p(D);
        for (int i = 0; i < D; ++i) p[i] = 1.0 / D + r * q[i] / std::sqrt(n2);
        const double s2 = 1.0 / D + r * r;
        if (s2 >= 1.0 - 1e-6) continue;
        const double p_phi = std::sqrt(0.5 * (1.0 - s2));
        if (*std::max_element(p.begin(), p.end()) >= 0.98) continue;
        if (subcriticality_margin(p) <= margin_min) continue;
        return make_background(p, p_phi);
    }
    throw Error("random_subcritical_background: rejection sampling failed");
}

/// tau^2(t) = sum_i t^{2 - 2 p_i} lambda_i^2; zero for lambda = 0.
inline double tau2(const KasnerBackground& bg, const Mode& lambda, double t) {
    double s = 0;
    for (int i = 0; i < bg.D; ++i) {
        if (lambda[i] == 0) continue;
        const double li = double(lambda[i]);
        s += li * li * std::pow(t, 2.0 - 2.0 * bg.p[i]);
    }
    return s;
}

inline double tau(const KasnerBackground& bg, const Mode& lambda, double t) {
    return std::sqrt(tau2(bg, lambda, t));
}

/// zeta = 2 tau^2 / sum_i (2 - 2 p_i) t^{2-2p_i} lambda_i^2, evaluated with a
/// log-sum-exp rescaling so it stays finite when every term underflows.
inline double zeta(const KasnerBackground& bg, const Mode& lambda, double t) {
    if (is_zero_mode(lambda)) throw ZeroModeError("zeta: lambda = 0");
    const double s = std::log(t);
    double emax = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < bg.D; ++i) {
        if (lambda[i] == 0) continue;
        const double e = (2.0 - 2.0 * bg.p[i]) * s + 2.0 * std::log(std::abs(double(lambda[i])));
        emax = std::max(emax, e);
    }
    double num = 0, den = 0;
    for (int i = 0; i < bg.D; ++i) {
        if (lambda[i] == 0) continue;
        const double e = (2.0 - 2.0 * bg.p[i]) * s + 2.0 * std::log(std::abs(double(lambda[i])));
        const double w = std::exp(e - emax);
        num += 2.0 * w;
        den += (2.0 - 2.0 * bg.p[i]) * w;
    }
    return num / den;
}

/// Root of tau_lambda(t) = 1 to relative tolerance 1e-14. Bisection on
/// log t in an analytic bracket, then Newton polish on log tau^2. Returns 1
/// for lambda = 0 by convention.
inline double t_star(const KasnerBackground& bg, const Mode& lambda) {
    if (is_zero_mode(lambda)) return 1.0;
    if (!bg.non_degenerate)
        throw DegenerateBackground("t_star: requires max_i p_i < 1");
    // Bracket: each summand of tau^2(t*) is <= 1, so t* <= |lambda_i|^{-1/(1-p_i)}
    // per active axis; at t = min_i (D lambda_i^2)^{-1/(2-2p_i)} every summand
    // is <= 1/D, so tau^2 <= 1 there.
    double s_hi = 0.0, s_lo = 0.0;
    bool first = true;
    for (int i = 0; i < bg.D; ++i) {
        if (lambda[i] == 0) continue;
        const double l2 = double(lambda[i]) * double(lambda[i]);
        const double hi = -0.5 * std::log(l2) / (1.0 - bg.p[i]);
        const double lo = -std::log(bg.D * l2) / (2.0 - 2.0 * bg.p[i]);
        if (first) { s_hi = hi; s_lo = lo; first = false; }
        else { s_hi = std::min(s_hi, hi); s_lo = std::min(s_lo, lo); }
    }
    s_hi = std::min(s_hi, 0.0);
    if (s_lo > s_hi) s_lo = s_hi - 1.0;
    // g(s) = log tau^2(e^s), increasing, via log-sum-exp
    auto g = [&](double s) {
        double emax = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < bg.D; ++i) {
            if (lambda[i] == 0) continue;
            const double e = (2.0 - 2.0 * bg.p[i]) * s + 2.0 * std::log(std::abs(double(lambda[i])));
            emax = std::max(emax, e);
        }
        double acc = 0;
        for (int i = 0; i < bg.D; ++i) {
            if (lambda[i] == 0) continue;
            const double e = (2.0 - 2.0 * bg.p[i]) * s + 2.0 * std::log(std::abs(double(lambda[i])));
            acc += std::exp(e - emax);
        }
        return emax + std::log(acc);
    };
    double a = s_lo, b = s_hi;
    if (g(a) > 0) a = b - 2.0; // bracket guard; g(b) >= 0 by construction
    while (g(a) > 0) { b = a; a -= 2.0; }
    for (int it = 0; it < 40 && (b - a) > 0.25; ++it) {
        const double m = 0.5 * (a + b);
        (g(m) < 0 ? a : b) = m;
    }
    double s = 0.5 * (a + b);
    for (int it = 0; it < 100; ++it) {
        const double gv = g(s);
        if (std::abs(gv) < 4e-15) break; // |g| ~ 2 |tau - 1| near the root
        (gv < 0 ? a : b) = s;
        const double gp = 2.0 / zeta(bg, lambda, std::exp(s)); // d/ds log tau^2
        double sn = s - gv / gp;
        if (!(sn > a && sn < b)) sn = 0.5 * (a + b); // safeguarded bisection step
        if (sn == s) break;
        s = sn;
    }
    return std::exp(s);
}

/// Closed form of int_t^T s^{2 p_i - 2 p_j} ds/s: log(T/t) when p_i = p_j,
/// otherwise (T^a - t^a)/a with a = 2 p_i - 2 p_j, computed via expm1 to stay
/// accurate as a -> 0. Requires 0 < t <= T.
inline double g_integral(const KasnerBackground& bg, int i, int j, double t, double T) {
    const double a = 2.0 * (bg.p[i] - bg.p[j]);
    const double L = std::log(T / t);
    if (std::abs(a) < 1e-12) return L;
    // (T^a - t^a)/a = -T^a expm1(-a L)/a
    return -std::pow(T, a) * std::expm1(-a * L) / a;
}

/// D x D table of g_integral values; entry (i,j) multiplies kappa_j^i in the
/// renormalized metric quantity.
inline std::vector<double> g_table(const KasnerBackground& bg, double t, double T) {
    std::vector<double> G(size_t(bg.D) * bg.D);
    for (int i = 0; i < bg.D; ++i)
        for (int j = 0; j < bg.D; ++j)
            G[size_t(i) * bg.D + j] = g_integral(bg, i, j, t, T);
    return G;
}

/// Per-mode derived quantities fixed for the whole evolution of one mode.
struct ModeGeometry {
    Mode lambda;
    double t_star = 1.0;   // time where tau = 1 (1 for lambda = 0)
    double tau_ring = 1.0; // regime threshold copied from the background
};

inline ModeGeometry make_mode_geometry(const KasnerBackground& bg, const Mode& lambda) {
    ModeGeometry mg;
    mg.lambda = lambda;
    mg.t_star = t_star(bg, lambda);
    mg.tau_ring = bg.tau_ring;
    return mg;
}

/// Diagonal metric data at a fixed time.
struct MetricSample {
    double t;
    std::vector<double> g_diag;     // t^{2 p_i}
    std::vector<double> g_inv_diag; // t^{-2 p_i}
    std::vector<double> weingarten_diag; // -p_i
};

inline MetricSample make_metric_sample(const KasnerBackground& bg, double t) {
    MetricSample m;
    m.t = t;
    m.g_diag.resize(bg.D);
    m.g_inv_diag.resize(bg.D);
    m.weingarten_diag.resize(bg.D);
    for (int i = 0; i < bg.D; ++i) {
        m.g_diag[i] = bg.g_dn(i, t);
        m.g_inv_diag[i] = bg.g_up(i, t);
        m.weingarten_diag[i] = -bg.p[i];
    }
    return m;
}

/// Text record {D, p[], p_phi}; exponents printed with 17 significant digits.
inline void write_background(std::ostream& os, const KasnerBackground& bg) {
    char buf[64];
    os << "kasner-background v1\n";
    os << "D " << bg.D << "\n";
    os << "p";
    for (double pi : bg.p) {
        std::snprintf(buf, sizeof buf, " %.17g", pi);
        os << buf;
    }
    os << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", bg.p_phi);
    os << "p_phi " << buf << "\n";
}

inline KasnerBackground read_background(std::istream& is) {
    std::string header, word;
    std::getline(is, header);
    if (header != "kasner-background v1")
        throw Error("read_background: bad header '" + header + "'");
    int D = 0;
    is >> word >> D;
    if (word != "D" || D < 2) throw Error("read_background: bad D record");
    is >> word;
    if (word != "p") throw Error("read_background: bad p record");
    std::vector<double> p(D);
    for (double& pi : p) is >> pi;
    double p_phi = 0;
    is >> word >> p_phi;
    if (word != "p_phi" || !is) throw Error("read_background: bad p_phi record");
    return make_background(p, p_phi);
}

} // namespace kasner

#endif
