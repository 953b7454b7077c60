#ifndef KASNER_BOUNDS_HPP
#define KASNER_BOUNDS_HPP

#include <cmath>
#include <string>
#include <vector>

#include "kasner/background.hpp"

namespace kasner {

struct BoundCheck {
    std::string name;
    double measured = 0; // quantity evaluated numerically
    double bound = 0;    // analytic majorant it must stay below
    bool pass = false;
    double slack() const { return bound - measured; }
};

struct BoundsReport {
    std::vector<BoundCheck> checks;
    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

namespace detail {

// Composite Simpson over s = log t on [sa, sb].
template <typename F>
double simpson_log(F&& f, double sa, double sb, int n) {
    if (n % 2) ++n;
    const double h = (sb - sa) / n;
    double acc = f(sa) + f(sb);
    for (int k = 1; k < n; ++k) acc += f(sa + k * h) * (k % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

} // namespace detail

/// Evaluates the closed-form analytic bounds on one mode over a time grid and
/// reports measured value vs bound for each. Grid times must lie in (0, 1].
inline BoundsReport check_bounds(const KasnerBackground& bg, const Mode& lambda,
                                 const std::vector<double>& t_grid) {
    if (is_zero_mode(lambda)) throw ZeroModeError("check_bounds: lambda = 0");
    if (!bg.non_degenerate) throw DegenerateBackground("check_bounds");
    BoundsReport rep;
    const double ts = t_star(bg, lambda);
    const double rel = 1e-10;

    // zeta range
    {
        double lo = std::numeric_limits<double>::infinity(), hi = 0;
        for (double t : t_grid) {
            const double z = zeta(bg, lambda, t);
            lo = std::min(lo, z);
            hi = std::max(hi, z);
        }
        rep.checks.push_back({"zeta_upper", hi, bg.zeta_max * (1 + rel), hi <= bg.zeta_max * (1 + rel)});
        rep.checks.push_back({"zeta_lower", bg.zeta_min * (1 - rel), lo, bg.zeta_min * (1 - rel) <= lo});
    }
    // zeta nonincreasing in t, and total variation <= zeta_max - zeta_min
    {
        std::vector<double> ts_sorted = t_grid;
        std::sort(ts_sorted.begin(), ts_sorted.end());
        double worst = 0; // max increase along increasing t
        for (size_t k = 1; k < ts_sorted.size(); ++k) {
            const double z0 = zeta(bg, lambda, ts_sorted[k - 1]);
            const double z1 = zeta(bg, lambda, ts_sorted[k]);
            worst = std::max(worst, z1 - z0);
        }
        rep.checks.push_back({"zeta_nonincreasing", worst, 1e-10, worst <= 1e-10});
        const double tv = zeta(bg, lambda, ts_sorted.front()) - zeta(bg, lambda, ts_sorted.back());
        const double tv_bound = (bg.zeta_max - bg.zeta_min) * (1 + rel) + 1e-14;
        rep.checks.push_back({"zeta_total_variation", tv, tv_bound, tv <= tv_bound});
    }
    // integral of tau^-alpha over [t*, 1] against alpha^{-1} zeta_max
    for (double alpha : {1.0, 2.0}) {
        auto f = [&](double s) { return std::pow(tau2(bg, lambda, std::exp(s)), -0.5 * alpha); };
        const double val = detail::simpson_log(f, std::log(ts), 0.0, 1024);
        const double bound = bg.zeta_max / alpha * (1 + 1e-6);
        std::string nm = "tau_integral_up_alpha" + std::to_string(int(alpha));
        rep.checks.push_back({nm, val, bound, val <= bound});
    }
    // integral of tau^2 (1 + log^2(t*/s)) ds/s over (0, t] against the
    // change-of-variables majorant zeta_max X^2 [1/2 + zeta_max^2 (a^2/2 + a/2 + 1/4)],
    // X = tau(t), a = log(1/X), valid for tau(t) <= 1
    for (double t : t_grid) {
        if (!(t <= ts)) continue;
        const double X2 = tau2(bg, lambda, t);
        const double X = std::sqrt(X2);
        if (!(X <= 1.0)) continue;
        auto f = [&](double s) {
            const double L = std::log(ts) - s;
            return tau2(bg, lambda, std::exp(s)) * (1.0 + L * L);
        };
        // truncate where the integrand is negligible
        const double pmax = 1.0 - 1.0 / bg.zeta_max;
        const double K = 50.0 / (2.0 * (1.0 - pmax));
        const double val = detail::simpson_log(f, std::log(t) - K, std::log(t), 2048);
        const double a = std::log(1.0 / std::max(X, 1e-300));
        const double bound =
            bg.zeta_max * X2 * (0.5 + bg.zeta_max * bg.zeta_max * (0.5 * a * a + 0.5 * a + 0.25)) *
            (1 + 1e-6);
        rep.checks.push_back({"tau_integral_down", val, bound, val <= bound});
        break; // one representative t per grid is enough for the battery
    }
    // |lambda|_g = tau/t, identity of the two evaluation routes
    {
        double worst = 0;
        for (double t : t_grid) {
            double lg2 = 0;
            for (int i = 0; i < bg.D; ++i)
                lg2 += bg.g_up(i, t) * double(lambda[i]) * double(lambda[i]);
            const double rhs = tau2(bg, lambda, t) / (t * t);
            worst = std::max(worst, std::abs(lg2 - rhs) / std::max(rhs, 1e-300));
        }
        rep.checks.push_back({"lambda_gnorm_identity", worst, 1e-12, worst <= 1e-12});
    }
    // G bound: |G(i,j; t, t*)| <= max{(t/t*)^{2pi-2pj}, 1} t*^{2pi-2pj} log(t*/t)
    {
        double worst = -std::numeric_limits<double>::infinity();
        bool ok = true;
        for (double t : t_grid) {
            if (!(t < ts)) continue;
            for (int i = 0; i < bg.D; ++i)
                for (int j = 0; j < bg.D; ++j) {
                    const double a = 2.0 * (bg.p[i] - bg.p[j]);
                    const double G = std::abs(g_integral(bg, i, j, t, ts));
                    const double bound = std::max(std::pow(t / ts, a), 1.0) * std::pow(ts, a) *
                                         std::log(ts / t) * (1 + 1e-9);
                    ok = ok && (G <= bound);
                    worst = std::max(worst, G - bound);
                }
        }
        rep.checks.push_back({"g_tensor_bound", worst, 0.0, ok});
    }
    // symbol growth window: t* <= min over active axes |lambda_i|^{-1/(1-p_i)}
    // and t*^{-1} <= (sqrt(D) |lambda|)^{1/(1-pmax)}
    {
        double up = 1.0;
        for (int i = 0; i < bg.D; ++i)
            if (lambda[i] != 0)
                up = std::min(up, std::pow(std::abs(double(lambda[i])), -1.0 / (1.0 - bg.p[i])));
        rep.checks.push_back({"tstar_upper_window", ts, up * (1 + 1e-9), ts <= up * (1 + 1e-9)});
        const double pmax = 1.0 - 1.0 / bg.zeta_max;
        const double cap = std::pow(std::sqrt(double(bg.D) * mode_abs2(lambda)), 1.0 / (1.0 - pmax));
        rep.checks.push_back({"tstar_lower_window", 1.0 / ts, cap * (1 + 1e-9), 1.0 / ts <= cap * (1 + 1e-9)});
    }
    return rep;
}

/// Log-spaced grid of n times in [t_lo, t_hi].
inline std::vector<double> log_grid(double t_lo, double t_hi, int n) {
    std::vector<double> g(n);
    const double a = std::log(t_lo), b = std::log(t_hi);
    for (int k = 0; k < n; ++k)
        g[k] = std::exp(a + (b - a) * (n == 1 ? 0.0 : double(k) / (n - 1)));
    return g;
}

} // namespace kasner

#endif
