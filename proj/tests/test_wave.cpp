#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "kasner/bounds.hpp"
#include "kasner/wave.hpp"

using namespace kasner;
using Catch::Approx;

namespace {

KasnerBackground iso3() { return isotropic_background(3); }

KasnerBackground aniso() { return make_background({0.5, 0.25, 0.25}, std::sqrt(0.3125)); }

} // namespace

TEST_CASE("wave right-hand side") {
    const auto bg = iso3();
    SECTION("zero state") {
        const auto d = wave_rhs(bg, {1, 0, 0}, 0.7, {cplx(0, 0), cplx(0, 0), 0.7});
        CHECK(d.phi == cplx(0, 0));
        CHECK(d.psi == cplx(0, 0));
    }
    SECTION("tau(1) = 1 plug-in") {
        const auto d = wave_rhs(bg, {1, 0, 0}, 1.0, {cplx(1, 0), cplx(0, 0), 1.0});
        CHECK(d.phi == cplx(0, 0));
        CHECK(d.psi.real() == Approx(-1.0).epsilon(1e-14));
    }
    SECTION("zero mode refused") {
        CHECK_THROWS_AS(wave_rhs(bg, {0, 0, 0}, 1.0, {cplx(1, 0), cplx(0, 0), 1.0}), ZeroModeError);
    }
    SECTION("finite differences of the oracle satisfy the system") {
        const Mode lam{2, 0, 0};
        const double t = 0.6, h = 1e-6;
        auto st = [&](double tt) { return bessel_oracle(bg, lam, 0.8, 0.4, tt); };
        const auto mid = st(t);
        const auto lo = st(t * std::exp(-h)), hi = st(t * std::exp(h));
        const cplx dphi = (hi.phi - lo.phi) / (2 * h); // d/ds with s = log t
        const cplx dpsi = (hi.psi - lo.psi) / (2 * h);
        const auto rhs = wave_rhs(bg, lam, t, mid);
        CHECK(std::abs(dphi - rhs.phi) < 1e-6);
        CHECK(std::abs(dpsi - rhs.psi) < 1e-6);
    }
}

TEST_CASE("renormalized right-hand side") {
    const auto bg = iso3();
    const Mode lam{3, 0, 0};
    const double ts = t_star(bg, lam);
    SECTION("log factor vanishes at t_star") {
        const auto d = wave_rhs_renorm(bg, lam, ts, ts, {cplx(0, 0), cplx(1, 0), ts});
        CHECK(d.psi.real() == Approx(-1.0).epsilon(1e-12)); // tau(t*) = 1
        CHECK(std::abs(d.phi_tilde) < 1e-12);
    }
    SECTION("zero state") {
        const auto d = wave_rhs_renorm(bg, lam, ts, 0.5 * ts, {cplx(0, 0), cplx(0, 0), 0.5 * ts});
        CHECK(d.psi == cplx(0, 0));
        CHECK(d.phi_tilde == cplx(0, 0));
    }
    SECTION("representations evolve consistently") {
        // step both forms across [0.9 t*, t*] and compare after conversion
        IntegratorConfig cfg{1e-11, 1e-14};
        const WaveModeState phys0{cplx(0.7, -0.1), cplx(-0.2, 0.4), ts};
        auto sys = OdeSystem{2, [&](double t, const cplx* y, cplx* dy) {
                                 const auto d = wave_rhs(bg, lam, t, {y[0], y[1], t});
                                 dy[0] = d.phi;
                                 dy[1] = d.psi;
                             }};
        auto rsys = OdeSystem{2, [&](double t, const cplx* y, cplx* dy) {
                                  const auto d =
                                      wave_rhs_renorm(bg, lam, ts, t, {y[0], y[1], t});
                                  dy[0] = d.psi;
                                  dy[1] = d.phi_tilde;
                              }};
        auto [yp, s1] = integrate(sys, {phys0.phi, phys0.psi}, ts, 0.9 * ts, cfg);
        const auto rn0 = wave_to_renorm(phys0, ts);
        auto [yr, s2] = integrate(rsys, {rn0.psi, rn0.phi_tilde}, ts, 0.9 * ts, cfg);
        const auto back = wave_from_renorm({yr[0], yr[1], 0.9 * ts}, ts);
        CHECK(std::abs(back.phi - yp[0]) < 1e-9);
        CHECK(std::abs(back.psi - yp[1]) < 1e-9);
    }
}

TEST_CASE("energies") {
    const auto bg = iso3();
    const Mode lam{1, 0, 0};
    SECTION("zero state") {
        CHECK(energy_high(bg, lam, 1.0, {cplx(0, 0), cplx(0, 0), 1.0}) == 0.0);
        CHECK(energy_low({cplx(0, 0), cplx(0, 0), 0.5}) == 0.0);
    }
    SECTION("plug-in values at tau = 1, zeta = 3/2") {
        CHECK(energy_high(bg, lam, 1.0, {cplx(1, 0), cplx(0, 0), 1.0}) == Approx(2.75));
        CHECK(energy_high(bg, lam, 1.0, {cplx(0, 0), cplx(1, 0), 1.0}) == Approx(2.25));
    }
    SECTION("low energy is the plain square sum") {
        CHECK(energy_low({cplx(3, 0), cplx(4, 0), 0.1}) == Approx(25.0));
    }
    SECTION("high and low energies are comparable at t_star") {
        // measured window, uniform over a few modes
        double lo = 1e300, hi = 0;
        for (int n : {1, 2, 5, 13, 40}) {
            const Mode m{n, 0, 0};
            const double ts = t_star(bg, m);
            const WaveModeState st{cplx(0.8, 0.1), cplx(-0.5, 0.6), ts};
            const double eh = energy_high(bg, m, ts, st);
            const double el = energy_low(wave_to_renorm(st, ts));
            lo = std::min(lo, eh / el);
            hi = std::max(hi, eh / el);
        }
        CHECK(hi / lo < 4.0);
    }
}

TEST_CASE("bessel oracle") {
    const auto bg = iso3();
    SECTION("reference values at t = 1") {
        const auto st = bessel_oracle(bg, {1, 0, 0}, 1.0, 0.0, 1.0);
        CHECK(st.phi.real() == Approx(0.51182767173591813).epsilon(1e-13));
        CHECK(st.psi.real() == Approx(-0.55793650791009964).epsilon(1e-13));
    }
    SECTION("J-branch tends to (1, 0)") {
        const auto st = bessel_oracle(bg, {1, 0, 0}, 1.0, 0.0, 1e-9);
        CHECK(st.phi.real() == Approx(1.0).margin(1e-10));
        CHECK(std::abs(st.psi) < 1e-8);
    }
    SECTION("Y-branch time derivative tends to 2/(pi zeta)") {
        const auto st = bessel_oracle(bg, {1, 0, 0}, 0.0, 1.0, 1e-10);
        CHECK(st.psi.real() == Approx(2.0 / (M_PI * 1.5)).epsilon(1e-8));
    }
    SECTION("mixed-exponent mode is refused") {
        CHECK_THROWS_AS(bessel_oracle(aniso(), {1, 1, 0}, 1.0, 0.0, 0.5), NotPowerLawMode);
    }
    SECTION("single-axis anisotropic mode works") {
        const auto an = aniso();
        const auto st = bessel_oracle(an, {0, 3, 0}, 1.0, 1.0, 0.7);
        CHECK(std::isfinite(st.phi.real()));
    }
}

TEST_CASE("integrated mode matches the Bessel oracle") {
    for (const auto& [bg, lam] : {std::pair{iso3(), Mode{2, 1, 2}}, std::pair{aniso(), Mode{0, 0, 4}}}) {
        const double ts = t_star(bg, lam);
        const auto start = bessel_oracle(bg, lam, 0.7, -0.4, 1.0);
        OdeSystem sys{2, [&bg = bg, &lam = lam](double t, const cplx* y, cplx* dy) {
                          const auto d = wave_rhs(bg, lam, t, {y[0], y[1], t});
                          dy[0] = d.phi;
                          dy[1] = d.psi;
                      }};
        IntegratorConfig cfg{1e-10, 1e-13};
        double worst = 0;
        std::vector<double> samples = log_grid(ts * 1.000001, 0.999999, 16);
        std::sort(samples.begin(), samples.end(), std::greater<>());
        std::vector<cplx> y{start.phi, start.psi};
        integrate_sampled(sys, y, 1.0, ts, cfg, samples, [&](double t, const std::vector<cplx>& yv) {
            const auto ref = bessel_oracle(bg, lam, 0.7, -0.4, t);
            const double sc = std::abs(ref.phi) + std::abs(ref.psi);
            worst = std::max(worst, (std::abs(yv[0] - ref.phi) + std::abs(yv[1] - ref.psi)) / sc);
        });
        CHECK(worst < 100 * cfg.rel_tol);
    }
}

TEST_CASE("scatter down") {
    const auto bg = iso3();
    const WaveScattering engine(bg);
    Tolerances tol;
    SECTION("zero data gives zero asymptotics") {
        WaveCauchyData data;
        data.phi_C.D = data.psi_C.D = 3;
        data.phi_C.set({1, 0, 0}, cplx(0, 0));
        data.psi_C.set({1, 0, 0}, cplx(0, 0));
        const auto asym = engine.scatter_down(data, tol);
        CHECK(asym.limits.at({1, 0, 0}).first == cplx(0, 0));
        CHECK(asym.limits.at({1, 0, 0}).second == cplx(0, 0));
    }
    SECTION("constant data is conserved bit-exactly") {
        WaveCauchyData data;
        data.phi_C.D = data.psi_C.D = 3;
        data.phi_C.set({0, 0, 0}, cplx(0.3, -0.7));
        data.psi_C.set({0, 0, 0}, cplx(1.25, 0.5));
        const auto asym = engine.scatter_down(data, tol);
        CHECK(asym.varphi0 == cplx(0.3, -0.7));
        CHECK(asym.psi0 == cplx(1.25, 0.5));
        // and back
        const auto back = engine.scatter_up(asym, tol);
        CHECK(back.phi_C.at({0, 0, 0}) == cplx(0.3, -0.7));
        CHECK(back.psi_C.at({0, 0, 0}) == cplx(1.25, 0.5));
    }
    SECTION("Y-branch seeded mode reaches psi_inf = 4/(3 pi)") {
        WaveCauchyData data;
        data.phi_C.D = data.psi_C.D = 3;
        const auto st = bessel_oracle(bg, {1, 0, 0}, 0.0, 1.0, 1.0);
        data.phi_C.set({1, 0, 0}, st.phi);
        data.psi_C.set({1, 0, 0}, st.psi);
        const auto asym = engine.scatter_down(data, tol);
        CHECK(asym.limits.at({1, 0, 0}).first.real() ==
              Approx(4.0 / (3.0 * M_PI)).epsilon(1e-6));
    }
}

TEST_CASE("round trip on band-limited data") {
    const auto bg = aniso();
    const WaveScattering engine(bg);
    Tolerances tol;
    WaveCauchyData data;
    data.phi_C = sample_band_limited_scalar(3, 3, 2, 2.5, true);
    data.psi_C = sample_band_limited_scalar(4, 3, 2, 2.0, true);
    const auto asym = engine.scatter_down(data, tol);
    const auto back = engine.scatter_up(asym, tol);
    double num = 0, den = 0;
    for (const auto& [lam, v] : data.phi_C.coeffs) {
        num += std::norm(back.phi_C.at(lam) - v) + std::norm(back.psi_C.at(lam) - data.psi_C.at(lam));
        den += std::norm(v) + std::norm(data.psi_C.at(lam));
    }
    CHECK(std::sqrt(num / den) < 1e-6);
}

TEST_CASE("round trip starting from asymptotic data") {
    // the opposite composition: launch from random limits, come back down
    const auto bg = aniso();
    const WaveScattering engine(bg);
    Tolerances tol;
    WaveAsymptotics asym;
    asym.D = 3;
    asym.psi0 = cplx(0.5, -0.25);
    asym.varphi0 = cplx(-1, 0.75);
    const auto psi_f = sample_band_limited_scalar(21, 3, 2, 2.0, false);
    const auto phi_f = sample_band_limited_scalar(22, 3, 2, 2.0, false);
    for (const auto& [lam, v] : psi_f.coeffs)
        if (!is_zero_mode(lam)) asym.limits[lam] = {v, phi_f.at(lam)};
    const auto data = engine.scatter_up(asym, tol);
    const auto back = engine.scatter_down(data, tol);
    double num = 0, den = 0;
    for (const auto& [lam, v] : asym.limits) {
        const auto& b = back.limits.at(lam);
        num += std::norm(b.first - v.first) + std::norm(b.second - v.second);
        den += std::norm(v.first) + std::norm(v.second);
    }
    CHECK(std::sqrt(num / den) < 1e-6);
    CHECK(back.psi0 == asym.psi0);
    CHECK(back.varphi0 == asym.varphi0);
}

TEST_CASE("oracle-constant asymptotics reproduce oracle Cauchy data") {
    // seed asymptotics with the exact Y-branch limits and compare at t = 1
    const auto bg = iso3();
    const WaveScattering engine(bg);
    Tolerances tol;
    tol.tail_tol = 1e-10;
    const Mode lam{1, 0, 0};
    const double z = 1.5; // zeta for the isotropic background
    // psi_inf = 2 cY/(pi z); phi_tilde_inf follows from the Y0/J0 small-x forms:
    // phi ~ cJ + (2 cY/pi)(log(x/2) + gamma) and log(t/t*) = z log(x/z)
    const double cJ = 0.35, cY = -0.8;
    const double gamma = 0.57721566490153286;
    const cplx psi_inf(2.0 * cY / (M_PI * z), 0);
    const cplx phi_tilde_inf(cJ + (2.0 * cY / M_PI) * (gamma + std::log(z / 2.0)), 0);
    WaveAsymptotics asym;
    asym.D = 3;
    asym.limits[lam] = {psi_inf, phi_tilde_inf};
    const auto data = engine.scatter_up(asym, tol);
    const auto ref = bessel_oracle(bg, lam, cJ, cY, 1.0);
    CHECK(std::abs(data.phi_C.at(lam) - ref.phi) < 2e-6);
    CHECK(std::abs(data.psi_C.at(lam) - ref.psi) < 2e-6);
}

TEST_CASE("round trips on random backgrounds and other dimensions") {
    Tolerances tol;
    for (std::uint64_t seed : {31u, 77u}) {
        const auto bg = random_subcritical_background(seed, 3);
        const WaveScattering engine(bg);
        WaveCauchyData data;
        data.phi_C = sample_band_limited_scalar(seed, 3, 1, 2.0, true);
        data.psi_C = sample_band_limited_scalar(seed + 1, 3, 1, 2.0, true);
        const auto back = engine.scatter_up(engine.scatter_down(data, tol), tol);
        double num = 0, den = 0;
        for (const auto& [lam, v] : data.phi_C.coeffs) {
            num += std::norm(back.phi_C.at(lam) - v) +
                   std::norm(back.psi_C.at(lam) - data.psi_C.at(lam));
            den += std::norm(v) + std::norm(data.psi_C.at(lam));
        }
        CHECK(std::sqrt(num / den) < 1e-6);
    }
    for (int D : {2, 4}) {
        const auto bg = isotropic_background(D);
        const WaveScattering engine(bg);
        WaveCauchyData data;
        data.phi_C = sample_band_limited_scalar(5, D, 1, 2.0, true);
        data.psi_C = sample_band_limited_scalar(6, D, 1, 2.0, true);
        const auto back = engine.scatter_up(engine.scatter_down(data, tol), tol);
        double num = 0, den = 0;
        for (const auto& [lam, v] : data.phi_C.coeffs) {
            num += std::norm(back.phi_C.at(lam) - v) +
                   std::norm(back.psi_C.at(lam) - data.psi_C.at(lam));
            den += std::norm(v) + std::norm(data.psi_C.at(lam));
        }
        CHECK(std::sqrt(num / den) < 1e-6);
    }
}

TEST_CASE("hilbert norms") {
    const auto bg = iso3();
    SECTION("zero") {
        WaveCauchyData d;
        d.phi_C.D = d.psi_C.D = 3;
        WaveAsymptotics a;
        a.D = 3;
        const auto [nc, na] = wave_hilbert_norms(d, a, 1.0, bg);
        CHECK(nc == 0.0);
        CHECK(na == 0.0);
    }
    SECTION("constant data") {
        WaveCauchyData d;
        d.phi_C.D = d.psi_C.D = 3;
        d.phi_C.set({0, 0, 0}, cplx(3, 0));
        d.psi_C.set({0, 0, 0}, cplx(4, 0));
        WaveAsymptotics a;
        a.D = 3;
        a.psi0 = cplx(4, 0);
        a.varphi0 = cplx(3, 0);
        const auto [nc, na] = wave_hilbert_norms(d, a, 0.7, bg);
        CHECK(nc == Approx(5.0));
        CHECK(na == Approx(5.0));
    }
    SECTION("single mode with vanishing corrected term") {
        WaveAsymptotics a;
        a.D = 3;
        a.limits[{2, 0, 0}] = {cplx(1, 0), cplx(0, 0)}; // phi_tilde_inf = 0
        CHECK(wave_asymptotic_norm(a, 0.0, bg) == Approx(std::pow(5.0, 0.25)).epsilon(1e-13));
        // the assembled varphi field carries -log t* times psi
        const auto v = a.varphi_inf_field(bg);
        CHECK(v.at({2, 0, 0}).real() == Approx(1.5 * std::log(2.0)).epsilon(1e-13));
    }
}

TEST_CASE("energy ratio uniformity across a dyadic sweep") {
    // two-sided Gronwall windows stay bounded as |lambda| grows
    const auto bg = aniso();
    IntegratorConfig cfg{1e-9, 1e-12};
    auto window_high = [&](int n) {
        const Mode lam{n, n, 0};
        const double ts = t_star(bg, lam);
        OdeSystem sys{2, [&](double t, const cplx* y, cplx* dy) {
                          const auto d = wave_rhs(bg, lam, t, {y[0], y[1], t});
                          dy[0] = d.phi;
                          dy[1] = d.psi;
                      }};
        std::vector<cplx> y{cplx(0.4, 0.2), cplx(1, -0.3)};
        const double E1 = energy_high(bg, lam, 1.0, {y[0], y[1], 1.0});
        double C = 1;
        auto samples = log_grid(ts * 1.000001, 0.999999, 24);
        std::sort(samples.begin(), samples.end(), std::greater<>());
        integrate_sampled(sys, y, 1.0, ts, cfg, samples, [&](double t, const std::vector<cplx>& yv) {
            const double E = energy_high(bg, lam, t, {yv[0], yv[1], t});
            C = std::max({C, E / E1, E1 / E});
        });
        return C;
    };
    const double C4 = window_high(4), C32 = window_high(32);
    CHECK(std::isfinite(C32));
    CHECK(C32 <= 2.0 * C4);
}

TEST_CASE("zero-mode conservation is exact") {
    const auto bg = iso3();
    const WaveScattering engine(bg);
    Tolerances tol;
    WaveCauchyData data;
    data.phi_C.D = data.psi_C.D = 3;
    const cplx a(0.123456789123, -7.5), b(1e-3, 2.25);
    data.phi_C.set({0, 0, 0}, a);
    data.psi_C.set({0, 0, 0}, b);
    const auto asym = engine.scatter_down(data, tol);
    const auto back = engine.scatter_up(asym, tol);
    CHECK(back.phi_C.at({0, 0, 0}) == a);
    CHECK(back.psi_C.at({0, 0, 0}) == b);
}

TEST_CASE("degenerate background refused by the engine") {
    const auto flat = make_background({1.0, 0.0, 0.0}, 0.0);
    CHECK_THROWS_AS(WaveScattering(flat), DegenerateBackground);
}
