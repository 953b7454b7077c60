#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "kasner/background.hpp"
#include "kasner/bounds.hpp"

using namespace kasner;
using Catch::Approx;

namespace {

KasnerBackground iso3() { return isotropic_background(3); }

KasnerBackground aniso() {
    return make_background({0.5, 0.25, 0.25}, std::sqrt(0.3125));
}

} // namespace

TEST_CASE("Kasner relations and flags") {
    const auto bg = iso3();
    CHECK(bg.delta == Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(bg.non_degenerate);
    CHECK(bg.subcritical);

    const auto an = aniso();
    CHECK(an.delta == Approx(0.5).epsilon(1e-14));
    CHECK(an.non_degenerate);
    CHECK(an.zeta_min == Approx(4.0 / 3.0));
    CHECK(an.zeta_max == Approx(2.0));

    const auto flat = make_background({1.0, 0.0, 0.0}, 0.0);
    CHECK(flat.delta == Approx(0.0).margin(1e-15));
    CHECK_FALSE(flat.non_degenerate);
    CHECK_FALSE(flat.subcritical);

    CHECK_THROWS_AS(make_background({0.5, 0.5, 0.5}, 0.0), KasnerRelationViolation);
    CHECK_THROWS_AS(make_background({0.5, 0.25, 0.25}, 0.9), KasnerRelationViolation);
}

TEST_CASE("subcriticality margin examples") {
    CHECK(subcriticality_margin(iso3()) == Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(subcriticality_margin(aniso()) == Approx(0.5).epsilon(1e-14));
    CHECK(subcriticality_margin(std::vector<double>{1.0, 0.0, 0.0}) == Approx(0.0).margin(1e-15));
}

TEST_CASE("tau examples") {
    CHECK(tau(iso3(), {3, 4, 0}, 1.0) == Approx(5.0).epsilon(1e-14));
    // 0.5^1 + 0.5^1.5 = 0.85355339..., square root
    CHECK(tau(aniso(), {1, 1, 0}, 0.5) == Approx(0.92387953251128676).epsilon(1e-14));
    CHECK(tau2(iso3(), {0, 0, 0}, 0.37) == 0.0);
}

TEST_CASE("zeta examples and bounds") {
    // single-axis: exactly 1/(1 - p_1)
    CHECK(zeta(aniso(), {7, 0, 0}, 0.3) == Approx(2.0).epsilon(1e-14));
    CHECK(zeta(aniso(), {0, -3, 0}, 0.8) == Approx(4.0 / 3.0).epsilon(1e-14));
    // isotropic: exactly 1/(1 - 1/D) for any mode and time
    CHECK(zeta(iso3(), {2, 5, 1}, 0.123) == Approx(1.5).epsilon(1e-14));
    // hand evaluation 2*0.85355339/(0.5 + 1.5*0.35355339)
    CHECK(zeta(aniso(), {1, 1, 0}, 0.5) == Approx(1.6568542494923802).epsilon(1e-13));
    CHECK_THROWS_AS(zeta(iso3(), {0, 0, 0}, 0.5), ZeroModeError);
}

TEST_CASE("zeta stays finite at extreme times") {
    const auto an = aniso();
    const double z = zeta(an, {1, 1, 1}, 1e-290);
    CHECK(std::isfinite(z));
    CHECK(z >= an.zeta_min - 1e-12);
    CHECK(z <= an.zeta_max + 1e-12);
}

TEST_CASE("t_star closed-form roots") {
    CHECK(t_star(iso3(), {1, 0, 0}) == Approx(1.0).epsilon(1e-14));
    CHECK(t_star(iso3(), {2, 0, 0}) == Approx(0.35355339059327376).epsilon(1e-13));
    CHECK(t_star(aniso(), {0, 2, 0}) == Approx(0.39685026299204987).epsilon(1e-13));
    // mixed-axis root, value from an independent root solve
    CHECK(t_star(aniso(), {1, 1, 0}) == Approx(0.56984029099805327).epsilon(1e-12));
    CHECK(t_star(iso3(), {0, 0, 0}) == 1.0);
    const auto flat = make_background({1.0, 0.0, 0.0}, 0.0);
    CHECK_THROWS_AS(t_star(flat, {1, 0, 0}), DegenerateBackground);
}

TEST_CASE("t_star defining property on random backgrounds") {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const auto bg = random_subcritical_background(seed, 3);
        for (const Mode& lam : {Mode{1, 0, 0}, Mode{5, -3, 0}, Mode{17, 2, 9}, Mode{0, 0, 31}}) {
            const double ts = t_star(bg, lam);
            CHECK(ts > 0);
            CHECK(ts <= 1.0 + 1e-14);
            CHECK(tau(bg, lam, ts) == Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("g_integral closed forms") {
    const auto an = aniso();
    // equal exponents: log case
    CHECK(g_integral(an, 1, 2, std::exp(-1.0), 1.0) == Approx(1.0).epsilon(1e-14));
    // (1 - 0.25^0.5)/0.5 and (1 - 0.25^-0.5)/(-0.5)
    CHECK(g_integral(an, 0, 1, 0.25, 1.0) == Approx(1.0).epsilon(1e-14));
    CHECK(g_integral(an, 1, 0, 0.25, 1.0) == Approx(2.0).epsilon(1e-14));
    // near-equal exponents stay continuous against the log limit
    auto bg = make_background({0.5 + 1e-13, 0.25 - 1e-13, 0.25}, std::sqrt(0.3125));
    CHECK(g_integral(bg, 1, 2, 0.3, 0.9) == Approx(std::log(0.9 / 0.3)).epsilon(1e-9));
}

TEST_CASE("mode geometry caches the per-mode quantities") {
    const auto an = aniso();
    const auto mg = make_mode_geometry(an, {0, 2, 0});
    CHECK(mg.t_star == Approx(0.39685026299204987).epsilon(1e-13));
    CHECK(mg.tau_ring == an.tau_ring);
    CHECK(tau(an, mg.lambda, mg.t_star) == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("metric sample invariants") {
    const auto an = aniso();
    const auto m = make_metric_sample(an, 0.37);
    double trace = 0;
    for (int i = 0; i < an.D; ++i) {
        CHECK(m.g_diag[i] * m.g_inv_diag[i] == Approx(1.0).epsilon(1e-15));
        trace += m.weingarten_diag[i];
    }
    CHECK(trace == Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("background serialization round trip") {
    const auto an = aniso();
    std::stringstream ss;
    write_background(ss, an);
    const auto back = read_background(ss);
    CHECK(back.D == an.D);
    for (int i = 0; i < an.D; ++i) CHECK(back.p[i] == an.p[i]);
    CHECK(back.p_phi == an.p_phi);
}

TEST_CASE("check_bounds battery on reference modes") {
    const auto grid = log_grid(1e-6, 1.0, 64);
    SECTION("isotropic") {
        const auto rep = check_bounds(iso3(), {2, 0, 0}, grid);
        for (const auto& c : rep.checks) {
            INFO(c.name << " measured " << c.measured << " bound " << c.bound);
            CHECK(c.pass);
        }
    }
    SECTION("single-axis mode has constant zeta") {
        const auto an = aniso();
        const auto rep = check_bounds(an, {0, 0, 5}, grid);
        CHECK(rep.all_pass());
        for (double t : grid) CHECK(zeta(an, {0, 0, 5}, t) == Approx(4.0 / 3.0).epsilon(1e-13));
    }
    SECTION("mixed mode: strictly decreasing zeta, variation below 2 - 4/3") {
        const auto an = aniso();
        const auto rep = check_bounds(an, {1, 1, 0}, grid);
        CHECK(rep.all_pass());
        const double tv = zeta(an, {1, 1, 0}, grid.front()) - zeta(an, {1, 1, 0}, grid.back());
        CHECK(tv > 0);
        CHECK(tv <= 2.0 - 4.0 / 3.0 + 1e-12);
    }
}

TEST_CASE("zeta monotone and tau increasing on random backgrounds") {
    const auto grid = log_grid(1e-8, 1.0, 48);
    for (std::uint64_t seed = 20; seed < 26; ++seed) {
        const auto bg = random_subcritical_background(seed, 4);
        const Mode lam{3, -1, 0, 7};
        double prev_z = std::numeric_limits<double>::infinity();
        double prev_t2 = 0;
        for (double t : grid) {
            const double z = zeta(bg, lam, t);
            CHECK(z <= prev_z + 1e-10);
            CHECK(z >= bg.zeta_min - 1e-12);
            CHECK(z <= bg.zeta_max + 1e-12);
            prev_z = z;
            const double t2 = tau2(bg, lam, t);
            CHECK(t2 > prev_t2);
            prev_t2 = t2;
        }
    }
}

TEST_CASE("bounds battery generalizes across dimensions") {
    const auto grid = log_grid(1e-5, 1.0, 32);
    const auto b2 = isotropic_background(2);
    CHECK(check_bounds(b2, {3, -1}, grid).all_pass());
    const auto b4 = random_subcritical_background(8, 4);
    CHECK(check_bounds(b4, {1, 0, -2, 5}, grid).all_pass());
}

TEST_CASE("vacuum Kasner variety is never subcritical in D = 3") {
    // p on the vacuum circle: p = 1/3 + sqrt(2/3)(cos th e1 + sin th e2)
    const double r = std::sqrt(2.0 / 3.0);
    for (int k = 0; k < 500; ++k) {
        const double th = 2.0 * M_PI * k / 500.0 + 0.0007;
        const double e1[3] = {1 / std::sqrt(2.0), -1 / std::sqrt(2.0), 0};
        const double e2[3] = {1 / std::sqrt(6.0), 1 / std::sqrt(6.0), -2 / std::sqrt(6.0)};
        std::vector<double> p(3);
        for (int i = 0; i < 3; ++i)
            p[i] = 1.0 / 3.0 + r * (std::cos(th) * e1[i] + std::sin(th) * e2[i]);
        CHECK(subcriticality_margin(p) <= 1e-9);
    }
}
