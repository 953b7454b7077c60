#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kasner/ode.hpp"

using namespace kasner;
using Catch::Approx;

TEST_CASE("zero right-hand side leaves the state unchanged") {
    OdeSystem sys;
    sys.dim = 3;
    sys.rhs = [](double, const cplx*, cplx* dy) { dy[0] = dy[1] = dy[2] = cplx(0, 0); };
    auto [y, st] = integrate(sys, {cplx(1, 2), cplx(-3, 0), cplx(0, 4)}, 1.0, 1e-6);
    CHECK(y[0] == cplx(1, 2));
    CHECK(y[1] == cplx(-3, 0));
    CHECK(y[2] == cplx(0, 4));
    CHECK(st.steps > 0);
}

TEST_CASE("t x' = x integrates to x = t") {
    OdeSystem sys;
    sys.dim = 1;
    sys.rhs = [](double, const cplx* y, cplx* dy) { dy[0] = y[0]; };
    IntegratorConfig cfg{1e-10, 1e-14};
    auto [y, st] = integrate(sys, {cplx(1, 0)}, 1.0, std::exp(1.0), cfg);
    CHECK(y[0].real() == Approx(std::exp(1.0)).epsilon(1e-10));
}

TEST_CASE("oscillator accuracy both directions") {
    // t d/dt (x, v) = (v, -omega^2 x) in s = log t: harmonic in s
    const double om = 5.0;
    OdeSystem sys;
    sys.dim = 2;
    sys.rhs = [om](double, const cplx* y, cplx* dy) {
        dy[0] = y[1];
        dy[1] = -om * om * y[0];
    };
    IntegratorConfig cfg{1e-10, 1e-14};
    const double t1 = 0.03;
    auto [y, st1] = integrate(sys, {cplx(1, 0), cplx(0, 0)}, 1.0, t1, cfg);
    const double s = std::log(t1);
    CHECK(y[0].real() == Approx(std::cos(om * s)).margin(1e-8));
    CHECK(y[1].real() == Approx(-om * std::sin(om * s)).margin(1e-7));
    SECTION("reversibility") {
        auto [back, st2] = integrate(sys, y, t1, 1.0, cfg);
        CHECK(std::abs(back[0] - cplx(1, 0)) < 100 * cfg.rel_tol);
        CHECK(std::abs(back[1]) < 100 * cfg.rel_tol * om);
    }
}

TEST_CASE("linearity of the flow") {
    OdeSystem sys;
    sys.dim = 2;
    sys.rhs = [](double t, const cplx* y, cplx* dy) {
        dy[0] = y[1] * t;
        dy[1] = -3.0 * y[0] + 0.5 * y[1];
    };
    IntegratorConfig cfg{1e-10, 1e-13};
    const std::vector<cplx> u{cplx(1, 0.5), cplx(0, -2)};
    const std::vector<cplx> w{cplx(-0.3, 0), cplx(1, 1)};
    const cplx a(0.7, -0.2), b(1.3, 0.4);
    auto [fu, s1] = integrate(sys, u, 1.0, 0.02, cfg);
    auto [fw, s2] = integrate(sys, w, 1.0, 0.02, cfg);
    std::vector<cplx> mix{a * u[0] + b * w[0], a * u[1] + b * w[1]};
    auto [fm, s3] = integrate(sys, mix, 1.0, 0.02, cfg);
    for (int i = 0; i < 2; ++i) {
        const cplx want = a * fu[i] + b * fw[i];
        CHECK(std::abs(fm[i] - want) <= 10 * cfg.rel_tol * (1.0 + std::abs(want)));
    }
}

TEST_CASE("sampled integration hits requested times") {
    OdeSystem sys;
    sys.dim = 1;
    sys.rhs = [](double, const cplx* y, cplx* dy) { dy[0] = y[0]; }; // x = t
    std::vector<double> samples{0.5, 0.25, 0.1};
    std::vector<std::pair<double, double>> seen;
    std::vector<cplx> y{cplx(1, 0)};
    integrate_sampled(sys, y, 1.0, 0.05, IntegratorConfig{1e-11, 1e-14}, samples,
                      [&](double t, const std::vector<cplx>& yv) {
                          seen.emplace_back(t, yv[0].real());
                      });
    REQUIRE(seen.size() == 3);
    for (const auto& [t, x] : seen) CHECK(x == Approx(t).epsilon(1e-9));
}

TEST_CASE("error paths") {
    OdeSystem sys;
    sys.dim = 1;
    sys.rhs = [](double, const cplx* y, cplx* dy) { dy[0] = y[0]; };
    IntegratorConfig tight{1e-12, 1e-16, 5};
    CHECK_THROWS_AS(integrate(sys, {cplx(1, 0)}, 1.0, 100.0, tight), StepLimitExceeded);

    OdeSystem blow; // x = t^{-900} overflows on the way down
    blow.dim = 1;
    blow.rhs = [](double, const cplx* y, cplx* dy) { dy[0] = -900.0 * y[0]; };
    CHECK_THROWS_AS(integrate(blow, {cplx(1, 0)}, 1.0, 1e-4), NonFiniteState);
}

TEST_CASE("step trace dump") {
    OdeSystem sys;
    sys.dim = 1;
    sys.rhs = [](double, const cplx* y, cplx* dy) { dy[0] = y[0]; };
    std::ostringstream trace;
    write_step_trace_header(trace, 1);
    IntegratorConfig cfg;
    cfg.step_trace = &trace;
    integrate(sys, {cplx(1, 0)}, 1.0, 0.5, cfg);
    std::istringstream lines(trace.str());
    std::string line;
    std::getline(lines, line);
    CHECK(line == "t,re0,im0,h,err");
    int rows = 0;
    while (std::getline(lines, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 4);
    }
    CHECK(rows >= 1);
}

TEST_CASE("fuchsian launch: zero right-hand side returns v exactly") {
    OdeSystem sys;
    sys.dim = 2;
    sys.rhs = [](double, const cplx*, cplx* dy) { dy[0] = dy[1] = cplx(0, 0); };
    FuchsianSpec spec;
    spec.t_max = 1.0;
    spec.epsilon = 1.0;
    spec.tail_bound = [](double t) { return t; };
    auto [y, t0] = fuchsian_launch(sys, {cplx(2, -1), cplx(0, 3)}, spec, 1e-6);
    CHECK(t0 == Approx(1e-6).epsilon(1e-9));
    CHECK(y[0] == cplx(2, -1));
    CHECK(y[1] == cplx(0, 3));
}

TEST_CASE("fuchsian launch: toy closed form t x' = t^eps") {
    const double eps = 0.35;
    OdeSystem sys;
    sys.dim = 1;
    sys.rhs = [eps](double t, const cplx*, cplx* dy) { dy[0] = std::pow(t, eps); };
    FuchsianSpec spec;
    spec.t_max = 1.0;
    spec.epsilon = eps;
    spec.tail_bound = [eps](double t) { return std::pow(t, eps); };
    const double tol = 1e-4;
    auto [y, t0] = fuchsian_launch(sys, {cplx(0, 0)}, spec, tol);
    // one Picard correction carries the full integral up to the quadrature
    // truncation, which is bounded by tail_tol^2
    CHECK(y[0].real() == Approx(std::pow(t0, eps) / eps).margin(5 * tol * tol));
}

TEST_CASE("fuchsian tail convergence is at least first order") {
    // genuinely state-coupled system: t dV/dt = t^eps M V with limit v
    const double eps = 0.5;
    OdeSystem sys;
    sys.dim = 2;
    sys.rhs = [eps](double t, const cplx* y, cplx* dy) {
        const double w = std::pow(t, eps);
        dy[0] = w * (0.3 * y[0] - 1.1 * y[1]);
        dy[1] = w * (0.7 * y[0] + 0.2 * y[1]);
    };
    FuchsianSpec spec;
    spec.t_max = 1.0;
    spec.epsilon = eps;
    spec.tail_bound = [eps](double t) { return 2.0 * std::pow(t, eps); };
    const std::vector<cplx> v{cplx(1, 0), cplx(0, 1)};
    IntegratorConfig cfg{1e-12, 1e-15};
    // reference: launch much deeper and integrate to t = 0.3
    auto ref = fuchsian_launch(sys, v, spec, 1e-8);
    auto [yref, sr] = integrate(sys, ref.first, ref.second, 0.3, cfg);
    auto err_at = [&](double tail_tol) {
        auto lp = fuchsian_launch(sys, v, spec, tail_tol);
        auto [y, s] = integrate(sys, lp.first, lp.second, 0.3, cfg);
        return std::abs(y[0] - yref[0]) + std::abs(y[1] - yref[1]);
    };
    const double e1 = err_at(1e-3), e2 = err_at(5e-4);
    CHECK(e2 <= 0.6 * e1 + 1e-14);
}

TEST_CASE("tail time search failure is reported") {
    FuchsianSpec spec;
    spec.t_max = 1.0;
    spec.tail_bound = [](double) { return 1.0; }; // never below tolerance
    CHECK_THROWS_AS(spec.tail_time(1e-3), TailUnreachable);
}
