// Runs one linearized-gravity mode down to its asymptotic data and back.
#include <cstdio>

#include "kasner/einstein_scatter.hpp"

int main() {
    using namespace kasner;
    const auto bg = make_background({0.5, 0.25, 0.25}, std::sqrt(0.3125));
    const EinsteinScattering engine(bg);
    const Mode lam{1, 1, 0};
    auto st = make_einstein_state(3);
    st.eta[1] = cplx(0.4, 0.0);
    st.kappa[3] = cplx(-0.2, 0.1);
    st.phi = cplx(0.3, 0);
    st.psi = cplx(-0.1, 0);
    st.t = 1.0;
    st = project_constraints(bg, lam, 1.0, st, true);
    EinsteinModeDiag diag;
    const auto asym = engine.scatter_down_mode(lam, st, Tolerances{}, EinsteinScatterOptions(), &diag);
    std::printf("t_star = %.6f, E(1) = %.6e, E_low(t_end) = %.6e\n", diag.t_star, diag.E1,
                diag.E_low_end);
    const auto back = engine.scatter_up_mode(lam, asym, Tolerances{});
    double err = 0;
    for (int k = 0; k < 9; ++k) err += std::abs(back.eta[k] - st.eta[k]);
    std::printf("round-trip eta error = %.3e\n", err);
    return 0;
}
