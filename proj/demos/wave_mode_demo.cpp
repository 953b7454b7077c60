// Evolves one Fourier mode of the scalar wave across the full time range and
// prints the renormalized quantities approaching the singularity.
#include <cstdio>

#include "kasner/wave.hpp"

int main() {
    using namespace kasner;
    const auto bg = isotropic_background(3);
    const WaveScattering engine(bg);
    const Mode lam{4, 0, 0};
    const auto start = bessel_oracle(bg, lam, 1.0, 0.5, 1.0);
    const auto d =
        engine.scatter_down_mode(lam, start.phi, start.psi, Tolerances{});
    std::printf("mode (4,0,0): t_star = %.6f\n", d.t_star);
    std::printf("psi_inf        = %.10f %+.10fi\n", d.psi_inf.real(), d.psi_inf.imag());
    std::printf("phi_tilde_inf  = %.10f %+.10fi\n", d.phi_tilde_inf.real(), d.phi_tilde_inf.imag());
    std::printf("tail bound     = %.3e\n", d.tail_bound);
    return 0;
}
