#ifndef KASNER_FIELDS_HPP
#define KASNER_FIELDS_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "kasner/background.hpp"
#include "kasner/errors.hpp"

namespace kasner {

using cplx = std::complex<double>;

inline double bracket2(const Mode& lambda) { return 1.0 + mode_abs2(lambda); } // <lambda>^2

/// All lambda in Z^D with max_i |lambda_i| <= Lambda, in lexicographic order.
struct ModeSet {
    int D;
    int Lambda;

    std::size_t size() const {
        std::size_t n = 1;
        for (int i = 0; i < D; ++i) n *= std::size_t(2 * Lambda + 1);
        return n;
    }

    template <typename F>
    void for_each(F&& f) const {
        Mode lambda(D, -Lambda);
        for (;;) {
            f(const_cast<const Mode&>(lambda));
            int k = D - 1;
            while (k >= 0 && lambda[k] == Lambda) { lambda[k] = -Lambda; --k; }
            if (k < 0) break;
            ++lambda[k];
        }
    }

    std::vector<Mode> modes() const {
        std::vector<Mode> out;
        out.reserve(size());
        for_each([&](const Mode& m) { out.push_back(m); });
        return out;
    }
};

/// Truncated Fourier representation of a scalar function on the D-torus.
struct ScalarField {
    int D = 0;
    bool real_flag = false;
    std::map<Mode, cplx> coeffs;

    cplx at(const Mode& lambda) const {
        auto it = coeffs.find(lambda);
        return it == coeffs.end() ? cplx(0, 0) : it->second;
    }
    void set(const Mode& lambda, cplx v) { coeffs[lambda] = v; }
};

/// Truncated Fourier representation of a (1,1)-tensor; D*D entries row-major,
/// (A_lambda)_i^j at index i*D + j.
struct TensorField {
    int D = 0;
    bool real_flag = false;
    std::map<Mode, std::vector<cplx>> coeffs;

    std::vector<cplx> at(const Mode& lambda) const {
        auto it = coeffs.find(lambda);
        return it == coeffs.end() ? std::vector<cplx>(std::size_t(D) * D, cplx(0, 0)) : it->second;
    }
    void set(const Mode& lambda, std::vector<cplx> v) { coeffs[lambda] = std::move(v); }
};

/// Truncated Fourier representation of a vector field; D entries per mode.
struct VectorField {
    int D = 0;
    bool real_flag = false;
    std::map<Mode, std::vector<cplx>> coeffs;

    std::vector<cplx> at(const Mode& lambda) const {
        auto it = coeffs.find(lambda);
        return it == coeffs.end() ? std::vector<cplx>(std::size_t(D), cplx(0, 0)) : it->second;
    }
    void set(const Mode& lambda, std::vector<cplx> v) { coeffs[lambda] = std::move(v); }
};

inline Mode negate(const Mode& lambda) {
    Mode m = lambda;
    for (int& c : m) c = -c;
    return m;
}

/// Max deviation from Hermitian symmetry f_{-lambda} = conj(f_lambda).
inline double reality_defect(const ScalarField& f) {
    double worst = 0;
    for (const auto& [lam, v] : f.coeffs)
        worst = std::max(worst, std::abs(f.at(negate(lam)) - std::conj(v)));
    return worst;
}

inline double reality_defect(const TensorField& f) {
    double worst = 0;
    for (const auto& [lam, v] : f.coeffs) {
        const auto w = f.at(negate(lam));
        for (std::size_t k = 0; k < v.size(); ++k)
            worst = std::max(worst, std::abs(w[k] - std::conj(v[k])));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Norms

inline double sobolev_norm(const ScalarField& f, double s) {
    double acc = 0;
    for (const auto& [lam, v] : f.coeffs)
        acc += std::pow(bracket2(lam), s) * std::norm(v);
    return std::sqrt(acc);
}

inline double sobolev_norm(const TensorField& f, double s) {
    double acc = 0;
    for (const auto& [lam, v] : f.coeffs) {
        double e = 0;
        for (const cplx& c : v) e += std::norm(c);
        acc += std::pow(bracket2(lam), s) * e;
    }
    return std::sqrt(acc);
}

/// Frequency adapted H^s norm: entry (a,b) of each mode weighted by
/// t_{lambda*}^{-2 p_a + 2 p_b}; t_{0*} = 1 so the zero mode is unweighted.
inline double freq_adapted_norm(const TensorField& A, double s, const KasnerBackground& bg) {
    if (!bg.non_degenerate) throw DegenerateBackground("freq_adapted_norm");
    double acc = 0;
    for (const auto& [lam, v] : A.coeffs) {
        const double ts = t_star(bg, lam);
        double e = 0;
        for (int a = 0; a < bg.D; ++a)
            for (int b = 0; b < bg.D; ++b)
                e += std::pow(ts, -2.0 * bg.p[a] + 2.0 * bg.p[b]) * std::norm(v[std::size_t(a) * bg.D + b]);
        acc += std::pow(bracket2(lam), s) * e;
    }
    return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// Symbols

/// Symbol acting mode-wise through F(t_{lambda*}); the zero mode is mapped to 0.
struct SymbolSpec {
    struct LogTstar {};
    struct TstarPower { double alpha; };
    struct GWeight { int i, j; };                       // multiplies by t*^{-p_i + p_j}
    struct Custom { std::function<double(double)> F; }; // F(t_star)
    std::variant<LogTstar, TstarPower, GWeight, Custom> kind;

    static SymbolSpec log_tstar() { return {LogTstar{}}; }
    static SymbolSpec tstar_power(double a) { return {TstarPower{a}}; }
    static SymbolSpec g_weight(int i, int j) { return {GWeight{i, j}}; }
    static SymbolSpec custom(std::function<double(double)> F) { return {Custom{std::move(F)}}; }

    double eval(const KasnerBackground& bg, double ts) const {
        if (std::holds_alternative<LogTstar>(kind)) return std::log(ts);
        if (auto* p = std::get_if<TstarPower>(&kind)) return std::pow(ts, p->alpha);
        if (auto* g = std::get_if<GWeight>(&kind)) return std::pow(ts, -bg.p[g->i] + bg.p[g->j]);
        return std::get<Custom>(kind).F(ts);
    }
};

template <typename FieldT>
FieldT symbol_apply(const FieldT& f, const SymbolSpec& spec, const KasnerBackground& bg) {
    if (!bg.non_degenerate) throw DegenerateBackground("symbol_apply");
    FieldT out = f;
    for (auto& [lam, v] : out.coeffs) {
        if (is_zero_mode(lam)) {
            if constexpr (std::is_same_v<FieldT, ScalarField>) v = cplx(0, 0);
            else for (auto& c : v) c = cplx(0, 0);
            continue;
        }
        const double w = spec.eval(bg, t_star(bg, lam));
        if constexpr (std::is_same_v<FieldT, ScalarField>) v *= w;
        else for (auto& c : v) c *= w;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Deterministic band-limited sampling

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mode_hash(std::uint64_t seed, const Mode& lambda, int entry) {
    std::uint64_t h = seed ^ 0x6a09e667f3bcc909ULL;
    splitmix64(h);
    for (int c : lambda) { h ^= std::uint64_t(std::int64_t(c)) * 0x100000001b3ULL; splitmix64(h); }
    h ^= std::uint64_t(entry + 1) * 0x9e3779b97f4a7c15ULL;
    splitmix64(h);
    return h;
}

inline double unit_uniform(std::uint64_t& state) {
    return double(splitmix64(state) >> 11) * 0x1.0p-53;
}

inline cplx sample_coeff(std::uint64_t seed, const Mode& lambda, int entry, double sigma) {
    std::uint64_t st = mode_hash(seed, lambda, entry);
    const double r = 0.25 + 0.75 * unit_uniform(st);
    const double th = 2.0 * M_PI * unit_uniform(st);
    const double amp = r * std::pow(bracket2(lambda), -0.5 * sigma);
    return amp * cplx(std::cos(th), std::sin(th));
}

// canonical representative of a {lambda, -lambda} pair: first nonzero > 0
inline bool canonical_half(const Mode& lambda) {
    for (int c : lambda) {
        if (c > 0) return true;
        if (c < 0) return false;
    }
    return true; // zero mode
}

} // namespace detail

/// Deterministic pseudo-random coefficients with |f_lambda| ~ <lambda>^{-sigma},
/// Hermitian-symmetric when real-flagged. sigma = inf populates only lambda = 0.
inline ScalarField sample_band_limited_scalar(std::uint64_t seed, int D, int Lambda, double sigma,
                                              bool real_flag) {
    ScalarField f;
    f.D = D;
    f.real_flag = real_flag;
    ModeSet ms{D, Lambda};
    ms.for_each([&](const Mode& lam) {
        if (std::isinf(sigma) && !is_zero_mode(lam)) { f.coeffs[lam] = cplx(0, 0); return; }
        if (real_flag && !detail::canonical_half(lam)) {
            f.coeffs[lam] = std::conj(detail::sample_coeff(seed, negate(lam), 0, sigma));
            return;
        }
        cplx c = detail::sample_coeff(seed, lam, 0, sigma);
        if (real_flag && is_zero_mode(lam)) c = cplx(c.real(), 0.0);
        f.coeffs[lam] = c;
    });
    return f;
}

inline TensorField sample_band_limited_tensor(std::uint64_t seed, int D, int Lambda, double sigma,
                                              bool real_flag) {
    TensorField f;
    f.D = D;
    f.real_flag = real_flag;
    ModeSet ms{D, Lambda};
    ms.for_each([&](const Mode& lam) {
        std::vector<cplx> v(std::size_t(D) * D, cplx(0, 0));
        if (!(std::isinf(sigma) && !is_zero_mode(lam))) {
            for (int e = 0; e < D * D; ++e) {
                if (real_flag && !detail::canonical_half(lam))
                    v[e] = std::conj(detail::sample_coeff(seed, negate(lam), e, sigma));
                else {
                    v[e] = detail::sample_coeff(seed, lam, e, sigma);
                    if (real_flag && is_zero_mode(lam)) v[e] = cplx(v[e].real(), 0.0);
                }
            }
        }
        f.coeffs[lam] = std::move(v);
    });
    return f;
}

// ---------------------------------------------------------------------------
// Serialization: structured text, 17 significant digits, bit-exact round trip.

namespace detail {

inline void print_g17(std::ostream& os, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
}

} // namespace detail

template <typename FieldT>
void write_field(std::ostream& os, const FieldT& f, int Lambda) {
    constexpr bool scalar = std::is_same_v<FieldT, ScalarField>;
    constexpr bool vector = std::is_same_v<FieldT, VectorField>;
    os << "scatter-field v1\n";
    os << "D " << f.D << "\n";
    os << "Lambda " << Lambda << "\n";
    os << "kind " << (scalar ? "scalar" : vector ? "vector" : "tensor") << "\n";
    os << "real " << (f.real_flag ? 1 : 0) << "\n";
    for (const auto& [lam, v] : f.coeffs) {
        os << "mode";
        for (int c : lam) os << " " << c;
        if constexpr (scalar) {
            os << " ";
            detail::print_g17(os, v.real());
            os << " ";
            detail::print_g17(os, v.imag());
        } else {
            for (const cplx& c : v) {
                os << " ";
                detail::print_g17(os, c.real());
                os << " ";
                detail::print_g17(os, c.imag());
            }
        }
        os << "\n";
    }
    os << "end\n";
}

struct FieldFileHeader {
    int D = 0;
    int Lambda = 0;
    std::string kind = "scalar";
    bool scalar = true;
    bool real_flag = false;
};

inline FieldFileHeader read_field_header(std::istream& is) {
    std::string line, word, kind;
    std::getline(is, line);
    if (line != "scatter-field v1") throw Error("read_field: bad header '" + line + "'");
    FieldFileHeader h;
    int real = 0;
    is >> word >> h.D;
    if (word != "D") throw Error("read_field: expected D");
    is >> word >> h.Lambda;
    if (word != "Lambda") throw Error("read_field: expected Lambda");
    is >> word >> kind;
    if (word != "kind" || (kind != "scalar" && kind != "tensor" && kind != "vector"))
        throw Error("read_field: bad kind");
    h.kind = kind;
    h.scalar = kind == "scalar";
    is >> word >> real;
    if (word != "real") throw Error("read_field: expected real flag");
    h.real_flag = real != 0;
    return h;
}

inline ScalarField read_scalar_field(std::istream& is) {
    const FieldFileHeader h = read_field_header(is);
    if (!h.scalar) throw Error("read_scalar_field: file holds a tensor field");
    ScalarField f;
    f.D = h.D;
    f.real_flag = h.real_flag;
    std::string word;
    while (is >> word) {
        if (word == "end") return f;
        if (word != "mode") throw Error("read_scalar_field: expected mode record");
        Mode lam(h.D);
        for (int& c : lam) is >> c;
        double re, im;
        is >> re >> im;
        f.coeffs[lam] = cplx(re, im);
    }
    throw Error("read_scalar_field: missing end record");
}

inline TensorField read_tensor_field(std::istream& is) {
    const FieldFileHeader h = read_field_header(is);
    if (h.kind != "tensor") throw Error("read_tensor_field: file does not hold a tensor field");
    TensorField f;
    f.D = h.D;
    f.real_flag = h.real_flag;
    std::string word;
    while (is >> word) {
        if (word == "end") return f;
        if (word != "mode") throw Error("read_tensor_field: expected mode record");
        Mode lam(h.D);
        for (int& c : lam) is >> c;
        std::vector<cplx> v(std::size_t(h.D) * h.D);
        for (auto& c : v) {
            double re, im;
            is >> re >> im;
            c = cplx(re, im);
        }
        f.coeffs[lam] = std::move(v);
    }
    throw Error("read_tensor_field: missing end record");
}

inline VectorField read_vector_field(std::istream& is) {
    const FieldFileHeader h = read_field_header(is);
    if (h.kind != "vector") throw Error("read_vector_field: file does not hold a vector field");
    VectorField f;
    f.D = h.D;
    f.real_flag = h.real_flag;
    std::string word;
    while (is >> word) {
        if (word == "end") return f;
        if (word != "mode") throw Error("read_vector_field: expected mode record");
        Mode lam(h.D);
        for (int& c : lam) is >> c;
        std::vector<cplx> v(std::size_t(h.D));
        for (auto& c : v) {
            double re, im;
            is >> re >> im;
            c = cplx(re, im);
        }
        f.coeffs[lam] = std::move(v);
    }
    throw Error("read_vector_field: missing end record");
}

} // namespace kasner

#endif
