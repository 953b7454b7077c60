// Experiment runner: reproducible commands over the scattering library with
// config files, JSON reports, and CSV plot data.
#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "kasner/config.hpp"
#include "kasner/experiments.hpp"

using namespace kasner;
using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "kasner-scatter 1.0.0";

json mode_json(const Mode& m) {
    json j = json::array();
    for (int c : m) j.push_back(c);
    return j;
}

json background_json(const KasnerBackground& bg) {
    json j;
    j["D"] = bg.D;
    j["p"] = bg.p;
    j["p_phi"] = bg.p_phi;
    j["delta"] = bg.delta;
    j["non_degenerate"] = bg.non_degenerate;
    j["subcritical"] = bg.subcritical;
    j["tau_ring"] = bg.tau_ring;
    return j;
}

json tolerances_json(const Tolerances& tol) {
    return json{{"rel_tol", tol.rel_tol}, {"abs_tol", tol.abs_tol}, {"tail_tol", tol.tail_tol}};
}

struct RunContext {
    Config cfg;
    KasnerBackground bg;
    Tolerances tol;
    std::uint64_t seed = 1;
    int threads = 0;
    fs::path out;
};

Tolerances read_tolerances(const Config& cfg) {
    Tolerances tol;
    tol.rel_tol = cfg.get_double("tolerances", "rel_tol", tol.rel_tol);
    tol.abs_tol = cfg.get_double("tolerances", "abs_tol", tol.abs_tol);
    tol.tail_tol = cfg.get_double("tolerances", "tail_tol", tol.tail_tol);
    if (!(tol.rel_tol > 0 && tol.rel_tol <= 1e-2) || !(tol.abs_tol > 0) || !(tol.tail_tol > 0))
        throw ConfigError("tolerances must be positive (rel_tol <= 1e-2)");
    return tol;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Error("cannot write " + p.string());
    os << text;
}

void emit_report(const RunContext& ctx, const std::string& command, const json& resolved,
                 const json& results, bool pass) {
    json body;
    body["command"] = command;
    body["version"] = kVersion;
    body["config"] = resolved;
    body["results"] = results;
    body["pass"] = pass;
    // results.json is byte-reproducible for identical configs; report.json
    // adds a timestamped metadata block on top
    write_text(ctx.out / "results.json", body.dump(2) + "\n");
    json full;
    const auto now = std::chrono::system_clock::now();
    full["metadata"] = {
        {"timestamp_unix_ms",
         std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count()}};
    for (auto& [k, v] : body.items()) full[k] = v;
    write_text(ctx.out / "report.json", full.dump(2) + "\n");
    std::cout << (pass ? "PASS " : "FAIL ") << command << " -> " << (ctx.out / "report.json")
              << "\n";
}

// ---------------------------------------------------------------------------

bool cmd_wave_roundtrip(RunContext& ctx) {
    const int Lambda = int(ctx.cfg.get_int("modes", "lambda_max", 8));
    const double sigma_phi = ctx.cfg.get_double("wave-roundtrip", "sigma_phi", 3.0);
    const double sigma_psi = ctx.cfg.get_double("wave-roundtrip", "sigma_psi", 2.5);
    const double s = ctx.cfg.get_double("wave-roundtrip", "s", 1.0);
    const double assert_rel = ctx.cfg.get_double("wave-roundtrip", "assert_rel_err", 1e-6);
    ctx.cfg.reject_unknown();
    const WaveScattering engine(ctx.bg);
    const auto data = make_wave_data(ctx.seed, ctx.bg.D, Lambda, sigma_phi, sigma_psi);
    const auto rep = run_wave_roundtrip(engine, data, s, ctx.tol, ctx.threads, true);
    const bool pass = rep.rel_err_h1 <= assert_rel && rep.zero_mode_exact;
    {
        std::ofstream os(ctx.out / "wave_modes.csv", std::ios::binary);
        write_wave_diag_csv(os, rep.diag);
        std::ofstream psi(ctx.out / "psi_inf.field", std::ios::binary);
        write_field(psi, rep.asym.psi_inf_field(), Lambda);
        std::ofstream vphi(ctx.out / "varphi_inf.field", std::ios::binary);
        write_field(vphi, rep.asym.varphi_inf_field(ctx.bg), Lambda);
    }
    json resolved = {{"background", background_json(ctx.bg)},
                     {"lambda_max", Lambda},
                     {"sigma_phi", sigma_phi},
                     {"sigma_psi", sigma_psi},
                     {"s", s},
                     {"seed", ctx.seed},
                     {"assert_rel_err", assert_rel},
                     {"tolerances", tolerances_json(ctx.tol)}};
    json results = {{"n_modes", rep.n_modes},
                    {"rel_err_h1", rep.rel_err_h1},
                    {"norm_cauchy", rep.norm_cauchy},
                    {"norm_asymptotic", rep.norm_asymptotic},
                    {"norm_ratio", rep.norm_ratio},
                    {"zero_mode_exact", rep.zero_mode_exact},
                    {"tail_constant", engine.tail_constant()},
                    {"mode_csv", "wave_modes.csv"},
                    {"fields", {"psi_inf.field", "varphi_inf.field"}}};
    emit_report(ctx, "wave-roundtrip", resolved, results, pass);
    return pass;
}

bool cmd_bessel_validate(RunContext& ctx) {
    const int n_max = int(ctx.cfg.get_int("bessel-validate", "n_max", 32));
    const int samples = int(ctx.cfg.get_int("bessel-validate", "samples", 64));
    const double assert_err = ctx.cfg.get_double("bessel-validate", "assert_max_err", 1e-8);
    ctx.cfg.reject_unknown();
    if (!ctx.bg.non_degenerate) throw DegenerateBackground("bessel-validate");
    const auto rep = run_bessel_validate(ctx.bg, n_max, ctx.tol, samples, ctx.threads, true);
    const bool pass = rep.max_rel_err <= assert_err;
    {
        std::ofstream os(ctx.out / "bessel_classes.csv", std::ios::binary);
        os << "class,t_star,max_rel_err\n";
        char buf[256];
        for (const auto& r : rep.rows) {
            std::snprintf(buf, sizeof buf, "\"%s\",%.17g,%.17g\n", r.label.c_str(), r.t_star,
                          r.max_rel_err);
            os << buf;
        }
    }
    json resolved = {{"background", background_json(ctx.bg)},
                     {"n_max", n_max},
                     {"samples", samples},
                     {"assert_max_err", assert_err},
                     {"tolerances", tolerances_json(ctx.tol)}};
    json results = {{"n_classes", rep.n_classes},
                    {"max_rel_err", rep.max_rel_err},
                    {"class_csv", "bessel_classes.csv"}};
    emit_report(ctx, "bessel-validate", resolved, results, pass);
    return pass;
}

bool cmd_energy_sweep(RunContext& ctx) {
    const std::string sector = ctx.cfg.get_string("energy-sweep", "sector", "wave");
    std::vector<int> ns;
    for (double v : ctx.cfg.get_doubles("energy-sweep", "n")) ns.push_back(int(v));
    if (ns.empty()) ns = {4, 8, 16, 32, 64, 128};
    const double assert_growth = ctx.cfg.get_double("energy-sweep", "assert_growth", 2.0);
    ctx.cfg.reject_unknown();
    json results;
    bool pass = true;
    json plot = json::array();
    if (sector == "wave") {
        const auto rows = run_wave_mode_sweep(ctx.bg, ns, ctx.tol, ctx.threads);
        const auto wh = summarize_window(rows, &WaveSweepRow::C_high);
        const auto wl = summarize_window(rows, &WaveSweepRow::C_low);
        const auto wr = summarize_window(rows, &WaveSweepRow::iso_ratio);
        pass = wh.finite && wl.finite && wh.growth <= assert_growth && wl.growth <= assert_growth;
        results["C_high_max"] = wh.hi;
        results["C_high_growth"] = wh.growth;
        results["C_low_max"] = wl.hi;
        results["C_low_growth"] = wl.growth;
        results["iso_ratio_window"] = {wr.lo, wr.hi};
        for (const auto& r : rows)
            plot.push_back({{"n", r.n},
                            {"lambda", mode_json(r.lambda)},
                            {"C_high", r.C_high},
                            {"C_low", r.C_low},
                            {"iso_ratio", r.iso_ratio},
                            {"tail_C", r.tail_C}});
        std::ofstream os(ctx.out / "energy_sweep.csv", std::ios::binary);
        os << "n,C_high,C_low,iso_ratio,tail_C\n";
        for (const auto& r : rows)
            os << r.n << "," << r.C_high << "," << r.C_low << "," << r.iso_ratio << "," << r.tail_C
               << "\n";
    } else if (sector == "einstein") {
        if (!ctx.bg.subcritical) throw NotSubcritical("energy-sweep: sector=einstein");
        const auto rows = run_einstein_mode_sweep(ctx.bg, ns, ctx.seed, ctx.tol, ctx.threads);
        const auto wh = summarize_window(rows, &EinsteinSweepRow::C_high);
        const auto wl = summarize_window(rows, &EinsteinSweepRow::C_low);
        const auto ws = summarize_window(rows, &EinsteinSweepRow::seam_ratio);
        pass = wh.finite && wl.finite && wh.growth <= assert_growth && wl.growth <= assert_growth;
        results["C_high_max"] = wh.hi;
        results["C_high_growth"] = wh.growth;
        results["C_low_max"] = wl.hi;
        results["C_low_growth"] = wl.growth;
        results["seam_window"] = {ws.lo, ws.hi};
        for (const auto& r : rows)
            plot.push_back({{"n", r.n},
                            {"lambda", mode_json(r.lambda)},
                            {"C_high", r.C_high},
                            {"C_mid", r.C_mid},
                            {"C_low", r.C_low},
                            {"seam_ratio", r.seam_ratio}});
        std::ofstream os(ctx.out / "energy_sweep.csv", std::ios::binary);
        os << "n,C_high,C_mid,C_low,seam_ratio\n";
        for (const auto& r : rows)
            os << r.n << "," << r.C_high << "," << r.C_mid << "," << r.C_low << "," << r.seam_ratio
               << "\n";
    } else {
        throw ConfigError("energy-sweep.sector must be wave or einstein");
    }
    results["rows"] = plot;
    json resolved = {{"background", background_json(ctx.bg)},
                     {"sector", sector},
                     {"n", ns},
                     {"seed", ctx.seed},
                     {"assert_growth", assert_growth},
                     {"tolerances", tolerances_json(ctx.tol)}};
    emit_report(ctx, "energy-sweep", resolved, results, pass);
    return pass;
}

bool cmd_einstein_roundtrip(RunContext& ctx) {
    const int Lambda = int(ctx.cfg.get_int("modes", "lambda_max", 4));
    const double sigma = ctx.cfg.get_double("einstein-roundtrip", "sigma", 3.0);
    const double s = ctx.cfg.get_double("einstein-roundtrip", "s", 0.0);
    const double assert_rel = ctx.cfg.get_double("einstein-roundtrip", "assert_rel_err", 1e-5);
    const double assert_asym =
        ctx.cfg.get_double("einstein-roundtrip", "assert_asym_residual", 1e-6);
    ctx.cfg.reject_unknown();
    const EinsteinScattering engine(ctx.bg);
    const auto data = make_einstein_data(ctx.bg, ctx.seed, Lambda, sigma, ctx.threads);
    const auto rep = run_einstein_roundtrip(engine, data, s, ctx.tol, ctx.threads, false, true);
    const bool pass =
        rep.rel_err <= assert_rel && rep.max_asym_residual <= assert_asym && rep.zero_mode_exact;
    {
        std::ofstream os(ctx.out / "einstein_modes.csv", std::ios::binary);
        write_einstein_diag_csv(os, rep.diag);
        const auto dump = [&](const char* name, const auto& field) {
            std::ofstream fs_(ctx.out / name, std::ios::binary);
            write_field(fs_, field, Lambda);
        };
        dump("kappa_inf.field", rep.asym.kappa_inf_field());
        dump("upsilon_inf.field", rep.asym.upsilon_inf_field());
        dump("psi_inf.field", rep.asym.psi_inf_field());
        dump("phi_tilde_inf.field", rep.asym.phi_tilde_inf_field());
        dump("xi_inf.field", rep.asym.xi_inf_field());
    }
    json resolved = {{"background", background_json(ctx.bg)},
                     {"lambda_max", Lambda},
                     {"sigma", sigma},
                     {"s", s},
                     {"seed", ctx.seed},
                     {"assert_rel_err", assert_rel},
                     {"assert_asym_residual", assert_asym},
                     {"tolerances", tolerances_json(ctx.tol)}};
    json results = {{"n_modes", rep.n_modes},
                    {"rel_err", rep.rel_err},
                    {"max_asym_residual", rep.max_asym_residual},
                    {"norm_cauchy", rep.norm_cauchy},
                    {"norm_asymptotic", rep.norm_asymptotic},
                    {"zero_mode_exact", rep.zero_mode_exact},
                    {"tail_constant", engine.tail_constant()},
                    {"mode_csv", "einstein_modes.csv"},
                    {"fields",
                     {"kappa_inf.field", "upsilon_inf.field", "psi_inf.field",
                      "phi_tilde_inf.field", "xi_inf.field"}}};
    emit_report(ctx, "einstein-roundtrip", resolved, results, pass);
    return pass;
}

bool cmd_einstein_constraints(RunContext& ctx) {
    const int Lambda = int(ctx.cfg.get_int("modes", "lambda_max", 8));
    const double sigma = ctx.cfg.get_double("einstein-constraints", "sigma", 3.0);
    const double assert_res = ctx.cfg.get_double("einstein-constraints", "assert_residual", 1e-7);
    ctx.cfg.reject_unknown();
    const EinsteinScattering engine(ctx.bg);
    const auto data = make_einstein_data(ctx.bg, ctx.seed, Lambda, sigma, ctx.threads);
    EinsteinScatterOptions opt;
    opt.threads = ctx.threads <= 0 ? default_thread_count() : ctx.threads;
    opt.monitor_constraints = true;
    std::vector<EinsteinModeDiag> diag;
    engine.scatter_down(data, ctx.tol, opt, &diag);
    double worst = 0;
    for (const auto& d : diag) worst = std::max(worst, d.max_constraint_rel);
    const bool pass = worst <= assert_res;
    {
        std::ofstream os(ctx.out / "einstein_modes.csv", std::ios::binary);
        write_einstein_diag_csv(os, diag);
    }
    json resolved = {{"background", background_json(ctx.bg)},
                     {"lambda_max", Lambda},
                     {"sigma", sigma},
                     {"seed", ctx.seed},
                     {"assert_residual", assert_res},
                     {"tolerances", tolerances_json(ctx.tol)}};
    json results = {{"n_modes", diag.size()},
                    {"max_constraint_rel", worst},
                    {"mode_csv", "einstein_modes.csv"}};
    emit_report(ctx, "einstein-constraints", resolved, results, pass);
    return pass;
}

bool cmd_subcritical_scan(RunContext& ctx) {
    const int samples = int(ctx.cfg.get_int("subcritical-scan", "samples", 10000));
    ctx.cfg.reject_unknown();
    const auto rep = run_subcritical_scan(samples, ctx.seed);
    const bool pass = rep.max_margin <= 1e-9 && std::abs(rep.iso_margin - 2.0 / 3.0) <= 1e-12;
    json resolved = {{"samples", samples}, {"seed", ctx.seed}};
    json results = {{"vacuum_max_margin", rep.max_margin}, {"isotropic_margin", rep.iso_margin}};
    emit_report(ctx, "subcritical-scan", resolved, results, pass);
    return pass;
}

bool cmd_norms(RunContext& ctx) {
    const int Lambda = int(ctx.cfg.get_int("modes", "lambda_max", 4));
    const double sigma = ctx.cfg.get_double("norms", "sigma", 3.0);
    auto svals = ctx.cfg.get_doubles("norms", "s");
    if (svals.empty()) svals = {0.0, 0.5, 1.0, 2.0};
    ctx.cfg.reject_unknown();
    const WaveScattering wave(ctx.bg);
    const auto wdata = make_wave_data(ctx.seed, ctx.bg.D, Lambda, sigma, sigma - 0.5);
    const auto wasym = wave.scatter_down(wdata, ctx.tol, nullptr, ctx.threads);
    json wave_rows = json::array();
    for (double s : svals) {
        const auto [nc, na] = wave_hilbert_norms(wdata, wasym, s, ctx.bg);
        wave_rows.push_back({{"s", s}, {"cauchy", nc}, {"asymptotic", na}, {"ratio", na / nc}});
    }
    json results = {{"wave", wave_rows}};
    if (ctx.bg.subcritical) {
        const EinsteinScattering ein(ctx.bg);
        const auto edata = make_einstein_data(ctx.bg, ctx.seed + 1, Lambda, sigma, ctx.threads);
        EinsteinScatterOptions opt;
        opt.threads = ctx.threads <= 0 ? default_thread_count() : ctx.threads;
        const auto easym = ein.scatter_down(edata, ctx.tol, opt);
        json ein_rows = json::array();
        for (double s : svals) {
            const auto [nc, na] = einstein_hilbert_norms(edata, easym, s, ctx.bg);
            ein_rows.push_back({{"s", s}, {"cauchy", nc}, {"asymptotic", na}, {"ratio", na / nc}});
        }
        results["einstein"] = ein_rows;
    }
    json resolved = {{"background", background_json(ctx.bg)},
                     {"lambda_max", Lambda},
                     {"sigma", sigma},
                     {"s", svals},
                     {"seed", ctx.seed},
                     {"tolerances", tolerances_json(ctx.tol)}};
    emit_report(ctx, "norms", resolved, results, true);
    return true;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kasner singularity scattering experiments"};
    app.set_version_flag("--version", kVersion);
    std::string command, config_path, out_dir = "out";
    long threads_arg = -1, seed_arg = -1;
    app.add_option("command", command,
                   "one of: wave-roundtrip, bessel-validate, energy-sweep, einstein-roundtrip, "
                   "einstein-constraints, subcritical-scan, norms")
        ->required();
    app.add_option("--config", config_path, "configuration file")->required();
    app.add_option("--out", out_dir, "output directory (default out/)");
    app.add_option("--threads", threads_arg, "worker threads (default SCATTER_THREADS or all)");
    app.add_option("--seed", seed_arg, "override the RNG seed");
    CLI11_PARSE(app, argc, argv);

    try {
        std::ifstream is(config_path);
        if (!is) throw ConfigError("cannot open config " + config_path);
        RunContext ctx{Config::parse(is)};
        if (command != "subcritical-scan") ctx.bg = ctx.cfg.background();
        ctx.tol = read_tolerances(ctx.cfg);
        ctx.seed = std::uint64_t(ctx.cfg.get_int("run", "seed", 1));
        ctx.threads = int(ctx.cfg.get_int("run", "threads", 0));
        const std::string cfg_out = ctx.cfg.get_string("run", "out", "");
        if (!cfg_out.empty()) out_dir = cfg_out;
        if (seed_arg >= 0) ctx.seed = std::uint64_t(seed_arg);
        if (threads_arg >= 0) ctx.threads = int(threads_arg);
        ctx.out = out_dir;
        fs::create_directories(ctx.out);

        bool pass = false;
        if (command == "wave-roundtrip") pass = cmd_wave_roundtrip(ctx);
        else if (command == "bessel-validate") pass = cmd_bessel_validate(ctx);
        else if (command == "energy-sweep") pass = cmd_energy_sweep(ctx);
        else if (command == "einstein-roundtrip") pass = cmd_einstein_roundtrip(ctx);
        else if (command == "einstein-constraints") pass = cmd_einstein_constraints(ctx);
        else if (command == "subcritical-scan") pass = cmd_subcritical_scan(ctx);
        else if (command == "norms") pass = cmd_norms(ctx);
        else {
            std::cerr << "unknown command: " << command << "\n";
            return 2;
        }
        return pass ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
