// Experiment driver: simulate, converge, audit, distance.
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "dgmflow/error.hpp"
#include "dgmflow/experiments.hpp"

namespace fs = std::filesystem;
using namespace dgmflow;

namespace {

constexpr int exit_ok = 0, exit_assert = 1, exit_config = 2;

struct Common {
    std::string config;
    std::string out;
    bool assert_flag = false;
    double dt = 0.0;
    unsigned threads = 1;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "experiment configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", c.out, "output directory (default: output.dir of the config)");
    sub->add_flag("--assert", c.assert_flag, "exit 1 when the run's checks fail");
    sub->add_option("--dt", c.dt, "override the time step")->check(CLI::PositiveNumber);
    sub->add_option("--threads", c.threads, "worker threads")->check(CLI::Range(1u, 256u));
}

ExperimentConfig prepare(const Common& c, fs::path& dir) {
    ExperimentConfig cfg = load_config(c.config);
    if (c.dt > 0.0) cfg.dt = c.dt;
    dir = c.out.empty() ? fs::path(cfg.output_dir) : fs::path(c.out);
    fs::create_directories(dir);
    return cfg;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream f(p);
    if (!f) throw Error("cannot write " + p.string());
    return f;
}

int simulate_cmd(const Common& c) {
    fs::path dir;
    const auto cfg = prepare(c, dir);
    auto csv = open_out(dir / "trajectory.csv");
    const auto s = run_simulate(cfg, c.threads, &csv);
    auto sum = open_out(dir / "summary.txt");
    write_summary(sum, cfg, s);
    write_summary(std::cout, cfg, s);
    if (c.assert_flag) {
        const bool ok = s.mass_drift <= 1e-12 && s.max_violation <= 1e-6 && s.conserved_drift <= 1e-12;
        if (!ok) {
            std::cerr << "assertion failed: mass, invariance or conservation drift above tolerance\n";
            return exit_assert;
        }
    }
    return exit_ok;
}

int converge_cmd(const Common& c) {
    fs::path dir;
    const auto cfg = prepare(c, dir);
    const auto r = run_converge(cfg, c.threads);
    auto csv = open_out(dir / "distance.csv");
    write_distance_csv(csv, r.rows);
    write_distance_csv(std::cout, r.rows);
    if (c.assert_flag && cfg.sweep_n.size() > 1 && !r.monotone) {
        std::cerr << "assertion failed: " << r.detail << '\n';
        return exit_assert;
    }
    return exit_ok;
}

int audit_cmd(const Common& c) {
    fs::path dir;
    const auto cfg = prepare(c, dir);
    const auto r = run_audit(cfg, c.threads);
    auto f = open_out(dir / "audit.txt");
    write_audit(f, r);
    write_audit(std::cout, r);
    return r.pass() ? exit_ok : exit_assert;
}

int distance_cmd(const std::string& a, const std::string& b, const std::vector<double>& periods, std::size_t max_atoms) {
    const auto mu = load_measure(a), nu = load_measure(b);
    const auto r = run_distance(mu, nu, Metric::periodic(periods), max_atoms);
    std::cout << "d_BL = " << format_real(r.bl) << '\n' << "d_TV = " << format_real(r.tv) << '\n';
    if (r.kr >= 0.0) std::cout << "d_KR = " << format_real(r.kr) << '\n';
    else std::cout << "d_KR = undefined (masses differ)\n";
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Particle approximations of Vlasov equations on digraph measures"};
    app.require_subcommand(1);

    Common sim, conv, aud;
    auto* s = app.add_subcommand("simulate", "integrate the particle system, write trajectory.csv and summary.txt");
    add_common(s, sim);
    auto* c = app.add_subcommand("converge", "n-sweep against a reference, write distance.csv");
    add_common(c, conv);
    auto* a = app.add_subcommand("audit", "Bony, metric, continuity and Lipschitz checks");
    add_common(a, aud);

    std::string fa, fb;
    std::vector<double> periods;
    std::size_t max_atoms = 400;
    auto* d = app.add_subcommand("distance", "d_BL, d_TV and d_KR between two measure files");
    d->add_option("first", fa, "measure file")->required()->check(CLI::ExistingFile);
    d->add_option("second", fb, "measure file")->required()->check(CLI::ExistingFile);
    d->add_option("--period", periods, "per-coordinate period (0 = not periodic)");
    d->add_option("--max-atoms", max_atoms, "LP size cap");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        if (*s) return simulate_cmd(sim);
        if (*c) return converge_cmd(conv);
        if (*a) return audit_cmd(aud);
        return distance_cmd(fa, fb, periods, max_atoms);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_assert;
    }
}
