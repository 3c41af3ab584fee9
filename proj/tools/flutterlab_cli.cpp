// Command-line entry point: one subcommand per experiment, each reading a
// "key = value" config file.

#include "flutterlab/harness.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

using namespace flutterlab;

namespace {

struct Common {
    std::string config;
    std::string output;
    std::vector<std::string> overrides;
};

CLI::App* add(CLI::App& app, const std::string& name, const std::string& help, Common& c) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("config", c.config, "config file")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--output", c.output, "output directory (overrides the config)");
    sub->add_option("--set", c.overrides, "extra key=value overrides, applied in order");
    return sub;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Delay-reduced flutter plate experiments"};
    app.require_subcommand(1);

    Common c;
    add(app, "simulate", "time integration with trajectory output", c);
    add(app, "stationary", "Newton solve of the stationary problem", c);
    add(app, "continuation", "parameter continuation of equilibria", c);
    add(app, "decompose", "u = z + w split run", c);
    add(app, "verify", "invariant suite with a pass/fail table", c);

    double klo = -1.0, khi = -1.0;
    int ndata = 0;
    auto* sweep = add(app, "sweep-damping", "empirical k_min bracket", c);
    sweep->add_option("--klo", klo, "lower damping");
    sweep->add_option("--khi", khi, "upper damping");
    sweep->add_option("--ndata", ndata, "number of initial-data presets");

    double time = -1.0;
    std::string points;
    auto* recon = add(app, "reconstruct", "flow potential from the plate history", c);
    recon->add_option("--time", time, "evaluation time (> t*)");
    recon->add_option("--points", points, "file with one 'x y z' point per line")
        ->check(CLI::ExistingFile);

    double delta = -1.0;
    auto* had = add(app, "hadamard", "continuous-dependence probe", c);
    had->add_option("--delta", delta, "perturbation size");

    CLI11_PARSE(app, argc, argv);
    const std::string name = app.get_subcommands().front()->get_name();

    try {
        ExperimentConfig cfg = parse_config(c.config);
        cfg.experiment = parse_experiment(name);
        for (const auto& o : c.overrides) apply_override(cfg, o);
        if (!c.output.empty()) cfg.output = c.output;
        if (klo >= 0.0) cfg.k_lo = klo;
        if (khi >= 0.0) cfg.k_hi = khi;
        if (ndata > 0) cfg.n_data = ndata;
        if (time >= 0.0) cfg.time = time;
        if (!points.empty()) cfg.points = points;
        if (delta > 0.0) cfg.delta = delta;
        const int status = run_experiment(cfg);
        std::cout << name << ": " << (status == 0 ? "ok" : "failed") << ", artifacts in "
                  << cfg.output << '\n';
        return status;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
