// shortcut: command-line front end for the shortcut-monitoring pipelines.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "shortcut/pipeline.hpp"

namespace {

struct GlobalOptions {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
};

shortcut::RunConfig load(const GlobalOptions& g) {
    shortcut::RunConfig cfg = g.config.empty() ? shortcut::parse_config_text("") : shortcut::parse_config(g.config);
    if (!g.out.empty()) cfg.output.dir = g.out;
    if (g.seed) cfg.override_seed(*g.seed);
    shortcut::set_thread_count(g.threads);
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monitor shortcut learning with infinite-width dynamics and information measures"};
    app.require_subcommand(1);
    GlobalOptions g;
    app.add_option("--config", g.config, "INI run configuration")->check(CLI::ExistingFile);
    app.add_option("--out", g.out, "output directory (overrides [output] dir)");
    app.add_option("--seed", g.seed, "seed for dataset sampling and finite-width training");
    app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);

    auto* gen = app.add_subcommand("gen-data", "build shortcut/clean datasets and print their digests");
    auto* ntk = app.add_subcommand("run-ntk", "infinite-width dynamics and information-plane series");
    auto* finite = app.add_subcommand("run-finite", "train the finite-width MLP and store its trajectory");

    auto* sal = app.add_subcommand("saliency", "finite-difference saliency map of the trained network");
    shortcut::SaliencyRequest sal_req;
    std::optional<double> epsilon;
    sal->add_option("--trajectory", sal_req.trajectory, "trajectory container (default <out>/trajectory.mis1)");
    sal->add_option("--dataset", sal_req.dataset, "dataset container (default: configured training file)");
    sal->add_option("--index", sal_req.image_index, "image index in the dataset");
    sal->add_option("--epsilon", epsilon, "finite-difference step");

    auto* land = app.add_subcommand("landscape", "linear interpolation and polar trajectory");
    shortcut::LandscapeRequest land_req;
    std::optional<double> alpha_min, alpha_max;
    land->add_option("--trajectory", land_req.trajectory, "trajectory container (default <out>/trajectory.mis1)");
    land->add_option("--dataset", land_req.dataset, "training dataset container");
    land->add_option("--alpha-min", alpha_min, "start of the alpha range");
    land->add_option("--alpha-max", alpha_max, "end of the alpha range");

    auto* report = app.add_subcommand("report", "overlay series CSVs into SVG charts");
    std::vector<std::string> csvs;
    report->add_option("series", csvs, "series CSV files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        shortcut::RunConfig cfg = load(g);
        if (gen->parsed()) {
            shortcut::cmd_gen_data(cfg, std::cout);
        } else if (ntk->parsed()) {
            shortcut::cmd_run_ntk(cfg, std::cout);
        } else if (finite->parsed()) {
            shortcut::cmd_run_finite(cfg, std::cout);
        } else if (sal->parsed()) {
            if (epsilon) cfg.finite.saliency_epsilon = *epsilon;
            shortcut::validate(cfg);
            shortcut::cmd_saliency(cfg, sal_req, std::cout);
        } else if (land->parsed()) {
            if (alpha_min) cfg.finite.alpha_min = *alpha_min;
            if (alpha_max) cfg.finite.alpha_max = *alpha_max;
            shortcut::validate(cfg);
            shortcut::cmd_landscape(cfg, land_req, std::cout);
        } else if (report->parsed()) {
            shortcut::cmd_report(cfg, csvs, std::cout);
        }
    } catch (const shortcut::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
