// Coordinator binary for real multi-machine runs: connects to running site
// agents and drives the fitting protocol.

#include <CLI11.hpp>

#include "cli_common.hpp"
#include "cwb/runner.hpp"

#include <cstdio>
#include <string>
#include <vector>

int main(int argc, char** argv) {
    CLI::App app{"distributed boosting coordinator"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".";
    std::vector<std::string> site_addresses;

    auto* fit = app.add_subcommand("fit", "run a distributed fit against site agents");
    fit->add_option("--sites", site_addresses, "site addresses host:port")
        ->required()
        ->delimiter(',');
    fit->add_option("--config", config_path, "config JSON (see CONFIG.md)")->required();
    fit->add_option("--out-dir", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    return cwb::cli::run_guarded([&]() -> int {
        const cwb::RunnerConfig config = cwb::load_runner_config(config_path);
        const cwb::FitArtifacts artifacts = cwb::fit_remote_command(site_addresses, config);
        cwb::write_artifacts(artifacts, out_dir);
        std::printf("distributed fit: %zu iterations, model written to %s/model.json\n",
                    artifacts.model.selection_log.size(), out_dir.c_str());
        return 0;
    });
}
