// Site agent: holds one data partition, guards every outbound aggregate with
// its own privacy policy, and serves one fitting session.

#include <CLI11.hpp>

#include "cli_common.hpp"
#include "cwb/runner.hpp"

#include <string>
#include <vector>

int main(int argc, char** argv) {
    CLI::App app{"data-site agent"};
    app.require_subcommand(1);

    std::string data_path, listen_addr = "127.0.0.1:0", response = "y";
    int site_id = 0;
    int privacy_level = 5;
    double val_fraction = 0.0;
    std::uint64_t val_seed = 1;
    bool no_stratify = false;
    std::vector<std::string> categorical_features;

    auto* serve = app.add_subcommand("serve", "serve one fitting session");
    serve->add_option("--data", data_path, "local data CSV")->required();
    serve->add_option("--site-id", site_id, "unique site id (ascending order defines aggregation)")
        ->required();
    serve->add_option("--listen", listen_addr, "bind address host:port (port 0 picks one)");
    serve->add_option("--response", response, "response column name");
    serve->add_option("--privacy-level", privacy_level,
                      "minimum observations behind any outbound aggregate");
    serve->add_option("--val-fraction", val_fraction, "local validation fraction (0 disables)");
    serve->add_option("--val-seed", val_seed, "base seed; the effective seed adds the site id");
    serve->add_flag("--no-stratify", no_stratify, "disable response-stratified splitting");
    serve->add_option("--categorical", categorical_features,
                      "treat these columns as categorical")
        ->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    return cwb::cli::run_guarded([&]() -> int {
        return cwb::serve_site_command(data_path, site_id, listen_addr, response, privacy_level,
                                       val_fraction, val_seed, !no_stratify,
                                       categorical_features);
    });
}
