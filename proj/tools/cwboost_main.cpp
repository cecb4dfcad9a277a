// Operator CLI: pooled fits, distributed fits (simulated or remote sites),
// model comparison, prediction, effect export, and demo data generation.

#include <CLI11.hpp>

#include "cli_common.hpp"
#include "cwb/heartgen.hpp"
#include "cwb/model.hpp"
#include "cwb/runner.hpp"

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace {

cwb::PartitionScheme parse_scheme(const std::string& name) {
    if (name == "by-site-tag") return cwb::PartitionScheme::by_site_tag;
    if (name == "random") return cwb::PartitionScheme::random;
    if (name == "contiguous") return cwb::PartitionScheme::contiguous;
    throw cwb::UsageError("unknown partition scheme: " + name);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"component-wise boosting for distributed additive mixed models"};
    app.require_subcommand(1);

    std::string data_path, config_path, out_dir = ".", partition = "";
    std::string model_a, model_b, compare_data, report_path;
    std::string model_path, out_csv = "predictions.csv";
    std::string effects_csv = "effects.csv", importance_csv = "importance.csv";
    std::string transcript_dir;
    std::vector<std::string> site_addresses;
    int simulate_sites = 0;
    int grid_res = 100;
    std::uint64_t heart_seed = 20240501;
    int max_iters_override = -1;
    double ridge_jitter_override = 0.0;
    double coeff_tol = 1e-8, risk_tol = 1e-9;
    std::optional<std::string> predict_site;
    std::string predict_site_value;

    auto* fit_pooled = app.add_subcommand("fit-pooled", "fit on pooled data");
    fit_pooled->add_option("--data", data_path, "training data CSV")->required();
    fit_pooled->add_option("--config", config_path, "config JSON (see CONFIG.md)")->required();
    fit_pooled->add_option("--out-dir", out_dir, "output directory");
    fit_pooled->add_option("--max-iters", max_iters_override, "override the config iteration cap");
    fit_pooled->add_option("--ridge-jitter", ridge_jitter_override,
                           "escape hatch: add this ridge to every penalized system");

    auto* fit_dist = app.add_subcommand("fit-distributed", "fit across data sites");
    fit_dist->add_option("--data", data_path, "pooled CSV to partition (simulated mode)");
    fit_dist->add_option("--config", config_path, "config JSON")->required();
    fit_dist->add_option("--out-dir", out_dir, "output directory");
    fit_dist->add_option("--simulate", simulate_sites, "simulate S in-process sites");
    fit_dist->add_option("--sites", site_addresses, "remote site addresses host:port")
        ->delimiter(',');
    fit_dist->add_option("--partition", partition,
                         "partition scheme: by-site-tag | random | contiguous");
    fit_dist->add_option("--transcripts", transcript_dir, "directory for session transcripts");
    fit_dist->add_option("--max-iters", max_iters_override, "override the config iteration cap");
    fit_dist->add_option("--ridge-jitter", ridge_jitter_override,
                         "escape hatch: add this ridge to every penalized system");

    auto* compare = app.add_subcommand("compare", "compare two fitted models");
    compare->add_option("model_a", model_a)->required();
    compare->add_option("model_b", model_b)->required();
    compare->add_option("--data", compare_data, "dataset for the risk comparison");
    compare->add_option("--coeff-tol", coeff_tol, "relative coefficient tolerance");
    compare->add_option("--risk-tol", risk_tol, "risk difference tolerance");
    compare->add_option("--report", report_path, "write the comparison report JSON here");

    auto* predict = app.add_subcommand("predict", "predict with a fitted model");
    predict->add_option("--model", model_path)->required();
    predict->add_option("--data", data_path)->required();
    predict->add_option("--site", predict_site_value, "site label for site-conditional terms");
    predict->add_option("--out", out_csv, "predictions CSV (link and response scale)");

    auto* effects = app.add_subcommand("effects", "export partial effects and importance");
    effects->add_option("--model", model_path)->required();
    effects->add_option("--grid-res", grid_res, "grid resolution for numeric features");
    effects->add_option("--out-effects", effects_csv);
    effects->add_option("--out-importance", importance_csv);

    auto* gen_heart = app.add_subcommand("gen-heart", "write the synthetic heart demo data");
    gen_heart->add_option("--out-dir", out_dir, "output directory")->required();
    gen_heart->add_option("--seed", heart_seed, "generator seed");

    std::string clean_in, clean_out, heart_schema_path;
    auto* clean = app.add_subcommand("clean-heart", "apply the heart-disease cleaning rules");
    clean->add_option("--in", clean_in, "raw CSV")->required();
    clean->add_option("--out", clean_out, "cleaned CSV")->required();
    clean->add_option("--schema", heart_schema_path, "retained-covariate schema JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    return cwb::cli::run_guarded([&]() -> int {
        auto apply_override = [&](cwb::RunnerConfig& config) {
            if (max_iters_override == 0 || (fit_pooled->count("--max-iters") && max_iters_override < 1) ||
                (fit_dist->count("--max-iters") && max_iters_override < 1)) {
                throw cwb::UsageError("--max-iters must be at least 1");
            }
            if (max_iters_override > 0) config.run.max_iters = max_iters_override;
            if (fit_pooled->count("--ridge-jitter") || fit_dist->count("--ridge-jitter")) {
                if (ridge_jitter_override < 0.0) {
                    throw cwb::UsageError("--ridge-jitter must be non-negative");
                }
                config.run.ridge_jitter = ridge_jitter_override;
            }
        };
        if (fit_pooled->parsed()) {
            cwb::RunnerConfig config = cwb::load_runner_config(config_path);
            apply_override(config);
            const cwb::FitArtifacts artifacts = cwb::fit_pooled_command(data_path, config);
            cwb::write_artifacts(artifacts, out_dir);
            std::printf("pooled fit: %zu iterations, model written to %s/model.json\n",
                        artifacts.model.selection_log.size(), out_dir.c_str());
            return 0;
        }
        if (fit_dist->parsed()) {
            cwb::RunnerConfig config = cwb::load_runner_config(config_path);
            apply_override(config);
            cwb::FitArtifacts artifacts;
            if (!site_addresses.empty()) {
                artifacts = cwb::fit_remote_command(site_addresses, config);
            } else if (simulate_sites > 0 || !partition.empty()) {
                if (data_path.empty()) {
                    throw cwb::UsageError("--simulate needs --data");
                }
                cwb::PartitionScheme scheme;
                if (!partition.empty()) {
                    scheme = parse_scheme(partition);
                } else {
                    scheme = config.site_column.empty() ? cwb::PartitionScheme::contiguous
                                                        : cwb::PartitionScheme::by_site_tag;
                }
                artifacts = cwb::fit_simulated_command(data_path, config, simulate_sites, scheme,
                                                       transcript_dir);
            } else {
                throw cwb::UsageError("pass either --simulate S or --sites addresses");
            }
            cwb::write_artifacts(artifacts, out_dir);
            std::printf("distributed fit: %zu iterations, model written to %s/model.json\n",
                        artifacts.model.selection_log.size(), out_dir.c_str());
            return 0;
        }
        if (compare->parsed()) {
            const cwb::AdditiveModel a = cwb::load_model(model_a);
            const cwb::AdditiveModel b = cwb::load_model(model_b);
            std::optional<cwb::Dataset> data;
            if (!compare_data.empty()) {
                cwb::CsvSchema schema;
                schema.response = a.metadata.contains("config")
                                      ? a.metadata["config"].value("response", "y")
                                      : "y";
                cwb::Dataset ds = cwb::load_csv(compare_data, schema);
                cwb::align_dataset_to_model(ds, a);
                data = std::move(ds);
            }
            const cwb::CompareReport report =
                cwb::compare_models(a, b, data ? &*data : nullptr, coeff_tol, risk_tol);
            if (!report_path.empty()) {
                std::ofstream out(report_path);
                out << report.to_json().dump(2) << "\n";
            }
            std::printf("%s\n", report.to_json().dump(2).c_str());
            if (!report.specs_match) return 2;
            return report.pass ? 0 : 1;
        }
        if (predict->parsed()) {
            if (!predict_site_value.empty()) predict_site = predict_site_value;
            cwb::predict_command(model_path, data_path, predict_site, out_csv);
            return 0;
        }
        if (effects->parsed()) {
            cwb::effects_command(model_path, grid_res, effects_csv, importance_csv);
            return 0;
        }
        if (gen_heart->parsed()) {
            cwb::gen_heart_command(out_dir, heart_seed);
            std::printf("heart demo data written to %s\n", out_dir.c_str());
            return 0;
        }
        if (clean->parsed()) {
            cwb::clean_heart_command(clean_in, clean_out, heart_schema_path);
            return 0;
        }
        throw cwb::UsageError("no subcommand given");
    });
}
