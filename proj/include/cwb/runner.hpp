#pragma once

#include "cwb/boost_pooled.hpp"
#include "cwb/host.hpp"
#include "cwb/transport.hpp"

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cwb {

// Parsed operator configuration (CONFIG.md documents the JSON layout).
struct RunnerConfig {
    RunConfig run;
    std::optional<AutoSpecConfig> auto_specs;  // set when "specs" is "auto"
    double val_fraction = 0.0;
    std::uint64_t val_seed = 1;
    bool stratify = true;
    std::string response = "y";
    std::string site_column;
    std::vector<std::string> categorical_features;  // coerce after CSV inference
    nlohmann::json echo;
};

RunnerConfig parse_runner_config(const nlohmann::json& doc);
RunnerConfig load_runner_config(const std::string& path);

Dataset load_typed_csv(const std::string& path, const RunnerConfig& config);

// Resolves "auto" specs against a concrete dataset (pooled paths).
std::vector<BaseLearnerSpec> resolve_specs(const RunnerConfig& config, const Dataset& ds);

struct FitArtifacts {
    AdditiveModel model;
    std::vector<IterationTrace> trace;
    std::optional<CostLedger> ledger;
    nlohmann::json extra;  // ledger extras (audit expectations)
};

// Command implementations shared by the cwboost / hostctl binaries. All of
// them throw on failure; mains translate exceptions into exit codes.
FitArtifacts fit_pooled_command(const std::string& data_csv, const RunnerConfig& config);
FitArtifacts fit_simulated_command(const std::string& data_csv, const RunnerConfig& config,
                                   int n_sites, PartitionScheme scheme,
                                   const std::string& transcript_dir = "");
FitArtifacts fit_remote_command(const std::vector<std::string>& site_addresses,
                                const RunnerConfig& config);

void write_artifacts(const FitArtifacts& artifacts, const std::string& out_dir);

struct CompareReport {
    bool specs_match = false;
    bool selections_match = false;
    double max_rel_coeff_diff = 0.0;
    double max_risk_diff = 0.0;
    double intercept_diff = 0.0;
    bool pass = false;
    nlohmann::json to_json() const;
};
CompareReport compare_models(const AdditiveModel& a, const AdditiveModel& b,
                             const Dataset* data, double coeff_tol = 1e-8,
                             double risk_tol = 1e-9);

void predict_command(const std::string& model_path, const std::string& data_csv,
                     const std::optional<std::string>& site, const std::string& out_csv);
void effects_command(const std::string& model_path, int grid_resolution,
                     const std::string& effects_csv, const std::string& importance_csv);
void gen_heart_command(const std::string& out_dir, std::uint64_t seed);

// Applies the UCI heart cleaning rules; schema_path empty -> built-in default.
void clean_heart_command(const std::string& in_csv, const std::string& out_csv,
                         const std::string& schema_path);

// sitectl entry: loads data, serves one session, returns the exit code.
int serve_site_command(const std::string& data_csv, int site_id, const std::string& listen_addr,
                       const std::string& response, int privacy_level, double val_fraction,
                       std::uint64_t val_seed, bool stratify,
                       const std::vector<std::string>& categorical_features);

// Converts a numeric column to categorical labels in place.
void coerce_categorical(Dataset& ds, const std::vector<std::string>& names);

// Coerces the columns the model treats as categorical and wires up the site
// column, so freshly loaded CSVs line up with the model's bases.
void align_dataset_to_model(Dataset& ds, const AdditiveModel& model);

}  // namespace cwb
