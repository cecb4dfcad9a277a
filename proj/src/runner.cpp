#include "cwb/runner.hpp"

#include "cwb/heartgen.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

namespace cwb {

using json = nlohmann::json;

namespace {

std::string csv_risk(double v) {
    return std::isnan(v) ? std::string() : format_shortest(v);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << text;
}

}  // namespace

RunnerConfig parse_runner_config(const json& doc) {
    RunnerConfig cfg;
    cfg.echo = doc;
    cfg.run.loss.family = parse_loss(doc.at("loss").get<std::string>());
    cfg.run.learning_rate = doc.value("learning_rate", 0.1);
    cfg.run.max_iters = doc.value("max_iters", 100);
    if (cfg.run.max_iters < 1) throw UsageError("max_iters must be at least 1");
    if (doc.contains("patience") && !doc["patience"].is_null()) {
        cfg.run.patience = doc["patience"].get<int>();
    }
    cfg.run.privacy_level = doc.value("privacy_level", 5);
    cfg.run.audit = doc.value("audit", false);
    cfg.run.ridge_jitter = doc.value("ridge_jitter", 0.0);
    cfg.run.df_definition = parse_df_definition(doc.value("df_definition", "trace_s"));

    cfg.val_fraction = doc.value("val_fraction", cfg.run.patience ? 0.2 : 0.0);
    if (cfg.run.patience && cfg.val_fraction <= 0.0) {
        throw UsageError("early stopping needs val_fraction > 0");
    }
    cfg.val_seed = doc.value("val_seed", std::uint64_t{1});
    cfg.stratify = doc.value("stratify", true);
    cfg.response = doc.value("response", "y");
    cfg.site_column = doc.value("site_column", "");
    if (doc.contains("categorical_features")) {
        cfg.categorical_features = doc["categorical_features"].get<std::vector<std::string>>();
    }

    if (!doc.contains("specs") || (doc["specs"].is_string() && doc["specs"] == "auto")) {
        AutoSpecConfig auto_cfg;
        if (doc.contains("auto_specs")) {
            const json& a = doc["auto_specs"];
            auto_cfg.df = a.value("df", auto_cfg.df);
            auto_cfg.df_site = a.value("df_site", auto_cfg.df_site);
            auto_cfg.df_intercept = a.value("df_intercept", auto_cfg.df_intercept);
            auto_cfg.site_effects = a.value("site_effects", auto_cfg.site_effects);
            auto_cfg.n_basis = a.value("n_basis", auto_cfg.n_basis);
            auto_cfg.degree = a.value("degree", auto_cfg.degree);
            auto_cfg.diff_order = a.value("diff_order", auto_cfg.diff_order);
        }
        cfg.auto_specs = auto_cfg;
        cfg.run.auto_specs = auto_cfg;
    } else if (doc["specs"].is_array()) {
        cfg.run.specs = specs_from_json(doc["specs"]);
    } else {
        throw UsageError("config field 'specs' must be \"auto\" or an array");
    }
    return cfg;
}

RunnerConfig load_runner_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw UsageError("config " + path + " is not valid JSON: " + e.what());
    }
    try {
        return parse_runner_config(doc);
    } catch (const json::exception& e) {
        throw UsageError("config " + path + ": " + e.what());
    }
}

void coerce_categorical(Dataset& ds, const std::vector<std::string>& names) {
    for (const auto& name : names) {
        Column& col = ds.col(name);
        if (col.type == ColumnType::categorical) continue;
        col.type = ColumnType::categorical;
        col.cat.resize(col.num.size());
        for (std::size_t r = 0; r < col.num.size(); ++r) {
            col.cat[r] = col.missing[r] ? std::string() : format_shortest(col.num[r]);
        }
        col.num.clear();
    }
}

void align_dataset_to_model(Dataset& ds, const AdditiveModel& model) {
    std::vector<std::string> names;
    for (const auto& [name, levels] : model.features.levels) {
        if (ds.has_column(name)) names.push_back(name);
    }
    coerce_categorical(ds, names);
    if (ds.site_column.empty() && !model.features.site_labels.empty() && ds.has_column("site")) {
        ds.site_column = "site";
        coerce_categorical(ds, {"site"});
    }
}

Dataset load_typed_csv(const std::string& path, const RunnerConfig& config) {
    CsvSchema schema;
    schema.response = config.response;
    schema.site_column = config.site_column;
    Dataset ds = load_csv(path, schema);
    coerce_categorical(ds, config.categorical_features);
    if (!ds.has_column(config.response)) {
        throw UsageError("data has no response column '" + config.response + "'");
    }
    if (!config.site_column.empty() && !ds.has_column(config.site_column)) {
        throw UsageError("data has no site column '" + config.site_column + "'");
    }
    return ds;
}

std::vector<BaseLearnerSpec> resolve_specs(const RunnerConfig& config, const Dataset& ds) {
    if (!config.run.specs.empty()) return config.run.specs;
    if (!config.auto_specs) throw UsageError("no specs given");
    return build_auto_specs(schema_from_dataset(ds), *config.auto_specs);
}

// -------------------------------------------------------------------- fits

namespace {

json config_echo_metadata(const RunnerConfig& config) {
    json j;
    j["config"] = config.echo;
    j["val_fraction"] = config.val_fraction;
    j["val_seed"] = config.val_seed;
    j["stratify"] = config.stratify;
    return j;
}

}  // namespace

FitArtifacts fit_pooled_command(const std::string& data_csv, const RunnerConfig& config) {
    Dataset ds = load_typed_csv(data_csv, config);
    const auto specs = resolve_specs(config, ds);
    const FeatureMetadata meta = compute_feature_metadata(ds, specs);

    FitConfig fit_cfg;
    fit_cfg.loss = config.run.loss;
    fit_cfg.learning_rate = config.run.learning_rate;
    fit_cfg.max_iters = config.run.max_iters;
    fit_cfg.patience = config.run.patience;
    fit_cfg.df_definition = config.run.df_definition;
    fit_cfg.ridge_jitter = config.run.ridge_jitter;

    PooledFit fit;
    if (config.val_fraction > 0.0) {
        const SplitResult split =
            split_validation(ds, config.val_fraction, config.val_seed, config.stratify);
        fit = fit_pooled(split.train, &split.validation, specs, meta, fit_cfg);
    } else {
        fit = fit_pooled(ds, nullptr, specs, meta, fit_cfg);
    }

    FitArtifacts artifacts;
    json metadata = config_echo_metadata(config);
    metadata["mode"] = "pooled";
    metadata["best_iteration"] = fit.best_iteration;
    metadata["early_stopped"] = fit.early_stopped;
    metadata["iterations_run"] = static_cast<long>(fit.trace.size());
    metadata["ridge_jitter"] = config.run.ridge_jitter;
    metadata["df_definition"] = df_definition_name(config.run.df_definition);
    fit.model.metadata = std::move(metadata);
    artifacts.model = std::move(fit.model);
    artifacts.trace = std::move(fit.trace);
    return artifacts;
}

namespace {

FitArtifacts artifacts_from_distributed(DistributedResult result, const RunnerConfig& config) {
    FitArtifacts artifacts;
    for (std::size_t i = 0; i < result.selection_trace.size(); ++i) {
        IterationTrace tr;
        tr.iteration = static_cast<int>(i) + 1;
        tr.selected = result.selection_trace[i];
        tr.train_risk = std::numeric_limits<double>::quiet_NaN();
        if (i < result.validation_trace.size()) {
            tr.validation_risk = result.validation_trace[i].validation_risk;
        }
        artifacts.trace.push_back(tr);
    }
    json metadata = result.model.metadata;
    for (auto& [key, value] : config_echo_metadata(config).items()) metadata[key] = value;
    result.model.metadata = std::move(metadata);
    artifacts.model = std::move(result.model);
    artifacts.ledger = std::move(result.ledger);
    if (config.run.audit) {
        RunConfig audited = config.run;
        audited.specs = artifacts.model.specs;
        const ExpectedCosts expected = audit_expected(audited, artifacts.model.features);
        audit_costs(*artifacts.ledger, expected);
        artifacts.extra["audit_expected"] = {{"site_init", expected.site_init},
                                             {"site_fitting", expected.site_fitting},
                                             {"host_fitting", expected.host_fitting}};
    }
    return artifacts;
}

}  // namespace

FitArtifacts fit_simulated_command(const std::string& data_csv, const RunnerConfig& config,
                                   int n_sites, PartitionScheme scheme,
                                   const std::string& transcript_dir) {
    Dataset ds = load_typed_csv(data_csv, config);
    std::vector<Dataset> partitions = partition_horizontal(ds, n_sites, scheme, config.val_seed);
    // by-site-tag partitions arrive sorted by tag; remember the names so the
    // fitted model speaks tags rather than roster ids
    std::vector<std::string> site_names;
    if (scheme == PartitionScheme::by_site_tag && !config.site_column.empty()) {
        std::set<std::string> tags;
        const Column& col = ds.col(config.site_column);
        tags.insert(col.cat.begin(), col.cat.end());
        site_names.assign(tags.begin(), tags.end());
    }
    for (auto& p : partitions) {
        if (!p.site_column.empty()) p.drop_column(p.site_column);
    }

    SiteLocalConfig site_cfg;
    site_cfg.privacy_level = config.run.privacy_level;
    site_cfg.val_fraction = config.val_fraction;
    site_cfg.val_seed = config.val_seed;
    site_cfg.stratify = config.stratify;

    auto channels = spawn_simulated_cluster(partitions, site_cfg);
    std::vector<HostChannel*> raw;
    for (auto& ch : channels) raw.push_back(ch.get());
    DistributedResult result = run_host(raw, config.run);

    if (!transcript_dir.empty()) {
        std::filesystem::create_directories(transcript_dir);
        for (std::size_t i = 0; i < channels.size(); ++i) {
            write_transcript(channels[i]->transcript(),
                             transcript_dir + "/site" + std::to_string(i + 1) + ".transcript");
        }
    }
    if (site_names.size() == result.model.features.site_labels.size()) {
        result.model.features.site_labels = site_names;
    }
    return artifacts_from_distributed(std::move(result), config);
}

FitArtifacts fit_remote_command(const std::vector<std::string>& site_addresses,
                                const RunnerConfig& config) {
    if (site_addresses.empty()) throw UsageError("no site addresses given");
    std::vector<std::unique_ptr<TcpChannel>> channels;
    for (const auto& addr : site_addresses) {
        channels.push_back(std::make_unique<TcpChannel>(addr));
    }
    std::vector<HostChannel*> raw;
    for (auto& ch : channels) raw.push_back(ch.get());
    DistributedResult result = run_host(raw, config.run);
    return artifacts_from_distributed(std::move(result), config);
}

void write_artifacts(const FitArtifacts& artifacts, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    save_model(artifacts.model, out_dir + "/model.json");

    std::string risk = "iteration,train_risk,validation_risk\n";
    for (const auto& tr : artifacts.trace) {
        risk += std::to_string(tr.iteration) + "," + csv_risk(tr.train_risk) + "," +
                (tr.validation_risk ? csv_risk(*tr.validation_risk) : std::string()) + "\n";
    }
    write_text(out_dir + "/risk_trace.csv", risk);

    std::string log = "iteration,selected_spec_id,selected_label,winner_sse,residual_ss\n";
    for (const auto& rec : artifacts.model.selection_log) {
        double winner_sse = std::numeric_limits<double>::quiet_NaN();
        for (const auto& [id, sse] : rec.sse_table) {
            if (id == rec.selected) winner_sse = sse;
        }
        log += std::to_string(rec.iteration) + "," + std::to_string(rec.selected) + "," +
               spec_label(artifacts.model.spec_by_id(rec.selected)) + "," +
               csv_risk(winner_sse) + "," + csv_risk(rec.residual_ss) + "\n";
    }
    write_text(out_dir + "/selection_log.csv", log);

    if (artifacts.ledger) {
        json ledger = artifacts.ledger->to_json();
        for (auto& [key, value] : artifacts.extra.items()) ledger[key] = value;
        write_text(out_dir + "/ledger.json", ledger.dump(2) + "\n");
    }
}

// ----------------------------------------------------------------- compare

json CompareReport::to_json() const {
    json j;
    j["specs_match"] = specs_match;
    j["selections_match"] = selections_match;
    j["max_rel_coeff_diff"] = max_rel_coeff_diff;
    j["intercept_diff"] = intercept_diff;
    j["max_risk_diff"] = max_risk_diff;
    j["pass"] = pass;
    return j;
}

CompareReport compare_models(const AdditiveModel& a, const AdditiveModel& b, const Dataset* data,
                             double coeff_tol, double risk_tol) {
    CompareReport report;
    report.specs_match = specs_to_json(a.specs).dump() == specs_to_json(b.specs).dump();
    if (!report.specs_match) return report;

    report.selections_match = a.selection_log.size() == b.selection_log.size();
    if (report.selections_match) {
        for (std::size_t i = 0; i < a.selection_log.size(); ++i) {
            if (a.selection_log[i].selected != b.selection_log[i].selected) {
                report.selections_match = false;
                break;
            }
        }
    }

    report.intercept_diff = std::abs(a.intercept - b.intercept);
    double max_rel = report.intercept_diff / std::max(1.0, std::abs(a.intercept));
    auto fold = [&](const AdditiveModel& x, const AdditiveModel& y) {
        for (const auto& [id, theta] : x.contributions) {
            const auto it = y.contributions.find(id);
            if (it == y.contributions.end() || it->second.size() != theta.size()) {
                max_rel = std::numeric_limits<double>::infinity();
                continue;
            }
            for (Eigen::Index i = 0; i < theta.size(); ++i) {
                const double scale = std::max(1.0, std::abs(theta[i]));
                max_rel = std::max(max_rel, std::abs(theta[i] - it->second[i]) / scale);
            }
        }
    };
    fold(a, b);
    fold(b, a);
    report.max_rel_coeff_diff = max_rel;

    if (data) {
        const Vector y = data->response_vector();
        const double risk_a = empirical_risk(a.loss, y, predict_link(a, *data));
        const double risk_b = empirical_risk(b.loss, y, predict_link(b, *data));
        report.max_risk_diff = std::abs(risk_a - risk_b);
    }
    report.pass = report.specs_match && report.selections_match &&
                  report.max_rel_coeff_diff <= coeff_tol && report.max_risk_diff <= risk_tol;
    return report;
}

// ------------------------------------------------------- predict / effects

void predict_command(const std::string& model_path, const std::string& data_csv,
                     const std::optional<std::string>& site, const std::string& out_csv) {
    const AdditiveModel model = load_model(model_path);
    CsvSchema schema;
    Dataset ds = load_csv(data_csv, schema);
    align_dataset_to_model(ds, model);
    if (!model.features.site_labels.empty() && !site) {
        // rows may carry their own site tags via a `site` column
        if (ds.has_column("site")) {
            ds.site_column = "site";
        } else if (model.has_site_terms_selected()) {
            throw UsageError("model holds site-specific terms: pass --site or provide a 'site' "
                             "column in the data");
        }
    }
    const Vector link = predict_link(model, ds, site);
    std::string out = "row,link,response\n";
    for (Eigen::Index i = 0; i < link.size(); ++i) {
        const double response = inverse_link(model.loss, link[i]);
        out += std::to_string(i) + "," + format_shortest(link[i]) + "," +
               format_shortest(response) + "\n";
    }
    write_text(out_csv, out);
}

void effects_command(const std::string& model_path, int grid_resolution,
                     const std::string& effects_csv, const std::string& importance_csv) {
    const AdditiveModel model = load_model(model_path);
    write_effects_csv(export_partial_effects(model, grid_resolution), effects_csv);
    write_importance_csv(variable_importance(model), importance_csv);
}

void gen_heart_command(const std::string& out_dir, std::uint64_t seed) {
    std::filesystem::create_directories(out_dir);
    for (const auto& site : generate_heart_sites(seed)) {
        write_csv(site.raw, out_dir + "/" + site.name + ".csv");
    }
    write_csv(generate_heart_pooled(seed), out_dir + "/heart_pooled.csv");
}

void clean_heart_command(const std::string& in_csv, const std::string& out_csv,
                         const std::string& schema_path) {
    const HeartSchema schema =
        schema_path.empty() ? HeartSchema() : load_heart_schema(schema_path);
    CsvSchema csv_schema;
    csv_schema.response = schema.raw_response;
    Dataset raw = load_csv(in_csv, csv_schema);
    if (raw.has_column("site")) raw.site_column = "site";
    const Dataset cleaned = clean_heart(raw, schema);
    write_csv(cleaned, out_csv);
    std::printf("%s: %zu rows in, %zu rows after cleaning\n", in_csv.c_str(), raw.n_rows(),
                cleaned.n_rows());
}

int serve_site_command(const std::string& data_csv, int site_id, const std::string& listen_addr,
                       const std::string& response, int privacy_level, double val_fraction,
                       std::uint64_t val_seed, bool stratify,
                       const std::vector<std::string>& categorical_features) {
    CsvSchema schema;
    schema.response = response;
    Dataset ds = load_csv(data_csv, schema);
    coerce_categorical(ds, categorical_features);
    if (!ds.has_column(response)) {
        throw UsageError("data has no response column '" + response + "'");
    }
    SiteLocalConfig cfg;
    cfg.privacy_level = privacy_level;
    cfg.val_fraction = val_fraction;
    cfg.val_seed = val_seed;
    cfg.stratify = stratify;
    SiteServer server(std::move(ds), site_id, cfg, listen_addr);
    std::printf("site %d listening on port %d\n", site_id, server.port());
    std::fflush(stdout);
    return server.run_once();
}

}  // namespace cwb
