#pragma once

#include "cwb/basis.hpp"
#include "cwb/loss.hpp"
#include "cwb/types.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cwb {

struct SelectionRecord {
    int iteration = 0;  // 1-based
    int selected = -1;
    // Squared norm of the pseudo residuals the iteration regressed on; the
    // baseline for SSE-reduction importance. NaN when not tracked (audit runs).
    double residual_ss = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::pair<int, double>> sse_table;  // ascending spec id
};

// Fitted additive model: intercept plus accumulated, learning-rate scaled
// coefficient vectors per base learner. Site-specific contributions are
// stitched site-major (site 1 slice first).
struct AdditiveModel {
    double intercept = 0.0;
    double learning_rate = 0.1;
    LossSpec loss;
    std::vector<BaseLearnerSpec> specs;
    FeatureMetadata features;
    std::map<int, Vector> contributions;
    std::vector<SelectionRecord> selection_log;
    nlohmann::json metadata = nlohmann::json::object();

    const BaseLearnerSpec& spec_by_id(int id) const;
    bool has_site_terms_selected() const;
};

// Additive predictor on the link scale. Site-specific terms resolve the site
// per row from `site_label` if given, else from the dataset's site column.
Vector predict_link(const AdditiveModel& model, const Dataset& ds,
                    const std::optional<std::string>& site_label = std::nullopt);
Vector predict_response(const AdditiveModel& model, const Dataset& ds,
                        const std::optional<std::string>& site_label = std::nullopt);

nlohmann::json model_to_json(const AdditiveModel& model);
AdditiveModel model_from_json(const nlohmann::json& doc);
void save_model(const AdditiveModel& model, const std::string& path);
AdditiveModel load_model(const std::string& path);

// Tidy per-feature effect decomposition: shared curve, per-site deviation and
// their sum on a fixed grid (numeric) or the level set (categorical).
struct EffectRow {
    std::string feature;
    std::string x_label;   // level for categoricals, formatted value otherwise
    double x_value = 0.0;  // grid value (numeric features)
    std::string site;      // "" for rows of site-less models
    double shared = 0.0;
    double site_effect = 0.0;
    double total = 0.0;
};
std::vector<EffectRow> export_partial_effects(const AdditiveModel& model, int grid_resolution);
void write_effects_csv(const std::vector<EffectRow>& rows, const std::string& path);

// Cumulative SSE-reduction share per spec, normalized to 1 over selected specs.
struct ImportanceRow {
    int spec_id = -1;
    std::string label;
    long selections = 0;
    double share = 0.0;
};
std::vector<ImportanceRow> variable_importance(const AdditiveModel& model);
void write_importance_csv(const std::vector<ImportanceRow>& rows, const std::string& path);

// Human-readable tag for a spec, e.g. "pspline(oldpeak)" or "linear()xsite".
std::string spec_label(const BaseLearnerSpec& spec);

std::string format_shortest(double v);

}  // namespace cwb
