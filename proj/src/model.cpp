#include "cwb/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

namespace cwb {

using json = nlohmann::json;

std::string format_shortest(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string spec_label(const BaseLearnerSpec& spec) {
    std::string label = kind_name(spec.kind);
    label += "(";
    for (std::size_t i = 0; i < spec.features.size(); ++i) {
        if (i) label += ",";
        label += spec.features[i];
    }
    label += ")";
    if (spec.site_specific) label += "xsite";
    return label;
}

const BaseLearnerSpec& AdditiveModel::spec_by_id(int id) const {
    for (const auto& s : specs) {
        if (s.id == id) return s;
    }
    throw InputError("model has no spec with id " + std::to_string(id));
}

bool AdditiveModel::has_site_terms_selected() const {
    for (const auto& [id, theta] : contributions) {
        if (spec_by_id(id).site_specific && theta.cwiseAbs().maxCoeff() > 0.0) return true;
    }
    return false;
}

// ----------------------------------------------------------------- predict

namespace {

int site_index_for_label(const FeatureMetadata& meta, const std::string& label) {
    const auto it = std::find(meta.site_labels.begin(), meta.site_labels.end(), label);
    if (it == meta.site_labels.end()) {
        throw InputError("unknown site label: " + label);
    }
    return static_cast<int>(it - meta.site_labels.begin());
}

}  // namespace

Vector predict_link(const AdditiveModel& model, const Dataset& ds,
                    const std::optional<std::string>& site_label) {
    const Eigen::Index n = static_cast<Eigen::Index>(ds.n_rows());
    Vector f = Vector::Constant(n, model.intercept);
    for (const auto& [id, theta] : model.contributions) {
        const BaseLearnerSpec& spec = model.spec_by_id(id);
        if (!spec.site_specific) {
            f += build_inner_design(spec, ds, model.features) * theta;
            continue;
        }
        const int d = inner_dimension(spec, model.features);
        if (site_label) {
            const int s = site_index_for_label(model.features, *site_label);
            f += build_inner_design(spec, ds, model.features) * theta.segment(s * d, d);
        } else if (!ds.site_column.empty() && ds.has_column(ds.site_column)) {
            f += build_design(spec, ds, model.features) * theta;
        } else {
            throw InputError("site-specific terms were selected: pass a site label or provide "
                             "a site column");
        }
    }
    return f;
}

Vector predict_response(const AdditiveModel& model, const Dataset& ds,
                        const std::optional<std::string>& site_label) {
    Vector f = predict_link(model, ds, site_label);
    for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = inverse_link(model.loss, f[i]);
    return f;
}

// ----------------------------------------------------------- serialization

json model_to_json(const AdditiveModel& model) {
    json j;
    j["format"] = "cwboost-model/1";
    j["loss"] = loss_name(model.loss.family);
    j["learning_rate"] = model.learning_rate;
    j["intercept"] = model.intercept;
    j["specs"] = specs_to_json(model.specs);
    j["features"] = metadata_to_json(model.features);
    json coeffs = json::object();
    for (const auto& [id, theta] : model.contributions) {
        json arr = json::array();
        for (Eigen::Index i = 0; i < theta.size(); ++i) arr.push_back(theta[i]);
        coeffs[std::to_string(id)] = std::move(arr);
    }
    j["coefficients"] = std::move(coeffs);
    json log = json::array();
    for (const auto& rec : model.selection_log) {
        json entry;
        entry["m"] = rec.iteration;
        entry["selected"] = rec.selected;
        entry["residual_ss"] =
            std::isnan(rec.residual_ss) ? json(nullptr) : json(rec.residual_ss);
        json table = json::array();
        for (const auto& [id, sse] : rec.sse_table) table.push_back(json::array({id, sse}));
        entry["sse"] = std::move(table);
        log.push_back(std::move(entry));
    }
    j["selection_log"] = std::move(log);
    j["metadata"] = model.metadata;
    return j;
}

AdditiveModel model_from_json(const json& doc) {
    if (doc.value("format", "") != std::string("cwboost-model/1")) {
        throw InputError("not a cwboost model document");
    }
    AdditiveModel model;
    model.loss.family = parse_loss(doc.at("loss").get<std::string>());
    model.learning_rate = doc.at("learning_rate").get<double>();
    model.intercept = doc.at("intercept").get<double>();
    model.specs = specs_from_json(doc.at("specs"));
    model.features = metadata_from_json(doc.at("features"));
    for (const auto& [key, arr] : doc.at("coefficients").items()) {
        Vector theta(static_cast<Eigen::Index>(arr.size()));
        for (std::size_t i = 0; i < arr.size(); ++i) {
            theta[static_cast<Eigen::Index>(i)] = arr.at(i).get<double>();
        }
        model.contributions.emplace(std::stoi(key), std::move(theta));
    }
    for (const auto& entry : doc.at("selection_log")) {
        SelectionRecord rec;
        rec.iteration = entry.at("m").get<int>();
        rec.selected = entry.at("selected").get<int>();
        if (!entry.at("residual_ss").is_null()) {
            rec.residual_ss = entry.at("residual_ss").get<double>();
        }
        for (const auto& pair : entry.at("sse")) {
            rec.sse_table.emplace_back(pair.at(0).get<int>(), pair.at(1).get<double>());
        }
        model.selection_log.push_back(std::move(rec));
    }
    model.metadata = doc.value("metadata", json::object());
    return model;
}

void save_model(const AdditiveModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << model_to_json(model).dump(2) << "\n";
}

AdditiveModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    return model_from_json(json::parse(in));
}

// ----------------------------------------------------------------- effects

std::vector<EffectRow> export_partial_effects(const AdditiveModel& model, int grid_resolution) {
    if (grid_resolution < 2) throw InputError("grid resolution must be at least 2");
    std::vector<EffectRow> rows;

    // Univariate features referenced by any spec, in spec order.
    std::vector<std::string> features;
    for (const auto& spec : model.specs) {
        if (spec.features.size() != 1) continue;
        if (std::find(features.begin(), features.end(), spec.features[0]) == features.end()) {
            features.push_back(spec.features[0]);
        }
    }

    const std::vector<std::string> no_sites{""};
    const auto& sites = model.features.site_labels.empty() ? no_sites : model.features.site_labels;

    auto contribution = [&](const BaseLearnerSpec& spec) -> const Vector* {
        const auto it = model.contributions.find(spec.id);
        return it == model.contributions.end() ? nullptr : &it->second;
    };

    for (const auto& feature : features) {
        // Evaluation grid: numeric range or level set.
        std::vector<std::pair<std::string, double>> grid;
        const bool numeric = model.features.ranges.count(feature) > 0;
        if (numeric) {
            const auto [lo, hi] = model.features.ranges.at(feature);
            for (int i = 0; i < grid_resolution; ++i) {
                const double x =
                    lo + (hi - lo) * static_cast<double>(i) / (grid_resolution - 1.0);
                grid.emplace_back(format_shortest(x), x);
            }
        } else if (model.features.levels.count(feature)) {
            for (const auto& level : model.features.levels.at(feature)) {
                grid.emplace_back(level, 0.0);
            }
        } else {
            continue;
        }

        for (const auto& [label, value] : grid) {
            // Basis row per spec evaluated at this grid point.
            auto eval_inner = [&](const BaseLearnerSpec& spec) -> Vector {
                switch (spec.kind) {
                    case LearnerKind::linear: {
                        Vector row(2);
                        row << 1.0, value;
                        return row;
                    }
                    case LearnerKind::pspline: {
                        Vector col(1);
                        col << value;
                        const auto [lo, hi] = model.features.ranges.at(feature);
                        return build_bspline_basis(col, spec.degree, spec.n_basis, lo, hi)
                            .row(0)
                            .transpose();
                    }
                    case LearnerKind::categorical: {
                        return build_categorical_basis({label}, model.features.levels.at(feature))
                            .row(0)
                            .transpose();
                    }
                    default:
                        throw InputError("unsupported spec kind in effects export");
                }
            };

            double shared_value = 0.0;
            for (const auto& spec : model.specs) {
                if (spec.site_specific || spec.features.size() != 1 ||
                    spec.features[0] != feature) {
                    continue;
                }
                if (const Vector* theta = contribution(spec)) {
                    shared_value += eval_inner(spec).dot(*theta);
                }
            }
            for (std::size_t s = 0; s < sites.size(); ++s) {
                double site_value = 0.0;
                for (const auto& spec : model.specs) {
                    if (!spec.site_specific || spec.features.size() != 1 ||
                        spec.features[0] != feature) {
                        continue;
                    }
                    if (const Vector* theta = contribution(spec)) {
                        const int d = inner_dimension(spec, model.features);
                        site_value += eval_inner(spec).dot(
                            theta->segment(static_cast<Eigen::Index>(s) * d, d));
                    }
                }
                EffectRow row;
                row.feature = feature;
                row.x_label = label;
                row.x_value = value;
                row.site = sites[s];
                row.shared = shared_value;
                row.site_effect = site_value;
                row.total = shared_value + site_value;
                rows.push_back(std::move(row));
            }
        }
    }
    return rows;
}

void write_effects_csv(const std::vector<EffectRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << "feature,x,site,shared,site_effect,total\n";
    for (const auto& r : rows) {
        out << r.feature << "," << r.x_label << "," << r.site << ","
            << format_shortest(r.shared) << "," << format_shortest(r.site_effect) << ","
            << format_shortest(r.total) << "\n";
    }
}

// -------------------------------------------------------------- importance

std::vector<ImportanceRow> variable_importance(const AdditiveModel& model) {
    std::map<int, ImportanceRow> by_spec;
    double total = 0.0;
    for (const auto& rec : model.selection_log) {
        if (rec.selected < 0) continue;
        auto& row = by_spec[rec.selected];
        row.spec_id = rec.selected;
        row.selections += 1;
        if (std::isnan(rec.residual_ss)) continue;
        double winner_sse = std::numeric_limits<double>::quiet_NaN();
        for (const auto& [id, sse] : rec.sse_table) {
            if (id == rec.selected) {
                winner_sse = sse;
                break;
            }
        }
        if (std::isnan(winner_sse)) continue;
        const double reduction = std::max(0.0, rec.residual_ss - winner_sse);
        row.share += reduction;
        total += reduction;
    }
    std::vector<ImportanceRow> rows;
    for (auto& [id, row] : by_spec) {
        row.label = spec_label(model.spec_by_id(id));
        if (total > 0.0) row.share /= total;
        rows.push_back(row);
    }
    std::sort(rows.begin(), rows.end(), [](const ImportanceRow& a, const ImportanceRow& b) {
        if (a.share != b.share) return a.share > b.share;
        return a.spec_id < b.spec_id;
    });
    return rows;
}

void write_importance_csv(const std::vector<ImportanceRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << "spec_id,label,selections,share\n";
    for (const auto& r : rows) {
        out << r.spec_id << "," << r.label << "," << r.selections << ","
            << format_shortest(r.share) << "\n";
    }
}

}  // namespace cwb
