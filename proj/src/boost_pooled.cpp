#include "cwb/boost_pooled.hpp"

#include <algorithm>
#include <cmath>

namespace cwb {

double sse(const Vector& residuals, const Matrix& Z, const Vector& theta) {
    if (Z.rows() != residuals.size() || Z.cols() != theta.size()) {
        throw InputError("sse: shape mismatch");
    }
    return (residuals - Z * theta).squaredNorm();
}

namespace {

// Row indices grouped by ascending site label; one group holding all rows
// when the dataset carries no site column.
std::vector<std::vector<std::size_t>> site_row_groups(const Dataset& ds) {
    std::vector<std::vector<std::size_t>> groups;
    if (ds.site_column.empty() || !ds.has_column(ds.site_column)) {
        std::vector<std::size_t> all(ds.n_rows());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        groups.push_back(std::move(all));
        return groups;
    }
    const Column& tags = ds.col(ds.site_column);
    std::vector<std::string> labels(tags.cat.begin(), tags.cat.end());
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    for (const auto& label : labels) {
        std::vector<std::size_t> rows;
        for (std::size_t r = 0; r < tags.cat.size(); ++r) {
            if (tags.cat[r] == label) rows.push_back(r);
        }
        groups.push_back(std::move(rows));
    }
    return groups;
}

Matrix slice_rows(const Matrix& Z, const std::vector<std::size_t>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), Z.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = Z.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

struct LearnerState {
    BaseLearnerSpec spec;
    Matrix Z_train;
    Matrix Z_val;
    Matrix gram;
    Matrix penalty;
};

}  // namespace

PooledFit fit_pooled(const Dataset& train, const Dataset* validation,
                     const std::vector<BaseLearnerSpec>& specs, const FeatureMetadata& meta,
                     const FitConfig& config) {
    validate_specs(specs);
    if (!(config.learning_rate > 0.0 && config.learning_rate <= 1.0)) {
        throw InputError("learning rate must be in (0, 1]");
    }
    if (config.max_iters < 1) throw InputError("max_iters must be at least 1");
    if (config.patience && !validation) {
        throw InputError("early stopping requires validation data");
    }

    const Vector y = train.response_vector();
    validate_response(config.loss, y);
    Vector y_val;
    if (validation) {
        y_val = validation->response_vector();
        validate_response(config.loss, y_val);
    }

    PooledFit out;
    const double nu = config.learning_rate;

    // Designs, grams, calibrated penalties. Shared learners calibrate lambda
    // on the full Gram; site-specific learners inherit the twin's lambda and
    // calibrate the extra ridge lambda0 on the averaged per-site inner Gram.
    const auto groups = site_row_groups(train);
    std::vector<LearnerState> learners;
    learners.reserve(specs.size());
    for (const auto& spec : specs) {
        LearnerState st;
        st.spec = spec;
        st.Z_train = build_design(spec, train, meta);
        if (validation) st.Z_val = build_design(spec, *validation, meta);
        st.gram = st.Z_train.transpose() * st.Z_train;
        learners.push_back(std::move(st));
    }
    for (auto& st : learners) {
        const BaseLearnerSpec& spec = st.spec;
        const PenaltyMatrix K_unit = unit_penalty(spec, meta);
        if (!spec.site_specific) {
            double lambda = 0.0;
            if (spec.df_target) {
                lambda = calibrate_lambda(st.gram, K_unit.entries, *spec.df_target,
                                          config.df_definition);
                out.lambda_table[spec.id] = lambda;
            }
            st.penalty = lambda * K_unit.entries;
            continue;
        }
        if (!spec.df_target) {
            throw InputError("site-specific spec " + std::to_string(spec.id) +
                             " needs a df_target to calibrate lambda0");
        }
        const int S = meta.n_sites();
        const int d = inner_dimension(spec, meta);
        double lambda_inner = 0.0;
        if (const BaseLearnerSpec* twin = shared_twin(spec, specs)) {
            const auto it = out.lambda_table.find(twin->id);
            if (it != out.lambda_table.end()) lambda_inner = it->second;
        }
        // Average per-site inner Gram, summed in ascending site order.
        const Matrix inner = build_inner_design(spec, train, meta);
        Matrix avg = Matrix::Zero(d, d);
        for (const auto& rows : groups) {
            const Matrix Zs = slice_rows(inner, rows);
            avg += Zs.transpose() * Zs;
        }
        avg /= static_cast<double>(S);
        PenaltyMatrix K_inner_unit = unit_penalty(spec, meta);
        const Matrix K_inner = lambda_inner * K_inner_unit.entries;
        const double lambda0 =
            calibrate_lambda0_block(avg, K_inner, S, *spec.df_target, config.df_definition);
        out.lambda_table[spec.id] = lambda_inner;
        out.lambda0_table[spec.id] = lambda0;
        st.penalty = build_kronecker_sum_penalty(Matrix::Identity(S, S), lambda0,
                                                 K_inner_unit.entries, lambda_inner, S, d)
                         .entries;
    }

    // Loss-optimal intercept from per-site aggregates, ascending site order.
    std::vector<ResponseAggregate> aggregates;
    for (const auto& rows : groups) {
        ResponseAggregate agg;
        for (std::size_t r : rows) agg.sum_y += y[static_cast<Eigen::Index>(r)];
        agg.n = static_cast<long>(rows.size());
        aggregates.push_back(agg);
    }
    const double intercept = init_constant(config.loss, aggregates);

    Vector f = Vector::Constant(y.size(), intercept);
    Vector f_val;
    if (validation) f_val = Vector::Constant(y_val.size(), intercept);

    FactorCache cache;
    std::vector<SelectionRecord> log;
    std::vector<Vector> selected_thetas;
    EarlyStopTracker stopper;
    bool early_stopped = false;

    for (int m = 1; m <= config.max_iters; ++m) {
        const Vector r = pseudo_residuals(config.loss, y, f);

        SelectionRecord rec;
        rec.iteration = m;
        if (config.track_residual_ss) rec.residual_ss = r.squaredNorm();
        int best_id = -1;
        double best_sse = std::numeric_limits<double>::infinity();
        Vector best_theta;
        for (auto& st : learners) {
            const Vector u = st.Z_train.transpose() * r;
            const PenalizedFit fit = solve_penalized(st.gram, st.penalty, u, st.spec.id, &cache,
                                                     config.ridge_jitter);
            const double learner_sse = sse(r, st.Z_train, fit.coefficients);
            rec.sse_table.emplace_back(st.spec.id, learner_sse);
            if (learner_sse < best_sse) {  // ties keep the smallest id
                best_sse = learner_sse;
                best_id = st.spec.id;
                best_theta = fit.coefficients;
            }
        }
        rec.selected = best_id;
        log.push_back(std::move(rec));
        selected_thetas.push_back(best_theta);

        const LearnerState& winner = learners[static_cast<std::size_t>(best_id)];
        f += nu * (winner.Z_train * best_theta);
        if (validation) f_val += nu * (winner.Z_val * best_theta);

        IterationTrace tr;
        tr.iteration = m;
        tr.selected = best_id;
        tr.train_risk = empirical_risk(config.loss, y, f);
        bool stop = false;
        if (validation) {
            tr.validation_risk = empirical_risk(config.loss, y_val, f_val);
            stop = stopper.update(m, *tr.validation_risk, config.patience);
        }
        out.trace.push_back(tr);
        if (stop) {
            early_stopped = true;
            break;
        }
    }

    // With early stopping requested the returned model is the prefix ending at
    // the best validation iteration; otherwise every iteration run is kept and
    // validation data only traces risks.
    const int iterations_run = static_cast<int>(log.size());
    const int kept = config.patience ? stopper.best_iteration : iterations_run;

    AdditiveModel model;
    model.intercept = intercept;
    model.learning_rate = nu;
    model.loss = config.loss;
    model.specs = specs;
    model.features = meta;
    model.selection_log.assign(log.begin(), log.begin() + kept);
    for (int m = 0; m < kept; ++m) {
        const int id = log[static_cast<std::size_t>(m)].selected;
        auto [it, inserted] = model.contributions.try_emplace(
            id, Vector::Zero(selected_thetas[static_cast<std::size_t>(m)].size()));
        it->second += nu * selected_thetas[static_cast<std::size_t>(m)];
    }

    out.model = std::move(model);
    out.best_iteration = kept;
    out.early_stopped = early_stopped;
    return out;
}

PooledFit fit_pooled(const Dataset& train, const Dataset* validation,
                     const std::vector<BaseLearnerSpec>& specs, const FitConfig& config) {
    return fit_pooled(train, validation, specs, compute_feature_metadata(train, specs), config);
}

}  // namespace cwb
