#pragma once

#include "cwb/model.hpp"
#include "cwb/penls.hpp"

#include <optional>
#include <vector>

namespace cwb {

struct FitConfig {
    LossSpec loss;
    double learning_rate = 0.1;
    int max_iters = 100;
    std::optional<int> patience;  // early stopping; requires validation data
    DfDefinition df_definition = DfDefinition::trace_s;
    double ridge_jitter = 0.0;
    bool track_residual_ss = true;
};

// Patience rule shared by the pooled and distributed paths: track the best
// post-update validation risk; stop once `patience` iterations pass without
// an improvement.
struct EarlyStopTracker {
    double best_risk = std::numeric_limits<double>::infinity();
    int best_iteration = 0;
    bool update(int iteration, double risk, const std::optional<int>& patience) {
        if (risk < best_risk) {
            best_risk = risk;
            best_iteration = iteration;
        }
        return patience.has_value() && iteration - best_iteration >= *patience;
    }
};

struct IterationTrace {
    int iteration = 0;
    int selected = -1;
    double train_risk = 0.0;
    std::optional<double> validation_risk;
};

struct PooledFit {
    AdditiveModel model;
    std::vector<IterationTrace> trace;
    int best_iteration = 0;  // iterations included in the returned model
    bool early_stopped = false;
    std::map<int, double> lambda_table;    // spec id -> calibrated lambda
    std::map<int, double> lambda0_table;   // site-specific spec id -> lambda0
};

// Sum of squared errors of a fitted learner against the residuals.
double sse(const Vector& residuals, const Matrix& Z, const Vector& theta);

// Component-wise boosting on pooled data: residual update, per-learner
// penalized least squares, SSE selection with smallest-id tie-break, and
// learning-rate scaled accumulation. `validation` may be null when no early
// stopping is requested; with validation present the returned model is
// truncated to the iteration with minimal validation risk.
PooledFit fit_pooled(const Dataset& train, const Dataset* validation,
                     const std::vector<BaseLearnerSpec>& specs, const FeatureMetadata& meta,
                     const FitConfig& config);

// Convenience overload computing the metadata from the training data.
PooledFit fit_pooled(const Dataset& train, const Dataset* validation,
                     const std::vector<BaseLearnerSpec>& specs, const FitConfig& config);

}  // namespace cwb
