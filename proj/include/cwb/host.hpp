#pragma once

#include "cwb/model.hpp"
#include "cwb/penls.hpp"
#include "cwb/protocol.hpp"

#include <map>
#include <memory>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

namespace cwb {

struct RunConfig {
    LossSpec loss;
    double learning_rate = 0.1;
    int max_iters = 100;
    std::optional<int> patience;
    int privacy_level = 5;
    bool audit = false;  // exact cost accounting: no early stopping, no extras
    double ridge_jitter = 0.0;
    DfDefinition df_definition = DfDefinition::trace_s;
    std::vector<BaseLearnerSpec> specs;
    // When specs is empty, derive the list from the aggregated feature stats.
    std::optional<AutoSpecConfig> auto_specs;
};

// One direction of traffic, split into the counters the cost analysis tracks
// (paper) and everything this artifact adds around them (aux).
struct CounterSet {
    long init_paper = 0;
    long init_aux = 0;
    long fit_paper = 0;
    long fit_aux = 0;
    long final_values = 0;
    long messages = 0;
    long total() const { return init_paper + init_aux + fit_paper + fit_aux + final_values; }
};

struct CostLedger {
    std::map<int, CounterSet> sites;  // site -> host traffic, per site
    CounterSet host;                  // host -> sites, broadcasts counted once
    nlohmann::json to_json() const;
};

struct ExpectedCosts {
    long site_init = 0;     // sum over shared specs of d_l^2
    long site_fitting = 0;  // M * (sum of shared d_l + number of SSE entries)
    long host_fitting = 0;  // M * sum of shared d_l + M
};
ExpectedCosts audit_expected(const RunConfig& config, const FeatureMetadata& meta);

// Asserts the ledger matches the expected audit counts exactly; throws
// InputError naming the first mismatched counter.
void audit_costs(const CostLedger& ledger, const ExpectedCosts& expected);

// Carrier interface the host drives; implementations stamp and validate
// sequence numbers.
class HostChannel {
public:
    virtual ~HostChannel() = default;
    virtual void send(const ProtocolMessage& msg) = 0;
    virtual ProtocolMessage recv() = 0;
};

struct RiskPoint {
    int iteration = 0;
    double validation_risk = 0.0;
};

struct DistributedResult {
    AdditiveModel model;
    CostLedger ledger;
    std::vector<RiskPoint> validation_trace;
    std::vector<int> selection_trace;
    int best_iteration = 0;
    int iterations_run = 0;
    bool early_stopped = false;
    bool partial = false;
    std::map<int, double> lambda_table;
    std::map<int, double> lambda0_table;
};

// Runs the full coordinator protocol over the given per-site channels:
// roster collection, global stats, Gram aggregation and df calibration,
// the per-iteration distFit/SSE/selection loop, early stopping, and final
// model assembly.
DistributedResult run_host(const std::vector<HostChannel*>& channels, const RunConfig& config);

}  // namespace cwb
