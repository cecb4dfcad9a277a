#include "cwb/host.hpp"

#include "cwb/boost_pooled.hpp"
#include "cwb/site.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace cwb {

using json = nlohmann::json;

json CostLedger::to_json() const {
    auto counters = [](const CounterSet& c) {
        json j;
        j["init_paper"] = c.init_paper;
        j["init_aux"] = c.init_aux;
        j["fitting_paper"] = c.fit_paper;
        j["fitting_aux"] = c.fit_aux;
        j["final"] = c.final_values;
        j["messages"] = c.messages;
        j["total"] = c.total();
        return j;
    };
    json j;
    json site_obj = json::object();
    for (const auto& [id, c] : sites) site_obj[std::to_string(id)] = counters(c);
    j["sites"] = std::move(site_obj);
    j["host"] = counters(host);
    return j;
}

ExpectedCosts audit_expected(const RunConfig& config, const FeatureMetadata& meta) {
    ExpectedCosts e;
    long sum_shared_d = 0;
    long sse_entries = 0;
    for (const auto& spec : config.specs) {
        const int d = inner_dimension(spec, meta);
        ++sse_entries;
        if (!spec.site_specific) {
            e.site_init += static_cast<long>(d) * d;
            sum_shared_d += d;
        }
    }
    const long M = config.max_iters;
    e.site_fitting = M * (sum_shared_d + sse_entries);
    e.host_fitting = M * sum_shared_d + M;
    return e;
}

void audit_costs(const CostLedger& ledger, const ExpectedCosts& expected) {
    for (const auto& [id, c] : ledger.sites) {
        if (c.init_paper != expected.site_init) {
            throw InputError("audit: site " + std::to_string(id) + " init counter " +
                             std::to_string(c.init_paper) + " != expected " +
                             std::to_string(expected.site_init));
        }
        if (c.fit_paper != expected.site_fitting) {
            throw InputError("audit: site " + std::to_string(id) + " fitting counter " +
                             std::to_string(c.fit_paper) + " != expected " +
                             std::to_string(expected.site_fitting));
        }
    }
    if (ledger.host.fit_paper != expected.host_fitting) {
        throw InputError("audit: host fitting counter " + std::to_string(ledger.host.fit_paper) +
                         " != expected " + std::to_string(expected.host_fitting));
    }
}

namespace {

enum class Phase { init, fitting, final_phase };

struct LedgerRecorder {
    CostLedger ledger;

    void inbound(int site_id, const ProtocolMessage& msg, Phase phase, bool paper) {
        CounterSet& c = ledger.sites[site_id];
        ++c.messages;
        add(c, msg, phase, paper);
    }
    void outbound_broadcast(const ProtocolMessage& msg, Phase phase, bool paper) {
        ++ledger.host.messages;
        add(ledger.host, msg, phase, paper);
    }

private:
    static void add(CounterSet& c, const ProtocolMessage& msg, Phase phase, bool paper) {
        const long values = value_count(msg);
        switch (phase) {
            case Phase::init:
                (paper ? c.init_paper : c.init_aux) += values;
                break;
            case Phase::fitting:
                if (const auto* sel = std::get_if<SelectionMsg>(&msg.body)) {
                    // the broadcast index is the one paper-counted value; a
                    // redundant winner theta rides along as auxiliary
                    c.fit_paper += 1;
                    c.fit_aux += sel->theta ? static_cast<long>(sel->theta->size()) : 0;
                } else if (const auto* sse = std::get_if<SseReportMsg>(&msg.body)) {
                    for (const auto& [id, value] : sse->entries) {
                        (id >= 0 ? c.fit_paper : c.fit_aux) += 1;
                    }
                } else {
                    (paper ? c.fit_paper : c.fit_aux) += values;
                }
                break;
            case Phase::final_phase:
                c.final_values += values;
                break;
        }
    }
};

struct SiteInfo {
    int site_id = 0;
    HostChannel* channel = nullptr;
    long n_obs = 0;
    FeatureStatsMsg stats;
};

template <typename T>
T expect(const ProtocolMessage& msg) {
    if (const T* body = std::get_if<T>(&msg.body)) return *body;
    if (const auto* abort = std::get_if<AbortMsg>(&msg.body)) {
        throw PrivacyRefusal(abort->site_id, abort->payload_kind, abort->n_contributing, 0);
    }
    throw ProtocolError(std::string("unexpected message type ") + message_type(msg));
}

}  // namespace

DistributedResult run_host(const std::vector<HostChannel*>& channels, const RunConfig& run_config) {
    RunConfig config = run_config;
    if (!config.specs.empty()) validate_specs(config.specs);
    if (channels.empty()) throw InputError("no site channels");
    if (!(config.learning_rate > 0.0 && config.learning_rate <= 1.0)) {
        throw InputError("learning rate must be in (0, 1]");
    }
    if (config.max_iters < 1) throw InputError("max_iters must be at least 1");
    if (config.audit && config.patience) {
        throw InputError("audit mode runs a fixed iteration budget without early stopping");
    }

    LedgerRecorder rec;
    DistributedResult out;

    // --- roster and per-site stats ------------------------------------------
    std::vector<SiteInfo> sites;
    for (HostChannel* ch : channels) {
        SiteInfo info;
        info.channel = ch;
        ProtocolMessage hello_msg = ch->recv();
        const HelloMsg hello = expect<HelloMsg>(hello_msg);
        info.site_id = hello.site_id;
        info.n_obs = hello.n_obs;
        ProtocolMessage stats_msg = ch->recv();
        info.stats = expect<FeatureStatsMsg>(stats_msg);
        sites.push_back(std::move(info));
        rec.inbound(hello.site_id, hello_msg, Phase::init, false);
        rec.inbound(hello.site_id, stats_msg, Phase::init, false);
    }
    std::sort(sites.begin(), sites.end(),
              [](const SiteInfo& a, const SiteInfo& b) { return a.site_id < b.site_id; });
    for (std::size_t i = 1; i < sites.size(); ++i) {
        if (sites[i].site_id == sites[i - 1].site_id) {
            throw ProtocolError("duplicate site id " + std::to_string(sites[i].site_id));
        }
    }
    const int S = static_cast<int>(sites.size());
    const PrivacyPolicy policy{config.privacy_level};
    long min_site_n = std::numeric_limits<long>::max();
    for (const auto& s : sites) {
        // sender-side guards already ran; re-check against the host's policy
        guard_aggregate(policy, s.stats.n_train, "FeatureStats", s.site_id);
        min_site_n = std::min(min_site_n, s.stats.n_train);
        if (config.patience && s.stats.n_val < 1) {
            throw InputError("early stopping requested but site " + std::to_string(s.site_id) +
                             " reports no validation rows");
        }
    }

    // resolve "auto" spec lists from the aggregated schema
    if (config.specs.empty()) {
        if (!config.auto_specs) throw InputError("no specs and no auto-spec rules given");
        FeatureSchema schema;
        for (const auto& s : sites) {
            for (const auto& [name, range] : s.stats.ranges) {
                schema.emplace(name, std::make_pair(true, 0));
            }
            for (const auto& [name, levels] : s.stats.levels) {
                auto [it, inserted] = schema.emplace(name, std::make_pair(false, 0));
                if (!it->second.first) {
                    std::set<std::string> merged;
                    // level counts need the union across sites
                    for (const auto& other : sites) {
                        const auto found = other.stats.levels.find(name);
                        if (found != other.stats.levels.end()) {
                            merged.insert(found->second.begin(), found->second.end());
                        }
                    }
                    it->second.second = static_cast<int>(merged.size());
                }
            }
        }
        config.specs = build_auto_specs(schema, *config.auto_specs);
    }

    // --- global feature metadata --------------------------------------------
    FeatureMetadata meta;
    for (const auto& s : sites) meta.site_labels.push_back(std::to_string(s.site_id));
    for (const auto& spec : config.specs) {
        for (const auto& f : spec.features) {
            bool numeric = false;
            bool categorical = false;
            for (const auto& s : sites) {
                if (s.stats.ranges.count(f)) numeric = true;
                if (s.stats.levels.count(f)) categorical = true;
            }
            if (numeric == categorical) {
                throw InputError("feature " + f + " missing or inconsistently typed across sites");
            }
            if (numeric && !meta.ranges.count(f)) {
                double lo = std::numeric_limits<double>::infinity();
                double hi = -lo;
                for (const auto& s : sites) {
                    const auto it = s.stats.ranges.find(f);
                    if (it == s.stats.ranges.end()) {
                        throw InputError("site " + std::to_string(s.site_id) +
                                         " has no range for feature " + f);
                    }
                    lo = std::min(lo, it->second.first);
                    hi = std::max(hi, it->second.second);
                }
                meta.ranges.emplace(f, std::make_pair(lo, hi));
            }
            if (categorical && !meta.levels.count(f)) {
                std::set<std::string> levels;
                for (const auto& s : sites) {
                    const auto it = s.stats.levels.find(f);
                    if (it == s.stats.levels.end()) {
                        throw InputError("site " + std::to_string(s.site_id) +
                                         " has no levels for feature " + f);
                    }
                    levels.insert(it->second.begin(), it->second.end());
                }
                meta.levels.emplace(f, std::vector<std::string>(levels.begin(), levels.end()));
            }
        }
    }

    // --- spec list broadcast --------------------------------------------------
    json session;
    session["audit"] = config.audit;
    session["jitter"] = config.ridge_jitter;
    session["learning_rate"] = config.learning_rate;
    session["loss"] = loss_name(config.loss.family);
    session["max_iters"] = config.max_iters;
    json doc;
    doc["features"] = metadata_to_json(meta);
    doc["session"] = std::move(session);
    doc["specs"] = specs_to_json(config.specs);
    {
        ProtocolMessage msg{0, SpecListMsg{doc}};
        for (auto& s : sites) s.channel->send(msg);
        rec.outbound_broadcast(msg, Phase::init, false);
    }

    // --- Gram aggregation and df calibration ---------------------------------
    const std::vector<int> gram_ids = gram_spec_ids(config.specs);
    std::map<int, Matrix> gram_sum;
    for (auto& s : sites) {
        for (int expected_id : gram_ids) {
            ProtocolMessage msg = s.channel->recv();
            const InitGramMsg gram = expect<InitGramMsg>(msg);
            if (gram.spec_id != expected_id) {
                throw ProtocolError("init gram for spec " + std::to_string(gram.spec_id) +
                                    " arrived out of order");
            }
            const bool paper = !config.specs[static_cast<std::size_t>(gram.spec_id)].site_specific;
            rec.inbound(s.site_id, msg, Phase::init, paper);
            auto [it, inserted] = gram_sum.try_emplace(
                gram.spec_id, Matrix::Zero(gram.gram.rows(), gram.gram.cols()));
            if (it->second.rows() != gram.gram.rows()) {
                throw ProtocolError("gram dimension mismatch for spec " +
                                    std::to_string(gram.spec_id));
            }
            it->second += gram.gram;
        }
    }

    CalibratedLambdasMsg lambdas;
    std::map<int, Matrix> penalties;  // full penalty per spec (site specs: inner only)
    for (const auto& spec : config.specs) {
        const PenaltyMatrix K_unit = unit_penalty(spec, meta);
        if (!spec.site_specific) {
            double lambda = 0.0;
            if (spec.df_target) {
                lambda = calibrate_lambda(gram_sum.at(spec.id), K_unit.entries, *spec.df_target,
                                          config.df_definition);
            }
            lambdas.lambda[spec.id] = lambda;
            penalties[spec.id] = lambda * K_unit.entries;
            continue;
        }
        if (!spec.df_target) {
            throw InputError("site-specific spec " + std::to_string(spec.id) +
                             " needs a df_target to calibrate lambda0");
        }
        double lambda_inner = 0.0;
        const BaseLearnerSpec* twin = shared_twin(spec, config.specs);
        const int source_id = twin ? twin->id : spec.id;
        if (twin && lambdas.lambda.count(twin->id)) lambda_inner = lambdas.lambda.at(twin->id);
        const Matrix avg = gram_sum.at(source_id) / static_cast<double>(S);
        const Matrix K_inner = lambda_inner * K_unit.entries;
        const double lambda0 = calibrate_lambda0_block(avg, K_inner, S, *spec.df_target,
                                                       config.df_definition);
        lambdas.lambda[spec.id] = lambda_inner;
        lambdas.lambda0[spec.id] = lambda0;
        out.lambda0_table[spec.id] = lambda0;
    }
    out.lambda_table = lambdas.lambda;
    {
        ProtocolMessage msg{0, lambdas};
        for (auto& s : sites) s.channel->send(msg);
        rec.outbound_broadcast(msg, Phase::init, false);
    }

    // --- loss-optimal intercept ----------------------------------------------
    std::vector<ResponseAggregate> aggregates;
    for (const auto& s : sites) aggregates.push_back({s.stats.sum_y, s.stats.n_train});
    const double intercept = init_constant(config.loss, aggregates);
    {
        ProtocolMessage msg{0, InterceptMsg{intercept}};
        for (auto& s : sites) s.channel->send(msg);
        rec.outbound_broadcast(msg, Phase::init, false);
    }

    // --- boosting loop ---------------------------------------------------------
    const std::vector<int> shared_ids = shared_spec_ids(config.specs);
    FactorCache cache;
    std::vector<SelectionRecord> log;
    struct HostLogEntry {
        int iteration;
        int spec_id;
        Vector theta;  // empty for site-specific winners
    };
    std::vector<HostLogEntry> host_log;
    EarlyStopTracker stopper;
    bool early_stopped = false;
    int iterations_run = 0;
    const bool expect_validation =
        std::any_of(sites.begin(), sites.end(),
                    [](const SiteInfo& s) { return s.stats.n_val > 0; });

    for (int m = 1; m <= config.max_iters; ++m) {
        iterations_run = m;
        // score vectors, aggregated ascending by site id
        std::map<int, Vector> score_sum;
        for (auto& s : sites) {
            for (int spec_id : shared_ids) {
                ProtocolMessage msg = s.channel->recv();
                const ScoreVectorMsg score = expect<ScoreVectorMsg>(msg);
                if (score.iteration != m || score.spec_id != spec_id) {
                    throw ProtocolError("score vector out of order at iteration " +
                                        std::to_string(m));
                }
                rec.inbound(s.site_id, msg, Phase::fitting, true);
                auto [it, inserted] =
                    score_sum.try_emplace(spec_id, Vector::Zero(score.u.size()));
                it->second += score.u;
            }
        }

        // distFit per shared spec, broadcast after the parameter guard
        std::map<int, Vector> shared_theta;
        for (int spec_id : shared_ids) {
            const Matrix& penalty = penalties.at(spec_id);
            const PenalizedFit fit = solve_penalized(gram_sum.at(spec_id), penalty,
                                                     score_sum.at(spec_id), spec_id, &cache,
                                                     config.ridge_jitter);
            guard_parameter_broadcast(static_cast<int>(fit.coefficients.size()), min_site_n,
                                      spec_id);
            SharedThetaMsg theta;
            theta.iteration = m;
            theta.spec_id = spec_id;
            theta.theta = fit.coefficients;
            ProtocolMessage msg{0, theta};
            for (auto& s : sites) s.channel->send(msg);
            rec.outbound_broadcast(msg, Phase::fitting, true);
            shared_theta[spec_id] = fit.coefficients;
        }

        // SSE aggregation, ascending site order
        std::map<int, double> sse_sum;
        double residual_ss = std::numeric_limits<double>::quiet_NaN();
        for (auto& s : sites) {
            ProtocolMessage msg = s.channel->recv();
            const SseReportMsg report = expect<SseReportMsg>(msg);
            if (report.iteration != m) {
                throw ProtocolError("SSE report out of order at iteration " + std::to_string(m));
            }
            std::size_t spec_entries = 0;
            for (const auto& [id, sse_value] : report.entries) {
                if (id < 0) {
                    residual_ss = std::isnan(residual_ss) ? sse_value : residual_ss + sse_value;
                    continue;
                }
                ++spec_entries;
                sse_sum[id] += sse_value;
            }
            if (spec_entries != config.specs.size()) {
                throw ProtocolError("SSE report from site " + std::to_string(s.site_id) +
                                    " covers " + std::to_string(spec_entries) + " of " +
                                    std::to_string(config.specs.size()) + " specs");
            }
            rec.inbound(s.site_id, msg, Phase::fitting, true);
        }

        // selection: argmin with smallest-id tie break
        int selected = -1;
        double best_sse = std::numeric_limits<double>::infinity();
        SelectionRecord sel_rec;
        sel_rec.iteration = m;
        sel_rec.residual_ss = residual_ss;
        for (const auto& spec : config.specs) {
            const double sse_value = sse_sum.at(spec.id);
            sel_rec.sse_table.emplace_back(spec.id, sse_value);
            if (sse_value < best_sse) {
                best_sse = sse_value;
                selected = spec.id;
            }
        }
        sel_rec.selected = selected;
        log.push_back(std::move(sel_rec));
        out.selection_trace.push_back(selected);

        SelectionMsg selection;
        selection.iteration = m;
        selection.selected = selected;
        const bool shared_winner = !config.specs[static_cast<std::size_t>(selected)].site_specific;
        if (shared_winner) {
            selection.theta = shared_theta.at(selected);
            host_log.push_back({m, selected, shared_theta.at(selected)});
        } else {
            host_log.push_back({m, selected, Vector()});
        }
        {
            ProtocolMessage msg{0, selection};
            for (auto& s : sites) s.channel->send(msg);
            rec.outbound_broadcast(msg, Phase::fitting, true);
        }

        // validation aggregates and the early-stopping decision
        if (expect_validation) {
            double loss_sum = 0.0;
            long n_val = 0;
            for (auto& s : sites) {
                if (s.stats.n_val < 1) continue;
                ProtocolMessage msg = s.channel->recv();
                const ValidationRiskMsg risk = expect<ValidationRiskMsg>(msg);
                if (risk.iteration != m) {
                    throw ProtocolError("validation risk out of order at iteration " +
                                        std::to_string(m));
                }
                rec.inbound(s.site_id, msg, Phase::fitting, false);
                loss_sum += risk.sum_loss;
                n_val += risk.n_val;
            }
            const double risk = loss_sum / static_cast<double>(n_val);
            out.validation_trace.push_back({m, risk});
            if (stopper.update(m, risk, config.patience)) {
                early_stopped = true;
                break;
            }
        }
    }

    // drain score vectors sites pushed for the iteration that never ran
    if (early_stopped && iterations_run < config.max_iters) {
        for (auto& s : sites) {
            for (std::size_t k = 0; k < shared_ids.size(); ++k) {
                ProtocolMessage msg = s.channel->recv();
                expect<ScoreVectorMsg>(msg);
                rec.inbound(s.site_id, msg, Phase::fitting, true);
            }
        }
    }

    const int kept = config.patience ? stopper.best_iteration : iterations_run;
    out.best_iteration = kept;
    out.iterations_run = iterations_run;
    out.early_stopped = early_stopped;

    // --- finalize ---------------------------------------------------------------
    {
        ProtocolMessage msg{0, StopMsg{kept}};
        for (auto& s : sites) s.channel->send(msg);
        rec.outbound_broadcast(msg, Phase::final_phase, false);
    }

    AdditiveModel model;
    model.intercept = intercept;
    model.learning_rate = config.learning_rate;
    model.loss = config.loss;
    model.specs = config.specs;
    model.features = meta;
    model.selection_log.assign(log.begin(), log.begin() + kept);
    for (const auto& entry : host_log) {
        if (entry.iteration > kept || entry.theta.size() == 0) continue;
        auto [it, inserted] =
            model.contributions.try_emplace(entry.spec_id, Vector::Zero(entry.theta.size()));
        it->second += config.learning_rate * entry.theta;
    }

    json refused_report = json::object();
    for (std::size_t idx = 0; idx < sites.size(); ++idx) {
        auto& s = sites[idx];
        ProtocolMessage msg = s.channel->recv();
        const FinalSiteParamsMsg params = expect<FinalSiteParamsMsg>(msg);
        rec.inbound(s.site_id, msg, Phase::final_phase, false);
        if (!params.refused.empty()) {
            out.partial = true;
            refused_report[std::to_string(s.site_id)] = params.refused;
        }
        for (const auto& [spec_id, slice] : params.slices) {
            const BaseLearnerSpec& spec = config.specs.at(static_cast<std::size_t>(spec_id));
            if (!spec.site_specific) {
                throw ProtocolError("site uploaded parameters for shared spec " +
                                    std::to_string(spec_id));
            }
            const int d = inner_dimension(spec, meta);
            if (slice.size() != d) {
                throw ProtocolError("slice dimension mismatch for spec " +
                                    std::to_string(spec_id));
            }
            auto [it, inserted] = model.contributions.try_emplace(
                spec_id, Vector::Zero(static_cast<Eigen::Index>(S) * d));
            it->second.segment(static_cast<Eigen::Index>(idx) * d, d) = slice;
        }
    }

    json metadata;
    metadata["mode"] = "distributed";
    metadata["privacy_level"] = config.privacy_level;
    metadata["audit"] = config.audit;
    metadata["ridge_jitter"] = config.ridge_jitter;
    metadata["df_definition"] = df_definition_name(config.df_definition);
    metadata["max_iters"] = config.max_iters;
    metadata["iterations_run"] = iterations_run;
    metadata["best_iteration"] = kept;
    metadata["early_stopped"] = early_stopped;
    metadata["patience"] = config.patience ? json(*config.patience) : json(nullptr);
    metadata["partial"] = out.partial;
    if (!refused_report.empty()) metadata["refused_slices"] = refused_report;
    model.metadata = std::move(metadata);

    out.model = std::move(model);
    out.ledger = std::move(rec.ledger);
    return out;
}

}  // namespace cwb
