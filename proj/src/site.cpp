#include "cwb/site.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace cwb {

std::vector<int> shared_spec_ids(const std::vector<BaseLearnerSpec>& specs) {
    std::vector<int> ids;
    for (const auto& s : specs) {
        if (!s.site_specific) ids.push_back(s.id);
    }
    return ids;
}

std::vector<int> gram_spec_ids(const std::vector<BaseLearnerSpec>& specs) {
    std::vector<int> ids;
    for (const auto& s : specs) {
        if (!s.site_specific || shared_twin(s, specs) == nullptr) ids.push_back(s.id);
    }
    return ids;
}

SiteAgent::SiteAgent(Dataset local, int site_id, SiteLocalConfig config)
    : site_id_(site_id), config_(std::move(config)) {
    if (local.n_rows() == 0) throw InputError("site " + std::to_string(site_id) + ": empty data");
    if (config_.val_fraction > 0.0) {
        auto split = split_validation(local, config_.val_fraction,
                                      config_.val_seed + static_cast<std::uint64_t>(site_id),
                                      config_.stratify);
        train_ = std::move(split.train);
        validation_ = std::move(split.validation);
    } else {
        train_ = std::move(local);
    }
    y_train_ = train_.response_vector();
    if (validation_.n_rows() > 0) y_val_ = validation_.response_vector();
}

std::vector<ProtocolMessage> SiteAgent::on_connect() {
    if (phase_ != Phase::fresh) throw ProtocolError("site connected twice");
    std::vector<ProtocolMessage> out;
    HelloMsg hello;
    hello.site_id = site_id_;
    hello.n_obs = static_cast<long>(train_.n_rows() + validation_.n_rows());
    out.push_back({0, hello});

    // Stats cover every non-response column over all local rows; the response
    // contributes only its training sum and the counts.
    PrivacyPolicy policy{config_.privacy_level};
    guard_aggregate(policy, static_cast<long>(train_.n_rows()), "FeatureStats", site_id_);
    if (validation_.n_rows() > 0) {
        guard_aggregate(policy, static_cast<long>(validation_.n_rows()), "FeatureStats",
                        site_id_);
    }

    FeatureStatsMsg stats;
    stats.n_train = static_cast<long>(train_.n_rows());
    stats.n_val = static_cast<long>(validation_.n_rows());
    stats.sum_y = y_train_.sum();
    for (const auto& col : train_.columns) {
        if (col.name == train_.response) continue;
        const Column* val_col = validation_.n_rows() > 0 ? validation_.find(col.name) : nullptr;
        if (col.type == ColumnType::numeric) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            auto fold = [&](const Column& c) {
                for (std::size_t r = 0; r < c.num.size(); ++r) {
                    if (c.missing[r]) continue;
                    lo = std::min(lo, c.num[r]);
                    hi = std::max(hi, c.num[r]);
                }
            };
            fold(col);
            if (val_col) fold(*val_col);
            if (lo <= hi) stats.ranges.emplace(col.name, std::make_pair(lo, hi));
        } else {
            std::set<std::string> distinct;
            auto fold = [&](const Column& c) {
                for (std::size_t r = 0; r < c.cat.size(); ++r) {
                    if (!c.missing[r]) distinct.insert(c.cat[r]);
                }
            };
            fold(col);
            if (val_col) fold(*val_col);
            stats.levels.emplace(col.name,
                                 std::vector<std::string>(distinct.begin(), distinct.end()));
        }
    }
    out.push_back({0, stats});
    phase_ = Phase::awaiting_specs;
    return out;
}

void SiteAgent::build_designs() {
    learners_.clear();
    learners_.reserve(specs_.size());
    for (const auto& spec : specs_) {
        LearnerInfo info;
        info.spec = spec;
        info.Z_train = build_inner_design(spec, train_, meta_);
        if (validation_.n_rows() > 0) info.Z_val = build_inner_design(spec, validation_, meta_);
        info.gram = info.Z_train.transpose() * info.Z_train;
        learners_.push_back(std::move(info));
    }
    shared_ids_ = shared_spec_ids(specs_);
}

const SiteAgent::LearnerInfo& SiteAgent::learner(int spec_id) const {
    for (const auto& l : learners_) {
        if (l.spec.id == spec_id) return l;
    }
    throw ProtocolError("unknown spec id " + std::to_string(spec_id));
}

SiteAgent::LearnerInfo& SiteAgent::learner(int spec_id) {
    return const_cast<LearnerInfo&>(static_cast<const SiteAgent*>(this)->learner(spec_id));
}

Vector SiteAgent::score_vector(int spec_id) const {
    return learner(spec_id).Z_train.transpose() * residuals_;
}

std::pair<Vector, double> SiteAgent::fit_site_specific(int spec_id) const {
    const LearnerInfo& info = learner(spec_id);
    if (!info.site_factor) {
        throw ProtocolError("site factorization for spec " + std::to_string(spec_id) +
                            " not available");
    }
    const Vector u = info.Z_train.transpose() * residuals_;
    Vector theta = info.site_factor->solve(u);
    const double sse = (residuals_ - info.Z_train * theta).squaredNorm();
    return {std::move(theta), sse};
}

Vector SiteAgent::from_scratch_residuals() const {
    Vector f = Vector::Constant(y_train_.size(), intercept_);
    for (const auto& [id, theta] : shared_mirror_) f += learner(id).Z_train * theta;
    for (const auto& [id, theta] : own_slices_) f += learner(id).Z_train * theta;
    return pseudo_residuals(loss_, y_train_, f);
}

void SiteAgent::begin_iteration(int m, std::vector<ProtocolMessage>& out) {
    iteration_ = m;
    shared_theta_.clear();
    site_fits_.clear();
    PrivacyPolicy policy{config_.privacy_level};
    for (int id : shared_ids_) {
        guard_aggregate(policy, n_train(), "ScoreVector", site_id_);
        ScoreVectorMsg msg;
        msg.iteration = m;
        msg.spec_id = id;
        msg.u = score_vector(id);
        out.push_back({0, msg});
    }
    phase_ = Phase::fitting;
    if (shared_ids_.empty()) emit_sse_report(out);
}

void SiteAgent::emit_sse_report(std::vector<ProtocolMessage>& out) {
    PrivacyPolicy policy{config_.privacy_level};
    guard_aggregate(policy, n_train(), "SseReport", site_id_);
    SseReportMsg report;
    report.iteration = iteration_;
    if (!audit_) {
        report.entries.emplace_back(-1, residuals_.squaredNorm());
    }
    for (const auto& info : learners_) {
        if (info.spec.site_specific) {
            auto [theta, sse] = fit_site_specific(info.spec.id);
            report.entries.emplace_back(info.spec.id, sse);
            site_fits_[info.spec.id] = std::move(theta);
        } else {
            const auto it = shared_theta_.find(info.spec.id);
            if (it == shared_theta_.end()) {
                throw ProtocolError("missing shared theta for spec " +
                                    std::to_string(info.spec.id));
            }
            report.entries.emplace_back(info.spec.id,
                                        (residuals_ - info.Z_train * it->second).squaredNorm());
        }
    }
    out.push_back({0, report});
    phase_ = Phase::awaiting_selection;
}

void SiteAgent::apply_selection(const SelectionMsg& sel, std::vector<ProtocolMessage>& out) {
    if (sel.iteration != iteration_) {
        throw ProtocolError("selection for iteration " + std::to_string(sel.iteration) +
                            " arrived during iteration " + std::to_string(iteration_));
    }
    const LearnerInfo& info = learner(sel.selected);
    Vector delta;
    if (info.spec.site_specific) {
        const auto it = site_fits_.find(sel.selected);
        if (it == site_fits_.end()) throw ProtocolError("no local fit for the selected spec");
        delta = it->second;
        auto [slot, inserted] = own_slices_.try_emplace(sel.selected, Vector::Zero(delta.size()));
        slot->second += nu_ * delta;
    } else {
        if (!sel.theta) throw ProtocolError("shared selection without parameters");
        delta = *sel.theta;
        auto [slot, inserted] =
            shared_mirror_.try_emplace(sel.selected, Vector::Zero(delta.size()));
        slot->second += nu_ * delta;
    }
    update_log_.push_back({iteration_, sel.selected, info.spec.site_specific, delta});

    f_train_ += nu_ * (info.Z_train * delta);
    if (validation_.n_rows() > 0) f_val_ += nu_ * (info.Z_val * delta);
    residuals_ = pseudo_residuals(loss_, y_train_, f_train_);

    if (validation_.n_rows() > 0) {
        PrivacyPolicy policy{config_.privacy_level};
        guard_aggregate(policy, static_cast<long>(validation_.n_rows()), "ValidationRisk",
                        site_id_);
        ValidationRiskMsg risk;
        risk.iteration = iteration_;
        risk.sum_loss = sum_loss(loss_, y_val_, f_val_);
        risk.n_val = static_cast<long>(validation_.n_rows());
        out.push_back({0, risk});
    }

    if (iteration_ < max_iters_) {
        begin_iteration(iteration_ + 1, out);
    } else {
        phase_ = Phase::awaiting_selection;  // only StopAndFinalize may follow
    }
}

ProtocolMessage SiteAgent::finalize(int best_iteration) {
    FinalSiteParamsMsg params;
    // Replay the update log prefix; only site-specific deltas are local state.
    std::map<int, Vector> truncated;
    for (const auto& entry : update_log_) {
        if (entry.iteration > best_iteration || !entry.site_specific) continue;
        auto [slot, inserted] =
            truncated.try_emplace(entry.spec_id, Vector::Zero(entry.delta.size()));
        slot->second += nu_ * entry.delta;
    }
    for (auto& [id, slice] : truncated) {
        if (slice.cwiseAbs().maxCoeff() == 0.0) continue;  // never effectively selected
        try {
            guard_parameter_broadcast(static_cast<int>(slice.size()), n_train(), id);
        } catch (const PrivacyRefusal&) {
            params.refused.push_back(id);
            continue;
        }
        params.slices[id] = slice;
    }
    phase_ = Phase::done;
    return {0, params};
}

std::vector<ProtocolMessage> SiteAgent::on_message(const ProtocolMessage& msg) {
    std::vector<ProtocolMessage> out;
    if (const auto* spec_list = std::get_if<SpecListMsg>(&msg.body)) {
        if (phase_ != Phase::awaiting_specs) throw ProtocolError("unexpected SpecList");
        const nlohmann::json& doc = spec_list->document;
        specs_ = specs_from_json(doc.at("specs"));
        meta_ = metadata_from_json(doc.at("features"));
        const nlohmann::json& session = doc.at("session");
        loss_.family = parse_loss(session.at("loss").get<std::string>());
        nu_ = session.at("learning_rate").get<double>();
        max_iters_ = session.at("max_iters").get<int>();
        jitter_ = session.value("jitter", 0.0);
        audit_ = session.value("audit", false);
        validate_response(loss_, y_train_);
        if (y_val_.size() > 0) validate_response(loss_, y_val_);
        build_designs();

        PrivacyPolicy policy{config_.privacy_level};
        for (int id : gram_spec_ids(specs_)) {
            guard_aggregate(policy, n_train(), "InitGram", site_id_);
            InitGramMsg gram;
            gram.spec_id = id;
            gram.gram = learner(id).gram;
            out.push_back({0, gram});
        }
        phase_ = Phase::awaiting_lambdas;
    } else if (const auto* lambdas = std::get_if<CalibratedLambdasMsg>(&msg.body)) {
        if (phase_ != Phase::awaiting_lambdas) throw ProtocolError("unexpected CalibratedLambdas");
        for (auto& info : learners_) {
            const PenaltyMatrix K_unit = unit_penalty(info.spec, meta_);
            const auto it = lambdas->lambda.find(info.spec.id);
            const double lambda = it != lambdas->lambda.end() ? it->second : 0.0;
            if (info.spec.site_specific) {
                info.penalty_inner = lambda * K_unit.entries;
                const auto l0 = lambdas->lambda0.find(info.spec.id);
                if (l0 == lambdas->lambda0.end()) {
                    throw ProtocolError("missing lambda0 for site spec " +
                                        std::to_string(info.spec.id));
                }
                Matrix system = info.gram + info.penalty_inner;
                system.diagonal().array() += l0->second + jitter_;
                Eigen::LLT<Matrix> llt(system);
                if (llt.info() != Eigen::Success) {
                    throw SingularSystemError(info.spec.id);
                }
                info.site_factor = std::move(llt);
                ++factorizations_;
            } else {
                info.penalty = lambda * K_unit.entries;
            }
        }
        phase_ = Phase::awaiting_intercept;
    } else if (const auto* intercept = std::get_if<InterceptMsg>(&msg.body)) {
        if (phase_ != Phase::awaiting_intercept) {
            throw ProtocolError("unexpected InterceptBroadcast");
        }
        intercept_ = intercept->value;
        f_train_ = Vector::Constant(y_train_.size(), intercept_);
        if (validation_.n_rows() > 0) f_val_ = Vector::Constant(y_val_.size(), intercept_);
        residuals_ = pseudo_residuals(loss_, y_train_, f_train_);
        begin_iteration(1, out);
    } else if (const auto* theta = std::get_if<SharedThetaMsg>(&msg.body)) {
        if (phase_ != Phase::fitting || theta->iteration != iteration_) {
            throw ProtocolError("unexpected SharedTheta");
        }
        shared_theta_[theta->spec_id] = theta->theta;
        if (shared_theta_.size() == shared_ids_.size()) emit_sse_report(out);
    } else if (const auto* selection = std::get_if<SelectionMsg>(&msg.body)) {
        if (phase_ != Phase::awaiting_selection) throw ProtocolError("unexpected Selection");
        apply_selection(*selection, out);
    } else if (const auto* stop = std::get_if<StopMsg>(&msg.body)) {
        out.push_back(finalize(stop->best_iteration));
    } else if (std::get_if<AbortMsg>(&msg.body)) {
        phase_ = Phase::done;
    } else {
        throw ProtocolError(std::string("site cannot handle message type ") + message_type(msg));
    }
    return out;
}

}  // namespace cwb
