#pragma once

#include "cwb/basis.hpp"
#include "cwb/dataio.hpp"
#include "cwb/loss.hpp"
#include "cwb/protocol.hpp"

#include <map>
#include <optional>
#include <vector>

namespace cwb {

// Everything a site agent knows independently of the host. Aggregates are
// guarded with the site's own policy, so a misbehaving host cannot lower it.
struct SiteLocalConfig {
    int privacy_level = 5;
    double val_fraction = 0.0;    // 0 -> no validation split
    std::uint64_t val_seed = 1;   // effective seed is val_seed + site_id
    bool stratify = true;
};

// Ids of the specs whose inner Gram a site uploads at initialization: every
// shared spec plus site-specific specs without a shared twin.
std::vector<int> gram_spec_ids(const std::vector<BaseLearnerSpec>& specs);
std::vector<int> shared_spec_ids(const std::vector<BaseLearnerSpec>& specs);

// Site-side state machine. Purely reactive: the carrier feeds inbound
// messages and forwards the returned messages to the host. Sequence numbers
// are stamped by the carrier.
class SiteAgent {
public:
    SiteAgent(Dataset local, int site_id, SiteLocalConfig config);

    std::vector<ProtocolMessage> on_connect();
    std::vector<ProtocolMessage> on_message(const ProtocolMessage& msg);
    bool finished() const { return phase_ == Phase::done; }

    // Introspection for tests and invariants.
    int site_id() const { return site_id_; }
    const Vector& residuals() const { return residuals_; }
    Vector from_scratch_residuals() const;
    Vector score_vector(int spec_id) const;
    std::pair<Vector, double> fit_site_specific(int spec_id) const;
    long local_factorizations() const { return factorizations_; }
    long n_train() const { return static_cast<long>(train_.n_rows()); }

private:
    enum class Phase { fresh, awaiting_specs, awaiting_lambdas, awaiting_intercept, fitting,
                       awaiting_selection, done };

    struct LearnerInfo {
        BaseLearnerSpec spec;
        Matrix Z_train;       // inner basis over training rows
        Matrix Z_val;         // inner basis over validation rows
        Matrix gram;          // inner Gram F_{l,s}
        Matrix penalty_inner; // calibrated lambda * K_unit (site specs)
        Matrix penalty;       // shared specs: lambda * K_unit
        std::optional<Eigen::LLT<Matrix>> site_factor;  // (F + lambda0 I + K)
    };

    void build_designs();
    void begin_iteration(int m, std::vector<ProtocolMessage>& out);
    void emit_sse_report(std::vector<ProtocolMessage>& out);
    void apply_selection(const SelectionMsg& sel, std::vector<ProtocolMessage>& out);
    ProtocolMessage finalize(int best_iteration);
    const LearnerInfo& learner(int spec_id) const;
    LearnerInfo& learner(int spec_id);

    int site_id_ = 0;
    SiteLocalConfig config_;
    Dataset train_;
    Dataset validation_;
    Vector y_train_;
    Vector y_val_;

    // session parameters from the init document
    LossSpec loss_;
    double nu_ = 0.1;
    int max_iters_ = 0;
    double jitter_ = 0.0;
    bool audit_ = false;

    std::vector<BaseLearnerSpec> specs_;
    FeatureMetadata meta_;
    std::vector<LearnerInfo> learners_;
    std::vector<int> shared_ids_;
    long factorizations_ = 0;

    double intercept_ = 0.0;
    Vector f_train_;
    Vector f_val_;
    Vector residuals_;

    int iteration_ = 0;
    std::map<int, Vector> shared_theta_;   // current iteration
    std::map<int, Vector> site_fits_;      // current iteration, own slices
    std::map<int, Vector> shared_mirror_;  // accumulated shared contributions
    std::map<int, Vector> own_slices_;     // accumulated site-specific slices

    struct UpdateLogEntry {
        int iteration;
        int spec_id;
        bool site_specific;
        Vector delta;
    };
    std::vector<UpdateLogEntry> update_log_;

    Phase phase_ = Phase::fresh;
};

}  // namespace cwb
