#pragma once

#include "cwb/types.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace cwb {

// Minimum number of observations an aggregate must summarize before it may
// leave a site. Enforced at the sender.
struct PrivacyPolicy {
    int level = 5;
};

// allow/refuse check for outbound aggregates; refusal throws.
void guard_aggregate(const PrivacyPolicy& policy, long n_contributing,
                     const std::string& payload_kind, int site_id);

// Parameter vectors as wide as the smallest contributing sample permit
// reconstruction; refuse the broadcast in that case.
void guard_parameter_broadcast(int dimension, long min_site_n, int spec_id);

// ------------------------------------------------------------- message set

struct HelloMsg {
    int site_id = 0;
    long n_obs = 0;
};

// Init document: canonical spec array + global feature metadata + session
// parameters (loss, learning rate, iteration budget, jitter, audit flag).
struct SpecListMsg {
    nlohmann::json document;
};

struct FeatureStatsMsg {
    std::map<std::string, std::pair<double, double>> ranges;
    std::map<std::string, std::vector<std::string>> levels;
    double sum_y = 0.0;  // training rows only
    long n_train = 0;
    long n_val = 0;
};

struct InitGramMsg {
    int spec_id = -1;
    Matrix gram;
};

struct CalibratedLambdasMsg {
    std::map<int, double> lambda;    // spec id -> lambda (shared or inner)
    std::map<int, double> lambda0;   // site-specific spec id -> block ridge
};

struct InterceptMsg {
    double value = 0.0;
};

struct ScoreVectorMsg {
    int iteration = 0;
    int spec_id = -1;
    Vector u;
};

struct SharedThetaMsg {
    int iteration = 0;
    int spec_id = -1;
    Vector theta;
};

struct SseReportMsg {
    int iteration = 0;
    // ascending spec id; id -1 carries the residual squared norm baseline
    std::vector<std::pair<int, double>> entries;
};

struct SelectionMsg {
    int iteration = 0;
    int selected = -1;
    std::optional<Vector> theta;  // present iff the winner is a shared effect
};

struct ValidationRiskMsg {
    int iteration = 0;
    double sum_loss = 0.0;
    long n_val = 0;
};

struct StopMsg {
    int best_iteration = 0;
};

struct FinalSiteParamsMsg {
    std::map<int, Vector> slices;  // site-specific spec id -> own slice
    std::vector<int> refused;      // slices withheld by the broadcast guard
};

struct AbortMsg {
    int site_id = 0;
    std::string reason;
    std::string payload_kind;
    long n_contributing = 0;
};

using MessageBody =
    std::variant<HelloMsg, SpecListMsg, FeatureStatsMsg, InitGramMsg, CalibratedLambdasMsg,
                 InterceptMsg, ScoreVectorMsg, SharedThetaMsg, SseReportMsg, SelectionMsg,
                 ValidationRiskMsg, StopMsg, FinalSiteParamsMsg, AbortMsg>;

struct ProtocolMessage {
    std::int64_t seq = 0;  // per (sender, receiver), strictly increasing
    MessageBody body;
};

const char* message_type(const ProtocolMessage& msg);

// Number of transmitted numeric scalars in the payload. Identification
// metadata (sequence numbers, iteration counters, spec and site ids) is not
// counted, with one deliberate exception: a Selection carries its winning
// index as one counted value.
long value_count(const ProtocolMessage& msg);

// Canonical frame: 4-byte big-endian payload length, then compact UTF-8 JSON
// with sorted keys. decode(encode(m)) == m exactly.
std::string encode(const ProtocolMessage& msg);
ProtocolMessage decode_payload(const std::string& payload_json);
std::string encode_payload(const ProtocolMessage& msg);

// Frame helpers for stream carriers.
std::string frame(const std::string& payload);
// Parses one frame from `data` starting at `offset`; returns false when more
// bytes are needed. Throws ProtocolError on malformed frames.
bool unframe(const std::string& data, std::size_t& offset, std::string& payload_out);

}  // namespace cwb
