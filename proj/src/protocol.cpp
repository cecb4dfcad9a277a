#include "cwb/protocol.hpp"

#include <cmath>

namespace cwb {

using json = nlohmann::json;

void guard_aggregate(const PrivacyPolicy& policy, long n_contributing,
                     const std::string& payload_kind, int site_id) {
    if (policy.level < 1) {
        throw InputError("privacy level must be at least 1");
    }
    if (n_contributing < policy.level) {
        throw PrivacyRefusal(site_id, payload_kind, n_contributing, policy.level);
    }
}

void guard_parameter_broadcast(int dimension, long min_site_n, int spec_id) {
    if (dimension < 1 || min_site_n < 1) {
        throw InputError("guard_parameter_broadcast: non-positive arguments");
    }
    if (dimension >= min_site_n) {
        throw PrivacyRefusal(
            0,
            "parameter broadcast for spec " + std::to_string(spec_id) + " of width " +
                std::to_string(dimension) + " against smallest site sample " +
                std::to_string(min_site_n),
            min_site_n, dimension);
    }
}

// ------------------------------------------------------------ json helpers

namespace {

double checked(double v) {
    if (!std::isfinite(v)) {
        throw ProtocolError("non-finite value in outbound message payload");
    }
    return v;
}

json vector_to_json(const Vector& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(checked(v[i]));
    return arr;
}

Vector vector_from_json(const json& arr) {
    if (!arr.is_array()) throw ProtocolError("expected an array of numbers");
    Vector v(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number()) throw ProtocolError("expected an array of numbers");
        v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    }
    return v;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(checked(m(r, c)));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& rows) {
    if (!rows.is_array() || rows.empty()) throw ProtocolError("expected a matrix");
    const std::size_t cols = rows[0].size();
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (!rows[r].is_array() || rows[r].size() != cols) {
            throw ProtocolError("ragged matrix payload");
        }
        for (std::size_t c = 0; c < cols; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                rows[r][c].get<double>();
        }
    }
    return m;
}

template <typename T>
json int_map_to_json(const std::map<int, T>& m) {
    json obj = json::object();
    for (const auto& [k, v] : m) {
        if constexpr (std::is_same_v<T, double>) {
            obj[std::to_string(k)] = checked(v);
        } else {
            obj[std::to_string(k)] = vector_to_json(v);
        }
    }
    return obj;
}

struct PayloadWriter {
    json operator()(const HelloMsg& m) const {
        return json{{"n_obs", m.n_obs}, {"site_id", m.site_id}};
    }
    json operator()(const SpecListMsg& m) const { return json{{"document", m.document}}; }
    json operator()(const FeatureStatsMsg& m) const {
        json ranges = json::object();
        for (const auto& [name, r] : m.ranges) {
            ranges[name] = json::array({checked(r.first), checked(r.second)});
        }
        json levels = json::object();
        for (const auto& [name, ls] : m.levels) levels[name] = ls;
        return json{{"levels", std::move(levels)},
                    {"n_train", m.n_train},
                    {"n_val", m.n_val},
                    {"ranges", std::move(ranges)},
                    {"sum_y", checked(m.sum_y)}};
    }
    json operator()(const InitGramMsg& m) const {
        return json{{"gram", matrix_to_json(m.gram)}, {"spec_id", m.spec_id}};
    }
    json operator()(const CalibratedLambdasMsg& m) const {
        return json{{"lambda", int_map_to_json(m.lambda)},
                    {"lambda0", int_map_to_json(m.lambda0)}};
    }
    json operator()(const InterceptMsg& m) const { return json{{"value", checked(m.value)}}; }
    json operator()(const ScoreVectorMsg& m) const {
        return json{{"iteration", m.iteration}, {"spec_id", m.spec_id}, {"u", vector_to_json(m.u)}};
    }
    json operator()(const SharedThetaMsg& m) const {
        return json{{"iteration", m.iteration},
                    {"spec_id", m.spec_id},
                    {"theta", vector_to_json(m.theta)}};
    }
    json operator()(const SseReportMsg& m) const {
        json entries = json::array();
        for (const auto& [id, sse] : m.entries) entries.push_back(json::array({id, checked(sse)}));
        return json{{"entries", std::move(entries)}, {"iteration", m.iteration}};
    }
    json operator()(const SelectionMsg& m) const {
        return json{{"iteration", m.iteration},
                    {"selected", m.selected},
                    {"theta", m.theta ? vector_to_json(*m.theta) : json(nullptr)}};
    }
    json operator()(const ValidationRiskMsg& m) const {
        return json{{"iteration", m.iteration},
                    {"n_val", m.n_val},
                    {"sum_loss", checked(m.sum_loss)}};
    }
    json operator()(const StopMsg& m) const { return json{{"best_iteration", m.best_iteration}}; }
    json operator()(const FinalSiteParamsMsg& m) const {
        return json{{"refused", m.refused}, {"slices", int_map_to_json(m.slices)}};
    }
    json operator()(const AbortMsg& m) const {
        return json{{"n_contributing", m.n_contributing},
                    {"payload_kind", m.payload_kind},
                    {"reason", m.reason},
                    {"site_id", m.site_id}};
    }
};

struct TypeName {
    const char* operator()(const HelloMsg&) const { return "Hello"; }
    const char* operator()(const SpecListMsg&) const { return "SpecList"; }
    const char* operator()(const FeatureStatsMsg&) const { return "FeatureStats"; }
    const char* operator()(const InitGramMsg&) const { return "InitGram"; }
    const char* operator()(const CalibratedLambdasMsg&) const { return "CalibratedLambdas"; }
    const char* operator()(const InterceptMsg&) const { return "InterceptBroadcast"; }
    const char* operator()(const ScoreVectorMsg&) const { return "ScoreVector"; }
    const char* operator()(const SharedThetaMsg&) const { return "SharedTheta"; }
    const char* operator()(const SseReportMsg&) const { return "SseReport"; }
    const char* operator()(const SelectionMsg&) const { return "Selection"; }
    const char* operator()(const ValidationRiskMsg&) const { return "ValidationRisk"; }
    const char* operator()(const StopMsg&) const { return "StopAndFinalize"; }
    const char* operator()(const FinalSiteParamsMsg&) const { return "FinalSiteParams"; }
    const char* operator()(const AbortMsg&) const { return "Abort"; }
};

struct ValueCounter {
    long operator()(const HelloMsg&) const { return 2; }
    long operator()(const SpecListMsg& m) const {
        // data-derived numerics: the resolved global knot bounds
        long n = 0;
        if (m.document.contains("features") && m.document["features"].contains("ranges")) {
            n = 2 * static_cast<long>(m.document["features"]["ranges"].size());
        }
        return n;
    }
    long operator()(const FeatureStatsMsg& m) const {
        return 2 * static_cast<long>(m.ranges.size()) + 3;
    }
    long operator()(const InitGramMsg& m) const {
        return static_cast<long>(m.gram.rows() * m.gram.cols());
    }
    long operator()(const CalibratedLambdasMsg& m) const {
        return static_cast<long>(m.lambda.size() + m.lambda0.size());
    }
    long operator()(const InterceptMsg&) const { return 1; }
    long operator()(const ScoreVectorMsg& m) const { return static_cast<long>(m.u.size()); }
    long operator()(const SharedThetaMsg& m) const { return static_cast<long>(m.theta.size()); }
    long operator()(const SseReportMsg& m) const { return static_cast<long>(m.entries.size()); }
    long operator()(const SelectionMsg& m) const {
        return 1 + (m.theta ? static_cast<long>(m.theta->size()) : 0);
    }
    long operator()(const ValidationRiskMsg&) const { return 2; }
    long operator()(const StopMsg&) const { return 1; }
    long operator()(const FinalSiteParamsMsg& m) const {
        long n = 0;
        for (const auto& [id, slice] : m.slices) n += static_cast<long>(slice.size());
        return n;
    }
    long operator()(const AbortMsg&) const { return 0; }
};

int require_int(const json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer()) {
        throw ProtocolError(std::string("missing integer field: ") + key);
    }
    return it->get<int>();
}

long require_long(const json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer()) {
        throw ProtocolError(std::string("missing integer field: ") + key);
    }
    return it->get<long>();
}

double require_double(const json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_number()) {
        throw ProtocolError(std::string("missing numeric field: ") + key);
    }
    return it->get<double>();
}

MessageBody parse_body(const std::string& type, const json& p) {
    if (type == "Hello") {
        HelloMsg m;
        m.site_id = require_int(p, "site_id");
        m.n_obs = require_long(p, "n_obs");
        return m;
    }
    if (type == "SpecList") {
        SpecListMsg m;
        m.document = p.at("document");
        return m;
    }
    if (type == "FeatureStats") {
        FeatureStatsMsg m;
        for (const auto& [name, r] : p.at("ranges").items()) {
            m.ranges.emplace(name, std::make_pair(r.at(0).get<double>(), r.at(1).get<double>()));
        }
        for (const auto& [name, ls] : p.at("levels").items()) {
            m.levels.emplace(name, ls.get<std::vector<std::string>>());
        }
        m.sum_y = require_double(p, "sum_y");
        m.n_train = require_long(p, "n_train");
        m.n_val = require_long(p, "n_val");
        return m;
    }
    if (type == "InitGram") {
        InitGramMsg m;
        m.spec_id = require_int(p, "spec_id");
        m.gram = matrix_from_json(p.at("gram"));
        return m;
    }
    if (type == "CalibratedLambdas") {
        CalibratedLambdasMsg m;
        for (const auto& [k, v] : p.at("lambda").items()) m.lambda[std::stoi(k)] = v.get<double>();
        for (const auto& [k, v] : p.at("lambda0").items()) {
            m.lambda0[std::stoi(k)] = v.get<double>();
        }
        return m;
    }
    if (type == "InterceptBroadcast") {
        InterceptMsg m;
        m.value = require_double(p, "value");
        return m;
    }
    if (type == "ScoreVector") {
        ScoreVectorMsg m;
        m.iteration = require_int(p, "iteration");
        m.spec_id = require_int(p, "spec_id");
        m.u = vector_from_json(p.at("u"));
        return m;
    }
    if (type == "SharedTheta") {
        SharedThetaMsg m;
        m.iteration = require_int(p, "iteration");
        m.spec_id = require_int(p, "spec_id");
        m.theta = vector_from_json(p.at("theta"));
        return m;
    }
    if (type == "SseReport") {
        SseReportMsg m;
        m.iteration = require_int(p, "iteration");
        for (const auto& e : p.at("entries")) {
            m.entries.emplace_back(e.at(0).get<int>(), e.at(1).get<double>());
        }
        return m;
    }
    if (type == "Selection") {
        SelectionMsg m;
        m.iteration = require_int(p, "iteration");
        m.selected = require_int(p, "selected");
        if (!p.at("theta").is_null()) m.theta = vector_from_json(p.at("theta"));
        return m;
    }
    if (type == "ValidationRisk") {
        ValidationRiskMsg m;
        m.iteration = require_int(p, "iteration");
        m.sum_loss = require_double(p, "sum_loss");
        m.n_val = require_long(p, "n_val");
        return m;
    }
    if (type == "StopAndFinalize") {
        StopMsg m;
        m.best_iteration = require_int(p, "best_iteration");
        return m;
    }
    if (type == "FinalSiteParams") {
        FinalSiteParamsMsg m;
        for (const auto& [k, v] : p.at("slices").items()) {
            m.slices[std::stoi(k)] = vector_from_json(v);
        }
        m.refused = p.at("refused").get<std::vector<int>>();
        return m;
    }
    if (type == "Abort") {
        AbortMsg m;
        m.site_id = require_int(p, "site_id");
        m.reason = p.at("reason").get<std::string>();
        m.payload_kind = p.at("payload_kind").get<std::string>();
        m.n_contributing = require_long(p, "n_contributing");
        return m;
    }
    throw ProtocolError("unknown message type: " + type);
}

}  // namespace

const char* message_type(const ProtocolMessage& msg) {
    return std::visit(TypeName{}, msg.body);
}

long value_count(const ProtocolMessage& msg) {
    return std::visit(ValueCounter{}, msg.body);
}

std::string encode_payload(const ProtocolMessage& msg) {
    json j;
    j["payload"] = std::visit(PayloadWriter{}, msg.body);
    j["seq"] = msg.seq;
    j["type"] = message_type(msg);
    return j.dump();
}

ProtocolMessage decode_payload(const std::string& payload_json) {
    json j;
    try {
        j = json::parse(payload_json);
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed frame: ") + e.what());
    }
    try {
        ProtocolMessage msg;
        msg.seq = j.at("seq").get<std::int64_t>();
        msg.body = parse_body(j.at("type").get<std::string>(), j.at("payload"));
        return msg;
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed message: ") + e.what());
    }
}

std::string frame(const std::string& payload) {
    const std::uint32_t n = static_cast<std::uint32_t>(payload.size());
    std::string out;
    out.reserve(payload.size() + 4);
    out.push_back(static_cast<char>((n >> 24) & 0xFF));
    out.push_back(static_cast<char>((n >> 16) & 0xFF));
    out.push_back(static_cast<char>((n >> 8) & 0xFF));
    out.push_back(static_cast<char>(n & 0xFF));
    out += payload;
    return out;
}

bool unframe(const std::string& data, std::size_t& offset, std::string& payload_out) {
    if (data.size() - offset < 4) return false;
    const auto b = [&](std::size_t i) {
        return static_cast<std::uint32_t>(static_cast<unsigned char>(data[offset + i]));
    };
    const std::uint32_t n = (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
    if (n > (1u << 28)) {
        throw ProtocolError("frame length " + std::to_string(n) + " exceeds the 256 MiB cap");
    }
    if (data.size() - offset - 4 < n) return false;
    payload_out = data.substr(offset + 4, n);
    offset += 4 + n;
    return true;
}

std::string encode(const ProtocolMessage& msg) {
    return frame(encode_payload(msg));
}

}  // namespace cwb
