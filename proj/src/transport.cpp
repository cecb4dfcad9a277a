#include "cwb/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <set>
#include <fstream>
#include <thread>

namespace cwb {

// ------------------------------------------------------------- sim carrier

SimChannel::SimChannel(Dataset data, int site_id, SiteLocalConfig config)
    : agent_(std::move(data), site_id, std::move(config)) {
    enqueue_site_messages(agent_.on_connect());
}

void SimChannel::enqueue_site_messages(std::vector<ProtocolMessage> msgs) {
    for (auto& msg : msgs) {
        msg.seq = ++site_seq_;
        const std::string payload = encode_payload(msg);
        transcript_.push_back({true, payload});
        inbox_.push_back(decode_payload(payload));
    }
}

void SimChannel::send(const ProtocolMessage& msg) {
    ProtocolMessage stamped = msg;
    stamped.seq = ++host_seq_;
    const std::string payload = encode_payload(stamped);
    transcript_.push_back({false, payload});
    enqueue_site_messages(agent_.on_message(decode_payload(payload)));
}

ProtocolMessage SimChannel::recv() {
    if (inbox_.empty()) {
        throw ProtocolError("simulated site " + std::to_string(agent_.site_id()) +
                            " has no pending message");
    }
    ProtocolMessage msg = std::move(inbox_.front());
    inbox_.pop_front();
    inbound_tracker_.check(msg.seq);
    return msg;
}

void SimChannel::deliver_raw_to_host(const std::string& payload) {
    transcript_.push_back({true, payload});
    inbox_.push_back(decode_payload(payload));
}

std::vector<std::unique_ptr<SimChannel>> spawn_simulated_cluster(
    const std::vector<Dataset>& partitions, const SiteLocalConfig& site_config) {
    if (partitions.empty()) throw InputError("simulated cluster needs at least one partition");
    std::vector<std::unique_ptr<SimChannel>> channels;
    for (std::size_t s = 0; s < partitions.size(); ++s) {
        if (partitions[s].n_rows() == 0) {
            throw InputError("partition " + std::to_string(s + 1) + " is empty");
        }
        channels.push_back(std::make_unique<SimChannel>(partitions[s], static_cast<int>(s + 1),
                                                        site_config));
    }
    return channels;
}

// ------------------------------------------------------------- tcp carrier

namespace {

void write_all(int fd, const std::string& bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError(std::string("socket write failed: ") + std::strerror(errno));
        }
        sent += static_cast<std::size_t>(n);
    }
}

// Reads until one full frame is available in (buffer, offset).
std::string read_frame(int fd, std::string& buffer, std::size_t& offset) {
    std::string payload;
    while (!unframe(buffer, offset, payload)) {
        if (offset > 0 && offset == buffer.size()) {
            buffer.clear();
            offset = 0;
        }
        char chunk[16384];
        const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
        if (n == 0) throw ProtocolError("connection closed mid-session");
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError(std::string("socket read failed: ") + std::strerror(errno));
        }
        buffer.append(chunk, static_cast<std::size_t>(n));
    }
    return payload;
}

std::pair<std::string, int> split_address(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos) {
        throw InputError("address must be host:port, got " + address);
    }
    const std::string host = address.substr(0, colon);
    const int port = std::stoi(address.substr(colon + 1));
    return {host.empty() ? std::string("127.0.0.1") : host, port};
}

long env_ms(const char* name, long fallback) {
    const char* value = std::getenv(name);
    if (!value || !*value) return fallback;
    return std::strtol(value, nullptr, 10);
}

int connect_with_retry(const std::string& host, int port) {
    const long timeout_ms = env_ms("CWB_CONNECT_TIMEOUT_MS", 10000);
    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    for (;;) {
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw ProtocolError("cannot create socket");
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<std::uint16_t>(port));
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
            hostent* ent = ::gethostbyname(host.c_str());
            if (!ent || !ent->h_addr_list[0]) {
                ::close(fd);
                throw ProtocolError("cannot resolve host " + host);
            }
            std::memcpy(&addr.sin_addr, ent->h_addr_list[0], sizeof(addr.sin_addr));
        }
        if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) {
            const int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
            return fd;
        }
        ::close(fd);
        if (std::chrono::steady_clock::now() >= deadline) {
            throw ProtocolError("cannot connect to " + host + ":" + std::to_string(port));
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
}

}  // namespace

TcpChannel::TcpChannel(const std::string& address) {
    const auto [host, port] = split_address(address);
    fd_ = connect_with_retry(host, port);
}

TcpChannel::~TcpChannel() {
    if (fd_ >= 0) ::close(fd_);
}

void TcpChannel::send(const ProtocolMessage& msg) {
    ProtocolMessage stamped = msg;
    stamped.seq = ++host_seq_;
    const std::string payload = encode_payload(stamped);
    transcript_.push_back({false, payload});
    write_all(fd_, frame(payload));
}

ProtocolMessage TcpChannel::recv() {
    const std::string payload = read_frame(fd_, buffer_, offset_);
    transcript_.push_back({true, payload});
    ProtocolMessage msg = decode_payload(payload);
    inbound_tracker_.check(msg.seq);
    return msg;
}

// ------------------------------------------------------------- site server

SiteServer::SiteServer(Dataset data, int site_id, SiteLocalConfig config,
                       const std::string& bind_address)
    : data_(std::move(data)), site_id_(site_id), config_(std::move(config)) {
    const auto [host, port] = split_address(bind_address);
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw ProtocolError("cannot create listening socket");
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        throw ProtocolError("cannot bind " + bind_address + ": " + std::strerror(errno));
    }
    if (::listen(listen_fd_, 1) != 0) {
        throw ProtocolError("listen failed on " + bind_address);
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
}

SiteServer::~SiteServer() {
    if (listen_fd_ >= 0) ::close(listen_fd_);
}

int SiteServer::run_once() {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) throw ProtocolError("accept failed");
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));

    std::string buffer;
    std::size_t offset = 0;
    std::int64_t outbound_seq = 0;
    SequenceTracker inbound;
    int exit_code = 0;
    try {
        SiteAgent agent(data_, site_id_, config_);
        auto flush = [&](std::vector<ProtocolMessage> msgs) {
            for (auto& msg : msgs) {
                msg.seq = ++outbound_seq;
                write_all(fd, frame(encode_payload(msg)));
            }
        };
        flush(agent.on_connect());
        while (!agent.finished()) {
            ProtocolMessage msg = decode_payload(read_frame(fd, buffer, offset));
            inbound.check(msg.seq);
            flush(agent.on_message(msg));
        }
    } catch (const PrivacyRefusal& e) {
        AbortMsg abort;
        abort.site_id = site_id_;
        abort.reason = e.what();
        abort.payload_kind = e.payload_kind;
        abort.n_contributing = e.n_contributing;
        try {
            write_all(fd, frame(encode_payload({++outbound_seq, abort})));
        } catch (...) {
        }
        exit_code = 3;
    } catch (const std::exception&) {
        exit_code = 1;
    }
    ::close(fd);
    return exit_code;
}

// ------------------------------------------------------------------ replay

ReplayChannel::ReplayChannel(const ChannelTranscript& transcript) : transcript_(transcript) {}

void ReplayChannel::send(const ProtocolMessage& msg) {
    ProtocolMessage stamped = msg;
    stamped.seq = ++host_seq_;
    const std::string payload = encode_payload(stamped);
    while (cursor_ < transcript_.size() && transcript_[cursor_].to_host) {
        throw ProtocolError("replay divergence: host sent while site frames were pending");
    }
    if (cursor_ >= transcript_.size()) throw ProtocolError("replay ran past the transcript");
    if (transcript_[cursor_].payload != payload) {
        throw ProtocolError("replay divergence at frame " + std::to_string(cursor_));
    }
    ++cursor_;
}

ProtocolMessage ReplayChannel::recv() {
    if (cursor_ >= transcript_.size() || !transcript_[cursor_].to_host) {
        throw ProtocolError("replay expected a site frame at " + std::to_string(cursor_));
    }
    return decode_payload(transcript_[cursor_++].payload);
}

// ----------------------------------------------------------------- scanner

namespace {

void scan_json_arrays(const nlohmann::json& node, const std::set<long>& allowed,
                      long n_train, const std::string& where,
                      std::vector<std::string>& violations) {
    if (node.is_array()) {
        bool numeric = !node.empty();
        for (const auto& item : node) {
            if (!item.is_number()) {
                numeric = false;
                break;
            }
        }
        if (numeric) {
            const long len = static_cast<long>(node.size());
            if (!allowed.count(len)) {
                violations.push_back(where + ": numeric vector of length " + std::to_string(len) +
                                     " is not a basis-dimension aggregate");
            } else if (len >= n_train && len > 2) {
                violations.push_back(where + ": vector of length " + std::to_string(len) +
                                     " reaches the site sample size " + std::to_string(n_train));
            }
            return;
        }
        for (const auto& item : node) {
            scan_json_arrays(item, allowed, n_train, where, violations);
        }
        return;
    }
    if (node.is_object()) {
        for (const auto& [key, value] : node.items()) {
            scan_json_arrays(value, allowed, n_train, where + "." + key, violations);
        }
    }
}

}  // namespace

std::vector<std::string> scan_transcript(const ChannelTranscript& transcript,
                                         const std::vector<BaseLearnerSpec>& specs,
                                         const FeatureMetadata& meta, long n_train) {
    static const std::set<std::string> allowed_types{
        "Hello", "FeatureStats", "InitGram", "ScoreVector", "SseReport",
        "ValidationRisk", "FinalSiteParams", "Abort"};
    std::set<long> allowed_lengths{2};  // (index, value) pairs and range bounds
    for (const auto& spec : specs) {
        allowed_lengths.insert(static_cast<long>(inner_dimension(spec, meta)));
    }
    std::vector<std::string> violations;
    for (std::size_t i = 0; i < transcript.size(); ++i) {
        if (!transcript[i].to_host) continue;
        nlohmann::json j = nlohmann::json::parse(transcript[i].payload);
        const std::string type = j.at("type").get<std::string>();
        const std::string where = "frame " + std::to_string(i) + " (" + type + ")";
        if (!allowed_types.count(type)) {
            violations.push_back(where + ": type may not leave a site");
            continue;
        }
        scan_json_arrays(j.at("payload"), allowed_lengths, n_train, where, violations);
    }
    return violations;
}

void write_transcript(const ChannelTranscript& transcript, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    for (const auto& entry : transcript) {
        out << (entry.to_host ? "<" : ">") << entry.payload << "\n";
    }
}

ChannelTranscript read_transcript(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    ChannelTranscript transcript;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] != '<' && line[0] != '>') {
            throw InputError("malformed transcript line");
        }
        transcript.push_back({line[0] == '<', line.substr(1)});
    }
    return transcript;
}

}  // namespace cwb
