#pragma once

#include "cwb/host.hpp"
#include "cwb/site.hpp"

#include <deque>
#include <memory>
#include <string>
#include <vector>

namespace cwb {

struct FrameRecord {
    bool to_host = false;  // direction: site -> host
    std::string payload;   // unframed canonical JSON
};

// Per-channel frame log; replayable and scannable.
using ChannelTranscript = std::vector<FrameRecord>;

struct SequenceTracker {
    std::int64_t last = 0;
    void check(std::int64_t seq) {
        if (seq <= last) {
            throw ProtocolError("sequence regression: got " + std::to_string(seq) +
                                " after " + std::to_string(last));
        }
        last = seq;
    }
};

// In-process carrier: the site agent runs synchronously inside send(). Every
// message still passes through the canonical codec so simulated and TCP runs
// transport bit-identical values.
class SimChannel : public HostChannel {
public:
    SimChannel(Dataset data, int site_id, SiteLocalConfig config);

    void send(const ProtocolMessage& msg) override;
    ProtocolMessage recv() override;

    const ChannelTranscript& transcript() const { return transcript_; }
    SiteAgent& agent() { return agent_; }

    // Test seam: route a raw site->host frame through the codec and sequence
    // validation as if the agent had sent it.
    void deliver_raw_to_host(const std::string& payload);

private:
    void enqueue_site_messages(std::vector<ProtocolMessage> msgs);

    SiteAgent agent_;
    std::deque<ProtocolMessage> inbox_;  // site -> host, already decoded
    ChannelTranscript transcript_;
    std::int64_t host_seq_ = 0;
    std::int64_t site_seq_ = 0;
    SequenceTracker inbound_tracker_;
};

// Deterministic simulated cluster: one SimChannel per partition, site ids
// ascending from 1.
std::vector<std::unique_ptr<SimChannel>> spawn_simulated_cluster(
    const std::vector<Dataset>& partitions, const SiteLocalConfig& site_config);

// TCP carrier (length-prefixed frames over a blocking socket).
class TcpChannel : public HostChannel {
public:
    explicit TcpChannel(const std::string& address);  // "host:port"
    ~TcpChannel() override;
    TcpChannel(const TcpChannel&) = delete;
    TcpChannel& operator=(const TcpChannel&) = delete;

    void send(const ProtocolMessage& msg) override;
    ProtocolMessage recv() override;
    const ChannelTranscript& transcript() const { return transcript_; }

private:
    int fd_ = -1;
    std::string buffer_;
    std::size_t offset_ = 0;
    ChannelTranscript transcript_;
    std::int64_t host_seq_ = 0;
    SequenceTracker inbound_tracker_;
};

// Site-side TCP server hosting exactly one protocol session.
class SiteServer {
public:
    SiteServer(Dataset data, int site_id, SiteLocalConfig config, const std::string& bind_address);
    ~SiteServer();
    SiteServer(const SiteServer&) = delete;
    SiteServer& operator=(const SiteServer&) = delete;

    int port() const { return port_; }
    // Accepts one host connection and runs the agent until the session ends.
    // Returns the process exit code (0 ok, 3 privacy refusal, 1 otherwise).
    int run_once();

private:
    Dataset data_;
    int site_id_;
    SiteLocalConfig config_;
    int listen_fd_ = -1;
    int port_ = 0;
};

// Replays a recorded session: recv() yields the logged site->host frames,
// send() asserts byte equality with the logged host->site frames.
class ReplayChannel : public HostChannel {
public:
    explicit ReplayChannel(const ChannelTranscript& transcript);
    void send(const ProtocolMessage& msg) override;
    ProtocolMessage recv() override;

private:
    const ChannelTranscript& transcript_;
    std::size_t cursor_ = 0;
    std::int64_t host_seq_ = 0;
};

// Structural privacy audit of site->host traffic: only whitelisted message
// types may leave a site and every numeric array must be a basis-dimension
// aggregate, never an observation-length vector.
std::vector<std::string> scan_transcript(const ChannelTranscript& transcript,
                                         const std::vector<BaseLearnerSpec>& specs,
                                         const FeatureMetadata& meta, long n_train);

void write_transcript(const ChannelTranscript& transcript, const std::string& path);
ChannelTranscript read_transcript(const std::string& path);

}  // namespace cwb
