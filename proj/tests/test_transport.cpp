#include <doctest.h>

#include <filesystem>
#include <thread>

#include "cwb/boost_pooled.hpp"
#include "cwb/host.hpp"
#include "cwb/transport.hpp"
#include "fixtures.hpp"

using namespace cwb;

namespace {

std::vector<Dataset> two_partitions(std::uint64_t seed, int n = 160) {
    const Dataset data = fixtures::synthetic(LossFamily::gaussian_l2, n, 2, 1, 2, seed);
    auto partitions = partition_horizontal(data, 2, PartitionScheme::contiguous);
    for (auto& p : partitions) p.drop_column("site");
    return partitions;
}

RunConfig small_config() {
    RunConfig cfg;
    cfg.loss.family = LossFamily::gaussian_l2;
    cfg.max_iters = 12;
    cfg.specs = fixtures::dense_specs(2, 1);
    return cfg;
}

DistributedResult run_over_sim(const std::vector<Dataset>& partitions, const RunConfig& cfg,
                               std::vector<std::unique_ptr<SimChannel>>* keep = nullptr) {
    SiteLocalConfig site_cfg;
    site_cfg.privacy_level = cfg.privacy_level;
    auto channels = spawn_simulated_cluster(partitions, site_cfg);
    std::vector<HostChannel*> raw;
    for (auto& ch : channels) raw.push_back(ch.get());
    DistributedResult result = run_host(raw, cfg);
    if (keep) *keep = std::move(channels);
    return result;
}

}  // namespace

TEST_CASE("send and recv round-trip messages value-identically") {
    const auto partitions = two_partitions(41);
    SiteLocalConfig site_cfg;
    SimChannel channel(partitions[0], 1, site_cfg);
    const ProtocolMessage hello = channel.recv();
    const HelloMsg* body = std::get_if<HelloMsg>(&hello.body);
    REQUIRE(body != nullptr);
    CHECK(body->site_id == 1);
    CHECK(body->n_obs == static_cast<long>(partitions[0].n_rows()));
    CHECK(hello.seq == 1);
}

TEST_CASE("out-of-order frames trigger a sequence error") {
    const auto partitions = two_partitions(42);
    SiteLocalConfig site_cfg;
    SimChannel channel(partitions[0], 1, site_cfg);
    (void)channel.recv();  // Hello, seq 1
    // inject a frame re-using sequence number 1
    channel.deliver_raw_to_host(R"({"payload":{"n_obs":99,"site_id":1},"seq":1,"type":"Hello"})");
    (void)channel.recv();  // FeatureStats, seq 2 — fine
    CHECK_THROWS_AS(channel.recv(), ProtocolError);
}

TEST_CASE("repeated simulated runs are byte-identical") {
    const auto partitions = two_partitions(43);
    const RunConfig cfg = small_config();
    const DistributedResult a = run_over_sim(partitions, cfg);
    const DistributedResult b = run_over_sim(partitions, cfg);
    CHECK(model_to_json(a.model).dump() == model_to_json(b.model).dump());
    CHECK(a.ledger.to_json().dump() == b.ledger.to_json().dump());
}

TEST_CASE("transcript replay reproduces the final model byte-for-byte") {
    const auto partitions = two_partitions(44);
    const RunConfig cfg = small_config();
    std::vector<std::unique_ptr<SimChannel>> channels;
    const DistributedResult live = run_over_sim(partitions, cfg, &channels);

    std::vector<ReplayChannel> replays;
    replays.reserve(channels.size());
    for (const auto& ch : channels) replays.emplace_back(ch->transcript());
    std::vector<HostChannel*> raw;
    for (auto& r : replays) raw.push_back(&r);
    const DistributedResult replayed = run_host(raw, cfg);
    CHECK(model_to_json(replayed.model).dump() == model_to_json(live.model).dump());
}

TEST_CASE("transcript files round-trip and carry every counted value") {
    const auto partitions = two_partitions(45);
    const RunConfig cfg = small_config();
    std::vector<std::unique_ptr<SimChannel>> channels;
    const DistributedResult result = run_over_sim(partitions, cfg, &channels);

    const std::string path =
        (std::filesystem::temp_directory_path() / "cwb_transcript_test.jsonl").string();
    write_transcript(channels[0]->transcript(), path);
    const ChannelTranscript back = read_transcript(path);
    REQUIRE(back.size() == channels[0]->transcript().size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].to_host == channels[0]->transcript()[i].to_host);
        CHECK(back[i].payload == channels[0]->transcript()[i].payload);
    }
    std::filesystem::remove(path);

    // ledger counters equal a recount over the transcript
    long site_values = 0;
    for (const auto& frame : channels[0]->transcript()) {
        if (!frame.to_host) continue;
        site_values += value_count(decode_payload(frame.payload));
    }
    const CounterSet& c = result.ledger.sites.at(1);
    CHECK(site_values == c.total());
}

TEST_CASE("privacy scanner passes clean sessions and flags injected leaks") {
    const auto partitions = two_partitions(46);
    const RunConfig cfg = small_config();
    std::vector<std::unique_ptr<SimChannel>> channels;
    run_over_sim(partitions, cfg, &channels);

    const FeatureMetadata meta = compute_feature_metadata(pool_partitions(partitions), cfg.specs);
    for (const auto& ch : channels) {
        const auto violations = scan_transcript(ch->transcript(), cfg.specs, meta,
                                                ch->agent().n_train());
        CHECK(violations.empty());
    }

    // a raw residual vector the length of the site sample must be flagged
    ChannelTranscript tampered = channels[0]->transcript();
    nlohmann::json leak;
    leak["payload"]["iteration"] = 1;
    leak["payload"]["spec_id"] = 0;
    nlohmann::json arr = nlohmann::json::array();
    for (long i = 0; i < channels[0]->agent().n_train(); ++i) arr.push_back(0.5);
    leak["payload"]["u"] = arr;
    leak["seq"] = 999;
    leak["type"] = "ScoreVector";
    tampered.push_back({true, leak.dump()});
    const auto violations = scan_transcript(tampered, cfg.specs, meta,
                                            channels[0]->agent().n_train());
    CHECK(!violations.empty());
}

TEST_CASE("tcp loopback run matches the simulated run byte-for-byte") {
    const auto partitions = two_partitions(47);
    const RunConfig cfg = small_config();
    const DistributedResult sim = run_over_sim(partitions, cfg);

    SiteLocalConfig site_cfg;
    site_cfg.privacy_level = cfg.privacy_level;
    SiteServer server1(partitions[0], 1, site_cfg, "127.0.0.1:0");
    SiteServer server2(partitions[1], 2, site_cfg, "127.0.0.1:0");
    std::thread t1([&] { server1.run_once(); });
    std::thread t2([&] { server2.run_once(); });

    DistributedResult tcp;
    {
        TcpChannel c1("127.0.0.1:" + std::to_string(server1.port()));
        TcpChannel c2("127.0.0.1:" + std::to_string(server2.port()));
        std::vector<HostChannel*> raw{&c1, &c2};
        tcp = run_host(raw, cfg);
    }
    t1.join();
    t2.join();

    CHECK(model_to_json(tcp.model).dump() == model_to_json(sim.model).dump());
    CHECK(tcp.ledger.to_json().dump() == sim.ledger.to_json().dump());
}
