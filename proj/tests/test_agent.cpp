#include <catch2/catch.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "qcluster/agent.hpp"
#include "qcluster/remote_backend.hpp"

using namespace qcluster;
using namespace qcluster::agent;
using qcluster::ingest::TransactionRecord;
using qcluster::ingest::TransactionTable;

namespace {

TransactionRecord make_record(const std::string& hash, const std::string& from, const std::string& to,
                              const std::string& token, double value, std::int64_t ts = 0) {
    TransactionRecord rec;
    rec.block_number = 1;
    rec.transaction_hash = hash;
    rec.timestamp = ts;
    rec.from_address = from;
    rec.to_address = to;
    rec.token_name = token;
    rec.token_symbol = token.substr(0, 3);
    rec.token_value = value;
    rec.gas_price = 1.0;
    return rec;
}

std::size_t count_occurrences(const std::string& text, const std::string& needle) {
    std::size_t count = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1))
        ++count;
    return count;
}

std::size_t identifier_text_size(const TransactionTable& table) {
    std::size_t total = 0;
    for (const auto& rec : table.records)
        total += rec.transaction_hash.size() + rec.from_address.size() + rec.to_address.size();
    return total;
}

}  // namespace

TEST_CASE("reencode_identifiers is a compacting bijection", "[agent]") {
    TransactionTable table;
    for (int i = 0; i < 5; ++i)
        table.records.push_back(make_record("0xhash" + std::to_string(i),
                                            "0xaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa1",
                                            "0xbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbb" + std::to_string(i),
                                            "TokenA", 1.0 + i));

    const auto [compact, idmap] = reencode_identifiers(table);

    SECTION("a repeated address maps to a single reused token") {
        for (const auto& rec : compact.records) CHECK(rec.from_address == "ADDR-1");
    }
    SECTION("distinct hashes get distinct tokens") {
        std::set<std::string> hashes;
        for (const auto& rec : compact.records) hashes.insert(rec.transaction_hash);
        CHECK(hashes.size() == 5);
    }
    SECTION("decode restores the original table exactly") {
        CHECK(decode_identifiers(compact, idmap) == table);
    }
    SECTION("token names are left verbatim") {
        for (const auto& rec : compact.records) CHECK(rec.token_name == "TokenA");
    }
    SECTION("compact identifiers never exceed the raw text size") {
        CHECK(identifier_text_size(compact) <= identifier_text_size(table));
    }
    SECTION("forward and inverse compose to the identity") {
        for (const auto& [original, token] : idmap.forward) CHECK(idmap.inverse.at(token) == original);
        for (const auto& [token, original] : idmap.inverse) CHECK(idmap.forward.at(original) == token);
    }
}

TEST_CASE("reencode_identifiers round-trips randomized tables", "[agent]") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto table = ingest::synth_transactions(seed, 20, ingest::SynthProfile{});
        const auto [compact, idmap] = reencode_identifiers(table);
        CHECK(decode_identifiers(compact, idmap) == table);
        CHECK(identifier_text_size(compact) <= identifier_text_size(table));
    }
}

TEST_CASE("build_info_base mirrors the nested partition structure", "[agent]") {
    TransactionTable table;
    for (int i = 0; i < 4; ++i)
        table.records.push_back(make_record("h" + std::to_string(i), "a", "b", "T", 1.0));

    cluster::ClusterAssignment assignment;
    assignment.k = 2;
    assignment.labels = {0, 1, 0, 1};

    SECTION("one depth, one epoch, two clusters covering four records") {
        const auto base = build_info_base("QNN", 2, {{{1, 1}, assignment}}, table);
        REQUIRE(base.partitions.size() == 1);
        const auto& clusters = base.partitions.at(1).at(1);
        REQUIRE(clusters.size() == 2);
        CHECK(clusters[0].size() + clusters[1].size() == 4);
    }
    SECTION("an assignment with an empty cluster violates coverage") {
        cluster::ClusterAssignment degenerate;
        degenerate.k = 2;
        degenerate.labels = {0, 0, 0, 0};
        REQUIRE_THROWS_WITH(build_info_base("QNN", 2, {{{1, 1}, degenerate}}, table),
                            Catch::Contains("empty"));
    }
    SECTION("depth keys come back in ascending order") {
        const auto base =
            build_info_base("QF", 2, {{{2, 0}, assignment}, {{1, 0}, assignment}}, table);
        std::vector<int> depths;
        for (const auto& [depth, epochs] : base.partitions) depths.push_back(depth);
        CHECK(depths == std::vector<int>{1, 2});
    }
    SECTION("size mismatches are rejected") {
        cluster::ClusterAssignment short_assignment;
        short_assignment.k = 2;
        short_assignment.labels = {0, 1};
        REQUIRE_THROWS_AS(build_info_base("QNN", 2, {{{1, 1}, short_assignment}}, table),
                          std::invalid_argument);
    }
}

TEST_CASE("cluster_meaning computes deterministic stats and a mock summary", "[agent]") {
    MockBackend backend;
    TransactionTable table;
    table.records.push_back(make_record("h0", "s1", "r1", "TokenA", 100.0, 50));
    table.records.push_back(make_record("h1", "s1", "r2", "TokenA", 5.0, 10));
    table.records.push_back(make_record("h2", "s1", "r3", "TokenB", 70.0, 20));

    SECTION("singleton clusters are flagged and phrased") {
        const auto info = cluster_meaning(ClusterKey{"QNN", 2, 1, 1, 0}, {0}, table, backend);
        CHECK(info.stats.singleton);
        CHECK(info.stats.size == 1);
        CHECK(info.summary.find("singleton cluster") != std::string::npos);
    }
    SECTION("one sender across all records gives share 1.0") {
        const auto info = cluster_meaning(ClusterKey{"QNN", 2, 1, 1, 0}, {0, 1, 2}, table, backend);
        CHECK(info.stats.top_sender == "s1");
        CHECK(info.stats.top_sender_share == 1.0);
        CHECK(info.stats.dominant_sender);
        CHECK(info.summary.find("s1") != std::string::npos);
    }
    SECTION("plurality token wins") {
        const auto info = cluster_meaning(ClusterKey{"QF", 2, 1, 0, 1}, {0, 1, 2}, table, backend);
        CHECK(info.stats.dominant_token == "TokenA");
        CHECK(info.stats.value_min == 5.0);
        CHECK(info.stats.value_max == 100.0);
    }
    SECTION("representatives are capped and ordered by value then time") {
        MeaningConfig config;
        config.representative_cap = 2;
        const auto info =
            cluster_meaning(ClusterKey{"QF", 2, 1, 0, 1}, {0, 1, 2}, table, backend, config);
        REQUIRE(info.representatives.size() == 2);
        CHECK(info.representatives[0] == 0);  // value 100
        CHECK(info.representatives[1] == 2);  // value 70
    }
    SECTION("empty clusters are rejected") {
        REQUIRE_THROWS_AS(cluster_meaning(ClusterKey{}, {}, table, backend), std::invalid_argument);
    }
}

namespace {

ClusterInfo make_info(const std::string& strategy, int k, int depth, int epoch, int cluster,
                      std::size_t size, const std::string& token, double vmin, double vmax) {
    ClusterInfo info;
    info.key = ClusterKey{strategy, k, depth, epoch, cluster};
    info.stats.size = size;
    info.stats.singleton = size == 1;
    info.stats.dominant_token = token;
    info.stats.top_sender = "s";
    info.stats.top_sender_share = 0.5;
    info.stats.value_min = vmin;
    info.stats.value_max = vmax;
    return info;
}

}  // namespace

TEST_CASE("intra_epoch_compare contrasts cluster pairs in index order", "[agent]") {
    MockBackend backend;

    SECTION("k = 2 yields exactly one contrast") {
        const auto record = intra_epoch_compare({make_info("QNN", 2, 1, 1, 0, 3, "A", 0, 1),
                                                 make_info("QNN", 2, 1, 1, 1, 5, "B", 2, 3)},
                                                backend);
        CHECK(record.contrasts.size() == 1);
        CHECK(record.singleton_count == 0);
        CHECK(record.cluster_sizes == std::vector<std::size_t>{3, 5});
    }
    SECTION("k = 3 yields three contrasts") {
        const auto record = intra_epoch_compare({make_info("QNN", 3, 1, 1, 0, 3, "A", 0, 1),
                                                 make_info("QNN", 3, 1, 1, 1, 5, "B", 2, 3),
                                                 make_info("QNN", 3, 1, 1, 2, 1, "C", 4, 5)},
                                                backend);
        REQUIRE(record.contrasts.size() == 3);
        CHECK(record.contrasts[0].find("Cluster 0") != std::string::npos);
        CHECK(record.contrasts[0].find("cluster 1") != std::string::npos);
        CHECK(record.singleton_count == 1);
    }
    SECTION("identical stats flag an indistinct partition") {
        const auto record = intra_epoch_compare({make_info("QF", 2, 1, 0, 0, 4, "A", 0, 1),
                                                 make_info("QF", 2, 1, 0, 1, 4, "A", 0, 1)},
                                                backend);
        CHECK(record.rationale.find("indistinct partition") != std::string::npos);
    }
    SECTION("mismatched keys are rejected") {
        REQUIRE_THROWS_AS(intra_epoch_compare({make_info("QNN", 2, 1, 1, 0, 3, "A", 0, 1),
                                               make_info("QNN", 2, 2, 1, 1, 5, "B", 2, 3)},
                                              backend),
                          std::invalid_argument);
        REQUIRE_THROWS_AS(intra_epoch_compare({make_info("QNN", 2, 1, 1, 0, 3, "A", 0, 1)}, backend),
                          std::invalid_argument);
    }
}

TEST_CASE("inter_strategy_compare produces a structured diff", "[agent]") {
    MockBackend backend;

    const auto qnn = intra_epoch_compare({make_info("QNN", 3, 1, 4, 0, 1, "A", 0, 1),
                                          make_info("QNN", 3, 1, 4, 1, 1, "B", 2, 3),
                                          make_info("QNN", 3, 1, 4, 2, 7, "C", 4, 5)},
                                         backend);
    const auto qf = intra_epoch_compare({make_info("QF", 3, 1, 2, 0, 3, "A", 0, 1),
                                         make_info("QF", 3, 1, 2, 1, 3, "B", 2, 3),
                                         make_info("QF", 3, 1, 2, 2, 3, "D", 4, 5)},
                                        backend);

    SECTION("singleton delta counts QNN minus QF") {
        const auto diff = inter_strategy_compare(qnn, qf, backend);
        CHECK(diff.singleton_delta == 2);
        CHECK(diff.qnn_epoch == 4);
        CHECK(diff.qf_epoch == 2);
        CHECK(diff.qnn_only_tokens == std::vector<std::string>{"C"});
        CHECK(diff.qf_only_tokens == std::vector<std::string>{"D"});
    }
    SECTION("the mock narrative names each strategy exactly once") {
        const auto diff = inter_strategy_compare(qnn, qf, backend);
        CHECK(count_occurrences(diff.narrative, "QNN") == 1);
        CHECK(count_occurrences(diff.narrative, "QF") == 1);
    }
    SECTION("identical records give a structurally empty diff") {
        auto qf_same = qnn;
        qf_same.key.strategy = "QF";
        const auto diff = inter_strategy_compare(qnn, qf_same, backend);
        CHECK(diff.structurally_empty());
    }
    SECTION("coordinate mismatches are rejected") {
        auto other_k = qf;
        other_k.key.k = 4;
        REQUIRE_THROWS_AS(inter_strategy_compare(qnn, other_k, backend), std::invalid_argument);
        REQUIRE_THROWS_AS(inter_strategy_compare(qf, qnn, backend), std::invalid_argument);
    }
}

namespace {

// A knowledge base where k = 3 uniquely has zero singletons.
KnowledgeBase fixture_kb(const std::vector<int>& k_range) {
    MockBackend backend;
    KnowledgeBase kb;
    for (const int k : k_range) {
        const std::size_t qnn_singletons = k == 3 ? 0 : 1;
        std::vector<ClusterInfo> qnn_infos, qf_infos;
        for (int c = 0; c < 2; ++c) {
            qnn_infos.push_back(make_info("QNN", k, 1, 1, c,
                                          c == 0 && qnn_singletons ? 1 : 4, "A", 0, 1));
            qf_infos.push_back(make_info("QF", k, 1, 0, c, 5, "B", 0, 1));
        }
        for (const auto& info : qnn_infos) kb.cluster_infos.emplace(info.key, info);
        for (const auto& info : qf_infos) kb.cluster_infos.emplace(info.key, info);
        auto qnn_record = intra_epoch_compare(qnn_infos, backend);
        auto qf_record = intra_epoch_compare(qf_infos, backend);
        kb.epoch_comparisons.emplace(qnn_record.key, qnn_record);
        kb.epoch_comparisons.emplace(qf_record.key, qf_record);
    }
    return kb;
}

}  // namespace

TEST_CASE("global_strategy_analysis applies the argmax rule", "[agent]") {
    MockBackend backend;
    const std::vector<int> k_range{2, 3, 4};
    auto kb = fixture_kb(k_range);
    std::map<int, KMetricSummary> summaries{{2, {0.5}}, {3, {0.9}}, {4, {0.6}}};

    SECTION("per-k cardinality and the synthesized recommendation") {
        const auto knowledge = global_strategy_analysis(kb, k_range, summaries, backend);
        REQUIRE(knowledge.per_k.size() == 3);
        CHECK(knowledge.recommended_k == 3);
        CHECK(knowledge.global_synthesis.find("K=3") != std::string::npos);
    }
    SECTION("mock output is byte-identical across runs") {
        const auto a = global_strategy_analysis(kb, k_range, summaries, backend);
        const auto b = global_strategy_analysis(kb, k_range, summaries, backend);
        CHECK(a.global_synthesis == b.global_synthesis);
        for (const int k : k_range) {
            CHECK(a.per_k.at(k).qnn_characteristics == b.per_k.at(k).qnn_characteristics);
            CHECK(a.per_k.at(k).qf_characteristics == b.per_k.at(k).qf_characteristics);
            CHECK(a.per_k.at(k).recommendation == b.per_k.at(k).recommendation);
        }
    }
    SECTION("missing k is rejected") {
        REQUIRE_THROWS_WITH(global_strategy_analysis(kb, {2, 3, 4, 5}, summaries, backend),
                            Catch::Contains("5"));
    }
}

TEST_CASE("mock generate_text is a deterministic rule table", "[agent]") {
    MockBackend backend;
    const json context{{"kind", "global_synthesis"}, {"recommended_k", 3}, {"total_singletons", 0}};
    CHECK(generate_text(backend, context) == generate_text(backend, context));
    CHECK(generate_text(backend, context).find("K=3") != std::string::npos);
    REQUIRE_THROWS_AS(generate_text(backend, json{{"kind", "unknown"}}), std::invalid_argument);
}

TEST_CASE("remote backend round-trips through a local HTTP server", "[agent]") {
    httplib::Server server;
    std::string seen_auth;
    json seen_body;
    server.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        seen_body = json::parse(req.body);
        res.set_content("narrative from the wire", "text/plain");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&server] { server.listen_after_bind(); });
    server.wait_until_ready();

    setenv("QCLUSTER_TEST_TOKEN", "sekrit", 1);
    RemoteConfig config;
    config.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/generate";
    config.model = "test-model";
    config.credential_env = "QCLUSTER_TEST_TOKEN";
    config.retries = 0;
    RemoteBackend backend(config);

    const auto text = backend.generate(json{{"kind", "cluster_meaning"}, {"payload", 7}});
    CHECK(text == "narrative from the wire");
    CHECK(seen_auth == "Bearer sekrit");
    CHECK(seen_body.at("model") == "test-model");
    CHECK(seen_body.at("context").at("payload") == 7);

    server.stop();
    server_thread.join();
}

TEST_CASE("remote backend failure paths", "[agent]") {
    SECTION("unreachable endpoints name the endpoint after retries") {
        RemoteConfig config;
        config.endpoint = "http://127.0.0.1:1/generate";  // nothing listens on port 1
        config.retries = 1;
        config.timeout_seconds = 1;
        RemoteBackend backend(config);
        REQUIRE_THROWS_WITH(backend.generate(json{{"kind", "x"}}),
                            Catch::Contains("http://127.0.0.1:1/generate"));
    }
    SECTION("a configured but unset credential variable is an error") {
        unsetenv("QCLUSTER_MISSING_TOKEN");
        RemoteConfig config;
        config.endpoint = "http://127.0.0.1:9/x";
        config.credential_env = "QCLUSTER_MISSING_TOKEN";
        REQUIRE_THROWS_WITH(RemoteBackend(config), Catch::Contains("QCLUSTER_MISSING_TOKEN"));
    }
    SECTION("https and malformed endpoints are rejected up front") {
        RemoteConfig https;
        https.endpoint = "https://example.com/x";
        REQUIRE_THROWS_AS(RemoteBackend(https), std::invalid_argument);
        RemoteConfig bare;
        bare.endpoint = "example.com/x";
        REQUIRE_THROWS_AS(RemoteBackend(bare), std::invalid_argument);
    }
}

TEST_CASE("knowledge base validation catches broken references", "[agent]") {
    const std::vector<int> k_range{2};
    auto kb = fixture_kb(k_range);
    MockBackend backend;
    std::map<int, KMetricSummary> summaries{{2, {0.5}}};
    kb.strategy = global_strategy_analysis(kb, k_range, summaries, backend);

    SECTION("the fixture passes") { CHECK_NOTHROW(validate_knowledge_base(kb, k_range)); }
    SECTION("a missing cluster info is caught") {
        kb.cluster_infos.erase(ClusterKey{"QNN", 2, 1, 1, 0});
        REQUIRE_THROWS_WITH(validate_knowledge_base(kb, k_range), Catch::Contains("missing cluster info"));
    }
    SECTION("a missing strategy record is caught") {
        kb.strategy.per_k.erase(2);
        REQUIRE_THROWS_WITH(validate_knowledge_base(kb, k_range), Catch::Contains("strategy record"));
    }
}

TEST_CASE("write_knowledge_base lays out the documented tree", "[agent]") {
    const std::vector<int> k_range{2};
    auto kb = fixture_kb(k_range);
    MockBackend backend;
    std::map<int, KMetricSummary> summaries{{2, {0.5}}};
    kb.strategy = global_strategy_analysis(kb, k_range, summaries, backend);
    kb.idmap.forward.emplace("0xabc", "TX-1");
    kb.idmap.inverse.emplace("TX-1", "0xabc");

    TransactionTable table;
    for (int i = 0; i < 8; ++i)
        table.records.push_back(make_record("h" + std::to_string(i), "s", "r", "A", 1.0));

    const auto dir = std::filesystem::temp_directory_path() / "qcluster_kb_test";
    std::filesystem::remove_all(dir);
    const auto written = write_knowledge_base(dir, kb, table);

    CHECK(std::filesystem::exists(dir / "idmap.json"));
    CHECK(std::filesystem::exists(dir / "cluster_info" / "qnn" / "2" / "1" / "1" / "0.json"));
    CHECK(std::filesystem::exists(dir / "cluster_info" / "qf" / "2" / "1" / "0" / "1.json"));
    CHECK(std::filesystem::exists(dir / "epoch_comparison" / "qnn" / "2" / "1" / "1.json"));
    CHECK(std::filesystem::exists(dir / "strategy" / "2.json"));
    CHECK(std::filesystem::exists(dir / "strategy" / "global.json"));
    CHECK(written.size() == 1 + 4 + 2 + 2);  // idmap + infos + comparisons + strategy docs

    std::ifstream in(dir / "idmap.json");
    json idmap;
    in >> idmap;
    CHECK(idmap.at("forward").at("0xabc") == "TX-1");
    std::filesystem::remove_all(dir);
}
