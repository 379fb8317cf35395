#include "mangle/serialize.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

using namespace mangle;
using namespace mangle::testing;
using nlohmann::json;

TEST(serialize_program, round_trip_preserves_structure)
{
    for (const auto& name : corpus_names()) {
        const Cfg cfg = load_corpus(name);
        for (ThreadIndex m = 1; m <= 4; ++m) {
            const auto prog = obfuscate(cfg, m, 100 + m, 32);
            const std::string text = serialize_program(prog);
            const auto back = deserialize_program(text, cfg);
            EXPECT_EQ(back.partition.assign, prog.partition.assign);
            EXPECT_EQ(back.partition.seed, prog.partition.seed);
            EXPECT_EQ(back.guard_layout.stride, 32u);
            ASSERT_EQ(back.threads.size(), prog.threads.size());
            for (std::size_t t = 0; t < prog.threads.size(); ++t) {
                EXPECT_EQ(back.threads[t].per_block_wait, prog.threads[t].per_block_wait);
                EXPECT_EQ(back.threads[t].entry_wait, prog.threads[t].entry_wait);
            }
            EXPECT_EQ(serialize_program(back), text);
        }
    }
}

TEST(serialize_program, document_fields)
{
    const Cfg cfg = load_corpus("prime.cfg");
    const json j = json::parse(serialize_program(obfuscate(cfg, 4, 42)));
    EXPECT_EQ(j.at("version"), kFormatVersion);
    EXPECT_EQ(j.at("n"), 16);
    EXPECT_EQ(j.at("m"), 4);
    EXPECT_EQ(j.at("seed"), 42);
    EXPECT_EQ(j.at("prng"), "splitmix64");
    EXPECT_EQ(j.at("assign").size(), 16u);
    EXPECT_EQ(j.at("threads").size(), 4u);
}

TEST(serialize_program, rejects_tampering_and_mismatch)
{
    const Cfg cfg = load_corpus("fibonacci.cfg");
    const auto prog = obfuscate(cfg, 3, 7);
    const json good = json::parse(serialize_program(prog));

    json bad_wait = good;
    auto& pbw = bad_wait["threads"][prog.partition.assign[0]]["per_block_wait"];
    ASSERT_FALSE(pbw.empty());
    pbw[0]["wait"].push_back(cfg.size() - 1);
    pbw[0]["wait"].push_back(0);
    EXPECT_THROW(deserialize_program(bad_wait.dump(), cfg), FormatError);

    json bad_assign = good;
    bad_assign["assign"][0] = 9;
    EXPECT_THROW(deserialize_program(bad_assign.dump(), cfg), FormatError);

    json bad_version = good;
    bad_version["version"] = 2;
    EXPECT_THROW(deserialize_program(bad_version.dump(), cfg), FormatError);

    json bad_prng = good;
    bad_prng["prng"] = "mt19937";
    EXPECT_THROW(deserialize_program(bad_prng.dump(), cfg), FormatError);

    EXPECT_THROW(deserialize_program(good.dump(), load_corpus("prime.cfg")), FormatError);
    EXPECT_THROW(deserialize_program("{not json", cfg), FormatError);
    EXPECT_THROW(deserialize_program("{}", cfg), FormatError);
}

TEST(serialize_trace, round_trip)
{
    const Cfg cfg = load_corpus("fibonacci.cfg");
    const auto seq = run_sequential(cfg, {});
    const auto seq_back = deserialize_trace(serialize_trace(seq));
    EXPECT_EQ(seq_back.records, seq.records);
    EXPECT_EQ(seq_back.output, seq.output);
    EXPECT_EQ(seq_back.status, seq.status);

    const auto obf = run_obfuscated(obfuscate(cfg, 2, 1), {}, Schedule::random(4), false);
    const auto obf_back = deserialize_trace(serialize_trace(obf));
    EXPECT_EQ(obf_back.records, obf.records);

    ExecutionTrace dead;
    dead.status = TraceStatus::Deadlock;
    dead.reason = "stuck";
    const auto dead_back = deserialize_trace(serialize_trace(dead));
    EXPECT_EQ(dead_back.status, TraceStatus::Deadlock);
    EXPECT_EQ(dead_back.reason, "stuck");

    json j = json::parse(serialize_trace(seq));
    j["status"] = "exploded";
    EXPECT_THROW(deserialize_trace(j.dump()), FormatError);
}

TEST(serialize_report, carries_counters)
{
    VerifyReport r;
    r.total = 12;
    r.failed = 1;
    r.deadlocks = 1;
    r.cases.push_back({"even", 2, 3, "rr", false, "block 4 differs"});
    const json j = json::parse(serialize_report(r, {{ProtocolMutation::SkipRaise, true, "w"}}));
    EXPECT_EQ(j.at("version"), kFormatVersion);
    EXPECT_EQ(j.dump().find("block 4 differs") != std::string::npos, true);
    EXPECT_NE(j.dump().find("skip-raise"), std::string::npos);

    BenchmarkReport b;
    b.seq_seconds = {1, 2};
    b.slowdown = 20;
    const json jb = json::parse(serialize_benchmark(b));
    EXPECT_EQ(jb.at("expected_slowdown_band"), "10x-100x");
}
