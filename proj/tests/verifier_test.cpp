#include "mangle/verifier.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace mangle;
using namespace mangle::testing;

namespace {

// 0 -> 1 -> {2, 3}, 2 -> 4, 3 -> 1, 4 halts
Cfg loop_cfg() { return make_cfg({{1}, {2, 3}, {4}, {1}, {}}); }

} // namespace

TEST(oracle, agrees_with_closure_on_small_cases)
{
    const Cfg cfg = loop_cfg();
    const std::vector<std::pair<BlockId, BlockSet>> cases{
        {0, {0, 4}}, {0, {2}}, {1, {1}}, {3, {0, 3}}, {4, {4}}, {0, {}},
    };
    for (const auto& [b, set] : cases)
        EXPECT_EQ(oracle_first_inset_reachable(b, set, cfg), closure_oracle(b, set, cfg));

    EXPECT_EQ(oracle_first_inset_reachable(0, {0, 4}, cfg), (BlockSet{4}));
    EXPECT_EQ(oracle_first_inset_reachable(1, {1}, cfg), (BlockSet{1}));
    EXPECT_EQ(oracle_first_inset_reachable(3, {0, 3}, cfg), (BlockSet{3}));
}

TEST(oracle, extreme_sets)
{
    SplitMix64 rng(9);
    for (int i = 0; i < 100; ++i) {
        const Cfg cfg = random_cfg(rng);
        BlockSet all;
        for (BlockId b = 0; b < cfg.size(); ++b)
            all.insert(b);
        for (BlockId b = 0; b < cfg.size(); ++b) {
            const auto succ = successors(cfg, b);
            EXPECT_EQ(oracle_first_inset_reachable(b, all, cfg), BlockSet(succ.begin(), succ.end()));
            EXPECT_TRUE(oracle_first_inset_reachable(b, {}, cfg).empty());
            EXPECT_EQ(get_immediate_successors(b, all, cfg), BlockSet(succ.begin(), succ.end()));
        }
    }
}

TEST(random_cfg, produces_valid_graphs_in_range)
{
    SplitMix64 rng(1);
    RandomCfgOptions opts{3, 7, 0.5};
    for (int i = 0; i < 300; ++i) {
        const Cfg cfg = random_cfg(rng, opts);
        EXPECT_TRUE(validate(cfg).ok());
        EXPECT_GE(cfg.size(), 3u);
        EXPECT_LE(cfg.size(), 7u);
    }
    const BlockSet s = random_subset(rng, 5);
    for (BlockId b : s)
        EXPECT_LT(b, 5u);
}

TEST(check_successor_oracle, small_sweep_is_clean)
{
    const auto r = check_successor_oracle(50, 8, 3, 10);
    EXPECT_EQ(r.successor_mismatches, 0u);
    EXPECT_GT(r.successor_comparisons, 50u);
    EXPECT_TRUE(r.ok());

    const auto single = check_successor_oracle(20, 1, 4, 5);
    EXPECT_EQ(single.successor_mismatches, 0u);
}

TEST(check_successor_oracle, chains)
{
    const auto r = check_successor_chains(10);
    EXPECT_EQ(r.successor_mismatches, 0u);
    EXPECT_GT(r.successor_comparisons, 0u);
}

TEST(check_successor_oracle, closure_oracle_cross_check)
{
    SplitMix64 rng(77);
    for (int i = 0; i < 200; ++i) {
        const Cfg cfg = random_cfg(rng);
        for (BlockId b = 0; b < cfg.size(); ++b) {
            const BlockSet set = random_subset(rng, cfg.size());
            ASSERT_EQ(get_immediate_successors(b, set, cfg), closure_oracle(b, set, cfg));
            ASSERT_EQ(oracle_first_inset_reachable(b, set, cfg), closure_oracle(b, set, cfg));
        }
    }
}

TEST(wait_set_soundness, corpus_and_random)
{
    for (const auto& name : corpus_names())
        for (ThreadIndex m = 1; m <= 4; ++m)
            EXPECT_EQ(check_wait_set_soundness(obfuscate(load_corpus(name), m, m), 40), 0u) << name;

    SplitMix64 rng(5);
    for (int i = 0; i < 100; ++i) {
        const Cfg cfg = random_cfg(rng, {1, 8, 0.5});
        const auto m = static_cast<ThreadIndex>(1 + rng.below(4));
        EXPECT_EQ(check_wait_set_soundness(obfuscate(cfg, m, rng.next()), 12), 0u);
    }
}

TEST(check_equivalence, corpus_small_sweep)
{
    VerifyConfig config;
    config.partition_seeds = 3;
    config.schedule_seeds = 2;
    for (const auto& name : corpus_names()) {
        const auto r = check_equivalence(load_corpus(name), config);
        EXPECT_TRUE(r.ok()) << name;
        EXPECT_EQ(r.total, 4u * 3u * 3u);
        EXPECT_EQ(r.mutex_violations, 0u);
        EXPECT_EQ(r.bijection_violations, 0u);
        EXPECT_EQ(r.deadlocks, 0u);
        EXPECT_EQ(r.divergences, 0u);
        EXPECT_EQ(r.cases.size(), r.total);
    }
}

TEST(check_equivalence, injected_mutation_is_caught)
{
    VerifyConfig config;
    config.m_values = {2};
    config.partition_seeds = 2;
    config.schedule_seeds = 1;
    config.step_budget = 50'000;
    config.mutation = ProtocolMutation::SkipRaise;
    const auto r = check_equivalence(load_corpus("fibonacci.cfg"), config);
    EXPECT_FALSE(r.ok());
    EXPECT_GT(r.deadlocks, 0u);
    EXPECT_FALSE(r.cases.front().divergence.empty());
}

TEST(check_mutations, every_mutation_detected)
{
    std::vector<Cfg> corpus;
    for (const auto& name : corpus_names())
        corpus.push_back(load_corpus(name));
    VerifyConfig config;
    config.partition_seeds = 2;
    config.schedule_seeds = 1;
    const auto results = check_mutations(corpus, config);
    ASSERT_EQ(results.size(), 3u);
    for (const auto& r : results) {
        EXPECT_TRUE(r.detected) << to_string(r.mutation);
        EXPECT_FALSE(r.witness.empty());
    }
}

TEST(check_equivalence, deterministic)
{
    VerifyConfig config;
    config.partition_seeds = 2;
    config.schedule_seeds = 2;
    const Cfg cfg = load_corpus("even.cfg");
    const auto a = check_equivalence(cfg, config);
    const auto b = check_equivalence(cfg, config);
    EXPECT_EQ(a.micro_steps, b.micro_steps);
    EXPECT_EQ(a.total, b.total);
}

TEST(verify_report, merge_adds_counters)
{
    VerifyReport a, b;
    a.total = 2;
    a.failed = 1;
    b.total = 3;
    b.successor_mismatches = 4;
    b.cases.push_back({});
    a.merge(b);
    EXPECT_EQ(a.total, 5u);
    EXPECT_EQ(a.failed, 1u);
    EXPECT_EQ(a.successor_mismatches, 4u);
    EXPECT_EQ(a.cases.size(), 1u);
    EXPECT_FALSE(a.ok());
}
