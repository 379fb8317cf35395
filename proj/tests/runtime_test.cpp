#include "mangle/runtime.hpp"
#include "mangle/verifier.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace mangle;
using namespace mangle::testing;

namespace {

std::vector<Value> prime_oracle_output()
{
    std::vector<Value> out;
    for (Value c = 0; c <= 20; ++c)
        out.push_back(is_prime_oracle(c) ? 1 : 0);
    return out;
}

const Cfg& trap_cfg()
{
    static const Cfg cfg = parse(R"(func trap {
  block a:
    x = 7
    print x
    jump b
  block b:
    y = x / z
    print y
    jump c
  block c:
    halt
})");
    return cfg;
}

} // namespace

TEST(run_sequential, single_halt)
{
    const auto trace = run_sequential(parse("func f { block a: halt }"), {});
    EXPECT_EQ(trace.status, TraceStatus::Completed);
    EXPECT_EQ(trace.block_sequence(), std::vector<BlockId>{0});
    EXPECT_TRUE(trace.output.empty());
    EXPECT_FALSE(trace.records[0].thread.has_value());
}

TEST(run_sequential, corpus_kernels_match_oracles)
{
    const auto fib = run_sequential(load_corpus("fibonacci.cfg"), {});
    EXPECT_EQ(fib.status, TraceStatus::Completed);
    EXPECT_EQ(fib.output, fibonacci_oracle(10));
    EXPECT_EQ(fib.output.back(), 55);

    const auto prime = run_sequential(load_corpus("prime.cfg"), {});
    EXPECT_EQ(prime.status, TraceStatus::Completed);
    EXPECT_EQ(prime.output, prime_oracle_output());

    std::vector<Value> evens;
    for (Value v = 0; v < 21; v += 2)
        evens.push_back(v);
    EXPECT_EQ(run_sequential(load_corpus("even.cfg"), {}).output, evens);
}

TEST(run_sequential, steps_strictly_increase)
{
    const auto trace = run_sequential(load_corpus("prime.cfg"), {});
    for (std::size_t i = 1; i < trace.records.size(); ++i)
        ASSERT_LT(trace.records[i - 1].step, trace.records[i].step);
}

TEST(run_sequential, inputs_and_undefined_variables)
{
    const Cfg cfg = parse("func f {\n block a:\n  s = x + y\n  print s\n  print nope\n  halt\n}");
    const auto trace = run_sequential(cfg, {{"x", 40}, {"y", 2}, {"unused", 1}});
    EXPECT_EQ(trace.output, (std::vector<Value>{42, 0}));
}

TEST(run_sequential, division_by_zero_traps)
{
    const auto trace = run_sequential(trap_cfg(), {});
    EXPECT_EQ(trace.status, TraceStatus::Trapped);
    EXPECT_EQ(trace.block_sequence(), (std::vector<BlockId>{0, 1}));
    EXPECT_EQ(trace.output, std::vector<Value>{7});
    EXPECT_NE(trace.reason.find("division by zero"), std::string::npos);
}

TEST(run_sequential, budget_turns_infinite_loop_into_deadlock_status)
{
    const Cfg cfg = parse("func f {\n block a:\n  br c, a, b\n block b:\n  halt\n}");
    const auto trace = run_sequential(cfg, {{"c", 1}}, 1000);
    EXPECT_EQ(trace.status, TraceStatus::Deadlock);
    EXPECT_EQ(trace.records.size(), 1000u);
}

TEST(run_obfuscated, single_thread_replays_sequential)
{
    for (const auto& name : corpus_names()) {
        const Cfg cfg = load_corpus(name);
        const auto seq = run_sequential(cfg, {});
        const auto obf = run_obfuscated(obfuscate(cfg, 1, 5), {}, Schedule::round_robin(), false);
        EXPECT_EQ(obf.status, TraceStatus::Completed) << name;
        EXPECT_EQ(obf.block_sequence(), seq.block_sequence()) << name;
        EXPECT_EQ(obf.output, seq.output) << name;
    }
}

TEST(run_obfuscated, prime_four_threads_round_robin)
{
    const Cfg cfg = load_corpus("prime.cfg");
    const auto seq = run_sequential(cfg, {});
    const auto prog = obfuscate(cfg, 4, 42);
    RunOptions opts;
    const RunResult r = execute_obfuscated(prog, {}, opts);
    EXPECT_EQ(r.trace.status, TraceStatus::Completed);
    EXPECT_EQ(r.trace.block_sequence(), seq.block_sequence());
    EXPECT_EQ(r.trace.output, prime_oracle_output());
    EXPECT_EQ(r.stats.mutex_violations, 0u);
    EXPECT_LE(r.stats.max_raised_flags, 1u);
    EXPECT_EQ(r.stats.foreign_clears, 0u);
    for (const auto& rec : r.trace.records)
        ASSERT_EQ(prog.partition.assign[rec.block], rec.thread.value());
}

TEST(run_obfuscated, schedule_independence)
{
    const Cfg cfg = load_corpus("prime.cfg");
    const auto prog = obfuscate(cfg, 3, 8);
    const auto reference = run_obfuscated(prog, {}, Schedule::round_robin(), false);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto t = run_obfuscated(prog, {}, Schedule::random(s), false);
        EXPECT_EQ(t.block_sequence(), reference.block_sequence());
        EXPECT_EQ(t.output, reference.output);
        EXPECT_EQ(t.status, TraceStatus::Completed);
    }
}

TEST(run_obfuscated, empty_partition_thread_still_completes)
{
    const Cfg cfg = load_corpus("fibonacci.cfg");
    Partition p{3, std::vector<ThreadIndex>(cfg.size(), 0), 0};
    p.assign[2] = 1;
    const auto prog = obfuscate_with(cfg, p);
    ASSERT_TRUE(prog.threads[2].owned.empty());
    const auto trace = run_obfuscated(prog, {}, Schedule::random(3), false);
    EXPECT_EQ(trace.status, TraceStatus::Completed);
    EXPECT_EQ(trace.output, fibonacci_oracle(10));
    for (const auto& rec : trace.records)
        EXPECT_NE(rec.thread, ThreadIndex{2});
}

TEST(run_obfuscated, trap_stops_every_worker)
{
    const auto seq = run_sequential(trap_cfg(), {});
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const auto t = run_obfuscated(obfuscate(trap_cfg(), 3, seed), {}, Schedule::random(seed), false);
        EXPECT_EQ(t.status, TraceStatus::Trapped);
        EXPECT_EQ(t.block_sequence(), seq.block_sequence());
        EXPECT_EQ(t.output, seq.output);
    }
}

TEST(run_obfuscated, mutations_are_visible)
{
    const Cfg cfg = load_corpus("prime.cfg");
    const auto seq = run_sequential(cfg, {});
    const auto prog = obfuscate(cfg, 2, 1);

    RunOptions skip_raise;
    skip_raise.mutation = ProtocolMutation::SkipRaise;
    skip_raise.schedule = Schedule::round_robin(20'000);
    EXPECT_EQ(execute_obfuscated(prog, {}, skip_raise).trace.status, TraceStatus::Deadlock);

    RunOptions skip_clear;
    skip_clear.mutation = ProtocolMutation::SkipClear;
    skip_clear.schedule = Schedule::round_robin(20'000);
    EXPECT_GT(execute_obfuscated(prog, {}, skip_clear).stats.mutex_violations, 0u);

    RunOptions wrong;
    wrong.mutation = ProtocolMutation::WrongSuccessor;
    wrong.schedule = Schedule::round_robin(20'000);
    const auto w = execute_obfuscated(prog, {}, wrong).trace;
    EXPECT_TRUE(w.status == TraceStatus::Deadlock || w.block_sequence() != seq.block_sequence());

    RunOptions conc = skip_raise;
    conc.concurrent = true;
    EXPECT_THROW(execute_obfuscated(prog, {}, conc), UsageError);
}

TEST(run_obfuscated, budget_must_be_positive)
{
    const auto prog = obfuscate(linear_chain(2), 1, 0);
    RunOptions opts;
    opts.schedule.step_budget = 0;
    EXPECT_THROW(execute_obfuscated(prog, {}, opts), UsageError);
}

TEST(run_obfuscated, concurrent_matches_sequential)
{
    const Cfg cfg = load_corpus("prime.cfg");
    const auto seq = run_sequential(cfg, {});
    for (ThreadIndex m : {1u, 2u, 4u}) {
        const auto t = run_obfuscated(obfuscate(cfg, m, 42), {}, Schedule::round_robin(), true);
        EXPECT_EQ(t.status, TraceStatus::Completed);
        EXPECT_EQ(t.output, seq.output);
        EXPECT_EQ(t.block_sequence(), seq.block_sequence());
    }
    const auto trapped = run_obfuscated(obfuscate(trap_cfg(), 2, 0), {}, Schedule::round_robin(), true);
    EXPECT_EQ(trapped.status, TraceStatus::Trapped);
}

TEST(guard_table, padded_cells)
{
    GuardTable g(GuardLayout{5, 64});
    EXPECT_EQ(g.data_slots(), 4u);
    EXPECT_EQ(g.done_slot(), 4u);
    EXPECT_EQ(g.raised_data_flags(), 0u);
    g.raise(2);
    g.raise(4);
    EXPECT_TRUE(g.raised(2));
    EXPECT_EQ(g.raised_data_flags(), 1u);
    g.clear(2);
    EXPECT_FALSE(g.raised(2));
    EXPECT_TRUE(g.raised(4));

    GuardTable tight(GuardLayout{3, 1});
    tight.raise(1);
    EXPECT_FALSE(tight.raised(0));
    EXPECT_TRUE(tight.raised(1));
    EXPECT_THROW(GuardTable(GuardLayout{3, 0}), UsageError);
}

TEST(benchmark, report_contract)
{
    const Cfg cfg = load_corpus("prime.cfg");
    const auto prog = obfuscate(cfg, 1, 0);
    const auto r = benchmark(cfg, prog, {}, 5, false);
    EXPECT_EQ(r.seq_seconds.size(), 5u);
    EXPECT_EQ(r.obf_seconds.size(), 5u);
    EXPECT_DOUBLE_EQ(r.seq_median, median(r.seq_seconds));
    EXPECT_TRUE(r.outputs_matched);
    EXPECT_GE(r.slowdown, 1.0);
    EXPECT_THROW(benchmark(cfg, prog, {}, 0), UsageError);
}

TEST(benchmark, tiny_program_single_thread_is_not_faster)
{
    const Cfg cfg = load_corpus("even.cfg");
    const auto r = benchmark(cfg, obfuscate(cfg, 1, 0), {}, 15, false);
    EXPECT_GE(r.slowdown, 1.0);
}

TEST(benchmark, median)
{
    EXPECT_DOUBLE_EQ(median({3, 1, 2}), 2);
    EXPECT_DOUBLE_EQ(median({4, 1, 2, 3}), 2.5);
    EXPECT_DOUBLE_EQ(median({}), 0);
}
