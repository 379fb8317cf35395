#include "mangle/verifier.hpp"

#include <algorithm>
#include <chrono>
#include <deque>
#include <functional>
#include <optional>
#include <sstream>

namespace mangle {

namespace {

std::string set_string(const BlockSet& s)
{
    std::string out = "{";
    for (BlockId b : s) {
        if (out.size() > 1)
            out += ",";
        out += std::to_string(b);
    }
    return out + "}";
}

// First reason `run` disagrees with the sequential reference, if any.
std::optional<std::string> compare_to_reference(const ExecutionTrace& reference,
                                                const RunResult& run,
                                                const ObfuscatedProgram& prog)
{
    const ExecutionTrace& trace = run.trace;
    if (trace.status == TraceStatus::Deadlock)
        return "deadlock: " + trace.reason;
    if (run.stats.mutex_violations > 0)
        return "mutual exclusion violated after " + std::to_string(run.stats.mutex_violations) +
               " micro-steps (max raised flags " + std::to_string(run.stats.max_raised_flags) + ")";
    if (run.stats.foreign_clears > 0)
        return "flag cleared by a worker that does not own the block";

    const std::size_t common = std::min(reference.records.size(), trace.records.size());
    for (std::size_t i = 0; i < common; ++i) {
        if (reference.records[i].block != trace.records[i].block)
            return "block order diverges at step " + std::to_string(i) + ": expected " +
                   std::to_string(reference.records[i].block) + ", got " +
                   std::to_string(trace.records[i].block);
    }
    if (reference.records.size() != trace.records.size())
        return "block count differs: expected " + std::to_string(reference.records.size()) +
               ", got " + std::to_string(trace.records.size());
    for (const auto& r : trace.records) {
        if (!r.thread || prog.partition.assign[r.block] != *r.thread)
            return "block " + std::to_string(r.block) + " executed by a thread that does not own it";
    }
    if (reference.output != trace.output)
        return "printed output differs";
    if (reference.status != trace.status)
        return "status differs: expected " + std::string(to_string(reference.status)) + ", got " +
               std::string(to_string(trace.status));
    return std::nullopt;
}

std::vector<Schedule> schedules_for(const VerifyConfig& config, std::uint64_t budget)
{
    std::vector<Schedule> out{Schedule::round_robin(budget)};
    for (std::size_t j = 0; j < config.schedule_seeds; ++j)
        out.push_back(Schedule::random(config.base_seed + j, budget));
    return out;
}

void validate_config(const VerifyConfig& config)
{
    if (config.m_values.empty() || config.partition_seeds < 1)
        throw UsageError("verify config needs at least one thread count and partition seed");
    for (ThreadIndex m : config.m_values)
        if (m < 1)
            throw UsageError("thread count m must be at least 1");
}

} // namespace

BlockSet oracle_first_inset_reachable(BlockId bcur, const BlockSet& bbset, const Cfg& cfg)
{
    BlockSet found;
    std::vector<bool> visited(cfg.size(), false);
    std::deque<BlockId> queue;
    auto enqueue_successors = [&](BlockId v) {
        for (BlockId s : successors(cfg, v)) {
            if (!visited[s]) {
                visited[s] = true;
                queue.push_back(s);
            }
        }
    };
    enqueue_successors(bcur);
    while (!queue.empty()) {
        const BlockId v = queue.front();
        queue.pop_front();
        if (bbset.contains(v))
            found.insert(v);
        else
            enqueue_successors(v);
    }
    return found;
}

Cfg random_cfg(SplitMix64& rng, const RandomCfgOptions& options)
{
    if (options.min_blocks < 1 || options.max_blocks < options.min_blocks)
        throw UsageError("random cfg needs 1 <= min_blocks <= max_blocks");
    const std::size_t n =
        options.min_blocks + rng.below(options.max_blocks - options.min_blocks + 1);
    for (;;) {
        Cfg cfg;
        cfg.name = "random" + std::to_string(n);
        const auto exit = static_cast<BlockId>(rng.below(n));
        for (std::size_t i = 0; i < n; ++i) {
            BasicBlock bb;
            bb.id = static_cast<BlockId>(i);
            bb.label = "b" + std::to_string(i);
            if (bb.id == exit)
                bb.term = Halt{};
            else if (rng.unit() < options.branch_density)
                bb.term = Branch{"c", static_cast<BlockId>(rng.below(n)),
                                 static_cast<BlockId>(rng.below(n))};
            else
                bb.term = Jump{static_cast<BlockId>(rng.below(n))};
            cfg.blocks.push_back(std::move(bb));
        }
        if (validate(cfg).ok())
            return cfg;
    }
}

BlockSet random_subset(SplitMix64& rng, std::size_t n)
{
    BlockSet s;
    for (std::size_t b = 0; b < n; ++b)
        if (rng.next() & 1)
            s.insert(static_cast<BlockId>(b));
    return s;
}

void VerifyReport::merge(const VerifyReport& other)
{
    cases.insert(cases.end(), other.cases.begin(), other.cases.end());
    total += other.total;
    failed += other.failed;
    successor_comparisons += other.successor_comparisons;
    successor_mismatches += other.successor_mismatches;
    mutex_violations += other.mutex_violations;
    bijection_violations += other.bijection_violations;
    deadlocks += other.deadlocks;
    divergences += other.divergences;
    partitions_checked += other.partitions_checked;
    micro_steps += other.micro_steps;
    seconds += other.seconds;
}

VerifyReport check_successor_oracle(std::size_t trials, std::size_t max_n, std::uint64_t seed,
                              std::size_t subsets_per_block)
{
    if (trials < 1 || max_n < 1)
        throw UsageError("successor check needs trials >= 1 and max_n >= 1");
    const auto start = std::chrono::steady_clock::now();
    VerifyReport report;
    SplitMix64 rng(seed);
    for (std::size_t trial = 0; trial < trials; ++trial) {
        const Cfg cfg = random_cfg(rng, {1, max_n, 0.4});
        for (BlockId b = 0; b < cfg.size(); ++b) {
            for (std::size_t k = 0; k < subsets_per_block; ++k) {
                const BlockSet subset = random_subset(rng, cfg.size());
                const BlockSet got = get_immediate_successors(b, subset, cfg);
                const BlockSet want = oracle_first_inset_reachable(b, subset, cfg);
                ++report.successor_comparisons;
                ++report.total;
                if (got != want) {
                    ++report.successor_mismatches;
                    ++report.failed;
                    report.cases.push_back({"random cfg (seed " + std::to_string(seed) +
                                                ", trial " + std::to_string(trial) + ")",
                                            0, seed, "block " + std::to_string(b), false,
                                            "subset " + set_string(subset) + ": worklist " +
                                                set_string(got) + ", oracle " + set_string(want)});
                }
            }
        }
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

VerifyReport check_successor_chains(std::size_t max_n)
{
    VerifyReport report;
    for (std::size_t n = 1; n <= max_n; ++n) {
        Cfg cfg;
        cfg.name = "chain" + std::to_string(n);
        for (std::size_t i = 0; i < n; ++i) {
            BasicBlock bb;
            bb.id = static_cast<BlockId>(i);
            bb.label = "c" + std::to_string(i);
            if (i + 1 < n)
                bb.term = Jump{static_cast<BlockId>(i + 1)};
            cfg.blocks.push_back(std::move(bb));
        }
        // every contiguous range [lo, hi), the empty range included
        for (std::size_t lo = 0; lo <= n; ++lo) {
            for (std::size_t hi = lo; hi <= n; ++hi) {
                BlockSet subset;
                for (std::size_t b = lo; b < hi; ++b)
                    subset.insert(static_cast<BlockId>(b));
                for (BlockId b = 0; b < n; ++b) {
                    const BlockSet got = get_immediate_successors(b, subset, cfg);
                    const BlockSet want = oracle_first_inset_reachable(b, subset, cfg);
                    ++report.successor_comparisons;
                    ++report.total;
                    if (got != want) {
                        ++report.successor_mismatches;
                        ++report.failed;
                        report.cases.push_back({cfg.name, 0, 0, "block " + std::to_string(b),
                                                false, "subset " + set_string(subset)});
                    }
                }
            }
        }
    }
    return report;
}

VerifyReport check_equivalence(const Cfg& cfg, const VerifyConfig& config)
{
    validate_config(config);
    const auto start = std::chrono::steady_clock::now();
    VerifyReport report;
    const ExecutionTrace reference = run_sequential(cfg, config.inputs);

    for (ThreadIndex m : config.m_values) {
        std::uint64_t budget = config.step_budget;
        if (config.mutation != ProtocolMutation::None) // mutated runs tend to spin forever
            budget = std::min<std::uint64_t>(
                budget, std::max<std::uint64_t>(10'000, 50 * (m + 1) * reference.records.size()));
        const auto schedules = schedules_for(config, budget);
        for (std::size_t i = 0; i < config.partition_seeds; ++i) {
            const std::uint64_t pseed = config.base_seed + i;
            const ObfuscatedProgram prog = obfuscate(cfg, m, pseed, config.stride);
            ++report.partitions_checked;
            const bool bijective = is_bijective(prog);
            if (!bijective)
                ++report.bijection_violations;

            for (const Schedule& schedule : schedules) {
                RunOptions opts;
                opts.schedule = schedule;
                opts.mutation = config.mutation;
                const RunResult run = execute_obfuscated(prog, config.inputs, opts);
                report.micro_steps += run.stats.micro_steps;
                report.mutex_violations += run.stats.mutex_violations > 0 ? 1 : 0;

                CaseResult c{cfg.name, m, pseed, schedule.describe(), true, ""};
                if (reference.status == TraceStatus::Deadlock)
                    c.divergence = "sequential reference did not finish: " + reference.reason;
                else if (!bijective)
                    c.divergence = "partition is not a bijection over the blocks";
                else if (auto why = compare_to_reference(reference, run, prog))
                    c.divergence = *why;
                if (run.trace.status == TraceStatus::Deadlock)
                    ++report.deadlocks;
                else if (!c.divergence.empty() && run.stats.mutex_violations == 0)
                    ++report.divergences;

                c.passed = c.divergence.empty();
                ++report.total;
                if (!c.passed)
                    ++report.failed;
                report.cases.push_back(std::move(c));
            }
        }
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

std::size_t check_wait_set_soundness(const ObfuscatedProgram& prog, std::size_t max_len)
{
    const Cfg& cfg = prog.source;
    const auto exit = cfg.exit();
    std::size_t violations = 0;
    // nullptr: the thread has retired
    std::vector<const WaitSet*> waits;
    for (const auto& tc : prog.threads)
        waits.push_back(&tc.entry_wait);

    std::function<void(BlockId, std::size_t)> walk = [&](BlockId b, std::size_t depth) {
        const ThreadIndex owner = prog.partition.assign[b];
        const WaitSet* current = waits[owner];
        if (current == nullptr || !current->flags.contains(b))
            ++violations;
        const WaitSet& after = prog.threads[owner].per_block_wait.at(b);
        waits[owner] = after.flags.empty() ? nullptr : &after;
        if (b != exit && depth + 1 < max_len)
            for (BlockId s : successors(cfg, b))
                walk(s, depth + 1);
        waits[owner] = current;
    };
    if (max_len > 0)
        walk(cfg.entry, 0);
    return violations;
}

std::vector<MutationResult> check_mutations(const std::vector<Cfg>& corpus,
                                            const VerifyConfig& config)
{
    validate_config(config);
    std::vector<MutationResult> results;
    for (auto mutation : {ProtocolMutation::SkipClear, ProtocolMutation::SkipRaise,
                          ProtocolMutation::WrongSuccessor}) {
        MutationResult res{mutation, false, ""};
        for (const Cfg& cfg : corpus) {
            const ExecutionTrace reference = run_sequential(cfg, config.inputs);
            for (ThreadIndex m : config.m_values) {
                for (std::size_t i = 0; i < config.partition_seeds && !res.detected; ++i) {
                    const ObfuscatedProgram prog = obfuscate(cfg, m, config.base_seed + i,
                                                             config.stride);
                    RunOptions clean;
                    clean.schedule = Schedule::round_robin(config.step_budget);
                    const RunResult baseline = execute_obfuscated(prog, config.inputs, clean);
                    // a healthy run needs far fewer micro-steps than this
                    RunOptions mutated = clean;
                    mutated.mutation = mutation;
                    mutated.schedule.step_budget =
                        std::min(config.step_budget,
                                 std::max<std::uint64_t>(1000, 10 * baseline.stats.micro_steps));
                    const RunResult run = execute_obfuscated(prog, config.inputs, mutated);
                    if (auto why = compare_to_reference(reference, run, prog)) {
                        res.detected = true;
                        res.witness = cfg.name + " m=" + std::to_string(m) + " seed=" +
                                      std::to_string(config.base_seed + i) + ": " + *why;
                    }
                }
                if (res.detected)
                    break;
            }
            if (res.detected)
                break;
        }
        results.push_back(std::move(res));
    }
    return results;
}

} // namespace mangle
