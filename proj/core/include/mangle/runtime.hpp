#pragma once

// Three ways to execute a program:
//   - run_sequential: reference interpreter over the original Cfg
//   - run_obfuscated (scheduled): workers advanced one micro-step at a time
//     by a deterministic scheduler, single OS thread
//   - run_obfuscated (concurrent): one OS thread per ThreadCfg spinning on a
//     shared guard table
//
// Guard protocol: flag[entry] starts raised. A worker that sees a flag in its
// current wait set clears it, runs the block, then raises the flag of the
// block's dynamic successor (DONE after the exit block or a trap). A worker
// whose wait set sees only DONE leaves.

#include "mangle/ir.hpp"
#include "mangle/obfuscator.hpp"

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mangle {

using Inputs = std::map<std::string, Value>;

enum class TraceStatus { Completed, Trapped, Deadlock };

std::string_view to_string(TraceStatus s);

struct TraceRecord {
    std::uint64_t step = 0;
    std::optional<ThreadIndex> thread; // nullopt for the sequential interpreter
    BlockId block = 0;
    bool operator==(const TraceRecord&) const = default;
};

struct ExecutionTrace {
    std::vector<TraceRecord> records;
    std::vector<Value> output;
    TraceStatus status = TraceStatus::Completed;
    std::string reason;

    std::vector<BlockId> block_sequence() const;
};

inline constexpr std::uint64_t kDefaultStepBudget = 10'000'000;

struct Schedule {
    enum class Mode { RoundRobin, Random };
    Mode mode = Mode::RoundRobin;
    std::uint64_t seed = 0;
    std::uint64_t step_budget = kDefaultStepBudget;

    static Schedule round_robin(std::uint64_t budget = kDefaultStepBudget)
    {
        return {Mode::RoundRobin, 0, budget};
    }
    static Schedule random(std::uint64_t seed, std::uint64_t budget = kDefaultStepBudget)
    {
        return {Mode::Random, seed, budget};
    }
    std::string describe() const;
};

/// Deliberate protocol bugs, used to show the verifier notices them.
enum class ProtocolMutation { None, SkipClear, SkipRaise, WrongSuccessor };

std::string_view to_string(ProtocolMutation m);
std::optional<ProtocolMutation> parse_mutation(std::string_view text);

struct RunOptions {
    Schedule schedule;
    bool concurrent = false;
    ProtocolMutation mutation = ProtocolMutation::None;
    /// Concurrent mode only: give up when no block has run for this long.
    std::chrono::milliseconds stall_timeout{5000};
};

struct RunStats {
    std::uint64_t micro_steps = 0;
    /// Scheduled mode: micro-steps after which more than one data flag was up.
    std::uint64_t mutex_violations = 0;
    std::size_t max_raised_flags = 0;
    /// Flags cleared by a worker other than the block's owner.
    std::uint64_t foreign_clears = 0;
    std::chrono::nanoseconds elapsed{0};
};

struct RunResult {
    ExecutionTrace trace;
    RunStats stats;
};

/// Padded 0/1 cells, one per block plus DONE, accessed atomically.
class GuardTable {
public:
    explicit GuardTable(const GuardLayout& layout);

    bool raised(std::size_t slot) const noexcept;
    void raise(std::size_t slot) noexcept;
    void clear(std::size_t slot) noexcept;

    std::size_t data_slots() const noexcept { return layout_.slots - 1; }
    std::size_t done_slot() const noexcept { return layout_.done_slot(); }
    /// Raised cells among the data slots (DONE excluded).
    std::size_t raised_data_flags() const noexcept;

private:
    std::atomic<std::uint8_t>& cell(std::size_t slot) const noexcept;

    struct AlignedFree {
        void operator()(std::byte* p) const noexcept;
    };

    GuardLayout layout_;
    std::unique_ptr<std::byte[], AlignedFree> storage_;
};

inline constexpr std::uint64_t kDefaultSequentialBudget = 100'000'000;

ExecutionTrace run_sequential(const Cfg& cfg, const Inputs& inputs,
                              std::uint64_t block_budget = kDefaultSequentialBudget);

ExecutionTrace run_obfuscated(const ObfuscatedProgram& prog, const Inputs& inputs,
                              const Schedule& schedule, bool concurrent);

RunResult execute_obfuscated(const ObfuscatedProgram& prog, const Inputs& inputs,
                             const RunOptions& options);

struct BenchmarkReport {
    std::vector<double> seq_seconds;
    std::vector<double> obf_seconds;
    double seq_median = 0;
    double obf_median = 0;
    double slowdown = 0;
    bool concurrent = true;
    bool outputs_matched = true;
};

/// Wall-clock medians over `repeats` runs; slowdown = obfuscated / sequential.
BenchmarkReport benchmark(const Cfg& cfg, const ObfuscatedProgram& prog, const Inputs& inputs,
                          int repeats, bool concurrent = true);

double median(std::vector<double> samples);

} // namespace mangle
