#pragma once

// Differential and property checks for the obfuscator and runtime.

#include "mangle/ir.hpp"
#include "mangle/obfuscator.hpp"
#include "mangle/rng.hpp"
#include "mangle/runtime.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace mangle {

/// Independent check for get_immediate_successors: breadth-first search from
/// the successors of `bcur` that records in-set nodes and expands only the
/// ones outside the set.
BlockSet oracle_first_inset_reachable(BlockId bcur, const BlockSet& bbset, const Cfg& cfg);

struct RandomCfgOptions {
    std::size_t min_blocks = 1;
    std::size_t max_blocks = 12;
    double branch_density = 0.4;
};

/// A valid Cfg with a single Halt block and every block reachable from the
/// entry (rejection sampling). Blocks carry no instructions; branches test
/// the variable `c`.
Cfg random_cfg(SplitMix64& rng, const RandomCfgOptions& options = {});

/// Uniformly random subset of {0..n-1}.
BlockSet random_subset(SplitMix64& rng, std::size_t n);

struct VerifyConfig {
    std::vector<ThreadIndex> m_values{1, 2, 3, 4};
    std::size_t partition_seeds = 25;
    std::size_t schedule_seeds = 10;
    std::uint64_t base_seed = 0;
    std::size_t successor_trials = 1000;
    std::size_t max_oracle_n = 12;
    std::size_t subsets_per_block = 50;
    std::uint64_t step_budget = kDefaultStepBudget;
    std::size_t stride = kDefaultGuardStride;
    ProtocolMutation mutation = ProtocolMutation::None;
    Inputs inputs;
};

struct CaseResult {
    std::string program;
    ThreadIndex m = 0;
    std::uint64_t partition_seed = 0;
    std::string schedule;
    bool passed = true;
    std::string divergence;
};

struct VerifyReport {
    std::vector<CaseResult> cases; // equivalence cases; successor checks keep failures only
    std::size_t total = 0;
    std::size_t failed = 0;

    std::size_t successor_comparisons = 0;
    std::size_t successor_mismatches = 0;
    std::size_t mutex_violations = 0;
    std::size_t bijection_violations = 0;
    std::size_t deadlocks = 0;
    std::size_t divergences = 0;
    std::size_t partitions_checked = 0;
    std::uint64_t micro_steps = 0;
    double seconds = 0;

    bool ok() const noexcept { return failed == 0; }
    void merge(const VerifyReport& other);
};

/// Random CFGs with n <= max_n; every block against `subsets_per_block`
/// random subsets, comparing the worklist to the oracle.
VerifyReport check_successor_oracle(std::size_t trials, std::size_t max_n, std::uint64_t seed,
                              std::size_t subsets_per_block = 50);

/// Every linear chain of length <= max_n against every contiguous subset.
VerifyReport check_successor_chains(std::size_t max_n);

/// Sequential reference against scheduled obfuscated runs for each m, each
/// partition seed, round-robin plus `schedule_seeds` random schedules.
/// Order, output, status, mutual exclusion and the block bijection are all
/// checked per case.
VerifyReport check_equivalence(const Cfg& cfg, const VerifyConfig& config);

/// Walks every path from the entry of length <= max_len and confirms that
/// the owner of each executed block is waiting on it at that moment.
/// Returns the number of violations found.
std::size_t check_wait_set_soundness(const ObfuscatedProgram& prog, std::size_t max_len);

struct MutationResult {
    ProtocolMutation mutation = ProtocolMutation::None;
    bool detected = false;
    std::string witness;
};

/// Runs each built-in protocol mutation over the corpus until a case fails.
std::vector<MutationResult> check_mutations(const std::vector<Cfg>& corpus,
                                            const VerifyConfig& config);

} // namespace mangle
