#pragma once

// Thread-based control-flow mangling: blocks of one Cfg are scattered over m
// thread functions. Each thread guards its blocks with per-block flags and
// spins in synthetic Wait blocks until one of the flags it may legally see
// next is raised.

#include "mangle/ir.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mangle {

inline constexpr std::size_t kDefaultGuardStride = 64;

struct Partition {
    ThreadIndex m = 1;
    std::vector<ThreadIndex> assign; // indexed by block id
    std::uint64_t seed = 0;

    BlockSet owned_by(ThreadIndex t) const;
    bool operator==(const Partition&) const = default;
};

/// Flags a thread polls; DONE is always polled in addition to `flags`.
struct WaitSet {
    BlockSet flags;
    bool operator==(const WaitSet&) const = default;
    auto operator<=>(const WaitSet&) const = default;
};

enum class ThreadNodeKind { Entry, Exit, Wait, Switch, Block };

struct ThreadNode {
    ThreadNodeKind kind = ThreadNodeKind::Entry;
    std::size_t wait = 0; // index into ThreadCfg::waits for Wait/Switch nodes
    BlockId block = 0;    // original block for Block nodes
    std::string label;
};

struct ThreadEdge {
    std::size_t from = 0;
    std::size_t to = 0;
    std::string label;
};

/// One generated thread function. Node 0 is Entry and node 1 is Exit.
///
/// Each distinct wait set gets one Wait node and, when it names at least one
/// flag, a Switch node dispatching to the raised block (or to Exit on DONE).
/// An owned block whose wait set is empty has nothing left to wait for and
/// falls through to Exit.
struct ThreadCfg {
    ThreadIndex thread_index = 0;
    std::string name;
    BlockSet owned;
    WaitSet entry_wait;
    std::map<BlockId, WaitSet> per_block_wait;

    std::vector<WaitSet> waits;
    std::vector<ThreadNode> nodes;
    std::vector<ThreadEdge> edges;

    static constexpr std::size_t entry_node = 0;
    static constexpr std::size_t exit_node = 1;

    /// Index of `w` in `waits`; throws UsageError if absent.
    std::size_t wait_index(const WaitSet& w) const;
};

/// Guard table geometry: one padded cell per block plus a DONE cell.
struct GuardLayout {
    std::size_t slots = 1;
    std::size_t stride = kDefaultGuardStride;

    std::size_t done_slot() const noexcept { return slots - 1; }
    std::size_t offset(std::size_t slot) const noexcept { return slot * stride; }
    std::size_t bytes() const noexcept { return slots * stride; }
    bool operator==(const GuardLayout&) const = default;
};

struct ObfuscatedProgram {
    Cfg source;
    Partition partition;
    std::vector<ThreadCfg> threads;
    GuardLayout guard_layout;
    std::string prng{"splitmix64"};
};

/// Assigns each block a thread drawn uniformly from [0, m). Deterministic in
/// (cfg.size(), m, seed).
Partition partition_blocks(const Cfg& cfg, ThreadIndex m, std::uint64_t seed);

/// First blocks of `bbset` reachable from `bcur` through paths whose interior
/// avoids `bbset`. Worklist with a seen-before cut, so cycles terminate.
BlockSet get_immediate_successors(BlockId bcur, const BlockSet& bbset, const Cfg& cfg);

/// What a thread owning `bbset` waits on before anything has run: the same
/// worklist started from a virtual node whose only successor is the entry.
BlockSet initial_wait_set(const BlockSet& bbset, const Cfg& cfg);

ThreadCfg build_thread_cfg(const Cfg& cfg, const Partition& partition, ThreadIndex t);

/// Partition, successor analysis and thread synthesis in one go. Throws
/// UsageError for an invalid cfg or m < 1.
ObfuscatedProgram obfuscate(const Cfg& cfg, ThreadIndex m, std::uint64_t seed,
                            std::size_t stride = kDefaultGuardStride);

/// Same as obfuscate() but with a caller-provided assignment.
ObfuscatedProgram obfuscate_with(const Cfg& cfg, Partition partition,
                                 std::size_t stride = kDefaultGuardStride);

/// m^n, exactly.
boost::multiprecision::cpp_int count_combinations(std::uint64_t m, std::uint64_t n);

/// True when every block id sits in exactly one thread's owned set.
bool is_bijective(const ObfuscatedProgram& prog);

} // namespace mangle
