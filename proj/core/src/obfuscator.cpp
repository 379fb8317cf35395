#include "mangle/obfuscator.hpp"

#include "mangle/rng.hpp"

#include <algorithm>
#include <iterator>
#include <limits>

namespace mangle {

namespace {

BlockSet set_union(const BlockSet& a, const BlockSet& b)
{
    BlockSet out = a;
    out.insert(b.begin(), b.end());
    return out;
}

BlockSet set_intersection(const BlockSet& a, const BlockSet& b)
{
    BlockSet out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
    return out;
}

BlockSet set_difference(const BlockSet& a, const BlockSet& b)
{
    BlockSet out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
    return out;
}

// The worklist over a successor relation `succ`; `start` is the block whose
// in-set successors we want.
template <class SuccFn>
BlockSet immediate_successors(BlockId start, const BlockSet& bbset, SuccFn&& succ)
{
    BlockSet result;
    BlockSet bb{start};
    BlockSet seen_before;
    while (!bb.empty()) {
        BlockSet frontier;
        for (BlockId b : bb) {
            const BlockSet s = succ(b);
            frontier.insert(s.begin(), s.end());
        }
        result = set_union(result, set_intersection(frontier, bbset));
        const BlockSet may_next = set_difference(frontier, set_intersection(bbset, frontier));
        bb = set_difference(may_next, seen_before);
        seen_before = set_union(seen_before, may_next);
    }
    return result;
}

std::string wait_label(const WaitSet& w)
{
    std::string label = "Wait {";
    for (BlockId b : w.flags)
        label += std::to_string(b) + ", ";
    return label + "DONE}";
}

} // namespace

BlockSet Partition::owned_by(ThreadIndex t) const
{
    BlockSet out;
    for (std::size_t b = 0; b < assign.size(); ++b)
        if (assign[b] == t)
            out.insert(static_cast<BlockId>(b));
    return out;
}

std::size_t ThreadCfg::wait_index(const WaitSet& w) const
{
    auto it = std::find(waits.begin(), waits.end(), w);
    if (it == waits.end())
        throw UsageError("wait set not present in thread " + std::to_string(thread_index));
    return static_cast<std::size_t>(it - waits.begin());
}

Partition partition_blocks(const Cfg& cfg, ThreadIndex m, std::uint64_t seed)
{
    if (m < 1)
        throw UsageError("thread count m must be at least 1");
    Partition p;
    p.m = m;
    p.seed = seed;
    p.assign.reserve(cfg.size());
    SplitMix64 rng(seed);
    for (std::size_t b = 0; b < cfg.size(); ++b)
        p.assign.push_back(static_cast<ThreadIndex>(rng.below(m)));
    return p;
}

BlockSet get_immediate_successors(BlockId bcur, const BlockSet& bbset, const Cfg& cfg)
{
    cfg.block(bcur);
    return immediate_successors(bcur, bbset, [&](BlockId b) { return successors(cfg, b); });
}

BlockSet initial_wait_set(const BlockSet& bbset, const Cfg& cfg)
{
    const auto pre_entry = static_cast<BlockId>(cfg.size());
    return immediate_successors(pre_entry, bbset, [&](BlockId b) {
        return b == pre_entry ? BlockSet{cfg.entry} : successors(cfg, b);
    });
}

ThreadCfg build_thread_cfg(const Cfg& cfg, const Partition& partition, ThreadIndex t)
{
    if (t >= partition.m)
        throw UsageError("thread index " + std::to_string(t) + " out of range for m=" +
                         std::to_string(partition.m));
    if (partition.assign.size() != cfg.size())
        throw UsageError("partition covers " + std::to_string(partition.assign.size()) +
                         " blocks but cfg has " + std::to_string(cfg.size()));

    ThreadCfg tc;
    tc.thread_index = t;
    tc.name = cfg.name + ".t" + std::to_string(t);
    tc.owned = partition.owned_by(t);
    tc.entry_wait.flags = initial_wait_set(tc.owned, cfg);
    for (BlockId b : tc.owned)
        tc.per_block_wait[b].flags = get_immediate_successors(b, tc.owned, cfg);

    auto intern = [&](const WaitSet& w) {
        if (std::find(tc.waits.begin(), tc.waits.end(), w) == tc.waits.end())
            tc.waits.push_back(w);
    };
    intern(tc.entry_wait);
    for (const auto& [b, w] : tc.per_block_wait)
        if (!w.flags.empty())
            intern(w);

    tc.nodes.push_back({ThreadNodeKind::Entry, 0, 0, "Entry"});
    tc.nodes.push_back({ThreadNodeKind::Exit, 0, 0, "Exit"});

    std::vector<std::size_t> wait_node(tc.waits.size());
    std::vector<std::size_t> switch_node(tc.waits.size(), ThreadCfg::exit_node);
    for (std::size_t k = 0; k < tc.waits.size(); ++k) {
        wait_node[k] = tc.nodes.size();
        tc.nodes.push_back({ThreadNodeKind::Wait, k, 0, wait_label(tc.waits[k])});
        if (!tc.waits[k].flags.empty()) {
            switch_node[k] = tc.nodes.size();
            tc.nodes.push_back({ThreadNodeKind::Switch, k, 0, "Switch"});
        }
    }
    std::map<BlockId, std::size_t> block_node;
    for (BlockId b : tc.owned) {
        block_node[b] = tc.nodes.size();
        tc.nodes.push_back(
            {ThreadNodeKind::Block, 0, b, std::to_string(b) + ": " + cfg.blocks[b].label});
    }

    tc.edges.push_back({ThreadCfg::entry_node, wait_node[tc.wait_index(tc.entry_wait)], ""});
    for (std::size_t k = 0; k < tc.waits.size(); ++k) {
        tc.edges.push_back({wait_node[k], wait_node[k], "spin"});
        if (tc.waits[k].flags.empty()) {
            tc.edges.push_back({wait_node[k], ThreadCfg::exit_node, "DONE"});
            continue;
        }
        tc.edges.push_back({wait_node[k], switch_node[k], ""});
        for (BlockId b : tc.waits[k].flags)
            tc.edges.push_back({switch_node[k], block_node.at(b), "flag[" + std::to_string(b) + "]"});
        tc.edges.push_back({switch_node[k], ThreadCfg::exit_node, "DONE"});
    }
    for (const auto& [b, w] : tc.per_block_wait) {
        if (w.flags.empty())
            tc.edges.push_back({block_node.at(b), ThreadCfg::exit_node, "retire"});
        else
            tc.edges.push_back({block_node.at(b), wait_node[tc.wait_index(w)], ""});
    }
    return tc;
}

ObfuscatedProgram obfuscate_with(const Cfg& cfg, Partition partition, std::size_t stride)
{
    if (const auto report = validate(cfg); !report.ok())
        throw UsageError("cannot obfuscate invalid cfg '" + cfg.name +
                         "': " + report.errors.front().message);
    if (partition.m < 1)
        throw UsageError("thread count m must be at least 1");
    if (stride < 1)
        throw UsageError("guard stride must be at least 1");
    for (ThreadIndex t : partition.assign)
        if (t >= partition.m)
            throw UsageError("partition assigns thread " + std::to_string(t) + " but m=" +
                             std::to_string(partition.m));

    ObfuscatedProgram prog;
    prog.source = cfg;
    prog.threads.reserve(partition.m);
    for (ThreadIndex t = 0; t < partition.m; ++t)
        prog.threads.push_back(build_thread_cfg(cfg, partition, t));
    prog.partition = std::move(partition);
    prog.guard_layout = GuardLayout{cfg.size() + 1, stride};
    prog.prng = std::string(SplitMix64::name);
    return prog;
}

ObfuscatedProgram obfuscate(const Cfg& cfg, ThreadIndex m, std::uint64_t seed, std::size_t stride)
{
    return obfuscate_with(cfg, partition_blocks(cfg, m, seed), stride);
}

boost::multiprecision::cpp_int count_combinations(std::uint64_t m, std::uint64_t n)
{
    if (m < 1)
        throw UsageError("thread count m must be at least 1");
    if (n > std::numeric_limits<unsigned>::max())
        throw UsageError("block count too large");
    return boost::multiprecision::pow(boost::multiprecision::cpp_int(m), static_cast<unsigned>(n));
}

bool is_bijective(const ObfuscatedProgram& prog)
{
    std::vector<int> hits(prog.source.size(), 0);
    for (const auto& tc : prog.threads) {
        for (BlockId b : tc.owned) {
            if (b >= hits.size())
                return false;
            ++hits[b];
        }
    }
    return std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; });
}

} // namespace mangle
