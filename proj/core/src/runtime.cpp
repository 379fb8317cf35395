#include "mangle/runtime.hpp"

#include "mangle/rng.hpp"

#include <algorithm>
#include <limits>
#include <new>
#include <thread>

namespace mangle {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

using Slot = std::uint32_t;

struct CompiledInstr {
    enum class Kind { Const, Bin, Print } kind = Kind::Const;
    BinaryOp op = BinaryOp::Add;
    Slot dest = 0;
    Slot lhs = 0;
    Slot rhs = 0;
    Value value = 0;
};

struct CompiledBlock {
    std::vector<CompiledInstr> instrs;
    enum class Term { Jump, Branch, Halt } term = Term::Halt;
    Slot cond = 0;
    BlockId if_true = 0;
    BlockId if_false = 0;
};

// Variable names resolved to dense slots so both stores are flat arrays.
struct CompiledCfg {
    std::vector<CompiledBlock> blocks;
    std::map<std::string, Slot> slots;
    BlockId entry = 0;

    explicit CompiledCfg(const Cfg& cfg) : entry(cfg.entry)
    {
        auto slot = [&](const std::string& v) {
            return slots.emplace(v, static_cast<Slot>(slots.size())).first->second;
        };
        blocks.reserve(cfg.size());
        for (const auto& bb : cfg.blocks) {
            CompiledBlock cb;
            for (const auto& ins : bb.instrs) {
                CompiledInstr ci;
                std::visit(overloaded{
                               [&](const ConstAssign& c) {
                                   ci.kind = CompiledInstr::Kind::Const;
                                   ci.dest = slot(c.dest);
                                   ci.value = c.value;
                               },
                               [&](const BinOp& o) {
                                   ci.kind = CompiledInstr::Kind::Bin;
                                   ci.op = o.op;
                                   ci.lhs = slot(o.lhs);
                                   ci.rhs = slot(o.rhs);
                                   ci.dest = slot(o.dest);
                               },
                               [&](const Print& p) {
                                   ci.kind = CompiledInstr::Kind::Print;
                                   ci.lhs = slot(p.src);
                               },
                           },
                           ins);
                cb.instrs.push_back(ci);
            }
            std::visit(overloaded{
                           [&](const Jump& j) {
                               cb.term = CompiledBlock::Term::Jump;
                               cb.if_true = j.target;
                           },
                           [&](const Branch& b) {
                               cb.term = CompiledBlock::Term::Branch;
                               cb.cond = slot(b.cond);
                               cb.if_true = b.if_true;
                               cb.if_false = b.if_false;
                           },
                           [&](const Halt&) { cb.term = CompiledBlock::Term::Halt; },
                       },
                       bb.term);
            blocks.push_back(std::move(cb));
        }
    }

    std::size_t var_count() const noexcept { return slots.size(); }
};

class PlainStore {
public:
    PlainStore(const CompiledCfg& c, const Inputs& inputs) : values_(c.var_count(), 0)
    {
        for (const auto& [name, v] : inputs)
            if (auto it = c.slots.find(name); it != c.slots.end())
                values_[it->second] = v;
    }
    Value load(Slot s) const noexcept { return values_[s]; }
    void store(Slot s, Value v) noexcept { values_[s] = v; }

private:
    std::vector<Value> values_;
};

// Shared variables for concurrent mode; every access is sequentially
// consistent.
class AtomicStore {
public:
    AtomicStore(const CompiledCfg& c, const Inputs& inputs)
        : size_(c.var_count()), values_(std::make_unique<std::atomic<Value>[]>(size_))
    {
        for (std::size_t i = 0; i < size_; ++i)
            values_[i].store(0);
        for (const auto& [name, v] : inputs)
            if (auto it = c.slots.find(name); it != c.slots.end())
                values_[it->second].store(v);
    }
    Value load(Slot s) const noexcept { return values_[s].load(); }
    void store(Slot s, Value v) noexcept { values_[s].store(v); }

private:
    std::size_t size_;
    std::unique_ptr<std::atomic<Value>[]> values_;
};

struct BlockOutcome {
    enum class Kind { Next, Halted, Trapped } kind = Kind::Halted;
    BlockId next = 0;
    // For a two-way branch, the target not taken.
    std::optional<BlockId> other;
    std::string reason;
};

template <class Store>
BlockOutcome exec_block(const CompiledCfg& c, BlockId b, Store& store, std::vector<Value>& output)
{
    const CompiledBlock& cb = c.blocks[b];
    for (const auto& ci : cb.instrs) {
        switch (ci.kind) {
        case CompiledInstr::Kind::Const: store.store(ci.dest, ci.value); break;
        case CompiledInstr::Kind::Bin: {
            const auto r = evaluate(ci.op, store.load(ci.lhs), store.load(ci.rhs));
            if (!r) {
                BlockOutcome out;
                out.kind = BlockOutcome::Kind::Trapped;
                out.reason = std::string(ci.op == BinaryOp::Div ? "division" : "remainder") +
                             " by zero in block " + std::to_string(b);
                return out;
            }
            store.store(ci.dest, *r);
            break;
        }
        case CompiledInstr::Kind::Print: output.push_back(store.load(ci.lhs)); break;
        }
    }
    BlockOutcome out;
    switch (cb.term) {
    case CompiledBlock::Term::Jump:
        out.kind = BlockOutcome::Kind::Next;
        out.next = cb.if_true;
        break;
    case CompiledBlock::Term::Branch: {
        const bool taken = store.load(cb.cond) != 0;
        out.kind = BlockOutcome::Kind::Next;
        out.next = taken ? cb.if_true : cb.if_false;
        if (cb.if_true != cb.if_false)
            out.other = taken ? cb.if_false : cb.if_true;
        break;
    }
    case CompiledBlock::Term::Halt: out.kind = BlockOutcome::Kind::Halted; break;
    }
    return out;
}

constexpr std::size_t kRetire = std::numeric_limits<std::size_t>::max();

// Per-thread polling tables derived from a ThreadCfg.
struct WorkerPlan {
    ThreadIndex index = 0;
    std::vector<std::vector<BlockId>> waits;
    std::size_t entry_wait = 0;
    std::vector<std::size_t> after; // by block id: wait index or kRetire

    WorkerPlan(const ThreadCfg& tc, std::size_t n) : index(tc.thread_index), after(n, kRetire)
    {
        for (const auto& w : tc.waits)
            waits.emplace_back(w.flags.begin(), w.flags.end());
        entry_wait = tc.wait_index(tc.entry_wait);
        for (const auto& [b, w] : tc.per_block_wait)
            after[b] = w.flags.empty() ? kRetire : tc.wait_index(w);
    }
};

BlockId mutated_target(const BlockOutcome& out, std::size_t n)
{
    if (out.other)
        return *out.other;
    return static_cast<BlockId>((out.next + 1) % n);
}

class ScheduledRun {
public:
    ScheduledRun(const ObfuscatedProgram& prog, const Inputs& inputs, const RunOptions& opts)
        : prog_(prog), opts_(opts), code_(prog.source), store_(code_, inputs),
          guards_(prog.guard_layout)
    {
        for (const auto& tc : prog.threads)
            plans_.emplace_back(tc, prog.source.size());
    }

    RunResult run()
    {
        const auto start = std::chrono::steady_clock::now();
        raise(code_.entry);

        struct Worker {
            enum class Phase { Waiting, Ready, Exited } phase = Phase::Waiting;
            std::size_t wait = 0;
            BlockId ready = 0;
        };
        std::vector<Worker> workers(plans_.size());
        std::vector<std::size_t> live;
        for (std::size_t w = 0; w < workers.size(); ++w) {
            workers[w].wait = plans_[w].entry_wait;
            live.push_back(w);
        }

        SplitMix64 rng(opts_.schedule.seed);
        std::size_t cursor = 0;
        while (!live.empty()) {
            if (result_.stats.micro_steps >= opts_.schedule.step_budget) {
                result_.trace.status = TraceStatus::Deadlock;
                result_.trace.reason = "step budget of " +
                                       std::to_string(opts_.schedule.step_budget) +
                                       " micro-steps exhausted";
                break;
            }
            const std::size_t pick = opts_.schedule.mode == Schedule::Mode::RoundRobin
                                         ? cursor
                                         : static_cast<std::size_t>(rng.below(live.size()));
            const std::size_t w = live[pick];
            Worker& worker = workers[w];
            ++result_.stats.micro_steps;

            if (worker.phase == Worker::Phase::Waiting) {
                bool found = false;
                for (BlockId b : plans_[w].waits[worker.wait]) {
                    if (guards_.raised(b)) {
                        worker.phase = Worker::Phase::Ready;
                        worker.ready = b;
                        found = true;
                        break;
                    }
                }
                if (!found && guards_.raised(guards_.done_slot()))
                    worker.phase = Worker::Phase::Exited;
            } else {
                const std::size_t next = execute(static_cast<ThreadIndex>(w), worker.ready);
                if (next == kRetire) {
                    worker.phase = Worker::Phase::Exited;
                } else {
                    worker.phase = Worker::Phase::Waiting;
                    worker.wait = next;
                }
            }

            if (raised_ > 1)
                ++result_.stats.mutex_violations;
            result_.stats.max_raised_flags = std::max(result_.stats.max_raised_flags, raised_);

            if (worker.phase == Worker::Phase::Exited) {
                live.erase(live.begin() + static_cast<std::ptrdiff_t>(pick));
                if (cursor >= live.size())
                    cursor = 0;
            } else if (opts_.schedule.mode == Schedule::Mode::RoundRobin) {
                cursor = (cursor + 1) % live.size();
            }
        }
        result_.stats.elapsed = std::chrono::steady_clock::now() - start;
        return std::move(result_);
    }

private:
    void raise(BlockId b)
    {
        if (!guards_.raised(b))
            ++raised_;
        guards_.raise(b);
    }

    void clear(BlockId b)
    {
        if (guards_.raised(b))
            --raised_;
        guards_.clear(b);
    }

    std::size_t execute(ThreadIndex w, BlockId b)
    {
        auto& trace = result_.trace;
        if (opts_.mutation != ProtocolMutation::SkipClear) {
            clear(b);
            if (prog_.partition.assign[b] != w)
                ++result_.stats.foreign_clears;
        }
        const BlockOutcome out = exec_block(code_, b, store_, trace.output);
        trace.records.push_back({trace.records.size(), w, b});
        switch (out.kind) {
        case BlockOutcome::Kind::Trapped:
            trace.status = TraceStatus::Trapped;
            trace.reason = out.reason;
            guards_.raise(guards_.done_slot());
            break;
        case BlockOutcome::Kind::Halted: guards_.raise(guards_.done_slot()); break;
        case BlockOutcome::Kind::Next:
            switch (opts_.mutation) {
            case ProtocolMutation::SkipRaise: break;
            case ProtocolMutation::WrongSuccessor:
                raise(mutated_target(out, code_.blocks.size()));
                break;
            default: raise(out.next); break;
            }
            break;
        }
        return plans_[w].after[b];
    }

    const ObfuscatedProgram& prog_;
    RunOptions opts_;
    CompiledCfg code_;
    PlainStore store_;
    GuardTable guards_;
    std::vector<WorkerPlan> plans_;
    std::size_t raised_ = 0;
    RunResult result_;
};

RunResult run_concurrent(const ObfuscatedProgram& prog, const Inputs& inputs,
                         const RunOptions& opts)
{
    const CompiledCfg code(prog.source);
    AtomicStore store(code, inputs);
    GuardTable guards(prog.guard_layout);
    std::vector<WorkerPlan> plans;
    for (const auto& tc : prog.threads)
        plans.emplace_back(tc, prog.source.size());

    RunResult result;
    auto& trace = result.trace;
    std::atomic<std::uint64_t> progress{0};
    std::atomic<bool> stalled{false};
    std::atomic<std::uint64_t> polls_total{0};
    const bool oversubscribed = plans.size() > std::max(1u, std::thread::hardware_concurrency());

    auto worker_main = [&](std::size_t w) {
        const WorkerPlan& plan = plans[w];
        std::size_t wait = plan.entry_wait;
        std::uint64_t polls = 0;
        for (;;) {
            std::optional<BlockId> found;
            std::uint64_t seen_progress = progress.load();
            auto last_change = std::chrono::steady_clock::now();
            while (!found) {
                ++polls;
                for (BlockId b : plan.waits[wait]) {
                    if (guards.raised(b)) {
                        found = b;
                        break;
                    }
                }
                if (found)
                    break;
                if (guards.raised(guards.done_slot())) {
                    polls_total.fetch_add(polls);
                    return;
                }
                if ((polls & 1023) == 0) {
                    const auto now = std::chrono::steady_clock::now();
                    if (const auto p = progress.load(); p != seen_progress) {
                        seen_progress = p;
                        last_change = now;
                    } else if (now - last_change > opts.stall_timeout) {
                        stalled.store(true);
                        guards.raise(guards.done_slot());
                        polls_total.fetch_add(polls);
                        return;
                    }
                }
                if (oversubscribed)
                    std::this_thread::yield();
            }

            const BlockId b = *found;
            guards.clear(b);
            // Only the active worker touches the trace; the flag hand-off
            // orders successive writers.
            const BlockOutcome out = exec_block(code, b, store, trace.output);
            trace.records.push_back({trace.records.size(), plan.index, b});
            progress.fetch_add(1);
            switch (out.kind) {
            case BlockOutcome::Kind::Trapped:
                trace.status = TraceStatus::Trapped;
                trace.reason = out.reason;
                guards.raise(guards.done_slot());
                break;
            case BlockOutcome::Kind::Halted: guards.raise(guards.done_slot()); break;
            case BlockOutcome::Kind::Next: guards.raise(out.next); break;
            }
            const std::size_t next = plan.after[b];
            if (next == kRetire) {
                polls_total.fetch_add(polls);
                return;
            }
            wait = next;
        }
    };

    const auto start = std::chrono::steady_clock::now();
    guards.raise(code.entry);
    {
        std::vector<std::jthread> threads;
        threads.reserve(plans.size());
        for (std::size_t w = 0; w < plans.size(); ++w)
            threads.emplace_back(worker_main, w);
    }
    result.stats.elapsed = std::chrono::steady_clock::now() - start;
    result.stats.micro_steps = polls_total.load() + trace.records.size();
    if (stalled.load()) {
        trace.status = TraceStatus::Deadlock;
        trace.reason = "no block ran for " + std::to_string(opts.stall_timeout.count()) + " ms";
    }
    return result;
}

} // namespace

std::string_view to_string(TraceStatus s)
{
    switch (s) {
    case TraceStatus::Completed: return "completed";
    case TraceStatus::Trapped: return "trapped";
    case TraceStatus::Deadlock: return "deadlock";
    }
    return "?";
}

std::string_view to_string(ProtocolMutation m)
{
    switch (m) {
    case ProtocolMutation::None: return "none";
    case ProtocolMutation::SkipClear: return "skip-clear";
    case ProtocolMutation::SkipRaise: return "skip-raise";
    case ProtocolMutation::WrongSuccessor: return "wrong-successor";
    }
    return "?";
}

std::optional<ProtocolMutation> parse_mutation(std::string_view text)
{
    for (auto m : {ProtocolMutation::None, ProtocolMutation::SkipClear, ProtocolMutation::SkipRaise,
                   ProtocolMutation::WrongSuccessor})
        if (to_string(m) == text)
            return m;
    return std::nullopt;
}

std::string Schedule::describe() const
{
    if (mode == Mode::RoundRobin)
        return "round-robin";
    return "random(" + std::to_string(seed) + ")";
}

std::vector<BlockId> ExecutionTrace::block_sequence() const
{
    std::vector<BlockId> out;
    out.reserve(records.size());
    for (const auto& r : records)
        out.push_back(r.block);
    return out;
}

void GuardTable::AlignedFree::operator()(std::byte* p) const noexcept
{
    ::operator delete[](p, std::align_val_t{64});
}

GuardTable::GuardTable(const GuardLayout& layout) : layout_(layout)
{
    if (layout_.stride < sizeof(std::atomic<std::uint8_t>) || layout_.slots < 1)
        throw UsageError("guard layout needs stride >= 1 and at least one slot");
    storage_.reset(static_cast<std::byte*>(::operator new[](layout_.bytes(), std::align_val_t{64})));
    for (std::size_t s = 0; s < layout_.slots; ++s)
        new (storage_.get() + layout_.offset(s)) std::atomic<std::uint8_t>(0);
}

std::atomic<std::uint8_t>& GuardTable::cell(std::size_t slot) const noexcept
{
    return *std::launder(reinterpret_cast<std::atomic<std::uint8_t>*>(storage_.get() + layout_.offset(slot)));
}

bool GuardTable::raised(std::size_t slot) const noexcept { return cell(slot).load() != 0; }
void GuardTable::raise(std::size_t slot) noexcept { cell(slot).store(1); }
void GuardTable::clear(std::size_t slot) noexcept { cell(slot).store(0); }

std::size_t GuardTable::raised_data_flags() const noexcept
{
    std::size_t n = 0;
    for (std::size_t s = 0; s < data_slots(); ++s)
        n += raised(s) ? 1 : 0;
    return n;
}

namespace {

void require_valid(const Cfg& cfg)
{
    if (const auto report = validate(cfg); !report.ok())
        throw UsageError("cannot run invalid cfg: " + report.errors.front().message);
}

ExecutionTrace run_sequential_unchecked(const Cfg& cfg, const Inputs& inputs,
                                        std::uint64_t block_budget)
{
    const CompiledCfg code(cfg);
    PlainStore store(code, inputs);
    ExecutionTrace trace;
    BlockId b = code.entry;
    for (;;) {
        if (trace.records.size() >= block_budget) {
            trace.status = TraceStatus::Deadlock;
            trace.reason = "block budget of " + std::to_string(block_budget) + " exhausted";
            return trace;
        }
        const BlockOutcome out = exec_block(code, b, store, trace.output);
        trace.records.push_back({trace.records.size(), std::nullopt, b});
        switch (out.kind) {
        case BlockOutcome::Kind::Trapped:
            trace.status = TraceStatus::Trapped;
            trace.reason = out.reason;
            return trace;
        case BlockOutcome::Kind::Halted: return trace;
        case BlockOutcome::Kind::Next: b = out.next; break;
        }
    }
}

} // namespace

ExecutionTrace run_sequential(const Cfg& cfg, const Inputs& inputs, std::uint64_t block_budget)
{
    require_valid(cfg);
    return run_sequential_unchecked(cfg, inputs, block_budget);
}

RunResult execute_obfuscated(const ObfuscatedProgram& prog, const Inputs& inputs,
                             const RunOptions& options)
{
    if (prog.threads.empty() || prog.guard_layout.slots != prog.source.size() + 1)
        throw UsageError("obfuscated program is inconsistent with its source cfg");
    if (options.schedule.step_budget < 1)
        throw UsageError("step budget must be at least 1");
    if (options.concurrent) {
        if (options.mutation != ProtocolMutation::None)
            throw UsageError("protocol mutations are only available in scheduled mode");
        return run_concurrent(prog, inputs, options);
    }
    return ScheduledRun(prog, inputs, options).run();
}

ExecutionTrace run_obfuscated(const ObfuscatedProgram& prog, const Inputs& inputs,
                              const Schedule& schedule, bool concurrent)
{
    RunOptions opts;
    opts.schedule = schedule;
    opts.concurrent = concurrent;
    return execute_obfuscated(prog, inputs, opts).trace;
}

double median(std::vector<double> samples)
{
    if (samples.empty())
        return 0;
    std::sort(samples.begin(), samples.end());
    const std::size_t mid = samples.size() / 2;
    if (samples.size() % 2 == 1)
        return samples[mid];
    return (samples[mid - 1] + samples[mid]) / 2;
}

BenchmarkReport benchmark(const Cfg& cfg, const ObfuscatedProgram& prog, const Inputs& inputs,
                          int repeats, bool concurrent)
{
    if (repeats < 1)
        throw UsageError("repeats must be at least 1");
    using clock = std::chrono::steady_clock;
    auto seconds = [](clock::duration d) { return std::chrono::duration<double>(d).count(); };

    require_valid(cfg); // once, outside the timed region
    BenchmarkReport report;
    report.concurrent = concurrent;
    RunOptions opts;
    opts.concurrent = concurrent;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = clock::now();
        const ExecutionTrace seq = run_sequential_unchecked(cfg, inputs, kDefaultSequentialBudget);
        const auto t1 = clock::now();
        const ExecutionTrace obf = execute_obfuscated(prog, inputs, opts).trace;
        const auto t2 = clock::now();
        report.seq_seconds.push_back(seconds(t1 - t0));
        report.obf_seconds.push_back(seconds(t2 - t1));
        if (seq.output != obf.output || seq.status != obf.status)
            report.outputs_matched = false;
    }
    report.seq_median = median(report.seq_seconds);
    report.obf_median = median(report.obf_seconds);
    report.slowdown = report.seq_median > 0 ? report.obf_median / report.seq_median : 0;
    return report;
}

} // namespace mangle
