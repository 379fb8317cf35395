#include "mangle/serialize.hpp"

#include <nlohmann/json.hpp>

namespace mangle {

using nlohmann::json;

namespace {

json set_json(const BlockSet& s) { return json(std::vector<BlockId>(s.begin(), s.end())); }

BlockSet set_from(const json& j)
{
    BlockSet s;
    for (const auto& v : j)
        s.insert(v.get<BlockId>());
    return s;
}

void check_version(const json& j, std::string_view what)
{
    if (!j.is_object() || !j.contains("version"))
        throw FormatError(std::string(what) + ": missing version field");
    if (j.at("version").get<int>() != kFormatVersion)
        throw FormatError(std::string(what) + ": unsupported version " +
                          j.at("version").dump());
}

json parse_json(std::string_view text, std::string_view what)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string(what) + ": " + e.what());
    }
}

} // namespace

std::string serialize_program(const ObfuscatedProgram& prog)
{
    json threads = json::array();
    for (const auto& tc : prog.threads) {
        json per_block = json::array();
        for (const auto& [b, w] : tc.per_block_wait)
            per_block.push_back({{"block", b}, {"wait", set_json(w.flags)}});
        threads.push_back({{"thread", tc.thread_index},
                           {"owned", set_json(tc.owned)},
                           {"entry_wait", set_json(tc.entry_wait.flags)},
                           {"per_block_wait", std::move(per_block)}});
    }
    json j{{"version", kFormatVersion},
           {"source_name", prog.source.name},
           {"m", prog.partition.m},
           {"n", prog.source.size()},
           {"seed", prog.partition.seed},
           {"stride", prog.guard_layout.stride},
           {"prng", prog.prng},
           {"assign", prog.partition.assign},
           {"threads", std::move(threads)}};
    return j.dump(2) + "\n";
}

ObfuscatedProgram deserialize_program(std::string_view text, const Cfg& source)
{
    const json j = parse_json(text, "obfuscated program");
    check_version(j, "obfuscated program");
    try {
        if (j.at("source_name").get<std::string>() != source.name)
            throw FormatError("obfuscated program was built from '" +
                              j.at("source_name").get<std::string>() + "', not '" + source.name +
                              "'");
        if (j.at("n").get<std::size_t>() != source.size())
            throw FormatError("obfuscated program expects " + j.at("n").dump() +
                              " blocks, source has " + std::to_string(source.size()));
        if (j.contains("prng") && j.at("prng").get<std::string>() != SplitMix64::name)
            throw FormatError("unknown prng '" + j.at("prng").get<std::string>() + "'");

        Partition p;
        p.m = j.at("m").get<ThreadIndex>();
        p.seed = j.at("seed").get<std::uint64_t>();
        p.assign = j.at("assign").get<std::vector<ThreadIndex>>();
        if (p.assign.size() != source.size())
            throw FormatError("assign[] length does not match n");

        ObfuscatedProgram prog;
        try {
            prog = obfuscate_with(source, p, j.at("stride").get<std::size_t>());
        } catch (const UsageError& e) {
            throw FormatError(std::string("obfuscated program rejected: ") + e.what());
        }

        const json& threads = j.at("threads");
        if (threads.size() != prog.threads.size())
            throw FormatError("expected " + std::to_string(prog.threads.size()) + " threads");
        for (std::size_t t = 0; t < threads.size(); ++t) {
            const json& jt = threads[t];
            const ThreadCfg& tc = prog.threads[t];
            std::map<BlockId, WaitSet> per_block;
            for (const auto& e : jt.at("per_block_wait"))
                per_block[e.at("block").get<BlockId>()] = WaitSet{set_from(e.at("wait"))};
            if (jt.at("thread").get<ThreadIndex>() != tc.thread_index ||
                set_from(jt.at("owned")) != tc.owned ||
                set_from(jt.at("entry_wait")) != tc.entry_wait.flags ||
                per_block != tc.per_block_wait)
                throw FormatError("thread " + std::to_string(t) +
                                  " does not match the source cfg and assignment");
        }
        return prog;
    } catch (const json::exception& e) {
        throw FormatError(std::string("obfuscated program: ") + e.what());
    }
}

std::string serialize_trace(const ExecutionTrace& trace)
{
    json records = json::array();
    for (const auto& r : trace.records) {
        json thread = r.thread ? json(*r.thread) : json("seq");
        records.push_back({{"step", r.step}, {"thread", std::move(thread)}, {"block", r.block}});
    }
    json j{{"version", kFormatVersion},
           {"records", std::move(records)},
           {"output", trace.output},
           {"status", std::string(to_string(trace.status))}};
    if (!trace.reason.empty())
        j["reason"] = trace.reason;
    return j.dump(2) + "\n";
}

ExecutionTrace deserialize_trace(std::string_view text)
{
    const json j = parse_json(text, "trace");
    check_version(j, "trace");
    try {
        ExecutionTrace trace;
        for (const auto& r : j.at("records")) {
            TraceRecord rec;
            rec.step = r.at("step").get<std::uint64_t>();
            rec.block = r.at("block").get<BlockId>();
            if (r.at("thread").is_number())
                rec.thread = r.at("thread").get<ThreadIndex>();
            else if (r.at("thread").get<std::string>() != "seq")
                throw FormatError("trace: bad thread field " + r.at("thread").dump());
            trace.records.push_back(rec);
        }
        trace.output = j.at("output").get<std::vector<Value>>();
        const auto status = j.at("status").get<std::string>();
        if (status == "completed")
            trace.status = TraceStatus::Completed;
        else if (status == "trapped")
            trace.status = TraceStatus::Trapped;
        else if (status == "deadlock")
            trace.status = TraceStatus::Deadlock;
        else
            throw FormatError("trace: unknown status '" + status + "'");
        trace.reason = j.value("reason", "");
        return trace;
    } catch (const json::exception& e) {
        throw FormatError(std::string("trace: ") + e.what());
    }
}

std::string serialize_report(const VerifyReport& report, const std::vector<MutationResult>& mutations)
{
    json cases = json::array();
    for (const auto& c : report.cases) {
        json jc{{"program", c.program},
                {"m", c.m},
                {"partition_seed", c.partition_seed},
                {"schedule", c.schedule},
                {"passed", c.passed}};
        if (!c.divergence.empty())
            jc["divergence"] = c.divergence;
        cases.push_back(std::move(jc));
    }
    json muts = json::array();
    for (const auto& m : mutations)
        muts.push_back({{"mutation", std::string(to_string(m.mutation))},
                        {"detected", m.detected},
                        {"witness", m.witness}});
    json j{{"version", kFormatVersion},
           {"ok", report.ok()},
           {"total", report.total},
           {"failed", report.failed},
           {"successor_comparisons", report.successor_comparisons},
           {"successor_mismatches", report.successor_mismatches},
           {"mutex_violations", report.mutex_violations},
           {"bijection_violations", report.bijection_violations},
           {"deadlocks", report.deadlocks},
           {"divergences", report.divergences},
           {"partitions_checked", report.partitions_checked},
           {"micro_steps", report.micro_steps},
           {"seconds", report.seconds},
           {"mutations", std::move(muts)},
           {"cases", std::move(cases)}};
    return j.dump(2) + "\n";
}

std::string serialize_benchmark(const BenchmarkReport& report)
{
    json j{{"version", kFormatVersion},
           {"mode", report.concurrent ? "concurrent" : "scheduled"},
           {"seq_seconds", report.seq_seconds},
           {"obf_seconds", report.obf_seconds},
           {"seq_median", report.seq_median},
           {"obf_median", report.obf_median},
           {"slowdown", report.slowdown},
           {"outputs_matched", report.outputs_matched},
           {"expected_slowdown_band", "10x-100x"}};
    return j.dump(2) + "\n";
}

} // namespace mangle
