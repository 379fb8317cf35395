#include "cli.hpp"

#include "mangle/obfuscator.hpp"
#include "mangle/runtime.hpp"
#include "mangle/serialize.hpp"
#include "mangle/textfmt.hpp"
#include "mangle/verifier.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace mangle::cli {

namespace fs = std::filesystem;

namespace {

struct LoadError {
    std::string message;
};

std::string read_file(const std::string& path)
{
    if (!fs::exists(path))
        throw LoadError{"file not found: " + path};
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw LoadError{"cannot open " + path};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw LoadError{"cannot write " + path.string()};
    out << text;
}

Cfg load_cfg(const std::string& path)
{
    const std::string text = read_file(path);
    try {
        return parse(text);
    } catch (const ParseError& e) {
        const char* kind = e.kind() == ParseErrorKind::Semantic ? "semantic error" : "syntax error";
        if (e.kind() == ParseErrorKind::Lexical)
            kind = "lexical error";
        throw LoadError{fmt::format("{}:{}:{}: {}: {}", path, e.span().line, e.span().column, kind,
                                    e.detail())};
    }
}

ObfuscatedProgram load_program(const std::string& path, const Cfg& source)
{
    const std::string text = read_file(path);
    try {
        return deserialize_program(text, source);
    } catch (const FormatError& e) {
        throw LoadError{path + ": " + e.what()};
    }
}

Inputs parse_inputs(const std::vector<std::string>& pairs)
{
    Inputs inputs;
    for (const auto& p : pairs) {
        const auto eq = p.find('=');
        const std::string name = p.substr(0, eq);
        Value v = 0;
        bool good = eq != std::string::npos && is_identifier(name);
        if (good) {
            const char* first = p.data() + eq + 1;
            const char* last = p.data() + p.size();
            auto [ptr, ec] = std::from_chars(first, last, v);
            good = ec == std::errc{} && ptr == last && first != last;
        }
        if (!good)
            throw LoadError{"bad --set '" + p + "', expected name=integer"};
        inputs[name] = v;
    }
    return inputs;
}

int status_exit(TraceStatus s)
{
    switch (s) {
    case TraceStatus::Completed: return kOk;
    case TraceStatus::Trapped: return kFailure;
    case TraceStatus::Deadlock: return kDeadlock;
    }
    return kFailure;
}

struct ObfuscateArgs {
    std::string input;
    ThreadIndex m = 4;
    std::uint64_t seed = 0;
    std::string out;
    std::size_t stride = kDefaultGuardStride;
};

int cmd_obfuscate(const ObfuscateArgs& a, std::ostream& out)
{
    if (a.m < 1)
        throw LoadError{"-m must be at least 1"};
    const Cfg cfg = load_cfg(a.input);
    const ObfuscatedProgram prog = obfuscate(cfg, a.m, a.seed, a.stride);
    const std::string path =
        a.out.empty() ? fs::path(a.input).replace_extension(".obf").string() : a.out;
    write_file(path, serialize_program(prog));
    fmt::print(out, "{}: n={} m={} seed={} stride={}\n", cfg.name, cfg.size(), a.m, a.seed,
               a.stride);
    fmt::print(out, "space={} (m^n distinct assignments)\n",
               count_combinations(a.m, cfg.size()).str());
    for (const auto& tc : prog.threads)
        fmt::print(out, "  thread {}: {} blocks, {} wait sets\n", tc.thread_index,
                   tc.owned.size(), tc.waits.size());
    fmt::print(out, "wrote {}\n", path);
    return kOk;
}

struct RunArgs {
    std::string input;
    std::string obf;
    std::string mode = "seq";
    std::string schedule = "rr";
    std::uint64_t schedule_seed = 0;
    std::vector<std::string> inputs;
    std::string trace_out;
    std::uint64_t budget = kDefaultStepBudget;
};

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err)
{
    const Cfg cfg = load_cfg(a.input);
    const Inputs inputs = parse_inputs(a.inputs);
    if (a.mode != "seq" && a.obf.empty())
        throw LoadError{"--mode " + a.mode + " requires --obf"};

    ExecutionTrace trace;
    RunStats stats;
    const auto start = std::chrono::steady_clock::now();
    if (a.mode == "seq") {
        trace = run_sequential(cfg, inputs, a.budget);
    } else {
        const ObfuscatedProgram prog = load_program(a.obf, cfg);
        RunOptions opts;
        opts.concurrent = a.mode == "conc";
        opts.schedule = a.schedule == "rr" ? Schedule::round_robin(a.budget)
                                           : Schedule::random(a.schedule_seed, a.budget);
        RunResult r = execute_obfuscated(prog, inputs, opts);
        trace = std::move(r.trace);
        stats = r.stats;
    }
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    for (Value v : trace.output)
        fmt::print(out, "{}\n", v);
    if (!a.trace_out.empty())
        write_file(a.trace_out, serialize_trace(trace));
    fmt::print(err, "status: {}{}\n", to_string(trace.status),
               trace.reason.empty() ? "" : " (" + trace.reason + ")");
    fmt::print(err, "mode: {}, blocks: {}, micro-steps: {}, time: {:.3f} ms\n", a.mode,
               trace.records.size(), stats.micro_steps, ms);
    return status_exit(trace.status);
}

struct VerifyArgs {
    std::vector<std::string> inputs;
    std::vector<ThreadIndex> m_values{1, 2, 3, 4};
    std::size_t partition_seeds = 25;
    std::size_t schedule_seeds = 10;
    std::uint64_t seed = 0;
    std::size_t trials = 1000;
    std::size_t max_n = 12;
    std::size_t subsets = 50;
    std::string report = "verify_report.json";
    std::string mutate = "none";
    std::size_t stride = kDefaultGuardStride;
};

int cmd_verify(const VerifyArgs& a, std::ostream& out)
{
    if (a.inputs.empty())
        throw LoadError{"empty corpus: pass at least one -i program"};
    VerifyConfig config;
    config.m_values = a.m_values;
    config.partition_seeds = a.partition_seeds;
    config.schedule_seeds = a.schedule_seeds;
    config.base_seed = a.seed;
    config.successor_trials = a.trials;
    config.max_oracle_n = a.max_n;
    config.subsets_per_block = a.subsets;
    config.stride = a.stride;
    const auto mutation = parse_mutation(a.mutate);
    if (!mutation)
        throw LoadError{"unknown mutation '" + a.mutate + "'"};
    config.mutation = *mutation;

    std::vector<Cfg> corpus;
    for (const auto& path : a.inputs)
        corpus.push_back(load_cfg(path));

    VerifyReport report = check_successor_oracle(a.trials, a.max_n, a.seed, a.subsets);
    fmt::print(out, "successor sets: {} comparisons, {} mismatches\n", report.successor_comparisons,
               report.successor_mismatches);
    for (const Cfg& cfg : corpus) {
        const VerifyReport eq = check_equivalence(cfg, config);
        fmt::print(out, "{}: {} cases, {} failed ({} deadlocks, {} mutex violations)\n", cfg.name,
                   eq.total, eq.failed, eq.deadlocks, eq.mutex_violations);
        report.merge(eq);
    }

    std::vector<MutationResult> mutations;
    if (config.mutation == ProtocolMutation::None) {
        mutations = check_mutations(corpus, config);
        for (const auto& m : mutations) {
            fmt::print(out, "mutation {}: {}\n", to_string(m.mutation),
                       m.detected ? "detected (" + m.witness + ")" : "NOT detected");
            ++report.total;
            if (!m.detected)
                ++report.failed;
        }
    }

    write_file(a.report, serialize_report(report, mutations));
    fmt::print(out, "{}: {} checks, {} failed; report written to {}\n",
               report.ok() ? "PASS" : "FAIL", report.total, report.failed, a.report);
    return report.ok() ? kOk : kFailure;
}

struct DotArgs {
    std::string input;
    std::string obf;
    std::string out_dir = ".";
};

int cmd_dot(const DotArgs& a, std::ostream& out)
{
    const Cfg cfg = load_cfg(a.input);
    fs::create_directories(a.out_dir);
    const fs::path dir(a.out_dir);
    const fs::path original = dir / (cfg.name + ".dot");
    write_file(original, emit_dot_cfg(cfg));
    fmt::print(out, "{}\n", original.string());
    if (!a.obf.empty()) {
        const ObfuscatedProgram prog = load_program(a.obf, cfg);
        for (const auto& tc : prog.threads) {
            const fs::path p = dir / (tc.name + ".dot");
            write_file(p, emit_dot_thread(tc));
            fmt::print(out, "{}\n", p.string());
        }
    }
    return kOk;
}

struct BenchArgs {
    std::string input;
    ThreadIndex m = 4;
    std::uint64_t seed = 0;
    int repeats = 5;
    std::vector<std::string> inputs;
    bool scheduled = false;
    std::string json_out;
    std::size_t stride = kDefaultGuardStride;
};

int cmd_bench(const BenchArgs& a, std::ostream& out)
{
    if (a.m < 1)
        throw LoadError{"-m must be at least 1"};
    if (a.repeats < 1)
        throw LoadError{"--repeats must be at least 1"};
    const Cfg cfg = load_cfg(a.input);
    const Inputs inputs = parse_inputs(a.inputs);
    const ObfuscatedProgram prog = obfuscate(cfg, a.m, a.seed, a.stride);
    const BenchmarkReport r = benchmark(cfg, prog, inputs, a.repeats, !a.scheduled);

    auto us = [](double s) { return s * 1e6; };
    fmt::print(out, "{}: m={} seed={} repeats={} mode={}\n", cfg.name, a.m, a.seed, a.repeats,
               a.scheduled ? "scheduled" : "concurrent");
    std::string seq_samples, obf_samples;
    for (std::size_t i = 0; i < r.seq_seconds.size(); ++i) {
        seq_samples += fmt::format("{}{:.1f}", i ? " " : "", us(r.seq_seconds[i]));
        obf_samples += fmt::format("{}{:.1f}", i ? " " : "", us(r.obf_seconds[i]));
    }
    fmt::print(out, "sequential  samples(us): {}\n", seq_samples);
    fmt::print(out, "obfuscated  samples(us): {}\n", obf_samples);
    fmt::print(out, "sequential  median: {:.1f} us\n", us(r.seq_median));
    fmt::print(out, "obfuscated  median: {:.1f} us\n", us(r.obf_median));
    fmt::print(out, "slowdown: {:.1f}x (expected band on multicore hardware: 10x-100x; "
                    "reported, not asserted)\n",
               r.slowdown);
    if (!r.outputs_matched)
        fmt::print(out, "warning: obfuscated output differed from the sequential run\n");
    if (!a.json_out.empty())
        write_file(a.json_out, serialize_benchmark(r));
    return r.outputs_matched ? kOk : kFailure;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Thread-based control-flow obfuscation: split a CFG across cooperating threads"};
    app.name("mangle");
    app.require_subcommand(1);

    ObfuscateArgs oa;
    auto* obf = app.add_subcommand("obfuscate", "Partition a program over m threads");
    obf->add_option("-i,--input", oa.input, "Source .cfg file")->required();
    obf->add_option("-m,--threads", oa.m, "Thread count")->capture_default_str();
    obf->add_option("--seed", oa.seed, "Partition seed")->capture_default_str();
    obf->add_option("-o,--out", oa.out, "Output file (default: input with .obf extension)");
    obf->add_option("--stride", oa.stride, "Guard cell stride in bytes")
        ->envname("GUARD_STRIDE")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    RunArgs ra;
    auto* runc = app.add_subcommand("run", "Execute a program");
    runc->add_option("-i,--input", ra.input, "Source .cfg file")->required();
    runc->add_option("--obf", ra.obf, "Obfuscated program (required for sched/conc)");
    runc->add_option("--mode", ra.mode, "seq, sched or conc")
        ->check(CLI::IsMember({"seq", "sched", "conc"}))
        ->capture_default_str();
    runc->add_option("--schedule", ra.schedule, "rr or random (sched mode)")
        ->check(CLI::IsMember({"rr", "random"}))
        ->capture_default_str();
    runc->add_option("--schedule-seed", ra.schedule_seed, "Seed for the random schedule")
        ->capture_default_str();
    runc->add_option("--set", ra.inputs, "Initial variable value, name=value");
    runc->add_option("--trace", ra.trace_out, "Write the execution trace here");
    runc->add_option("--budget", ra.budget, "Micro-step budget before declaring deadlock")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    VerifyArgs va;
    auto* ver = app.add_subcommand("verify", "Differential and property checks");
    ver->add_option("-i,--input", va.inputs, "Corpus programs");
    ver->add_option("-m,--threads", va.m_values, "Thread counts")
        ->delimiter(',')
        ->capture_default_str();
    ver->add_option("--partition-seeds", va.partition_seeds)->capture_default_str();
    ver->add_option("--schedule-seeds", va.schedule_seeds)->capture_default_str();
    ver->add_option("--seed", va.seed, "Base seed")->capture_default_str();
    ver->add_option("--trials", va.trials, "Random CFGs for the successor check")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    ver->add_option("--max-n", va.max_n, "Largest random CFG")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    ver->add_option("--subsets", va.subsets, "Random subsets per block")->capture_default_str();
    ver->add_option("--report", va.report, "Report path")->capture_default_str();
    ver->add_option("--mutate", va.mutate, "Inject a protocol mutation")
        ->check(CLI::IsMember({"none", "skip-clear", "skip-raise", "wrong-successor"}))
        ->capture_default_str();
    ver->add_option("--stride", va.stride)->envname("GUARD_STRIDE")->check(CLI::PositiveNumber);

    DotArgs da;
    auto* dot = app.add_subcommand("dot", "Render CFGs as Graphviz files");
    dot->add_option("-i,--input", da.input, "Source .cfg file")->required();
    dot->add_option("--obf", da.obf, "Obfuscated program; adds one file per thread");
    dot->add_option("-o,--out-dir", da.out_dir, "Output directory")->capture_default_str();

    std::uint64_t count_m = 4, count_n = 16;
    auto* cnt = app.add_subcommand("count", "Print m^n, the number of distinct partitions");
    cnt->add_option("-m,--threads", count_m)->capture_default_str();
    cnt->add_option("-n,--blocks", count_n)->capture_default_str();

    BenchArgs ba;
    auto* bench = app.add_subcommand("bench", "Time sequential against obfuscated execution");
    bench->add_option("-i,--input", ba.input, "Source .cfg file")->required();
    bench->add_option("-m,--threads", ba.m)->capture_default_str();
    bench->add_option("--seed", ba.seed)->capture_default_str();
    bench->add_option("--repeats", ba.repeats)->capture_default_str();
    bench->add_option("--set", ba.inputs, "Initial variable value, name=value");
    bench->add_flag("--scheduled", ba.scheduled, "Time the deterministic scheduler instead");
    bench->add_option("--json", ba.json_out, "Also write the report as JSON");
    bench->add_option("--stride", ba.stride)->envname("GUARD_STRIDE")->check(CLI::PositiveNumber);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return kOk;
    } catch (const CLI::CallForAllHelp& e) {
        app.exit(e, out, err);
        return kOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kUsage;
    }

    try {
        if (*obf)
            return cmd_obfuscate(oa, out);
        if (*runc)
            return cmd_run(ra, out, err);
        if (*ver)
            return cmd_verify(va, out);
        if (*dot)
            return cmd_dot(da, out);
        if (*cnt) {
            if (count_m < 1)
                throw LoadError{"-m must be at least 1"};
            fmt::print(out, "{}\n", count_combinations(count_m, count_n).str());
            return kOk;
        }
        if (*bench)
            return cmd_bench(ba, out);
    } catch (const LoadError& e) {
        fmt::print(err, "error: {}\n", e.message);
        return kUsage;
    } catch (const UsageError& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kUsage;
    } catch (const std::exception& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kFailure;
    }
    return kUsage;
}

} // namespace mangle::cli
