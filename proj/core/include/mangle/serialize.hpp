#pragma once

// Versioned JSON documents for obfuscated programs, traces and reports.

#include "mangle/obfuscator.hpp"
#include "mangle/runtime.hpp"
#include "mangle/verifier.hpp"

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mangle {

inline constexpr int kFormatVersion = 1;

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string serialize_program(const ObfuscatedProgram& prog);

/// Rebuilds the program from `source` and the stored assignment, then
/// checks that the stored thread data agrees with what the source implies.
ObfuscatedProgram deserialize_program(std::string_view text, const Cfg& source);

std::string serialize_trace(const ExecutionTrace& trace);
ExecutionTrace deserialize_trace(std::string_view text);

std::string serialize_report(const VerifyReport& report,
                             const std::vector<MutationResult>& mutations = {});

std::string serialize_benchmark(const BenchmarkReport& report);

} // namespace mangle
