#pragma once

// Textual `.cfg` format and Graphviz rendering.
//
//   func NAME {
//     block LABEL:
//       x = 42
//       y = x + x
//       print y
//       br y, LABEL, LABEL      # or: jump LABEL / halt
//   }
//
// One function per file. `#` starts a comment. Statements are separated by
// newlines; other whitespace is free. Blocks get ids in textual order and the
// first block is the entry.

#include "mangle/ir.hpp"
#include "mangle/obfuscator.hpp"

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mangle {

struct SourceSpan {
    std::size_t line = 1;
    std::size_t column = 1;
    bool operator==(const SourceSpan&) const = default;
};

enum class ParseErrorKind { Lexical, Syntax, Semantic };

class ParseError : public std::runtime_error {
public:
    ParseError(ParseErrorKind kind, SourceSpan span, const std::string& message);

    ParseErrorKind kind() const noexcept { return kind_; }
    const SourceSpan& span() const noexcept { return span_; }
    /// Message without the "line:col:" prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    ParseErrorKind kind_;
    SourceSpan span_;
    std::string detail_;
};

Cfg parse(std::string_view text);

/// Canonical source text; parse(print(c)) == c for every valid c.
std::string print(const Cfg& cfg);

std::string emit_dot_cfg(const Cfg& cfg);
std::string emit_dot_thread(const ThreadCfg& tcfg);

} // namespace mangle
