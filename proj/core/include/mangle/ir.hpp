#pragma once

// Toy intermediate representation: integer-only basic blocks with a single
// terminator each. A Cfg is one function; block ids are dense and 0-based.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mangle {

using BlockId = std::uint32_t;
using ThreadIndex = std::uint32_t;
using Value = std::int64_t;
using BlockSet = std::set<BlockId>;

/// Raised when an operation is called with arguments that violate its
/// precondition (bad block id, thread count of zero, ...).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class BinaryOp { Add, Sub, Mul, Div, Rem, Lt, Le, Eq, Ne };

std::string_view to_string(BinaryOp op);
std::optional<BinaryOp> parse_binary_op(std::string_view text);

/// Applies `op` with 64-bit wrapping semantics. Comparisons yield 0 or 1.
/// Returns nullopt when dividing or taking the remainder by zero.
std::optional<Value> evaluate(BinaryOp op, Value lhs, Value rhs);

struct ConstAssign {
    std::string dest;
    Value value = 0;
    bool operator==(const ConstAssign&) const = default;
};

struct BinOp {
    std::string dest;
    std::string lhs;
    BinaryOp op = BinaryOp::Add;
    std::string rhs;
    bool operator==(const BinOp&) const = default;
};

struct Print {
    std::string src;
    bool operator==(const Print&) const = default;
};

using Instr = std::variant<ConstAssign, BinOp, Print>;

struct Jump {
    BlockId target = 0;
    bool operator==(const Jump&) const = default;
};

struct Branch {
    std::string cond;
    BlockId if_true = 0;
    BlockId if_false = 0;
    bool operator==(const Branch&) const = default;
};

struct Halt {
    bool operator==(const Halt&) const = default;
};

using Terminator = std::variant<Jump, Branch, Halt>;

struct BasicBlock {
    BlockId id = 0;
    std::string label;
    std::vector<Instr> instrs;
    Terminator term = Halt{};
    bool operator==(const BasicBlock&) const = default;
};

struct Cfg {
    std::string name;
    std::vector<BasicBlock> blocks;
    BlockId entry = 0;

    std::size_t size() const noexcept { return blocks.size(); }
    bool contains(BlockId b) const noexcept { return b < blocks.size(); }

    /// The unique Halt block, or nullopt when there is none or several.
    std::optional<BlockId> exit() const;

    /// Throws UsageError for an out-of-range id.
    const BasicBlock& block(BlockId b) const;

    bool operator==(const Cfg&) const = default;
};

enum class ValidationErrorKind {
    Empty,
    BadEntry,
    IdMismatch,
    DuplicateLabel,
    BadIdentifier,
    DanglingEdge,
    MissingExit,
    MultipleExits,
    Unreachable,
};

struct ValidationError {
    ValidationErrorKind kind;
    std::optional<BlockId> block;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationError> errors;
    /// Non-fatal observations, e.g. the entry block being a loop target.
    std::vector<std::string> diagnostics;

    bool ok() const noexcept { return errors.empty(); }
};

ValidationReport validate(const Cfg& cfg);

/// Identifier rule for variable names: [A-Za-z_][A-Za-z0-9_]*.
bool is_identifier(std::string_view name) noexcept;

BlockSet successors(const Cfg& cfg, BlockId b);
BlockSet predecessors(const Cfg& cfg, BlockId b);

/// Blocks reachable from the entry, entry included.
BlockSet reachable_from_entry(const Cfg& cfg);

} // namespace mangle
