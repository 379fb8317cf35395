#include "mangle/ir.hpp"

#include <limits>
#include <map>

namespace mangle {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

Value wrap(std::uint64_t v) { return static_cast<Value>(v); }

std::string block_ref(const Cfg& cfg, BlockId b)
{
    return "block " + std::to_string(b) + " '" + cfg.blocks[b].label + "'";
}

} // namespace

std::string_view to_string(BinaryOp op)
{
    switch (op) {
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
    case BinaryOp::Rem: return "%";
    case BinaryOp::Lt: return "<";
    case BinaryOp::Le: return "<=";
    case BinaryOp::Eq: return "==";
    case BinaryOp::Ne: return "!=";
    }
    return "?";
}

std::optional<BinaryOp> parse_binary_op(std::string_view text)
{
    static const std::map<std::string_view, BinaryOp> ops{
        {"+", BinaryOp::Add}, {"-", BinaryOp::Sub}, {"*", BinaryOp::Mul},
        {"/", BinaryOp::Div}, {"%", BinaryOp::Rem}, {"<", BinaryOp::Lt},
        {"<=", BinaryOp::Le}, {"==", BinaryOp::Eq}, {"!=", BinaryOp::Ne},
    };
    if (auto it = ops.find(text); it != ops.end())
        return it->second;
    return std::nullopt;
}

std::optional<Value> evaluate(BinaryOp op, Value lhs, Value rhs)
{
    const auto ul = static_cast<std::uint64_t>(lhs);
    const auto ur = static_cast<std::uint64_t>(rhs);
    constexpr Value min = std::numeric_limits<Value>::min();
    switch (op) {
    case BinaryOp::Add: return wrap(ul + ur);
    case BinaryOp::Sub: return wrap(ul - ur);
    case BinaryOp::Mul: return wrap(ul * ur);
    case BinaryOp::Div:
        if (rhs == 0)
            return std::nullopt;
        if (lhs == min && rhs == -1)
            return min;
        return lhs / rhs;
    case BinaryOp::Rem:
        if (rhs == 0)
            return std::nullopt;
        if (lhs == min && rhs == -1)
            return 0;
        return lhs % rhs;
    case BinaryOp::Lt: return lhs < rhs ? 1 : 0;
    case BinaryOp::Le: return lhs <= rhs ? 1 : 0;
    case BinaryOp::Eq: return lhs == rhs ? 1 : 0;
    case BinaryOp::Ne: return lhs != rhs ? 1 : 0;
    }
    return std::nullopt;
}

std::optional<BlockId> Cfg::exit() const
{
    std::optional<BlockId> found;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (std::holds_alternative<Halt>(blocks[i].term)) {
            if (found)
                return std::nullopt;
            found = static_cast<BlockId>(i);
        }
    }
    return found;
}

const BasicBlock& Cfg::block(BlockId b) const
{
    if (!contains(b))
        throw UsageError("block id " + std::to_string(b) + " out of range (n=" +
                         std::to_string(blocks.size()) + ")");
    return blocks[b];
}

bool is_identifier(std::string_view name) noexcept
{
    if (name.empty())
        return false;
    auto alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };
    auto digit = [](char c) { return c >= '0' && c <= '9'; };
    if (!alpha(name.front()))
        return false;
    for (char c : name.substr(1))
        if (!alpha(c) && !digit(c))
            return false;
    return true;
}

BlockSet successors(const Cfg& cfg, BlockId b)
{
    return std::visit(overloaded{
                          [](const Jump& j) { return BlockSet{j.target}; },
                          [](const Branch& br) { return BlockSet{br.if_true, br.if_false}; },
                          [](const Halt&) { return BlockSet{}; },
                      },
                      cfg.block(b).term);
}

BlockSet predecessors(const Cfg& cfg, BlockId b)
{
    cfg.block(b);
    BlockSet preds;
    for (BlockId u = 0; u < cfg.size(); ++u)
        if (successors(cfg, u).contains(b))
            preds.insert(u);
    return preds;
}

BlockSet reachable_from_entry(const Cfg& cfg)
{
    BlockSet seen;
    if (!cfg.contains(cfg.entry))
        return seen;
    std::vector<BlockId> stack{cfg.entry};
    seen.insert(cfg.entry);
    while (!stack.empty()) {
        const BlockId b = stack.back();
        stack.pop_back();
        for (BlockId s : successors(cfg, b))
            if (cfg.contains(s) && seen.insert(s).second)
                stack.push_back(s);
    }
    return seen;
}

ValidationReport validate(const Cfg& cfg)
{
    ValidationReport report;
    auto fail = [&](ValidationErrorKind kind, std::optional<BlockId> b, std::string msg) {
        report.errors.push_back({kind, b, std::move(msg)});
    };

    if (cfg.blocks.empty()) {
        fail(ValidationErrorKind::Empty, std::nullopt, "cfg has no blocks");
        return report;
    }
    if (!cfg.contains(cfg.entry)) {
        fail(ValidationErrorKind::BadEntry, std::nullopt,
             "entry " + std::to_string(cfg.entry) + " is not a block");
        return report;
    }

    std::map<std::string, BlockId> labels;
    bool dangling = false;
    std::vector<BlockId> halts;
    for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
        const auto& bb = cfg.blocks[i];
        const auto id = static_cast<BlockId>(i);
        if (bb.id != id)
            fail(ValidationErrorKind::IdMismatch, id,
                 "block at index " + std::to_string(i) + " carries id " + std::to_string(bb.id));
        if (auto [it, fresh] = labels.emplace(bb.label, id); !fresh)
            fail(ValidationErrorKind::DuplicateLabel, id,
                 "duplicate label '" + bb.label + "' (first used by block " +
                     std::to_string(it->second) + ")");

        auto check_var = [&](const std::string& v) {
            if (!is_identifier(v))
                fail(ValidationErrorKind::BadIdentifier, id,
                     "invalid variable name '" + v + "' in " + block_ref(cfg, id));
        };
        for (const auto& ins : bb.instrs) {
            std::visit(overloaded{
                           [&](const ConstAssign& c) { check_var(c.dest); },
                           [&](const BinOp& o) {
                               check_var(o.dest);
                               check_var(o.lhs);
                               check_var(o.rhs);
                           },
                           [&](const Print& p) { check_var(p.src); },
                       },
                       ins);
        }

        auto check_target = [&](BlockId t) {
            if (!cfg.contains(t)) {
                dangling = true;
                fail(ValidationErrorKind::DanglingEdge, id,
                     "dangling edge from " + block_ref(cfg, id) + " to nonexistent block " +
                         std::to_string(t));
            }
        };
        std::visit(overloaded{
                       [&](const Jump& j) { check_target(j.target); },
                       [&](const Branch& br) {
                           check_var(br.cond);
                           check_target(br.if_true);
                           check_target(br.if_false);
                       },
                       [&](const Halt&) { halts.push_back(id); },
                   },
                   bb.term);
    }

    if (halts.empty())
        fail(ValidationErrorKind::MissingExit, std::nullopt, "no halt block (missing exit)");
    else if (halts.size() > 1)
        for (std::size_t k = 1; k < halts.size(); ++k)
            fail(ValidationErrorKind::MultipleExits, halts[k],
                 "multiple exits: " + block_ref(cfg, halts[k]) + " halts as well as block " +
                     std::to_string(halts[0]));

    if (!dangling) {
        const BlockSet live = reachable_from_entry(cfg);
        for (BlockId b = 0; b < cfg.size(); ++b)
            if (!live.contains(b))
                fail(ValidationErrorKind::Unreachable, b,
                     block_ref(cfg, b) + " is unreachable from the entry");
        if (!predecessors(cfg, cfg.entry).empty())
            report.diagnostics.push_back("entry " + block_ref(cfg, cfg.entry) +
                                         " has predecessors");
    }
    return report;
}

} // namespace mangle
