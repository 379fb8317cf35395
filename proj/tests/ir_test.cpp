#include "mangle/ir.hpp"
#include "mangle/verifier.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <limits>

using namespace mangle;
using mangle::testing::make_cfg;

namespace {

bool has_error(const ValidationReport& r, ValidationErrorKind kind)
{
    for (const auto& e : r.errors)
        if (e.kind == kind)
            return true;
    return false;
}

} // namespace

TEST(validate, single_halt_block_is_valid)
{
    const Cfg cfg = make_cfg({{}});
    EXPECT_TRUE(validate(cfg).ok());
    EXPECT_EQ(cfg.exit(), BlockId{0});
}

TEST(validate, dangling_edge)
{
    const Cfg cfg = make_cfg({{7}, {}});
    const auto r = validate(cfg);
    ASSERT_FALSE(r.ok());
    EXPECT_TRUE(has_error(r, ValidationErrorKind::DanglingEdge));
    EXPECT_NE(r.errors.front().message.find("dangling edge"), std::string::npos);
    EXPECT_EQ(r.errors.front().block, BlockId{0});
}

TEST(validate, multiple_exits)
{
    const Cfg cfg = make_cfg({{1, 2}, {}, {}});
    const auto r = validate(cfg);
    ASSERT_FALSE(r.ok());
    EXPECT_TRUE(has_error(r, ValidationErrorKind::MultipleExits));
    EXPECT_NE(r.errors.front().message.find("multiple exits"), std::string::npos);
    EXPECT_FALSE(cfg.exit().has_value());
}

TEST(validate, missing_exit_and_unreachable)
{
    EXPECT_TRUE(has_error(validate(make_cfg({{0}})), ValidationErrorKind::MissingExit));
    const auto r = validate(make_cfg({{2}, {2}, {}}));
    ASSERT_FALSE(r.ok());
    EXPECT_TRUE(has_error(r, ValidationErrorKind::Unreachable));
    EXPECT_EQ(r.errors.front().block, BlockId{1});
}

TEST(validate, structural_errors)
{
    EXPECT_TRUE(has_error(validate(Cfg{}), ValidationErrorKind::Empty));

    Cfg dup = make_cfg({{1}, {}});
    dup.blocks[1].label = dup.blocks[0].label;
    EXPECT_TRUE(has_error(validate(dup), ValidationErrorKind::DuplicateLabel));

    Cfg bad_var = make_cfg({{}});
    bad_var.blocks[0].instrs.push_back(ConstAssign{"9lives", 1});
    EXPECT_TRUE(has_error(validate(bad_var), ValidationErrorKind::BadIdentifier));

    Cfg bad_id = make_cfg({{1}, {}});
    bad_id.blocks[1].id = 5;
    EXPECT_TRUE(has_error(validate(bad_id), ValidationErrorKind::IdMismatch));

    Cfg bad_entry = make_cfg({{}});
    bad_entry.entry = 3;
    EXPECT_TRUE(has_error(validate(bad_entry), ValidationErrorKind::BadEntry));
}

TEST(validate, entry_with_predecessors_is_only_a_diagnostic)
{
    const auto r = validate(make_cfg({{1}, {0, 2}, {}}));
    EXPECT_TRUE(r.ok());
    EXPECT_EQ(r.diagnostics.size(), 1u);
}

TEST(successors, terminator_shapes)
{
    Cfg cfg = make_cfg({{1}, {2}, {3}, {4}, {5}, {}});
    EXPECT_EQ(successors(cfg, 5), BlockSet{});
    cfg.blocks[0].term = Branch{"c", 3, 3};
    EXPECT_EQ(successors(cfg, 0), BlockSet{3});
    cfg.blocks[1].term = Jump{5};
    EXPECT_EQ(successors(cfg, 1), BlockSet{5});
    EXPECT_THROW(successors(cfg, 6), UsageError);
    EXPECT_THROW(predecessors(cfg, 99), UsageError);
}

TEST(predecessors, chain_and_loop)
{
    const Cfg chain = make_cfg({{1}, {2}, {}});
    EXPECT_EQ(predecessors(chain, 0), BlockSet{});
    EXPECT_EQ(predecessors(chain, 1), (BlockSet{0}));

    // 0 -> 1 (head); 1 -> {2, 3}; 2 -> 1 (back edge); 3 halts
    const Cfg loop = make_cfg({{1}, {2, 3}, {1}, {}});
    EXPECT_EQ(predecessors(loop, 1), (BlockSet{0, 2}));
}

TEST(predecessors, inverse_of_successors_on_random_cfgs)
{
    SplitMix64 rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        const Cfg cfg = random_cfg(rng, {1, 12, 0.4});
        // brute-force inversion of the successor relation
        std::vector<BlockSet> inverted(cfg.size());
        BlockSet covered;
        for (BlockId u = 0; u < cfg.size(); ++u)
            for (BlockId v : successors(cfg, u)) {
                inverted[v].insert(u);
                covered.insert(v);
            }
        for (BlockId b = 0; b < cfg.size(); ++b) {
            ASSERT_EQ(predecessors(cfg, b), inverted[b]);
            if (b != cfg.entry)
                ASSERT_TRUE(covered.contains(b));
        }
        const auto first = validate(cfg);
        const auto second = validate(cfg);
        EXPECT_EQ(first.ok(), second.ok());
        EXPECT_EQ(first.errors.size(), second.errors.size());
    }
}

TEST(evaluate, wrapping_and_traps)
{
    constexpr Value max = std::numeric_limits<Value>::max();
    constexpr Value min = std::numeric_limits<Value>::min();
    EXPECT_EQ(evaluate(BinaryOp::Add, max, 1), min);
    EXPECT_EQ(evaluate(BinaryOp::Sub, min, 1), max);
    EXPECT_EQ(evaluate(BinaryOp::Mul, max, 2), -2);
    EXPECT_EQ(evaluate(BinaryOp::Div, min, -1), min);
    EXPECT_EQ(evaluate(BinaryOp::Rem, min, -1), 0);
    EXPECT_EQ(evaluate(BinaryOp::Div, -7, 2), -3);
    EXPECT_EQ(evaluate(BinaryOp::Rem, -7, 2), -1);
    EXPECT_FALSE(evaluate(BinaryOp::Div, 1, 0).has_value());
    EXPECT_FALSE(evaluate(BinaryOp::Rem, 1, 0).has_value());
}

TEST(evaluate, comparisons_yield_zero_or_one)
{
    for (auto op : {BinaryOp::Lt, BinaryOp::Le, BinaryOp::Eq, BinaryOp::Ne})
        for (Value a : {-3, 0, 4})
            for (Value b : {-3, 0, 4}) {
                const Value r = *evaluate(op, a, b);
                EXPECT_TRUE(r == 0 || r == 1);
            }
    EXPECT_EQ(evaluate(BinaryOp::Le, 4, 4), 1);
    EXPECT_EQ(evaluate(BinaryOp::Lt, 4, 4), 0);
    EXPECT_EQ(evaluate(BinaryOp::Ne, 4, -3), 1);
}

TEST(identifiers, rule)
{
    EXPECT_TRUE(is_identifier("_x9"));
    EXPECT_TRUE(is_identifier("Flag"));
    EXPECT_FALSE(is_identifier(""));
    EXPECT_FALSE(is_identifier("9x"));
    EXPECT_FALSE(is_identifier("a.b"));
    EXPECT_EQ(parse_binary_op("<="), BinaryOp::Le);
    EXPECT_FALSE(parse_binary_op("=>").has_value());
}
