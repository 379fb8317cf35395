#include "mangle/textfmt.hpp"

#include <charconv>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

namespace mangle {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

enum class Tok { Ident, Number, Newline, LBrace, RBrace, Colon, Comma, Assign, Op, End };

struct Token {
    Tok kind = Tok::End;
    std::string text;
    SourceSpan span;
};

std::string describe(const Token& t)
{
    switch (t.kind) {
    case Tok::Newline: return "end of line";
    case Tok::End: return "end of input";
    default: return "'" + t.text + "'";
    }
}

bool ident_start(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }
bool digit(char c) { return c >= '0' && c <= '9'; }
bool ident_char(char c) { return ident_start(c) || digit(c) || c == '.'; }

std::vector<Token> lex(std::string_view src)
{
    std::vector<Token> out;
    std::size_t i = 0, line = 1, col = 1;
    auto push = [&](Tok kind, std::string text, SourceSpan span) {
        if (kind == Tok::Newline && (out.empty() || out.back().kind == Tok::Newline))
            return;
        out.push_back({kind, std::move(text), span});
    };
    auto advance = [&](std::size_t k) {
        i += k;
        col += k;
    };
    while (i < src.size()) {
        const char c = src[i];
        const SourceSpan here{line, col};
        if (c == '\n') {
            push(Tok::Newline, "\n", here);
            ++i;
            ++line;
            col = 1;
        } else if (c == ' ' || c == '\t' || c == '\r') {
            advance(1);
        } else if (c == '#') {
            while (i < src.size() && src[i] != '\n')
                advance(1);
        } else if (ident_start(c)) {
            std::size_t j = i;
            while (j < src.size() && ident_char(src[j]))
                ++j;
            push(Tok::Ident, std::string(src.substr(i, j - i)), here);
            advance(j - i);
        } else if (digit(c)) {
            std::size_t j = i;
            while (j < src.size() && digit(src[j]))
                ++j;
            if (j < src.size() && ident_start(src[j]))
                throw ParseError(ParseErrorKind::Lexical, here, "malformed number");
            push(Tok::Number, std::string(src.substr(i, j - i)), here);
            advance(j - i);
        } else if (c == '{') {
            push(Tok::LBrace, "{", here);
            advance(1);
        } else if (c == '}') {
            push(Tok::RBrace, "}", here);
            advance(1);
        } else if (c == ':') {
            push(Tok::Colon, ":", here);
            advance(1);
        } else if (c == ',') {
            push(Tok::Comma, ",", here);
            advance(1);
        } else {
            const bool eq_next = i + 1 < src.size() && src[i + 1] == '=';
            if (c == '=' && !eq_next) {
                push(Tok::Assign, "=", here);
                advance(1);
            } else if ((c == '=' || c == '<' || c == '!') && eq_next) {
                push(Tok::Op, std::string{c, '='}, here);
                advance(2);
            } else if (c == '+' || c == '-' || c == '*' || c == '/' || c == '%' || c == '<') {
                push(Tok::Op, std::string(1, c), here);
                advance(1);
            } else {
                throw ParseError(ParseErrorKind::Lexical, here,
                                 std::string("unexpected character '") + c + "'");
            }
        }
    }
    out.push_back({Tok::End, "", SourceSpan{line, col}});
    return out;
}

struct PendingTarget {
    std::string label;
    SourceSpan span;
};

struct PendingBlock {
    SourceSpan span;
    std::string label;
    std::vector<Instr> instrs;
    enum class Kind { Jump, Branch, Halt } kind = Kind::Halt;
    std::string cond;
    PendingTarget first;
    PendingTarget second;
};

class Parser {
public:
    explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

    Cfg run()
    {
        skip_newlines();
        expect_keyword("func");
        const Token name = expect(Tok::Ident, "function name");
        skip_newlines();
        expect(Tok::LBrace, "'{'");
        skip_newlines();
        std::vector<PendingBlock> blocks;
        while (is_keyword(peek(), "block")) {
            blocks.push_back(parse_block());
            skip_newlines();
        }
        if (peek().kind != Tok::RBrace)
            syntax_error(peek(), "expected 'block' or '}'");
        next();
        skip_newlines();
        if (peek().kind != Tok::End)
            syntax_error(peek(), "unexpected " + describe(peek()) + " after function body");
        return resolve(name.text, std::move(blocks));
    }

private:
    const Token& peek(std::size_t k = 0) const
    {
        return toks_[std::min(pos_ + k, toks_.size() - 1)];
    }

    const Token& next()
    {
        const Token& t = toks_[pos_];
        if (pos_ + 1 < toks_.size())
            ++pos_;
        return t;
    }

    void skip_newlines()
    {
        while (peek().kind == Tok::Newline)
            next();
    }

    static bool is_keyword(const Token& t, std::string_view kw)
    {
        return t.kind == Tok::Ident && t.text == kw;
    }

    [[noreturn]] static void syntax_error(const Token& at, const std::string& msg)
    {
        throw ParseError(ParseErrorKind::Syntax, at.span, msg);
    }

    const Token& expect(Tok kind, const std::string& what)
    {
        if (peek().kind != kind)
            syntax_error(peek(), "expected " + what + ", found " + describe(peek()));
        return next();
    }

    void expect_keyword(std::string_view kw)
    {
        if (!is_keyword(peek(), kw))
            syntax_error(peek(), "expected '" + std::string(kw) + "', found " + describe(peek()));
        next();
    }

    std::string expect_var(const std::string& what)
    {
        const Token& t = expect(Tok::Ident, what);
        if (!is_identifier(t.text))
            syntax_error(t, "invalid variable name '" + t.text + "'");
        return t.text;
    }

    Value parse_number(const Token& t, bool negative)
    {
        std::uint64_t magnitude = 0;
        auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), magnitude);
        const std::uint64_t limit =
            static_cast<std::uint64_t>(std::numeric_limits<Value>::max()) + (negative ? 1 : 0);
        if (ec != std::errc{} || magnitude > limit)
            syntax_error(t, "integer literal out of 64-bit range");
        if (negative)
            return static_cast<Value>(0 - magnitude);
        return static_cast<Value>(magnitude);
    }

    void end_of_statement(const char* after)
    {
        if (peek().kind != Tok::Newline)
            syntax_error(peek(), std::string("expected end of line after ") + after + ", found " +
                                     describe(peek()));
        skip_newlines();
    }

    Instr parse_assignment()
    {
        const std::string dest = expect_var("variable");
        expect(Tok::Assign, "'='");
        if (peek().kind == Tok::Number)
            return ConstAssign{dest, parse_number(next(), false)};
        if (peek().kind == Tok::Op && peek().text == "-" && peek(1).kind == Tok::Number) {
            next();
            return ConstAssign{dest, parse_number(next(), true)};
        }
        const std::string lhs = expect_var("integer or variable");
        const Token& op_tok = expect(Tok::Op, "binary operator");
        const auto op = parse_binary_op(op_tok.text);
        if (!op)
            syntax_error(op_tok, "unknown operator '" + op_tok.text + "'");
        const std::string rhs = expect_var("variable");
        return BinOp{dest, lhs, *op, rhs};
    }

    PendingTarget parse_target()
    {
        const Token& t = expect(Tok::Ident, "block label");
        return {t.text, t.span};
    }

    PendingBlock parse_block()
    {
        PendingBlock pb;
        pb.span = peek().span;
        expect_keyword("block");
        pb.label = expect(Tok::Ident, "block label").text;
        expect(Tok::Colon, "':'");
        skip_newlines();
        for (;;) {
            const Token& t = peek();
            if (t.kind == Tok::Ident && peek(1).kind == Tok::Assign) {
                pb.instrs.push_back(parse_assignment());
                end_of_statement("instruction");
            } else if (is_keyword(t, "print")) {
                next();
                pb.instrs.push_back(Print{expect_var("variable")});
                end_of_statement("instruction");
            } else if (is_keyword(t, "jump")) {
                next();
                pb.kind = PendingBlock::Kind::Jump;
                pb.first = parse_target();
                break;
            } else if (is_keyword(t, "br")) {
                next();
                pb.kind = PendingBlock::Kind::Branch;
                pb.cond = expect_var("condition variable");
                expect(Tok::Comma, "','");
                pb.first = parse_target();
                expect(Tok::Comma, "','");
                pb.second = parse_target();
                break;
            } else if (is_keyword(t, "halt")) {
                next();
                pb.kind = PendingBlock::Kind::Halt;
                break;
            } else {
                syntax_error(t, "expected instruction or terminator in block '" + pb.label +
                                    "', found " + describe(t));
            }
        }
        if (peek().kind != Tok::Newline && peek().kind != Tok::RBrace)
            syntax_error(peek(), "expected end of line after terminator, found " + describe(peek()));
        return pb;
    }

    static Cfg resolve(const std::string& name, std::vector<PendingBlock> pending)
    {
        std::map<std::string, BlockId> ids;
        for (std::size_t i = 0; i < pending.size(); ++i) {
            if (!ids.emplace(pending[i].label, static_cast<BlockId>(i)).second)
                throw ParseError(ParseErrorKind::Semantic, pending[i].span,
                                 "duplicate label '" + pending[i].label + "'");
        }
        auto lookup = [&](const PendingTarget& t) {
            auto it = ids.find(t.label);
            if (it == ids.end())
                throw ParseError(ParseErrorKind::Semantic, t.span,
                                 "undefined label '" + t.label + "'");
            return it->second;
        };

        Cfg cfg;
        cfg.name = name;
        cfg.entry = 0;
        for (std::size_t i = 0; i < pending.size(); ++i) {
            auto& pb = pending[i];
            BasicBlock bb;
            bb.id = static_cast<BlockId>(i);
            bb.label = pb.label;
            bb.instrs = std::move(pb.instrs);
            switch (pb.kind) {
            case PendingBlock::Kind::Jump: bb.term = Jump{lookup(pb.first)}; break;
            case PendingBlock::Kind::Branch:
                bb.term = Branch{pb.cond, lookup(pb.first), lookup(pb.second)};
                break;
            case PendingBlock::Kind::Halt: bb.term = Halt{}; break;
            }
            cfg.blocks.push_back(std::move(bb));
        }

        const ValidationReport report = validate(cfg);
        if (!report.ok()) {
            const auto& err = report.errors.front();
            SourceSpan span{1, 1};
            if (err.block && *err.block < pending.size())
                span = pending[*err.block].span;
            throw ParseError(ParseErrorKind::Semantic, span, err.message);
        }
        return cfg;
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

std::string quote(std::string_view s)
{
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\')
            out += '\\';
        out += c;
    }
    return out + "\"";
}

} // namespace

ParseError::ParseError(ParseErrorKind kind, SourceSpan span, const std::string& message)
    : std::runtime_error(std::to_string(span.line) + ":" + std::to_string(span.column) + ": " +
                         message),
      kind_(kind), span_(span), detail_(message)
{
}

Cfg parse(std::string_view text)
{
    return Parser(lex(text)).run();
}

std::string print(const Cfg& cfg)
{
    std::ostringstream os;
    os << "func " << cfg.name << " {\n";
    for (const auto& bb : cfg.blocks) {
        os << "  block " << bb.label << ":\n";
        for (const auto& ins : bb.instrs) {
            os << "    ";
            std::visit(overloaded{
                           [&](const ConstAssign& c) { os << c.dest << " = " << c.value; },
                           [&](const BinOp& o) {
                               os << o.dest << " = " << o.lhs << ' ' << to_string(o.op) << ' '
                                  << o.rhs;
                           },
                           [&](const Print& p) { os << "print " << p.src; },
                       },
                       ins);
            os << '\n';
        }
        os << "    ";
        std::visit(overloaded{
                       [&](const Jump& j) { os << "jump " << cfg.blocks.at(j.target).label; },
                       [&](const Branch& b) {
                           os << "br " << b.cond << ", " << cfg.blocks.at(b.if_true).label << ", "
                              << cfg.blocks.at(b.if_false).label;
                       },
                       [&](const Halt&) { os << "halt"; },
                   },
                   bb.term);
        os << '\n';
    }
    os << "}\n";
    return os.str();
}

std::string emit_dot_cfg(const Cfg& cfg)
{
    std::ostringstream os;
    os << "digraph " << quote(cfg.name) << " {\n";
    os << "  node [shape=box];\n";
    for (const auto& bb : cfg.blocks)
        os << "  b" << bb.id << " [label=" << quote(std::to_string(bb.id) + ": " + bb.label)
           << "];\n";
    for (const auto& bb : cfg.blocks) {
        std::visit(overloaded{
                       [&](const Jump& j) { os << "  b" << bb.id << " -> b" << j.target << ";\n"; },
                       [&](const Branch& b) {
                           if (b.if_true == b.if_false) {
                               os << "  b" << bb.id << " -> b" << b.if_true
                                  << " [label=\"T/F\"];\n";
                               return;
                           }
                           os << "  b" << bb.id << " -> b" << b.if_true << " [label=\"T\"];\n";
                           os << "  b" << bb.id << " -> b" << b.if_false << " [label=\"F\"];\n";
                       },
                       [](const Halt&) {},
                   },
                   bb.term);
    }
    os << "}\n";
    return os.str();
}

std::string emit_dot_thread(const ThreadCfg& tcfg)
{
    auto shape = [](ThreadNodeKind k) {
        switch (k) {
        case ThreadNodeKind::Entry:
        case ThreadNodeKind::Exit: return "ellipse";
        case ThreadNodeKind::Wait: return "octagon";
        case ThreadNodeKind::Switch: return "diamond";
        case ThreadNodeKind::Block: return "box";
        }
        return "box";
    };
    std::ostringstream os;
    os << "digraph " << quote(tcfg.name) << " {\n";
    for (std::size_t i = 0; i < tcfg.nodes.size(); ++i)
        os << "  n" << i << " [label=" << quote(tcfg.nodes[i].label)
           << ", shape=" << shape(tcfg.nodes[i].kind) << "];\n";
    for (const auto& e : tcfg.edges) {
        os << "  n" << e.from << " -> n" << e.to;
        if (!e.label.empty())
            os << " [label=" << quote(e.label) << "]";
        os << ";\n";
    }
    os << "}\n";
    return os.str();
}

} // namespace mangle
