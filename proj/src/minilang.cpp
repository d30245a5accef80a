#include "plbk/minilang.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace plbk::minilang {

const char* kind_name(NodeKind kind) {
    switch (kind) {
        case NodeKind::Program: return "Program";
        case NodeKind::FuncDecl: return "FuncDecl";
        case NodeKind::Param: return "Param";
        case NodeKind::Block: return "Block";
        case NodeKind::If: return "If";
        case NodeKind::While: return "While";
        case NodeKind::Return: return "Return";
        case NodeKind::Assign: return "Assign";
        case NodeKind::BinOp: return "BinOp";
        case NodeKind::Call: return "Call";
        case NodeKind::Ident: return "Ident";
        case NodeKind::IntLit: return "IntLit";
    }
    return "?";
}

bool Ast::structurally_equal(const Ast& other) const {
    if (kind != other.kind || name != other.name || value != other.value ||
        children.size() != other.children.size()) {
        return false;
    }
    for (size_t i = 0; i < children.size(); ++i) {
        if (!children[i].structurally_equal(other.children[i])) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// lexer
// ---------------------------------------------------------------------------

namespace {

enum class TokKind { Ident, Int, Punct, End };

struct Token {
    TokKind kind = TokKind::End;
    std::string text;
    size_t offset = 0;
};

bool ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

std::vector<Token> lex(const std::string& src) {
    std::vector<Token> toks;
    size_t i = 0;
    const size_t n = src.size();
    while (i < n) {
        const char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (ident_start(c)) {
            size_t b = i;
            while (i < n && ident_char(src[i])) ++i;
            toks.push_back({TokKind::Ident, src.substr(b, i - b), b});
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            size_t b = i;
            while (i < n && std::isdigit(static_cast<unsigned char>(src[i]))) ++i;
            toks.push_back({TokKind::Int, src.substr(b, i - b), b});
            continue;
        }
        if (c == '=' && i + 1 < n && src[i + 1] == '=') {
            toks.push_back({TokKind::Punct, "==", i});
            i += 2;
            continue;
        }
        if (std::string("(){},;=+-*/<>").find(c) != std::string::npos) {
            toks.push_back({TokKind::Punct, std::string(1, c), i});
            ++i;
            continue;
        }
        throw SyntaxError({i, "token", "unexpected character"},
                          "syntax error at offset " + std::to_string(i) +
                              ": unexpected character '" + std::string(1, c) + "'");
    }
    toks.push_back({TokKind::End, "", n});
    return toks;
}

// ---------------------------------------------------------------------------
// recursive-descent parser, single-token lookahead
// ---------------------------------------------------------------------------

class Parser {
public:
    explicit Parser(const std::string& src) : toks_(lex(src)) {}

    Ast parse_program() {
        Ast program;
        program.kind = NodeKind::Program;
        program.span = {0, toks_.back().offset};
        if (peek().kind == TokKind::End) return program;
        if (is_kw("fn")) {
            while (peek().kind != TokKind::End) program.children.push_back(parse_funcdecl());
        } else {
            // bare statement list wrapped in an implicit block
            Ast block;
            block.kind = NodeKind::Block;
            block.span.begin = peek().offset;
            while (peek().kind != TokKind::End) block.children.push_back(parse_stmt());
            block.span.end = peek().offset;
            program.children.push_back(std::move(block));
        }
        return program;
    }

private:
    const Token& peek() const { return toks_[pos_]; }
    const Token& advance() { return toks_[pos_++]; }

    bool is_kw(const char* kw) const {
        return peek().kind == TokKind::Ident && peek().text == kw;
    }
    bool is_punct(const char* p) const {
        return peek().kind == TokKind::Punct && peek().text == p;
    }

    [[noreturn]] void fail(const std::string& expected) const {
        const auto& t = peek();
        const std::string got = t.kind == TokKind::End ? "end of input" : "'" + t.text + "'";
        throw SyntaxError({t.offset, expected, "unexpected " + got},
                          "syntax error at offset " + std::to_string(t.offset) + ": expected " +
                              expected + ", got " + got);
    }

    Token expect_punct(const char* p) {
        if (!is_punct(p)) fail(std::string("'") + p + "'");
        return advance();
    }

    Token expect_ident(const char* what) {
        if (peek().kind != TokKind::Ident) fail(what);
        return advance();
    }

    Ast parse_funcdecl() {
        Ast fn;
        fn.kind = NodeKind::FuncDecl;
        if (!is_kw("fn")) fail("'fn'");
        fn.span.begin = advance().offset;
        fn.name = expect_ident("function name").text;
        expect_punct("(");
        if (!is_punct(")")) {
            for (;;) {
                Ast param;
                param.kind = NodeKind::Param;
                const Token t = expect_ident("parameter name");
                param.name = t.text;
                param.span = {t.offset, t.offset + t.text.size()};
                fn.children.push_back(std::move(param));
                if (is_punct(",")) {
                    advance();
                    continue;
                }
                break;
            }
        }
        expect_punct(")");
        fn.children.push_back(parse_block());
        fn.span.end = fn.children.back().span.end;
        return fn;
    }

    Ast parse_block() {
        Ast block;
        block.kind = NodeKind::Block;
        block.span.begin = expect_punct("{").offset;
        while (!is_punct("}")) {
            if (peek().kind == TokKind::End) fail("'}'");
            block.children.push_back(parse_stmt());
        }
        block.span.end = advance().offset + 1;
        return block;
    }

    Ast parse_stmt() {
        if (is_kw("if")) return parse_if();
        if (is_kw("while")) return parse_while();
        if (is_kw("return")) return parse_return();
        // assign needs two tokens of knowledge (ident '='); resolved by
        // peeking the next token only after consuming nothing
        if (peek().kind == TokKind::Ident && !is_kw("fn") && pos_ + 1 < toks_.size() &&
            toks_[pos_ + 1].kind == TokKind::Punct && toks_[pos_ + 1].text == "=") {
            Ast assign;
            assign.kind = NodeKind::Assign;
            const Token name = advance();
            assign.name = name.text;
            assign.span.begin = name.offset;
            advance(); // '='
            assign.children.push_back(parse_expr());
            assign.span.end = expect_punct(";").offset + 1;
            return assign;
        }
        // expression statement
        Ast expr = parse_expr();
        const Token semi = expect_punct(";");
        Ast stmt = std::move(expr);
        stmt.span.end = semi.offset + 1;
        return stmt;
    }

    Ast parse_if() {
        Ast node;
        node.kind = NodeKind::If;
        node.span.begin = advance().offset; // 'if'
        node.children.push_back(parse_expr());
        node.children.push_back(parse_block());
        if (is_kw("else")) {
            advance();
            node.children.push_back(parse_block());
        }
        node.span.end = node.children.back().span.end;
        return node;
    }

    Ast parse_while() {
        Ast node;
        node.kind = NodeKind::While;
        node.span.begin = advance().offset; // 'while'
        node.children.push_back(parse_expr());
        node.children.push_back(parse_block());
        node.span.end = node.children.back().span.end;
        return node;
    }

    Ast parse_return() {
        Ast node;
        node.kind = NodeKind::Return;
        node.span.begin = advance().offset; // 'return'
        if (!is_punct(";")) node.children.push_back(parse_expr());
        node.span.end = expect_punct(";").offset + 1;
        return node;
    }

    static int precedence(const std::string& op) {
        if (op == "==") return 1;
        if (op == "<" || op == ">") return 2;
        if (op == "+" || op == "-") return 3;
        if (op == "*" || op == "/") return 4;
        return -1;
    }

    Ast parse_expr(int min_prec = 1) {
        Ast lhs = parse_primary();
        for (;;) {
            if (peek().kind != TokKind::Punct) break;
            const int prec = precedence(peek().text);
            if (prec < min_prec) break;
            Ast op;
            op.kind = NodeKind::BinOp;
            op.name = advance().text;
            Ast rhs = parse_expr(prec + 1); // left-associative
            op.span = {lhs.span.begin, rhs.span.end};
            op.children.push_back(std::move(lhs));
            op.children.push_back(std::move(rhs));
            lhs = std::move(op);
        }
        return lhs;
    }

    Ast parse_primary() {
        if (peek().kind == TokKind::Int) {
            const Token t = advance();
            Ast lit;
            lit.kind = NodeKind::IntLit;
            lit.value = std::stoll(t.text);
            lit.span = {t.offset, t.offset + t.text.size()};
            return lit;
        }
        if (peek().kind == TokKind::Ident && !is_kw("fn") && !is_kw("if") && !is_kw("else") &&
            !is_kw("while") && !is_kw("return")) {
            const Token t = advance();
            if (is_punct("(")) {
                Ast call;
                call.kind = NodeKind::Call;
                call.name = t.text;
                call.span.begin = t.offset;
                advance(); // '('
                if (!is_punct(")")) {
                    for (;;) {
                        call.children.push_back(parse_expr());
                        if (is_punct(",")) {
                            advance();
                            continue;
                        }
                        break;
                    }
                }
                call.span.end = expect_punct(")").offset + 1;
                return call;
            }
            Ast ident;
            ident.kind = NodeKind::Ident;
            ident.name = t.text;
            ident.span = {t.offset, t.offset + t.text.size()};
            return ident;
        }
        if (is_punct("(")) {
            advance();
            Ast inner = parse_expr();
            expect_punct(")");
            return inner;
        }
        fail("primary expression");
    }

    std::vector<Token> toks_;
    size_t pos_ = 0;
};

} // namespace

Ast parse(const std::string& source) { return Parser(source).parse_program(); }

// ---------------------------------------------------------------------------
// pretty printer
// ---------------------------------------------------------------------------

namespace {

void print_expr(const Ast& node, std::ostringstream& out) {
    switch (node.kind) {
        case NodeKind::IntLit:
            out << node.value;
            break;
        case NodeKind::Ident:
            out << node.name;
            break;
        case NodeKind::Call:
            out << node.name << "(";
            for (size_t i = 0; i < node.children.size(); ++i) {
                if (i) out << ", ";
                print_expr(node.children[i], out);
            }
            out << ")";
            break;
        case NodeKind::BinOp:
            // fully parenthesized: precedence survives the round trip
            out << "(";
            print_expr(node.children[0], out);
            out << " " << node.name << " ";
            print_expr(node.children[1], out);
            out << ")";
            break;
        default:
            throw Error("pretty_print: not an expression node");
    }
}

void print_stmt(const Ast& node, std::ostringstream& out, int indent);

void print_block(const Ast& block, std::ostringstream& out, int indent) {
    out << "{\n";
    for (const auto& stmt : block.children) print_stmt(stmt, out, indent + 1);
    for (int i = 0; i < indent; ++i) out << "  ";
    out << "}";
}

void print_stmt(const Ast& node, std::ostringstream& out, int indent) {
    for (int i = 0; i < indent; ++i) out << "  ";
    switch (node.kind) {
        case NodeKind::Assign:
            out << node.name << " = ";
            print_expr(node.children[0], out);
            out << ";\n";
            break;
        case NodeKind::Return:
            out << "return";
            if (!node.children.empty()) {
                out << " ";
                print_expr(node.children[0], out);
            }
            out << ";\n";
            break;
        case NodeKind::If:
            out << "if ";
            print_expr(node.children[0], out);
            out << " ";
            print_block(node.children[1], out, indent);
            if (node.children.size() > 2) {
                out << " else ";
                print_block(node.children[2], out, indent);
            }
            out << "\n";
            break;
        case NodeKind::While:
            out << "while ";
            print_expr(node.children[0], out);
            out << " ";
            print_block(node.children[1], out, indent);
            out << "\n";
            break;
        default:
            print_expr(node, out);
            out << ";\n";
            break;
    }
}

} // namespace

std::string pretty_print(const Ast& ast) {
    std::ostringstream out;
    if (ast.kind != NodeKind::Program) throw Error("pretty_print expects a Program node");
    for (const auto& child : ast.children) {
        if (child.kind == NodeKind::FuncDecl) {
            out << "fn " << child.name << "(";
            bool first = true;
            for (const auto& c : child.children) {
                if (c.kind != NodeKind::Param) continue;
                if (!first) out << ", ";
                out << c.name;
                first = false;
            }
            out << ") ";
            print_block(child.children.back(), out, 0);
            out << "\n";
        } else {
            // implicit top-level block of bare statements
            for (const auto& stmt : child.children) print_stmt(stmt, out, 0);
        }
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// subtree multiset / ast match
// ---------------------------------------------------------------------------

namespace {

// returns height; appends encodings of subtrees with height >= min_height
int collect_subtrees(const Ast& node, int min_height, std::map<std::string, int64_t>& out,
                     std::string& encoding) {
    int height = 1;
    std::string enc = kind_name(node.kind);
    if (node.kind == NodeKind::BinOp) enc += "[" + node.name + "]";
    if (node.kind == NodeKind::IntLit) enc += "[" + std::to_string(node.value) + "]";
    // identifiers (and declared names) abstract to a placeholder
    if (node.kind == NodeKind::Ident || node.kind == NodeKind::Param ||
        node.kind == NodeKind::FuncDecl || node.kind == NodeKind::Call) {
        enc += "[_]";
    }
    enc += "(";
    for (size_t i = 0; i < node.children.size(); ++i) {
        std::string child_enc;
        const int h = collect_subtrees(node.children[i], min_height, out, child_enc);
        height = std::max(height, h + 1);
        if (i) enc += ",";
        enc += child_enc;
    }
    enc += ")";
    if (height >= min_height) out[enc] += 1;
    encoding = std::move(enc);
    return height;
}

} // namespace

std::map<std::string, int64_t> subtree_multiset(const Ast& ast, int min_height) {
    std::map<std::string, int64_t> out;
    std::string enc;
    collect_subtrees(ast, min_height, out, enc);
    return out;
}

double ast_match(const Ast& candidate, const Ast& reference) {
    const auto ref = subtree_multiset(reference);
    int64_t ref_total = 0;
    for (const auto& [enc, c] : ref) ref_total += c;
    if (ref_total == 0) return 1.0;
    const auto cand = subtree_multiset(candidate);
    int64_t matched = 0;
    for (const auto& [enc, c] : ref) {
        auto it = cand.find(enc);
        if (it != cand.end()) matched += std::min(c, it->second);
    }
    return static_cast<double>(matched) / static_cast<double>(ref_total);
}

// ---------------------------------------------------------------------------
// dataflow extraction
// ---------------------------------------------------------------------------

namespace {

struct SiteCollector {
    DataflowGraph graph;
    std::map<std::string, std::string> normalized; // source name -> var_k
    std::map<std::string, int> def_counts;         // per source name
    int64_t next_var = 0;

    const std::string& normalize(const std::string& name) {
        auto it = normalized.find(name);
        if (it == normalized.end()) {
            it = normalized.emplace(name, "var_" + std::to_string(next_var++)).first;
        }
        return it->second;
    }

    int add_def(const std::string& source_name) {
        DataflowGraph::Site site;
        site.index = static_cast<int>(graph.sites.size());
        site.variable = normalize(source_name);
        site.is_def = true;
        site.def_ordinal = def_counts[source_name]++;
        graph.sites.push_back(site);
        return site.index;
    }

    int add_use(const std::string& source_name) {
        DataflowGraph::Site site;
        site.index = static_cast<int>(graph.sites.size());
        site.variable = normalize(source_name);
        site.is_def = false;
        graph.sites.push_back(site);
        return site.index;
    }
};

using Env = std::map<std::string, std::set<int>>; // source var -> reaching def sites

void merge_env(Env& into, const Env& other) {
    for (const auto& [var, defs] : other) into[var].insert(defs.begin(), defs.end());
}

struct Walker {
    SiteCollector& sites;
    std::set<std::pair<int, int>> edge_set; // dedupes the two loop passes
    // def/use site indices are pre-assigned in source order by a first pass;
    // the reaching walk looks nodes up by identity
    std::map<const Ast*, int> site_of;

    // normalization order: variables numbered by first definition; names
    // that are only ever used get numbers afterwards, at first use
    void prenormalize(const Ast& node) {
        if (node.kind == NodeKind::Param || node.kind == NodeKind::Assign) {
            sites.normalize(node.name);
        }
        for (const auto& c : node.children) prenormalize(c);
    }

    void assign_sites(const Ast& node) {
        switch (node.kind) {
            case NodeKind::Param:
                site_of[&node] = sites.add_def(node.name);
                return;
            case NodeKind::Assign:
                // the defined name precedes the rhs lexically
                site_of[&node] = sites.add_def(node.name);
                for (const auto& c : node.children) assign_sites(c);
                return;
            case NodeKind::Ident:
                site_of[&node] = sites.add_use(node.name);
                return;
            case NodeKind::Call:
                for (const auto& c : node.children) assign_sites(c); // callee is not a variable
                return;
            default:
                for (const auto& c : node.children) assign_sites(c);
                return;
        }
    }

    void uses_in_expr(const Ast& node, Env& env) {
        if (node.kind == NodeKind::Ident) {
            const int use_site = site_of.at(&node);
            auto it = env.find(node.name);
            if (it == env.end() || it->second.empty()) {
                edge_set.emplace(use_site, -1); // synthetic unknown def
                ++sites.graph.unknown_uses;
            } else {
                for (int def : it->second) edge_set.emplace(use_site, def);
            }
            return;
        }
        for (const auto& c : node.children) uses_in_expr(c, env);
    }

    void walk_stmt(const Ast& node, Env& env) {
        switch (node.kind) {
            case NodeKind::Assign: {
                uses_in_expr(node.children[0], env);
                env[node.name] = {site_of.at(&node)};
                return;
            }
            case NodeKind::Return:
                for (const auto& c : node.children) uses_in_expr(c, env);
                return;
            case NodeKind::If: {
                uses_in_expr(node.children[0], env);
                Env then_env = env;
                walk_block(node.children[1], then_env);
                if (node.children.size() > 2) {
                    Env else_env = env;
                    walk_block(node.children[2], else_env);
                    // join as union over both arms
                    Env joined = then_env;
                    merge_env(joined, else_env);
                    env = std::move(joined);
                } else {
                    merge_env(env, then_env);
                }
                return;
            }
            case NodeKind::While: {
                uses_in_expr(node.children[0], env);
                Env body_env = env;
                walk_block(node.children[1], body_env);
                // second pass with the back-edge defs visible; the edge set
                // dedupes repeats. Two passes reach a fixpoint because one
                // body walk exposes every def the body can produce.
                Env joined = env;
                merge_env(joined, body_env);
                uses_in_expr(node.children[0], joined);
                Env second = joined;
                walk_block(node.children[1], second);
                merge_env(env, second); // loop may run zero times
                return;
            }
            case NodeKind::Block:
                walk_block(node, env);
                return;
            default:
                uses_in_expr(node, env); // expression statement
                return;
        }
    }

    void walk_block(const Ast& block, Env& env) {
        for (const auto& stmt : block.children) walk_stmt(stmt, env);
    }
};

} // namespace

DataflowGraph extract_dataflow(const Ast& ast) {
    if (ast.kind != NodeKind::Program) throw Error("extract_dataflow expects a Program node");
    SiteCollector sites;
    Walker walker{sites, {}, {}};
    walker.prenormalize(ast);
    walker.assign_sites(ast);

    for (const auto& child : ast.children) {
        Env env;
        if (child.kind == NodeKind::FuncDecl) {
            for (const auto& c : child.children) {
                if (c.kind == NodeKind::Param) env[c.name] = {walker.site_of.at(&c)};
            }
            walker.walk_block(child.children.back(), env);
        } else {
            walker.walk_block(child, env);
        }
    }

    DataflowGraph graph = std::move(sites.graph);
    for (const auto& [use, def] : walker.edge_set) graph.edges.push_back({use, def});
    return graph;
}

double dataflow_match(const DataflowGraph& candidate, const DataflowGraph& reference) {
    auto edge_triples = [](const DataflowGraph& g) {
        std::map<std::tuple<std::string, std::string, int>, int64_t> triples;
        for (const auto& e : g.edges) {
            const auto& use = g.sites[static_cast<size_t>(e.use_site)];
            if (e.def_site < 0) {
                triples[{use.variable, "?", -1}] += 1;
                continue;
            }
            const auto& def = g.sites[static_cast<size_t>(e.def_site)];
            triples[{use.variable, def.variable, def.def_ordinal}] += 1;
        }
        return triples;
    };
    const auto ref = edge_triples(reference);
    int64_t ref_total = 0;
    for (const auto& [t, c] : ref) ref_total += c;
    if (ref_total == 0) return 1.0;
    const auto cand = edge_triples(candidate);
    int64_t matched = 0;
    for (const auto& [t, c] : ref) {
        auto it = cand.find(t);
        if (it != cand.end()) matched += std::min(c, it->second);
    }
    return static_cast<double>(matched) / static_cast<double>(ref_total);
}

// ---------------------------------------------------------------------------
// language profile
// ---------------------------------------------------------------------------

std::vector<std::string> lex_tokens(const std::string& source) {
    std::vector<std::string> out;
    size_t i = 0;
    const size_t n = source.size();
    while (i < n) {
        const char c = source[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (ident_start(c)) {
            size_t b = i;
            while (i < n && ident_char(source[i])) ++i;
            out.push_back(source.substr(b, i - b));
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            size_t b = i;
            while (i < n && std::isdigit(static_cast<unsigned char>(source[i]))) ++i;
            out.push_back(source.substr(b, i - b));
            continue;
        }
        if (c == '=' && i + 1 < n && source[i + 1] == '=') {
            out.push_back("==");
            i += 2;
            continue;
        }
        out.push_back(std::string(1, c)); // any other byte is its own token
        ++i;
    }
    return out;
}

namespace {

class MiniProfile : public LanguageProfile {
public:
    const std::string& name() const override {
        static const std::string n = "mini";
        return n;
    }
    const std::set<std::string>& keywords() const override {
        static const std::set<std::string> kw = {"fn", "if", "else", "while", "return"};
        return kw;
    }
    std::vector<std::string> tokenize(const std::string& source) const override {
        return lex_tokens(source);
    }
    std::optional<Ast> try_parse(const std::string& source) const override {
        try {
            return parse(source);
        } catch (const SyntaxError&) {
            return std::nullopt;
        }
    }
};

} // namespace

const LanguageProfile& mini_profile() {
    static const MiniProfile profile;
    return profile;
}

const LanguageProfile* find_profile(const std::string& name) {
    if (name == "mini") return &mini_profile();
    return nullptr;
}

} // namespace plbk::minilang
