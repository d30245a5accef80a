#pragma once

#include "plbk/tensor.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace plbk::minilang {

// Grammar:
//   program  := funcdecl* | stmt*          (bare statements form an implicit block)
//   funcdecl := "fn" ident "(" params? ")" block
//   params   := ident ("," ident)*
//   block    := "{" stmt* "}"
//   stmt     := assign | if | while | return | exprstmt
//   assign   := ident "=" expr ";"
//   if       := "if" expr block ("else" block)?
//   while    := "while" expr block
//   return   := "return" expr? ";"
//   expr     := precedence climbing over ==  <  >  +  -  *  /
//   primary  := int literal | ident | call | "(" expr ")"
enum class NodeKind {
    Program,
    FuncDecl,
    Param,
    Block,
    If,
    While,
    Return,
    Assign,
    BinOp,
    Call,
    Ident,
    IntLit,
};

const char* kind_name(NodeKind kind);

struct Span {
    size_t begin = 0;
    size_t end = 0; // byte offsets, end exclusive
};

struct Ast {
    NodeKind kind = NodeKind::Program;
    std::string name;  // Ident/FuncDecl/Param/Call name, BinOp operator
    int64_t value = 0; // IntLit
    std::vector<Ast> children;
    Span span;

    bool structurally_equal(const Ast& other) const; // ignores spans
};

struct ParseError {
    size_t offset = 0;
    std::string expected; // human-readable expected-token set
    std::string message;
};

class SyntaxError : public Error {
public:
    SyntaxError(ParseError err, const std::string& what) : Error(what), error(std::move(err)) {}
    ParseError error;
};

// Total: every input yields an Ast or throws SyntaxError. Single-token
// lookahead throughout.
Ast parse(const std::string& source);

std::string pretty_print(const Ast& ast); // parse(pretty_print(a)) == a structurally

// Canonical encodings of all subtrees with height >= min_height; identifier
// names abstracted to a placeholder. Multiset as encoding -> count.
std::map<std::string, int64_t> subtree_multiset(const Ast& ast, int min_height = 2);

// |multiset intersection| / |reference multiset|; 1.0 on an empty reference.
double ast_match(const Ast& candidate, const Ast& reference);

struct DataflowGraph {
    struct Site {
        int index = 0;          // source order over def and use sites
        std::string variable;   // normalized name var_0, var_1, ...
        bool is_def = false;
        int def_ordinal = -1;   // among defs of this variable, source order
    };
    struct Edge {
        int use_site = 0;
        int def_site = 0; // -1 links to the synthetic unknown-def site
    };
    std::vector<Site> sites;
    std::vector<Edge> edges;
    int64_t unknown_uses = 0; // uses of undeclared variables, recorded
};

// Reaching definitions with branch joins as unions; loop bodies are walked
// twice so back-edge defs reach uses. Variables are normalized to var_k in
// order of first definition (undeclared variables at first use).
DataflowGraph extract_dataflow(const Ast& ast);

// Edges compared as (use var, def var, def ordinal) triples; score is
// |matched| / |reference edges|, or 1.0 when the reference has none.
double dataflow_match(const DataflowGraph& candidate, const DataflowGraph& reference);

// Keywords + tokenizer + parser + dataflow, pluggable so real-language
// backends can slot in behind the metric.
struct LanguageProfile {
    virtual ~LanguageProfile() = default;
    virtual const std::string& name() const = 0;
    virtual const std::set<std::string>& keywords() const = 0;
    virtual std::vector<std::string> tokenize(const std::string& source) const = 0;
    virtual std::optional<Ast> try_parse(const std::string& source) const = 0;
};

const LanguageProfile& mini_profile();
const LanguageProfile* find_profile(const std::string& name); // nullptr if unknown

// Lexer tokens as strings (identifiers, literals, operators); used by the
// code-aware n-gram components.
std::vector<std::string> lex_tokens(const std::string& source);

} // namespace plbk::minilang
