#pragma once

// First-order formulas with modulo-counting quantifiers (FOM), their parser
// and printer, and the exhaustive reference evaluator.
//
// Grammar (precedence ! > & > |, quantifier bodies extend to the right):
//
//   phi  := 'E' var '.' phi | 'A' var '.' phi
//         | 'Emod[' nat ',' nat ']' var '.' phi
//         | phi '|' phi | phi '&' phi | '!' phi | '(' phi ')' | atom
//   atom := 'adj(' term ',' term ')' | name '(' term ')' | term '=' term
//         | 'true' | 'false'
//   term := var | name '(' term ')'

#include <cctype>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "fom/structures.hpp"

namespace fom {

// f_alpha(var) with alpha = (a1, ..., am) denotes f_a1(f_a2(...f_am(var))).
// Indices are 1-based positions in the ambient signature's function list.
struct Term {
    std::string var;
    std::vector<std::size_t> fns;

    bool operator==(const Term&) const = default;
    auto operator<=>(const Term&) const = default;
};

inline Term var_term(std::string v) { return Term{std::move(v), {}}; }

enum class Op { True, False, Edge, Mark, Eq, Not, And, Or, Exists, Forall, ModExists };

struct Node;
using Formula = std::shared_ptr<const Node>;

struct Node {
    Op op;
    std::vector<Term> terms;     // atoms
    std::string name;            // mark name, or bound variable for quantifiers
    std::vector<Formula> kids;   // connectives and quantifier bodies
    std::uint32_t residue = 0;   // ModExists: a
    std::uint32_t modulus = 1;   // ModExists: b
};

class UnboundVariable : public Error {
public:
    using Error::Error;
};

// builders ------------------------------------------------------------------

inline Formula make_node(Node n) { return std::make_shared<const Node>(std::move(n)); }
inline Formula f_true() { return make_node({Op::True}); }
inline Formula f_false() { return make_node({Op::False}); }
inline Formula f_bool(bool b) { return b ? f_true() : f_false(); }
inline Formula f_edge(Term a, Term b) { return make_node({Op::Edge, {std::move(a), std::move(b)}}); }
inline Formula f_mark(std::string name, Term t) { return make_node({Op::Mark, {std::move(t)}, std::move(name)}); }
inline Formula f_eq(Term a, Term b) { return make_node({Op::Eq, {std::move(a), std::move(b)}}); }
inline Formula f_not(Formula f) { return make_node({Op::Not, {}, {}, {std::move(f)}}); }

inline Formula f_and(std::vector<Formula> fs) {
    if (fs.empty()) return f_true();
    if (fs.size() == 1) return fs.front();
    return make_node({Op::And, {}, {}, std::move(fs)});
}
inline Formula f_or(std::vector<Formula> fs) {
    if (fs.empty()) return f_false();
    if (fs.size() == 1) return fs.front();
    return make_node({Op::Or, {}, {}, std::move(fs)});
}
inline Formula f_exists(std::string v, Formula body) { return make_node({Op::Exists, {}, std::move(v), {std::move(body)}}); }
inline Formula f_forall(std::string v, Formula body) { return make_node({Op::Forall, {}, std::move(v), {std::move(body)}}); }
inline Formula f_mod_exists(std::uint32_t a, std::uint32_t b, std::string v, Formula body) {
    if (b == 0 || a >= b) throw InputError("malformed modulus: need 0 <= a < b");
    Node n{Op::ModExists, {}, std::move(v), {std::move(body)}};
    n.residue = a;
    n.modulus = b;
    return make_node(std::move(n));
}

inline bool is_quantifier(Op op) { return op == Op::Exists || op == Op::Forall || op == Op::ModExists; }
inline bool is_atom(Op op) { return op == Op::Edge || op == Op::Mark || op == Op::Eq || op == Op::True || op == Op::False; }

inline bool is_quantifier_free(const Formula& f) {
    if (is_quantifier(f->op)) return false;
    for (const auto& k : f->kids)
        if (!is_quantifier_free(k)) return false;
    return true;
}

inline std::size_t quantifier_depth(const Formula& f) {
    std::size_t d = 0;
    for (const auto& k : f->kids) d = std::max(d, quantifier_depth(k));
    return d + (is_quantifier(f->op) ? 1 : 0);
}

// lcm of all moduli (1 when there are none).
inline std::uint64_t moduli_lcm(const Formula& f) {
    std::uint64_t l = f->op == Op::ModExists ? f->modulus : 1;
    for (const auto& k : f->kids) l = std::lcm(l, moduli_lcm(k));
    return l;
}

// Free variables in first-occurrence order.
inline std::vector<std::string> free_vars(const Formula& f) {
    std::vector<std::string> out;
    std::vector<std::string> bound;
    std::function<void(const Formula&)> walk = [&](const Formula& g) {
        for (const auto& t : g->terms)
            if (std::find(bound.begin(), bound.end(), t.var) == bound.end() &&
                std::find(out.begin(), out.end(), t.var) == out.end())
                out.push_back(t.var);
        if (is_quantifier(g->op)) bound.push_back(g->name);
        for (const auto& k : g->kids) walk(k);
        if (is_quantifier(g->op)) bound.pop_back();
    };
    walk(f);
    return out;
}

// Every composition tuple occurring on a term of a quantifier-free formula,
// together with the empty tuple.
inline std::set<std::vector<std::size_t>> collect_term_tuples(const Formula& rho) {
    if (!is_quantifier_free(rho)) throw InputError("collect_term_tuples: formula is not quantifier-free");
    std::set<std::vector<std::size_t>> out{{}};
    std::function<void(const Formula&)> walk = [&](const Formula& g) {
        for (const auto& t : g->terms) out.insert(t.fns);
        for (const auto& k : g->kids) walk(k);
    };
    walk(rho);
    return out;
}

// Closes a tuple set under suffixes, i.e. adds every inner subterm position.
inline std::set<std::vector<std::size_t>> suffix_closure(const std::set<std::vector<std::size_t>>& tuples) {
    std::set<std::vector<std::size_t>> out;
    for (const auto& t : tuples)
        for (std::size_t i = 0; i <= t.size(); ++i) out.insert(std::vector<std::size_t>(t.begin() + static_cast<std::ptrdiff_t>(i), t.end()));
    return out;
}

// Rewrites A x. phi into !E x. !phi.
inline Formula eliminate_forall(const Formula& f) {
    std::vector<Formula> kids;
    kids.reserve(f->kids.size());
    for (const auto& k : f->kids) kids.push_back(eliminate_forall(k));
    if (f->op == Op::Forall) return f_not(f_exists(f->name, f_not(kids.front())));
    Node n = *f;
    n.kids = std::move(kids);
    return make_node(std::move(n));
}

// Renames free occurrences of `from` to `to` (to must not be captured).
inline Formula rename_free(const Formula& f, const std::string& from, const std::string& to) {
    if (is_quantifier(f->op) && f->name == from) return f;
    Node n = *f;
    for (auto& t : n.terms)
        if (t.var == from) t.var = to;
    for (auto& k : n.kids) k = rename_free(k, from, to);
    return make_node(std::move(n));
}

// printing ------------------------------------------------------------------

inline std::string print_term(const Term& t, const std::vector<std::string>& fn_names) {
    std::string s = t.var;
    for (auto it = t.fns.rbegin(); it != t.fns.rend(); ++it) {
        std::string name = (*it >= 1 && *it <= fn_names.size()) ? fn_names[*it - 1] : "f" + std::to_string(*it);
        s = name + "(" + s + ")";
    }
    return s;
}

inline std::string print_formula(const Formula& f, const std::vector<std::string>& fn_names = {}) {
    auto term = [&](const Term& t) { return print_term(t, fn_names); };
    switch (f->op) {
        case Op::True: return "true";
        case Op::False: return "false";
        case Op::Edge: return "adj(" + term(f->terms[0]) + "," + term(f->terms[1]) + ")";
        case Op::Mark: return f->name + "(" + term(f->terms[0]) + ")";
        case Op::Eq: return term(f->terms[0]) + "=" + term(f->terms[1]);
        case Op::Not: return "!" + print_formula(f->kids[0], fn_names);
        case Op::And:
        case Op::Or: {
            std::string s = "(";
            for (std::size_t i = 0; i < f->kids.size(); ++i) {
                if (i) s += f->op == Op::And ? " & " : " | ";
                s += print_formula(f->kids[i], fn_names);
            }
            return s + ")";
        }
        case Op::Exists: return "(E " + f->name + ". " + print_formula(f->kids[0], fn_names) + ")";
        case Op::Forall: return "(A " + f->name + ". " + print_formula(f->kids[0], fn_names) + ")";
        case Op::ModExists:
            return "(Emod[" + std::to_string(f->residue) + "," + std::to_string(f->modulus) + "] " + f->name + ". " +
                   print_formula(f->kids[0], fn_names) + ")";
    }
    return {};
}

// parsing -------------------------------------------------------------------

class FormulaSyntaxError : public Error {
public:
    FormulaSyntaxError(std::size_t pos, const std::string& what)
        : Error("formula position " + std::to_string(pos) + ": " + what), pos_(pos) {}
    std::size_t position() const noexcept { return pos_; }

private:
    std::size_t pos_;
};

class UnknownSymbol : public Error {
public:
    using Error::Error;
};

namespace detail {

class FormulaParser {
public:
    FormulaParser(const std::string& text, const Signature& sig) : s_(text), sig_(sig) {
        std::size_t i = 0;
        while (i < s_.size()) {
            if (is_ident_char(s_[i])) {
                std::size_t j = i;
                while (j < s_.size() && is_ident_char(s_[j])) ++j;
                used_.insert(s_.substr(i, j - i));
                i = j;
            } else {
                ++i;
            }
        }
    }

    Formula parse() {
        Formula f = disjunction();
        skip_ws();
        if (pos_ != s_.size()) fail("unexpected trailing input");
        return f;
    }

private:
    static bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
    static bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '#'; }

    [[noreturn]] void fail(const std::string& what) const { throw FormulaSyntaxError(pos_, what); }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool peek(char c) {
        skip_ws();
        return pos_ < s_.size() && s_[pos_] == c;
    }
    bool accept(char c) {
        if (!peek(c)) return false;
        ++pos_;
        return true;
    }
    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }
    std::string peek_ident() {
        skip_ws();
        if (pos_ >= s_.size() || !is_ident_start(s_[pos_])) return {};
        std::size_t j = pos_;
        while (j < s_.size() && is_ident_char(s_[j])) ++j;
        return s_.substr(pos_, j - pos_);
    }
    std::string ident() {
        std::string id = peek_ident();
        if (id.empty()) fail("expected identifier");
        pos_ += id.size();
        return id;
    }
    std::uint32_t nat() {
        skip_ws();
        std::size_t j = pos_;
        while (j < s_.size() && std::isdigit(static_cast<unsigned char>(s_[j]))) ++j;
        if (j == pos_) fail("expected natural number");
        auto v = std::stoull(s_.substr(pos_, j - pos_));
        if (v > 1000000) fail("number too large");
        pos_ = j;
        return static_cast<std::uint32_t>(v);
    }

    std::string bind(const std::string& v) {
        std::string name = v;
        if (std::find(scope_.begin(), scope_.end(), v) != scope_.end()) {
            do {
                name = v + "_" + std::to_string(++fresh_);
            } while (used_.count(name));
            used_.insert(name);
        }
        scope_.push_back(v);
        renames_.push_back(name);
        return name;
    }
    void unbind() {
        scope_.pop_back();
        renames_.pop_back();
    }
    std::string resolve_var(const std::string& v) const {
        for (std::size_t i = scope_.size(); i-- > 0;)
            if (scope_[i] == v) return renames_[i];
        return v;
    }

    Formula disjunction() {
        std::vector<Formula> parts{conjunction()};
        while (accept('|')) parts.push_back(conjunction());
        return f_or(std::move(parts));
    }
    Formula conjunction() {
        std::vector<Formula> parts{unary()};
        while (accept('&')) parts.push_back(unary());
        return f_and(std::move(parts));
    }

    Formula quantified(Op op, std::uint32_t a = 0, std::uint32_t b = 1) {
        std::string v = ident();
        if (v == "E" || v == "A" || v == "Emod") fail("reserved word used as variable");
        expect('.');
        std::string name = bind(v);
        Formula body = disjunction();
        unbind();
        if (op == Op::Exists) return f_exists(name, body);
        if (op == Op::Forall) return f_forall(name, body);
        return f_mod_exists(a, b, name, body);
    }

    Formula unary() {
        if (accept('!')) return f_not(unary());
        std::string id = peek_ident();
        if (id == "E" || id == "A") {
            pos_ += 1;
            return quantified(id == "E" ? Op::Exists : Op::Forall);
        }
        if (id == "Emod") {
            std::size_t at = pos_;
            pos_ += 4;
            expect('[');
            std::uint32_t a = nat();
            expect(',');
            std::uint32_t b = nat();
            expect(']');
            if (b == 0 || a >= b) {
                pos_ = at;
                fail("malformed modulus: need 0 <= a < b");
            }
            return quantified(Op::ModExists, a, b);
        }
        return primary();
    }

    Formula primary() {
        if (accept('(')) {
            Formula f = disjunction();
            expect(')');
            return f;
        }
        std::string id = peek_ident();
        if (id == "true" || id == "false") {
            pos_ += id.size();
            return f_bool(id == "true");
        }
        if (id == "adj") {
            std::size_t save = pos_;
            pos_ += 3;
            if (accept('(')) {
                Term a = term();
                expect(',');
                Term b = term();
                expect(')');
                return f_edge(std::move(a), std::move(b));
            }
            pos_ = save;
        }
        if (!id.empty() && sig_.has_relation(id)) {
            pos_ += id.size();
            expect('(');
            Term t = term();
            expect(')');
            return f_mark(id, std::move(t));
        }
        Term a = term();
        expect('=');
        Term b = term();
        return f_eq(std::move(a), std::move(b));
    }

    Term term() {
        std::string id = ident();
        if (accept('(')) {
            std::size_t idx = sig_.function_index(id);
            if (idx == 0) {
                if (sig_.has_relation(id)) fail("mark '" + id + "' used as a function");
                throw UnknownSymbol("unknown function '" + id + "'");
            }
            Term inner = term();
            expect(')');
            inner.fns.insert(inner.fns.begin(), idx);
            return inner;
        }
        if (sig_.has_relation(id) || sig_.function_index(id)) fail("symbol '" + id + "' used as a variable");
        if (id == "E" || id == "A" || id == "Emod" || id == "adj") fail("reserved word used as variable");
        return var_term(resolve_var(id));
    }

    const std::string& s_;
    const Signature& sig_;
    std::size_t pos_ = 0;
    std::vector<std::string> scope_;
    std::vector<std::string> renames_;
    std::set<std::string> used_;
    std::size_t fresh_ = 0;
};

}  // namespace detail

inline Formula parse_formula(const std::string& text, const Signature& sig) {
    detail::FormulaParser p(text, sig);
    Formula f = p.parse();
    // Marks referenced through name(term) must exist; anything else was a term.
    return f;
}

// evaluation ----------------------------------------------------------------

using Valuation = std::map<std::string, Vertex>;

namespace detail {

// Formula compiled against one structure: variables become slots, marks and
// functions become indices.
class CompiledFormula {
public:
    struct CTerm {
        std::size_t slot;
        std::vector<std::size_t> fns;  // 0-based function indices, outermost first
    };
    struct CNode {
        Op op;
        std::vector<CTerm> terms;
        std::int64_t mark = -1;  // -1: mark absent from the structure (empty)
        std::size_t slot = 0;    // bound slot for quantifiers
        std::vector<std::size_t> kids;
        std::uint32_t residue = 0, modulus = 1;
    };

    CompiledFormula(const GuidedStructure& m, const Formula& f, const std::vector<std::string>& free)
        : m_(m) {
        for (const auto& v : free) scope_.emplace_back(v, slots_++);
        root_ = compile(f);
    }

    std::size_t slot_count() const { return slots_; }

    Vertex term_value(const CTerm& t, const std::vector<Vertex>& val) const {
        Vertex v = val[t.slot];
        for (auto it = t.fns.rbegin(); it != t.fns.rend(); ++it) v = m_.function(*it)[v];
        return v;
    }

    bool eval(std::vector<Vertex>& val) const { return eval(root_, val); }

private:
    std::size_t slot_of(const std::string& v) {
        for (auto it = scope_.rbegin(); it != scope_.rend(); ++it)
            if (it->first == v) return it->second;
        throw UnboundVariable("unbound free variable '" + v + "'");
    }

    CTerm compile_term(const Term& t) {
        CTerm c{slot_of(t.var), {}};
        for (std::size_t a : t.fns) {
            if (a == 0 || a > m_.function_count())
                throw UnknownSymbol("function index " + std::to_string(a) + " not in signature");
            c.fns.push_back(a - 1);
        }
        return c;
    }

    std::size_t compile(const Formula& f) {
        CNode n{f->op};
        for (const auto& t : f->terms) n.terms.push_back(compile_term(t));
        if (f->op == Op::Mark) {
            auto idx = m_.mark_index(f->name);
            n.mark = idx ? static_cast<std::int64_t>(*idx) : -1;
        }
        if (is_quantifier(f->op)) {
            n.slot = slots_++;
            n.residue = f->residue;
            n.modulus = f->modulus;
            scope_.emplace_back(f->name, n.slot);
            n.kids.push_back(compile(f->kids[0]));
            scope_.pop_back();
        } else {
            for (const auto& k : f->kids) n.kids.push_back(compile(k));
        }
        nodes_.push_back(std::move(n));
        return nodes_.size() - 1;
    }

    bool eval(std::size_t id, std::vector<Vertex>& val) const {
        const CNode& n = nodes_[id];
        switch (n.op) {
            case Op::True: return true;
            case Op::False: return false;
            case Op::Edge: return m_.adjacent(term_value(n.terms[0], val), term_value(n.terms[1], val));
            case Op::Eq: return term_value(n.terms[0], val) == term_value(n.terms[1], val);
            case Op::Mark: return n.mark >= 0 && m_.marked(static_cast<std::size_t>(n.mark), term_value(n.terms[0], val));
            case Op::Not: return !eval(n.kids[0], val);
            case Op::And:
                for (auto k : n.kids)
                    if (!eval(k, val)) return false;
                return true;
            case Op::Or:
                for (auto k : n.kids)
                    if (eval(k, val)) return true;
                return false;
            case Op::Exists:
                for (Vertex w = 0; w < m_.size(); ++w) {
                    val[n.slot] = w;
                    if (eval(n.kids[0], val)) return true;
                }
                return false;
            case Op::Forall:
                for (Vertex w = 0; w < m_.size(); ++w) {
                    val[n.slot] = w;
                    if (!eval(n.kids[0], val)) return false;
                }
                return true;
            case Op::ModExists: {
                std::uint64_t cnt = 0;
                for (Vertex w = 0; w < m_.size(); ++w) {
                    val[n.slot] = w;
                    if (eval(n.kids[0], val)) ++cnt;
                }
                return cnt % n.modulus == n.residue;
            }
        }
        return false;
    }

    const GuidedStructure& m_;
    std::vector<std::pair<std::string, std::size_t>> scope_;
    std::size_t slots_ = 0;
    std::vector<CNode> nodes_;
    std::size_t root_ = 0;
};

}  // namespace detail

// Reusable evaluator for one (structure, formula) pair.
class NaiveEvaluator {
public:
    NaiveEvaluator(const GuidedStructure& m, const Formula& f)
        : free_(free_vars(f)), compiled_(m, f, free_) {}

    const std::vector<std::string>& free_variables() const { return free_; }

    // Values for the free variables, in free_variables() order.
    bool eval(const std::vector<Vertex>& tuple) const {
        std::vector<Vertex> val(compiled_.slot_count(), 0);
        for (std::size_t i = 0; i < tuple.size(); ++i) val[i] = tuple[i];
        return compiled_.eval(val);
    }

    bool eval(const Valuation& nu) const {
        std::vector<Vertex> tuple;
        for (const auto& v : free_) {
            auto it = nu.find(v);
            if (it == nu.end()) throw UnboundVariable("unbound free variable '" + v + "'");
            tuple.push_back(it->second);
        }
        return eval(tuple);
    }

private:
    std::vector<std::string> free_;
    detail::CompiledFormula compiled_;
};

inline bool eval_naive(const GuidedStructure& m, const Formula& f, const Valuation& nu) {
    for (const auto& [v, x] : nu)
        if (x >= m.size()) throw InputError("valuation of '" + v + "' outside the domain");
    return NaiveEvaluator(m, f).eval(nu);
}

// |{ v : M |= phi(v) }| over tuples of the free variables.
inline std::uint64_t count_naive(const GuidedStructure& m, const Formula& f) {
    NaiveEvaluator ev(m, f);
    const std::size_t k = ev.free_variables().size();
    if (k == 0) return ev.eval(std::vector<Vertex>{}) ? 1 : 0;
    if (m.size() == 0) return 0;
    std::vector<Vertex> tuple(k, 0);
    std::uint64_t count = 0;
    while (true) {
        if (ev.eval(tuple)) ++count;
        std::size_t i = 0;
        while (i < k && ++tuple[i] == m.size()) tuple[i++] = 0;
        if (i == k) break;
    }
    return count;
}

}  // namespace fom
