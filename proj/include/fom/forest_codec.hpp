#pragma once

// Encoding of bounded tree-depth guided structures as colored rooted forests
// and back.
//
// Forest vocabulary: tree edges, the parent function "pi" (index 1), level
// marks "P#i", edge marks "TE#j#i" and function marks "Tf#<f>#j#i#<e>".
// With v at level i and u its level-j ancestor (j < i):
//   TE#j#i(v)      uv is an edge
//   Tf#f#j#i#1(v)  f(v) = u
//   Tf#f#j#i#0(v)  f(u) = v

#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fom/coloring.hpp"
#include "fom/logic.hpp"
#include "fom/structures.hpp"

namespace fom {

inline const std::string kParentFunction = "pi";

inline std::string level_mark(std::size_t i) { return "P#" + std::to_string(i); }
inline std::string edge_mark(std::size_t j, std::size_t i) { return "TE#" + std::to_string(j) + "#" + std::to_string(i); }
inline std::string function_mark(const std::string& f, std::size_t j, std::size_t i, int e) {
    return "Tf#" + f + "#" + std::to_string(j) + "#" + std::to_string(i) + "#" + std::to_string(e);
}

struct ColoredForest {
    EliminationForest forest;
    GuidedStructure y;  // tree edges, pi, all marks
    std::vector<std::string> source_functions;
    std::vector<std::string> source_marks;

    std::size_t size() const { return forest.size(); }
    std::size_t height() const { return forest.height; }
};

class DecodeError : public Error {
public:
    using Error::Error;
};

// Builds the forest structure; level marks are derived from `f`.
inline ColoredForest assemble_forest(EliminationForest f, const std::map<std::string, VertexSet>& marks,
                                     std::vector<std::string> source_functions = {},
                                     std::vector<std::string> source_marks = {}) {
    ColoredForest out;
    Graph g(f.size());
    for (Vertex v = 0; v < f.size(); ++v)
        if (!f.is_root(v)) g.add_edge(v, f.parent[v]);
    out.y = GuidedStructure(std::move(g));
    out.y.add_function(kParentFunction, f.parent);
    for (const auto& name : source_marks) {
        auto it = marks.find(name);
        out.y.add_mark(name, it == marks.end() ? VertexSet{} : it->second);
    }
    std::vector<VertexSet> levels(f.height + 1);
    for (Vertex v = 0; v < f.size(); ++v) levels[f.level[v]].push_back(v);
    for (std::size_t i = 1; i <= f.height; ++i) out.y.add_mark(level_mark(i), std::move(levels[i]));
    for (const auto& [name, set] : marks) {
        if (name.rfind("P#", 0) == 0) continue;
        if (!out.y.has_mark(name)) out.y.add_mark(name, make_vertex_set(set));
    }
    out.forest = std::move(f);
    out.source_functions = std::move(source_functions);
    out.source_marks = std::move(source_marks);
    return out;
}

namespace detail {
struct CodecMark {
    enum class Kind { Level, Edge, Function, Other } kind = Kind::Other;
    std::string function;
    std::size_t j = 0, i = 0;
    int e = 0;
};

inline CodecMark classify_mark(const std::string& name) {
    CodecMark c;
    auto fields = [&](const std::string& s) {
        std::vector<std::string> out;
        std::size_t start = 0;
        while (true) {
            auto pos = s.find('#', start);
            out.push_back(s.substr(start, pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        return out;
    };
    auto num = [](const std::string& s) -> std::optional<std::size_t> {
        if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) return std::nullopt;
        return std::stoul(s);
    };
    auto parts = fields(name);
    if (parts.size() == 2 && parts[0] == "P" && num(parts[1])) {
        c.kind = CodecMark::Kind::Level;
        c.i = *num(parts[1]);
    } else if (parts.size() == 3 && parts[0] == "TE" && num(parts[1]) && num(parts[2])) {
        c.kind = CodecMark::Kind::Edge;
        c.j = *num(parts[1]);
        c.i = *num(parts[2]);
    } else if (parts.size() >= 5 && parts[0] == "Tf") {
        auto n = parts.size();
        if (num(parts[n - 3]) && num(parts[n - 2]) && (parts[n - 1] == "0" || parts[n - 1] == "1")) {
            c.kind = CodecMark::Kind::Function;
            c.j = *num(parts[n - 3]);
            c.i = *num(parts[n - 2]);
            c.e = parts[n - 1] == "1" ? 1 : 0;
            auto first = name.find('#') + 1;
            auto last = name.size() - parts[n - 1].size() - parts[n - 2].size() - parts[n - 3].size() - 3;
            c.function = name.substr(first, last - first);
        }
    }
    return c;
}
}  // namespace detail

inline ColoredForest encode_IY(const GuidedStructure& m, const EliminationForest& f) {
    if (f.size() != m.size()) throw InputError("forest and structure have different domains");
    if (!validate_guided(m).empty()) throw InputError("structure is not a guided pointer structure");
    if (auto bad = closure_violation(gaifman(m), f))
        throw InputError("edge " + std::to_string(bad->first) + "-" + std::to_string(bad->second) +
                         " does not join an ancestor-descendant pair");
    std::map<std::string, VertexSet> marks;
    std::vector<std::string> source_marks, source_functions;
    for (std::size_t k = 0; k < m.mark_count(); ++k) {
        if (detail::classify_mark(m.mark_name(k)).kind != detail::CodecMark::Kind::Other)
            throw InputError("mark name '" + m.mark_name(k) + "' is reserved by the forest encoding");
        source_marks.push_back(m.mark_name(k));
        marks[m.mark_name(k)] = m.mark_set(k);
    }
    for (auto [u, v] : m.graph().edges()) {
        if (f.level[u] > f.level[v]) std::swap(u, v);
        marks[edge_mark(f.level[u], f.level[v])].push_back(v);
    }
    for (std::size_t fi = 0; fi < m.function_count(); ++fi) {
        const auto& name = m.function_name(fi);
        if (name == kParentFunction) throw InputError("function name 'pi' is reserved by the forest encoding");
        source_functions.push_back(name);
        const auto& fn = m.function(fi);
        for (Vertex v = 0; v < m.size(); ++v) {
            Vertex w = fn[v];
            if (w == v) continue;
            if (f.level[w] < f.level[v])
                marks[function_mark(name, f.level[w], f.level[v], 1)].push_back(v);
            else
                marks[function_mark(name, f.level[v], f.level[w], 0)].push_back(w);
        }
    }
    for (auto& [name, set] : marks) set = make_vertex_set(std::move(set));
    return assemble_forest(f, marks, std::move(source_functions), std::move(source_marks));
}


inline GuidedStructure decode_IS(const ColoredForest& cf) {
    const auto& f = cf.forest;
    GuidedStructure m(f.size());
    std::map<std::string, std::vector<Vertex>> images;
    std::map<std::string, std::vector<char>> set_by;
    for (const auto& name : cf.source_functions) {
        std::vector<Vertex> id(f.size());
        std::iota(id.begin(), id.end(), Vertex{0});
        images[name] = std::move(id);
        set_by[name].assign(f.size(), 0);
    }
    auto assign = [&](const std::string& fn, Vertex from, Vertex to) {
        auto it = images.find(fn);
        if (it == images.end()) throw DecodeError("mark refers to unknown function '" + fn + "'");
        auto& done = set_by[fn];
        if (done[from] && it->second[from] != to)
            throw DecodeError("conflicting images for " + fn + "(" + std::to_string(from) + ")");
        it->second[from] = to;
        done[from] = 1;
    };
    for (std::size_t k = 0; k < cf.y.mark_count(); ++k) {
        const auto& name = cf.y.mark_name(k);
        auto c = detail::classify_mark(name);
        if (c.kind == detail::CodecMark::Kind::Other || c.kind == detail::CodecMark::Kind::Level) continue;
        if (c.j == 0 || c.j >= c.i) throw DecodeError("mark '" + name + "' has invalid levels");
        for (Vertex v : cf.y.mark_set(k)) {
            if (f.level[v] != c.i) throw DecodeError("mark '" + name + "' on a vertex at another level");
            Vertex u = f.ancestor_at_level(v, static_cast<std::uint32_t>(c.j));
            if (c.kind == detail::CodecMark::Kind::Edge)
                m.add_edge(u, v);
            else if (c.e == 1)
                assign(c.function, v, u);
            else
                assign(c.function, u, v);
        }
    }
    for (const auto& name : cf.source_marks) m.add_mark(name, cf.y.mark_set(name));
    for (const auto& name : cf.source_functions) m.add_function(name, images[name]);
    return m;
}

// pullback -------------------------------------------------------------------

namespace detail {

class Pullback {
public:
    Pullback(const Formula& phi, const std::vector<std::string>& source_functions, std::size_t h)
        : fns_(source_functions), h_(h) {
        collect_names(phi);
    }

    Formula run(const Formula& f) {
        switch (f->op) {
            case Op::True:
            case Op::False: return f;
            case Op::Not: return f_not(run(f->kids[0]));
            case Op::And:
            case Op::Or: {
                std::vector<Formula> kids;
                for (const auto& k : f->kids) kids.push_back(run(k));
                return f->op == Op::And ? f_and(std::move(kids)) : f_or(std::move(kids));
            }
            case Op::Exists: return f_exists(f->name, run(f->kids[0]));
            case Op::Forall: return f_forall(f->name, run(f->kids[0]));
            case Op::ModExists: return f_mod_exists(f->residue, f->modulus, f->name, run(f->kids[0]));
            default: return atom(f);
        }
    }

private:
    void collect_names(const Formula& f) {
        for (const auto& t : f->terms) names_.insert(t.var);
        if (is_quantifier(f->op)) names_.insert(f->name);
        for (const auto& k : f->kids) collect_names(k);
    }

    std::string fresh() {
        std::string s;
        do s = "u#" + std::to_string(counter_++);
        while (names_.count(s));
        return s;
    }

    static Term up(const std::string& v, std::size_t d) { return Term{v, std::vector<std::size_t>(d, 1)}; }

    // w = f(z) in the decoded structure, without the default case.
    Formula moves(const std::string& fn, const std::string& z, const std::string& w) const {
        std::vector<Formula> alts;
        for (std::size_t i = 2; i <= h_; ++i)
            for (std::size_t j = 1; j < i; ++j) {
                alts.push_back(f_and({f_mark(level_mark(i), var_term(z)), f_eq(var_term(w), up(z, i - j)),
                                      f_mark(function_mark(fn, j, i, 1), var_term(z))}));
                alts.push_back(f_and({f_mark(level_mark(i), var_term(w)), f_eq(var_term(z), up(w, i - j)),
                                      f_mark(function_mark(fn, j, i, 0), var_term(w))}));
            }
        return f_or(std::move(alts));
    }

    Formula graph_of(const std::string& fn, const std::string& z, const std::string& w) {
        std::string u = fresh();
        return f_or({moves(fn, z, w), f_and({f_eq(var_term(w), var_term(z)), f_not(f_exists(u, moves(fn, z, u)))})});
    }

    Formula edge(const std::string& a, const std::string& b) const {
        std::vector<Formula> alts;
        for (std::size_t i = 2; i <= h_; ++i)
            for (std::size_t j = 1; j < i; ++j)
                for (auto [x, y] : {std::pair{a, b}, std::pair{b, a}})
                    alts.push_back(f_and({f_mark(level_mark(i), var_term(y)), f_eq(var_term(x), up(y, i - j)),
                                          f_mark(edge_mark(j, i), var_term(y))}));
        return f_or(std::move(alts));
    }

    // Rewrites a term into a fresh variable chain; returns the variable.
    std::string unnest(const Term& t, std::vector<std::pair<std::string, Formula>>& defs) {
        std::string cur = t.var;
        for (auto it = t.fns.rbegin(); it != t.fns.rend(); ++it) {
            if (*it == 0 || *it > fns_.size()) throw UnknownSymbol("function index " + std::to_string(*it) + " not in signature");
            std::string w = fresh();
            defs.emplace_back(w, graph_of(fns_[*it - 1], cur, w));
            cur = w;
        }
        return cur;
    }

    Formula atom(const Formula& f) {
        std::vector<std::pair<std::string, Formula>> defs;
        std::vector<std::string> vars;
        for (const auto& t : f->terms) vars.push_back(unnest(t, defs));
        Formula core;
        switch (f->op) {
            case Op::Edge: core = edge(vars[0], vars[1]); break;
            case Op::Eq: core = f_eq(var_term(vars[0]), var_term(vars[1])); break;
            default: core = f_mark(f->name, var_term(vars[0])); break;
        }
        for (auto it = defs.rbegin(); it != defs.rend(); ++it) core = f_exists(it->first, f_and({it->second, core}));
        return core;
    }

    std::vector<std::string> fns_;
    std::size_t h_;
    std::set<std::string> names_;
    std::size_t counter_ = 0;
};

}  // namespace detail

// Formula over the forest vocabulary equivalent, on any forest of height <= h,
// to phi evaluated on the decoded structure.
inline Formula pullback_IS(const Formula& phi, const std::vector<std::string>& source_functions, std::size_t h) {
    detail::Pullback pb(phi, source_functions, h);
    return pb.run(phi);
}

inline Formula pullback_IS(const Formula& phi, const ColoredForest& cf) {
    return pullback_IS(phi, cf.source_functions, cf.height());
}

// forest file format -------------------------------------------------------
//   n <count>
//   s <function>         source function names, in order
//   k <mark>             source mark names, in order
//   r <v>                root
//   p <child> <parent>
//   m <v> <mark>         any mark except the derived level marks

inline std::string print_forest(const ColoredForest& cf) {
    std::ostringstream out;
    out << "n " << cf.size() << "\n";
    for (const auto& s : cf.source_functions) out << "s " << s << "\n";
    for (const auto& k : cf.source_marks) out << "k " << k << "\n";
    for (Vertex v = 0; v < cf.size(); ++v) {
        if (cf.forest.is_root(v))
            out << "r " << v << "\n";
        else
            out << "p " << v << ' ' << cf.forest.parent[v] << "\n";
    }
    for (std::size_t k = 0; k < cf.y.mark_count(); ++k) {
        const auto& name = cf.y.mark_name(k);
        if (detail::classify_mark(name).kind == detail::CodecMark::Kind::Level) continue;
        for (Vertex v : cf.y.mark_set(k)) out << "m " << v << ' ' << name << "\n";
    }
    return out.str();
}

inline ColoredForest parse_forest(std::istream& in) {
    std::optional<std::size_t> n;
    std::vector<Vertex> parent;
    std::vector<char> placed;
    std::vector<std::string> fns, srcmarks;
    std::map<std::string, VertexSet> marks;
    std::string text;
    std::size_t line_no = 0;
    while (std::getline(in, text)) {
        ++line_no;
        auto toks = detail::split_ws(text);
        if (toks.empty()) continue;
        const std::string& d = toks[0];
        if (d == "n") {
            if (n || toks.size() != 2) throw ParseError(line_no, "expected a single 'n <count>'");
            n = detail::parse_vertex(toks[1], SIZE_MAX, line_no);
            parent.resize(*n);
            std::iota(parent.begin(), parent.end(), Vertex{0});
            placed.assign(*n, 0);
            continue;
        }
        if (!n) throw ParseError(line_no, "'n' directive must come first");
        if (d == "s" && toks.size() == 2) {
            fns.push_back(toks[1]);
        } else if (d == "k" && toks.size() == 2) {
            srcmarks.push_back(toks[1]);
        } else if (d == "r" && toks.size() == 2) {
            Vertex v = detail::parse_vertex(toks[1], *n, line_no);
            if (placed[v]) throw ParseError(line_no, "vertex placed twice");
            placed[v] = 1;
        } else if (d == "p" && toks.size() == 3) {
            Vertex c = detail::parse_vertex(toks[1], *n, line_no);
            Vertex p = detail::parse_vertex(toks[2], *n, line_no);
            if (placed[c]) throw ParseError(line_no, "vertex placed twice");
            if (c == p) throw ParseError(line_no, "use 'r' for roots");
            placed[c] = 1;
            parent[c] = p;
        } else if (d == "m" && toks.size() == 3) {
            marks[toks[2]].push_back(detail::parse_vertex(toks[1], *n, line_no));
        } else {
            throw ParseError(line_no, "unknown or malformed directive '" + d + "'");
        }
    }
    if (!n) throw ParseError(line_no, "missing 'n' directive");
    EliminationForest f;
    try {
        f = forest_from_parents(parent);
    } catch (const InputError& e) {
        throw ParseError(line_no, e.what());
    }
    for (auto& [name, set] : marks) set = make_vertex_set(std::move(set));
    return assemble_forest(std::move(f), marks, std::move(fns), std::move(srcmarks));
}

inline ColoredForest parse_forest(const std::string& text) {
    std::istringstream in(text);
    return parse_forest(in);
}

}  // namespace fom
