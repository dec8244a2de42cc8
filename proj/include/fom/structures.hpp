#pragma once

// Colored graphs and guided pointer structures.
//
// A GuidedStructure is a simple undirected graph on the dense domain 0..n-1
// together with named vertex marks (unary relations) and named unary
// functions. Functions are total; a vertex with no explicit image maps to
// itself. Guidedness (f(x) = x or {x, f(x)} is an edge) is not enforced on
// construction so that broken inputs can be reported by validate_guided().

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace fom {

using Vertex = std::uint32_t;
using VertexSet = std::vector<Vertex>;  // sorted, duplicate-free

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

inline VertexSet make_vertex_set(std::vector<Vertex> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

inline bool contains(const VertexSet& s, Vertex v) {
    return std::binary_search(s.begin(), s.end(), v);
}

class Graph {
public:
    Graph() = default;
    explicit Graph(std::size_t n) : adj_(n) {}

    std::size_t size() const noexcept { return adj_.size(); }

    // Returns false if the edge was already present.
    bool add_edge(Vertex u, Vertex v) {
        if (u >= size() || v >= size()) throw InputError("edge endpoint out of range");
        if (u == v) throw InputError("self-loop on vertex " + std::to_string(u));
        auto& a = adj_[u];
        auto it = std::lower_bound(a.begin(), a.end(), v);
        if (it != a.end() && *it == v) return false;
        a.insert(it, v);
        auto& b = adj_[v];
        b.insert(std::lower_bound(b.begin(), b.end(), u), u);
        return true;
    }

    void remove_edge(Vertex u, Vertex v) {
        auto drop = [](VertexSet& s, Vertex x) {
            auto it = std::lower_bound(s.begin(), s.end(), x);
            if (it != s.end() && *it == x) s.erase(it);
        };
        drop(adj_.at(u), v);
        drop(adj_.at(v), u);
    }

    void toggle_edge(Vertex u, Vertex v) {
        if (has_edge(u, v))
            remove_edge(u, v);
        else
            add_edge(u, v);
    }

    bool has_edge(Vertex u, Vertex v) const {
        return u < size() && contains(adj_[u], v);
    }

    const VertexSet& neighbors(Vertex v) const { return adj_.at(v); }
    std::size_t degree(Vertex v) const { return adj_.at(v).size(); }

    std::size_t num_edges() const {
        std::size_t m = 0;
        for (const auto& a : adj_) m += a.size();
        return m / 2;
    }

    std::vector<std::pair<Vertex, Vertex>> edges() const {
        std::vector<std::pair<Vertex, Vertex>> out;
        for (Vertex u = 0; u < size(); ++u)
            for (Vertex v : adj_[u])
                if (u < v) out.emplace_back(u, v);
        return out;
    }

    // Raw adjacency lists; symmetry is not checked (see validate_guided).
    static Graph from_adjacency(std::vector<VertexSet> adj) {
        Graph g;
        for (auto& a : adj) a = make_vertex_set(std::move(a));
        g.adj_ = std::move(adj);
        return g;
    }

    bool operator==(const Graph&) const = default;

private:
    std::vector<VertexSet> adj_;
};

inline Graph induced_subgraph(const Graph& g, const VertexSet& keep) {
    std::vector<std::int64_t> idx(g.size(), -1);
    for (std::size_t i = 0; i < keep.size(); ++i) idx[keep[i]] = static_cast<std::int64_t>(i);
    Graph h(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i)
        for (Vertex w : g.neighbors(keep[i]))
            if (idx[w] > static_cast<std::int64_t>(i)) h.add_edge(static_cast<Vertex>(i), static_cast<Vertex>(idx[w]));
    return h;
}

// Connected components as sorted vertex lists, ordered by smallest member.
inline std::vector<VertexSet> connected_components(const Graph& g) {
    std::vector<char> seen(g.size(), 0);
    std::vector<VertexSet> comps;
    std::vector<Vertex> stack;
    for (Vertex s = 0; s < g.size(); ++s) {
        if (seen[s]) continue;
        VertexSet comp;
        seen[s] = 1;
        stack.push_back(s);
        while (!stack.empty()) {
            Vertex u = stack.back();
            stack.pop_back();
            comp.push_back(u);
            for (Vertex w : g.neighbors(u))
                if (!seen[w]) {
                    seen[w] = 1;
                    stack.push_back(w);
                }
        }
        std::sort(comp.begin(), comp.end());
        comps.push_back(std::move(comp));
    }
    return comps;
}

struct Signature {
    std::vector<std::string> unary_relations;
    std::vector<std::string> unary_functions;  // f_1, f_2, ... in this order

    bool has_relation(const std::string& name) const {
        return std::find(unary_relations.begin(), unary_relations.end(), name) != unary_relations.end();
    }
    // 1-based index, or 0 when absent.
    std::size_t function_index(const std::string& name) const {
        auto it = std::find(unary_functions.begin(), unary_functions.end(), name);
        return it == unary_functions.end() ? 0 : static_cast<std::size_t>(it - unary_functions.begin()) + 1;
    }
};

class GuidedStructure {
public:
    GuidedStructure() = default;
    explicit GuidedStructure(std::size_t n) : graph_(n) {}
    explicit GuidedStructure(Graph g) : graph_(std::move(g)) {}

    std::size_t size() const noexcept { return graph_.size(); }
    const Graph& graph() const noexcept { return graph_; }
    Graph& mutable_graph() noexcept { return graph_; }

    bool add_edge(Vertex u, Vertex v) { return graph_.add_edge(u, v); }
    bool adjacent(Vertex u, Vertex v) const { return graph_.has_edge(u, v); }

    // marks -----------------------------------------------------------------
    std::size_t mark_count() const noexcept { return mark_names_.size(); }
    const std::string& mark_name(std::size_t i) const { return mark_names_.at(i); }
    const VertexSet& mark_set(std::size_t i) const { return mark_sets_.at(i); }
    const std::vector<std::string>& mark_names() const noexcept { return mark_names_; }

    std::optional<std::size_t> mark_index(const std::string& name) const {
        auto it = mark_lookup_.find(name);
        if (it == mark_lookup_.end()) return std::nullopt;
        return it->second;
    }
    bool has_mark(const std::string& name) const { return mark_lookup_.count(name) != 0; }
    bool marked(std::size_t mark, Vertex v) const { return contains(mark_sets_[mark], v); }

    const VertexSet& mark_set(const std::string& name) const {
        auto i = mark_index(name);
        if (!i) throw InputError("unknown mark '" + name + "'");
        return mark_sets_[*i];
    }

    void add_mark(const std::string& name, VertexSet members) {
        if (mark_lookup_.count(name) || function_lookup_.count(name))
            throw InputError("symbol '" + name + "' already defined");
        members = make_vertex_set(std::move(members));
        if (!members.empty() && members.back() >= size()) throw InputError("mark '" + name + "' outside domain");
        mark_lookup_.emplace(name, mark_names_.size());
        mark_names_.push_back(name);
        mark_sets_.push_back(std::move(members));
    }

    // Adds v to the mark, creating the mark if needed.
    void mark_vertex(const std::string& name, Vertex v) {
        if (v >= size()) throw InputError("vertex out of range");
        auto i = mark_index(name);
        if (!i) {
            add_mark(name, {v});
            return;
        }
        auto& s = mark_sets_[*i];
        auto it = std::lower_bound(s.begin(), s.end(), v);
        if (it == s.end() || *it != v) s.insert(it, v);
    }

    // functions -------------------------------------------------------------
    std::size_t function_count() const noexcept { return fn_names_.size(); }
    const std::string& function_name(std::size_t i) const { return fn_names_.at(i); }
    const std::vector<Vertex>& function(std::size_t i) const { return fns_.at(i); }
    std::optional<std::size_t> function_index(const std::string& name) const {
        auto it = function_lookup_.find(name);
        if (it == function_lookup_.end()) return std::nullopt;
        return it->second;
    }

    // Adds an identity function.
    std::size_t add_function(const std::string& name) {
        if (mark_lookup_.count(name) || function_lookup_.count(name))
            throw InputError("symbol '" + name + "' already defined");
        std::vector<Vertex> id(size());
        for (Vertex v = 0; v < size(); ++v) id[v] = v;
        function_lookup_.emplace(name, fn_names_.size());
        fn_names_.push_back(name);
        fns_.push_back(std::move(id));
        return fns_.size() - 1;
    }

    void add_function(const std::string& name, std::vector<Vertex> images) {
        if (images.size() != size()) throw InputError("function '" + name + "' is not total");
        for (Vertex w : images)
            if (w >= size()) throw InputError("function '" + name + "' leaves the domain");
        std::size_t i = add_function(name);
        fns_[i] = std::move(images);
    }

    void set_function(std::size_t f, Vertex u, Vertex v) {
        if (u >= size() || v >= size()) throw InputError("function argument out of range");
        fns_.at(f)[u] = v;
    }

    Signature signature() const { return Signature{mark_names_, fn_names_}; }

    // Marks and functions compare by name, independent of insertion order.
    bool operator==(const GuidedStructure& o) const {
        if (!(graph_ == o.graph_)) return false;
        if (sorted_marks() != o.sorted_marks()) return false;
        return sorted_functions() == o.sorted_functions();
    }

private:
    std::map<std::string, VertexSet> sorted_marks() const {
        std::map<std::string, VertexSet> m;
        for (std::size_t i = 0; i < mark_names_.size(); ++i) m.emplace(mark_names_[i], mark_sets_[i]);
        return m;
    }
    std::map<std::string, std::vector<Vertex>> sorted_functions() const {
        std::map<std::string, std::vector<Vertex>> m;
        for (std::size_t i = 0; i < fn_names_.size(); ++i) m.emplace(fn_names_[i], fns_[i]);
        return m;
    }

    Graph graph_;
    std::vector<std::string> mark_names_;
    std::vector<VertexSet> mark_sets_;
    std::unordered_map<std::string, std::size_t> mark_lookup_;
    std::vector<std::string> fn_names_;
    std::vector<std::vector<Vertex>> fns_;
    std::unordered_map<std::string, std::size_t> function_lookup_;
};

// u != v adjacent iff uv is an edge or one is the image of the other.
inline Graph gaifman(const GuidedStructure& m) {
    Graph g = m.graph();
    for (std::size_t f = 0; f < m.function_count(); ++f) {
        const auto& fn = m.function(f);
        for (Vertex x = 0; x < m.size(); ++x)
            if (fn[x] != x) g.add_edge(x, fn[x]);
    }
    return g;
}

// Induced substructure on X; vertex i of the result is X[i]. Function values
// leaving X are clamped to the argument itself.
inline GuidedStructure restrict(const GuidedStructure& m, const VertexSet& x) {
    std::vector<std::int64_t> idx(m.size(), -1);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] >= m.size()) throw InputError("restriction set is not a subset of the domain");
        if (i > 0 && x[i] <= x[i - 1]) throw InputError("restriction set must be sorted and duplicate-free");
        idx[x[i]] = static_cast<std::int64_t>(i);
    }
    GuidedStructure r(induced_subgraph(m.graph(), x));
    for (std::size_t k = 0; k < m.mark_count(); ++k) {
        VertexSet s;
        for (Vertex v : m.mark_set(k))
            if (idx[v] >= 0) s.push_back(static_cast<Vertex>(idx[v]));
        r.add_mark(m.mark_name(k), std::move(s));
    }
    for (std::size_t f = 0; f < m.function_count(); ++f) {
        const auto& fn = m.function(f);
        std::vector<Vertex> img(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            std::int64_t j = idx[fn[x[i]]];
            img[i] = j >= 0 ? static_cast<Vertex>(j) : static_cast<Vertex>(i);
        }
        r.add_function(m.function_name(f), std::move(img));
    }
    return r;
}

inline GuidedStructure expand_monadic(const GuidedStructure& m, const std::map<std::string, VertexSet>& new_marks) {
    GuidedStructure r = m;
    for (const auto& [name, set] : new_marks) {
        if (m.has_mark(name) || m.function_index(name))
            throw InputError("expansion mark '" + name + "' clashes with an existing symbol");
        r.add_mark(name, set);
    }
    return r;
}

// Keeps only the listed marks (in the listed order); functions and edges stay.
inline GuidedStructure reduct_marks(const GuidedStructure& m, const std::vector<std::string>& keep) {
    GuidedStructure r(m.graph());
    for (const auto& name : keep) r.add_mark(name, m.mark_set(name));
    for (std::size_t f = 0; f < m.function_count(); ++f) r.add_function(m.function_name(f), m.function(f));
    return r;
}

struct Violation {
    enum class Kind { NotGuided, Asymmetric, SelfLoop };
    Kind kind;
    std::string function;  // empty for edge violations
    Vertex x;
    Vertex y;
    bool operator==(const Violation&) const = default;
};

inline std::vector<Violation> validate_guided(const GuidedStructure& m) {
    std::vector<Violation> out;
    const Graph& g = m.graph();
    for (Vertex u = 0; u < g.size(); ++u)
        for (Vertex v : g.neighbors(u)) {
            if (u == v)
                out.push_back({Violation::Kind::SelfLoop, {}, u, v});
            else if (v >= g.size() || !g.has_edge(v, u))
                out.push_back({Violation::Kind::Asymmetric, {}, u, v});
        }
    for (std::size_t f = 0; f < m.function_count(); ++f) {
        const auto& fn = m.function(f);
        for (Vertex x = 0; x < m.size(); ++x)
            if (fn[x] != x && !g.has_edge(x, fn[x]))
                out.push_back({Violation::Kind::NotGuided, m.function_name(f), x, fn[x]});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Graph file format:
//   n <count>
//   v <id> <mark-name>...
//   e <u> <v>
//   f <fname> <u> <v>      (f(u) = v)
// '#' starts a comment.

namespace detail {
inline Vertex parse_vertex(const std::string& tok, std::size_t n, std::size_t line) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(tok, &pos);
    } catch (const std::exception&) {
        throw ParseError(line, "expected vertex id, got '" + tok + "'");
    }
    if (pos != tok.size() || tok[0] == '-') throw ParseError(line, "expected vertex id, got '" + tok + "'");
    if (v >= n) throw ParseError(line, "vertex " + tok + " out of range");
    return static_cast<Vertex>(v);
}

// A token starting with '#' begins a comment; '#' inside a token is kept.
inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> toks;
    std::istringstream in(line);
    for (std::string t; in >> t;) {
        if (t[0] == '#') break;
        toks.push_back(t);
    }
    return toks;
}
}  // namespace detail

inline GuidedStructure parse_graph(std::istream& in) {
    std::optional<GuidedStructure> m;
    std::map<std::string, VertexSet> marks;
    std::vector<std::string> mark_order;
    struct FnEntry {
        std::string name;
        Vertex u, v;
        std::size_t line;
    };
    std::vector<FnEntry> fn_entries;
    std::string text;
    std::size_t line_no = 0;
    while (std::getline(in, text)) {
        ++line_no;
        auto toks = detail::split_ws(text);
        if (toks.empty()) continue;
        const std::string& d = toks[0];
        if (d == "n") {
            if (m) throw ParseError(line_no, "duplicate 'n' directive");
            if (toks.size() != 2) throw ParseError(line_no, "expected 'n <count>'");
            std::size_t cnt = detail::parse_vertex(toks[1], SIZE_MAX, line_no);
            m.emplace(cnt);
            continue;
        }
        if (!m) throw ParseError(line_no, "'n' directive must come first");
        const std::size_t n = m->size();
        if (d == "v") {
            if (toks.size() < 2) throw ParseError(line_no, "expected 'v <id> <mark>...'");
            Vertex v = detail::parse_vertex(toks[1], n, line_no);
            for (std::size_t i = 2; i < toks.size(); ++i) {
                if (!marks.count(toks[i])) mark_order.push_back(toks[i]);
                marks[toks[i]].push_back(v);
            }
        } else if (d == "e") {
            if (toks.size() != 3) throw ParseError(line_no, "expected 'e <u> <v>'");
            Vertex u = detail::parse_vertex(toks[1], n, line_no);
            Vertex v = detail::parse_vertex(toks[2], n, line_no);
            if (u == v) throw ParseError(line_no, "self-loop");
            if (!m->add_edge(u, v)) throw ParseError(line_no, "parallel edge");
        } else if (d == "f") {
            if (toks.size() != 4) throw ParseError(line_no, "expected 'f <fname> <u> <v>'");
            fn_entries.push_back({toks[1], detail::parse_vertex(toks[2], n, line_no),
                                  detail::parse_vertex(toks[3], n, line_no), line_no});
        } else {
            throw ParseError(line_no, "unknown directive '" + d + "'");
        }
    }
    if (!m) throw ParseError(line_no, "missing 'n' directive");
    for (const auto& name : mark_order) {
        try {
            m->add_mark(name, make_vertex_set(marks[name]));
        } catch (const InputError& e) {
            throw ParseError(line_no, e.what());
        }
    }
    std::map<std::string, std::map<Vertex, Vertex>> seen;
    for (const auto& e : fn_entries) {
        auto idx = m->function_index(e.name);
        if (!idx) {
            if (m->has_mark(e.name)) throw ParseError(e.line, "function name clashes with mark '" + e.name + "'");
            idx = m->add_function(e.name);
        }
        auto [it, fresh] = seen[e.name].emplace(e.u, e.v);
        if (!fresh && it->second != e.v) throw ParseError(e.line, "conflicting images for " + e.name);
        if (e.u != e.v && !m->adjacent(e.u, e.v)) throw ParseError(e.line, "function " + e.name + " is not guided");
        m->set_function(*idx, e.u, e.v);
    }
    return std::move(*m);
}

inline GuidedStructure parse_graph(const std::string& text) {
    std::istringstream in(text);
    return parse_graph(in);
}

inline std::string print_graph(const GuidedStructure& m) {
    std::ostringstream out;
    out << "n " << m.size() << "\n";
    for (Vertex v = 0; v < m.size(); ++v) {
        std::vector<std::string> names;
        for (std::size_t k = 0; k < m.mark_count(); ++k)
            if (m.marked(k, v)) names.push_back(m.mark_name(k));
        if (names.empty()) continue;
        out << "v " << v;
        for (const auto& s : names) out << ' ' << s;
        out << "\n";
    }
    for (auto [u, v] : m.graph().edges()) out << "e " << u << ' ' << v << "\n";
    for (std::size_t f = 0; f < m.function_count(); ++f)
        for (Vertex x = 0; x < m.size(); ++x)
            if (m.function(f)[x] != x) out << "f " << m.function_name(f) << ' ' << x << ' ' << m.function(f)[x] << "\n";
    return out.str();
}

}  // namespace fom
