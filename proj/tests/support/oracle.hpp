#pragma once

// Independent reference evaluator: walks the AST directly with a name map.
// Shares no code with the compiled evaluator in the library.

#include <map>
#include <string>

#include "fom/logic.hpp"

namespace oracle {

using fom::Formula;
using fom::GuidedStructure;
using fom::Op;
using fom::Term;
using fom::Vertex;

inline Vertex term_value(const GuidedStructure& m, const Term& t, const std::map<std::string, Vertex>& env) {
    Vertex v = env.at(t.var);
    for (std::size_t i = t.fns.size(); i-- > 0;) v = m.function(t.fns[i] - 1).at(v);
    return v;
}

inline bool holds(const GuidedStructure& m, const Formula& f, std::map<std::string, Vertex> env) {
    switch (f->op) {
        case Op::True: return true;
        case Op::False: return false;
        case Op::Edge: return m.graph().has_edge(term_value(m, f->terms[0], env), term_value(m, f->terms[1], env));
        case Op::Eq: return term_value(m, f->terms[0], env) == term_value(m, f->terms[1], env);
        case Op::Mark:
            return m.has_mark(f->name) && fom::contains(m.mark_set(f->name), term_value(m, f->terms[0], env));
        case Op::Not: return !holds(m, f->kids[0], env);
        case Op::And: {
            bool r = true;
            for (const auto& k : f->kids) r = r && holds(m, k, env);
            return r;
        }
        case Op::Or: {
            bool r = false;
            for (const auto& k : f->kids) r = r || holds(m, k, env);
            return r;
        }
        case Op::Exists:
        case Op::Forall:
        case Op::ModExists: {
            std::uint64_t hits = 0;
            for (Vertex w = 0; w < m.size(); ++w) {
                env[f->name] = w;
                if (holds(m, f->kids[0], env)) ++hits;
            }
            if (f->op == Op::Exists) return hits > 0;
            if (f->op == Op::Forall) return hits == m.size();
            return hits % f->modulus == f->residue;
        }
    }
    return false;
}

// Number of satisfying assignments to the listed variables.
inline std::uint64_t count(const GuidedStructure& m, const Formula& f, const std::vector<std::string>& vars) {
    std::uint64_t total = 0;
    std::map<std::string, Vertex> env;
    std::function<void(std::size_t)> rec = [&](std::size_t i) {
        if (i == vars.size()) {
            total += holds(m, f, env) ? 1 : 0;
            return;
        }
        for (Vertex w = 0; w < m.size(); ++w) {
            env[vars[i]] = w;
            rec(i + 1);
        }
    };
    rec(0);
    return total;
}

}  // namespace oracle
