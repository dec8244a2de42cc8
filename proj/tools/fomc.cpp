// fomc: command-line front end. JSON on stdout, timings on stderr.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "suites.hpp"

using json = nlohmann::ordered_json;

namespace {

// Problems with the invocation itself rather than its inputs.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A check that completed and came out negative, e.g. a roundtrip mismatch.
struct CheckFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << "fnv1a:" << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

class Timer {
public:
    void lap(const std::string& stage) {
        auto now = std::chrono::steady_clock::now();
        laps_[stage] = std::chrono::duration<double>(now - last_).count();
        last_ = now;
    }
    const json& laps() const { return laps_; }

private:
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
    json laps_ = json::object();
};

struct Run {
    std::string command;
    json inputs = json::object();
    json payload = json::object();
    std::string plain_text;  // raw artifact printed in plain mode
    Timer timer;

    std::string read(const std::string& role, const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw UsageError("cannot read " + role + " file '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        inputs[role] = {{"path", path}, {"digest", fnv1a(ss.str())}};
        return ss.str();
    }
    void note_text(const std::string& role, const std::string& text) { inputs[role] = {{"text", text}, {"digest", fnv1a(text)}}; }
};

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot write '" + path + "'");
    out << text;
}

// Artifact goes to the file when given, otherwise into the payload.
void emit_artifact(Run& run, const std::string& out_path, const std::string& text) {
    if (!out_path.empty()) {
        write_file(out_path, text);
        run.payload["output"] = out_path;
        run.payload["output_digest"] = fnv1a(text);
    } else {
        run.payload["text"] = text;
        run.plain_text = text;
    }
}

fom::Valuation parse_assign(const std::string& text, const fom::GuidedStructure& m) {
    fom::Valuation nu;
    if (text.empty()) return nu;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == item.size()) throw UsageError("--assign: expected var=vertex, got '" + item + "'");
        auto name = item.substr(0, eq), val = item.substr(eq + 1);
        if (!std::all_of(val.begin(), val.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
            throw UsageError("--assign: bad vertex '" + val + "'");
        auto v = std::stoull(val);
        if (v >= m.size()) throw fom::InputError("--assign: vertex " + val + " outside the domain");
        if (!nu.emplace(name, static_cast<fom::Vertex>(v)).second) throw UsageError("--assign: '" + name + "' assigned twice");
    }
    return nu;
}

std::vector<std::pair<std::string, std::string>> parse_bindings(const std::string& text, const char* flag) {
    std::vector<std::pair<std::string, std::string>> out;
    if (text.empty()) return out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == item.size())
            throw UsageError(std::string(flag) + ": expected NAME=file, got '" + item + "'");
        out.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    }
    return out;
}

json vertex_list(const fom::VertexSet& s) { return json(std::vector<fom::Vertex>(s.begin(), s.end())); }

// ---------------------------------------------------------------------------

struct McArgs {
    std::string graph, formula, assign;
};

void cmd_mc(Run& run, const McArgs& a, const fom::EliminationOptions& opt) {
    auto m = fom::parse_graph(run.read("graph", a.graph));
    run.note_text("formula", a.formula);
    auto phi = fom::parse_formula(a.formula, m.signature());
    auto nu = parse_assign(a.assign, m);
    run.timer.lap("parse");
    fom::PipelineEvaluator ev(m, phi, opt);
    bool result = ev.eval(nu);
    run.timer.lap("eval");
    run.payload["result"] = result;
    run.payload["pieces"] = ev.piece_count();
    run.payload["expansion_marks"] = ev.expansion_marks();
    run.payload["stages"] = ev.stage_count();
    run.payload["fallback"] = fom::has_plain_quantifier(phi);
}

void cmd_count(Run& run, const McArgs& a, const fom::EliminationOptions& opt) {
    auto m = fom::parse_graph(run.read("graph", a.graph));
    run.note_text("formula", a.formula);
    auto phi = fom::parse_formula(a.formula, m.signature());
    run.timer.lap("parse");
    auto r = fom::count_definable(m, phi, opt);
    run.timer.lap("count");
    run.payload["count"] = r.count;
    run.payload["fallback"] = r.fallback;
}

struct EliminateArgs {
    std::string graph, formula, out;
    std::size_t max_tuples = 64;
};

json stage_disjuncts(const fom::ModElimination& st, std::size_t cap, bool& truncated) {
    json out = json::array();
    std::size_t k = st.free_variables().size(), types = st.realized_types().size();
    if (types == 0) return out;
    std::vector<std::size_t> tbar(k, 0);
    while (true) {
        if (out.size() == cap) {
            truncated = true;
            break;
        }
        json pieces = json::array();
        for (std::size_t t = 0; t < types; ++t) {
            std::string key;
            auto colors = st.piece_colors(tbar, t);
            for (std::size_t i = 0; i < colors.size(); ++i) key += (i ? "." : "") + std::to_string(colors[i]);
            pieces.push_back({{"witness_type", t}, {"piece", key}});
        }
        out.push_back({{"types", tbar}, {"pieces", pieces}});
        std::size_t i = 0;
        while (i < k && ++tbar[i] == types) tbar[i++] = 0;
        if (i == k) break;
    }
    return out;
}

json zeta_json(const fom::EliminationPipeline& pipe, const fom::EliminationPipeline::ZetaNode& z, std::size_t cap) {
    json j = {{"kind", z.kind}, {"text", z.text}};
    if (z.kind == "stage") {
        const auto& st = pipe.stage(z.stage);
        bool truncated = false;
        j["stage"] = st.stage();
        j["bound"] = z.bound;
        j["residue"] = z.residue;
        j["modulus"] = z.modulus;
        j["free_variables"] = st.free_variables();
        j["disjuncts"] = stage_disjuncts(st, cap, truncated);
        j["truncated"] = truncated;
    }
    if (z.kind == "direct") {
        j["bound"] = z.bound;
        j["residue"] = z.residue;
        j["modulus"] = z.modulus;
    }
    if (!z.kids.empty()) {
        j["kids"] = json::array();
        for (const auto& k : z.kids) j["kids"].push_back(zeta_json(pipe, k, cap));
    }
    return j;
}

void cmd_eliminate(Run& run, const EliminateArgs& a, const fom::EliminationOptions& opt) {
    auto m = fom::parse_graph(run.read("graph", a.graph));
    run.note_text("formula", a.formula);
    auto phi = fom::parse_formula(a.formula, m.signature());
    run.timer.lap("parse");
    auto pipe = fom::eliminate_all(m, phi, opt);
    run.timer.lap("eliminate");
    json stages = json::array();
    std::size_t pieces = 0;
    for (std::size_t i = 0; i < pipe->stage_count(); ++i) {
        const auto& st = pipe->stage(i);
        st.build_all_pieces();
        json keys = json::array();
        for (const auto& colors : [&] {
                 std::set<std::vector<fom::Color>> ks;
                 std::size_t k = st.free_variables().size(), types = st.realized_types().size();
                 if (types == 0) return ks;
                 std::vector<std::size_t> tbar(k, 0);
                 while (true) {
                     for (std::size_t t = 0; t < types; ++t) ks.insert(st.piece_colors(tbar, t));
                     std::size_t j = 0;
                     while (j < k && ++tbar[j] == types) tbar[j++] = 0;
                     if (j == k) break;
                 }
                 return ks;
             }()) {
            std::string key;
            for (std::size_t c = 0; c < colors.size(); ++c) key += (c ? "." : "") + std::to_string(colors[c]);
            keys.push_back(key);
        }
        pieces += st.piece_count();
        stages.push_back({{"stage", st.stage()},
                          {"bound", st.bound_variable()},
                          {"residue", st.residue_target()},
                          {"modulus", st.modulus()},
                          {"free_variables", st.free_variables()},
                          {"matrix", fom::print_formula(st.matrix(), st.plus().signature().unary_functions)},
                          {"p", st.p()},
                          {"colors", st.coloring().num_colors},
                          {"term_tuples", st.tuples().size()},
                          {"realized_types", st.realized_types().size()},
                          {"pieces", keys}});
    }
    run.timer.lap("pieces");
    auto ex = pipe->expanded();
    json marks = json::object(), functions = json::object();
    for (std::size_t k = 0; k < ex.mark_count(); ++k)
        if (!m.has_mark(ex.mark_name(k))) marks[ex.mark_name(k)] = vertex_list(ex.mark_set(k));
    for (std::size_t f = 0; f < ex.function_count(); ++f)
        if (!m.function_index(ex.function_name(f))) functions[ex.function_name(f)] = ex.function(f);
    run.timer.lap("expand");

    json result = {{"free_variables", pipe->free_variables()},
                   {"direct_sum", pipe->direct_sum_used()},
                   {"zeta", zeta_json(*pipe, pipe->zeta_tree(), a.max_tuples)},
                   {"stages", stages},
                   {"expanded", {{"marks", marks}, {"functions", functions}}}};
    run.payload["stages"] = pipe->stage_count();
    run.payload["pieces"] = pieces;
    run.payload["expansion_marks"] = marks.size();
    run.payload["expansion_functions"] = functions.size();
    run.payload["zeta"] = pipe->describe();
    if (!a.out.empty()) {
        auto text = result.dump(1) + "\n";
        write_file(a.out, text);
        run.payload["output"] = a.out;
        run.payload["output_digest"] = fnv1a(text);
    } else {
        run.payload["elimination"] = result;
    }
}

struct ColorArgs {
    std::string graph, backend = "heuristic", out;
    std::size_t p = 2;
};

void cmd_color(Run& run, const ColorArgs& a) {
    auto m = fom::parse_graph(run.read("graph", a.graph));
    run.timer.lap("parse");
    auto backend = a.backend == "exact" ? fom::ColoringBackend::Exact : fom::ColoringBackend::Heuristic;
    auto c = fom::compute_p_centered(fom::gaifman(m), a.p, backend);
    run.timer.lap("color");
    auto check = fom::validate_p_centered(fom::gaifman(m), c);
    run.timer.lap("validate");
    std::string lines;
    for (fom::Vertex v = 0; v < c.color.size(); ++v) lines += "c " + std::to_string(v) + " " + std::to_string(c.color[v]) + "\n";
    run.payload["p"] = a.p;
    run.payload["colors"] = c.num_colors;
    run.payload["valid"] = check.ok;
    if (!check.ok) run.payload["witness"] = vertex_list(check.witness);
    emit_artifact(run, a.out, lines);
}

struct ForestArgs {
    std::string graph, forest, formula, assign, out;
};

void cmd_forest_encode(Run& run, const ForestArgs& a) {
    auto m = fom::parse_graph(run.read("graph", a.graph));
    run.timer.lap("parse");
    auto f = fom::separator_forest(fom::gaifman(m), fom::kTreedepthCap);
    auto cf = fom::encode_IY(m, f);
    run.timer.lap("encode");
    run.payload["vertices"] = cf.size();
    run.payload["height"] = f.height;
    emit_artifact(run, a.out, fom::print_forest(cf));
}

void cmd_forest_decode(Run& run, const ForestArgs& a) {
    auto cf = fom::parse_forest(run.read("forest", a.forest));
    run.timer.lap("parse");
    auto m = fom::decode_IS(cf);
    run.timer.lap("decode");
    run.payload["vertices"] = m.size();
    run.payload["edges"] = m.graph().num_edges();
    emit_artifact(run, a.out, fom::print_graph(m));
}

void cmd_forest_roundtrip(Run& run, const ForestArgs& a) {
    auto m = fom::parse_graph(run.read("graph", a.graph));
    run.timer.lap("parse");
    auto f = fom::separator_forest(fom::gaifman(m), fom::kTreedepthCap);
    auto back = fom::decode_IS(fom::parse_forest(fom::print_forest(fom::encode_IY(m, f))));
    run.timer.lap("roundtrip");
    bool same = back == m;
    run.payload["identical"] = same;
    run.payload["height"] = f.height;
    if (!same) throw CheckFailed("decode(encode(M)) differs from M");
}

void cmd_forest_eval(Run& run, const ForestArgs& a) {
    auto cf = fom::parse_forest(run.read("forest", a.forest));
    run.note_text("formula", a.formula);
    auto phi = fom::parse_formula(a.formula, cf.y.signature());
    auto nu = parse_assign(a.assign, cf.y);
    run.timer.lap("parse");
    run.payload["result"] = fom::eval_forest(cf, phi, nu);
    run.timer.lap("eval");
}

struct MatrixArgs {
    std::string expr, inputs, constants, entry, out;
};

void cmd_matrix(Run& run, const MatrixArgs& a, std::size_t threads) {
    run.note_text("expr", a.expr);
    auto e = fom::parse_expr(a.expr);
    fom::ExprInputs in;
    for (const auto& [name, path] : parse_bindings(a.inputs, "-i"))
        in.sparse.emplace(name, fom::parse_matrix(run.read("input:" + name, path)));
    for (const auto& [name, path] : parse_bindings(a.constants, "-c")) {
        auto mat = fom::parse_matrix(run.read("constant:" + name, path));
        in.constants.emplace(name, fom::build_marking(mat, fom::srank(mat)));
    }
    run.timer.lap("parse");
    fom::ExprOptions opt;
    opt.parallel = threads > 1;
    auto r = fom::eval_expr(e, in, opt);
    run.timer.lap("eval");
    run.payload["p"] = r.value.p();
    run.payload["n"] = r.value.n();
    run.payload["rank_one_terms"] = r.value.terms().size();
    run.payload["warnings"] = r.warnings;
    if (!a.entry.empty()) {
        std::size_t i = 0, j = 0;
        char comma = 0;
        std::istringstream ss(a.entry);
        if (!(ss >> i >> comma >> j) || comma != ',' || !ss.eof()) throw UsageError("--entry: expected i,j");
        if (i >= r.value.n() || j >= r.value.n()) throw fom::InputError("--entry: index outside the matrix");
        run.payload["entry"] = r.entry(i, j);
        run.plain_text = std::to_string(r.entry(i, j)) + "\n";
    } else {
        emit_artifact(run, a.out, fom::print_matrix(r.materialize()));
    }
    run.timer.lap("output");
}

struct VmArgs {
    std::string graph, steps, out;
};

void cmd_vm(Run& run, const VmArgs& a) {
    auto m = fom::parse_graph(run.read("graph", a.graph));
    auto prog = fom::parse_steps(run.read("steps", a.steps));
    run.timer.lap("parse");
    auto vm = fom::depth_k_vertex_minor(m.graph(), prog.steps, prog.deleted);
    run.timer.lap("minor");
    run.payload["depth"] = prog.steps.size();
    run.payload["vertices"] = vm.graph.size();
    run.payload["edges"] = vm.graph.num_edges();
    run.payload["kept"] = vm.kept;
    emit_artifact(run, a.out, fom::print_graph(fom::GuidedStructure(vm.graph)));
}

void cmd_selftest(Run& run, double scale, std::uint64_t seed) {
    fom::suites::SuiteConfig cfg;
    cfg.scale = scale;
    cfg.seed = seed;
    json suites = json::array();
    std::size_t failing = 0;
    for (const auto& suite : fom::suites::all_suites()) {
        auto r = suite(cfg);
        run.timer.lap("suite " + r.id);
        if (r.gating && !r.passed()) ++failing;
        suites.push_back({{"id", r.id},
                          {"name", r.name},
                          {"gating", r.gating},
                          {"passed", r.passed()},
                          {"cases", r.cases},
                          {"failures", r.failures},
                          {"failure_samples", r.first_failures}});
        run.plain_text += std::string(r.passed() ? "PASS" : r.gating ? "FAIL" : "WARN") + " [" + r.id + "] " + r.name + ": " +
                          std::to_string(r.cases) + " cases, " + std::to_string(r.failures) + " failures\n";
    }
    run.payload["scale"] = scale;
    run.payload["seed"] = seed;
    run.payload["suites"] = suites;
    run.payload["failing"] = failing;
    if (failing) throw CheckFailed(std::to_string(failing) + " gating suite(s) failed");
}

void print_plain(const json& j, const std::string& prefix = "") {
    for (const auto& [k, v] : j.items()) {
        if (v.is_object()) {
            print_plain(v, prefix + k + ".");
        } else {
            std::cout << prefix << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fomc: model checking with modulo counting on sparse structures"};
    app.require_subcommand(1);
    std::string format = "json";
    std::size_t threads = 1;
    app.add_option("--format", format, "Output format")->check(CLI::IsMember({"json", "plain"}));
    app.add_option("--threads", threads, "Worker threads for piece construction")->check(CLI::Range(1, 256));

    McArgs mc, cnt;
    auto* mc_cmd = app.add_subcommand("mc", "Evaluate a formula under an assignment");
    mc_cmd->add_option("-g,--graph", mc.graph, "Graph file")->required();
    mc_cmd->add_option("-f,--formula", mc.formula, "Formula")->required();
    mc_cmd->add_option("--assign", mc.assign, "Assignment x=3,y=7");

    auto* count_cmd = app.add_subcommand("count", "Count the vertices satisfying a one-variable formula");
    count_cmd->add_option("-g,--graph", cnt.graph, "Graph file")->required();
    count_cmd->add_option("-f,--formula", cnt.formula, "Formula")->required();

    EliminateArgs el;
    auto* el_cmd = app.add_subcommand("eliminate", "Serialize the elimination of the modulo quantifiers");
    el_cmd->add_option("-g,--graph", el.graph, "Graph file")->required();
    el_cmd->add_option("-f,--formula", el.formula, "Formula")->required();
    el_cmd->add_option("-o,--out", el.out, "Output JSON file");
    el_cmd->add_option("--max-tuples", el.max_tuples, "Type tuples listed per stage")->check(CLI::NonNegativeNumber);

    ColorArgs col;
    auto* color_cmd = app.add_subcommand("color", "Compute a p-centered coloring");
    color_cmd->add_option("-g,--graph", col.graph, "Graph file")->required();
    color_cmd->add_option("-p", col.p, "Centering parameter")->required()->check(CLI::Range(1, 64));
    color_cmd->add_option("--backend", col.backend, "heuristic or exact")->check(CLI::IsMember({"heuristic", "exact"}));
    color_cmd->add_option("-o,--out", col.out, "Coloring file");

    ForestArgs fa;
    auto* forest_cmd = app.add_subcommand("forest", "Forest encoding and evaluation");
    forest_cmd->require_subcommand(1);
    auto* enc = forest_cmd->add_subcommand("encode", "Graph file to forest file");
    enc->add_option("-g,--graph", fa.graph, "Graph file")->required();
    enc->add_option("-o,--out", fa.out, "Forest file");
    auto* dec = forest_cmd->add_subcommand("decode", "Forest file to graph file");
    dec->add_option("-F,--forest", fa.forest, "Forest file")->required();
    dec->add_option("-o,--out", fa.out, "Graph file");
    auto* rt = forest_cmd->add_subcommand("roundtrip", "Check decode(encode(M)) = M");
    rt->add_option("-g,--graph", fa.graph, "Graph file")->required();
    auto* fev = forest_cmd->add_subcommand("eval", "Evaluate a formula on a forest");
    fev->add_option("-F,--forest", fa.forest, "Forest file")->required();
    fev->add_option("-f,--formula", fa.formula, "Formula")->required();
    fev->add_option("--assign", fa.assign, "Assignment x=3,y=7");

    MatrixArgs ma;
    auto* mat_cmd = app.add_subcommand("matrix", "Evaluate a matrix expression");
    mat_cmd->add_option("--expr", ma.expr, "Expression")->required();
    mat_cmd->add_option("-i,--inputs", ma.inputs, "Sparse inputs A=a.mat,B=b.mat");
    mat_cmd->add_option("-c,--constants", ma.constants, "Set-rank constants K=k.mat");
    auto* entry_opt = mat_cmd->add_option("--entry", ma.entry, "Single entry i,j");
    mat_cmd->add_option("-o,--out", ma.out, "Output matrix file")->excludes(entry_opt);

    VmArgs vma;
    auto* vm_cmd = app.add_subcommand("vm", "Depth-k vertex minor");
    vm_cmd->add_option("-g,--graph", vma.graph, "Graph file")->required();
    vm_cmd->add_option("--steps", vma.steps, "Steps file")->required();
    vm_cmd->add_option("-o,--out", vma.out, "Output graph file");

    double scale = 0.05;
    std::uint64_t seed = fom::suites::SuiteConfig{}.seed;
    auto* self_cmd = app.add_subcommand("selftest", "Run the oracle-equivalence suites on built-in corpora");
    self_cmd->add_option("--scale", scale, "Suite size relative to the acceptance run")->check(CLI::Range(0.001, 1.0));
    self_cmd->add_option("--seed", seed, "Corpus seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    Run run;
    fom::EliminationOptions opt;
    opt.threads = threads;
    int code = 0;
    try {
        if (*mc_cmd) {
            run.command = "mc";
            cmd_mc(run, mc, opt);
        } else if (*count_cmd) {
            run.command = "count";
            cmd_count(run, cnt, opt);
        } else if (*el_cmd) {
            run.command = "eliminate";
            cmd_eliminate(run, el, opt);
        } else if (*color_cmd) {
            run.command = "color";
            cmd_color(run, col);
        } else if (*forest_cmd) {
            if (*enc) run.command = "forest encode", cmd_forest_encode(run, fa);
            if (*dec) run.command = "forest decode", cmd_forest_decode(run, fa);
            if (*rt) run.command = "forest roundtrip", cmd_forest_roundtrip(run, fa);
            if (*fev) run.command = "forest eval", cmd_forest_eval(run, fa);
        } else if (*mat_cmd) {
            run.command = "matrix";
            cmd_matrix(run, ma, threads);
        } else if (*vm_cmd) {
            run.command = "vm";
            cmd_vm(run, vma);
        } else if (*self_cmd) {
            run.command = "selftest";
            cmd_selftest(run, scale, seed);
        }
    } catch (const UsageError& e) {
        std::cerr << "fomc: " << e.what() << "\n";
        return 2;
    } catch (const CheckFailed& e) {
        std::cerr << "fomc: " << e.what() << "\n";
        code = 1;
    } catch (const std::exception& e) {
        std::cerr << "fomc: " << e.what() << "\n";
        run.payload["error"] = e.what();
        code = 1;
    }

    json report = {{"command", run.command}, {"inputs", run.inputs}};
    for (const auto& [k, v] : run.payload.items()) report[k] = v;
    if (format == "json") {
        std::cout << report.dump() << "\n";
    } else if (!run.plain_text.empty() && code == 0) {
        std::cout << run.plain_text;
    } else {
        report.erase("inputs");
        print_plain(report);
    }
    std::cerr << json{{"timings", run.timer.laps()}}.dump() << "\n";
    return code;
}
