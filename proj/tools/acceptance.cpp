// One line per acceptance criterion. Exit status is nonzero when a gating
// criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "suites.hpp"

int main(int argc, char** argv) {
    fom::suites::SuiteConfig cfg;
    if (argc > 1) cfg.scale = std::atof(argv[1]);
    bool ok = true;
    for (const auto& suite : fom::suites::all_suites()) {
        auto t0 = std::chrono::steady_clock::now();
        auto r = suite(cfg);
        double secs = fom::suites::detail::seconds_since(t0);
        const char* verdict = r.passed() ? "PASS" : (r.gating ? "FAIL" : "WARN");
        std::printf("%s [%s] %s: %zu cases, %zu failures (%.1fs)\n", verdict, r.id.c_str(), r.name.c_str(), r.cases, r.failures, secs);
        for (const auto& n : r.notes) std::printf("       %s\n", n.c_str());
        for (const auto& f : r.first_failures) std::printf("       failure: %s\n", f.c_str());
        std::fflush(stdout);
        if (r.gating && !r.passed()) ok = false;
    }
    return ok ? 0 : 1;
}
