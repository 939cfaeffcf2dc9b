// Prints one PASS/FAIL line per acceptance criterion. `--only N` (repeatable)
// restricts the run; the exit status is nonzero when any selected line fails.

#include <cstdlib>
#include <iostream>
#include <set>
#include <string>

#include "disco/selftest.hpp"

int main(int argc, char** argv)
{
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) {
            only.insert(std::atoi(argv[++i]));
        } else {
            std::cerr << "usage: acceptance [--only N]...\n";
            return 64;
        }
    }
    int failed = 0;
    for (const auto& c : disco::selftest::criteria(DISCO_CLI, DISCO_CONFIGS, DISCO_SCRATCH)) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto o = disco::selftest::timed(c);
        std::cout << disco::selftest::format_line(c, o) << std::endl;
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
