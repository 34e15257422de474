// Prints one PASS/FAIL line per acceptance criterion; exits nonzero if any fail.

#include <cstdio>
#include <cstring>

#include "lorat/checks.hpp"

int main(int argc, char** argv) {
  lorat::checks::SuiteOptions options;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--skip-learning") == 0) options.include_learning = false;
  }
  int failed = 0;
  lorat::checks::run_suite(options, [&](const lorat::checks::CheckResult& r) {
    std::printf("%s\n", lorat::checks::format_result(r).c_str());
    std::fflush(stdout);
    failed += r.passed ? 0 : 1;
  });
  std::printf("%s\n", failed == 0 ? "acceptance: all criteria passed" : "acceptance: FAILURES");
  return failed == 0 ? 0 : 1;
}
