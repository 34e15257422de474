#pragma once

// Executable acceptance properties. Each check builds its own inputs from a
// fixed seed, runs at the tolerance it names, and reports pass/fail with a
// short measurement summary.

#include <functional>
#include <string>
#include <vector>

namespace lorat::checks {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

CheckResult merge_equivalence();       // merged vs unmerged forward, multiply count
CheckResult zero_init_neutrality();    // fresh adapters leave predictions bit-identical
CheckResult freeze_discipline();       // finetune touches only trainable tensors
CheckResult gradient_correctness();    // backward vs central differences
CheckResult positional_reuse();        // resampling identity, bounds, bilinear oracle
CheckResult token_type_annotation();   // worked example, nested-box monotonicity
CheckResult head_decoding();           // ltrb round trip, argmax invariance
CheckResult metric_oracle();           // IoU and averaging against brute force
CheckResult learning_result();         // desk-scale finetune reaches the IoU bar
CheckResult determinism();             // worker count never changes a report

struct SuiteOptions {
  bool include_learning = true;
};

/// Runs every check in order, calling `on_result` as each one finishes.
std::vector<CheckResult> run_suite(const SuiteOptions& options,
                                   const std::function<void(const CheckResult&)>& on_result = {});

std::string format_result(const CheckResult& result);

}  // namespace lorat::checks
