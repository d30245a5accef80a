#pragma once

#include "plbk/corpus.hpp"

#include <string>
#include <vector>

namespace plbk::selfcheck {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

// The acceptance property suite: noise budgets, span distribution, sampling
// plan, gradient check, overfit oracles, metric oracles, schedules,
// determinism/persistence. Each entry prints as one pass/fail line.
std::vector<CheckResult> run_all(const std::string& scratch_dir);

// Deterministic synthetic fixtures shared by the suite and the tests.
std::vector<RawInstance> toy_code_corpus(int n, const std::string& language);
std::vector<RawInstance> toy_text_corpus(int n, const std::string& language);

} // namespace plbk::selfcheck
