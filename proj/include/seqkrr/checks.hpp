#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace seqkrr {

struct CheckOptions {
    bool fast = false;  // skip the Monte Carlo criteria (5 and 8)
    int threads = 2;
    std::ostream* log = nullptr;  // per-criterion pass/fail lines
};

struct CriterionResult {
    int id = 0;
    std::string name;
    bool passed = false;
    bool skipped = false;
    double seconds = 0.0;
    std::string detail;
};

/// Runs the full invariant suite; one result per criterion, in order.
std::vector<CriterionResult> run_acceptance_checks(const CheckOptions& options);

bool all_passed(const std::vector<CriterionResult>& results);

}  // namespace seqkrr
