#pragma once

// End-to-end verification suite shared by the acceptance test binary and the
// `repro` command.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace volmix::acceptance {

struct Options {
    /// Smaller samples and looser budgets; results are labelled as such.
    bool fast = false;
    std::uint64_t seed = 20190522;
    /// Criterion names or numbers to run; empty runs all.
    std::vector<std::string> only;
    /// Progress messages go here when set.
    std::ostream* log = nullptr;
};

struct CriterionResult {
    int id = 0;
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
    bool fast = false;
};

struct CriterionInfo {
    int id;
    const char* name;
};

[[nodiscard]] const std::vector<CriterionInfo>& criteria();

/// Throws InvalidArgument for an unknown name or number.
[[nodiscard]] int criterion_id(const std::string& name_or_number);

[[nodiscard]] CriterionResult run_criterion(int id, const Options& options);
[[nodiscard]] std::vector<CriterionResult> run(const Options& options);

/// One line: "PASS  1 gradient-check  <detail>  (12.3 s)".
[[nodiscard]] std::string format_line(const CriterionResult& result);

}  // namespace volmix::acceptance
