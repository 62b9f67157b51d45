#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace scenetok {

/// Deliberate breakages for harness self-tests: each suite must fail when
/// its fault is armed, proving the checks are not vacuous.
struct Faults {
    bool spatial_symmetry = false;   // skews a pairwise-geometry tensor
    double gradient_offset = 0.0;    // shifts analytic gradients
    bool oracle = false;             // perturbs one output before comparison
};

struct CheckResult {
    std::string name;
    bool pass = false;
    double metric = 0.0;     // measured error / discrepancy
    double tolerance = 0.0;  // pinned limit it was held against
    std::string detail;
};

struct SuiteReport {
    std::string suite;
    std::vector<CheckResult> checks;

    bool all_pass() const;
};

/// Finite-difference checks: one per differentiable op (tol 1e-4) and one
/// per full module (tol 1e-3).
SuiteReport run_gradient_suite(const Faults& faults = {}, std::uint64_t seed = 17);

/// Structural properties: pairwise-geometry symmetries, rigid-motion
/// behavior, masked-attention exactness, permutation behavior, token
/// accounting, unobserved passthrough.
SuiteReport run_invariant_suite(const Faults& faults = {}, std::uint64_t seed = 17);

/// Module outputs vs the naive reference implementations.
SuiteReport run_oracle_suite(const Faults& faults = {}, std::uint64_t seed = 17);

/// suite is one of gradients | invariants | oracles | all.
std::vector<SuiteReport> run_suites(const std::string& suite, const Faults& faults = {},
                                    std::uint64_t seed = 17);

std::string suites_to_json(const std::vector<SuiteReport>& reports);
bool suites_all_pass(const std::vector<SuiteReport>& reports);

}  // namespace scenetok
