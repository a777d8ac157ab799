#pragma once

// Compiled-in verification suite behind the `selftest` CLI command: module
// implementations vs the brute-force oracles on random instances, structural
// invariants, metric identities, and the optimizer/schedule anchors.

#include <cstdint>
#include <string>
#include <vector>

namespace dksg {

struct SelftestResult {
    std::string group;  // oracle | invariant | metric | optim | io | trivial
    std::string name;
    bool pass = false;
    std::string detail;
};

std::vector<SelftestResult> selftest_all(uint64_t seed = 7);

}  // namespace dksg
