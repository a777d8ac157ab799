#pragma once

// Finite-difference gradient verification, shared between the test suite and
// the `gradcheck` CLI command.

#include <cstdint>
#include <string>
#include <vector>

namespace dksg {

struct CheckResult {
    std::string name;    // "op/input", e.g. "conv2d/w"
    double max_rel_err;  // worst relative error vs central differences
};

// Per-op checks on random small inputs in [-1,1] (nudged away from kinks).
std::vector<CheckResult> gradcheck_ops(uint64_t seed);

// End-to-end: full model loss on a random 32x32 batch, a sampled subset of
// components from every parameter tensor.
std::vector<CheckResult> gradcheck_model(uint64_t seed);

}  // namespace dksg
