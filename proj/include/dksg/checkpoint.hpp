#pragma once

#include "dksg/tensor.hpp"

#include <string>
#include <vector>

namespace dksg {

// Checkpoint file: magic "DKSG", u32 version = 1, u32 record count, then per
// record: u16 name length, UTF-8 name, u8 rank, rank x u32 dims, little-endian
// f32 payload. Records whose name starts with "meta." carry bookkeeping
// values rather than trainable parameters.

struct CheckpointRecord {
    std::string name;
    Tensor tensor;
};

void save_checkpoint(const std::string& path, const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> load_checkpoint(const std::string& path);

}  // namespace dksg
