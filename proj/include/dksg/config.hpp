#pragma once

#include <cstdint>
#include <istream>
#include <string>

#include "dksg/model.hpp"

namespace dksg {

// One `key = value` per line, '#' starts a comment, unknown keys are errors.
// channels takes a bracketed list: channels = [16, 24, 32, 48, 64]
struct RunConfig {
    float lr0 = 4e-4f;
    float momentum = 0.9f;
    float weight_decay = 1e-5f;
    float poly_power = 0.9f;
    int batch_size = 8;
    int image_size = 64;
    int epochs = 30;
    uint64_t seed = 42;
    ModelConfig model;
    bool aug_flip = true;
    bool aug_rotate = true;
    bool aug_crop = true;

    void validate() const;
};

RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::string& path);

}  // namespace dksg
