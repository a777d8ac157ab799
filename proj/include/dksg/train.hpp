#pragma once

#include <ostream>
#include <string>

#include "dksg/config.hpp"

namespace dksg {

struct TrainArtifacts {
    std::string best_checkpoint;  // highest validation Dice
    std::string init_checkpoint;  // untrained weights, for baselines
    std::string log_csv;          // epoch,step,lr,train_loss,val_dice
    std::string val_ids_path;
    double best_val_dice = 0.0;
    int64_t steps = 0;
};

// Full deterministic run: load + resize the dataset, 80/20 split, train with
// SGD + poly decay, log one CSV row per epoch (plus an epoch-0 baseline row),
// and keep the best checkpoint by validation Dice. `progress`, when given,
// receives one line per epoch.
TrainArtifacts train_model(const RunConfig& cfg, const std::string& data_root,
                           const std::string& out_dir, std::ostream* progress = nullptr);

}  // namespace dksg
