#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dimba/backbone.hpp"

namespace dimba {

struct CheckpointMeta {
    long long step = 0;
    std::string stage = "init";
    double eval_score = 0.0;
};

// Bit-exact persistent snapshot: config + stage metadata in a text header,
// then named raw little-endian tensors (model weights and optimizer state).
struct Checkpoint {
    ModelConfig config;
    CheckpointMeta meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint checkpoint_from_model(const Model& m, CheckpointMeta meta);
// Rebuilds the model and assigns weights; fails loudly naming the first
// mismatched or missing tensor.
Model model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace dimba
