#pragma once

#include <string>

#include "qprl/ppo.hpp"

namespace qprl::io {

inline constexpr uint32_t kCheckpointVersion = 1;

/// Versioned binary container: named parameter tensors (name, shape,
/// row-major 64-bit values) plus the TrainConfig echo, guarded by a trailing
/// FNV-1a checksum. Round trips are bit-exact.
void save_checkpoint(const std::string& path, const rl::PolicyNet& net,
                     const rl::TrainConfig& cfg);

struct LoadedCheckpoint {
    rl::PolicyNet net;
    rl::TrainConfig config;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace qprl::io
