// Versioned binary checkpoint: config key-values plus every named weight
// tensor (trainable and frozen) in a fixed order. Round trips are bit-exact.

#pragma once

#include <memory>
#include <string>

#include "imdp/model.hpp"

namespace imdp::checkpoint {

inline constexpr std::uint32_t kVersion = 1;
inline constexpr char kMagic[8] = {'I', 'M', 'D', 'P', 'C', 'K', 'P', 'T'};

void save(const Model& model, const std::string& path);

struct Loaded {
    std::unique_ptr<Model> model;
    Config config;
};

/// Rebuilds the model from the embedded config and restores every tensor.
/// Throws VersionMismatch / CorruptFile on bad files.
Loaded load(const std::string& path);

}  // namespace imdp::checkpoint
