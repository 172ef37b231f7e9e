#pragma once

#include <string>

#include "tsen/model.hpp"

namespace tsen {

inline constexpr int kCheckpointFormatVersion = 1;

/// Writes a JSON checkpoint: format version, the full model configuration,
/// input/output dimensions, and every trainable leaf as
/// `layer{i}.{block}.{tensor}` -> {rows, cols, row-major values}. Values
/// round-trip exactly (shortest exact decimal representation).
void save_checkpoint(const ModelParams& params, const std::string& path);

/// Inverse of save_checkpoint. Throws IoError on unreadable/malformed files
/// or leaf name/shape mismatches; ConfigError if the embedded model
/// configuration is invalid.
ModelParams load_checkpoint(const std::string& path);

}  // namespace tsen
