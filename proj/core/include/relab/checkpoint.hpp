// Copyright (c) 2026 the relab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "relab/model.hpp"

#include <filesystem>

namespace relab {

// Checkpoint file layout: magic "RELB", little-endian u32 version (=1),
// little-endian u64 JSON header length, JSON header {config, tensors:
// [{name, shape}]}, then raw little-endian float32 tensor data, row-major,
// in manifest order.
inline constexpr char kCheckpointMagic[4] = {'R', 'E', 'L', 'B'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Model& model, const std::filesystem::path& path);

/// Throws MissingArtifactError on open failure, ValidationError on magic,
/// version, truncation, or tensor-shape mismatches (naming the tensor).
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace relab
