#pragma once

#include <string>

#include "rodenet/network.hpp"

namespace rodenet {

/// Binary checkpoint, little-endian throughout:
///   magic "RODN", u32 format version, u32 arch id, u32 N,
///   u32 num_classes, u32 base_channels, u32 input_hw, u32 input_channels,
///   u8 solver method, u8 steps_mode, u32 explicit steps, u8 bn_mode,
///   u32 tensor count, then per tensor a manifest entry
///   (u16 name length + name, u8 dtype (0 = f32), u8 ndim, u32 dims...),
///   followed by all payloads in manifest order as float32.
/// Learnable tensors must sum to param_size_total(arch, N) bytes for the
/// standard configuration; running statistics and normalization constants are
/// carried alongside but not counted.
void save_checkpoint(const std::string& path, const NetworkModel& model);

NetworkModel load_checkpoint(const std::string& path);

}  // namespace rodenet
