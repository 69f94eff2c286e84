#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "restcn/model.hpp"

namespace restcn {

/// Binary checkpoint container, all integers and doubles little-endian:
///
///   "RTCN"            4-byte magic
///   u32 version       kCheckpointVersion
///   config            u32 input_dim, u32 num_classes, f64 dropout_rate,
///                     f64 l1_weight, u32 x3 first conv (filters, length,
///                     stride), u32 unit count, u32 x3 per unit
///   u32 tensor count
///   per tensor        u32 rank (1 or 2), u64 per dimension, then
///                     rows*cols f64 values in Eigen column-major order
///
/// Tensors follow the order of restcn::tensors().
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const ResTcnModel& model);
ResTcnModel decode_checkpoint(const std::string& bytes);

void save_checkpoint(const ResTcnModel& model, const std::filesystem::path& path);
ResTcnModel load_checkpoint(const std::filesystem::path& path);

}  // namespace restcn
