// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint container:
//
//   "TRDXCKPT" | u32 version | str stage | str config digest | str lineage | u32 count
//   count × ( str name | u32 ndim | ndim × u64 extent | numel × f64 )
//
// Integers and floats are little-endian; str is a u32 length plus bytes.

#pragma once

#include <string>
#include <string_view>

#include "tridx/params.hpp"

namespace tridx {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
  std::string stage;          // pt, sft or rft
  std::string config_digest;  // hex digest of the model configuration
  std::string lineage;        // "pt:<digest>;sft:<digest>" chain of ancestors
};

/// BLAKE2b-256 of `data`, lowercase hex.
std::string digest_hex(std::string_view data);

void save_checkpoint(const std::string& path, const CheckpointHeader& header, const ParamStore& store);
/// Reads only the header.
CheckpointHeader read_checkpoint_header(const std::string& path);
/// Loads every block into `store`. The block table must match the store's
/// names and shapes exactly (DataError otherwise) and the stored digest must
/// equal `expected_digest` (ConfigError otherwise).
CheckpointHeader load_checkpoint(const std::string& path, const std::string& expected_digest, ParamStore& store);

}  // namespace tridx
