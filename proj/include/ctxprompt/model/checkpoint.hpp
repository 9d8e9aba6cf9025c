// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container ("PFCK"), little-endian:
//
//   magic      4 bytes  "PFCK"
//   version    u32      kCheckpointVersion
//   meta_len   u32      length of the key/value text block
//   meta       bytes    "key=value\n" lines, keys sorted
//   n_blobs    u32
//   per blob:  u32 name_len, name bytes,
//              u32 rank, u64 dims[rank],
//              u64 count, f64 values[count]
//   digest     u64      FNV-1a over every preceding byte
//
// Values are always stored as IEEE-754 binary64 regardless of Real.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ctxprompt/model/transformer.hpp"

namespace ctxprompt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> blobs;

  const Tensor& blob(const std::string& name) const;
  const std::string& meta_value(const std::string& key) const;
};

std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::byte>& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies blob values into the same-named tensors of `params` (shapes must match).
void load_params(const Checkpoint& ckpt, const ParamSet& params, const std::string& prefix = {});

void save_backbone(const std::filesystem::path& path, const Backbone& backbone,
                   std::map<std::string, std::string> extra_meta = {});
Backbone load_backbone(const std::filesystem::path& path);
Backbone backbone_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix = {});

}  // namespace ctxprompt
