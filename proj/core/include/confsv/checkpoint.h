// core/include/confsv/checkpoint.h

// Copyright 2026  The confsv Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CONFSV_CHECKPOINT_H_
#define CONFSV_CHECKPOINT_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "confsv/conformer.h"
#include "confsv/nn.h"

namespace confsv {

using ConfigMap = std::map<std::string, std::string>;

// Binary layout (little-endian):
//   "CONFSVCK" | u32 version | u32 config bytes | "key=value\n"... |
//   u64 entry count | entries
// entry: u8 kind (0 param, 1 buffer) | u32 name length | name |
//        u32 rank | u64 dims[rank] | f64 values[numel]
inline constexpr char kCheckpointMagic[8] = {'C', 'O', 'N', 'F', 'S', 'V', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  enum Kind : std::uint8_t { kParam = 0, kBuffer = 1 };
  Kind kind = kParam;
  std::string name;
  Tensor value;
};

struct Checkpoint {
  ConfigMap config;
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const;
};

// All parameters and buffers of a module.
Checkpoint snapshot(Module& module, ConfigMap config = {});
// Only parameters that currently require gradients.
Checkpoint snapshot_trainable(Module& module, ConfigMap config = {});

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

// Copies entries into the module by name. With strict set, every module
// parameter and buffer must be present. Shape mismatches always throw.
void load_checkpoint(const Checkpoint& ckpt, Module& module, bool strict = true);

// FNV-1a over names, shapes and raw value bytes of all params and buffers.
std::uint64_t module_hash(Module& module);

ConfigMap encoder_config_to_map(const EncoderConfig& cfg);
EncoderConfig encoder_config_from_map(const ConfigMap& map);

}  // namespace confsv

#endif  // CONFSV_CHECKPOINT_H_
