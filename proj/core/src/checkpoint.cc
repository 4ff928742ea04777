// core/src/checkpoint.cc

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

#include "confsv/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "confsv/error.h"

namespace confsv {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("checkpoint: truncated file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

Checkpoint snapshot(Module& module, ConfigMap config) {
  Checkpoint c;
  c.config = std::move(config);
  for (auto& [name, p] : module.named_params())
    c.entries.push_back({CheckpointEntry::kParam, name, p->var.value()});
  for (auto& [name, b] : module.named_buffers())
    c.entries.push_back({CheckpointEntry::kBuffer, name, *b});
  return c;
}

Checkpoint snapshot_trainable(Module& module, ConfigMap config) {
  Checkpoint c;
  c.config = std::move(config);
  for (auto& [name, p] : module.named_params())
    if (p->var.requires_grad()) c.entries.push_back({CheckpointEntry::kParam, name, p->var.value()});
  return c;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  std::string cfg;
  for (const auto& [k, v] : ckpt.config) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ConfigError("checkpoint: config key/value contains a reserved character: " + k);
    }
    cfg += k + "=" + v + "\n";
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  put<std::uint64_t>(out, ckpt.entries.size());
  for (const auto& e : ckpt.entries) {
    put<std::uint8_t>(out, e.kind);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t d : e.value.shape()) put<std::uint64_t>(out, d);
    const auto data = e.value.data();
    out.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(double));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.str(sizeof(kCheckpointMagic)) != std::string(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw DataError("checkpoint: bad magic");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint c;
  std::istringstream cfg(r.str(r.get<std::uint32_t>()));
  for (std::string line; std::getline(cfg, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("checkpoint: malformed config line: " + line);
    c.config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto kind = r.get<std::uint8_t>();
    if (kind > 1) throw DataError("checkpoint: bad entry kind");
    e.kind = static_cast<CheckpointEntry::Kind>(kind);
    e.name = r.str(r.get<std::uint32_t>());
    Shape shape(r.get<std::uint32_t>());
    for (auto& d : shape) d = r.get<std::uint64_t>();
    std::vector<double> data(shape_numel(shape));
    const std::string raw = r.str(data.size() * sizeof(double));
    std::memcpy(data.data(), raw.data(), raw.size());
    e.value = Tensor(std::move(shape), std::move(data));
    c.entries.push_back(std::move(e));
  }
  if (!r.done()) throw DataError("checkpoint: trailing bytes");
  return c;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("checkpoint: cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("checkpoint: write failed for " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint(ss.str());
}

void load_checkpoint(const Checkpoint& ckpt, Module& module, bool strict) {
  auto assign = [&](const std::string& name, Tensor& dst, CheckpointEntry::Kind kind) {
    const CheckpointEntry* e = ckpt.find(name);
    if (!e || e->kind != kind) {
      if (strict) throw DataError("checkpoint: missing entry " + name);
      return;
    }
    if (!e->value.same_shape(dst)) {
      throw DimensionError("checkpoint: " + name + " has shape " + shape_str(e->value.shape()) +
                           ", model expects " + shape_str(dst.shape()));
    }
    dst = e->value;
  };
  for (auto& [name, p] : module.named_params())
    assign(name, p->var.mutable_value(), CheckpointEntry::kParam);
  for (auto& [name, b] : module.named_buffers()) assign(name, *b, CheckpointEntry::kBuffer);
}

std::uint64_t module_hash(Module& module) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 0x100000001b3ull;
    }
  };
  auto feed_tensor = [&](const std::string& name, const Tensor& t) {
    feed(name.data(), name.size());
    for (std::size_t d : t.shape()) feed(&d, sizeof(d));
    feed(t.data().data(), t.numel() * sizeof(double));
  };
  for (auto& [name, p] : module.named_params()) feed_tensor(name, p->var.value());
  for (auto& [name, b] : module.named_buffers()) feed_tensor(name, *b);
  return h;
}

namespace {

std::size_t get_size(const ConfigMap& m, const std::string& key, std::size_t dflt) {
  auto it = m.find(key);
  if (it == m.end()) return dflt;
  try {
    return std::stoul(it->second);
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + key + ": " + it->second);
  }
}

double get_double(const ConfigMap& m, const std::string& key, double dflt) {
  auto it = m.find(key);
  if (it == m.end()) return dflt;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": " + it->second);
  }
}

std::string fmt_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

ConfigMap encoder_config_to_map(const EncoderConfig& cfg) {
  return {
      {"encoder.layers", std::to_string(cfg.layers)},
      {"encoder.dim", std::to_string(cfg.dim)},
      {"encoder.heads", std::to_string(cfg.heads)},
      {"encoder.hidden", std::to_string(cfg.hidden)},
      {"encoder.subsample", std::to_string(cfg.subsample)},
      {"encoder.conv_kernel", std::to_string(cfg.conv_kernel)},
      {"encoder.dropout", fmt_double(cfg.dropout)},
      {"encoder.bn_momentum", fmt_double(cfg.bn_momentum)},
      {"encoder.n_mels", std::to_string(cfg.n_mels)},
  };
}

EncoderConfig encoder_config_from_map(const ConfigMap& m) {
  EncoderConfig c;
  c.layers = get_size(m, "encoder.layers", c.layers);
  c.dim = get_size(m, "encoder.dim", c.dim);
  c.heads = get_size(m, "encoder.heads", c.heads);
  c.hidden = get_size(m, "encoder.hidden", c.hidden);
  c.subsample = get_size(m, "encoder.subsample", c.subsample);
  c.conv_kernel = get_size(m, "encoder.conv_kernel", c.conv_kernel);
  c.dropout = get_double(m, "encoder.dropout", c.dropout);
  c.bn_momentum = get_double(m, "encoder.bn_momentum", c.bn_momentum);
  c.n_mels = get_size(m, "encoder.n_mels", c.n_mels);
  c.validate();
  return c;
}

}  // namespace confsv
