// tests/support/fixtures.cc

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

#include "fixtures.h"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unistd.h>

#include "cli.h"

namespace confsv::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const fs::path p = fs::temp_directory_path() /
                     (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(p);
  fs::create_directories(p);
  path_ = p.string();
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string TempDir::file(const std::string& name) const { return (fs::path(path_) / name).string(); }

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
}

RunConfig toy_run_config(std::uint64_t seed, std::size_t epochs) {
  RunConfig cfg;
  cfg.seed = seed;
  cfg.encoder_preset = "toy";
  cfg.encoder = EncoderConfig::toy();
  cfg.optim.epochs = epochs;
  cfg.optim.warmup_epochs = 0;
  cfg.optim.batch_size = 4;
  cfg.data.speed_perturb = false;
  cfg.data.heldout_per_speaker = 2;
  cfg.asr.epochs = epochs;
  cfg.transfer.frozen_epochs = 1;
  cfg.scoring.cohort_size = 10;
  cfg.scoring.top_k = 5;
  cfg.adaptation.layers = 2;
  return cfg;
}

CliResult run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> full{"confsv"};
  full.insert(full.end(), args.begin(), args.end());
  std::ostringstream out, err;
  CliResult r;
  r.code = cli::run(full, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

}  // namespace confsv::testing
