// tests/support/fixtures.h

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

#ifndef CONFSV_TESTS_FIXTURES_H_
#define CONFSV_TESTS_FIXTURES_H_

#include <string>
#include <vector>

#include "confsv/config.h"
#include "confsv/datapipe.h"

namespace confsv::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "confsv");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const;

 private:
  std::string path_;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

// Toy-encoder run configuration for fast training tests.
RunConfig toy_run_config(std::uint64_t seed, std::size_t epochs = 1);

// Runs the command-line entry point in-process.
struct CliResult {
  int code = 0;
  std::string out, err;
};
CliResult run_cli(const std::vector<std::string>& args);

}  // namespace confsv::testing

#endif  // CONFSV_TESTS_FIXTURES_H_
