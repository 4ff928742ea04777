// core/include/confsv/error.h

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

#ifndef CONFSV_ERROR_H_
#define CONFSV_ERROR_H_

#include <stdexcept>
#include <string>

namespace confsv {

// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kDimension,
  kConfig,
  kData,
  kNumeric,
  kIndex,
  kContract,
  kParse,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error(ErrorKind::kDimension, w) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::kConfig, w) {}
};
// Bad or insufficient input data: short audio, unalignable CTC targets,
// degenerate cohorts or label sets, missing embeddings.
struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorKind::kData, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::kNumeric, w) {}
};
struct IndexError : Error {
  explicit IndexError(const std::string& w) : Error(ErrorKind::kIndex, w) {}
};
struct ContractError : Error {
  explicit ContractError(const std::string& w) : Error(ErrorKind::kContract, w) {}
};
struct ParseError : Error {
  ParseError(const std::string& w, int line)
      : Error(ErrorKind::kParse, w), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

}  // namespace confsv

#endif  // CONFSV_ERROR_H_
