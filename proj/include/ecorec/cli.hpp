// Copyright 2026 The ecorec Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ecorec/datamodel.hpp"
#include "ecorec/model.hpp"

namespace ecorec::cli {

// Flat `key = value` run configuration. Every key has a default; unknown keys
// are rejected.
class RunConfig {
 public:
  RunConfig();

  // Reads `key = value` lines (`#` starts a comment). All unknown keys and
  // malformed lines are reported together in one ConfigError.
  void merge_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  bool has(const std::string& key) const { return !get(key).empty(); }

  // Throws ConfigError naming every key in `keys` that is unset.
  void require(std::initializer_list<const char*> keys) const;

  datamodel::GenConfig gen_config() const;
  model::TrainConfig train_config() const;
  model::VariantSpec variant() const;

  // Every key with its resolved value, sorted, one `key = value` per line.
  std::string resolved() const;

 private:
  std::map<std::string, std::string> values_;
};

// Entry point behind the `ecorec` binary. Returns 0 on success, 2 on usage or
// configuration errors and 1 on runtime failures.
int run_command(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace ecorec::cli
