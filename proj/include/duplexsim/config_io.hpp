// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <stdexcept>

#include "duplexsim/hardware.hpp"
#include "duplexsim/model.hpp"

namespace duplexsim {

// Config files are JSON. A model file carries the ModelConfig fields; a
// system file carries SystemConfig (device/stack nested). Missing fields
// fall back to preset defaults; a bad or absent required field raises
// ConfigError naming it.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

ModelConfig load_model_file(const std::string& path);
ModelConfig resolve_model(const std::string& preset_or_path);

SystemConfig load_system_file(const std::string& path, const ModelConfig& m);
SystemConfig resolve_system(const std::string& preset_or_path, const ModelConfig& m);

std::string model_to_json(const ModelConfig& m);
std::string system_to_json(const SystemConfig& s);

}  // namespace duplexsim
