// Model file format.
//
//   line 1:  "hrd-mlp <version> <crc32-hex> <body-bytes>\n"
//   rest:    JSON body (architecture, normalization, grid, parameters)
//
// The CRC covers the body bytes. Doubles are written as shortest round-trip
// decimals, so save -> load is bit-exact.

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "hrd/nn.hpp"

namespace hrd::nn {

inline constexpr int kModelFormatVersion = 1;

class ModelFormatError : public std::runtime_error {
 public:
  enum class Kind { io, version, checksum, schema };
  ModelFormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string serialize_model(const MLPModel& model, const nlohmann::json& metadata = {});
MLPModel deserialize_model(const std::string& contents, nlohmann::json* metadata = nullptr);

void save_model(const MLPModel& model, const std::filesystem::path& path,
                const nlohmann::json& metadata = {});
MLPModel load_model(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

}  // namespace hrd::nn
