#pragma once

#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>

#include "bpa/nn/tensor.hpp"

namespace bpa {

// Single-file checkpoint container.
//
// Layout (all integers little-endian):
//   8 bytes   magic "BPAARCH1"
//   8 bytes   u64 length L of the JSON header
//   L bytes   UTF-8 JSON header: {"kind", "meta", "blobs": [{"name","shape","offset","count"}]}
//   payload   float64 blobs back to back, offsets relative to payload start
class Archive {
 public:
  Archive() = default;
  explicit Archive(std::string kind) : kind_(std::move(kind)) {}

  const std::string& kind() const { return kind_; }
  nlohmann::json& meta() { return meta_; }
  const nlohmann::json& meta() const { return meta_; }

  void put(const std::string& name, const nn::Tensor& t);
  bool has(const std::string& name) const { return blobs_.contains(name); }
  const nn::Tensor& get(const std::string& name) const;
  const std::map<std::string, nn::Tensor>& blobs() const { return blobs_; }

  std::string serialize() const;
  static Archive deserialize(const std::string& bytes);

  // Writes atomically via a sibling temporary file.
  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);
  // Loads and checks the header kind.
  static Archive load(const std::filesystem::path& path, const std::string& expected_kind);

 private:
  std::string kind_;
  nlohmann::json meta_ = nlohmann::json::object();
  std::map<std::string, nn::Tensor> blobs_;
};

}  // namespace bpa
