#pragma once

#include "idprior/core/tensor.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace idprior::backbone {

// Container of named tensors plus a JSON header record.
//
// File layout (little-endian):
//   "IDPCKPT1" | u64 header_bytes | header JSON | u64 tensor_count |
//   per tensor: u32 name_bytes | name | i64 rows | i64 cols | rows*cols f64
// Tensors are stored in name order so identical states produce identical files.
struct Checkpoint {
    nlohmann::json header = nlohmann::json::object();
    std::vector<std::pair<std::string, Mat>> tensors;

    bool has(const std::string& name) const;
    const Mat& tensor(const std::string& name) const;
    bool has_namespace(const std::string& prefix) const;
    void put(const std::string& name, const Mat& value);
    void put_store(const ParameterStore& store);

    bool operator==(const Checkpoint& other) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

}  // namespace idprior::backbone
