#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "dcp/tensor.hpp"

namespace dcp {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// "DCPG1" container: 6-byte magic "DCPG1\n", little-endian u64 header length,
// UTF-8 JSON header, then a contiguous little-endian float64 blob. Header
// tensor entries carry {name, shape, offset, len} with offsets counted in
// floats.
struct Checkpoint {
    nlohmann::json header;  // everything except the "tensors" index
    std::map<std::string, Tensor> tensors;
};

void save_container(const std::string& path, const nlohmann::json& header,
                    const std::map<std::string, Tensor>& tensors);
Checkpoint load_container(const std::string& path);

}  // namespace dcp
