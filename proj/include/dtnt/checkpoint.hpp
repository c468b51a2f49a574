#pragma once

#include <map>
#include <string>

#include "dtnt/model.hpp"

namespace dtnt {

// Checkpoint file layout (all integers little-endian):
//   magic "DTNT" | u32 version | u64 len + config text | u64 len + metadata
//   text | u64 record count | records sorted by unique name, each
//   u32 name_len | name | u32 rank | u64 extents... | raw float32 values.
// Records cover every learnable tensor plus batch-norm running statistics
// (<prefix>.running_mean / .running_var).
inline constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(Model<T>& model, const std::string& path,
                     const std::map<std::string, std::string>& metadata = {});

Model<float> load_checkpoint(const std::string& path,
                             std::map<std::string, std::string>* metadata = nullptr);

}  // namespace dtnt
