#pragma once

#include <string>
#include <utility>
#include <vector>

#include "recordkit/model.hpp"
#include "recordkit/tensor.hpp"

namespace recordkit {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Binary layout: magic "RECD", version u32, tensor count u32, then per
// tensor: name length u16 + UTF-8 name, rank u8, extents u32 each,
// payload little-endian f64. Round-trips are bitwise exact.
constexpr uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::string& path, const NamedTensors& tensors);
NamedTensors read_checkpoint(const std::string& path);

NamedTensors model_to_tensors(const Model& model);
Model model_from_tensors(const NamedTensors& tensors);

void save_model(const std::string& path, const Model& model);
Model load_model(const std::string& path);

}  // namespace recordkit
