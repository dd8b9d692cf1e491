#pragma once

#include <string>
#include <utility>
#include <vector>

#include "evsnn/network.hpp"
#include "evsnn/tensor.hpp"

namespace evsnn {

struct NamedTensor {
  std::string name;
  Tensor value;
};

// CKPT1: "CKPT1" magic, u32 tensor count, then per tensor u32 name length,
// name bytes, u32 rank, dims as u32, values as little-endian f64.
std::vector<uint8_t> write_checkpoint(const std::vector<std::pair<std::string, Tensor*>>& tensors);
std::vector<NamedTensor> parse_checkpoint(const std::vector<uint8_t>& bytes);

void save_network(Network& net, const std::string& path);
// Fills parameters and BN statistics by name; a missing name, extra name or
// shape mismatch raises StateError.
void load_network(Network& net, const std::string& path);

}  // namespace evsnn
