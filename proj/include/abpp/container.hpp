#pragma once

#include <string>
#include <vector>

#include "abpp/tensor.hpp"

namespace abpp {

// The one on-disk format for named tensors: model checkpoints, optimizer
// state and cached predictions all go through it.
//
//   magic "ABPP" | version u32 | entry count u32
//   per entry: name length u32 | UTF-8 name | rank u32 | dims u32[rank]
//              | dtype u32 (0 = f32, 1 = f64) | raw little-endian values
//
// Values are held as doubles in memory; f32 entries are widened on read and
// narrowed on write.
struct ContainerEntry {
  std::string name;
  Shape shape;
  bool f64 = true;
  VecX<double> data;

  Index numel() const {
    Index n = 1;
    for (Index d : shape) n *= d;
    return n;
  }
};

inline constexpr std::uint32_t kContainerVersion = 1;

void write_container(const std::string& path, const std::vector<ContainerEntry>& entries);
std::vector<ContainerEntry> read_container(const std::string& path);

// Checkpoint adapters: every parameter as an f64 entry, in registry order.
void save_params(const std::string& path, const Params& params);

// Loads a checkpoint into an existing parameter registry. Every name must
// match an entry of the same shape; missing, extra or reshaped tensors are
// all reported by name in one error.
void load_params(const std::string& path, Params& params);

}  // namespace abpp
