#pragma once

#include <iosfwd>
#include <string>
#include <utility>

#include "vad/tensor.hpp"

namespace vad {

// Binary tensor container:
//   magic "CTEN", u8 rank, rank x u32 dims (little-endian), u8 dtype
//   (0 = f32, 1 = f64), then the row-major payload.
// Loading converts the payload to the requested scalar type; a round trip at
// matching width is bit-exact.

template <typename S>
void write_tensor(std::ostream& os, const Tensor<S>& t);

template <typename S>
Tensor<S> read_tensor(std::istream& is);

template <typename S>
void save_tensor(const std::string& path, const Tensor<S>& t);

template <typename S>
Tensor<S> load_tensor(const std::string& path);

// Length-prefixed name followed by a tensor; used for checkpoint and bank files.
template <typename S>
void write_named_tensor(std::ostream& os, const std::string& name, const Tensor<S>& t);

template <typename S>
std::pair<std::string, Tensor<S>> read_named_tensor(std::istream& is);

void write_u32_le(std::ostream& os, std::uint32_t v);
std::uint32_t read_u32_le(std::istream& is);

}  // namespace vad
