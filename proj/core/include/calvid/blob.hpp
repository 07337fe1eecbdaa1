#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "calvid/tensor.hpp"

namespace calvid {

/// Tensor blob wire format shared by dataset and checkpoint files:
/// magic "CC3T" + u32 rank + u32 extents (little-endian) + raw
/// little-endian f32 payload.
namespace blob {

inline constexpr char kMagic[4] = {'C', 'C', '3', 'T'};

/// Serialized byte size of a tensor with the given shape.
int64_t byte_size(const Shape& shape);

void write(std::ostream& os, const Tensor& t);
Tensor read(std::istream& is);

/// Reads the blob starting at `offset` in the file.
Tensor read_at(const std::string& path, int64_t offset);

void write_file(const std::string& path, const Tensor& t);
Tensor read_file(const std::string& path);

}  // namespace blob
}  // namespace calvid
