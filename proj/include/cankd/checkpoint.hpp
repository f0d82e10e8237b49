#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cankd/tensor.hpp"

namespace cankd {

// Binary tensor archive, little-endian:
//   magic "CANKD\0\0\1" (8 bytes, last byte is the format version)
//   u32 tensor count
//   per tensor: u16 name length, name bytes, u8 rank, u32 extent per axis,
//               raw IEEE f64 values
//   u64 CRC-64/ECMA-182 of all preceding bytes
//
// Round-trips are bit-exact. A wrong magic raises VersionMismatch; any
// truncation, trailing garbage or checksum failure raises FormatError with
// the offending byte offset; filesystem trouble raises IoError. Loading
// never mutates destination parameters unless the whole file parses.

void save_checkpoint(const ParamRefs& params, const std::string& path);

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path);

// Loads into an existing parameter set; names and shapes must match exactly.
void load_checkpoint_into(const std::string& path, const ParamRefs& params);

std::uint64_t crc64_ecma(const unsigned char* data, std::size_t len);

}  // namespace cankd
