#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "consensus/params.hpp"

namespace consensus {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Layout: "CFU1", then per tensor until EOF:
//   u32 name length, UTF-8 name, u32 rank, u32 per axis, f64 payload.
// All integers and doubles little-endian.
std::string encode_checkpoint(const ParameterStore& store);
ParameterStore decode_checkpoint(const std::string& bytes);

void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path);
ParameterStore load_checkpoint(const std::filesystem::path& path);

/// Copies every tensor of `loaded` into `target`, requiring identical names
/// and shapes. A size mismatch (e.g. a CCT head built for another N) throws.
void assign_checked(ParameterStore& target, const ParameterStore& loaded);

}  // namespace consensus
