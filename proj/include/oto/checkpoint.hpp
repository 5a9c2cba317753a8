#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "oto/model.hpp"

namespace oto {

// Binary layout, all integers unsigned 32-bit little-endian:
//   "OTOCKPT1" | array count | per array: name length, UTF-8 name, rank,
//   extents..., float32 LE payload.
inline constexpr char kCheckpointMagic[8] = {'O', 'T', 'O', 'C', 'K', 'P', 'T', '1'};

void write_checkpoint(std::ostream& out, const std::vector<ParamArray<float>>& arrays);
void save_checkpoint(const std::string& path, const ModelGraph& model);

// Arrays come back marked trainable; rebuild_with_arrays restores the flags
// from the model structure.
std::vector<ParamArray<float>> read_checkpoint(std::istream& in);
std::vector<ParamArray<float>> load_checkpoint(const std::string& path);

}  // namespace oto
