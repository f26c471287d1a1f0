#ifndef FEWREC_BINVOX_HPP
#define FEWREC_BINVOX_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fewrec/voxel.hpp"

namespace fewrec {

// Binvox version-1 codec.
//
// Wire layout: ASCII header ("#binvox 1", "dim D D D", "translate tx ty tz",
// "scale s", "data") followed by (value, count) byte pairs with counts 1..255.
// The byte stream orders voxels x-major with y fastest (the reference tool's
// layout); in-memory grids are z-fastest, so the codec permutes on the way
// in and out. Encoding is greedy maximal-run, which makes write/read and
// read/write bit-exact inverses.
VoxelGrid read_binvox(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_binvox(const VoxelGrid& grid);

VoxelGrid load_binvox(const std::string& path);
void save_binvox(const VoxelGrid& grid, const std::string& path);

}  // namespace fewrec

#endif
