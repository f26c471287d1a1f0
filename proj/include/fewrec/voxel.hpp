#ifndef FEWREC_VOXEL_HPP
#define FEWREC_VOXEL_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "fewrec/errors.hpp"

namespace fewrec {

// Dense binary occupancy grid on an R x R x R lattice.
// Storage is x-major with z fastest: index = (x*R + y)*R + z.
class VoxelGrid {
public:
    VoxelGrid() = default;
    explicit VoxelGrid(int resolution);

    int resolution() const { return resolution_; }
    std::size_t size() const { return occupancy_.size(); }

    std::uint8_t at(int x, int y, int z) const { return occupancy_[index(x, y, z)]; }
    void set(int x, int y, int z, bool value) { occupancy_[index(x, y, z)] = value ? 1 : 0; }

    const std::vector<std::uint8_t>& occupancy() const { return occupancy_; }
    std::vector<std::uint8_t>& occupancy() { return occupancy_; }

    std::size_t index(int x, int y, int z) const {
        return (static_cast<std::size_t>(x) * resolution_ + y) * resolution_ + z;
    }

    std::size_t count_occupied() const;
    bool empty_grid() const { return count_occupied() == 0; }

    bool operator==(const VoxelGrid& other) const;

    // binvox header metadata, carried through I/O round trips
    std::array<double, 3> translate{0.0, 0.0, 0.0};
    double scale = 1.0;

private:
    int resolution_ = 0;
    std::vector<std::uint8_t> occupancy_;
};

// Per-voxel occupancy probabilities, the decoder output before thresholding.
class OccupancyField {
public:
    OccupancyField() = default;
    explicit OccupancyField(int resolution);

    int resolution() const { return resolution_; }
    std::size_t size() const { return probabilities_.size(); }

    double at(int x, int y, int z) const { return probabilities_[index(x, y, z)]; }
    void set(int x, int y, int z, double p) { probabilities_[index(x, y, z)] = p; }

    const std::vector<double>& probabilities() const { return probabilities_; }
    std::vector<double>& probabilities() { return probabilities_; }

    std::size_t index(int x, int y, int z) const {
        return (static_cast<std::size_t>(x) * resolution_ + y) * resolution_ + z;
    }

private:
    int resolution_ = 0;
    std::vector<double> probabilities_;
};

// |a ∩ b| / |a ∪ b|. Both grids empty -> 1.0, exactly one empty -> 0.0.
double iou(const VoxelGrid& a, const VoxelGrid& b);

// Voxel occupied iff p >= t. Requires 0 < t < 1.
VoxelGrid threshold(const OccupancyField& field, double t = 0.5);

// max over the base pool of iou(shape, .)
double proximity_shape(const VoxelGrid& shape, const std::vector<VoxelGrid>& base);

// mean over members of proximity_shape(., base)
double proximity_class(const std::vector<VoxelGrid>& members, const std::vector<VoxelGrid>& base);

}  // namespace fewrec

#endif
