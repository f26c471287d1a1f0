#include "fewrec/voxel.hpp"

#include <numeric>
#include <string>

namespace fewrec {

VoxelGrid::VoxelGrid(int resolution) : resolution_(resolution) {
    if (resolution < 1) {
        throw ConfigError("VoxelGrid resolution must be >= 1, got " + std::to_string(resolution));
    }
    occupancy_.assign(static_cast<std::size_t>(resolution) * resolution * resolution, 0);
}

std::size_t VoxelGrid::count_occupied() const {
    return std::accumulate(occupancy_.begin(), occupancy_.end(), std::size_t{0});
}

bool VoxelGrid::operator==(const VoxelGrid& other) const {
    return resolution_ == other.resolution_ && occupancy_ == other.occupancy_ &&
           translate == other.translate && scale == other.scale;
}

OccupancyField::OccupancyField(int resolution) : resolution_(resolution) {
    if (resolution < 1) {
        throw ConfigError("OccupancyField resolution must be >= 1");
    }
    probabilities_.assign(static_cast<std::size_t>(resolution) * resolution * resolution, 0.0);
}

double iou(const VoxelGrid& a, const VoxelGrid& b) {
    if (a.resolution() != b.resolution()) {
        throw DataError("iou: resolution mismatch " + std::to_string(a.resolution()) + " vs " +
                        std::to_string(b.resolution()));
    }
    std::size_t inter = 0, uni = 0;
    const auto& oa = a.occupancy();
    const auto& ob = b.occupancy();
    for (std::size_t i = 0; i < oa.size(); ++i) {
        inter += oa[i] & ob[i];
        uni += oa[i] | ob[i];
    }
    if (uni == 0) return 1.0;  // both empty
    return static_cast<double>(inter) / static_cast<double>(uni);
}

VoxelGrid threshold(const OccupancyField& field, double t) {
    if (!(t > 0.0 && t < 1.0)) {
        throw ConfigError("threshold: t must lie in (0,1), got " + std::to_string(t));
    }
    VoxelGrid grid(field.resolution());
    const auto& p = field.probabilities();
    for (std::size_t i = 0; i < p.size(); ++i) {
        grid.occupancy()[i] = p[i] >= t ? 1 : 0;
    }
    return grid;
}

double proximity_shape(const VoxelGrid& shape, const std::vector<VoxelGrid>& base) {
    if (base.empty()) {
        throw ConfigError("proximity_shape: base pool is empty");
    }
    double best = 0.0;
    for (const auto& b : base) {
        double v = iou(shape, b);
        if (v > best) best = v;
    }
    return best;
}

double proximity_class(const std::vector<VoxelGrid>& members, const std::vector<VoxelGrid>& base) {
    if (members.empty()) {
        throw ConfigError("proximity_class: class set is empty");
    }
    double sum = 0.0;
    for (const auto& s : members) {
        sum += proximity_shape(s, base);
    }
    return sum / static_cast<double>(members.size());
}

}  // namespace fewrec
