#ifndef FEWREC_DISTILL_HPP
#define FEWREC_DISTILL_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fewrec/manifest.hpp"
#include "fewrec/voxel.hpp"

namespace fewrec {

// Symmetric 1-IoU distance matrix with a zero diagonal.
struct DistanceMatrix {
    int n = 0;
    std::vector<double> entries;  // row-major n*n

    double at(int i, int j) const { return entries[static_cast<std::size_t>(i) * n + j]; }
};

struct MedoidSet {
    std::vector<int> indices;     // k distinct shape indices
    std::vector<int> assignment;  // shape index -> position in indices
    double objective = 0.0;       // sum of assigned distances
};

struct MiniSpec {
    int k = 1250;  // clusters per category
    int v = 4;     // views kept per medoid
    std::uint64_t seed = 0;
};

DistanceMatrix pairwise_distances(const std::vector<VoxelGrid>& shapes);

// Disk cache: header (n, resolution, content hash of the shape list) plus the
// packed row-major lower triangle as 32-bit floats. Written atomically.
std::uint64_t shape_list_hash(const std::vector<VoxelGrid>& shapes);
void save_distance_cache(const DistanceMatrix& dist, int resolution, std::uint64_t content_hash,
                         const std::string& path);
bool load_distance_cache(const std::string& path, std::uint64_t content_hash, DistanceMatrix& out);
DistanceMatrix pairwise_distances_cached(const std::vector<VoxelGrid>& shapes,
                                         const std::string& cache_path);

// Voronoi-iteration k-medoids from distance-proportional seeded
// initialization. Objective is checked non-increasing across iterations.
MedoidSet kmedoids(const DistanceMatrix& dist, int k, std::uint64_t seed);

// Per-category k-medoids over the source shapes, keeping v seeded-sampled
// views per medoid. Categories smaller than k are kept whole.
DatasetManifest distill(const DatasetManifest& source, const std::string& manifest_dir,
                        const MiniSpec& spec);

struct PerformanceRatio {
    std::map<std::string, double> per_class;
    double mean = 0.0;
};

// r = iou_mini / iou_full per class, plus the unweighted mean.
PerformanceRatio performance_ratio(const std::map<std::string, double>& iou_mini,
                                   const std::map<std::string, double>& iou_full);

}  // namespace fewrec

#endif
