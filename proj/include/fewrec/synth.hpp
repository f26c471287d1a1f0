#ifndef FEWREC_SYNTH_HPP
#define FEWREC_SYNTH_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fewrec/image.hpp"
#include "fewrec/manifest.hpp"
#include "fewrec/voxel.hpp"

namespace fewrec {

enum class ShapeFamily { box_stack, table_like, cylinder, l_bracket, wing_body, ring };

ShapeFamily family_from_string(const std::string& s);
std::string to_string(ShapeFamily f);

// Parametric primitive composition on the voxel lattice. Parameter ranges are
// fractions of the lattice extent; shapes are clamped into the lattice and
// guaranteed nonempty by construction checks.
struct SynthClassSpec {
    std::string class_id;
    ShapeFamily family = ShapeFamily::box_stack;
    std::map<std::string, std::pair<double, double>> param_ranges;
    std::uint64_t seed = 0;
    std::string role = "base";  // "base" | "novel"
    int resolution = 32;
};

// Default parameter ranges per family; override entries as needed.
SynthClassSpec default_class_spec(const std::string& class_id, ShapeFamily family,
                                  std::uint64_t seed, int resolution = 32);

struct RenderParams {
    double azimuth_min = 0.0, azimuth_max = 360.0;    // degrees
    double elevation_min = 25.0, elevation_max = 30.0;
    double depth_ratio_min = 0.65, depth_ratio_max = 1.0;
    int image_size = 128;
};

std::vector<VoxelGrid> generate_class(const SynthClassSpec& spec, int n, std::uint64_t seed);

// Depth-shaded rotated orthographic projections; camera angles drawn
// uniformly from the configured ranges, per-view seed derived from `seed`.
std::vector<Image> render_views(const VoxelGrid& grid, const RenderParams& params, int v,
                                std::uint64_t seed);

struct BuildDatasetOptions {
    int per_class = 10;
    int views = 4;
    double split_ratio = 0.8;  // train fraction, applied per shape
    std::uint64_t seed = 0;
    RenderParams render;
    std::string out_dir;
};

// Materializes binvox/image files under out_dir and returns the manifest
// (also written to out_dir/manifest.jsonl).
DatasetManifest build_dataset(const std::vector<SynthClassSpec>& specs,
                              const BuildDatasetOptions& opts);

}  // namespace fewrec

#endif
