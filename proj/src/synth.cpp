#include "fewrec/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "fewrec/binvox.hpp"
#include "fewrec/rng.hpp"

namespace fewrec {

namespace fs = std::filesystem;

ShapeFamily family_from_string(const std::string& s) {
    if (s == "box-stack") return ShapeFamily::box_stack;
    if (s == "table-like") return ShapeFamily::table_like;
    if (s == "cylinder") return ShapeFamily::cylinder;
    if (s == "L-bracket") return ShapeFamily::l_bracket;
    if (s == "wing-body") return ShapeFamily::wing_body;
    if (s == "ring") return ShapeFamily::ring;
    throw ConfigError("unknown shape family '" + s + "'");
}

std::string to_string(ShapeFamily f) {
    switch (f) {
        case ShapeFamily::box_stack: return "box-stack";
        case ShapeFamily::table_like: return "table-like";
        case ShapeFamily::cylinder: return "cylinder";
        case ShapeFamily::l_bracket: return "L-bracket";
        case ShapeFamily::wing_body: return "wing-body";
        case ShapeFamily::ring: return "ring";
    }
    throw ConfigError("unhandled shape family");
}

namespace {

using Params = std::map<std::string, double>;

// Fill an axis-aligned box given fractional extents, clamped to the lattice.
void fill_box(VoxelGrid& g, double x0, double x1, double y0, double y1, double z0, double z1) {
    int r = g.resolution();
    auto lo = [r](double f) { return std::max(0, static_cast<int>(std::floor(f * r))); };
    auto hi = [r](double f) { return std::min(r, static_cast<int>(std::ceil(f * r))); };
    for (int x = lo(x0); x < hi(x1); ++x)
        for (int y = lo(y0); y < hi(y1); ++y)
            for (int z = lo(z0); z < hi(z1); ++z) g.set(x, y, z, true);
}

// Vertical (y-axis) cylinder, fractional center/radius/height.
void fill_cylinder(VoxelGrid& g, double cx, double cz, double radius, double y0, double y1) {
    int r = g.resolution();
    int ylo = std::max(0, static_cast<int>(std::floor(y0 * r)));
    int yhi = std::min(r, static_cast<int>(std::ceil(y1 * r)));
    for (int x = 0; x < r; ++x) {
        for (int z = 0; z < r; ++z) {
            double dx = (x + 0.5) / r - cx;
            double dz = (z + 0.5) / r - cz;
            if (dx * dx + dz * dz > radius * radius) continue;
            for (int y = ylo; y < yhi; ++y) g.set(x, y, z, true);
        }
    }
}

VoxelGrid build_shape(ShapeFamily family, const Params& p, int resolution) {
    VoxelGrid g(resolution);
    switch (family) {
        case ShapeFamily::box_stack: {
            int levels = std::max(1, static_cast<int>(std::lround(p.at("levels"))));
            double w = p.at("base_w"), d = p.at("base_d");
            double lh = p.at("level_h"), shrink = p.at("shrink");
            double y = 0.05;
            for (int l = 0; l < levels; ++l) {
                fill_box(g, 0.5 - w / 2, 0.5 + w / 2, y, y + lh, 0.5 - d / 2, 0.5 + d / 2);
                y += lh;
                w *= shrink;
                d *= shrink;
            }
            break;
        }
        case ShapeFamily::table_like: {
            double ts = p.at("top_size"), tt = p.at("top_thick");
            double lw = p.at("leg_w"), h = p.at("height");
            double lo = 0.5 - ts / 2, hi = 0.5 + ts / 2;
            fill_box(g, lo, hi, h - tt, h, lo, hi);
            for (double lx : {lo, hi - lw}) {
                for (double lz : {lo, hi - lw}) {
                    fill_box(g, lx, lx + lw, 0.05, h - tt, lz, lz + lw);
                }
            }
            break;
        }
        case ShapeFamily::cylinder: {
            fill_cylinder(g, 0.5, 0.5, p.at("radius"), 0.05, 0.05 + p.at("height"));
            break;
        }
        case ShapeFamily::l_bracket: {
            double len = p.at("arm_len"), th = p.at("arm_thick"), dep = p.at("depth");
            double z0 = 0.5 - dep / 2, z1 = 0.5 + dep / 2;
            fill_box(g, 0.1, 0.1 + len, 0.1, 0.1 + th, z0, z1);
            fill_box(g, 0.1, 0.1 + th, 0.1, 0.1 + len, z0, z1);
            break;
        }
        case ShapeFamily::wing_body: {
            double bl = p.at("body_len"), bw = p.at("body_w");
            double span = p.at("wing_span"), chord = p.at("wing_chord"), wt = p.at("wing_thick");
            fill_box(g, 0.5 - bl / 2, 0.5 + bl / 2, 0.5 - bw / 2, 0.5 + bw / 2, 0.5 - bw / 2,
                     0.5 + bw / 2);
            fill_box(g, 0.5 - chord / 2, 0.5 + chord / 2, 0.5 - wt / 2, 0.5 + wt / 2,
                     0.5 - span / 2, 0.5 + span / 2);
            // tail fin
            fill_box(g, 0.5 + bl / 2 - chord / 2, 0.5 + bl / 2, 0.5, 0.5 + 0.15, 0.5 - wt / 2,
                     0.5 + wt / 2);
            break;
        }
        case ShapeFamily::ring: {
            double outer = p.at("outer");
            double inner = outer * p.at("inner_frac");
            double th = p.at("thick");
            int r = resolution;
            int ylo = std::max(0, static_cast<int>(std::floor((0.5 - th / 2) * r)));
            int yhi = std::min(r, static_cast<int>(std::ceil((0.5 + th / 2) * r)));
            for (int x = 0; x < r; ++x) {
                for (int z = 0; z < r; ++z) {
                    double dx = (x + 0.5) / r - 0.5;
                    double dz = (z + 0.5) / r - 0.5;
                    double d2 = dx * dx + dz * dz;
                    if (d2 > outer * outer || d2 < inner * inner) continue;
                    for (int y = ylo; y < yhi; ++y) g.set(x, y, z, true);
                }
            }
            break;
        }
    }
    return g;
}

std::string params_to_string(const Params& p) {
    std::string out;
    for (const auto& [k, v] : p) {
        if (!out.empty()) out += ", ";
        out += k + "=" + std::to_string(v);
    }
    return out;
}

}  // namespace

SynthClassSpec default_class_spec(const std::string& class_id, ShapeFamily family,
                                  std::uint64_t seed, int resolution) {
    SynthClassSpec spec;
    spec.class_id = class_id;
    spec.family = family;
    spec.seed = seed;
    spec.resolution = resolution;
    switch (family) {
        case ShapeFamily::box_stack:
            spec.param_ranges = {{"levels", {1.0, 3.0}}, {"base_w", {0.5, 0.8}},
                                 {"base_d", {0.5, 0.8}}, {"level_h", {0.15, 0.3}},
                                 {"shrink", {0.6, 0.85}}};
            break;
        case ShapeFamily::table_like:
            spec.param_ranges = {{"top_size", {0.6, 0.9}}, {"top_thick", {0.08, 0.16}},
                                 {"leg_w", {0.08, 0.18}}, {"height", {0.5, 0.8}}};
            break;
        case ShapeFamily::cylinder:
            spec.param_ranges = {{"radius", {0.2, 0.35}}, {"height", {0.5, 0.9}}};
            break;
        case ShapeFamily::l_bracket:
            spec.param_ranges = {{"arm_len", {0.5, 0.85}}, {"arm_thick", {0.15, 0.3}},
                                 {"depth", {0.4, 0.8}}};
            break;
        case ShapeFamily::wing_body:
            spec.param_ranges = {{"body_len", {0.6, 0.9}}, {"body_w", {0.12, 0.22}},
                                 {"wing_span", {0.6, 0.95}}, {"wing_chord", {0.15, 0.3}},
                                 {"wing_thick", {0.06, 0.12}}};
            break;
        case ShapeFamily::ring:
            spec.param_ranges = {{"outer", {0.3, 0.45}}, {"inner_frac", {0.4, 0.7}},
                                 {"thick", {0.1, 0.25}}};
            break;
    }
    return spec;
}

std::vector<VoxelGrid> generate_class(const SynthClassSpec& spec, int n, std::uint64_t seed) {
    if (n < 1) throw ConfigError("generate_class: n must be >= 1");
    if (spec.param_ranges.empty()) {
        throw ConfigError("generate_class: empty param_ranges for class '" + spec.class_id + "'");
    }
    std::vector<VoxelGrid> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto rng = make_rng(derive_seed(seed, spec.seed, spec.class_id,
                                        static_cast<std::uint64_t>(i)));
        Params p;
        for (const auto& [name, range] : spec.param_ranges) {
            if (range.second < range.first) {
                throw ConfigError("generate_class: inverted range for parameter '" + name + "'");
            }
            std::uniform_real_distribution<double> dist(range.first, range.second);
            p[name] = range.first == range.second ? range.first : dist(rng);
        }
        VoxelGrid g = build_shape(spec.family, p, spec.resolution);
        if (g.empty_grid()) {
            throw ConfigError("generate_class: class '" + spec.class_id + "' item " +
                              std::to_string(i) + " came out empty (" + params_to_string(p) + ")");
        }
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<Image> render_views(const VoxelGrid& grid, const RenderParams& params, int v,
                                std::uint64_t seed) {
    if (v < 1) throw ConfigError("render_views: v must be >= 1");
    const int r = grid.resolution();
    const int s = params.image_size;
    const double pi = 3.14159265358979323846;
    std::vector<Image> out;
    out.reserve(static_cast<std::size_t>(v));
    for (int k = 0; k < v; ++k) {
        auto rng = make_rng(derive_seed(seed, "view", static_cast<std::uint64_t>(k)));
        auto sample = [&rng](double lo, double hi) {
            if (lo == hi) return lo;
            std::uniform_real_distribution<double> dist(lo, hi);
            return dist(rng);
        };
        double az = sample(params.azimuth_min, params.azimuth_max) * pi / 180.0;
        double el = sample(params.elevation_min, params.elevation_max) * pi / 180.0;
        double depth_ratio = sample(params.depth_ratio_min, params.depth_ratio_max);

        // Orthographic camera looking at the lattice center.
        double fx = -std::cos(el) * std::cos(az);
        double fy = -std::sin(el);
        double fz = -std::cos(el) * std::sin(az);
        // right = normalize(forward x up), up' = right x forward
        double rx = fz, ry = 0.0, rz = -fx;
        double rn = std::sqrt(rx * rx + rz * rz);
        rx /= rn;
        rz /= rn;
        double ux = ry * fz - rz * fy;
        double uy = rz * fx - rx * fz;
        double uz = rx * fy - ry * fx;

        double half = r * 0.5;
        double extent = r * std::sqrt(3.0) / depth_ratio;  // projected footprint size
        double march = r * std::sqrt(3.0);
        double step = 0.5;

        Image img(s, s);
        for (int py = 0; py < s; ++py) {
            for (int px = 0; px < s; ++px) {
                double a = ((px + 0.5) / s - 0.5) * extent;
                double b = (0.5 - (py + 0.5) / s) * extent;
                // ray origin outside the lattice, direction = forward
                double ox = half + a * rx + b * ux - fx * march;
                double oy = half + a * ry + b * uy - fy * march;
                double oz = half + a * rz + b * uz - fz * march;
                double hit_t = -1.0;
                for (double t = 0.0; t < 2.0 * march; t += step) {
                    int vx = static_cast<int>(std::floor(ox + fx * t));
                    int vy = static_cast<int>(std::floor(oy + fy * t));
                    int vz = static_cast<int>(std::floor(oz + fz * t));
                    if (vx < 0 || vy < 0 || vz < 0 || vx >= r || vy >= r || vz >= r) continue;
                    if (grid.at(vx, vy, vz)) {
                        hit_t = t;
                        break;
                    }
                }
                if (hit_t < 0.0) continue;
                // depth-proportional shading, nearer is brighter
                double depth01 = (hit_t - (march - r)) / (2.0 * r);
                double shade = 1.0 - 0.6 * std::min(1.0, std::max(0.0, depth01));
                for (int c = 0; c < 3; ++c) img.at(c, py, px) = shade;
            }
        }
        out.push_back(std::move(img));
    }
    return out;
}

DatasetManifest build_dataset(const std::vector<SynthClassSpec>& specs,
                              const BuildDatasetOptions& opts) {
    if (specs.empty()) throw ConfigError("build_dataset: no class specs");
    if (!(opts.split_ratio > 0.0 && opts.split_ratio < 1.0)) {
        throw ConfigError("build_dataset: split_ratio must lie in (0,1)");
    }
    {
        std::vector<std::string> ids;
        for (const auto& s : specs) ids.push_back(s.class_id);
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
            throw ConfigError("build_dataset: duplicate class_ids");
        }
    }
    fs::create_directories(opts.out_dir);

    DatasetManifest manifest;
    manifest.seed = opts.seed;
    manifest.provenance = {{"generator",
                            {{"per_class", opts.per_class},
                             {"views", opts.views},
                             {"split_ratio", opts.split_ratio},
                             {"image_size", opts.render.image_size}}}};

    int n_train = static_cast<int>(std::lround(opts.split_ratio * opts.per_class));
    n_train = std::min(std::max(n_train, 1), opts.per_class - 1);

    for (const auto& spec : specs) {
        manifest.class_roles[spec.class_id] = spec.role;
        fs::create_directories(fs::path(opts.out_dir) / spec.class_id);
        auto shapes = generate_class(spec, opts.per_class, opts.seed);
        for (int i = 0; i < opts.per_class; ++i) {
            std::string rel_shape = spec.class_id + "/shape_" + std::to_string(i) + ".binvox";
            save_binvox(shapes[static_cast<std::size_t>(i)],
                        (fs::path(opts.out_dir) / rel_shape).string());
            auto views = render_views(shapes[static_cast<std::size_t>(i)], opts.render, opts.views,
                                      derive_seed(opts.seed, spec.class_id,
                                                  static_cast<std::uint64_t>(i), "render"));
            std::string split = i < n_train ? "train" : "test";
            for (int k = 0; k < opts.views; ++k) {
                std::string rel_img = spec.class_id + "/shape_" + std::to_string(i) + "_view_" +
                                      std::to_string(k) + ".ppm";
                save_ppm(views[static_cast<std::size_t>(k)],
                         (fs::path(opts.out_dir) / rel_img).string());
                manifest.entries.push_back({rel_img, rel_shape, spec.class_id, k, split});
            }
        }
    }
    manifest.save((fs::path(opts.out_dir) / "manifest.jsonl").string());
    return manifest;
}

}  // namespace fewrec
