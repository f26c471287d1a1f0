#include "fewrec/distill.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "fewrec/binvox.hpp"
#include "fewrec/rng.hpp"

namespace fewrec {

DistanceMatrix pairwise_distances(const std::vector<VoxelGrid>& shapes) {
    DistanceMatrix d;
    d.n = static_cast<int>(shapes.size());
    d.entries.assign(static_cast<std::size_t>(d.n) * d.n, 0.0);
    for (int i = 0; i < d.n; ++i) {
        for (int j = i + 1; j < d.n; ++j) {
            double dist = 1.0 - iou(shapes[static_cast<std::size_t>(i)],
                                    shapes[static_cast<std::size_t>(j)]);
            d.entries[static_cast<std::size_t>(i) * d.n + j] = dist;
            d.entries[static_cast<std::size_t>(j) * d.n + i] = dist;
        }
    }
    return d;
}

std::uint64_t shape_list_hash(const std::vector<VoxelGrid>& shapes) {
    std::uint64_t h = 14695981039346656037ull;
    auto mix_byte = [&h](std::uint8_t b) {
        h ^= b;
        h *= 1099511628211ull;
    };
    for (const auto& s : shapes) {
        for (int i = 0; i < 4; ++i) mix_byte(static_cast<std::uint8_t>(s.resolution() >> (8 * i)));
        for (std::uint8_t b : s.occupancy()) mix_byte(b);
    }
    return h;
}

namespace {
constexpr char kCacheMagic[8] = {'F', 'R', 'D', 'C', 'A', 'C', 'H', '1'};
}

void save_distance_cache(const DistanceMatrix& dist, int resolution, std::uint64_t content_hash,
                         const std::string& path) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write distance cache to " + tmp);
        out.write(kCacheMagic, 8);
        std::uint64_t n = static_cast<std::uint64_t>(dist.n);
        std::uint64_t res = static_cast<std::uint64_t>(resolution);
        out.write(reinterpret_cast<const char*>(&n), 8);
        out.write(reinterpret_cast<const char*>(&res), 8);
        out.write(reinterpret_cast<const char*>(&content_hash), 8);
        for (int i = 1; i < dist.n; ++i) {
            for (int j = 0; j < i; ++j) {
                float f = static_cast<float>(dist.at(i, j));
                out.write(reinterpret_cast<const char*>(&f), 4);
            }
        }
        if (!out) throw DataError("short write to distance cache " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

bool load_distance_cache(const std::string& path, std::uint64_t content_hash,
                         DistanceMatrix& out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    char magic[8];
    std::uint64_t n = 0, res = 0, hash = 0;
    in.read(magic, 8);
    in.read(reinterpret_cast<char*>(&n), 8);
    in.read(reinterpret_cast<char*>(&res), 8);
    in.read(reinterpret_cast<char*>(&hash), 8);
    if (!in || std::memcmp(magic, kCacheMagic, 8) != 0 || hash != content_hash) return false;
    out.n = static_cast<int>(n);
    out.entries.assign(n * n, 0.0);
    for (std::uint64_t i = 1; i < n; ++i) {
        for (std::uint64_t j = 0; j < i; ++j) {
            float f = 0.0f;
            in.read(reinterpret_cast<char*>(&f), 4);
            out.entries[i * n + j] = f;
            out.entries[j * n + i] = f;
        }
    }
    return static_cast<bool>(in);
}

DistanceMatrix pairwise_distances_cached(const std::vector<VoxelGrid>& shapes,
                                         const std::string& cache_path) {
    std::uint64_t hash = shape_list_hash(shapes);
    DistanceMatrix d;
    if (load_distance_cache(cache_path, hash, d)) return d;
    d = pairwise_distances(shapes);
    int res = shapes.empty() ? 0 : shapes.front().resolution();
    save_distance_cache(d, res, hash, cache_path);
    return d;
}

MedoidSet kmedoids(const DistanceMatrix& dist, int k, std::uint64_t seed) {
    const int n = dist.n;
    if (k < 1 || k > n) {
        throw ConfigError("kmedoids: k=" + std::to_string(k) + " outside [1," +
                          std::to_string(n) + "]");
    }
    auto rng = make_rng(derive_seed(seed, "kmedoids-init"));
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    // Distance-proportional seeding.
    std::vector<int> medoids;
    medoids.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(n)));
    std::vector<double> mind(static_cast<std::size_t>(n),
                             std::numeric_limits<double>::infinity());
    while (static_cast<int>(medoids.size()) < k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            mind[static_cast<std::size_t>(i)] =
                std::min(mind[static_cast<std::size_t>(i)], dist.at(i, medoids.back()));
            total += mind[static_cast<std::size_t>(i)];
        }
        int pick = -1;
        if (total <= 0.0) {
            for (int i = 0; i < n; ++i) {
                if (std::find(medoids.begin(), medoids.end(), i) == medoids.end()) {
                    pick = i;
                    break;
                }
            }
        } else {
            double target = unif(rng) * total;
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                acc += mind[static_cast<std::size_t>(i)];
                if (acc >= target && mind[static_cast<std::size_t>(i)] > 0.0) {
                    pick = i;
                    break;
                }
            }
            if (pick < 0) {
                for (int i = n - 1; i >= 0; --i) {
                    if (mind[static_cast<std::size_t>(i)] > 0.0) {
                        pick = i;
                        break;
                    }
                }
            }
        }
        if (pick < 0) pick = medoids.back();
        medoids.push_back(pick);
    }

    auto assign_all = [&](const std::vector<int>& meds, std::vector<int>& assignment) {
        double obj = 0.0;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double bd = dist.at(i, meds[0]);
            for (int c = 1; c < static_cast<int>(meds.size()); ++c) {
                double d = dist.at(i, meds[static_cast<std::size_t>(c)]);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            assignment[static_cast<std::size_t>(i)] = best;
            obj += bd;
        }
        return obj;
    };

    std::vector<int> assignment(static_cast<std::size_t>(n), 0);
    double obj = assign_all(medoids, assignment);

    for (int iter = 0; iter < 200; ++iter) {
        // Medoid update: member minimizing total within-cluster distance.
        std::vector<int> next = medoids;
        for (int c = 0; c < k; ++c) {
            double best_cost = std::numeric_limits<double>::infinity();
            int best_m = medoids[static_cast<std::size_t>(c)];
            for (int cand = 0; cand < n; ++cand) {
                if (assignment[static_cast<std::size_t>(cand)] != c) continue;
                double cost = 0.0;
                for (int i = 0; i < n; ++i) {
                    if (assignment[static_cast<std::size_t>(i)] == c) cost += dist.at(i, cand);
                }
                if (cost < best_cost) {
                    best_cost = cost;
                    best_m = cand;
                }
            }
            next[static_cast<std::size_t>(c)] = best_m;
        }
        std::vector<int> next_assignment(static_cast<std::size_t>(n), 0);
        double next_obj = assign_all(next, next_assignment);
        if (next_obj > obj + 1e-12) {
            throw NumericError("kmedoids: objective increased across an iteration");
        }
        bool converged = (next == medoids && next_assignment == assignment);
        medoids = std::move(next);
        assignment = std::move(next_assignment);
        obj = next_obj;
        if (converged) break;
    }

    MedoidSet set;
    set.indices = std::move(medoids);
    set.assignment = std::move(assignment);
    set.objective = obj;
    return set;
}

DatasetManifest distill(const DatasetManifest& source, const std::string& manifest_dir,
                        const MiniSpec& spec) {
    namespace fs = std::filesystem;
    if (spec.k < 1 || spec.v < 1) throw ConfigError("distill: k and v must be >= 1");

    DatasetManifest mini;
    mini.class_roles = source.class_roles;
    mini.seed = spec.seed;
    mini.generator_version = source.generator_version;

    nlohmann::json kept = nlohmann::json::object();

    for (const auto& [class_id, role] : source.class_roles) {
        // Unique shapes per category, in first-appearance order.
        std::vector<std::string> shape_paths;
        std::map<std::string, std::vector<const ManifestEntry*>> views;
        for (const auto& e : source.entries) {
            if (e.class_id != class_id) continue;
            auto it = views.find(e.shape);
            if (it == views.end()) {
                shape_paths.push_back(e.shape);
                it = views.emplace(e.shape, std::vector<const ManifestEntry*>{}).first;
            }
            it->second.push_back(&e);
        }
        if (shape_paths.empty()) {
            throw ConfigError("distill: category '" + class_id + "' has no shapes");
        }

        std::vector<std::string> selected;
        if (static_cast<int>(shape_paths.size()) <= spec.k) {
            selected = shape_paths;  // small category: keep everything
        } else {
            std::vector<VoxelGrid> shapes;
            shapes.reserve(shape_paths.size());
            for (const auto& p : shape_paths) {
                shapes.push_back(load_binvox((fs::path(manifest_dir) / p).string()));
            }
            DistanceMatrix d = pairwise_distances(shapes);
            MedoidSet meds = kmedoids(d, spec.k, derive_seed(spec.seed, "category", class_id));
            std::vector<int> order = meds.indices;
            std::sort(order.begin(), order.end());
            for (int i : order) selected.push_back(shape_paths[static_cast<std::size_t>(i)]);
        }
        kept[class_id] = selected.size();

        for (const auto& shape_path : selected) {
            auto& entries = views.at(shape_path);
            std::vector<std::size_t> idx(entries.size());
            std::iota(idx.begin(), idx.end(), 0);
            if (static_cast<int>(entries.size()) > spec.v) {
                auto rng = make_rng(derive_seed(spec.seed, "views", class_id, shape_path));
                std::shuffle(idx.begin(), idx.end(), rng);
                idx.resize(static_cast<std::size_t>(spec.v));
                std::sort(idx.begin(), idx.end());
            }
            for (std::size_t i : idx) mini.entries.push_back(*entries[i]);
        }
    }

    mini.provenance = source.provenance;
    mini.provenance["distill"] = {{"k", spec.k}, {"v", spec.v}, {"seed", spec.seed},
                                  {"kept", kept}};
    return mini;
}

PerformanceRatio performance_ratio(const std::map<std::string, double>& iou_mini,
                                   const std::map<std::string, double>& iou_full) {
    if (iou_mini.size() != iou_full.size()) {
        throw ConfigError("performance_ratio: class sets differ in size");
    }
    PerformanceRatio r;
    for (const auto& [cls, full] : iou_full) {
        auto it = iou_mini.find(cls);
        if (it == iou_mini.end()) {
            throw ConfigError("performance_ratio: class '" + cls + "' missing from mini results");
        }
        if (full <= 0.0) {
            throw NumericError("performance_ratio: zero full-dataset IoU for class '" + cls + "'");
        }
        r.per_class[cls] = it->second / full;
        r.mean += r.per_class[cls];
    }
    r.mean /= static_cast<double>(r.per_class.size());
    return r;
}

}  // namespace fewrec
